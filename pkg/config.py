import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# Asset directory (materials, rigs, normal maps referenced by scene configs)
DATA_DIR = Path(os.getenv("MPSKIT_DATA_DIR", "data"))

# Worker threads; 0 means one per core
THREADS = int(os.getenv("MPSKIT_THREADS", "0"))

# Optional rotating log file directory
LOG_DIR = os.getenv("MPSKIT_LOG_DIR")

DEBUG = os.getenv("MPSKIT_DEBUG", "false").lower() == "true"


def get_data_dir():
    """Return the asset directory, re-reading the environment so tests can override it."""
    return Path(os.getenv("MPSKIT_DATA_DIR", str(DATA_DIR)))


def get_thread_count(threads=None):
    """Resolve a thread count: explicit value, then MPSKIT_THREADS, then all cores."""
    if threads is None:
        threads = int(os.getenv("MPSKIT_THREADS", str(THREADS)))
    if threads < 0:
        raise ValueError(f"Thread count must be >= 0, got {threads}")
    return threads or (os.cpu_count() or 1)


def is_debug():
    return os.getenv("MPSKIT_DEBUG", "true" if DEBUG else "false").lower() == "true"


def resolve_asset(path, base_dir=None):
    """Resolve an asset path against base_dir first, then the data directory."""
    path = Path(path)
    if path.is_absolute():
        return path
    if base_dir is not None and (Path(base_dir) / path).exists():
        return Path(base_dir) / path
    if path.exists():
        return path
    candidate = get_data_dir() / path
    if candidate.exists():
        return candidate
    raise FileNotFoundError(f"Asset {path} not found (searched {base_dir or '.'} and {get_data_dir()})")


def get_log_dir():
    return os.getenv("MPSKIT_LOG_DIR", LOG_DIR or "") or None
