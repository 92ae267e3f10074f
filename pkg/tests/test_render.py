"""Unit tests for render.py."""

import json

import numpy as np
import pytest
from scipy.integrate import trapezoid

UP = np.array([0.0, 0.0, 1.0])


def _tilted(deg, azimuth_deg=0.0):
    theta, phi = np.radians(deg), np.radians(azimuth_deg)
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def _random_separable(rng, name):
    from spectral_core import gaussian_spectrum, separable_material

    center, width, floor = rng.uniform(400, 950), rng.uniform(20, 200), rng.uniform(0.01, 0.3)
    c0, c1, power = rng.uniform(0.05, 0.5), rng.uniform(0.1, 1.0), rng.uniform(5, 80)
    return separable_material(
        name,
        lambda lam: gaussian_spectrum(lam, center, width, floor=floor),
        lambda a, b: c0 + c1 * np.clip(b, 0, 1) ** power + 0.1 * a,
        cos_nl_samples=9,
        cos_nh_samples=41,
    )


class TestRenderPixel:
    """Tests for render_pixel and render_pixel_reduced functions."""

    def test_lambertian_is_cosine_law(self, rig12, white_lambertian):
        """Test a flat white Lambertian material renders e_j * cos for unit-integral bands."""
        from render import render_pixel

        for j in range(rig12.count):
            expected = float(rig12.directions[j] @ UP)
            assert render_pixel(UP, rig12, j, white_lambertian) == pytest.approx(expected, rel=1e-12)

    def test_backfacing_is_zero(self, white_lambertian):
        """Test n . l <= 0 renders zero."""
        from render import render_pixel
        from spectral_core import boxcar_rig

        rig = boxcar_rig([_tilted(60)])

        assert render_pixel(_tilted(60, 180.0), rig, 0, white_lambertian) == 0.0

    def test_reduced_lambertian_carries_r_g(self, rig12, white_lambertian):
        """Test the reduced model reproduces the full model with e' = e / sqrt(t) and r_g = sqrt(t)."""
        from render import (
            equivalent_intensity,
            geometric_component_fn,
            render_pixel,
            render_pixel_reduced,
            spectral_component_on_grid,
        )

        r_s = spectral_component_on_grid(white_lambertian, rig12)
        r_g_fn = geometric_component_fn(white_lambertian)
        n = _tilted(25, 40)

        for j in range(rig12.count):
            e_prime = equivalent_intensity(rig12, j, r_s)
            light = rig12.directions[j]
            assert e_prime == pytest.approx(1.0 / np.sqrt(65.0), rel=1e-12)
            assert r_g_fn(n, light) == pytest.approx(np.sqrt(65.0), rel=1e-12)
            assert render_pixel_reduced(n, light, e_prime, r_g_fn) == pytest.approx(
                render_pixel(n, rig12, j, white_lambertian), rel=1e-12
            )

    def test_separable_materials_match_reduced_model(self, rig12):
        """Test full and reduced image formation agree for 20 random separable materials."""
        from render import (
            equivalent_intensity,
            geometric_component_fn,
            render_pixel,
            render_pixel_reduced,
            spectral_component_on_grid,
        )
        from spectral_core import normalize

        rng = np.random.default_rng(11)
        for k in range(20):
            material = _random_separable(rng, f"separable_{k}")
            r_s = spectral_component_on_grid(material, rig12)
            r_g_fn = geometric_component_fn(material)
            n = normalize(rng.normal(size=3) * [1, 1, 0.3] + [0, 0, 1])
            for j in range(rig12.count):
                full = render_pixel(n, rig12, j, material)
                reduced = render_pixel_reduced(
                    n, rig12.directions[j], equivalent_intensity(rig12, j, r_s), r_g_fn
                )
                assert reduced == pytest.approx(full, rel=1e-9, abs=1e-14)

    def test_specular_lobe_matches_refined_quadrature(self):
        """Test a narrow lobe at 20 degrees against ten times finer integration."""
        from render import render_pixel
        from spectral_core import boxcar_rig, phong_material

        def flat(value):
            return lambda lam: np.full_like(lam, value)

        material = phong_material("shiny", flat(0.1), flat(1.0), shininess=300.0, specular_weight=1.0)
        light = _tilted(20)
        rig = boxcar_rig([light], radiances=[0.8])
        lo, hi = rig.bands[0]
        samples = len(rig.band_samples(0)[0])
        fine = np.linspace(lo, hi, 10 * (samples - 1) + 1)
        cos_nh = float(UP @ ((light + UP) / np.linalg.norm(light + UP)))
        reflectance = material.evaluate(fine, light[2], cos_nh)
        oracle = 0.8 * light[2] * trapezoid(reflectance / (hi - lo), fine)

        result = render_pixel(UP, rig, 0, material)

        assert result == pytest.approx(oracle, rel=1e-6)


class TestEquivalentIntensity:
    """Tests for equivalent_intensity function."""

    @staticmethod
    def _gaussian_rig(grid):
        from spectral_core import LightingRig, WavelengthGrid, gaussian_spectrum

        return LightingRig(
            wavelengths=WavelengthGrid(grid),
            directions=[UP],
            radiances=[2.0],
            bands=[[grid[0], grid[-1]]],
            light_spectra=np.ones((1, grid.size)),
            camera_sensitivity=gaussian_spectrum(grid, 550.0, 15.0)[None, :],
        )

    def test_piecewise_linear_spectrum_gaussian_sensitivity(self):
        """Test a piecewise-linear r_s under a Gaussian sensitivity matches refined quadrature."""
        from render import equivalent_intensity
        from spectral_core import gaussian_spectrum

        knots, levels = [500.0, 530.0, 570.0, 600.0], [0.2, 0.9, 0.4, 0.6]
        grid = np.linspace(500.0, 600.0, 5001)
        rig = self._gaussian_rig(grid)
        fine = np.linspace(500.0, 600.0, 50001)
        oracle = 2.0 * trapezoid(np.interp(fine, knots, levels) * gaussian_spectrum(fine, 550.0, 15.0), fine)

        result = equivalent_intensity(rig, 0, np.interp(grid, knots, levels))

        assert result == pytest.approx(oracle, rel=1e-6)

    def test_zero_spectrum_in_band_raises(self):
        """Test a band where r_s vanishes is degenerate."""
        from render import DegenerateBandError, equivalent_intensity

        grid = np.linspace(500.0, 600.0, 11)

        with pytest.raises(DegenerateBandError):
            equivalent_intensity(self._gaussian_rig(grid), 0, np.zeros(grid.size))

    def test_wrong_grid_raises(self, rig12):
        """Test r_s must be sampled on the rig grid."""
        from render import equivalent_intensity

        with pytest.raises(ValueError, match="rig grid"):
            equivalent_intensity(rig12, 0, np.ones(3))

    def test_normalized_gauge(self):
        """Test the max = 1 gauge."""
        from render import EquivalentIntensities

        result = EquivalentIntensities([0.5, 2.0, 1.0]).normalized()

        np.testing.assert_allclose(result.values, [0.25, 1.0, 0.5])

    def test_nonpositive_values_raise(self):
        """Test intensities must be positive."""
        from render import EquivalentIntensities

        with pytest.raises(ValueError, match="positive"):
            EquivalentIntensities([1.0, 0.0])


class TestRenderImage:
    """Tests for render_image function."""

    def test_lambertian_sphere_and_intensities(self, rig12, white_lambertian):
        """Test a noiseless white sphere equals e' * sqrt(t) * max(L n, 0)."""
        from render import SceneSpec, SphereShape, draw_jitter, render_image

        scene = SceneSpec(SphereShape(resolution=24), white_lambertian, rig12)

        image, normals, e_prime = render_image(scene, seed=5)

        jitter = draw_jitter(12, (0.1, 1.0), 5)
        np.testing.assert_allclose(e_prime.values * np.sqrt(65.0), jitter, rtol=1e-12)
        cosines = np.maximum(rig12.directions @ normals.in_mask().T, 0.0)
        expected = e_prime.values[:, None] * np.sqrt(65.0) * cosines
        np.testing.assert_allclose(image.observations(), expected, rtol=1e-10, atol=1e-15)
        np.testing.assert_array_equal(image.mask, normals.mask)

    def test_deterministic_across_threads(self, rig12):
        """Test the same seed gives identical images for 1 and 4 threads."""
        from render import SceneSpec, SphereShape, render_image
        from spectral_core import make_material

        material = make_material("green_plastic")
        scene = SceneSpec(SphereShape(resolution=128), material, rig12, noise_sigma=0.01)

        first, _, _ = render_image(scene, seed=3, threads=1)
        second, _, _ = render_image(scene, seed=3, threads=4)
        other, _, _ = render_image(scene, seed=4, threads=1)

        np.testing.assert_array_equal(first.data, second.data)
        assert not np.array_equal(first.data, other.data)

    def test_linear_in_radiance(self, rig12):
        """Test doubling every radiance doubles the noiseless image."""
        from render import SceneSpec, SphereShape, render_image
        from spectral_core import make_material

        material = make_material("gold_metal")
        shape = SphereShape(resolution=20)
        base = SceneSpec(shape, material, rig12, jitter_range=None)
        doubled = SceneSpec(shape, material, rig12.with_radiances(2.0 * rig12.radiances), jitter_range=None)

        image, _, _ = render_image(base)
        image2, _, _ = render_image(doubled)

        np.testing.assert_allclose(image2.data, 2.0 * image.data, rtol=1e-12)

    def test_highlight_matches_pointwise_render(self):
        """Test the vectorized image equals render_pixel and peaks near each half vector."""
        from render import SceneSpec, SphereShape, render_image, render_pixel
        from spectral_core import make_material, normalize, uniform_rig

        rig = uniform_rig(4)
        material = make_material("gray_plastic")
        scene = SceneSpec(SphereShape(resolution=32), material, rig, jitter_range=None)

        image, normals, _ = render_image(scene)

        pixels = normals.in_mask()
        observations = image.observations()
        for j in range(rig.count):
            oracle = np.array([render_pixel(n, rig, j, material) for n in pixels])
            np.testing.assert_allclose(observations[j], oracle, rtol=1e-10, atol=1e-14)
            peak = pixels[np.argmax(observations[j])]
            half = normalize(rig.directions[j] + rig.view)
            assert np.degrees(np.arccos(np.clip(peak @ half, -1, 1))) < 10.0

    def test_noise_keeps_observations_nonnegative(self, rig12, white_lambertian):
        """Test noisy observations are clamped at zero."""
        from render import SceneSpec, SphereShape, render_image

        scene = SceneSpec(SphereShape(resolution=24), white_lambertian, rig12, noise_sigma=0.5)

        image, _, _ = render_image(scene)

        assert image.data.min() >= 0.0
        assert np.any(image.observations() == 0.0)

    def test_wavelength_mismatch_raises(self, white_lambertian):
        """Test a rig outside the material's wavelengths is rejected."""
        from render import SceneSpec, SphereShape, render_image
        from spectral_core import WavelengthRangeError, uniform_rig

        rig = uniform_rig(4, wavelength_range=(300.0, 900.0))

        with pytest.raises(WavelengthRangeError):
            render_image(SceneSpec(SphereShape(resolution=8), white_lambertian, rig))

    def test_invalid_scene_values_raise(self, rig12, white_lambertian):
        """Test negative noise and jitter ranges outside (0, 1] are rejected."""
        from render import SceneSpec, SphereShape

        with pytest.raises(ValueError, match="noise_sigma"):
            SceneSpec(SphereShape(), white_lambertian, rig12, noise_sigma=-1.0)
        with pytest.raises(ValueError, match="jitter_range"):
            SceneSpec(SphereShape(), white_lambertian, rig12, jitter_range=(0.0, 1.0))


class TestSphereShape:
    """Tests for SphereShape."""

    def test_normals_follow_sphere(self):
        """Test the center normal faces the camera and the mask honours min_nz."""
        from render import SphereShape

        normals = SphereShape(resolution=65, radius=20.0, min_nz=0.3).normals()

        np.testing.assert_allclose(normals.vectors[32, 32], UP)
        assert normals.in_mask()[:, 2].min() >= 0.3
        assert normals.vectors[32, 40, 0] > 0
        assert normals.vectors[24, 32, 1] > 0


class TestSelectDirections:
    """Tests for select_directions function."""

    def test_sorted_distinct_subset(self):
        """Test subsets are sorted, distinct and seeded."""
        from render import select_directions

        result = select_directions(39, 12, seed=7, draw=2)

        assert len(result) == 12
        assert np.all(np.diff(result) > 0)
        assert result.min() >= 0 and result.max() < 39
        np.testing.assert_array_equal(result, select_directions(39, 12, seed=7, draw=2))

    def test_full_selection(self):
        """Test t == f selects every direction."""
        from render import select_directions

        np.testing.assert_array_equal(select_directions(5, 5), np.arange(5))

    def test_invalid_counts_raise(self):
        """Test t must be in [1, f]."""
        from render import select_directions

        with pytest.raises(ValueError):
            select_directions(5, 6)
        with pytest.raises(ValueError):
            select_directions(5, 0)

    def test_uniform_inclusion(self):
        """Test every direction is chosen equally often over many draws."""
        from scipy.stats import chisquare

        from render import select_directions

        draws = 10_000
        counts = np.zeros(39)
        for draw in range(draws):
            counts[select_directions(39, 12, seed=1, draw=draw)] += 1

        _, p_value = chisquare(counts)

        assert p_value > 0.01


class TestDatasets:
    """Tests for render_stack and make_dataset functions."""

    def test_render_stack_meta(self, tmp_path, white_lambertian):
        """Test the stack embeds the selected sub-rig, jitter and ground-truth intensities."""
        import io_utils
        from render import SceneSpec, SphereShape, render_stack, rendered_rig
        from spectral_core import uniform_rig

        scene = SceneSpec(SphereShape(resolution=16), white_lambertian, uniform_rig(39), name="ball")

        out_dir, meta = render_stack(scene, tmp_path / "stack", seed=2, t=6)

        image, normals, stored = io_utils.read_stack(out_dir)
        assert image.bands == 6
        assert stored == meta
        assert len(meta["selected_indices"]) == 6
        assert normals is not None
        rig = rendered_rig(meta)
        np.testing.assert_allclose(rig.radiances, meta["jitter"])
        np.testing.assert_allclose(np.array(meta["e_prime_gt"]) * np.sqrt(65.0), meta["jitter"], rtol=1e-12)

    def test_make_dataset_manifest(self, tmp_path, white_lambertian):
        """Test one stack per scene with per-scene subsets listed in the manifest."""
        from render import SceneSpec, SphereShape, make_dataset
        from spectral_core import uniform_rig

        rig = uniform_rig(39)
        scenes = [
            SceneSpec(SphereShape(resolution=12), white_lambertian, rig, name=name) for name in ("a", "b")
        ]

        out_dir = make_dataset(scenes, t=8, out_dir=tmp_path / "dataset", f=39, seed=4, quiet=True)

        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["t"] == 8
        assert [entry["stack"] for entry in manifest["stacks"]] == ["000_a", "001_b"]
        assert (out_dir / "001_b" / "band_007.pfm").exists()
        first, second = (entry["selected_indices"] for entry in manifest["stacks"])
        assert len(first) == len(second) == 8
        assert first != second

    def test_make_dataset_rejects_wrong_pool(self, tmp_path, white_lambertian):
        """Test f must match the rig's direction count."""
        from render import SceneSpec, SphereShape, make_dataset
        from spectral_core import uniform_rig

        scenes = [SceneSpec(SphereShape(resolution=8), white_lambertian, uniform_rig(10))]

        with pytest.raises(ValueError, match="expected f=39"):
            make_dataset(scenes, t=4, out_dir=tmp_path, f=39, quiet=True)


class TestSceneDocuments:
    """Tests for scene loading."""

    def test_load_scene(self, tmp_path):
        """Test a scene document resolves its material, rig and shape."""
        from render import load_scene

        path = tmp_path / "scene.json"
        path.write_text(
            json.dumps(
                {
                    "name": "plastic_ball",
                    "material": "gray_plastic",
                    "rig": {"preset": "uniform", "count": 8},
                    "shape": {"type": "sphere", "resolution": 32},
                    "noise_sigma": 0.01,
                }
            )
        )

        scene = load_scene(path)

        assert scene.name == "plastic_ball"
        assert scene.rig.count == 8
        assert scene.shape.resolution == 32
        assert scene.material.name == "gray_plastic"

    def test_material_file_relative_to_scene(self, tmp_path, tiny_table):
        """Test material paths resolve against the scene document's directory."""
        import io_utils
        from render import resolve_material

        io_utils.write_material(tiny_table, tmp_path / "assets" / "tiny.sbrdf.json")

        material = resolve_material("assets/tiny.sbrdf.json", tmp_path)

        assert material.name == "tiny"

    def test_unknown_shape_raises(self):
        """Test only sphere and normal_map shapes are known."""
        from render import resolve_shape

        with pytest.raises(ValueError, match="Unknown shape"):
            resolve_shape({"type": "torus"})

    def test_missing_material_raises(self, tmp_path):
        """Test a scene must name a material."""
        from render import load_scene

        path = tmp_path / "scene.json"
        path.write_text(json.dumps({"name": "x"}))

        with pytest.raises(ValueError, match="material"):
            load_scene(path)
