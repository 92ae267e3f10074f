# Test package for mpskit
