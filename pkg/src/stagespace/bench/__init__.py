"""Benchmark drivers: device/tier microbenchmark, scaling harness, reports."""
