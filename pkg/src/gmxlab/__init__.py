"""gmxlab: a desk-scale laboratory for generic-domain mixup in source-free DA.

Builds mixup domains in edge space and feature space, measures the
discriminability-transferability trade-off, runs vendor/client source-free
adaptation on controlled synthetic benchmarks, and stress-tests the
divergence inequality that motivates the construction.
"""

__version__ = "0.1.0"
