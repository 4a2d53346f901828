"""Interference matrix generation from fused MMRs and drive-test data."""

__version__ = "0.1.0"
