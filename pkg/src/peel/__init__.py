"""Poisoning exposure for locally differentially private reports.

Clients reduce each LDP report to a signed 1-sparse code, normalize it and send a
random ``(k-1)``-dimensional projection. The aggregator reconstructs, checks the
result against the ``2k`` admissible patterns and restores the code for estimation.
"""
from peel.codec import StructuralCodec, build_codec, encode, reconstruct, restore
from peel.detector import ThresholdPolicy, calibrate_policy, classify, classify_batch
from peel.estimators import QueryKind, QuerySpec, baseline_estimate, peel_estimate, variance_decomposition
from peel.mechanisms import MechanismKind, MechanismSpec, perturb, unbiased_transform
from peel.sparsifier import AllocationMode, AllocationPolicy, SparseCode, sparsify

__all__ = [
    "AllocationMode", "AllocationPolicy", "MechanismKind", "MechanismSpec", "QueryKind", "QuerySpec",
    "SparseCode", "StructuralCodec", "ThresholdPolicy", "baseline_estimate", "build_codec",
    "calibrate_policy", "classify", "classify_batch", "encode", "peel_estimate", "perturb",
    "reconstruct", "restore", "sparsify", "unbiased_transform", "variance_decomposition",
]
