"""One client, one aggregator: follow a single report through the closed loop.

Run with ``python3 demos/walkthrough.py``.
"""
import numpy as np

from peel.attacks import output_poison
from peel.codec import build_codec, encode, reconstruct, restore
from peel.detector import ThresholdPolicy, classify
from peel.mechanisms import MechanismSpec, perturb, unbiased_transform
from peel.sparsifier import sparsify

rng = np.random.default_rng(7)
spec = MechanismSpec("harmony", epsilon=1.0, dim=6)
codec = build_codec(spec.dim, seed=0)
policy = ThresholdPolicy()

# A client holds a numeric record in [-1, 1]^6 and reports it through Harmony,
# which already produces a signed 1-sparse vector.
x = np.array([0.4, -0.2, 0.9, 0.0, -0.7, 0.1])
report = perturb(spec, x, rng, client_id=1)
code = sparsify(unbiased_transform(spec, report), spec)
print("sparse code:", code)

# The code is normalized and projected to k-1 numbers; the magnitude travels alongside.
y = encode(codec, code, client_id=1)
print("transmitted y:", np.round(y.y, 3))

# The aggregator reconstructs, checks, and restores.
s_hat = reconstruct(codec, y)
verdict = classify(codec, y, spec, policy)
print("benign verdict: flagged =", verdict.flagged, "pattern residual = %.1e" % verdict.pattern_residual)
print("restored:", restore(s_hat, y.magnitude_sidecar))

# A tampered copy of the same report no longer reconstructs to an admissible pattern.
bad = output_poison(y, spec, strength=1.0, rng=rng)
verdict = classify(codec, bad, spec, policy)
print("poisoned verdict: flagged =", verdict.flagged, "pattern residual = %.3f" % verdict.pattern_residual)
