"""
Descriptor compression: linear reduction and binary codes
=========================================================

Raw image descriptors are large.  Two stages shrink them: a principal-
direction reduction learned from training descriptors, and a seeded
random-hyperplane binarization whose Hamming distances track descriptor
angles.  Both stages are deterministic given their inputs, so trained
models can be shipped as small files.
"""

import numpy as np
import scipy.linalg

from nbnnplace import (
    code_from_int,
    encode,
    hamming,
    project,
    train_pca,
    train_projection,
)

rng = np.random.default_rng(42)

# ---------------------------------------------------------------------------
# 1. Principal-direction reduction
# ---------------------------------------------------------------------------
# Synthesize 64-dim descriptors whose variance lives mostly in a few
# directions — the usual situation for image descriptors.

D, N, K = 64, 1500, 8
scales = np.geomspace(12.0, 0.05, D)
basis, _ = np.linalg.qr(rng.normal(size=(D, D)))
X = rng.normal(size=(N, D)) * scales @ basis.T + rng.uniform(-3, 3, size=D)

model = train_pca(X, K)
print(f"trained {D} -> {K} reduction on {N} descriptors")
print("leading eigenvalues:", np.round(model.eigenvalues[:4], 2))

# The spectrum matches a dense eigensolver on the covariance matrix —
# the reduction really is PCA, not an approximation of it.
C = np.cov(X - X.mean(axis=0), rowvar=False)
w = scipy.linalg.eigh(C, eigvals_only=True)[::-1][:K]
print("dense eigensolver agrees:",
      bool(np.allclose(model.eigenvalues, w, rtol=1e-10)))

Y = project(model, X)
kept = model.eigenvalues[:K].sum() / np.trace(C)
print(f"projected matrix: {Y.shape}, variance kept: {kept:.1%}")

# ---------------------------------------------------------------------------
# 2. Binarization by seeded random hyperplanes
# ---------------------------------------------------------------------------
# Each bit is the sign of one random direction's projection, thresholded
# at the training median so bits come out balanced.  The whole model is
# reproducible from (seed, dims, bits) plus the training set.

BITS = 16
proj = train_projection(7, K, BITS, training=Y)
again = train_projection(7, K, BITS, training=Y)
assert proj.digest() == again.digest()
print(f"\ntrained {BITS}-bit projection, digest {proj.digest()[:12]}...")

codes = [encode(proj, y) for y in Y[:6]]
for i, c in enumerate(codes):
    print(f"  descriptor {i}: code {int(c):0{BITS // 4}x}")

# ---------------------------------------------------------------------------
# 3. Hamming distance mirrors descriptor angle
# ---------------------------------------------------------------------------
# Rotate a unit vector away from itself in steps; the normalized Hamming
# distance between the codes climbs with the angle.  This is the property
# that makes nearest-neighbor search in code space meaningful.

WIDE = 128
wide = train_projection(11, K, WIDE)
u = rng.normal(size=K)
u /= np.linalg.norm(u)
w_dir = rng.normal(size=K)
w_dir -= (w_dir @ u) * u
w_dir /= np.linalg.norm(w_dir)

print("\nangle (deg)  normalized Hamming distance")
cu = encode(wide, u)
for deg in (0, 15, 30, 60, 90, 120, 150, 180):
    theta = np.deg2rad(deg)
    v = np.cos(theta) * u + np.sin(theta) * w_dir
    d = hamming(cu, encode(wide, v)) / WIDE
    print(f"  {deg:9d}  {d:.3f}  (ideal {theta / np.pi:.3f})")

# Codes are value-addressable too: a 16-bit code is just an integer in
# [0, 2^16), which is what lets a small code space be enumerated as an
# implicit vocabulary (see the retrieval demo).
c = code_from_int(0b1010110011110001, 16)
print("\ncode from int round trip:", bin(int(c)))
