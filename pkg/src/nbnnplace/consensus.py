"""Robust match verification by a smooth-field mixture EM.

Candidate matches are modeled as draws from a two-component mixture: inliers
follow a smooth displacement field with isotropic Gaussian noise, outliers
are uniform over the image area.  The E-step assigns inlier posteriors; the
M-step refits the field by posterior-weighted Gaussian-kernel ridge
regression and updates the noise variance and mixing weight.  Every step is
a coordinate ascent on the penalized log-likelihood, so the recorded
objective never decreases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .matching import KeypointSet, MatchSet

_GAMMA_BOUNDS = (1e-4, 1.0 - 1e-4)


@dataclass(frozen=True)
class ConsensusParams:
    """Tuning knobs for the consensus filter.

    ``kernel_bandwidth`` (pixels) defaults to 0.1 of the image diagonal and
    ``noise_var_init`` (squared pixels) to half the mean squared residual
    about the initial field.  ``ridge`` stabilizes the kernel Gram matrix;
    ``smoothness`` weights the field's RKHS-norm penalty against the data
    likelihood.
    """

    kernel_bandwidth: float | None = None
    outlier_rate_init: float = 0.5
    noise_var_init: float | None = None
    max_iters: int = 50
    tol: float = 1e-6
    ridge: float = 1e-3
    smoothness: float = 8.0


def _extent_of(a: KeypointSet, b: KeypointSet) -> tuple[float, float]:
    for s in (a, b):
        if s.extent is not None:
            return (float(s.extent[0]), float(s.extent[1]))
    pts = np.vstack([a.positions, b.positions])
    span = pts.max(axis=0) - pts.min(axis=0)
    return (max(float(span[0]), 1.0), max(float(span[1]), 1.0))


def consensus_filter(
    matches: MatchSet,
    a: KeypointSet,
    b: KeypointSet,
    params: ConsensusParams = ConsensusParams(),
) -> MatchSet:
    """Re-estimate inlier posteriors for candidate matches.

    Returns the same pairs with posteriors from the final E-step; inliers
    are pairs with posterior above 0.5.  If the objective has not settled
    within ``max_iters`` the result carries ``converged=False`` instead of
    raising.
    """
    n = len(matches)
    if n == 0:
        raise ValidationError("consensus filter needs at least one candidate match")

    # Work in diagonal-normalized coordinates: positions, displacements, and
    # the outlier density all scale with the image diagonal, which keeps the
    # ridge/likelihood balance independent of resolution.
    width, height = _extent_of(a, b)
    scale = math.hypot(width, height)
    x = a.positions[matches.index_a].astype(np.float64) / scale
    y = b.positions[matches.index_b].astype(np.float64) / scale
    d = y - x
    area = (width * height) / scale**2

    bandwidth = params.kernel_bandwidth if params.kernel_bandwidth is not None else 0.1 * scale
    if bandwidth <= 0:
        raise ValidationError(f"kernel bandwidth must be positive, got {bandwidth}")
    bandwidth /= scale

    sq = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
    kernel = np.exp(-sq / (2.0 * bandwidth**2))
    kernel[np.diag_indices(n)] += params.ridge  # Gram-matrix ridge

    # Start from the coordinate-wise median displacement — robust to a
    # minority of outliers and exact for camera rotation, which shifts every
    # keypoint by the same amount.  The constant field is represented in the
    # kernel span so the recorded objective stays consistent.
    coeff = np.linalg.solve(kernel, np.tile(np.median(d, axis=0), (n, 1)))
    field = kernel @ coeff

    sigma_floor = 1e-8
    sigma2 = params.noise_var_init
    if sigma2 is None:
        sigma2 = max(float(((d - field) ** 2).sum() / (2 * n)), sigma_floor)
    else:
        sigma2 = max(sigma2 / scale**2, sigma_floor)
    gamma = float(np.clip(1.0 - params.outlier_rate_init, *_GAMMA_BOUNDS))

    uniform = 1.0 / area
    identity = np.eye(n)

    trace: list[float] = []
    posterior = np.ones(n)
    converged = False
    prev_objective = None
    for _ in range(params.max_iters):
        r2 = ((d - field) ** 2).sum(axis=1)
        gauss = np.exp(-r2 / (2.0 * sigma2)) / (2.0 * math.pi * sigma2)
        mix = gamma * gauss + (1.0 - gamma) * uniform
        objective = float(
            np.log(mix).sum() - 0.5 * params.smoothness * np.sum(coeff * (kernel @ coeff))
        )
        trace.append(objective)
        posterior = gamma * gauss / mix

        if prev_objective is not None and abs(objective - prev_objective) < params.tol:
            converged = True
            break
        prev_objective = objective

        gamma = float(np.clip(posterior.mean(), *_GAMMA_BOUNDS))
        system = posterior[:, None] * kernel + params.smoothness * sigma2 * identity
        coeff = np.linalg.solve(system, posterior[:, None] * d)
        field = kernel @ coeff
        r2_new = ((d - field) ** 2).sum(axis=1)
        weight = posterior.sum()
        sigma2 = max(float(posterior @ r2_new) / (2.0 * weight), sigma_floor)

    return MatchSet(
        index_a=matches.index_a.copy(),
        index_b=matches.index_b.copy(),
        posterior=posterior,
        converged=converged,
        objective_trace=np.asarray(trace),
    )
