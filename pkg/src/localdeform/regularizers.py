"""Locality regularizers and their proximal (shrinkage) operators.

The smoothly clamped L1 loss acts like a group L1 norm near the origin and
saturates at the constant s/2 once the displacement norm reaches the clamp
threshold s, so it exerts no pull on vertices that have moved further than s.
The group-lasso (l2,1) penalty is kept as an ablation.
"""

from dataclasses import dataclass

import numpy as np

from . import errors


@dataclass(frozen=True)
class LocalityParams:
    """Weights of the per-vertex locality term: lambda_i = w * a_i."""

    w: float
    s: float
    per_vertex_lambda: np.ndarray

    @classmethod
    def from_mesh(cls, w, s, vertex_areas):
        if w < 0:
            raise ValueError("locality weight w must be >= 0")
        if s <= 0:
            raise errors.NonpositiveThresholdError("clamp threshold s must be > 0")
        lam = np.asarray(vertex_areas, dtype=np.float64) * float(w)
        lam.setflags(write=False)
        return cls(w=float(w), s=float(s), per_vertex_lambda=lam)


def scl1_value(x, s):
    """Smoothly clamped L1 value of a displacement vector.

    ||x|| - ||x||^2 / (2 s) below the clamp radius, s / 2 at and beyond it;
    continuous and C1 at ||x|| = s.
    """
    if s <= 0:
        raise errors.NonpositiveThresholdError("clamp threshold s must be > 0")
    r = float(np.linalg.norm(x))
    if r >= s:
        return 0.5 * s
    return r - r * r / (2.0 * s)


def scl1_value_batch(x, s):
    """scl1_value applied row-wise to an (n, d) displacement array."""
    r = np.linalg.norm(np.atleast_2d(x), axis=1)
    return np.where(r >= s, 0.5 * s, r - r * r / (2.0 * s))


def scl1_prox(x, lam, rho, s):
    """Shrinkage step: argmin_z lam*||z||_scl1 + (rho/2)*||x - z||^2.

    Requires the safeguard rho > lam / s, which makes the radial objective
    strictly convex below the clamp radius so the shrinkage has no spurious
    local minima. Output is collinear with x.
    """
    if s <= 0:
        raise errors.NonpositiveThresholdError("clamp threshold s must be > 0")
    if rho <= lam / s:
        raise errors.SafeguardViolatedError(
            f"rho = {rho} must exceed lambda/s = {lam / s}")
    x = np.asarray(x, dtype=np.float64)
    r = float(np.linalg.norm(x))
    if r > s:
        return x.copy()
    if r == 0.0:
        return np.zeros_like(x)
    factor = max(0.0, (rho * s - lam * s / r) / (rho * s - lam))
    return factor * x


def scl1_prox_batch(x, lam, rho, s):
    """Row-wise scl1_prox for (n, d) inputs with per-row lambda.

    The safeguard rho > max(lam)/s is validated upstream by the solver.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), x.shape[:1])
    r = np.linalg.norm(x, axis=1)
    safe_r = np.where(r > 0, r, 1.0)
    factor = (rho * s - lam * s / safe_r) / (rho * s - lam)
    factor = np.clip(factor, 0.0, None)
    factor = np.where(r > s, 1.0, factor)
    factor = np.where(r > 0, factor, 0.0)
    return factor[:, None] * x


def l21_value(x):
    """Group-lasso value: the Euclidean norm of the displacement."""
    return float(np.linalg.norm(x))


def l21_prox(x, lam, rho):
    """Block soft-thresholding: max(0, 1 - lam/(rho*||x||)) * x."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    x = np.asarray(x, dtype=np.float64)
    r = float(np.linalg.norm(x))
    if r == 0.0 or r <= lam / rho:
        return np.zeros_like(x)
    return (1.0 - lam / (rho * r)) * x


def l21_prox_batch(x, lam, rho):
    """Row-wise l21_prox for (n, d) inputs with per-row lambda."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), x.shape[:1])
    r = np.linalg.norm(x, axis=1)
    safe_r = np.where(r > 0, r, 1.0)
    factor = np.clip(1.0 - lam / (rho * safe_r), 0.0, None)
    factor = np.where(r > 0, factor, 0.0)
    return factor[:, None] * x


def prox_batch(regularizer, x, lam, rho, s):
    """Dispatch the Z-block shrinkage for the configured regularizer."""
    if regularizer == "scl1":
        return scl1_prox_batch(x, lam, rho, s)
    if regularizer == "l21":
        return l21_prox_batch(x, lam, rho)
    if regularizer == "none":
        return np.atleast_2d(np.asarray(x, dtype=np.float64)).copy()
    raise ValueError(f"unknown regularizer {regularizer!r}")


def penalty_value_batch(regularizer, z, lam, s):
    """Total locality penalty sum_i lam_i * loss(z_i) for the Z block."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), z.shape[:1])
    if regularizer == "scl1":
        return float(np.dot(lam, scl1_value_batch(z, s)))
    if regularizer == "l21":
        return float(np.dot(lam, np.linalg.norm(z, axis=1)))
    if regularizer == "none":
        return 0.0
    raise ValueError(f"unknown regularizer {regularizer!r}")
