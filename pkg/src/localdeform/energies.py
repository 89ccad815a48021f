"""Material models and their per-element / per-vertex local steps.

Each material contributes a local step to the ADMM loop: rotation fitting
for ARAP, rotation + scale for ACAP, a proximal minimization over singular
values for Neo-Hookean, and rotation fitting plus per-edge strain clamping
for cloth. All local steps are pure maps and vectorize across patches.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import errors, geometry

ACAP_SCALE_MIN = 0.1
ACAP_SCALE_MAX = 10.0
SIGMA_FLOOR = 1e-6
# stiffness of the strain-limit penalty relative to the mean ARAP edge weight
STRAIN_LIMIT_STIFFNESS = 10.0


@dataclass(frozen=True)
class Arap:
    name = "arap"


@dataclass(frozen=True)
class Acap:
    name = "acap"
    scale_min: float = ACAP_SCALE_MIN
    scale_max: float = ACAP_SCALE_MAX


@dataclass(frozen=True)
class NeoHookean:
    mu: float
    lam: float
    name = "neohookean"

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("NeoHookean shear modulus mu must be > 0")
        if self.lam < 0:
            raise ValueError("NeoHookean first Lame parameter must be >= 0")


@dataclass(frozen=True)
class ClothArap:
    bending_stiffness: float = 0.0
    strain_limit: float = 0.1
    name = "cloth"

    def __post_init__(self):
        if self.bending_stiffness < 0:
            raise ValueError("bending stiffness must be >= 0")
        if not (0.0 <= self.strain_limit <= 0.5):
            raise ValueError("strain limit must lie in [0, 0.5]")


@dataclass(frozen=True)
class PolylineArap:
    name = "polyline"


MATERIALS = {"arap": Arap, "acap": Acap, "neohookean": NeoHookean,
             "cloth": ClothArap, "polyline": PolylineArap}


def material_from_dict(d):
    """Build a material model from a plain dict ({"type": ..., params...})."""
    d = dict(d)
    kind = d.pop("type")
    if kind == "arap":
        return Arap()
    if kind == "acap":
        return Acap(scale_min=d.get("scaleMin", ACAP_SCALE_MIN),
                    scale_max=d.get("scaleMax", ACAP_SCALE_MAX))
    if kind in ("neohookean", "nh"):
        return NeoHookean(mu=float(d["mu"]), lam=float(d["lambda"]))
    if kind == "cloth":
        return ClothArap(bending_stiffness=float(d.get("bendingStiffness", 0.0)),
                         strain_limit=float(d.get("strainLimit", 0.1)))
    if kind == "polyline":
        return PolylineArap()
    raise ValueError(f"unknown material type {kind!r}")


def material_to_dict(material):
    if isinstance(material, Arap):
        return {"type": "arap"}
    if isinstance(material, Acap):
        return {"type": "acap", "scaleMin": material.scale_min,
                "scaleMax": material.scale_max}
    if isinstance(material, NeoHookean):
        return {"type": "neohookean", "mu": material.mu, "lambda": material.lam}
    if isinstance(material, ClothArap):
        return {"type": "cloth", "bendingStiffness": material.bending_stiffness,
                "strainLimit": material.strain_limit}
    if isinstance(material, PolylineArap):
        return {"type": "polyline"}
    raise ValueError(f"not a material: {material!r}")


# ---------------------------------------------------------------------------
# rotation / rotation+scale fitting


def arap_fit_rotation(d, d_rest, weights):
    """Best proper rotation R minimizing (1/2)||R D - D~||_W over SO(d).

    d, d_rest: (embed, k) deformed and rest edge matrices; weights: (k,)
    diagonal weights. R = V U^T from the SVD of the weighted covariance
    M = D W D~^T, determinant-corrected to +1. Zero M returns the identity.
    """
    d = np.asarray(d, dtype=np.float64)
    d_rest = np.asarray(d_rest, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    m = (d * w[None, :]) @ d_rest.T
    return geometry.fit_rotations(m[None])[0]


def acap_fit_rotation_scale(d, d_rest, weights,
                            scale_min=ACAP_SCALE_MIN, scale_max=ACAP_SCALE_MAX):
    """Rotation and scale minimizing (1/2) sum_k w_k ||s R d~_k - d_k||^2.

    The rotation is the Procrustes fit mapping rest edges onto deformed
    edges; the scale is the analytic optimum s = sum w d~^T R^T d / sum w
    ||d~||^2, clamped to [scale_min, scale_max].
    """
    d = np.asarray(d, dtype=np.float64)
    d_rest = np.asarray(d_rest, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    denom = float(np.sum(w * np.sum(d_rest * d_rest, axis=0)))
    if denom <= 0:
        raise errors.ZeroRestPatchError("rest patch has zero weighted norm")
    # covariance for the rest->deformed rotation is M^T of the ARAP one
    m = (d_rest * w[None, :]) @ d.T
    r = geometry.fit_rotations(m[None])[0]
    s = float(np.sum(w * np.sum(d_rest * (r.T @ d), axis=0))) / denom
    return r, float(np.clip(s, scale_min, scale_max))


def acap_scales_batch(m_cov, r_arap, denom, scale_min, scale_max):
    """Batched analytic ACAP scales from ARAP covariances M = D W D~^T.

    trace(R_arap M) equals sum w d~^T R_acap^T d for R_acap = R_arap^T, so
    the per-patch scale reuses the ARAP fit.
    """
    tr = np.einsum("mij,mji->m", r_arap, m_cov)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(denom > 0, tr / np.where(denom > 0, denom, 1.0), 1.0)
    return np.clip(s, scale_min, scale_max)


# ---------------------------------------------------------------------------
# Neo-Hookean on singular values


def nh_energy_sigma(sigma, mu, lam):
    """Neo-Hookean density on principal stretches.

    Psi = (mu/2)(sum sigma_i^2 - d) - mu log J + (lam/2)(log J)^2 with
    J = prod sigma_i; zero with zero gradient at the rest state sigma = 1.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise errors.NonpositiveSigmaError("singular values must be positive")
    log_j = float(np.sum(np.log(sigma)))
    return float(0.5 * mu * (np.sum(sigma * sigma) - sigma.size)
                 - mu * log_j + 0.5 * lam * log_j * log_j)


def nh_energy_sigma_batch(sigma, mu, lam):
    """nh_energy_sigma for an (m, d) array of stretch rows."""
    log_j = np.sum(np.log(sigma), axis=1)
    return (0.5 * mu * (np.sum(sigma * sigma, axis=1) - sigma.shape[1])
            - mu * log_j + 0.5 * lam * log_j * log_j)


def nh_prox_singular_values(sigma_in, gamma, mu, lam, elem_volume,
                            floor=SIGMA_FLOOR, max_iter=100, gtol=1e-10):
    """Proximal step of the element Neo-Hookean energy on singular values.

    Minimizes elem_volume * Psi(sigma) + (gamma/2)||sigma - sigma_in||^2
    over sigma >= floor with a safeguarded Newton iteration (gradient steps
    when the Newton direction fails, Armijo backtracking, projection onto
    the positivity floor). Converged when the projected gradient infinity
    norm drops below gtol. Returns (sigma, converged).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    out, conv = nh_prox_batch(np.asarray(sigma_in, dtype=np.float64)[None],
                              gamma, mu, lam, float(elem_volume),
                              floor=floor, max_iter=max_iter, gtol=gtol)
    return out[0], bool(conv[0])


def _nh_grad_hess(sigma, gamma, mu, lam, vol, sigma_in):
    log_j = np.sum(np.log(sigma), axis=1, keepdims=True)
    inv = 1.0 / sigma
    grad = vol * (mu * sigma + (lam * log_j - mu) * inv) + gamma * (sigma - sigma_in)
    d = sigma.shape[1]
    hess = vol[..., None] * lam * np.einsum("mi,mj->mij", inv, inv)
    diag = vol * (mu + (mu - lam * log_j) * inv * inv) + gamma
    hess[:, np.arange(d), np.arange(d)] += diag
    return grad, hess


def _nh_objective(sigma, gamma, mu, lam, vol, sigma_in):
    return (np.ravel(vol) * nh_energy_sigma_batch(sigma, mu, lam)
            + 0.5 * gamma * np.sum((sigma - sigma_in) ** 2, axis=1))


def _nh_newton(start, sigma_in, gamma, mu, lam, vol, floor, max_iter, gtol):
    n = start.shape[0]
    sigma = start.copy()
    converged = np.zeros(n, dtype=bool)
    live = np.arange(n)  # rows still being iterated
    sg = start.copy()
    si_l = sigma_in
    vl_l = np.broadcast_to(np.ravel(vol) if np.ndim(vol) else vol, (n,))[:, None]
    for _ in range(max_iter):
        grad, hess = _nh_grad_hess(sg, gamma, mu, lam, vl_l, si_l)
        # projected gradient: at the floor only a decrease direction counts
        pg = np.max(np.abs(np.where((sg <= floor * (1 + 1e-12)) & (grad > 0),
                                    0.0, grad)), axis=1)
        done = pg <= gtol
        if done.any():
            idx = live[done]
            sigma[idx] = sg[done]
            converged[idx] = True
            keep = ~done
            live, sg, grad, hess = live[keep], sg[keep], grad[keep], hess[keep]
            si_l, vl_l = si_l[keep], vl_l[keep]
            if live.size == 0:
                break
        try:
            step = np.linalg.solve(hess, grad[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = grad.copy()
        bad = np.einsum("mi,mi->m", step, grad) <= 0
        step[bad] = grad[bad]
        f0 = _nh_objective(sg, gamma, mu, lam, vl_l, si_l)
        t = np.ones(live.size)
        accepted = np.zeros(live.size, dtype=bool)
        cand = sg
        for _ in range(40):
            cand = np.where(accepted[:, None], cand,
                            np.clip(sg - t[:, None] * step, floor, None))
            f1 = _nh_objective(cand, gamma, mu, lam, vl_l, si_l)
            accepted |= f1 <= f0
            if accepted.all():
                break
            t = np.where(accepted, t, 0.5 * t)
        moved = np.any(cand != sg, axis=1)
        # a row whose line search cannot move is at the numerical optimum;
        # accept it as converged when its projected gradient is already tiny
        stall = ~(accepted & moved)
        if stall.any():
            grad_s, _ = _nh_grad_hess(sg[stall], gamma, mu, lam,
                                      vl_l[stall], si_l[stall])
            pg_s = np.max(np.abs(np.where(
                (sg[stall] <= floor * (1 + 1e-12)) & (grad_s > 0), 0.0, grad_s)),
                axis=1)
            idx = live[stall]
            sigma[idx] = sg[stall]
            converged[idx] = pg_s <= 1e3 * gtol
            keep = ~stall
            live, sg, cand = live[keep], sg[keep], cand[keep]
            si_l, vl_l = si_l[keep], vl_l[keep]
            if live.size == 0:
                break
        sg = cand
    if live.size:
        sigma[live] = sg
    return sigma, converged


def nh_prox_batch(sigma_in, gamma, mu, lam, vol,
                  floor=SIGMA_FLOOR, max_iter=100, gtol=1e-10):
    """Batched Neo-Hookean prox; sigma_in is (m, d), vol scalar or (m,).

    Entries of sigma_in may be negative (inverted elements); the result is
    projected to sigma >= floor. The log term makes the objective
    nonconvex for large Lame lambda, so Newton runs from both the clipped
    input and the rest state and keeps the better basin per element.
    Returns (sigma, converged_mask).
    """
    sigma_in = np.asarray(sigma_in, dtype=np.float64)
    m, d = sigma_in.shape
    vol = np.broadcast_to(np.asarray(vol, dtype=np.float64), (m,))[:, None]
    args = (sigma_in, gamma, mu, lam, vol, floor, max_iter, gtol)
    s_a, conv_a = _nh_newton(np.clip(sigma_in, max(floor, 0.2), None), *args)
    s_b, conv_b = _nh_newton(np.ones((m, d)), *args)
    f_a = _nh_objective(s_a, gamma, mu, lam, vol, sigma_in)
    f_b = _nh_objective(s_b, gamma, mu, lam, vol, sigma_in)
    take_b = f_b < f_a
    sigma = np.where(take_b[:, None], s_b, s_a)
    converged = np.where(take_b, conv_b, conv_a)
    return sigma, converged


# ---------------------------------------------------------------------------
# cloth: quadratic bending and strain limiting


def _edge_flaps(elements, n_vertices):
    """Interior edge flaps (i, j, k, l): edge (i, j) with opposite k, l.

    Raises NonManifoldEdgeError when an edge is shared by more than two
    triangles.
    """
    edge_map = {}
    for t, (a, b, c) in enumerate(elements):
        for (i, j, k) in ((a, b, c), (b, c, a), (c, a, b)):
            key = (min(i, j), max(i, j))
            edge_map.setdefault(key, []).append(int(k))
    flaps = []
    for (i, j), opp in sorted(edge_map.items()):
        if len(opp) > 2:
            raise errors.NonManifoldEdgeError(
                f"edge ({i}, {j}) is shared by {len(opp)} triangles")
        if len(opp) == 2:
            flaps.append((i, j, opp[0], opp[1]))
    return flaps


def _cot(u, v):
    cross = np.linalg.norm(np.cross(u, v))
    if cross < 1e-300:
        return 0.0
    return float(np.dot(u, v) / cross)


def bending_matrix(mesh):
    """Quadratic bending matrix Q (n x n, PSD) for a cloth mesh.

    Per interior edge the hinge stencil K_e is assembled from the four
    cotangents of the two incident triangles; Q = sum_e 3/(A1+A2) K_e^T K_e.
    The stencil annihilates affine images of a flat rest flap, so flat rest
    shapes carry zero bending energy. Energy is (1/2) tr(V^T Q V).
    """
    if mesh.kind not in ("cloth", "triangle"):
        raise ValueError("bending_matrix expects a triangle or cloth mesh")
    x = mesh.vertices
    rows, cols, vals = [], [], []
    for (i, j, k, l) in _edge_flaps(mesh.elements, mesh.n_vertices):
        e0 = x[j] - x[i]
        c01 = _cot(e0, x[k] - x[i])
        c02 = _cot(e0, x[l] - x[i])
        c03 = _cot(-e0, x[k] - x[j])
        c04 = _cot(-e0, x[l] - x[j])
        a1 = 0.5 * np.linalg.norm(np.cross(x[j] - x[i], x[k] - x[i]))
        a2 = 0.5 * np.linalg.norm(np.cross(x[j] - x[i], x[l] - x[i]))
        if a1 + a2 < 1e-300:
            continue
        coeff = np.array([c03 + c04, c01 + c02, -(c01 + c03), -(c02 + c04)])
        idx = [i, j, k, l]
        scale = 3.0 / (a1 + a2)
        for a in range(4):
            for b in range(4):
                rows.append(idx[a])
                cols.append(idx[b])
                vals.append(scale * coeff[a] * coeff[b])
    n = mesh.n_vertices
    q = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    q.sum_duplicates()
    return q


def strain_limit_project(d, d_rest, epsilon):
    """Clamp edge lengths of D into [(1-eps), (1+eps)] times rest lengths.

    d, d_rest: (embed, k) edge matrices; directions are preserved. Edges
    already inside the band are returned unchanged.
    """
    if not (0.0 <= epsilon <= 0.5):
        raise ValueError("strain limit must lie in [0, 0.5]")
    d = np.asarray(d, dtype=np.float64)
    d_rest = np.asarray(d_rest, dtype=np.float64)
    lens = np.linalg.norm(d, axis=0)
    rest_lens = np.linalg.norm(d_rest, axis=0)
    lo = (1.0 - epsilon) * rest_lens
    hi = (1.0 + epsilon) * rest_lens
    target = np.clip(lens, lo, hi)
    safe = np.where(lens > 0, lens, 1.0)
    factor = np.where(lens > 0, target / safe, 1.0)
    return d * factor[None, :]


def strain_limit_targets_batch(d, rest_len, epsilon):
    """Row-wise strain clamp for (e, embed) edge vectors with rest lengths."""
    lens = np.linalg.norm(d, axis=1)
    target = np.clip(lens, (1.0 - epsilon) * rest_len, (1.0 + epsilon) * rest_len)
    safe = np.where(lens > 0, lens, 1.0)
    factor = np.where(lens > 0, target / safe, 1.0)
    return d * factor[:, None]
