"""Three-block ADMM for locality-regularized elastic deformation.

Each iteration runs, in order: a local elasticity step (per element or
per vertex patch), a local shrinkage step on the per-vertex auxiliary
displacements, a global linear solve for positions with a prefactorized
SPD system, and the scaled dual updates. Handles and affine groups are
eliminated from the global system, so constrained vertices match their
targets exactly after every global step.
"""

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import errors, geometry, regularizers
from .energies import (Acap, Arap, ClothArap, NeoHookean, PolylineArap,
                       STRAIN_LIMIT_STIFFNESS, acap_scales_batch,
                       bending_matrix, material_to_dict, nh_energy_sigma_batch,
                       nh_prox_batch, strain_limit_targets_batch)
from .geometry import displacement_stats, edge_vectors, fit_rotations, polar_batch
from .regularizers import LocalityParams, penalty_value_batch, prox_batch

GROUP_REGULARIZATION = 1e-8


@dataclass(frozen=True)
class SolverParams:
    """User-facing solver configuration; validate_params normalizes it."""

    material: object
    w: float
    s: float
    rho: Optional[float] = None
    gamma: Optional[float] = None
    max_iters: int = 2000
    tol_primal: float = 1e-4
    tol_dual: float = 1e-4
    iters_per_frame: int = 10
    regularizer: str = "scl1"
    roi_threshold: float = 1e-3
    threads: int = 1


@dataclass(frozen=True)
class ValidatedParams:
    material: object
    locality: LocalityParams
    rho: float
    gamma: Optional[float]
    max_iters: int
    tol_primal: float
    tol_dual: float
    iters_per_frame: int
    regularizer: str
    roi_threshold: float
    threads: int


@dataclass(frozen=True)
class AffineGroup:
    """A vertex set sharing one affine frame, free or prescribed."""

    vertices: tuple
    mode: str = "free"                 # "free" | "prescribed"
    matrix: Optional[np.ndarray] = None      # d x d, prescribed only
    translation: Optional[np.ndarray] = None  # d, prescribed only


@dataclass
class ConstraintSet:
    """Handle (positional) constraints plus affine-group constraints."""

    handles: dict = field(default_factory=dict)
    affine_groups: list = field(default_factory=list)

    def validate(self, mesh):
        n = mesh.n_vertices
        seen = set()
        for i, target in self.handles.items():
            if not (0 <= int(i) < n):
                raise errors.IndexOutOfRangeError(f"handle vertex {i} out of range")
            t = np.asarray(target, dtype=np.float64)
            if t.shape != (mesh.embed,) or not np.isfinite(t).all():
                raise errors.NonFiniteInputError(f"handle {i} target invalid")
            if i in seen:
                raise errors.OverlappingConstraintsError(f"vertex {i} constrained twice")
            seen.add(int(i))
        for g in self.affine_groups:
            if g.mode not in ("free", "prescribed"):
                raise ValueError(f"unknown affine group mode {g.mode!r}")
            if g.mode == "prescribed":
                if g.matrix is None or g.translation is None:
                    raise ValueError("prescribed affine group needs matrix and translation")
            for i in g.vertices:
                if not (0 <= int(i) < n):
                    raise errors.IndexOutOfRangeError(f"group vertex {i} out of range")
                if int(i) in seen:
                    raise errors.OverlappingConstraintsError(
                        f"vertex {i} appears in more than one constraint")
                seen.add(int(i))

    def structure_key(self):
        parts = [tuple(sorted(int(i) for i in self.handles))]
        for g in self.affine_groups:
            parts.append((tuple(sorted(int(i) for i in g.vertices)), g.mode))
        return tuple(parts)


def validate_params(params, mesh):
    """Normalize solver parameters against a mesh.

    Fills rho with 2 * w * max(a_i) / s when unset (1.0 when w == 0) and
    gamma with mu * mean element volume for Neo-Hookean. Raises
    SafeguardViolatedError when an explicit rho does not clear the
    shrinkage safeguard rho > w * max(a_i) / s.
    """
    if isinstance(params, ValidatedParams):
        return params
    material = params.material
    if isinstance(material, NeoHookean) and mesh.dim != mesh.embed:
        raise errors.UnsupportedFeatureError(
            "Neo-Hookean requires a planar triangle or tetrahedral mesh")
    if isinstance(material, ClothArap) and mesh.kind != "cloth":
        raise errors.UnsupportedFeatureError("cloth material requires a cloth mesh")
    if isinstance(material, PolylineArap) and mesh.kind != "polyline":
        raise errors.UnsupportedFeatureError("polyline material requires a polyline mesh")
    if params.max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if params.tol_primal <= 0 or params.tol_dual <= 0:
        raise ValueError("tolerances must be positive")
    if params.regularizer not in ("scl1", "l21", "none"):
        raise ValueError(f"unknown regularizer {params.regularizer!r}")

    locality = LocalityParams.from_mesh(params.w, params.s, mesh.vertex_areas)
    bound = params.w * float(mesh.vertex_areas.max()) / params.s
    rho = params.rho
    if rho is None:
        rho = 2.0 * bound if bound > 0 else 1.0
    if rho <= bound or rho <= 0:
        raise errors.SafeguardViolatedError(
            f"rho = {rho} must exceed w * max(a_i) / s = {bound}")
    gamma = params.gamma
    if isinstance(material, NeoHookean) and gamma is None:
        gamma = material.mu * float(mesh.elem_volumes.mean())
    if isinstance(material, NeoHookean) and gamma <= 0:
        raise ValueError("gamma must be positive")
    return ValidatedParams(
        material=material, locality=locality, rho=float(rho),
        gamma=None if gamma is None else float(gamma),
        max_iters=params.max_iters, tol_primal=params.tol_primal,
        tol_dual=params.tol_dual, iters_per_frame=params.iters_per_frame,
        regularizer=params.regularizer, roi_threshold=params.roi_threshold,
        threads=params.threads)


# ---------------------------------------------------------------------------
# material context: per (mesh, material) sparse operators


class MaterialOps:
    """Precomputed operators the local and global steps share."""

    def __init__(self, mesh, material):
        self.mesh = mesh
        self.material = material
        self.is_nh = isinstance(material, NeoHookean)
        n = mesh.n_vertices
        if self.is_nh:
            m, e, k = mesh.elem_diff_ops.shape
            rows = (np.arange(m)[:, None, None] * e
                    + np.arange(e)[None, :, None]) * np.ones((1, 1, k), dtype=np.int64)
            cols = np.broadcast_to(mesh.elements[:, None, :], (m, e, k))
            self.diff = sp.csr_matrix(
                (mesh.elem_diff_ops.ravel(),
                 (rows.ravel().astype(np.int64), cols.ravel())),
                shape=(m * e, n))
            self.diff_t = self.diff.T.tocsr()
        else:
            rest = mesh.inst_rest
            self.acap_denom = mesh.owner_weight @ np.sum(rest * rest, axis=1)
        if isinstance(material, ClothArap):
            edges = mesh.unique_edges()
            self.sl_p = edges[:, 0]
            self.sl_q = edges[:, 1]
            self.sl_rest = np.linalg.norm(
                mesh.vertices[self.sl_p] - mesh.vertices[self.sl_q], axis=1)
            kappa = STRAIN_LIMIT_STIFFNESS * float(np.abs(mesh.inst_w).mean())
            self.sl_weight = kappa
            ne = edges.shape[0]
            idx = np.arange(ne)
            self.sl_accum = sp.csr_matrix(
                (np.concatenate([np.full(ne, kappa), np.full(ne, -kappa)]),
                 (np.concatenate([self.sl_p, self.sl_q]), np.concatenate([idx, idx]))),
                shape=(n, ne))
            sel = sp.csr_matrix(
                (np.concatenate([np.ones(ne), -np.ones(ne)]),
                 (np.concatenate([idx, idx]), np.concatenate([self.sl_p, self.sl_q]))),
                shape=(ne, n))
            self.sl_laplacian = (self.sl_accum @ sel).tocsr()
            self.bend_q = bending_matrix(mesh) * material.bending_stiffness

    def base_matrix(self, params):
        """Material part of the global system matrix (without rho I)."""
        if self.is_nh:
            return (params.gamma * (self.diff_t @ self.diff)).tocsr()
        a = self.mesh.laplacian.copy()
        if isinstance(self.material, ClothArap):
            a = a + self.sl_laplacian + self.bend_q
        return a.tocsr()


# ---------------------------------------------------------------------------
# global system with constraint elimination


class GlobalSystem:
    """Prefactorized reduced SPD system for the V update.

    Free vertices keep one DOF per coordinate; each free affine group is
    reduced to a shared (d+1) x d frame; handles and prescribed groups are
    eliminated into the right-hand side. The factorization is reused across
    iterations and across handle-target changes.
    """

    def __init__(self, mesh, params, constraints, mat_ops, key):
        self.key = key
        self.mesh = mesh
        n, e = mesh.n_vertices, mesh.embed
        a = mat_ops.base_matrix(params) + params.rho * sp.identity(n, format="csr")
        self.matrix = a.tocsr()

        handle_idx = np.array(sorted(int(i) for i in constraints.handles), dtype=np.int64)
        fixed = np.zeros(n, dtype=bool)
        fixed[handle_idx] = True
        self.handle_idx = handle_idx
        self.prescribed_groups = []
        free_groups = []
        for g in constraints.affine_groups:
            idx = np.array(sorted(int(i) for i in g.vertices), dtype=np.int64)
            if g.mode == "prescribed":
                fixed[idx] = True
                self.prescribed_groups.append((idx, g))
            else:
                fixed[idx] = True  # not free DOFs; parameterized by the frame
                free_groups.append(idx)
        self.free_idx = np.where(~fixed)[0]
        self.free_groups = free_groups

        n_red = self.free_idx.size + len(free_groups) * (e + 1)
        rows, cols, vals = [self.free_idx], [np.arange(self.free_idx.size)], [np.ones(self.free_idx.size)]
        col0 = self.free_idx.size
        self.group_blocks = []
        for idx in free_groups:
            block = np.arange(col0, col0 + e + 1)
            self.group_blocks.append(block)
            frame = np.hstack([mesh.vertices[idx], np.ones((idx.size, 1))])
            rows.append(np.repeat(idx, e + 1))
            cols.append(np.tile(block, idx.size))
            vals.append(frame.ravel())
            col0 += e + 1
        self.reduction = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n_red))

        reduced = (self.reduction.T @ self.matrix @ self.reduction).tocsc()
        if self.group_blocks:
            reg = np.zeros(n_red)
            for block in self.group_blocks:
                reg[block] = GROUP_REGULARIZATION
            reduced = reduced + sp.diags(reg)
        try:
            self.factor = spla.splu(reduced.tocsc())
        except RuntimeError as exc:
            raise errors.SingularSystemError(f"global system is singular: {exc}") from exc
        # fixed-row right-hand-side cache, keyed by target content
        self._fixed_sig = None
        self._fixed_pos = None
        self._fixed_rhs = None

    def fixed_positions(self, constraints):
        """Dense (n, embed) array of fixed rows; zero elsewhere."""
        n, e = self.mesh.n_vertices, self.mesh.embed
        t = np.zeros((n, e))
        for i in self.handle_idx:
            t[i] = np.asarray(constraints.handles[int(i)], dtype=np.float64)
        for idx, g in self.prescribed_groups:
            frame = np.vstack([np.asarray(g.matrix, dtype=np.float64).T,
                               np.asarray(g.translation, dtype=np.float64)[None, :]])
            t[idx] = np.hstack([self.mesh.vertices[idx], np.ones((idx.size, 1))]) @ frame
        return t

    def solve(self, rhs, constraints):
        """Solve the reduced system for a full (n, embed) right-hand side."""
        sig = self._target_signature(constraints)
        if sig != self._fixed_sig:
            self._fixed_pos = self.fixed_positions(constraints)
            self._fixed_rhs = self.matrix @ self._fixed_pos
            self._fixed_sig = sig
        t_fixed = self._fixed_pos
        work = rhs - self._fixed_rhs
        if self.group_blocks:
            rhs_red = self.reduction.T @ work
            e = self.mesh.embed
            for block in self.group_blocks:
                for c in range(e):
                    rhs_red[block[c], c] += GROUP_REGULARIZATION
            u = self.factor.solve(np.ascontiguousarray(rhs_red))
            return self.reduction @ u + t_fixed
        # no groups: the reduction is a plain row selection
        u = self.factor.solve(np.ascontiguousarray(work[self.free_idx]))
        out = t_fixed.copy()
        out[self.free_idx] = u
        return out

    def _target_signature(self, constraints):
        parts = [np.asarray(constraints.handles[int(i)]).tobytes()
                 for i in self.handle_idx]
        for idx, g in self.prescribed_groups:
            parts.append(np.asarray(g.matrix).tobytes())
            parts.append(np.asarray(g.translation).tobytes())
        return b"".join(parts)


def system_key(mesh, params, constraints):
    mat = tuple(sorted(material_to_dict(params.material).items()))
    return (id(mesh), mat, params.rho, params.gamma, constraints.structure_key())


def assemble_global_system(mesh, params, constraints, mat_ops=None):
    """Build (and factor) the reduced global system for these constraints."""
    params = validate_params(params, mesh)
    constraints.validate(mesh)
    if mat_ops is None:
        mat_ops = MaterialOps(mesh, params.material)
    return GlobalSystem(mesh, params, constraints, mat_ops,
                        system_key(mesh, params, constraints))


# ---------------------------------------------------------------------------
# solver state and the ADMM iteration


@dataclass
class SolverState:
    v: np.ndarray
    z: np.ndarray
    u: np.ndarray
    rotations: Optional[np.ndarray] = None   # (n, e, e) ARAP family
    scales: Optional[np.ndarray] = None      # (n,) ACAP
    cloth_targets: Optional[np.ndarray] = None
    x_elem: Optional[np.ndarray] = None      # (m, d, d) Neo-Hookean
    w_elem: Optional[np.ndarray] = None
    polar_r: Optional[np.ndarray] = None     # cached fresh polar of D_j V
    sym_s: Optional[np.ndarray] = None
    nh_flags: int = 0                        # elements that hit the prox iteration cap
    system: Optional[GlobalSystem] = None
    mat_ops: Optional[MaterialOps] = None
    iterations: int = 0
    factorization_count: int = 0
    residual_history: list = field(default_factory=list)
    phase_times: dict = field(default_factory=lambda: {
        "local_x": 0.0, "local_z": 0.0, "global": 0.0, "dual": 0.0})

    def residuals(self):
        return self.residual_history[-1] if self.residual_history else None


def init_state(mesh, params):
    """Fresh state at the rest shape with zero duals."""
    params = validate_params(params, mesh)
    n, e = mesh.n_vertices, mesh.embed
    state = SolverState(v=mesh.vertices.copy(),
                        z=np.zeros((n, e)), u=np.zeros((n, e)))
    if isinstance(params.material, NeoHookean):
        m = mesh.n_elements
        state.x_elem = np.tile(np.eye(e), (m, 1, 1))
        state.w_elem = np.zeros((m, e, e))
    else:
        state.rotations = np.tile(np.eye(e), (n, 1, 1))
        if isinstance(params.material, Acap):
            state.scales = np.ones(n)
    return state


def reset_duals(state):
    state.z[:] = 0.0
    state.u[:] = 0.0
    if state.w_elem is not None:
        state.w_elem[:] = 0.0
    state.polar_r = None
    state.sym_s = None


def _run_chunked(fill, n_rows, threads):
    """Run fill(lo, hi) over row chunks, optionally on a thread pool.

    Chunks write disjoint output slices, so results are identical for any
    thread count; numpy's LAPACK kernels release the GIL.
    """
    if threads <= 1 or n_rows < 2048:
        fill(0, n_rows)
        return
    from concurrent.futures import ThreadPoolExecutor
    chunk = (n_rows + threads - 1) // threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fill, lo, min(lo + chunk, n_rows))
                   for lo in range(0, n_rows, chunk)]
        for f in futures:
            f.result()


def _covariances(mesh, v):
    """Per-vertex weighted covariances M_i = D_i W_i D~_i^T, batched."""
    d = edge_vectors(mesh, v)
    e = mesh.embed
    rest = mesh.inst_rest
    prods = np.empty((d.shape[0], e * e))
    for a in range(e):
        for b in range(e):
            np.multiply(d[:, a], rest[:, b], out=prods[:, a * e + b])
    m = (mesh.owner_weight @ prods).reshape(mesh.n_vertices, e, e)
    return m


def _rotation_targets(mesh, rotations, scales=None):
    """Per-instance target edges t = R_owner^T d~ (optionally scaled)."""
    owner = mesh.inst_owner
    rest = mesh.inst_rest
    if mesh.embed == 2:
        rot_flat = np.ascontiguousarray(rotations).ravel()
        c = rot_flat[mesh.inst_owner_base]
        s = rot_flat[mesh.inst_owner_base + 2]
        dx, dy = rest[:, 0], rest[:, 1]
        targets = np.empty_like(rest)
        targets[:, 0] = c * dx + s * dy
        targets[:, 1] = -s * dx + c * dy
    else:
        targets = np.einsum("qji,qj->qi", rotations[owner], rest)
    if scales is not None:
        targets = targets * scales[owner, None]
    return targets


def _ensure_system(state, mesh, params, constraints):
    key = system_key(mesh, params, constraints)
    if state.mat_ops is None or state.mat_ops.mesh is not mesh \
            or state.mat_ops.material != params.material:
        state.mat_ops = MaterialOps(mesh, params.material)
    if state.system is None or state.system.key != key:
        state.system = GlobalSystem(mesh, params, constraints, state.mat_ops, key)
        state.factorization_count += 1
    return state.system


def _nh_fresh_polar(state, mesh):
    mat = state.mat_ops
    p = (mat.diff @ state.v).reshape(mesh.n_elements, mesh.embed, mesh.embed)
    r, s = polar_batch(p)
    state.polar_r = r
    state.sym_s = s


def admm_iterate(state, mesh, params, constraints, trace=None):
    """One ADMM iteration: local X, local Z, global V, dual updates.

    When `trace` is a list, the augmented Lagrangian value is appended
    before the X step and after each of the three block updates (with the
    iteration's linearization held fixed), which is what the per-block
    descent tests consume.
    """
    params = validate_params(params, mesh)
    system = _ensure_system(state, mesh, params, constraints)
    material = params.material
    is_nh = isinstance(material, NeoHookean)
    rest = mesh.vertices
    rho = params.rho
    lam = params.locality.per_vertex_lambda
    s_clamp = params.locality.s

    held_r = None
    if is_nh and state.polar_r is None:
        _nh_fresh_polar(state, mesh)
    if is_nh:
        held_r = state.polar_r
    if isinstance(material, ClothArap) and state.cloth_targets is None:
        mat = state.mat_ops
        state.cloth_targets = rest[mat.sl_p] - rest[mat.sl_q]

    def al():
        return augmented_lagrangian(mesh, params, state, held_r=held_r)

    if trace is not None:
        trace.append(al())

    # -- local step X ------------------------------------------------------
    t0 = time.perf_counter()
    if is_nh:
        # the dual W carries a skew part; the symmetric-X prox only sees the
        # symmetric part of the target (the skew residual is orthogonal)
        a_sym = state.sym_s + state.w_elem
        a_sym = 0.5 * (a_sym + a_sym.transpose(0, 2, 1))
        m_el = a_sym.shape[0]
        x_new = np.empty_like(a_sym)
        flags = np.zeros(m_el, dtype=np.int64)

        def fill_nh(lo, hi):
            eigval, eigvec = np.linalg.eigh(a_sym[lo:hi])
            sigma, conv = nh_prox_batch(eigval, params.gamma, material.mu,
                                        material.lam, mesh.elem_volumes[lo:hi])
            flags[lo:hi] = ~conv
            x_new[lo:hi] = np.einsum("mik,mk,mjk->mij", eigvec, sigma, eigvec)

        _run_chunked(fill_nh, m_el, params.threads)
        state.nh_flags = int(flags.sum())
        state.x_elem = x_new
    else:
        cov = _covariances(mesh, state.v)
        rot = np.empty_like(cov)

        def fill_rot(lo, hi):
            rot[lo:hi] = fit_rotations(cov[lo:hi])

        _run_chunked(fill_rot, cov.shape[0], params.threads)
        state.rotations = rot
        if isinstance(material, Acap):
            state.scales = acap_scales_batch(
                cov, state.rotations, state.mat_ops.acap_denom,
                material.scale_min, material.scale_max)
        if isinstance(material, ClothArap):
            mat = state.mat_ops
            d_sl = state.v[mat.sl_p] - state.v[mat.sl_q]
            state.cloth_targets = strain_limit_targets_batch(
                d_sl, mat.sl_rest, material.strain_limit)
    state.phase_times["local_x"] += time.perf_counter() - t0
    if trace is not None:
        trace.append(al())

    # -- local step Z ------------------------------------------------------
    t0 = time.perf_counter()
    z_prev = state.z
    state.z = prox_batch(params.regularizer, state.v - rest + state.u,
                         lam, rho, s_clamp)
    state.phase_times["local_z"] += time.perf_counter() - t0
    if trace is not None:
        trace.append(al())

    # -- global step V -----------------------------------------------------
    t0 = time.perf_counter()
    rhs = rho * (rest + state.z - state.u)
    if is_nh:
        y = np.einsum("mij,mjk->mik", held_r, state.x_elem - state.w_elem)
        m, e = mesh.n_elements, mesh.embed
        rhs = rhs + params.gamma * (state.mat_ops.diff_t @ y.reshape(m * e, e))
    else:
        targets = _rotation_targets(
            mesh, state.rotations,
            state.scales if isinstance(material, Acap) else None)
        rhs = rhs + mesh.accum @ targets
        if isinstance(material, ClothArap):
            rhs = rhs + state.mat_ops.sl_accum @ state.cloth_targets
    state.v = system.solve(rhs, constraints)
    state.phase_times["global"] += time.perf_counter() - t0
    if trace is not None:
        trace.append(al())

    # -- dual updates ------------------------------------------------------
    t0 = time.perf_counter()
    rz_vec = state.v - rest - state.z
    state.u = state.u + rz_vec
    rx = 0.0
    if is_nh:
        m, e = mesh.n_elements, mesh.embed
        p_new = (state.mat_ops.diff @ state.v).reshape(m, e, e)
        lin_sym = np.einsum("mji,mjk->mik", held_r, p_new)
        state.w_elem = state.w_elem + lin_sym - state.x_elem
        r_new, s_new = polar_batch(p_new)
        state.polar_r, state.sym_s = r_new, s_new
        rx = float(np.max(np.abs(s_new - state.x_elem)))
    state.phase_times["dual"] += time.perf_counter() - t0

    rz = float(np.max(np.abs(rz_vec)))
    sz = rho * float(np.max(np.abs(state.z - z_prev)))
    state.residual_history.append({"primal_z": rz, "dual_z": sz, "primal_x": rx})
    state.iterations += 1
    return state


def elastic_energy(mesh, params, state, held_r=None):
    """Elastic term of the objective at the state's local variables."""
    material = params.material
    if isinstance(material, NeoHookean):
        eigval = np.linalg.eigvalsh(state.x_elem)
        return float(np.dot(mesh.elem_volumes,
                            nh_energy_sigma_batch(np.maximum(eigval, 1e-300),
                                                  material.mu, material.lam)))
    d = edge_vectors(mesh, state.v)
    targets = _rotation_targets(
        mesh, state.rotations,
        state.scales if isinstance(material, Acap) else None)
    total = 0.5 * float(np.dot(mesh.inst_w, np.sum((d - targets) ** 2, axis=1)))
    if isinstance(material, ClothArap):
        mat = state.mat_ops
        d_sl = state.v[mat.sl_p] - state.v[mat.sl_q]
        total += 0.5 * mat.sl_weight * float(np.sum((d_sl - state.cloth_targets) ** 2))
        total += 0.5 * float(np.sum(state.v * (mat.bend_q @ state.v)))
    return total


def augmented_lagrangian(mesh, params, state, held_r=None):
    """Augmented Lagrangian value with scaled duals.

    For Neo-Hookean the element constraint is evaluated with the held
    polar rotations of the current iteration (the linearization the V
    step minimizes), so each block update is non-increasing by
    construction.
    """
    params = validate_params(params, mesh)
    rest = mesh.vertices
    rho = params.rho
    value = elastic_energy(mesh, params, state)
    value += penalty_value_batch(params.regularizer, state.z,
                                 params.locality.per_vertex_lambda,
                                 params.locality.s)
    resid = state.v - rest - state.z + state.u
    value += 0.5 * rho * (float(np.sum(resid ** 2)) - float(np.sum(state.u ** 2)))
    if isinstance(params.material, NeoHookean):
        if held_r is None:
            held_r = state.polar_r
        m, e = mesh.n_elements, mesh.embed
        p = (state.mat_ops.diff @ state.v).reshape(m, e, e)
        lin_sym = np.einsum("mji,mjk->mik", held_r, p)
        c = lin_sym - state.x_elem + state.w_elem
        value += 0.5 * params.gamma * (float(np.sum(c ** 2))
                                       - float(np.sum(state.w_elem ** 2)))
    return value


# ---------------------------------------------------------------------------
# driver


@dataclass
class DeformResult:
    v: np.ndarray
    displacement: np.ndarray
    roi_count: int
    roi_measure: float
    roi_threshold: float
    iterations: int
    residuals: dict
    converged: bool
    wall_time: float
    factorization_count: int
    state: SolverState


def _converged(state, mesh, params):
    r = state.residuals()
    if r is None:
        return False
    scale = max(mesh.bbox_diag, 1e-300)
    return (max(r["primal_z"], r["primal_x"]) / scale <= params.tol_primal
            and r["dual_z"] / scale <= params.tol_dual)


def solve(mesh, constraints, params, warm_start=None, iters=None):
    """Run ADMM until the residual tolerances or the iteration budget.

    Passing the previous result's `state` as warm_start continues from the
    previous primal/dual variables (the interactive dragging contract).
    A run that exhausts the budget returns converged=False rather than
    raising. `iters` overrides max_iters for this call.
    """
    params = validate_params(params, mesh)
    constraints.validate(mesh)
    state = warm_start if warm_start is not None else init_state(mesh, params)
    budget = params.max_iters if iters is None else int(iters)
    t0 = time.perf_counter()
    converged = False
    for _ in range(budget):
        admm_iterate(state, mesh, params, constraints)
        if _converged(state, mesh, params):
            converged = True
            break
    wall = time.perf_counter() - t0
    mags, roi_count, roi_measure = displacement_stats(
        state.v, mesh.vertices, mesh.vertex_areas, params.roi_threshold)
    return DeformResult(
        v=state.v.copy(), displacement=mags, roi_count=roi_count,
        roi_measure=roi_measure, roi_threshold=params.roi_threshold,
        iterations=state.iterations,
        residuals=state.residuals() or {"primal_z": 0.0, "dual_z": 0.0, "primal_x": 0.0},
        converged=converged, wall_time=wall,
        factorization_count=state.factorization_count, state=state)
