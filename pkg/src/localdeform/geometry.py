"""Discrete geometry shared by all deformation energies.

Builds the immutable rest-shape quantities: cotangent weights, barycentric
vertex measures, spokes-and-rims edge sets, per-element difference operators,
and the sparse operators the ADMM solver consumes. Supports 1D polylines
(in 2D or 3D), planar triangle meshes, triangle meshes embedded in 3D
(cloth), and tetrahedral meshes.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import errors

KINDS = ("polyline", "triangle", "cloth", "tet")

# Degenerate-element policy: cotangent weights are clamped to this magnitude
# and element measures floored at MEASURE_FLOOR_REL * bbox_diag**dim.
WEIGHT_CLAMP = 1e8
MEASURE_FLOOR_REL = 1e-12

_EDGE_PAIRS = {
    2: [(0, 1)],
    3: [(0, 1), (0, 2), (1, 2)],
    4: [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
}


@dataclass(frozen=True)
class RestMesh:
    """Immutable discretization of the rest shape.

    Edge instances implement the spokes-and-rims neighborhoods: every element
    contributes each of its edges once per element vertex (the owner). The
    instance arrays are sorted by owner so per-vertex slices are contiguous.
    """

    kind: str
    dim: int          # intrinsic element dimension (1, 2 or 3)
    embed: int        # ambient dimension (2 or 3)
    vertices: np.ndarray      # (n, embed) rest positions
    elements: np.ndarray      # (m, dim+1) vertex indices
    vertex_areas: np.ndarray  # (n,) barycentric measures, > 0
    elem_volumes: np.ndarray  # (m,) element rest measures (floored)
    elem_diff_ops: np.ndarray  # (m, embed, dim+1); D_j V_elem = transposed deformation gradient
    # spokes-and-rims edge instances, sorted by owner vertex
    inst_owner: np.ndarray    # (q,)
    inst_p: np.ndarray        # (q,) edge tail
    inst_q: np.ndarray        # (q,) edge head
    inst_w: np.ndarray        # (q,) cotangent weight (uniform 1 for polylines)
    inst_rest: np.ndarray     # (q, embed) rest edge vectors V[p] - V[q]
    owner_ptr: np.ndarray     # (n+1,) CSR pointers into the instance arrays
    bbox_diag: float
    # flattened gather indices (fast paths; row indexing is slow in numpy)
    inst_fp: np.ndarray = field(repr=False, compare=False, default=None)
    inst_fq: np.ndarray = field(repr=False, compare=False, default=None)
    inst_owner_base: np.ndarray = field(repr=False, compare=False, default=None)
    # cached sparse operators (derived, excluded from equality)
    laplacian: sp.csr_matrix = field(repr=False, compare=False, default=None)
    accum: sp.csr_matrix = field(repr=False, compare=False, default=None)      # (n, q) +-w scatter
    owner_weight: sp.csr_matrix = field(repr=False, compare=False, default=None)  # (n, q) w gather

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    def neighborhoods(self, i):
        """Edge index range of vertex i's spokes-and-rims instances."""
        return np.arange(self.owner_ptr[i], self.owner_ptr[i + 1])

    def cotan_weights(self, i):
        """Diagonal weight list W_i of vertex i's neighborhood."""
        return self.inst_w[self.owner_ptr[i]:self.owner_ptr[i + 1]]

    def rest_edge_matrix(self, i):
        """Rest edge matrix D~_i, shape (embed, |N(i)|)."""
        return self.inst_rest[self.owner_ptr[i]:self.owner_ptr[i + 1]].T

    def deformed_edge_matrix(self, i, v):
        """Deformed edge matrix D_i at positions v, shape (embed, |N(i)|)."""
        sl = slice(self.owner_ptr[i], self.owner_ptr[i + 1])
        return (v[self.inst_p[sl]] - v[self.inst_q[sl]]).T

    def unique_edges(self):
        """Unique undirected element edges as an (e, 2) array with p < q."""
        pairs = _EDGE_PAIRS[self.elements.shape[1]]
        e = np.concatenate([self.elements[:, [a, b]] for a, b in pairs], axis=0)
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    def total_measure(self):
        return float(self.elem_volumes.sum())


def _lock(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _element_gradients(vertices, elements, kind):
    """Per-element shape-function-gradient operator G (m, embed, k) and measures.

    G maps the element's vertex position block (k, embed) to the transposed
    deformation gradient: G_j @ V[elem_j] == F_j^T for dim == embed. For
    codimensional elements (cloth, polyline) the rest pseudo-inverse is used,
    so constants are annihilated and in-plane affine parts are reproduced.
    Returns (G, measure_raw) with no degeneracy policy applied yet.
    """
    m, k = elements.shape
    embed = vertices.shape[1]
    dim = k - 1
    # rest shape matrix: columns are edges from vertex 0 (embed, dim)
    rest = vertices[elements]                       # (m, k, embed)
    dm = (rest[:, 1:, :] - rest[:, :1, :]).transpose(0, 2, 1)  # (m, embed, dim)

    if dim == 1:
        measure = np.linalg.norm(dm[:, :, 0], axis=1)
    elif dim == 2:
        if embed == 2:
            measure = 0.5 * np.abs(np.linalg.det(dm))
        else:
            measure = 0.5 * np.linalg.norm(np.cross(dm[:, :, 0], dm[:, :, 1]), axis=1)
    else:
        measure = np.abs(np.linalg.det(dm)) / 6.0

    # pseudo-inverse of dm: (dm^T dm)^-1 dm^T, shape (m, dim, embed)
    gram = np.einsum("mia,mib->mab", dm, dm)
    with np.errstate(all="ignore"):
        try:
            gram_inv = np.linalg.inv(gram)
        except np.linalg.LinAlgError:
            gram_inv = np.full_like(gram, np.nan)
            ok = np.abs(np.linalg.det(gram)) > 0
            if ok.any():
                gram_inv[ok] = np.linalg.inv(gram[ok])
    pinv = np.einsum("mab,mib->mai", gram_inv, dm)  # (m, dim, embed)

    # difference stencil E (dim, k): row i selects v_{i+1} - v_0
    stencil = np.zeros((dim, k))
    stencil[:, 0] = -1.0
    stencil[np.arange(dim), np.arange(1, k)] = 1.0
    g = np.einsum("mai,ak->mik", pinv, stencil)     # (m, embed, k)
    return g, measure


def build_rest_mesh(vertices, elements, kind):
    """Construct a RestMesh from raw arrays.

    vertices: (n, embed) float positions. elements: (m, k) integer indices
    with k = 2 (polyline), 3 (triangle/cloth) or 4 (tet). kind selects the
    discretization; "triangle" is planar (embed 2), "cloth" is a triangle
    mesh embedded in 3D.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown mesh kind {kind!r}")
    vertices = np.asarray(vertices, dtype=np.float64)
    elements = np.asarray(elements, dtype=np.int64)
    if vertices.ndim != 2 or vertices.size == 0 or elements.ndim != 2 or elements.size == 0:
        raise errors.EmptyMeshError("mesh needs at least one vertex and one element")
    if not np.isfinite(vertices).all():
        raise errors.NonFiniteInputError("vertex positions contain non-finite values")

    expected_k = {"polyline": 2, "triangle": 3, "cloth": 3, "tet": 4}[kind]
    if elements.shape[1] != expected_k:
        raise ValueError(f"{kind} elements must have {expected_k} vertices per element")
    expected_embed = {"polyline": None, "triangle": 2, "cloth": 3, "tet": 3}[kind]
    if expected_embed is not None and vertices.shape[1] != expected_embed:
        raise ValueError(f"{kind} meshes must be embedded in {expected_embed}D")
    if kind == "polyline" and vertices.shape[1] not in (2, 3):
        raise ValueError("polylines must be embedded in 2D or 3D")

    n = vertices.shape[0]
    if elements.min() < 0 or elements.max() >= n:
        raise errors.IndexOutOfRangeError("element indices out of range")

    dim = expected_k - 1
    embed = vertices.shape[1]
    lo = vertices.min(axis=0)
    hi = vertices.max(axis=0)
    bbox_diag = float(np.linalg.norm(hi - lo))
    measure_floor = MEASURE_FLOOR_REL * max(bbox_diag, 1e-30) ** dim

    g, measure = _element_gradients(vertices, elements, kind)
    degenerate = ~(measure > measure_floor)
    if degenerate.all():
        raise errors.AllElementsDegenerateError("all elements are degenerate")
    measure = np.maximum(measure, measure_floor)

    # element stiffness K = measure * G^T G; off-diagonals give the cotan
    # weights (1/2 cot for triangles, dihedral formula for tets)
    if kind == "polyline":
        stiff = np.tile(np.array([[1.0, -1.0], [-1.0, 1.0]]), (elements.shape[0], 1, 1))
    else:
        stiff = measure[:, None, None] * np.einsum("mik,mil->mkl", g, g)
    bad = ~np.isfinite(stiff)
    if bad.any():
        stiff = np.where(bad, 0.0, stiff)
    stiff = np.clip(stiff, -WEIGHT_CLAMP, WEIGHT_CLAMP)
    g = np.where(np.isfinite(g), g, 0.0)

    # barycentric vertex measures
    areas = np.zeros(n)
    np.add.at(areas, elements.ravel(), np.repeat(measure / expected_k, expected_k))

    # spokes-and-rims edge instances: each element edge, once per element vertex
    pairs = _EDGE_PAIRS[expected_k]
    m = elements.shape[0]
    per_elem = []
    for a, b in pairs:
        w_pair = -stiff[:, a, b]
        per_elem.append((elements[:, a], elements[:, b], w_pair))
    ep = np.concatenate([p for p, q, w in per_elem])
    eq = np.concatenate([q for p, q, w in per_elem])
    ew = np.concatenate([w for p, q, w in per_elem])
    n_pairs = len(pairs)
    owners = np.concatenate([np.tile(elements[:, j], n_pairs) for j in range(expected_k)])
    ep = np.tile(ep, expected_k)
    eq = np.tile(eq, expected_k)
    ew = np.tile(ew, expected_k)

    order = np.argsort(owners, kind="stable")
    owners, ep, eq, ew = owners[order], ep[order], eq[order], ew[order]
    rest_edges = vertices[ep] - vertices[eq]
    counts = np.bincount(owners, minlength=n)
    owner_ptr = np.concatenate([[0], np.cumsum(counts)])

    q_inst = owners.shape[0]
    rows_i = np.arange(q_inst)
    accum = sp.csr_matrix(
        (np.concatenate([ew, -ew]),
         (np.concatenate([ep, eq]), np.concatenate([rows_i, rows_i]))),
        shape=(n, q_inst))
    owner_weight = sp.csr_matrix((ew, (owners, rows_i)), shape=(n, q_inst))
    sel = sp.csr_matrix(
        (np.concatenate([np.ones(q_inst), -np.ones(q_inst)]),
         (np.concatenate([rows_i, rows_i]), np.concatenate([ep, eq]))),
        shape=(q_inst, n))
    laplacian = (accum @ sel).tocsr()
    laplacian.sum_duplicates()

    cols = np.arange(embed)
    inst_fp = (ep[:, None] * embed + cols[None, :]).ravel()
    inst_fq = (eq[:, None] * embed + cols[None, :]).ravel()
    return RestMesh(
        kind=kind, dim=dim, embed=embed,
        vertices=_lock(vertices), elements=_lock(elements),
        vertex_areas=_lock(areas), elem_volumes=_lock(measure),
        elem_diff_ops=_lock(g),
        inst_owner=_lock(owners), inst_p=_lock(ep), inst_q=_lock(eq),
        inst_w=_lock(ew), inst_rest=_lock(rest_edges),
        owner_ptr=_lock(owner_ptr), bbox_diag=bbox_diag,
        inst_fp=_lock(inst_fp), inst_fq=_lock(inst_fq),
        inst_owner_base=_lock(owners * embed * embed),
        laplacian=laplacian, accum=accum, owner_weight=owner_weight)


@dataclass(frozen=True)
class SmallMatrixFactors:
    """SVD factors of a small square matrix, sigma descending.

    With rotation_variant set, the sign of the last singular value and the
    last column of v are flipped so that det(u @ v.T) = +1; sigma stays
    descending but its last entry may be negative.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    rotation_variant: bool

    def reconstruct(self):
        return self.u @ np.diag(self.sigma) @ self.v.T


def svd_small(matrix, rotation_variant=False):
    """SVD of a d x d matrix, d in {1, 2, 3}, as SmallMatrixFactors."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (1, 2, 3):
        raise ValueError("svd_small expects a square matrix of size 1, 2 or 3")
    if not np.isfinite(m).all():
        raise errors.NonFiniteInputError("svd_small: non-finite input")
    u, sigma, vt = np.linalg.svd(m)
    v = vt.T
    if rotation_variant and np.linalg.det(u @ vt) < 0:
        v = v.copy()
        v[:, -1] *= -1.0
        sigma = sigma.copy()
        sigma[-1] *= -1.0
    return SmallMatrixFactors(u=u, sigma=sigma, v=v, rotation_variant=rotation_variant)


def polar_sym(f):
    """Symmetric factor S of the polar decomposition F = R S.

    S = V Sigma V^T from the SVD of F; symmetric PSD and invariant to
    rotations applied to F from the left. Note sym(F) != (F + F^T)/2 in
    general. F may be rectangular (embed x dim); S is dim x dim.
    """
    f = np.asarray(f, dtype=np.float64)
    if not np.isfinite(f).all():
        raise errors.NonFiniteInputError("polar_sym: non-finite input")
    _, sigma, vt = np.linalg.svd(f, full_matrices=False)
    return vt.T @ np.diag(sigma) @ vt


def polar_batch(p):
    """Batched rotation-variant polar decomposition of (m, d, d) matrices.

    Returns (r, s) with p = r @ s, det(r) = +1; under inversion the last
    eigenvalue of s is negative. d = 2 uses a closed form.
    """
    d = p.shape[-1]
    if d == 2:
        a = p[:, 0, 0] + p[:, 1, 1]
        b = p[:, 1, 0] - p[:, 0, 1]
        h = np.hypot(a, b)
        c = np.where(h > 0, a / np.where(h > 0, h, 1.0), 1.0)
        s_ = np.where(h > 0, b / np.where(h > 0, h, 1.0), 0.0)
        r = np.empty_like(p)
        r[:, 0, 0] = c
        r[:, 0, 1] = -s_
        r[:, 1, 0] = s_
        r[:, 1, 1] = c
    else:
        u, sig, vt = np.linalg.svd(p)
        det = np.linalg.det(u @ vt)
        flip = det < 0
        u = u.copy()
        u[flip, :, -1] *= -1.0
        sig = sig.copy()
        sig[flip, -1] *= -1.0
        r = u @ vt
    s = np.einsum("mji,mjk->mik", r, p)
    s = 0.5 * (s + s.transpose(0, 2, 1))
    return r, s


def fit_rotations(m):
    """Batched proper rotations maximizing tr(R M) for (n, d, d) covariances.

    This is the Orthogonal Procrustes solution R = V U^T (det-corrected)
    for M = U Sigma V^T. Zero M yields the identity.
    """
    d = m.shape[-1]
    if d == 2:
        a = m[:, 0, 0] + m[:, 1, 1]
        b = m[:, 0, 1] - m[:, 1, 0]
        h = np.hypot(a, b)
        c = np.where(h > 0, a / np.where(h > 0, h, 1.0), 1.0)
        s_ = np.where(h > 0, b / np.where(h > 0, h, 1.0), 0.0)
        r = np.empty_like(m)
        r[:, 0, 0] = c
        r[:, 0, 1] = -s_
        r[:, 1, 0] = s_
        r[:, 1, 1] = c
        return r
    u, _, vt = np.linalg.svd(m)
    v = vt.transpose(0, 2, 1)
    det = np.linalg.det(np.einsum("mij,mkj->mik", v, u))
    v = v.copy()
    v[det < 0, :, -1] *= -1.0
    return np.einsum("mij,mkj->mik", v, u)


def edge_vectors(mesh, v):
    """Per-instance deformed edge vectors V[p] - V[q] via flat gathers."""
    flat = np.ascontiguousarray(v).ravel()
    q = mesh.inst_p.shape[0]
    return (flat[mesh.inst_fp] - flat[mesh.inst_fq]).reshape(q, mesh.embed)


def displacement_stats(v, v_rest, vertex_areas, threshold=1e-3):
    """Per-vertex displacement magnitudes and region-of-influence stats.

    Returns (magnitudes, roi_count, roi_measure) where the ROI is the set of
    vertices displaced by more than `threshold` and roi_measure sums their
    barycentric measures.
    """
    v = np.asarray(v, dtype=np.float64)
    v_rest = np.asarray(v_rest, dtype=np.float64)
    if v.shape != v_rest.shape or v.shape[0] != np.shape(vertex_areas)[0]:
        raise errors.ShapeMismatchError(
            f"displacement_stats: shapes {v.shape} vs {v_rest.shape} "
            f"with {np.shape(vertex_areas)[0]} areas")
    if threshold <= 0:
        raise errors.NonpositiveThresholdError("threshold must be positive")
    mags = np.linalg.norm(v - v_rest, axis=1)
    in_roi = mags > threshold
    return mags, int(in_roi.sum()), float(np.asarray(vertex_areas)[in_roi].sum())
