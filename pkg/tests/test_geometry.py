import numpy as np
import pytest

from localdeform import errors, meshes
from localdeform.geometry import (build_rest_mesh, displacement_stats,
                                  fit_rotations, polar_batch, polar_sym,
                                  svd_small)


def rotation_2d(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def random_rotation(rng, d):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    if np.linalg.det(q) < 0:
        q[:, -1] *= -1
    return q


class TestBuildRestMesh:
    def test_equilateral_triangle_weights_and_areas(self):
        # per-edge cotangent weight 0.5*cot(60deg), barycentric area = A/3
        v = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
        mesh = build_rest_mesh(v, [[0, 1, 2]], "triangle")
        expected_w = 0.5 / np.tan(np.pi / 3)
        assert np.allclose(mesh.inst_w, expected_w, atol=1e-12)
        area = np.sqrt(3) / 4
        assert np.allclose(mesh.vertex_areas, area / 3, atol=1e-12)
        assert abs(mesh.vertex_areas.sum() - area) < 1e-10 * area

    def test_polyline_uniform_weights_and_areas(self):
        v = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]])
        mesh = build_rest_mesh(v, [[0, 1], [1, 2]], "polyline")
        assert np.all(mesh.inst_w == 1.0)
        # half the sum of incident segment lengths
        assert np.allclose(mesh.vertex_areas, [0.5, 1.5, 1.0])

    def test_regular_tet_partition_of_unity(self):
        v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
        mesh = build_rest_mesh(v, [[0, 1, 2, 3]], "tet")
        vol = abs(np.linalg.det((v[1:] - v[0]).T)) / 6
        assert abs(mesh.vertex_areas.sum() - vol) < 1e-10 * vol
        assert np.all(mesh.vertex_areas > 0)

    def test_empty_and_bad_indices(self):
        with pytest.raises(errors.EmptyMeshError):
            build_rest_mesh(np.zeros((0, 2)), np.zeros((0, 3), dtype=int), "triangle")
        with pytest.raises(errors.IndexOutOfRangeError):
            build_rest_mesh(np.zeros((3, 2)), [[0, 1, 5]], "triangle")

    def test_all_degenerate(self):
        v = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        with pytest.raises(errors.AllElementsDegenerateError):
            build_rest_mesh(v, [[0, 1, 2]], "triangle")

    def test_determinism(self):
        mesh1 = meshes.bar_2d(6, 3)
        mesh2 = meshes.bar_2d(6, 3)
        assert np.array_equal(mesh1.inst_w, mesh2.inst_w)
        assert np.array_equal(mesh1.vertex_areas, mesh2.vertex_areas)

    def test_weights_permutation_invariant(self):
        rng = np.random.default_rng(3)
        mesh = meshes.disk_2d(4, 9, 1.0)
        perm = rng.permutation(mesh.n_vertices)
        inv = np.argsort(perm)
        v2 = mesh.vertices[inv]
        e2 = perm[mesh.elements]
        mesh2 = build_rest_mesh(v2, e2, "triangle")
        # compare per-vertex weight multisets under the permutation
        for i in range(mesh.n_vertices):
            w1 = np.sort(mesh.cotan_weights(i))
            w2 = np.sort(mesh2.cotan_weights(perm[i]))
            assert np.allclose(w1, w2, atol=1e-12)
        assert np.allclose(mesh.vertex_areas, mesh2.vertex_areas[perm], atol=1e-14)

    def test_diff_ops_annihilate_constants(self, small_tet_bar, small_bar):
        for mesh in (small_bar, small_tet_bar):
            const = np.ones((mesh.elements.shape[1], mesh.embed)) * 3.7
            for j in range(0, mesh.n_elements, 7):
                out = mesh.elem_diff_ops[j] @ const
                assert np.abs(out).max() < 1e-12

    def test_diff_ops_reproduce_affine(self, small_bar, small_tet_bar):
        rng = np.random.default_rng(11)
        for mesh in (small_bar, small_tet_bar):
            m = rng.standard_normal((mesh.embed, mesh.embed))
            b = rng.standard_normal(mesh.embed)
            v = mesh.vertices @ m.T + b
            for j in range(0, mesh.n_elements, 5):
                out = mesh.elem_diff_ops[j] @ v[mesh.elements[j]]
                assert np.abs(out - m.T).max() < 1e-10


class TestPolarSym:
    def test_identity(self):
        assert np.allclose(polar_sym(np.eye(2)), np.eye(2), atol=1e-14)

    def test_rotation_gives_identity(self):
        assert np.allclose(polar_sym(rotation_2d(np.pi / 6)), np.eye(2), atol=1e-12)

    def test_rotated_stretch(self):
        # DERIVED: S of R(45deg) @ diag(2, 0.5) is diag(2, 0.5) via the SVD oracle
        f = rotation_2d(np.pi / 4) @ np.diag([2.0, 0.5])
        s = polar_sym(f)
        _, sig, vt = np.linalg.svd(f)
        oracle = vt.T @ np.diag(sig) @ vt
        assert np.allclose(s, oracle, atol=1e-12)
        assert np.allclose(s, np.diag([2.0, 0.5]), atol=1e-12)

    def test_rotation_invariance_random(self):
        rng = np.random.default_rng(7)
        for d in (2, 3):
            for _ in range(100):
                f = rng.standard_normal((d, d))
                q = random_rotation(rng, d)
                assert np.abs(polar_sym(q @ f) - polar_sym(f)).max() < 1e-10

    def test_nonfinite_rejected(self):
        with pytest.raises(errors.NonFiniteInputError):
            polar_sym(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def grid_procrustes_objective_2d(m, n_grid=200001):
    """Brute-force max of tr(R(theta) M) over SO(2)."""
    thetas = np.linspace(-np.pi, np.pi, n_grid)
    c, s = np.cos(thetas), np.sin(thetas)
    vals = c * (m[0, 0] + m[1, 1]) + s * (m[0, 1] - m[1, 0])
    return vals.max()


class TestSvdSmall:
    def test_identity(self):
        f = svd_small(np.eye(3))
        assert np.allclose(f.sigma, 1.0)
        assert np.abs(f.reconstruct() - np.eye(3)).max() < 1e-12

    def test_rotation_variant_reflection(self):
        m = np.diag([3.0, -1.0])
        f = svd_small(m, rotation_variant=True)
        assert abs(np.linalg.det(f.u @ f.v.T) - 1.0) < 1e-12
        assert np.abs(f.reconstruct() - m).max() < 1e-12
        assert f.sigma[0] >= f.sigma[1]
        assert np.allclose(np.abs(f.sigma), [3.0, 1.0])
        # best proper rotation alignment matches an angle-grid oracle
        r = f.v @ f.u.T
        assert np.trace(r @ m) >= grid_procrustes_objective_2d(m) - 1e-6

    def test_zero_matrix(self):
        f = svd_small(np.zeros((2, 2)))
        assert np.all(f.sigma == 0)
        assert np.abs(f.reconstruct()).max() == 0
        assert np.allclose(f.u @ f.u.T, np.eye(2), atol=1e-12)

    def test_sigma_descending_random(self):
        rng = np.random.default_rng(5)
        for d in (1, 2, 3):
            for _ in range(20):
                m = rng.standard_normal((d, d))
                f = svd_small(m, rotation_variant=True)
                assert np.all(np.diff(f.sigma) <= 1e-12)
                assert np.abs(f.reconstruct() - m).max() < 1e-12 * max(1, np.abs(m).max())
                assert np.linalg.det(f.u @ f.v.T) > 0


class TestFitRotationsBatch:
    def test_matches_svd_path(self):
        rng = np.random.default_rng(9)
        m2 = rng.standard_normal((40, 2, 2))
        r2 = fit_rotations(m2)
        for k in range(40):
            tr = np.trace(r2[k] @ m2[k])
            assert tr >= grid_procrustes_objective_2d(m2[k], 20001) - 1e-4
            assert abs(np.linalg.det(r2[k]) - 1) < 1e-10

    def test_polar_batch_reconstruction(self):
        rng = np.random.default_rng(13)
        for d in (2, 3):
            p = rng.standard_normal((30, d, d))
            r, s = polar_batch(p)
            assert np.abs(np.einsum("mij,mjk->mik", r, s) - p).max() < 1e-10
            assert np.allclose(np.linalg.det(r), 1.0, atol=1e-10)
            assert np.abs(s - s.transpose(0, 2, 1)).max() < 1e-10


class TestDisplacementStats:
    def test_rest_is_empty(self, small_bar):
        mags, count, measure = displacement_stats(
            small_bar.vertices, small_bar.vertices, small_bar.vertex_areas, 1e-3)
        assert count == 0 and measure == 0.0 and mags.max() == 0.0

    def test_single_moved_vertex(self, small_bar):
        v = small_bar.vertices.copy()
        v[3] += [1.0, 0.0]
        mags, count, measure = displacement_stats(
            v, small_bar.vertices, small_bar.vertex_areas, 1e-3)
        assert count == 1
        assert measure == pytest.approx(small_bar.vertex_areas[3])

    def test_shape_mismatch(self, small_bar):
        with pytest.raises(errors.ShapeMismatchError):
            displacement_stats(small_bar.vertices[:-1], small_bar.vertices,
                               small_bar.vertex_areas, 1e-3)

    def test_nonpositive_threshold(self, small_bar):
        with pytest.raises(errors.NonpositiveThresholdError):
            displacement_stats(small_bar.vertices, small_bar.vertices,
                               small_bar.vertex_areas, 0.0)
