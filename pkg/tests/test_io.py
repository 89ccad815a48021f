import json
from pathlib import Path

import numpy as np
import pytest

from localdeform import errors, meshes
from localdeform.energies import Arap
from localdeform.io_formats import (SessionDocument, TrajectoryDocument,
                                    read_mesh, read_node_ele, read_obj,
                                    read_off, read_polyline_json, read_sidecar,
                                    write_mesh, write_node_ele, write_obj,
                                    write_off, write_polyline_json,
                                    write_result)
from localdeform.solver import ConstraintSet, SolverParams, solve

from conftest import offset_handles, rest_handles

CUBE_OBJ = """\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 2 3
f 1 3 4
f 5 7 6
f 5 8 7
f 1 6 2
f 1 5 6
f 2 7 3
f 2 6 7
f 3 8 4
f 3 7 8
f 4 5 1
f 4 8 5
"""


class TestMeshFormats:
    def test_obj_cube(self, tmp_path):
        p = tmp_path / "cube.obj"
        p.write_text(CUBE_OBJ)
        v, f = read_obj(p)
        assert v.shape == (8, 3)
        assert f.shape == (12, 3)

    def test_obj_quad_triangulated(self, tmp_path):
        p = tmp_path / "quad.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        v, f = read_obj(p)
        assert f.shape == (2, 3)

    def test_node_ele_single_tet(self, tmp_path):
        (tmp_path / "t.node").write_text(
            "4 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 1 0\n3 0 0 1\n")
        (tmp_path / "t.ele").write_text("1 4 0\n0 0 1 2 3\n")
        v, t = read_node_ele(tmp_path / "t.node")
        assert v.shape == (4, 3)
        assert t.shape == (1, 4)
        assert t.min() == 0

    def test_node_ele_one_based(self, tmp_path):
        (tmp_path / "t.node").write_text(
            "4 3 0 0\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n")
        (tmp_path / "t.ele").write_text("1 4 0\n1 1 2 3 4\n")
        v, t = read_node_ele(tmp_path / "t.ele")
        assert t.min() == 0 and t.max() == 3

    @pytest.mark.parametrize("writer,reader,ext", [
        (write_obj, read_obj, ".obj"),
        (write_off, read_off, ".off"),
        (write_node_ele, read_node_ele, ".node"),
        (write_polyline_json, read_polyline_json, ".json"),
    ])
    def test_round_trip_exact(self, tmp_path, writer, reader, ext):
        rng = np.random.default_rng(41)
        if ext == ".node":
            verts = rng.standard_normal((5, 3)) * np.pi
            elements = np.array([[0, 1, 2, 3], [1, 2, 3, 4]])
        elif ext == ".json":
            verts = rng.standard_normal((5, 2)) * np.e
            elements = np.array([[0, 1], [1, 2], [2, 3], [3, 4]])
        else:
            verts = rng.standard_normal((6, 3)) * 1.7
            elements = np.array([[0, 1, 2], [2, 3, 4], [3, 4, 5]])
        p = tmp_path / ("mesh" + ext)
        writer(p, verts, elements)
        v2, e2 = reader(p)
        # 17-significant-digit text recovers doubles exactly
        assert np.array_equal(v2[:, :verts.shape[1]], verts)
        assert np.array_equal(e2, elements)

    def test_writers_byte_deterministic(self, tmp_path):
        rng = np.random.default_rng(43)
        verts = rng.standard_normal((6, 3))
        elements = np.array([[0, 1, 2], [3, 4, 5]])
        p1, p2 = tmp_path / "a.obj", tmp_path / "b.obj"
        write_obj(p1, verts, elements)
        write_obj(p2, verts, elements)
        assert p1.read_bytes() == p2.read_bytes()

    def test_parse_error_has_line(self, tmp_path):
        p = tmp_path / "bad.obj"
        p.write_text("v 0 0 0\nf 1 2\n")
        with pytest.raises(errors.ParseError) as exc:
            read_obj(p)
        assert exc.value.line == 2

    def test_planar_check_for_triangle_kind(self, tmp_path):
        p = tmp_path / "bent.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0.5\nf 1 2 3\n")
        with pytest.raises(errors.UnsupportedFeatureError):
            read_mesh(p, "triangle")
        mesh = read_mesh(p, "cloth")
        assert mesh.embed == 3

    def test_unsupported_extension(self, tmp_path):
        with pytest.raises(errors.UnsupportedFeatureError):
            read_mesh(tmp_path / "m.ply", "triangle")


class TestResultWriting:
    @pytest.fixture()
    def solved(self, small_bar):
        idx = meshes.right_end_handles(small_bar)
        cons = ConstraintSet(handles=offset_handles(small_bar, idx, [0.5, 0.0]))
        return solve(small_bar, cons, SolverParams(material=Arap(), w=2.0, s=0.1))

    def test_rest_result_empty_roi(self, tmp_path, small_bar):
        idx = meshes.right_end_handles(small_bar)
        cons = ConstraintSet(handles=rest_handles(small_bar, idx))
        res = solve(small_bar, cons, SolverParams(material=Arap(), w=2.0, s=0.1),
                    iters=20)
        paths = write_result(tmp_path / "out", res, small_bar)
        ids, mags, flags = read_sidecar(paths["sidecar"])
        assert flags.sum() == 0
        assert mags.max() < 1e-9

    def test_single_moved_vertex_one_row(self, tmp_path, small_bar):
        from localdeform.solver import DeformResult, SolverState
        v = small_bar.vertices.copy()
        v[7] += [0.01, 0.0]
        mags = np.linalg.norm(v - small_bar.vertices, axis=1)
        res = DeformResult(v=v, displacement=mags, roi_count=1,
                           roi_measure=float(small_bar.vertex_areas[7]),
                           roi_threshold=1e-3, iterations=0, residuals={},
                           converged=True, wall_time=0.0, factorization_count=0,
                           state=None)
        paths = write_result(tmp_path / "out", res, small_bar)
        ids, mags2, flags = read_sidecar(paths["sidecar"])
        assert flags.sum() == 1
        assert ids[flags == 1][0] == 7

    def test_sidecar_recount_matches(self, tmp_path, solved, small_bar):
        # recount from the exported file equals the result's ROI stats
        paths = write_result(tmp_path / "out", solved, small_bar)
        ids, mags, flags = read_sidecar(paths["sidecar"])
        assert flags.sum() == solved.roi_count
        recount = int((mags > solved.roi_threshold).sum())
        assert recount == solved.roi_count

    def test_deformed_mesh_round_trip(self, tmp_path, solved, small_bar):
        paths = write_result(tmp_path / "out", solved, small_bar)
        v, f = read_obj(paths["mesh"])
        assert np.array_equal(v[:, :2], solved.v)


class TestSessionDocuments:
    def good_doc(self):
        return {
            "version": 1, "mesh": "bar.obj", "kind": "triangle",
            "material": {"type": "arap"},
            "locality": {"w": 2.0, "s": 0.1},
            "constraints": {"handles": [{"vertex": 0, "target": [0.0, 0.0]}]},
        }

    def test_load_and_params(self, tmp_path, small_bar):
        write_mesh(tmp_path / "bar.obj", small_bar.vertices, small_bar.elements)
        doc = self.good_doc()
        (tmp_path / "s.json").write_text(json.dumps(doc))
        session = SessionDocument.load(tmp_path / "s.json")
        mesh = session.load_mesh()
        assert mesh.n_vertices == small_bar.n_vertices
        params = session.solver_params()
        assert params.w == 2.0 and params.s == 0.1

    def test_missing_locality_rejected(self):
        doc = self.good_doc()
        del doc["locality"]
        with pytest.raises(errors.SchemaError):
            SessionDocument.from_dict(doc)

    def test_missing_w_rejected(self):
        doc = self.good_doc()
        del doc["locality"]["w"]
        with pytest.raises(errors.SchemaError):
            SessionDocument.from_dict(doc)

    def test_unknown_field_rejected(self):
        doc = self.good_doc()
        doc["surprise"] = 1
        with pytest.raises(errors.SchemaError):
            SessionDocument.from_dict(doc)
        doc = self.good_doc()
        doc["locality"]["extra"] = 2
        with pytest.raises(errors.SchemaError):
            SessionDocument.from_dict(doc)

    def test_save_round_trip(self, tmp_path):
        doc = self.good_doc()
        session = SessionDocument.from_dict(doc)
        session.save(tmp_path / "s.json")
        again = SessionDocument.load(tmp_path / "s.json")
        assert again.to_dict() == session.to_dict()


class TestTrajectoryDocuments:
    def test_strictly_increasing_times(self, tmp_path):
        doc = {"version": 1, "keyframes": [
            {"time": 0.0, "handles": [{"vertex": 0, "target": [0, 0]}]},
            {"time": 0.0, "handles": [{"vertex": 0, "target": [1, 0]}]},
        ]}
        p = tmp_path / "t.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(errors.SchemaError):
            TrajectoryDocument.load(p)

    def test_linear_sampling(self, tmp_path):
        doc = {"version": 1, "keyframes": [
            {"time": 0.0, "handles": [{"vertex": 3, "target": [0.0, 0.0]}]},
            {"time": 2.0, "handles": [{"vertex": 3, "target": [1.0, 0.0]}]},
        ]}
        p = tmp_path / "t.json"
        p.write_text(json.dumps(doc))
        traj = TrajectoryDocument.load(p)
        mid = traj.sample(1.0)
        assert np.allclose(mid[3], [0.5, 0.0])
        times = traj.sample_times(rate=2.0)
        assert times == [0.0, 0.5, 1.0, 1.5, 2.0]
