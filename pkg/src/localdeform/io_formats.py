"""Deterministic serialization: meshes, sessions, trajectories, results.

All writers use fixed 17-significant-digit float formatting and stable
ordering, so outputs are byte-identical for identical inputs and text
round-trips recover coordinates exactly.
"""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import errors
from .energies import material_from_dict, material_to_dict
from .geometry import build_rest_mesh
from .solver import AffineGroup, ConstraintSet, SolverParams

SCHEMA_DIR = Path(__file__).resolve().parent / "schemas"
SESSION_VERSION = 1


def _fmt(x):
    return format(float(x), ".17g")


def _fmt_row(row):
    return " ".join(_fmt(x) for x in row)


# ---------------------------------------------------------------------------
# mesh readers / writers


def read_obj(path):
    verts, faces, lines = [], [], []
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            toks = raw.split()
            if not toks or toks[0].startswith("#"):
                continue
            if toks[0] == "v":
                if len(toks) < 3:
                    raise errors.ParseError("short vertex line", path, ln)
                verts.append([float(t) for t in toks[1:4]] if len(toks) >= 4
                             else [float(toks[1]), float(toks[2]), 0.0])
            elif toks[0] == "f":
                idx = [int(t.split("/")[0]) - 1 for t in toks[1:]]
                if len(idx) < 3:
                    raise errors.ParseError("face with fewer than 3 vertices", path, ln)
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    faces.append([idx[0], idx[k], idx[k + 1]])
            elif toks[0] == "l":
                idx = [int(t) - 1 for t in toks[1:]]
                for a, b in zip(idx, idx[1:]):
                    lines.append([a, b])
    if not verts:
        raise errors.ParseError("no vertices", path)
    elements = np.array(faces if faces else lines, dtype=np.int64)
    if elements.size == 0:
        raise errors.ParseError("no faces or polylines", path)
    return np.array(verts, dtype=np.float64), elements


def write_obj(path, vertices, elements):
    vertices = np.asarray(vertices, dtype=np.float64)
    with open(path, "w") as fh:
        for row in vertices:
            coords = list(row) + [0.0] * (3 - len(row))
            fh.write("v " + _fmt_row(coords) + "\n")
        tag = "f" if np.asarray(elements).shape[1] == 3 else "l"
        for el in np.asarray(elements):
            fh.write(tag + " " + " ".join(str(int(i) + 1) for i in el) + "\n")


def read_off(path):
    with open(path) as fh:
        toks = []
        for ln, raw in enumerate(fh, 1):
            t = raw.split("#")[0].split()
            if t:
                toks.append((ln, t))
    if not toks or toks[0][1][0].upper() != "OFF":
        raise errors.ParseError("missing OFF header", path, 1)
    header = toks[0][1][1:] if len(toks[0][1]) > 1 else toks[1][1]
    body = toks[1:] if len(toks[0][1]) > 1 else toks[2:]
    nv, nf = int(header[0]), int(header[1])
    flat = [(ln, x) for ln, t in body for x in t]
    pos = 0
    verts = []
    for _ in range(nv):
        verts.append([float(flat[pos + i][1]) for i in range(3)])
        pos += 3
    faces = []
    for _ in range(nf):
        ln, cnt = flat[pos]
        cnt = int(cnt)
        idx = [int(flat[pos + 1 + i][1]) for i in range(cnt)]
        pos += 1 + cnt
        for k in range(1, cnt - 1):
            faces.append([idx[0], idx[k], idx[k + 1]])
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64)


def write_off(path, vertices, elements):
    vertices = np.asarray(vertices, dtype=np.float64)
    elements = np.asarray(elements)
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{len(vertices)} {len(elements)} 0\n")
        for row in vertices:
            coords = list(row) + [0.0] * (3 - len(row))
            fh.write(_fmt_row(coords) + "\n")
        for el in elements:
            fh.write(f"{len(el)} " + " ".join(str(int(i)) for i in el) + "\n")


def read_node_ele(path):
    """TetGen-style .node/.ele pair; `path` may point at either file."""
    base = str(path)
    for suffix in (".node", ".ele"):
        if base.endswith(suffix):
            base = base[: -len(suffix)]
    node_path, ele_path = base + ".node", base + ".ele"
    for p in (node_path, ele_path):
        if not os.path.exists(p):
            raise errors.IoError(f"missing {p}")

    def tokens(p):
        with open(p) as fh:
            for ln, raw in enumerate(fh, 1):
                t = raw.split("#")[0].split()
                if t:
                    yield ln, t

    node_rows = list(tokens(node_path))
    ln, header = node_rows[0]
    n_pts = int(header[0])
    rows = node_rows[1:1 + n_pts]
    if len(rows) < n_pts:
        raise errors.ParseError(f"expected {n_pts} points", node_path, ln)
    ids = [int(t[0]) for _, t in rows]
    verts = np.array([[float(x) for x in t[1:4]] for _, t in rows])
    offset = min(ids)

    ele_rows = list(tokens(ele_path))
    ln, header = ele_rows[0]
    n_tets, nodes_per = int(header[0]), int(header[1])
    if nodes_per != 4:
        raise errors.UnsupportedFeatureError("only linear 4-node tets supported")
    rows = ele_rows[1:1 + n_tets]
    if len(rows) < n_tets:
        raise errors.ParseError(f"expected {n_tets} tets", ele_path, ln)
    tets = np.array([[int(x) - offset for x in t[1:5]] for _, t in rows], dtype=np.int64)
    return verts, tets


def write_node_ele(path, vertices, elements):
    base = str(path)
    for suffix in (".node", ".ele"):
        if base.endswith(suffix):
            base = base[: -len(suffix)]
    vertices = np.asarray(vertices, dtype=np.float64)
    with open(base + ".node", "w") as fh:
        fh.write(f"{len(vertices)} 3 0 0\n")
        for i, row in enumerate(vertices):
            fh.write(f"{i} " + _fmt_row(row) + "\n")
    with open(base + ".ele", "w") as fh:
        fh.write(f"{len(elements)} 4 0\n")
        for i, el in enumerate(np.asarray(elements)):
            fh.write(f"{i} " + " ".join(str(int(x)) for x in el) + "\n")


def read_polyline_json(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise errors.ParseError(str(exc), path, exc.lineno) from exc
    try:
        verts = np.array(doc["vertices"], dtype=np.float64)
        segs = np.array(doc["segments"], dtype=np.int64)
    except KeyError as exc:
        raise errors.ParseError(f"missing key {exc}", path) from exc
    return verts, segs


def write_polyline_json(path, vertices, elements):
    doc = {"vertices": [[float(_fmt(x)) for x in row] for row in np.asarray(vertices)],
           "segments": [[int(a), int(b)] for a, b in np.asarray(elements)]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


_FORMATS = {
    ".obj": (read_obj, write_obj),
    ".off": (read_off, write_off),
    ".node": (read_node_ele, write_node_ele),
    ".ele": (read_node_ele, write_node_ele),
    ".json": (read_polyline_json, write_polyline_json),
}


def mesh_format(path):
    ext = Path(path).suffix.lower()
    if ext not in _FORMATS:
        raise errors.UnsupportedFeatureError(f"unsupported mesh format {ext!r}")
    return ext


def read_mesh(path, kind):
    """Read a mesh file and build the RestMesh for the given kind."""
    ext = mesh_format(path)
    verts, elements = _FORMATS[ext][0](path)
    if kind == "triangle":
        if verts.shape[1] == 3:
            if np.abs(verts[:, 2]).max() > 1e-12 * (1 + np.abs(verts).max()):
                raise errors.UnsupportedFeatureError(
                    "kind 'triangle' requires a planar mesh (z = 0); use kind 'cloth'")
            verts = verts[:, :2]
    elif kind == "cloth":
        if verts.shape[1] == 2:
            verts = np.column_stack([verts, np.zeros(len(verts))])
    elif kind == "polyline":
        if verts.shape[1] == 3 and np.abs(verts[:, 2]).max() <= 1e-12 * (1 + np.abs(verts).max()):
            verts = verts[:, :2]
    return build_rest_mesh(verts, elements, kind)


def write_mesh(path, vertices, elements, fmt=None):
    ext = fmt or mesh_format(path)
    _FORMATS[ext][1](path, vertices, elements)


# ---------------------------------------------------------------------------
# session / trajectory documents


def _load_schema(name):
    with open(SCHEMA_DIR / name) as fh:
        return json.load(fh)


def validate_document(doc, schema_name):
    import jsonschema
    try:
        jsonschema.validate(doc, _load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        raise errors.SchemaError(
            f"{schema_name}: {exc.message} at {'/'.join(str(p) for p in exc.absolute_path)}"
        ) from exc


@dataclass
class SessionDocument:
    """Validated session: mesh reference, material, locality, constraints."""

    mesh_ref: str
    kind: str
    material: dict
    locality: dict
    solver: dict = field(default_factory=dict)
    regularizer: str = "scl1"
    constraints: dict = field(default_factory=lambda: {"handles": [], "affineGroups": []})
    base_dir: str = "."

    @classmethod
    def from_dict(cls, doc, base_dir="."):
        validate_document(doc, "session.schema.json")
        return cls(mesh_ref=doc["mesh"], kind=doc["kind"], material=doc["material"],
                   locality=doc["locality"], solver=doc.get("solver", {}),
                   regularizer=doc.get("regularizer", "scl1"),
                   constraints=doc.get("constraints", {"handles": [], "affineGroups": []}),
                   base_dir=str(base_dir))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise errors.ParseError(str(exc), path, exc.lineno) from exc
        return cls.from_dict(doc, base_dir=Path(path).parent)

    def to_dict(self):
        doc = {"version": SESSION_VERSION, "mesh": self.mesh_ref, "kind": self.kind,
               "material": self.material, "locality": self.locality,
               "regularizer": self.regularizer,
               "constraints": self.constraints}
        if self.solver:
            doc["solver"] = self.solver
        return doc

    def save(self, path):
        doc = self.to_dict()
        validate_document(doc, "session.schema.json")
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")

    def load_mesh(self):
        mesh_path = Path(self.base_dir) / self.mesh_ref
        return read_mesh(mesh_path, self.kind)

    def solver_params(self):
        s = self.solver
        return SolverParams(
            material=material_from_dict(self.material),
            w=float(self.locality["w"]), s=float(self.locality["s"]),
            rho=s.get("rho"), gamma=s.get("gamma"),
            max_iters=int(s.get("maxIters", 2000)),
            tol_primal=float(s.get("tolPrimal", 1e-4)),
            tol_dual=float(s.get("tolDual", 1e-4)),
            iters_per_frame=int(s.get("itersPerFrame", 10)),
            regularizer=self.regularizer,
            roi_threshold=float(s.get("roiThreshold", 1e-3)),
            threads=int(s.get("threads", 1)))

    def constraint_set(self, mesh):
        handles = {}
        for h in self.constraints.get("handles", []):
            handles[int(h["vertex"])] = np.asarray(h["target"], dtype=np.float64)
        groups = []
        for g in self.constraints.get("affineGroups", []):
            if g["mode"] == "prescribed":
                groups.append(AffineGroup(
                    vertices=tuple(int(i) for i in g["vertices"]), mode="prescribed",
                    matrix=np.asarray(g["matrix"], dtype=np.float64),
                    translation=np.asarray(g["translation"], dtype=np.float64)))
            else:
                groups.append(AffineGroup(
                    vertices=tuple(int(i) for i in g["vertices"]), mode="free"))
        cs = ConstraintSet(handles=handles, affine_groups=groups)
        cs.validate(mesh)
        return cs


def constraints_to_doc(constraints, embed):
    handles = [{"vertex": int(i),
                "target": [float(x) for x in np.asarray(t).reshape(embed)]}
               for i, t in sorted(constraints.handles.items())]
    groups = []
    for g in constraints.affine_groups:
        entry = {"vertices": [int(i) for i in g.vertices], "mode": g.mode}
        if g.mode == "prescribed":
            entry["matrix"] = [[float(x) for x in row] for row in np.asarray(g.matrix)]
            entry["translation"] = [float(x) for x in np.asarray(g.translation)]
        groups.append(entry)
    return {"handles": handles, "affineGroups": groups}


@dataclass
class TrajectoryDocument:
    """Keyframed handle targets with linear interpolation between times."""

    keyframes: list                      # [(time, {vertex: target}), ...]
    reset_rest_each_step: bool = False

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise errors.ParseError(str(exc), path, exc.lineno) from exc
        validate_document(doc, "trajectory.schema.json")
        frames = []
        for kf in doc["keyframes"]:
            frames.append((float(kf["time"]),
                           {int(h["vertex"]): np.asarray(h["target"], dtype=np.float64)
                            for h in kf["handles"]}))
        times = [t for t, _ in frames]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise errors.SchemaError("trajectory keyframe times must be strictly increasing")
        return cls(keyframes=frames,
                   reset_rest_each_step=bool(doc.get("resetRestEachStep", False)))

    def to_dict(self):
        return {"version": SESSION_VERSION, "interpolation": "linear",
                "resetRestEachStep": self.reset_rest_each_step,
                "keyframes": [
                    {"time": float(t),
                     "handles": [{"vertex": int(i), "target": [float(x) for x in tgt]}
                                 for i, tgt in sorted(targets.items())]}
                    for t, targets in self.keyframes]}

    def save(self, path):
        doc = self.to_dict()
        validate_document(doc, "trajectory.schema.json")
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")

    def sample(self, t):
        """Linearly interpolated handle targets at time t."""
        frames = self.keyframes
        if t <= frames[0][0]:
            return dict(frames[0][1])
        if t >= frames[-1][0]:
            return dict(frames[-1][1])
        for (t0, a), (t1, b) in zip(frames, frames[1:]):
            if t0 <= t <= t1:
                alpha = (t - t0) / (t1 - t0)
                out = {}
                for i in set(a) | set(b):
                    pa = a.get(i, b.get(i))
                    pb = b.get(i, a.get(i))
                    out[i] = (1 - alpha) * pa + alpha * pb
                return out
        raise AssertionError("unreachable")

    def sample_times(self, rate):
        """Uniform sample times at `rate` samples per time unit, keyframe-aligned at ends."""
        t0, t1 = self.keyframes[0][0], self.keyframes[-1][0]
        n = max(1, int(round((t1 - t0) * rate))) + 1
        return [t0 + (t1 - t0) * k / (n - 1) if n > 1 else t0 for k in range(n)]


# ---------------------------------------------------------------------------
# results


def write_result(out_base, result, mesh, fmt=".obj", include_displacement=True):
    """Write the deformed mesh plus the displacement sidecar table.

    out_base is a path without extension; the mesh goes to out_base + fmt
    and the sidecar to out_base + "_displacement.csv" with columns
    vertex id, displacement magnitude, and the in-ROI flag at the result's
    threshold.
    """
    out_base = str(out_base)
    try:
        write_mesh(out_base + fmt, result.v, mesh.elements, fmt)
    except OSError as exc:
        raise errors.IoError(str(exc)) from exc
    paths = {"mesh": out_base + fmt}
    if include_displacement:
        sidecar = out_base + "_displacement.csv"
        try:
            with open(sidecar, "w") as fh:
                fh.write("vertex,displacement,in_roi\n")
                for i, mag in enumerate(result.displacement):
                    flag = 1 if mag > result.roi_threshold else 0
                    fh.write(f"{i},{_fmt(mag)},{flag}\n")
        except OSError as exc:
            raise errors.IoError(str(exc)) from exc
        paths["sidecar"] = sidecar
    return paths


def read_sidecar(path):
    """Parse a displacement sidecar back into (ids, magnitudes, flags)."""
    ids, mags, flags = [], [], []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("vertex"):
            raise errors.ParseError("bad sidecar header", path, 1)
        for ln, raw in enumerate(fh, 2):
            if not raw.strip():
                continue
            a, b, c = raw.strip().split(",")
            ids.append(int(a))
            mags.append(float(b))
            flags.append(int(c))
    return np.array(ids), np.array(mags), np.array(flags)
