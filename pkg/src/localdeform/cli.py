"""Headless command line: solve, animate, bench, compare-regularizers, serve.

Exit codes: 0 success/converged, 2 solve hit the iteration budget without
converging, 1 runtime error, 64 usage error.
"""

import json
import logging
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import errors, meshes
from .energies import Acap, Arap, ClothArap, NeoHookean, PolylineArap, material_to_dict
from .geometry import build_rest_mesh
from .io_formats import (SessionDocument, TrajectoryDocument, constraints_to_doc,
                         mesh_format, write_mesh, write_result)
from .report import (build_report, render_bench_figure, render_report_figures,
                     write_report)
from .solver import (ConstraintSet, SolverParams, admm_iterate, init_state,
                     solve, validate_params)

log = logging.getLogger("localdeform")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2
EXIT_USAGE = 64

_ENERGY_DEFAULTS = {
    "arap": Arap(),
    "acap": Acap(),
    "nh": NeoHookean(mu=1.0, lam=1.0),
    "cloth": ClothArap(bending_stiffness=1e-3, strain_limit=0.1),
    "polyline": PolylineArap(),
}


def _setup_logging():
    level = os.environ.get("LOCALDEFORM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _apply_overrides(params, regularizer, energy, iters, tol, threads):
    kw = {}
    if regularizer:
        kw["regularizer"] = regularizer
    if energy:
        kw["material"] = _ENERGY_DEFAULTS[energy]
    if iters:
        kw["max_iters"] = iters
    if tol:
        kw["tol_primal"] = tol
        kw["tol_dual"] = tol
    if threads:
        kw["threads"] = threads
    if not kw:
        return params
    from dataclasses import replace
    return replace(params, **kw)


def _params_echo(params, mesh, seed=None):
    v = validate_params(params, mesh)
    echo = {
        "material": material_to_dict(v.material),
        "w": v.locality.w, "s": v.locality.s, "rho": v.rho,
        "gamma": v.gamma, "maxIters": v.max_iters,
        "tolPrimal": v.tol_primal, "tolDual": v.tol_dual,
        "regularizer": v.regularizer, "roiThreshold": v.roi_threshold,
        "threads": v.threads,
    }
    if seed is not None:
        echo["seed"] = seed
    return echo


@click.group()
def cli():
    """Localized shape deformation: SC-L1-regularized elasticity via ADMM."""
    _setup_logging()


@cli.command("solve")
@click.option("--session", "session_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--regularizer", type=click.Choice(["scl1", "l21", "none"]), default=None)
@click.option("--energy", type=click.Choice(["arap", "acap", "nh", "cloth", "polyline"]), default=None)
@click.option("--iters", type=int, default=None, help="Override the iteration budget.")
@click.option("--tol", type=float, default=None, help="Override both residual tolerances.")
@click.option("--threads", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--report/--no-report", default=False,
              help="Write report.json plus convergence/displacement figures.")
def cmd_solve(session_path, out_dir, regularizer, energy, iters, tol, threads, seed, report):
    """Solve a session document and write the deformed mesh + sidecar."""
    session = SessionDocument.load(session_path)
    mesh = session.load_mesh()
    params = _apply_overrides(session.solver_params(), regularizer, energy,
                              iters, tol, threads)
    constraints = session.constraint_set(mesh)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = solve(mesh, constraints, params)
    fmt = mesh_format(Path(session.base_dir) / session.mesh_ref)
    paths = write_result(out / "deformed", result, mesh, fmt=fmt)
    log.info("solved %s: %d iterations, converged=%s, roi=%d",
             session_path, result.iterations, result.converged, result.roi_count)
    if report:
        doc = build_report("solve", result, _params_echo(params, mesh, seed),
                           extra={"vertexCount": mesh.n_vertices})
        write_report(out / "report.json", doc)
        render_report_figures(out, doc, result)
    click.echo(json.dumps({"converged": result.converged,
                           "iterations": result.iterations,
                           "roiCount": result.roi_count,
                           "roiMeasure": result.roi_measure,
                           "outputs": paths}, sort_keys=True))
    sys.exit(EXIT_OK if result.converged else EXIT_NOT_CONVERGED)


@cli.command("animate")
@click.option("--session", "session_path", required=True, type=click.Path(exists=True))
@click.option("--trajectory", "trajectory_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--rate", type=float, default=1.0, show_default=True,
              help="Samples per trajectory time unit.")
@click.option("--iters-per-frame", type=int, default=None,
              help="ADMM iterations per frame (defaults to the session value).")
@click.option("--regularizer", type=click.Choice(["scl1", "l21", "none"]), default=None)
@click.option("--energy", type=click.Choice(["arap", "acap", "nh", "cloth", "polyline"]), default=None)
@click.option("--threads", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--report/--no-report", default=False)
def cmd_animate(session_path, trajectory_path, out_dir, rate, iters_per_frame,
                regularizer, energy, threads, seed, report):
    """Sample a handle trajectory into warm-started frames."""
    session = SessionDocument.load(session_path)
    trajectory = TrajectoryDocument.load(trajectory_path)
    mesh = session.load_mesh()
    params = _apply_overrides(session.solver_params(), regularizer, energy,
                              None, None, threads)
    constraints = session.constraint_set(mesh)
    vparams = validate_params(params, mesh)
    per_frame = iters_per_frame or vparams.iters_per_frame

    # the handle set stays fixed across frames so the factorization is reused
    handle_set = set(constraints.handles)
    for _, targets in trajectory.keyframes:
        handle_set.update(targets)
    base_targets = {i: constraints.handles.get(i, mesh.vertices[i].copy())
                    for i in sorted(handle_set)}

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmt = mesh_format(Path(session.base_dir) / session.mesh_ref)
    times = trajectory.sample_times(rate)
    state = None
    result = None
    current_mesh = mesh
    for frame, t in enumerate(times):
        targets = dict(base_targets)
        targets.update(trajectory.sample(t))
        cons = ConstraintSet(handles=targets, affine_groups=constraints.affine_groups)
        result = solve(current_mesh, cons, params, warm_start=state, iters=per_frame)
        state = result.state
        write_result(out / f"frame_{frame:04d}", result, current_mesh, fmt=fmt)
        if trajectory.reset_rest_each_step:
            current_mesh = build_rest_mesh(result.v, current_mesh.elements,
                                           current_mesh.kind)
            state = None
    if report and result is not None:
        doc = build_report("animate", result, _params_echo(params, mesh, seed),
                           extra={"vertexCount": mesh.n_vertices, "frames": len(times)})
        write_report(out / "report.json", doc)
        render_report_figures(out, doc, result)
    click.echo(json.dumps({"frames": len(times),
                           "factorizations": (state or result.state).factorization_count},
                          sort_keys=True))
    sys.exit(EXIT_OK)


@cli.command("bench")
@click.option("--sizes", default="1000,4000", show_default=True,
              help="Comma list of approximate vertex counts.")
@click.option("--energy", type=click.Choice(["arap", "acap", "nh"]), default="arap",
              show_default=True)
@click.option("--iters", type=int, default=100, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--report/--no-report", default=True, show_default=True)
def cmd_bench(sizes, energy, iters, out_dir, threads, seed, report):
    """Per-iteration timings against mesh size; checks factorization reuse."""
    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    size_list = [int(s) for s in sizes.split(",") if s.strip()]
    rows = []
    for target in size_list:
        ny = max(4, int(np.sqrt(target / 5)))
        nx = max(4, int(np.ceil(target / (ny + 1))) - 1)
        mesh = meshes.bar_2d(nx, ny, 5.0, 1.0)
        handles = meshes.right_end_handles(mesh)
        jitter = 0.05 * rng.standard_normal(2)
        offset = np.array([0.5, 0.0]) + jitter
        cons = ConstraintSet(handles={int(i): mesh.vertices[i] + offset for i in handles})
        mat = {"arap": Arap(), "acap": Acap(), "nh": NeoHookean(1.0, 1.0)}[energy]
        params = SolverParams(material=mat, w=2.0, s=0.1, max_iters=iters,
                              tol_primal=1e-12, tol_dual=1e-12, threads=threads)
        t0 = time.perf_counter()
        result = solve(mesh, cons, params, iters=iters)
        elapsed = time.perf_counter() - t0
        per_iter_ms = 1e3 * elapsed / max(result.iterations, 1)
        if result.factorization_count != 1:
            raise errors.LocalDeformError(
                f"expected one factorization, saw {result.factorization_count}")
        rows.append((mesh.n_vertices, result.iterations, per_iter_ms,
                     result.factorization_count))
        log.info("bench %d vertices: %.3f ms/iter", mesh.n_vertices, per_iter_ms)
    csv_path = out / "bench_timings.csv"
    with open(csv_path, "w") as fh:
        fh.write("vertices,iterations,ms_per_iteration,factorizations\n")
        for row in rows:
            fh.write(f"{row[0]},{row[1]},{row[2]:.6f},{row[3]}\n")
    if report:
        render_bench_figure(out, [r[0] for r in rows], [r[2] for r in rows])
    click.echo(json.dumps({"table": str(csv_path),
                           "rows": [{"vertices": r[0], "msPerIteration": r[2]}
                                    for r in rows]}, sort_keys=True))
    sys.exit(EXIT_OK)


def handle_edge_strain(mesh, v, vertex):
    """Largest relative length change among edges incident to a vertex."""
    sl = slice(mesh.owner_ptr[vertex], mesh.owner_ptr[vertex + 1])
    p, q = mesh.inst_p[sl], mesh.inst_q[sl]
    spokes = (p == vertex) | (q == vertex)
    lens = np.linalg.norm(v[p] - v[q], axis=1)[spokes]
    rest = np.linalg.norm(mesh.inst_rest[sl], axis=1)[spokes]
    return float(np.max(np.abs(lens - rest) / rest))


def compare_regularizers(mesh, constraints, params, handle_vertices,
                         roi_match_tol=0.05, max_bisect=40):
    """SC-L1 vs group-lasso comparison at matched ROI size.

    Runs the SC-L1 solve, then bisects the group-lasso locality weight until
    its ROI count matches within roi_match_tol, and reports the worst edge
    strain over the handle vertices for both. Returns a dict of metrics.
    """
    from dataclasses import replace
    if np.isscalar(handle_vertices):
        handle_vertices = [handle_vertices]
    res_scl1 = solve(mesh, constraints, replace(params, regularizer="scl1"))
    target_roi = res_scl1.roi_count

    def roi_for(w):
        p = replace(params, regularizer="l21", w=w, rho=None)
        return solve(mesh, constraints, p), p

    lo, hi = None, None
    w = params.w
    res_l21, _ = roi_for(w)
    # group lasso pulls everything toward rest: larger w shrinks the ROI
    for _ in range(30):
        if res_l21.roi_count > target_roi:
            lo = w
            w *= 2.0
        else:
            hi = w
            w *= 0.5
        res_l21, _ = roi_for(w)
        if lo is not None and hi is not None:
            break
    if lo is not None and hi is not None:
        for _ in range(max_bisect):
            mid = 0.5 * (lo + hi)
            res_mid, _ = roi_for(mid)
            if abs(res_mid.roi_count - target_roi) <= roi_match_tol * max(target_roi, 1):
                res_l21 = res_mid
                break
            if res_mid.roi_count > target_roi:
                lo = mid
            else:
                hi = mid
            res_l21 = res_mid
    def max_strain(res):
        return max(handle_edge_strain(mesh, res.v, int(i)) for i in handle_vertices)

    return {
        "scl1": {"roi": res_scl1.roi_count, "handleStrain": max_strain(res_scl1)},
        "l21": {"roi": res_l21.roi_count, "handleStrain": max_strain(res_l21)},
        "results": (res_scl1, res_l21),
    }


@cli.command("compare-regularizers")
@click.option("--session", "session_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--handle", "handle_vertex", type=int, default=None,
              help="Vertex at which edge strain is measured (defaults to the first handle).")
@click.option("--seed", type=int, default=None)
def cmd_compare(session_path, out_dir, handle_vertex, seed):
    """Solve with SC-L1 and ROI-matched group lasso; report strain metrics."""
    session = SessionDocument.load(session_path)
    mesh = session.load_mesh()
    params = session.solver_params()
    constraints = session.constraint_set(mesh)
    vertices = [handle_vertex] if handle_vertex is not None \
        else sorted(constraints.handles)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmt = mesh_format(Path(session.base_dir) / session.mesh_ref)
    metrics = compare_regularizers(mesh, constraints, params, vertices)
    res_scl1, res_l21 = metrics.pop("results")
    write_result(out / "scl1", res_scl1, mesh, fmt=fmt)
    write_result(out / "l21", res_l21, mesh, fmt=fmt)
    metrics["handleVertices"] = [int(i) for i in vertices]
    with open(out / "comparison.json", "w") as fh:
        json.dump(metrics, fh, indent=1, sort_keys=True)
        fh.write("\n")
    click.echo(json.dumps(metrics, sort_keys=True))
    sys.exit(EXIT_OK)


@cli.command("serve")
@click.option("--port", type=int, default=8700, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--frontend", "frontend_dir", type=click.Path(), default=None,
              help="Optional static directory for the web editor build.")
def cmd_serve(port, host, frontend_dir):
    """Run the live session service (WebSocket + optional static editor)."""
    import uvicorn

    from .service import create_app

    app = create_app(frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


def main():
    try:
        cli.main(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except SystemExit:
        raise
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(EXIT_USAGE)
    except errors.LocalDeformError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    except OSError as exc:
        click.echo(f"io error: {exc}", err=True)
        sys.exit(EXIT_ERROR)


if __name__ == "__main__":
    main()
