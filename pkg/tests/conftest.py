import numpy as np
import pytest

from localdeform import meshes

ACCEPTANCE_RESULTS = []


def record_criterion(name, passed, detail=""):
    ACCEPTANCE_RESULTS.append((name, bool(passed), detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if ok else "FAIL"
        suffix = f"  [{detail}]" if detail else ""
        terminalreporter.write_line(f"{status}  {name}{suffix}")


@pytest.fixture(scope="session")
def bar40x8():
    return meshes.bar_2d(40, 8, 5.0, 1.0)


@pytest.fixture(scope="session")
def small_bar():
    return meshes.bar_2d(16, 4, 4.0, 1.0)


@pytest.fixture(scope="session")
def small_disk():
    return meshes.disk_2d(8, 18, 1.0)


@pytest.fixture(scope="session")
def small_tet_bar():
    return meshes.bar_3d(6, 3, 3, 2.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def small_cloth():
    return meshes.cloth_grid(8, 8, 2.0)


@pytest.fixture(scope="session")
def small_polyline():
    return meshes.polyline_2d(20, 4.0)


def rest_handles(mesh, idx):
    return {int(i): mesh.vertices[i].copy() for i in idx}


def offset_handles(mesh, idx, offset):
    offset = np.asarray(offset, dtype=np.float64)
    return {int(i): mesh.vertices[i] + offset for i in idx}
