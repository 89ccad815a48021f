"""Procedural test meshes: bars, disks, tet blocks, cloth grids, polylines."""

import numpy as np

from .geometry import build_rest_mesh


def bar_2d(nx=40, ny=8, length=5.0, height=1.0):
    """Planar triangle bar [0, length] x [0, height] with nx x ny cells."""
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                tris.append([a, b, c])
                tris.append([a, c, d])
            else:
                tris.append([a, b, d])
                tris.append([b, c, d])
    return build_rest_mesh(verts, np.array(tris), "triangle")


def disk_2d(n_rings=10, n_sectors=24, radius=1.0):
    """Triangulated disk with a center vertex and concentric rings."""
    verts = [(0.0, 0.0)]
    for r in range(1, n_rings + 1):
        rad = radius * r / n_rings
        for k in range(n_sectors):
            th = 2.0 * np.pi * k / n_sectors
            verts.append((rad * np.cos(th), rad * np.sin(th)))

    def rid(ring, k):
        return 1 + (ring - 1) * n_sectors + (k % n_sectors)

    tris = []
    for k in range(n_sectors):
        tris.append([0, rid(1, k), rid(1, k + 1)])
    for ring in range(1, n_rings):
        for k in range(n_sectors):
            a, b = rid(ring, k), rid(ring, k + 1)
            c, d = rid(ring + 1, k), rid(ring + 1, k + 1)
            tris.append([a, c, d])
            tris.append([a, d, b])
    return build_rest_mesh(np.array(verts), np.array(tris), "triangle")


def bar_3d(nx=20, ny=5, nz=5, length=4.0, height=1.0, depth=1.0):
    """Tetrahedral bar: each grid cube split into six tets (Kuhn split)."""
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    zs = np.linspace(0.0, depth, nz + 1)
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    # six tets around the main diagonal (0,0,0)-(1,1,1) of each cube
    paths = [(1, 2, 4), (1, 4, 2), (2, 1, 4), (2, 4, 1), (4, 1, 2), (4, 2, 1)]
    corners = lambda i, j, k, c: vid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))
    tets = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                for p in paths:
                    c = 0
                    quad = [corners(i, j, k, 0)]
                    for step in p:
                        c |= step
                        quad.append(corners(i, j, k, c))
                    tets.append(quad)
    return build_rest_mesh(verts, np.array(tets), "tet")


def cloth_grid(nx=20, ny=20, size=2.0):
    """Flat cloth grid in the z = 0 plane, embedded in 3D."""
    xs = np.linspace(0.0, size, nx + 1)
    ys = np.linspace(0.0, size, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append([a, b, c])
            tris.append([a, c, d])
    return build_rest_mesh(verts, np.array(tris), "cloth")


def polyline_2d(n=40, length=4.0):
    """Straight polyline along x with n segments."""
    xs = np.linspace(0.0, length, n + 1)
    verts = np.column_stack([xs, np.zeros(n + 1)])
    segs = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return build_rest_mesh(verts, segs, "polyline")


def right_end_handles(mesh, tol=1e-9):
    """Vertex indices on the maximal-x face/end of a mesh."""
    x = mesh.vertices[:, 0]
    return np.where(x >= x.max() - tol)[0]
