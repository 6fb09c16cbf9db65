"""Two-dimensional triangulations with oriented edge enumeration.

Edges carry a global orientation from the lower to the higher vertex index.
Each triangle stores its vertices counterclockwise and, for its local edges
``(v0, v1), (v1, v2), (v2, v0)``, the global edge index together with a sign
that is +1 when the local traversal agrees with the global orientation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "Mesh",
    "MeshFormatError",
    "build_mesh",
    "gen_square",
    "gen_lshape",
    "read_triangle",
    "write_triangle",
    "mesh_stats",
]

LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


class MeshFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray        # (nv, 2) float
    triangles: np.ndarray       # (nt, 3) int, counterclockwise
    edges: np.ndarray           # (ne, 2) int, low -> high
    triangle_edge: np.ndarray   # (nt, 3) int, global edge of each local edge
    triangle_sign: np.ndarray   # (nt, 3) int, +/-1
    boundary_vertex: np.ndarray  # (nv,) bool
    boundary_edge: np.ndarray   # (ne,) bool

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_interior_edges(self):
        return int(np.count_nonzero(~self.boundary_edge))

    @property
    def n_interior_vertices(self):
        return int(np.count_nonzero(~self.boundary_vertex))

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])


def build_mesh(vertices, triangles):
    """Build a :class:`Mesh` from coordinates and vertex triples.

    Triangles given clockwise are flipped; zero-area triangles are rejected.
    """
    vertices = np.array(vertices, dtype=float).reshape(-1, 2)
    tri = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    nv = len(vertices)
    if tri.size and (tri.min() < 0 or tri.max() >= nv):
        raise MeshFormatError(f"triangle references a vertex outside [0, {nv})")

    p = vertices[tri]
    area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    scale = max(np.ptp(vertices, axis=0).max() if nv else 1.0, 1e-300)
    degenerate = np.abs(area2) <= 1e-14 * scale ** 2
    if np.any(degenerate):
        raise MeshFormatError(f"degenerate (zero-area) triangle {int(np.argmax(degenerate))}")
    flip = area2 < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]

    edge_index = {}
    edges = []
    tri_edge = np.empty_like(tri)
    tri_sign = np.empty_like(tri)
    for t, (a, b, c) in enumerate(tri):
        verts = (a, b, c)
        for j, (i0, i1) in enumerate(LOCAL_EDGES):
            u, v = int(verts[i0]), int(verts[i1])
            key = (u, v) if u < v else (v, u)
            e = edge_index.get(key)
            if e is None:
                e = edge_index[key] = len(edges)
                edges.append(key)
            tri_edge[t, j] = e
            tri_sign[t, j] = 1 if u < v else -1
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)

    incidence = np.bincount(tri_edge.ravel(), minlength=len(edges))
    if np.any(incidence > 2):
        raise MeshFormatError("non-manifold mesh: an edge is shared by more than two triangles")
    boundary_edge = incidence == 1
    boundary_vertex = np.zeros(nv, dtype=bool)
    boundary_vertex[edges[boundary_edge].ravel()] = True

    return Mesh(vertices, tri, edges, tri_edge, tri_sign, boundary_vertex, boundary_edge)


def _graded_unit(n_cells, grading):
    """Nodes of [0, 1] with the first cell ``grading`` times the uniform width.

    Widths then grow geometrically; ``grading = 1`` is the uniform partition.
    """
    if not 0.0 < grading <= 1.0:
        raise ValueError("grading must lie in (0, 1]")
    if n_cells == 1 or grading == 1.0:
        return np.linspace(0.0, 1.0, n_cells + 1)
    w0 = grading / n_cells

    def excess(r):
        return w0 * np.sum(r ** np.arange(n_cells)) - 1.0

    ratio = brentq(excess, 1.0, n_cells / grading + 1.0, xtol=1e-15)
    widths = w0 * ratio ** np.arange(n_cells)
    nodes = np.concatenate([[0.0], np.cumsum(widths)])
    nodes[-1] = 1.0
    return nodes


def _grid_mesh(xs, ys, keep_cell):
    """Triangulate the tensor grid, splitting each kept cell along its SW-NE diagonal."""
    nx, ny = len(xs), len(ys)
    used = np.zeros((ny, nx), dtype=bool)
    cells = [(i, j) for j in range(ny - 1) for i in range(nx - 1) if keep_cell(i, j)]
    for i, j in cells:
        used[j:j + 2, i:i + 2] = True
    number = -np.ones((ny, nx), dtype=np.int64)
    number[used] = np.arange(np.count_nonzero(used))
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X[used], Y[used]])
    triangles = []
    for i, j in cells:
        sw, se = number[j, i], number[j, i + 1]
        nw, ne = number[j + 1, i], number[j + 1, i + 1]
        triangles.append((sw, se, ne))
        triangles.append((sw, ne, nw))
    return build_mesh(vertices, triangles)


def gen_square(levels, grading=1.0):
    """Structured triangulation of (-1, 1)^2 with ``2**(levels-1)`` cells per side.

    With ``grading < 1`` the cells next to the boundary are ``grading`` times
    the uniform width and grow geometrically toward the centre, so the
    smallest elements sit in the corners.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    n = 2 ** (levels - 1)
    if n == 1:
        xs = np.array([-1.0, 1.0])
    else:
        half = 1.0 - _graded_unit(n // 2, grading)[::-1]
        xs = np.concatenate([-half[::-1], half[1:]])
    return _grid_mesh(xs, xs, lambda i, j: True)


def gen_lshape(levels, grading=1.0):
    """Structured triangulation of (-1, 1)^2 minus [0, 1) x (-1, 0].

    Each of the three unit squares gets ``2**(levels-1)`` cells per side;
    ``grading`` shrinks the cells adjacent to the re-entrant corner.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    n = 2 ** (levels - 1)
    pos = _graded_unit(n, grading)
    xs = np.concatenate([-pos[::-1], pos[1:]])
    # cell (i, j) is removed when it lies in x >= 0, y <= 0
    return _grid_mesh(xs, xs, lambda i, j: not (i >= n and j < n))


def _data_lines(text):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line.split()


def read_triangle(node_text, ele_text):
    """Parse Triangle-format ``.node`` and ``.ele`` payloads into a :class:`Mesh`.

    The index base (0 or 1) is taken from the first record of the node file.
    """
    node_lines = list(_data_lines(node_text))
    ele_lines = list(_data_lines(ele_text))
    try:
        nv, dim, n_attr, n_mark = (int(v) for v in node_lines[0][:4])
        nt, per_tri = (int(v) for v in ele_lines[0][:2])
        n_tattr = int(ele_lines[0][2]) if len(ele_lines[0]) > 2 else 0
    except (IndexError, ValueError) as exc:
        raise MeshFormatError(f"malformed header: {exc}") from exc
    if dim != 2:
        raise MeshFormatError(f"only 2D node files are supported, got dimension {dim}")
    if per_tri != 3:
        raise MeshFormatError(f"only linear triangles are supported, got {per_tri} nodes per element")
    if len(node_lines) - 1 < nv or len(ele_lines) - 1 < nt:
        raise MeshFormatError("fewer records than announced in the header")

    base = int(node_lines[1][0]) if nv else 0
    if base not in (0, 1):
        raise MeshFormatError(f"first vertex index must be 0 or 1, got {base}")
    vertices = np.empty((nv, 2))
    for k, rec in enumerate(node_lines[1:nv + 1]):
        if len(rec) < 3 + n_attr + n_mark:
            raise MeshFormatError(f"node record {k} is too short")
        if int(rec[0]) - base != k:
            raise MeshFormatError(f"node records out of order at record {k}")
        vertices[k] = float(rec[1]), float(rec[2])
    triangles = np.empty((nt, 3), dtype=np.int64)
    for k, rec in enumerate(ele_lines[1:nt + 1]):
        if len(rec) < 4 + n_tattr:
            raise MeshFormatError(f"element record {k} is too short")
        ids = [int(v) - base for v in rec[1:4]]
        bad = [i + base for i in ids if not 0 <= i < nv]
        if bad:
            raise MeshFormatError(f"element {k} references vertex {bad[0]} but only {nv} vertices exist")
        triangles[k] = ids
    return build_mesh(vertices, triangles)


def write_triangle(mesh, base=1):
    """Serialise ``mesh`` to Triangle ``(.node, .ele)`` text with boundary markers."""
    node = [f"{mesh.n_vertices} 2 0 1"]
    for k, (x, y) in enumerate(mesh.vertices):
        node.append(f"{k + base} {float(x)!r} {float(y)!r} {int(mesh.boundary_vertex[k])}")
    ele = [f"{mesh.n_triangles} 3 0"]
    for k, (a, b, c) in enumerate(mesh.triangles):
        ele.append(f"{k + base} {a + base} {b + base} {c + base}")
    return "\n".join(node) + "\n", "\n".join(ele) + "\n"


def mesh_stats(mesh, as_json=False):
    lengths = mesh.edge_lengths()
    stats = {
        "vertices": mesh.n_vertices,
        "edges": mesh.n_edges,
        "triangles": mesh.n_triangles,
        "n": mesh.n_interior_edges,
        "m": mesh.n_interior_vertices,
        "min_edge_length": float(lengths.min()),
        "max_edge_length": float(lengths.max()),
    }
    return json.dumps(stats, indent=2) if as_json else stats
