"""Lowest-order edge-element matrices on a 2D triangulation.

Homogeneous essential boundary conditions are imposed by elimination: only
interior edges carry a field DOF (n of them) and only interior vertices a
multiplier DOF (m of them).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import as_csr, sparse_product, sparse_transpose
from .mesh import LOCAL_EDGES

__all__ = [
    "DofMaps",
    "dof_maps",
    "local_curlcurl",
    "local_mass",
    "assemble_curlcurl",
    "assemble_edge_mass",
    "discrete_gradient",
    "derive_B_and_L",
]


@dataclass(frozen=True)
class DofMaps:
    edge_to_dof: np.ndarray    # -1 on boundary edges
    vertex_to_dof: np.ndarray  # -1 on boundary vertices
    n: int
    m: int


def dof_maps(mesh):
    edge_to_dof = -np.ones(mesh.n_edges, dtype=np.int64)
    interior = ~mesh.boundary_edge
    edge_to_dof[interior] = np.arange(np.count_nonzero(interior))
    vertex_to_dof = -np.ones(mesh.n_vertices, dtype=np.int64)
    interior = ~mesh.boundary_vertex
    vertex_to_dof[interior] = np.arange(np.count_nonzero(interior))
    return DofMaps(edge_to_dof, vertex_to_dof, mesh.n_interior_edges, mesh.n_interior_vertices)


def _geometry(points):
    """Areas and barycentric gradients for an array of triangles, shape (nt, 3, 2)."""
    p0, p1, p2 = points[:, 0], points[:, 1], points[:, 2]
    d1, d2 = p1 - p0, p2 - p0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    if np.any(np.abs(det) <= 1e-300):
        raise ValueError("degenerate triangle")
    area = 0.5 * np.abs(det)
    # gradient of lambda_i is the rotated opposite edge over 2|T|
    grads = np.empty_like(points)
    for i in range(3):
        a, b = points[:, (i + 1) % 3], points[:, (i + 2) % 3]
        e = b - a
        grads[:, i, 0] = -e[:, 1] / det
        grads[:, i, 1] = e[:, 0] / det
    return area, grads


def _curls(grads):
    """Constant curl of the three local Whitney functions, shape (nt, 3)."""
    out = np.empty(grads.shape[:2])
    for j, (a, b) in enumerate(LOCAL_EDGES):
        ga, gb = grads[:, a], grads[:, b]
        out[:, j] = 2.0 * (ga[:, 0] * gb[:, 1] - ga[:, 1] * gb[:, 0])
    return out


def _mass(area, grads):
    """Exact local mass matrices of the unsigned Whitney functions, shape (nt, 3, 3)."""
    gg = np.einsum("tid,tjd->tij", grads, grads)
    lam = (np.ones((3, 3)) + np.eye(3)) / 12.0  # int lam_i lam_j / |T|
    out = np.empty((len(area), 3, 3))
    for r, (p, q) in enumerate(LOCAL_EDGES):
        for c, (s, t) in enumerate(LOCAL_EDGES):
            out[:, r, c] = (lam[p, s] * gg[:, q, t] - lam[p, t] * gg[:, q, s]
                            - lam[q, s] * gg[:, p, t] + lam[q, t] * gg[:, p, s])
    return out * area[:, None, None]


def local_curlcurl(points, signs=(1, 1, 1)):
    """Element curl-curl matrix for one triangle with the given edge signs."""
    area, grads = _geometry(np.asarray(points, dtype=float)[None])
    c = _curls(grads)[0] * np.asarray(signs)
    return area[0] * np.outer(c, c)


def local_mass(points, signs=(1, 1, 1)):
    area, grads = _geometry(np.asarray(points, dtype=float)[None])
    s = np.asarray(signs, dtype=float)
    return _mass(area, grads)[0] * np.outer(s, s)


def _assemble(mesh, local):
    dofs = dof_maps(mesh)
    gdof = dofs.edge_to_dof[mesh.triangle_edge]
    rows = np.repeat(gdof, 3, axis=1).ravel()
    cols = np.tile(gdof, (1, 3)).ravel()
    keep = (rows >= 0) & (cols >= 0)
    K = sp.coo_matrix((local.ravel()[keep], (rows[keep], cols[keep])), shape=(dofs.n, dofs.n))
    return as_csr(K)


def assemble_curlcurl(mesh):
    area, grads = _geometry(mesh.vertices[mesh.triangles])
    c = _curls(grads) * mesh.triangle_sign
    local = area[:, None, None] * c[:, :, None] * c[:, None, :]
    return _assemble(mesh, local)


def assemble_edge_mass(mesh):
    area, grads = _geometry(mesh.vertices[mesh.triangles])
    s = mesh.triangle_sign.astype(float)
    local = _mass(area, grads) * s[:, :, None] * s[:, None, :]
    return _assemble(mesh, local)


def discrete_gradient(mesh):
    """Signed vertex-to-edge incidence restricted to interior DOFs, shape (n, m)."""
    dofs = dof_maps(mesh)
    rows, cols, vals = [], [], []
    for e, (a, b) in enumerate(mesh.edges):
        r = dofs.edge_to_dof[e]
        if r < 0:
            continue
        for v, val in ((a, -1.0), (b, 1.0)):
            c = dofs.vertex_to_dof[v]
            if c >= 0:
                rows.append(r)
                cols.append(c)
                vals.append(val)
    return as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(dofs.n, dofs.m)))


def derive_B_and_L(M, C):
    """Constraint block ``B = (M C)^T`` and discrete Laplacian ``L = B C``."""
    if M.shape[1] != C.shape[0]:
        raise ValueError(f"dimension mismatch: M {M.shape}, C {C.shape}")
    B = sparse_transpose(sparse_product(M, C))
    L = sparse_product(B, C)
    # symmetrise away rounding so that L is exactly symmetric
    L = as_csr(0.5 * (L + L.T))
    return B, L
