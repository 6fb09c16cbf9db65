"""Inverse formulas for generalized (non-symmetric, non-square-block) saddle matrices.

The matrix is ``K = [[A, B], [C, D]]`` with ``A`` m x n, ``B`` m x k, ``C``
l x n and ``D`` l x k, square overall: ``t = m + l = n + k``.  When

* ``rank(A) = m + n - t``, ``rank(B) = k``, ``rank(C) = l``,
* ``R(A)`` and ``R(B)`` intersect trivially, and so do ``R(A^T)`` and ``R(C^T)``,

``K`` is invertible and its inverse can be written in terms of null-space
bases of ``A``: ``C_r`` (columns span ker A) and ``C_l`` (rows span the left
null space), with ``L_l = C_l B`` and ``L_r = C C_r``.  Everything here is
dense and meant for small instances.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .checks import CheckReport
from .linalg import moore_penrose, null_basis

__all__ = [
    "GeneralSaddle",
    "NullData",
    "AdmissibilityError",
    "check_conditions",
    "build_null_data",
    "inverse_nullspace",
    "inverse_pseudo",
    "verify_inverse_identities",
    "verify_instance",
    "random_admissible",
    "hand_instance",
    "maxwell_instance",
]

RANK_TOL = 1e-10


class AdmissibilityError(ValueError):
    """The instance violates one of the rank conditions."""


@dataclass(frozen=True, eq=False)
class GeneralSaddle:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        m, n = self.A.shape
        if self.B.shape[0] != m or self.C.shape[1] != n:
            raise ValueError("B must have as many rows as A and C as many columns")
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            raise ValueError(f"D has shape {self.D.shape}, expected {(self.C.shape[0], self.B.shape[1])}")
        if m + self.l != n + self.k:
            raise ValueError(f"block matrix is not square: m+l={m + self.l}, n+k={n + self.k}")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def k(self):
        return self.B.shape[1]

    @property
    def l(self):
        return self.C.shape[0]

    @property
    def t(self):
        return self.m + self.l

    def matrix(self):
        return np.block([[self.A, self.B], [self.C, self.D]])

    def to_dict(self):
        return {name: getattr(self, name).tolist() for name in "ABCD"}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        return cls(*(np.array(d[name], dtype=float).reshape(np.shape(d[name])) for name in "ABCD"))


@dataclass(frozen=True, eq=False)
class NullData:
    C_r: np.ndarray  # n x l
    C_l: np.ndarray  # k x m
    L_l: np.ndarray  # k x k
    L_r: np.ndarray  # l x l


def _rank(X):
    if X.size == 0:
        return 0
    return int(np.linalg.matrix_rank(X, tol=RANK_TOL * max(np.linalg.norm(X, 2), 1.0)))


def check_conditions(gs):
    """Ranks and booleans for each admissibility condition."""
    rA = _rank(gs.A)
    out = {
        "rank_A": rA,
        "rank(A)=m+n-t": rA == gs.m + gs.n - gs.t,
        "rank(B)=k": _rank(gs.B) == gs.k,
        "rank(C)=l": _rank(gs.C) == gs.l,
        "R(A)&R(B)=0": _rank(np.hstack([gs.A, gs.B])) == rA + gs.k,
        "R(A^T)&R(C^T)=0": _rank(np.hstack([gs.A.T, gs.C.T])) == rA + gs.l,
    }
    out["admissible"] = all(v for key, v in out.items() if key != "rank_A")
    return out


def _nonsingular(L):
    if L.size == 0:
        return True
    s = np.linalg.svd(L, compute_uv=False)
    return bool(s[-1] > RANK_TOL * max(s[0], 1.0))


def build_null_data(gs):
    cond = check_conditions(gs)
    if not cond["admissible"]:
        failed = [key for key, v in cond.items() if v is False]
        raise AdmissibilityError(f"rank conditions violated: {', '.join(failed)}")
    nb = null_basis(gs.A, RANK_TOL)
    C_r, C_l = nb.right_basis, nb.left_basis
    L_l, L_r = C_l @ gs.B, gs.C @ C_r
    for name, L in (("L_l", L_l), ("L_r", L_r)):
        if not _nonsingular(L):
            raise AdmissibilityError(f"{name} is numerically singular")
    return NullData(C_r, C_l, L_l, L_r)


def _solve(M, R):
    return np.linalg.solve(M, R) if M.size else np.zeros((0, R.shape[1]))


def _blocks(gs, nd):
    """``C_r L_r^{-1}`` and ``L_l^{-1} C_l``."""
    CrLr = _solve(nd.L_r.T, nd.C_r.T).T
    LlCl = _solve(nd.L_l, nd.C_l)
    return CrLr, LlCl


def _assemble(gs, N, CrLr, LlCl):
    return np.block([[N, CrLr], [LlCl, np.zeros((gs.k, gs.l))]])


def inverse_nullspace(gs, nd=None, X=None, seed=0, retries=5):
    """Inverse from null-space data.

    For ``m = n`` the (1,1) block is ``N = (A + X C)^{-1}(I - B L_l^{-1} C_l - X D L_l^{-1} C_l)``
    for any ``X`` with ``A + X C`` nonsingular; the default ``X = C_r`` is
    tried first, then up to ``retries`` seeded Gaussian matrices.  For
    ``m != n`` it is ``(I - C_r L_r^{-1} C) A^+ (I - B L_l^{-1} C_l) - C_r L_r^{-1} D L_l^{-1} C_l``.
    """
    nd = nd or build_null_data(gs)
    CrLr, LlCl = _blocks(gs, nd)
    m = gs.m
    if m != gs.n:
        Ap = moore_penrose(gs.A, RANK_TOL)
        N = (np.eye(gs.n) - CrLr @ gs.C) @ Ap @ (np.eye(m) - gs.B @ LlCl) - CrLr @ gs.D @ LlCl
        return _assemble(gs, N, CrLr, LlCl)

    rng = np.random.default_rng(seed)
    candidates = [X] if X is not None else [nd.C_r]
    candidates += [rng.standard_normal((m, gs.l)) for _ in range(retries)]
    for attempt, Xc in enumerate(candidates, 1):
        AX = gs.A + Xc @ gs.C
        if np.linalg.cond(AX) > 1e12:
            continue
        rhs = np.eye(m) - gs.B @ LlCl - Xc @ gs.D @ LlCl
        return _assemble(gs, np.linalg.solve(AX, rhs), CrLr, LlCl)
    raise np.linalg.LinAlgError(f"A + XC singular for all {attempt} choices of X")


def _pseudo_parts(gs):
    Ap = moore_penrose(gs.A, RANK_TOL)
    E = np.eye(gs.m) - gs.A @ Ap
    F = np.eye(gs.n) - Ap @ gs.A
    B0p = moore_penrose(E @ gs.B, RANK_TOL)
    C0p = moore_penrose(gs.C @ F, RANK_TOL)
    return Ap, E, F, B0p, C0p


def inverse_pseudo(gs):
    """Inverse from Moore-Penrose pseudoinverses, with ``B_0 = E_A B`` and ``C_0 = C F_A``."""
    Ap, _, _, B0p, C0p = _pseudo_parts(gs)
    A, B, C, D = gs.A, gs.B, gs.C, gs.D
    N = Ap - Ap @ B @ B0p - C0p @ C @ Ap - C0p @ (D - C @ Ap @ B) @ B0p
    return _assemble(gs, N, C0p, B0p)


def _rel(X, Y):
    scale = max(np.linalg.norm(Y), 1.0)
    return float(np.linalg.norm(X - Y) / scale)


def verify_inverse_identities(gs, nd=None, seed=0, tol=1e-9):
    """Identities linking the pseudoinverse and null-space forms of the inverse.

    Covers the Moore-Penrose conditions for ``A^+``, the projector identities
    ``E_A = C_l^+ C_l`` and ``F_A = C_r C_r^+``, nonsingularity of ``L_l`` and
    ``L_r``, ``B_0^+ = L_l^{-1} C_l`` and ``C_0^+ = C_r L_r^{-1}``, the action
    of ``V``, ``T`` and ``N`` on ``A``, ``B`` and ``C``, and the two identities
    for ``N(A + BY)`` and ``(A + XC)N`` with random ``X``, ``Y``.
    """
    nd = nd or build_null_data(gs)
    A, B, C, D = gs.A, gs.B, gs.C, gs.D
    Ap, E, F, B0p, C0p = _pseudo_parts(gs)
    CrLr, LlCl = _blocks(gs, nd)
    In, Im = np.eye(gs.n), np.eye(gs.m)
    V = Ap - Ap @ B @ B0p - C0p @ C @ Ap
    T = V + C0p @ C @ Ap @ B @ B0p
    N = T - C0p @ D @ B0p
    rep = CheckReport("appendix identities")

    rep.add("mp: XAX=X", _rel(Ap @ A @ Ap, Ap), tol)
    rep.add("mp: AXA=A", _rel(A @ Ap @ A, A), tol)
    rep.add("mp: (AX)^T=AX", _rel((A @ Ap).T, A @ Ap), tol)
    rep.add("mp: (XA)^T=XA", _rel((Ap @ A).T, Ap @ A), tol)
    rep.add("E_A=C_l^+C_l", _rel(E, moore_penrose(nd.C_l) @ nd.C_l), tol)
    rep.add("F_A=C_rC_r^+", _rel(F, nd.C_r @ moore_penrose(nd.C_r)), tol)
    for name, L in (("L_l", nd.L_l), ("L_r", nd.L_r)):
        # residual is 0 when the smallest singular value clears the threshold
        rep.add(f"{name} nonsingular", 0.0 if _nonsingular(L) else 1.0, 0.0)
    rep.add("B_0^+=L_l^-1C_l", _rel(B0p, LlCl), tol)
    rep.add("C_0^+=C_rL_r^-1", _rel(C0p, CrLr), tol)

    left = In - CrLr @ C
    right = Im - B @ LlCl
    for name, Z in (("N", N), ("T", T), ("V", V)):
        rep.add(f"{name}A=I-C_rL_r^-1C", _rel(Z @ A, left), tol)
        rep.add(f"A{name}=I-BL_l^-1C_l", _rel(A @ Z, right), tol)
    rep.add("TB=0", _rel(T @ B, np.zeros_like(T @ B)), tol)
    rep.add("CT=0", _rel(C @ T, np.zeros_like(C @ T)), tol)
    rep.add("NB=-C_0^+D", _rel(N @ B, -C0p @ D), tol)
    rep.add("CN=-DB_0^+", _rel(C @ N, -D @ B0p), tol)

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((gs.m, gs.l))
    Y = rng.standard_normal((gs.k, gs.n))
    rep.add("N(A+BY)", _rel(N @ (A + B @ Y), left - CrLr @ D @ Y), tol)
    rep.add("(A+XC)N", _rel((A + X @ C) @ N, right - X @ D @ LlCl), tol)
    return rep


def verify_instance(gs, seed=0, tol=1e-9):
    """Both inverse formulas against each other and against dense inversion, plus all identities."""
    nd = build_null_data(gs)
    K = gs.matrix()
    I = np.eye(gs.t)
    inv1 = inverse_nullspace(gs, nd, seed=seed)
    inv2 = inverse_pseudo(gs)
    dense = np.linalg.inv(K)
    rep = verify_inverse_identities(gs, nd, seed=seed, tol=tol)
    rep.add("K*inv_nullspace=I", _rel(K @ inv1, I), tol)
    rep.add("K*inv_pseudo=I", _rel(K @ inv2, I), tol)
    rep.add("inv_nullspace=inv_pseudo", _rel(inv1, inv2), tol)
    rep.add("inv_pseudo=dense", _rel(inv2, dense), tol)
    if gs.m == gs.n:
        rng = np.random.default_rng(seed + 1)
        other = inverse_nullspace(gs, nd, X=rng.standard_normal((gs.m, gs.l)), seed=seed + 1)
        rep.add("inv_nullspace X-independent", _rel(inv1, other), tol)
    return rep


def _orthogonal(rng, size):
    q, r = np.linalg.qr(rng.standard_normal((size, size)))
    return q * np.sign(np.diag(r)) if size else q


def random_admissible(m, n, k, l, seed=0):
    """Random, well-conditioned instance satisfying every rank condition.

    ``A = U diag(s) V^T`` has exact rank ``r = m + n - t`` with singular values
    in [1, 2].  ``B`` maps onto the orthogonal complement of ``R(A)`` through
    a random orthogonal matrix scaled into [1, 2], plus a random component
    inside ``R(A)``; ``C`` is built the same way from the row space.
    """
    if m + l != n + k:
        raise ValueError(f"infeasible shapes: m+l={m + l} but n+k={n + k}")
    if min(m, n, k, l) < 0 or k > m or l > n:
        raise ValueError("need 0 <= k <= m and 0 <= l <= n")
    r = m + n - (m + l)
    if r < 0:
        raise ValueError("m + n - t must be non-negative")
    rng = np.random.default_rng(seed)
    Qm, Qn = _orthogonal(rng, m), _orthogonal(rng, n)
    U, U_perp = Qm[:, :r], Qm[:, r:]
    V, V_perp = Qn[:, :r], Qn[:, r:]
    A = (U * rng.uniform(1.0, 2.0, r)) @ V.T
    B = U_perp @ (_orthogonal(rng, k) * rng.uniform(1.0, 2.0, k)) + 0.5 * U @ rng.standard_normal((r, k))
    C = (_orthogonal(rng, l) * rng.uniform(1.0, 2.0, l)) @ V_perp.T + 0.5 * rng.standard_normal((l, r)) @ V.T
    D = rng.standard_normal((l, k))
    gs = GeneralSaddle(A, B, C, D)
    if not check_conditions(gs)["admissible"]:
        raise AdmissibilityError("generated instance failed the rank checks")
    return gs


def hand_instance():
    """``A = diag(1, 0)``, ``B = e_2``, ``C = e_2^T``, ``D = 0``; ``K`` is its own inverse."""
    return GeneralSaddle(np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]),
                         np.array([[0.0, 1.0]]), np.zeros((1, 1)))


def maxwell_instance(sys, D=None):
    """The symmetric saddle matrix at ``k = 0`` in general form: ``A``, ``B^T``, ``B``, ``D``."""
    A, B = sys.A.toarray(), sys.B.toarray()
    D = np.zeros((sys.m, sys.m)) if D is None else np.asarray(D.toarray() if hasattr(D, "toarray") else D)
    return GeneralSaddle(A, B.T, B, D)
