"""Saddle-point systems, block preconditioners and exact-inverse formulas.

The system is

    K = [[A - k^2 M, B^T],
         [B,         0  ]]

with the curl-curl matrix ``A``, edge mass ``M``, ``B = (M C)^T`` and the
discrete Laplacian ``L = B C``.  Vectors are stacked as ``(u, p)`` with
``len(u) = n`` and ``len(p) = m``.

Preconditioner actions never form ``B^T L^{-1} B``; each needs solves with
``L`` and with a shifted matrix ``A + s M``.  Those inner solves are either
exact sparse factorizations or inexact PCG runs (see :class:`InnerPolicy`).
"""
from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly
from .checks import CheckReport
from .krylov import InnerProduct, pcg
from .linalg import IndefiniteMatrixError, as_csr, factorize

__all__ = [
    "SaddleSystem",
    "InnerPolicy",
    "InnerSolver",
    "PreconditionerConfig",
    "BlockPreconditioner",
    "build_system",
    "apply_K",
    "apply_AD",
    "apply_P_inv",
    "apply_P0_inv",
    "apply_Mtri_inv",
    "apply_PD_inv",
    "make_preconditioner",
    "direct_solve_k0",
    "DirectSolveResult",
    "dense_blocks",
    "dense_K",
    "augmented_block",
    "dense_K_inverse",
    "dense_V",
    "verify_structure",
    "verify_T_properties",
]


@dataclass(frozen=True, eq=False)
class SaddleSystem:
    A: sp.csr_matrix
    M: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    L: sp.csr_matrix
    k: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        n, m = self.A.shape[0], self.L.shape[0]
        expected = {"A": (n, n), "M": (n, n), "B": (m, n), "C": (n, m), "L": (m, m)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.L.shape[0]

    @property
    def size(self):
        return self.n + self.m

    @property
    def k2(self):
        return self.k * self.k

    def with_k(self, k):
        """Same matrices at another wave number; factorization cache is shared."""
        return replace(self, k=float(k))

    def split(self, v):
        return v[:self.n], v[self.n:]

    def shifted(self, shift):
        """Sparse ``A + shift * M``."""
        return as_csr(self.A + shift * self.M)

    def solver(self, which, policy, shift=0.0):
        """Cached inner solver for ``L`` (``which="L"``) or ``A + shift M`` (``"S"``)."""
        key = (which, float(shift), policy)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        matrix = self.L if which == "L" else self.shifted(shift)
        solver = InnerSolver(matrix, policy)
        with self._lock:
            return self._cache.setdefault(key, solver)


def build_system(mesh, k=0.0):
    A = assembly.assemble_curlcurl(mesh)
    M = assembly.assemble_edge_mass(mesh)
    C = assembly.discrete_gradient(mesh)
    B, L = assembly.derive_B_and_L(M, C)
    return SaddleSystem(A, M, B, C, L, float(k))


@dataclass(frozen=True)
class InnerPolicy:
    """How inner systems with ``L`` and ``A + s M`` are solved.

    ``"exact"``
        sparse Cholesky-type factorization, computed once.
    ``"pcg"``
        CG to relative residual ``tol`` with incomplete-LU (``"ilu"``),
        Jacobi or no preconditioner.  The result depends nonlinearly on the
        right-hand side, so outer CG runs in flexible mode.
    ``"chebyshev"``
        Jacobi-preconditioned Chebyshev iteration whose degree guarantees an
        energy-norm error reduction of ``tol``.  This is a fixed symmetric
        linear map, so the outer preconditioner stays linear.
    """

    kind: str = "exact"
    tol: float = 1e-8
    max_it: int = 1000
    precond: str = "ilu"

    def __post_init__(self):
        if self.kind not in ("exact", "pcg", "chebyshev"):
            raise ValueError(f"unknown inner solver kind {self.kind!r}")
        if self.precond not in ("ilu", "jacobi", "none"):
            raise ValueError(f"unknown inner preconditioner {self.precond!r}")
        if self.kind != "exact" and not self.tol > 0:
            raise ValueError("inner tolerance must be positive")

    @property
    def linear(self):
        return self.kind != "pcg"

    @classmethod
    def parse(cls, text):
        """Parse ``"exact"``, ``"pcg:TOL[:PRECOND]"`` or ``"cheb:TOL"``."""
        parts = str(text).split(":")
        try:
            if parts[0] == "exact" and len(parts) == 1:
                return cls()
            if parts[0] == "pcg" and len(parts) in (2, 3):
                return cls("pcg", float(parts[1]), precond=parts[2] if len(parts) == 3 else "ilu")
            if parts[0] == "cheb" and len(parts) == 2:
                return cls("chebyshev", float(parts[1]), precond="jacobi")
        except ValueError as exc:
            raise ValueError(f"cannot parse inner solver spec {text!r}: {exc}") from exc
        raise ValueError(f"cannot parse inner solver spec {text!r}")

    def __str__(self):
        if self.kind == "exact":
            return "exact"
        if self.kind == "chebyshev":
            return f"cheb:{self.tol:g}"
        return f"pcg:{self.tol:g}:{self.precond}"


EXACT = InnerPolicy()


class InnerSolver:
    """Solve with a fixed SPD matrix according to an :class:`InnerPolicy`.

    Construction raises :class:`IndefiniteMatrixError` when the matrix is
    found not to be positive definite.  Inexact solves never raise; runs
    that miss the tolerance are counted in ``stats``.
    """

    def __init__(self, matrix, policy=EXACT):
        self.matrix = as_csr(matrix)
        self.policy = policy
        self.stats = {"calls": 0, "unconverged": 0, "worst_residual": 0.0}
        self._lock = threading.Lock()
        self._factor = None
        self._precond = None
        size = self.matrix.shape[0]
        if policy.kind == "exact":
            self._factor = factorize(self.matrix, "spd")
        elif size == 0:
            pass
        elif policy.kind == "chebyshev":
            self._setup_chebyshev()
        elif policy.precond == "jacobi":
            d = self._diagonal()
            self._precond = lambda r, d=d: r / d
        elif policy.precond == "ilu":
            ilu = spla.spilu(sp.csc_matrix(self.matrix), drop_tol=1e-3, fill_factor=4,
                             permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                             options=dict(SymmetricMode=True))
            self._precond = ilu.solve

    def _diagonal(self):
        d = self.matrix.diagonal()
        if np.any(d <= 0):
            raise IndefiniteMatrixError("non-positive diagonal entry")
        return d

    def _setup_chebyshev(self):
        d = self._diagonal()
        scale = sp.diags(1.0 / np.sqrt(d))
        scaled = sp.csc_matrix(scale @ self.matrix @ scale)
        size = scaled.shape[0]
        if size <= 50:
            ev = scipy.linalg.eigvalsh(scaled.toarray())
            lo, hi = ev[0], ev[-1]
        else:
            v0 = np.ones(size)
            hi = spla.eigsh(scaled, 1, which="LA", v0=v0, return_eigenvectors=False)[0]
            # shift-invert at zero; setup cost only, the iteration itself stays factorization-free
            lo = spla.eigsh(scaled, 1, sigma=0.0, which="LM", v0=v0, return_eigenvectors=False)[0]
        if lo <= 0:
            raise IndefiniteMatrixError("Chebyshev setup found a non-positive eigenvalue")
        self._dinv = 1.0 / d
        self._bounds = (0.98 * lo, 1.02 * hi)
        kappa = self._bounds[1] / self._bounds[0]
        rate = (np.sqrt(kappa) - 1.0) / (np.sqrt(kappa) + 1.0)
        need = int(np.ceil(np.log(2.0 / self.policy.tol) / -np.log(rate))) if rate > 0 else 1
        self.degree = max(1, min(need, self.policy.max_it))
        self.degree_capped = need > self.policy.max_it

    def _chebyshev(self, b):
        lo, hi = self._bounds
        theta, delta = 0.5 * (hi + lo), 0.5 * (hi - lo)
        sigma = theta / delta
        rho = 1.0 / sigma
        x = np.zeros_like(b)
        r = b.copy()
        d = self._dinv * r / theta
        for _ in range(self.degree):
            x += d
            r -= self.matrix @ d
            rho_next = 1.0 / (2.0 * sigma - rho)
            d = rho_next * rho * d + (2.0 * rho_next / delta) * (self._dinv * r)
            rho = rho_next
        return x, float(np.linalg.norm(r) / np.linalg.norm(b))

    def solve(self, b):
        if self._factor is not None:
            return self._factor.solve(b)
        if b.size == 0 or not np.any(b):
            return np.zeros_like(b)
        if self.policy.kind == "chebyshev":
            x, res = self._chebyshev(b)
            converged = not self.degree_capped
        else:
            rep = pcg(self.matrix.dot, self._precond, b, tol=self.policy.tol, max_it=self.policy.max_it)
            x, res, converged = rep.x, rep.final_residual, rep.converged
        with self._lock:
            self.stats["calls"] += 1
            self.stats["worst_residual"] = max(self.stats["worst_residual"], res)
            if not converged:
                self.stats["unconverged"] += 1
        return x


def apply_K(sys, u, p):
    """``(f, g) = ((A - k^2 M) u + B^T p, B u)``."""
    u, p = np.asarray(u, dtype=float), np.asarray(p, dtype=float)
    if u.shape != (sys.n,) or p.shape != (sys.m,):
        raise ValueError(f"expected lengths ({sys.n}, {sys.m}), got ({u.shape}, {p.shape})")
    f = sys.A @ u - sys.k2 * (sys.M @ u) + sys.B.T @ p
    return f, sys.B @ u


def apply_AD(sys, D, u, p):
    """Action of ``[[A, B^T], [B, D]]`` (k plays no role)."""
    f = sys.A @ u + sys.B.T @ p
    return f, sys.B @ u + D @ p


def _check_eta(sys, eta, strict=True):
    shift = eta - sys.k2
    if strict and shift <= 0:
        raise ValueError(f"eta={eta} must exceed k^2={sys.k2}")
    if shift == 0:
        raise ValueError("eta must differ from k^2")
    return shift


def apply_P_inv(sys, eta, x, y, inner=EXACT):
    """Action of the new preconditioner's inverse.

    ``u = S^{-1} x - C L^{-1} C^T x / (eta - k^2) + C L^{-1} y`` and
    ``p = L^{-1} (C^T x + k^2 y)`` with ``S = A + (eta - k^2) M``:
    one solve with ``S`` and two with ``L``.
    """
    shift = _check_eta(sys, eta, strict=False)
    S = sys.solver("S", inner, shift)
    Lsolve = sys.solver("L", inner).solve
    Ctx = sys.C.T @ x
    u = S.solve(x) + sys.C @ Lsolve(y - Ctx / shift)
    p = Lsolve(Ctx + sys.k2 * y)
    return u, p


def apply_P0_inv(sys, x, y, inner=EXACT):
    """Action of the k=0 preconditioner with leading block ``(A + M)^{-1}``."""
    S = sys.solver("S", inner, 1.0)
    Lsolve = sys.solver("L", inner).solve
    Ctx = sys.C.T @ x
    return S.solve(x) + sys.C @ Lsolve(y - Ctx), Lsolve(Ctx)


def apply_Mtri_inv(sys, eta, epsilon, x, y, inner=EXACT):
    """Back-substitution with the block upper-triangular preconditioner."""
    shift = _check_eta(sys, eta, strict=False)
    if epsilon == 0:
        raise ValueError("epsilon must be non-zero")
    S = sys.solver("S", inner, shift)
    p = sys.solver("L", inner).solve(y) / epsilon
    u = S.solve(x - (1.0 - eta * epsilon) * (sys.B.T @ p))
    return u, p


def apply_PD_inv(sys, D, eta, x, y, inner=EXACT):
    """Preconditioner for ``[[A, B^T], [B, D]]``; never inverts ``D``.

    ``u = (A + eta M)^{-1}(x - B^T L^{-1} C^T x) - C L^{-1} D L^{-1} C^T x + C L^{-1} y``
    and ``p = L^{-1} C^T x``.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    S = sys.solver("S", inner, float(eta))
    Lsolve = sys.solver("L", inner).solve
    p = Lsolve(sys.C.T @ x)
    u = S.solve(x - sys.B.T @ p) + sys.C @ Lsolve(y - D @ p)
    return u, p


@dataclass(frozen=True)
class PreconditionerConfig:
    """Which preconditioner to build and with which parameters.

    ``eta`` defaults to ``k^2 + 1``.  ``epsilon`` is used by ``Mtri`` only
    (``Mdiag`` is ``Mtri`` with ``epsilon = 1/eta``).  For ``PD`` the (2,2)
    block is ``D = d_scale * L``; ``d_scale`` defaults to ``-1/eta``.
    """

    kind: str = "P"
    eta: float | None = None
    epsilon: float | None = None
    d_scale: float | None = None
    inner: InnerPolicy = EXACT

    KINDS = ("P", "Mtri", "Mdiag", "P0", "PD", "DirectK0")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown preconditioner {self.kind!r}; choose from {self.KINDS}")
        if self.kind == "Mtri" and (self.epsilon is None or self.epsilon == 0):
            raise ValueError("Mtri needs a non-zero epsilon")

    def resolved_eta(self, k):
        return k * k + 1.0 if self.eta is None else float(self.eta)

    def to_dict(self):
        d = asdict(self)
        d["inner"] = str(self.inner)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        inner = d.pop("inner", "exact")
        if not isinstance(inner, InnerPolicy):
            inner = InnerPolicy.parse(inner)
        return cls(inner=inner, **d)


@dataclass
class BlockPreconditioner:
    """A preconditioner bound to a system, ready for the Krylov solvers.

    ``apply`` acts on stacked vectors; ``operator`` is the matrix it is meant
    for (``K``, or ``[[A, B^T], [B, D]]`` for ``PD``); ``ip`` is the inner
    product under which ``apply o operator`` is self-adjoint (euclidean for
    the symmetric positive definite block-diagonal preconditioner).
    """

    config: PreconditionerConfig
    system: SaddleSystem
    eta: float
    apply: object
    operator: object
    ip: InnerProduct
    spd: bool
    symmetric: bool

    def inner_stats(self):
        out = {}
        for key, solver in self.system._cache.items():
            if solver.policy.kind != "exact":
                out[f"{key[0]}:{key[1]:g}"] = dict(solver.stats)
        return out


def _stacked(sys, fn):
    n = sys.n

    def apply(v):
        u, p = fn(v[:n], v[n:])
        return np.concatenate([u, p])

    return apply


def make_preconditioner(sys, config):
    kind, inner = config.kind, config.inner
    eta = config.resolved_eta(sys.k)
    K_op = _stacked(sys, lambda u, p: apply_K(sys, u, p))
    if kind == "P":
        shift = _check_eta(sys, eta)
        apply = _stacked(sys, lambda x, y: apply_P_inv(sys, eta, x, y, inner))
        ip = InnerProduct.h_block(sys.shifted(shift), sys.m, validate=False)
        return BlockPreconditioner(config, sys, eta, apply, K_op, ip, spd=False, symmetric=False)
    if kind in ("Mtri", "Mdiag"):
        _check_eta(sys, eta)
        eps = 1.0 / eta if kind == "Mdiag" else float(config.epsilon)
        apply = _stacked(sys, lambda x, y: apply_Mtri_inv(sys, eta, eps, x, y, inner))
        symmetric = kind == "Mdiag" or np.isclose(eps * eta, 1.0, rtol=0, atol=1e-15)
        return BlockPreconditioner(config, sys, eta, apply, K_op, InnerProduct.euclidean(),
                                   spd=symmetric and eps > 0, symmetric=symmetric)
    if kind == "P0":
        apply = _stacked(sys, lambda x, y: apply_P0_inv(sys, x, y, inner))
        ip = InnerProduct.h_block(sys.shifted(1.0), sys.m, validate=False)
        return BlockPreconditioner(config, sys, 1.0, apply, K_op, ip, spd=False, symmetric=False)
    if kind == "PD":
        if eta <= 0:
            raise ValueError("eta must be positive for PD")
        d_scale = -1.0 / eta if config.d_scale is None else float(config.d_scale)
        D = as_csr(d_scale * sys.L)
        apply = _stacked(sys, lambda x, y: apply_PD_inv(sys, D, eta, x, y, inner))
        op = _stacked(sys, lambda u, p: apply_AD(sys, D, u, p))
        ip = InnerProduct.h_block(sys.shifted(eta), sys.m, validate=False)
        return BlockPreconditioner(config, sys, eta, apply, op, ip, spd=False, symmetric=False)
    raise ValueError(f"{kind} is a direct solver, not a preconditioner")


@dataclass
class DirectSolveResult:
    u: np.ndarray
    p: np.ndarray
    relative_residual: float
    inner_iterations: int
    inner_converged: bool


def direct_solve_k0(sys, f, g, tol=1e-10, max_it=None):
    """Solve the k=0 system through one singular curl-curl solve.

    ``p = L^{-1} C^T f``; ``u0`` is any solution of
    ``A u0 = (I - B^T L^{-1} C^T) f`` (Jacobi-preconditioned CG on the
    consistent singular system), and ``u = u0 + C L^{-1}(g - B u0)``.
    """
    if sys.k != 0:
        raise ValueError("the direct solver applies to k = 0 only")
    f, g = np.asarray(f, dtype=float), np.asarray(g, dtype=float)
    Lsolve = sys.solver("L", EXACT).solve
    p = Lsolve(sys.C.T @ f)
    rhs = f - sys.B.T @ p
    d = sys.A.diagonal()
    if np.linalg.norm(rhs) > 0:
        rep = pcg(sys.A.dot, lambda r: r / d, rhs, tol=tol, max_it=max_it or 10 * sys.n + 10)
        u0, its, ok = rep.x, rep.iterations, rep.converged
    else:
        u0, its, ok = np.zeros(sys.n), 0, True
    u = u0 + sys.C @ Lsolve(g - sys.B @ u0)
    rf, rg = apply_K(sys, u, p)
    b = np.concatenate([f, g])
    res = np.linalg.norm(np.concatenate([rf - f, rg - g]))
    rel = float(res / np.linalg.norm(b)) if np.linalg.norm(b) > 0 else float(res)
    return DirectSolveResult(u, p, rel, its, ok)


# ---------------------------------------------------------------------------
# dense forms, desk scale only


def dense_blocks(sys):
    return tuple(X.toarray() for X in (sys.A, sys.M, sys.B, sys.C, sys.L))


def dense_K(sys):
    A, M, B, _, _ = dense_blocks(sys)
    m = sys.m
    return np.block([[A - sys.k2 * M, B.T], [B, np.zeros((m, m))]])


def _dense_Linv(L):
    if L.shape[0] == 0:
        return np.zeros((0, 0))
    return scipy.linalg.cho_solve(scipy.linalg.cho_factor(L), np.eye(L.shape[0]))


def augmented_block(sys, eta):
    """Dense ``A + eta B^T L^{-1} B - k^2 M``."""
    A, M, B, _, L = dense_blocks(sys)
    G = A + eta * B.T @ _dense_Linv(L) @ B - sys.k2 * M
    return 0.5 * (G + G.T)


def dense_K_inverse(sys, eta=None):
    """Dense inverse of ``K`` from the eta-parametrised block formula.

    ``[[G^{-1}(I - B^T L^{-1} C^T), C L^{-1}], [L^{-1} C^T, k^2 L^{-1}]]`` with
    ``G = A + eta B^T L^{-1} B - k^2 M``; any ``eta != k^2`` gives the same matrix.
    """
    eta = sys.k2 + 1.0 if eta is None else float(eta)
    if eta == sys.k2:
        raise ValueError("eta must differ from k^2")
    A, M, B, C, L = dense_blocks(sys)
    Linv = _dense_Linv(L)
    G = A + eta * B.T @ Linv @ B - sys.k2 * M
    T = np.linalg.solve(G, np.eye(sys.n) - B.T @ Linv @ C.T)
    return np.block([[T, C @ Linv], [Linv @ C.T, sys.k2 * Linv]])


def dense_V(sys, eta=1.0):
    """Dense ``V = (A + eta B^T L^{-1} B)^{-1}(I - B^T L^{-1} C^T)``, the k=0 (1,1) block."""
    A, _, B, C, L = dense_blocks(sys)
    Linv = _dense_Linv(L)
    return np.linalg.solve(A + eta * B.T @ Linv @ B, np.eye(sys.n) - B.T @ Linv @ C.T)


def _rel(lhs, rhs, scale):
    return float(np.linalg.norm(lhs - rhs) / max(scale, 1e-300))


def verify_T_properties(sys, eta=None, T=None, tol=1e-9):
    """Check the defining relations of the (1,1) blocks ``T`` (of K^{-1}) and ``V`` (k=0).

    ``T`` may be supplied to test a perturbed block.
    """
    A, M, B, C, L = dense_blocks(sys)
    n = sys.n
    Linv = _dense_Linv(L)
    if T is None:
        T = dense_K_inverse(sys, eta)[:n, :n]
    V = dense_V(sys)
    I = np.eye(n)
    Ak = A - sys.k2 * M
    nrm = np.linalg.norm
    rep = CheckReport("inverse-block identities")
    rep.add("BT=0", nrm(B @ T) / (nrm(B) * nrm(T) or 1.0), tol)
    rep.add("(A-k2M)T=AV", _rel(Ak @ T, A @ V, nrm(Ak) * nrm(T) + nrm(A) * nrm(V)), tol)
    rep.add("VA=I-CL^-1B", _rel(V @ A, I - C @ Linv @ B, nrm(V) * nrm(A) + nrm(I)), tol)
    rep.add("VB^T=0", nrm(V @ B.T) / (nrm(V) * nrm(B) or 1.0), tol)
    rep.add("AV=I-B^TL^-1C^T", _rel(A @ V, I - B.T @ Linv @ C.T, nrm(A) * nrm(V) + nrm(I)), tol)
    rep.add("BV=0", nrm(B @ V) / (nrm(B) * nrm(V) or 1.0), tol)
    return rep


def verify_structure(sys, n_samples=20, seed=0, tol_identity=1e-12, tol_kernel=1e-9):
    """Structural identities of the assembled matrices; failures carry residuals.

    Checks ``AC = 0``, ``MC = B^T``, ``L = BC``, the M-orthogonality of
    ker(A) and ker(B), the identity ``u^T B^T L^{-1} B u = u^T M u`` on ker(A),
    ``dim ker(A) = m``, ``range(C) = ker(A)`` and ``n = dim ker A + dim ker B``.
    The kernel of ``B`` and the rank of ``A`` come from dense SVDs.
    """
    from .linalg import null_basis

    A, M, B, C, L = dense_blocks(sys)
    n, m = sys.n, sys.m
    nrm = np.linalg.norm
    rep = CheckReport("structure")
    rep.add("AC=0", nrm(A @ C) / max(nrm(A) * nrm(C), 1e-300) if m else 0.0, tol_identity)
    from .checks import rel_diff
    rep.add("MC=B^T", rel_diff(M @ C, B.T), tol_identity)
    rep.add("L=BC", rel_diff(B @ C, L), tol_identity)

    kerA = null_basis(A, 1e-10)
    kerB = null_basis(B, 1e-10) if m else null_basis(np.zeros((1, n)), 1e-10)
    dimA = kerA.right_basis.shape[1]
    dimB = kerB.right_basis.shape[1] if m else n
    rep.add("dim ker(A)=m", abs(dimA - m), 0)
    rep.add("n=dim ker(A)+dim ker(B)", abs(n - dimA - dimB), 0)
    if m:
        joint = np.linalg.matrix_rank(np.hstack([kerA.right_basis, C]), tol=1e-8 * nrm(C, 2))
        rep.add("range(C)=ker(A)", abs(joint - m), 0)

    rng = np.random.default_rng(seed)
    ortho = ident = 0.0
    Linv = _dense_Linv(L)
    Zb = kerB.right_basis if m else np.eye(n)
    for _ in range(n_samples if m else 0):
        uA = C @ rng.standard_normal(m)
        uB = Zb @ rng.standard_normal(Zb.shape[1])
        mA, mB = uA @ M @ uA, uB @ M @ uB
        ortho = max(ortho, abs(uA @ M @ uB) / np.sqrt(mA * mB))
        ident = max(ident, abs(uA @ B.T @ Linv @ B @ uA - mA) / mA)
    rep.add("uA^T M uB=0", ortho, tol_kernel)
    rep.add("uA^T B^T L^-1 B uA=uA^T M uA", ident, tol_kernel)
    return rep
