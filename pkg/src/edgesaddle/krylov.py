"""CG and MINRES with residual histories and breakdown detection.

Both solvers run on an operator ``op`` with a preconditioner ``precond`` in
one of two inner products:

``euclidean``
    The classical preconditioned iterations.  The preconditioner must be
    symmetric positive definite for the theory to hold; CG divides by
    ``p^T op(p)``.
``H-block``
    The iteration is applied to ``T = precond o op`` in the inner product
    ``<x, y> = x^T H y`` with a symmetric positive definite ``H``.  The
    preconditioner may be indefinite as long as ``T`` is self-adjoint with
    respect to ``H``; CG then divides by ``p^T H T p``.

Internally every step produces a pair ``(r, z)`` with ``z`` the
preconditioned vector; in the euclidean case ``r = op(v)`` and
``z = precond(r)``, in the H-block case ``z = precond(op(v))`` and ``r = H z``.
With that convention the two variants share one code path, and MINRES in the
H inner product needs no solve with ``H``.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from math import sqrt

import numpy as np

from .linalg import factorize

__all__ = ["InnerProduct", "SolveReport", "pcg", "minres"]

BREAKDOWN_TOL = 1e-14
SELF_ADJOINT_TOL = 1e-6


class InnerProduct:
    """Euclidean or block ``diag(H11, I)`` inner product.

    ``InnerProduct.h_block(H11, m)`` validates that ``H11`` is symmetric
    positive definite by factorizing it.
    """

    def __init__(self, kind="euclidean", H11=None, m=0, validate=True):
        if kind not in ("euclidean", "H-block"):
            raise ValueError(f"unknown inner product {kind!r}")
        self.kind = kind
        self.H11 = H11
        self.m = m
        if kind == "H-block":
            if H11 is None:
                raise ValueError("H-block inner product needs its leading block")
            if validate:
                factorize(H11, "spd")

    @classmethod
    def euclidean(cls):
        return cls("euclidean")

    @classmethod
    def h_block(cls, H11, m, validate=True):
        return cls("H-block", H11, m, validate)

    def apply(self, x):
        if self.kind == "euclidean":
            return x
        n = self.H11.shape[0]
        out = np.empty_like(x)
        out[:n] = self.H11 @ x[:n]
        out[n:] = x[n:]
        return out

    def dot(self, x, y):
        return float(x @ self.apply(y))

    def norm(self, x):
        return sqrt(max(self.dot(x, x), 0.0))


@dataclass
class SolveReport:
    method: str
    iterations: int
    relative_residuals: list
    converged: bool
    breakdown: bool = False
    breakdown_reason: str = ""
    warnings: list = field(default_factory=list)
    wall_time: float = 0.0
    config: dict = field(default_factory=dict)
    x: np.ndarray | None = field(default=None, repr=False)

    @property
    def final_residual(self):
        return self.relative_residuals[-1]

    def to_dict(self):
        d = asdict(self)
        d.pop("x")
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _identity(v):
    return v


class _Pairing:
    """Forms ``(r, z)`` pairs for a given operator, preconditioner and inner product."""

    def __init__(self, op, precond, ip):
        self.op = op
        self.precond = precond or _identity
        self.ip = ip or InnerProduct.euclidean()

    def of_residual(self, res):
        z = self.precond(res)
        if z is res:
            z = res.copy()
        if self.ip.kind == "euclidean":
            return res, z
        return self.ip.apply(z), z

    def of_vector(self, v):
        return self.of_residual(self.op(v))


def _true_residual(op, b, x, bnorm):
    return float(np.linalg.norm(b - op(x))) / bnorm


def pcg(apply_op, apply_precond, b, ip=None, tol=1e-6, max_it=200, x0=None,
        breakdown_tol=BREAKDOWN_TOL, flexible=False):
    """Preconditioned conjugate gradients.

    Stops when ``||b - op(x)||_2 <= tol ||b||_2`` (true residual, recomputed
    each iteration).  A curvature term ``<p, T p>`` that is not finite or
    falls below ``breakdown_tol * ||p|| ||T p||`` stops the iteration with
    ``breakdown=True``; the partial iterate is returned.

    ``flexible=True`` is for preconditioners that are not fixed linear maps
    (inner iterations stopped at a tolerance): the preconditioned residual is
    recomputed from the true residual every step and ``beta`` uses the
    Polak-Ribiere formula.  This costs one extra preconditioner application
    per iteration.
    """
    start = time.perf_counter()
    b = np.asarray(b, dtype=float)
    pairing = _Pairing(apply_op, apply_precond, ip)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = float(np.linalg.norm(b))
    report = SolveReport("cg", 0, [], False, config={"ip": pairing.ip.kind, "tol": tol, "max_it": max_it,
                                                      "flexible": flexible})
    if bnorm == 0.0:
        report.relative_residuals.append(0.0)
        report.converged = True
        report.x = np.zeros_like(b)
        return report

    r, z = pairing.of_residual(b - apply_op(x))
    res = _true_residual(apply_op, b, x, bnorm)
    report.relative_residuals.append(res)
    rho = float(r @ z)
    p = z.copy()
    it = 0
    while res > tol and it < max_it:
        qr, qz = pairing.of_vector(p)
        curv = float(p @ qr)
        if pairing.ip.kind == "euclidean":
            scale = float(np.linalg.norm(p) * np.linalg.norm(qr))
        else:
            scale = sqrt(abs(pairing.ip.dot(p, p) * float(qz @ qr)))
        if not np.isfinite(curv) or abs(curv) <= breakdown_tol * scale:
            report.breakdown = True
            report.breakdown_reason = f"curvature {curv:.3e} too small at iteration {it + 1}"
            break
        alpha = rho / curv
        x += alpha * p
        it += 1
        resid = b - apply_op(x)
        res = float(np.linalg.norm(resid)) / bnorm
        report.relative_residuals.append(res)
        if flexible:
            if res <= tol:
                break
            r_old = r
            r, z = pairing.of_residual(resid)
            rho_new = float(r @ z)
            beta = (rho_new - float(r_old @ z)) / rho
        else:
            r -= alpha * qr
            z -= alpha * qz
            rho_new = float(r @ z)
            beta = rho_new / rho
        if not np.isfinite(rho_new) or rho_new == 0.0:
            if res > tol:
                report.breakdown = True
                report.breakdown_reason = f"residual inner product {rho_new:.3e} at iteration {it}"
            break
        p = z + beta * p
        rho = rho_new

    report.iterations = it
    report.converged = res <= tol
    report.x = x
    report.wall_time = time.perf_counter() - start
    return report


def minres(apply_op, apply_precond, b, ip=None, tol=1e-6, max_it=200, x0=None):
    """Preconditioned MINRES (Lanczos with Givens rotations).

    In the euclidean inner product ``apply_precond`` must be symmetric
    positive definite and the method minimises ``||b - op(x)||`` in the norm
    induced by the preconditioner.  In the H-block inner product it minimises
    ``||precond(b - op(x))||_H``.  Stopping uses the true residual as in
    :func:`pcg`.  A Lanczos symmetry defect above 1e-6 is recorded in
    ``warnings``.
    """
    start = time.perf_counter()
    b = np.asarray(b, dtype=float)
    pairing = _Pairing(apply_op, apply_precond, ip)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = float(np.linalg.norm(b))
    report = SolveReport("minres", 0, [], False, config={"ip": pairing.ip.kind, "tol": tol, "max_it": max_it})
    if bnorm == 0.0:
        report.relative_residuals.append(0.0)
        report.converged = True
        report.x = np.zeros_like(b)
        return report

    r1, y = pairing.of_residual(b - apply_op(x))
    z1 = y.copy()
    res = _true_residual(apply_op, b, x, bnorm)
    report.relative_residuals.append(res)
    beta1 = float(r1 @ y)
    if beta1 <= 0.0:
        report.breakdown = True
        report.breakdown_reason = "preconditioner is not positive definite on the initial residual"
        report.x = x
        return report
    beta1 = sqrt(beta1)

    oldb, beta = 0.0, beta1
    tnorm2 = 0.0
    dbar = epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros_like(b)
    w2 = np.zeros_like(b)
    r2, z2 = r1.copy(), z1.copy()
    v_prev = np.zeros_like(b)
    sym_defect = 0.0
    it = 0
    while res > tol and it < max_it:
        v = y / beta
        yr, yz = pairing.of_vector(v)
        scale = float(np.linalg.norm(yr) * np.linalg.norm(yz))
        if it >= 1:
            # Lanczos symmetry: <v_{j-1}, op v_j> must equal beta_j
            anorm = max(sqrt(tnorm2), 1e-300)
            sym_defect = max(sym_defect, abs(float(v_prev @ yr) - beta) / anorm)
            yr = yr - (beta / oldb) * r1
            yz = yz - (beta / oldb) * z1
        alfa = float(v @ yr)
        yr = yr - (alfa / beta) * r2
        yz = yz - (alfa / beta) * z2
        r1, z1 = r2, z2
        r2, z2 = yr, yz
        y = z2
        oldb = beta
        beta2 = float(r2 @ y)
        if beta2 < 0.0 and abs(beta2) <= 1e-12 * scale:
            beta2 = 0.0  # invariant subspace found, up to rounding
        if not np.isfinite(beta2) or beta2 < 0.0:
            report.breakdown = True
            report.breakdown_reason = f"preconditioner not positive definite at iteration {it + 1}"
            break
        beta = sqrt(beta2)
        tnorm2 += alfa ** 2 + oldb ** 2 + beta ** 2

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = sqrt(gbar ** 2 + beta ** 2)
        gamma = max(gamma, np.finfo(float).eps)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        v_prev = v
        it += 1
        res = _true_residual(apply_op, b, x, bnorm)
        report.relative_residuals.append(res)
        if beta == 0.0:
            break

    if sym_defect > SELF_ADJOINT_TOL:
        report.warnings.append(f"loss of self-adjointness: Lanczos symmetry defect {sym_defect:.2e}")
    report.iterations = it
    report.converged = res <= tol
    report.x = x
    report.wall_time = time.perf_counter() - start
    return report
