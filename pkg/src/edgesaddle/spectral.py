"""Dense eigenvalue diagnostics for the saddle system and its preconditioners.

Everything here is desk scale: matrices are formed densely and handed to
LAPACK.  Non-symmetric preconditioned operators are reduced to symmetric
generalized pencils whenever possible.

* ``P^{-1} K`` is block lower triangular with an identity (2,2) block and
  (1,1) block ``S^{-1} G`` where ``G = A + eta B^T L^{-1} B - k^2 M`` and
  ``S = A + (eta - k^2) M``; its spectrum is that of the pencil ``(G, S)``
  plus ``m`` unit eigenvalues.
* ``Mtri^{-1} K``: writing ``u = C q + w`` with ``B w = 0`` splits the
  eigenproblem into the pencil ``(Z^T (A - k^2 M) Z, Z^T S Z)`` on ``ker(B)``
  (``Z`` a basis) and, for each of the ``m`` directions ``q``, the quadratic
  ``s eps lam^2 + (1 - s eps) lam - 1 = 0`` with ``s = eta - k^2``, whose roots
  are ``1`` and ``-1/(eps s)``.

A dense QZ route (``method="dense"``) is available as a cross-check; it
loses accuracy to about ``sqrt(machine eps)`` when the operator is
defective (for instance ``eps = -1/(eta - k^2)``, where both roots equal 1).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .linalg import null_basis
from .saddle import PreconditionerConfig, augmented_block, dense_blocks, dense_K

__all__ = [
    "SpectrumReport",
    "estimate_alpha_bar",
    "lambda_min_Aeta",
    "spectrum_preconditioned",
    "spectrum_K_vs_Aeta",
    "check_eigenvalue_bounds",
    "sign_change_threshold",
    "CLUSTER_TOL",
]

CLUSTER_TOL = 1e-6
BOUND_TOL = 1e-10


@dataclass
class SpectrumReport:
    kind: str
    k: float
    eta: float
    eigenvalues: list
    multiplicity_of_one: int
    bound_lower: float | None
    violations: list
    alpha_bar: float | None
    lambda_min_Aeta: float | None
    n: int = 0
    m: int = 0
    method: str = "pencil"
    extra_eigenvalue: float | None = None
    multiplicity_of_extra: int | None = None
    pencil_eigenvalues: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eigenvalue"])
        for ev in self.eigenvalues:
            w.writerow([repr(float(ev))])
        return buf.getvalue()


def _ker_B_basis(sys):
    if sys.m == 0:
        return np.eye(sys.n)
    B = sys.B.toarray()
    Z = null_basis(B).right_basis
    if Z.shape[1] == 0:
        raise ValueError("ker(B) is trivial (m = n); the inf-sup constant is undefined")
    return Z


def _ker_B_pencil(sys):
    """Eigenvalues of ``(Z^T A Z, Z^T M Z)`` with ``Z`` an orthonormal basis of ``ker(B)``."""
    A, M = sys.A.toarray(), sys.M.toarray()
    Z = _ker_B_basis(sys)
    return scipy.linalg.eigh(Z.T @ A @ Z, Z.T @ M @ Z, eigvals_only=True)


def estimate_alpha_bar(sys):
    """Smallest Rayleigh quotient ``u^T A u / u^T M u`` over ``ker(B)``."""
    return float(_ker_B_pencil(sys)[0])


def lambda_min_Aeta(sys, eta):
    """Smallest eigenvalue of ``diag(A + eta B^T L^{-1} B - k^2 M, I_m)``."""
    if eta == sys.k2:
        raise ValueError("eta must differ from k^2")
    lam = float(scipy.linalg.eigvalsh(augmented_block(sys, eta))[0])
    return min(lam, 1.0) if sys.m else lam


def _lower_bound(alpha_bar, k2, eta):
    if alpha_bar is None or not k2 < alpha_bar:
        return None
    return (alpha_bar - k2) / (alpha_bar + eta - k2)


def _count_near(values, target, tol):
    return int(np.count_nonzero(np.abs(np.asarray(values) - target) <= tol))


def _violations(values, lower, tol=CLUSTER_TOL, exclude=()):
    out = []
    for v in values:
        if abs(v - 1.0) <= tol or any(abs(v - e) <= tol for e in exclude):
            continue
        if lower is None or not (lower - BOUND_TOL < v < 1.0):
            out.append(float(v))
    return out


def spectrum_preconditioned(sys, config=None, method="pencil", alpha_bar=None,
                            cluster_tol=CLUSTER_TOL):
    """Eigenvalues of ``P^{-1} K`` (kind ``P``) or ``Mtri^{-1} K`` (``Mtri``/``Mdiag``).

    ``method="pencil"`` uses the symmetric reductions described in the module
    docstring; ``method="dense"`` forms the preconditioner densely and calls
    the QZ algorithm.  Bound violations are listed, never raised.
    """
    config = config or PreconditionerConfig("P")
    if config.kind not in ("P", "Mtri", "Mdiag"):
        raise ValueError(f"spectra are available for P, Mtri and Mdiag, not {config.kind}")
    if method not in ("pencil", "dense"):
        raise ValueError(f"unknown method {method!r}")
    k2 = sys.k2
    eta = config.resolved_eta(sys.k)
    shift = eta - k2
    if shift == 0:
        raise ValueError("eta must differ from k^2")
    if alpha_bar is None and sys.m < sys.n:
        alpha_bar = estimate_alpha_bar(sys)
    lower = _lower_bound(alpha_bar, k2, eta)
    lam_min = lambda_min_Aeta(sys, eta)
    A, M, B, C, L = dense_blocks(sys)
    S = A + shift * M
    G = augmented_block(sys, eta)
    pencil = scipy.linalg.eigh(G, S, eigvals_only=True)

    if config.kind == "P":
        extra = None
        if method == "pencil":
            ev = np.concatenate([pencil, np.ones(sys.m)])
        else:
            Linv = np.linalg.inv(L) if sys.m else np.zeros((0, 0))
            Sinv = np.linalg.inv(S)
            Pinv = np.block([[Sinv - C @ Linv @ C.T / shift, C @ Linv],
                             [Linv @ C.T, k2 * Linv]])
            ev = _real_part(scipy.linalg.eigvals(Pinv @ dense_K(sys)))
    else:
        eps = 1.0 / eta if config.kind == "Mdiag" else float(config.epsilon)
        extra = -1.0 / (eps * shift)
        if method == "pencil":
            Z = _ker_B_basis(sys)
            inner = scipy.linalg.eigh(Z.T @ (A - k2 * M) @ Z, Z.T @ S @ Z, eigvals_only=True)
            ev = np.concatenate([inner, np.ones(sys.m), np.full(sys.m, extra)])
        else:
            Mt = np.block([[S, (1.0 - eta * eps) * B.T], [np.zeros((sys.m, sys.n)), eps * L]])
            ev = _real_part(scipy.linalg.eig(dense_K(sys), Mt, right=False))

    ev = np.sort(ev)
    exclude = () if extra is None else (extra,)
    return SpectrumReport(
        kind=config.kind, k=sys.k, eta=eta,
        eigenvalues=ev.tolist(),
        multiplicity_of_one=_count_near(ev, 1.0, cluster_tol),
        bound_lower=lower,
        violations=_violations(ev, lower, cluster_tol, exclude),
        alpha_bar=alpha_bar, lambda_min_Aeta=lam_min,
        n=sys.n, m=sys.m, method=method,
        extra_eigenvalue=extra,
        multiplicity_of_extra=None if extra is None else _count_near(ev, extra, cluster_tol),
        pencil_eigenvalues=np.sort(pencil).tolist(),
    )


def _real_part(values, tol=1e-6):
    values = np.asarray(values)
    finite = np.isfinite(values)
    if not finite.all():
        raise np.linalg.LinAlgError("infinite generalized eigenvalue; the preconditioner is singular")
    scale = max(1.0, np.abs(values).max())
    if np.abs(values.imag).max(initial=0.0) > tol * scale:
        raise np.linalg.LinAlgError("preconditioned operator has complex eigenvalues")
    return values.real


def spectrum_K_vs_Aeta(sys, eta=None, cutoff=0.3):
    """Eigenvalues below ``cutoff`` of ``K`` and of ``A_eta``, with negative counts."""
    eta = sys.k2 + 1.0 if eta is None else float(eta)
    ev_K = scipy.linalg.eigvalsh(dense_K(sys))
    ev_G = scipy.linalg.eigvalsh(augmented_block(sys, eta))
    ev_A = np.sort(np.concatenate([ev_G, np.ones(sys.m)]))
    return {
        "k": sys.k,
        "eta": eta,
        "cutoff": cutoff,
        "K_below_cutoff": ev_K[ev_K < cutoff].tolist(),
        "Aeta_below_cutoff": ev_A[ev_A < cutoff].tolist(),
        "K_negative": int(np.count_nonzero(ev_K < 0)),
        "Aeta_negative": int(np.count_nonzero(ev_A < 0)),
    }


def check_eigenvalue_bounds(report, cluster_tol=CLUSTER_TOL):
    """Check the pencil eigenvalues of a ``P`` report against the two-sided bound.

    Non-unit eigenvalues of ``(A + (eta - k^2) M)^{-1}(A + eta B^T L^{-1} B - k^2 M)``
    must lie in ``(lower, 1)`` and the unit eigenvalue must have multiplicity
    ``m``.  The lower end is attained by the minimising vector of the
    discrete inf-sup quotient, so it is compared with a ``1e-10`` slack.
    """
    if report.bound_lower is None:
        return {"passed": False, "reason": "k^2 >= alpha_bar: the bound does not apply",
                "violations": [], "unit_multiplicity": None}
    pencil = np.asarray(report.pencil_eigenvalues)
    unit = _count_near(pencil, 1.0, cluster_tol)
    viol = _violations(pencil, report.bound_lower, cluster_tol)
    ok = unit == report.m and not viol
    reason = "" if ok else (f"unit multiplicity {unit} != m={report.m}" if unit != report.m
                            else f"{len(viol)} eigenvalues outside the bound")
    return {"passed": ok, "reason": reason, "violations": viol, "unit_multiplicity": unit,
            "lower": report.bound_lower}


def sign_change_threshold(sys, k_lo=0.0, k_hi=4.0, tol=0.05, eta_offset=1.0):
    """Bisect for the wave number where ``lambda_min(A_eta)`` changes sign, ``eta = k^2 + eta_offset``.

    Returns the midpoint of the final bracket, which has width at most ``2 tol``.
    """
    A, M, B, _, L = dense_blocks(sys)
    W = B.T @ np.linalg.solve(L, B) if sys.m else np.zeros_like(A)

    def lam(k):
        k2 = k * k
        G = A + (k2 + eta_offset) * W - k2 * M
        return scipy.linalg.eigvalsh(0.5 * (G + G.T), subset_by_index=[0, 0])[0]

    f_lo, f_hi = lam(k_lo), lam(k_hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise ValueError(f"no sign change of lambda_min on [{k_lo}, {k_hi}]")
    while k_hi - k_lo > 2 * tol:
        mid = 0.5 * (k_lo + k_hi)
        if np.sign(lam(mid)) == np.sign(f_lo):
            k_lo = mid
        else:
            k_hi = mid
    return 0.5 * (k_lo + k_hi)
