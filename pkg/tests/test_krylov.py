import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgesaddle.krylov import InnerProduct, minres, pcg
from edgesaddle.linalg import IndefiniteMatrixError, as_csr
from edgesaddle.mesh import gen_square
from edgesaddle.saddle import PreconditionerConfig, build_system, make_preconditioner

SQ3 = build_system(gen_square(3))


def ident(v):
    return v


def test_identity_system_converges_in_one_step():
    b = np.random.default_rng(0).standard_normal(7)
    assert pcg(ident, ident, b).iterations == 1
    assert minres(ident, ident, b).iterations == 1


def test_diagonal_spd_with_jacobi():
    d = np.arange(1.0, 11.0)
    b = np.ones(10)
    rep = pcg(lambda v: d * v, lambda r: r / d, b, tol=1e-10)
    assert rep.converged and rep.iterations <= 10
    assert np.allclose(rep.x, b / d)


def test_cg_energy_error_is_monotone():
    rng = np.random.default_rng(2)
    Q = np.linalg.qr(rng.standard_normal((12, 12)))[0]
    A = Q @ np.diag(np.linspace(1, 50, 12)) @ Q.T
    b = rng.standard_normal(12)
    x_true = np.linalg.solve(A, b)
    errs = []
    for it in range(1, 13):
        x = pcg(lambda v: A @ v, None, b, tol=1e-14, max_it=it).x
        e = x - x_true
        errs.append(e @ A @ e)
    assert all(b2 <= b1 * (1 + 1e-10) for b1, b2 in zip(errs, errs[1:]))


def test_minres_symmetric_indefinite_diagonal():
    d = np.array([1.0, -1.0, 2.0, -2.0])
    b = np.array([1.0, 2.0, 3.0, 4.0])
    rep = minres(lambda v: d * v, None, b, tol=1e-12)
    assert rep.converged and rep.iterations <= 4
    assert np.allclose(rep.x, b / d)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_minres_preconditioned_residual_non_increasing(seed):
    rng = np.random.default_rng(seed)
    n = 15
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    A = Q @ np.diag(rng.choice([-1, 1], n) * rng.uniform(0.5, 5, n)) @ Q.T
    P = np.diag(rng.uniform(0.5, 2.0, n))
    b = rng.standard_normal(n)
    norms = []
    for it in range(1, n + 1):
        x = minres(lambda v: A @ v, lambda r: P @ r, b, tol=1e-14, max_it=it).x
        r = b - A @ x
        norms.append(np.sqrt(r @ P @ r))
    assert all(b2 <= b1 * (1 + 1e-8) + 1e-14 for b1, b2 in zip(norms, norms[1:]))


def test_cg_breakdown_is_reported():
    d = np.array([1.0, -1.0])
    rep = pcg(lambda v: d * v, None, np.array([1.0, 1.0]))
    assert rep.breakdown and not rep.converged
    assert "curvature" in rep.breakdown_reason


def test_minres_indefinite_preconditioner_is_reported():
    rep = minres(ident, lambda r: -r, np.ones(3))
    assert rep.breakdown


def test_zero_rhs():
    for solver in (pcg, minres):
        rep = solver(ident, ident, np.zeros(4))
        assert rep.converged and rep.iterations == 0 and not rep.x.any()


def test_h_block_inner_product_validation():
    ip = InnerProduct.h_block(as_csr(np.diag([2.0, 3.0])), 1)
    assert ip.dot(np.ones(3), np.ones(3)) == 6.0
    with pytest.raises(IndefiniteMatrixError):
        InnerProduct.h_block(as_csr(np.diag([1.0, -1.0])), 1)
    with pytest.raises(ValueError):
        InnerProduct("energy")


def test_P_cg_and_Mdiag_minres_on_square():
    sys = SQ3
    b = np.ones(sys.size)
    pc = make_preconditioner(sys, PreconditionerConfig("P", eta=1.0))
    rep = pcg(pc.operator, pc.apply, b, ip=pc.ip, tol=1e-6)
    assert rep.converged and rep.iterations <= 10
    assert rep.relative_residuals[-1] <= 1e-6
    s1 = sys.with_k(1.0)
    pc = make_preconditioner(s1, PreconditionerConfig("P", eta=2.0))
    p_cg = pcg(pc.operator, pc.apply, b, ip=pc.ip, tol=1e-6)
    pm = make_preconditioner(s1, PreconditionerConfig("Mdiag", eta=2.0))
    m_res = minres(pm.operator, pm.apply, b, ip=pm.ip, tol=1e-6)
    assert p_cg.converged and m_res.converged
    assert p_cg.iterations <= m_res.iterations
    assert not m_res.warnings


def test_flexible_cg_matches_standard_for_linear_preconditioner():
    sys = SQ3.with_k(1.0)
    pc = make_preconditioner(sys, PreconditionerConfig("P"))
    b = np.ones(sys.size)
    a = pcg(pc.operator, pc.apply, b, ip=pc.ip, tol=1e-8)
    f = pcg(pc.operator, pc.apply, b, ip=pc.ip, tol=1e-8, flexible=True)
    assert f.converged and abs(f.iterations - a.iterations) <= 1
    assert np.allclose(a.x, f.x, atol=1e-6)


def test_report_serialises():
    rep = pcg(ident, ident, np.ones(3))
    d = rep.to_dict()
    assert "x" not in d and d["converged"] is True
    assert '"method": "cg"' in rep.to_json()
