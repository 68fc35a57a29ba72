import numpy as np
import pytest
from scipy import stats

from ordinal_ws.errors import ClampWarning, DomainError, MatrixError
from ordinal_ws.gauss import (LOGIT, PROBIT, Rect2, RectD, bvn_cdf, bvn_lattice, bvn_lattice_derivs, bvn_pdf,
                              bvn_rect, bvn_rect_dbound, get_link, mvn_cdf, mvn_lattice, mvn_rect, student_t)


def test_bvn_matches_frozen_high_precision_values(oracles):
    pts = oracles["bvn"]
    a = np.array([p["a"] for p in pts])
    b = np.array([p["b"] for p in pts])
    r = np.array([p["rho"] for p in pts])
    ref = np.array([p["p"] for p in pts])
    assert np.max(np.abs(bvn_cdf(a, b, r) - ref)) < 1e-14


def test_bvn_infinite_bounds():
    assert bvn_cdf(np.inf, 0.3, 0.5) == pytest.approx(stats.norm.cdf(0.3), abs=1e-15)
    assert bvn_cdf(-0.2, np.inf, 0.5) == pytest.approx(stats.norm.cdf(-0.2), abs=1e-15)
    assert bvn_cdf(-np.inf, 1.0, 0.5) == 0.0
    assert bvn_cdf(np.inf, np.inf, -0.3) == 1.0
    assert bvn_rect(-np.inf, np.inf, -np.inf, np.inf, 0.7) == pytest.approx(1.0, abs=1e-15)


def test_bvn_extreme_correlation_limits():
    # rho -> 1: P(X<=a, Y<=b) -> Phi(min(a,b)); rho -> -1: max(0, Phi(a)+Phi(b)-1)
    assert bvn_cdf(0.3, 0.8, 0.9999999) == pytest.approx(stats.norm.cdf(0.3), abs=1e-3)
    assert bvn_cdf(0.3, 0.8, -0.9999999) == pytest.approx(stats.norm.cdf(0.3) + stats.norm.cdf(0.8) - 1, abs=1e-3)


def test_bvn_rejects_and_clamps_rho():
    with pytest.raises(DomainError):
        bvn_cdf(0.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        bvn_cdf(0.0, 0.0, np.nan)
    with pytest.warns(ClampWarning):
        bvn_cdf(0.0, 0.0, 1 - 1e-12)


def test_rect2_validation():
    with pytest.raises(DomainError):
        Rect2(1.0, 0.0, 0.0, 1.0, 0.2)
    r = Rect2(-0.5, 0.5, -1.0, 2.0, 0.3)
    assert bvn_rect(r) == pytest.approx(bvn_rect(-0.5, 0.5, -1.0, 2.0, 0.3))
    assert bvn_rect_dbound(Rect2(-np.inf, 0.5, -1.0, 2.0, 0.3), "lower_a") == 0.0
    with pytest.raises(DomainError):
        bvn_rect_dbound(r, "middle")


def test_bvn_pdf_matches_scipy():
    mv = stats.multivariate_normal([0, 0], [[1, 0.4], [0.4, 1]])
    assert bvn_pdf(0.3, -1.1, 0.4) == pytest.approx(mv.pdf([0.3, -1.1]), rel=1e-12)


def test_lattice_and_derivatives_normalised():
    za, zb = np.array([-1.0, 0.2, 1.5]), np.array([-0.4, 0.9])
    P = bvn_lattice(za, zb, 0.6)
    assert P.shape == (4, 3)
    assert P.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(P.sum(1), np.diff(stats.norm.cdf(np.r_[-np.inf, za, np.inf])), atol=1e-14)
    D = bvn_lattice_derivs(za, zb, 0.6)
    # total probability does not move with rho or any cut point
    assert abs(D["drho"].sum()) < 1e-14
    assert np.allclose((D["da_hi"] + D["da_lo"]).sum(axis=(0, 1)), 0.0, atol=1e-14)


@pytest.mark.parametrize("dim", [3, 4])
def test_mvn_rect_matches_scipy(dim):
    rng = np.random.default_rng(dim)
    V = rng.normal(size=(dim, dim + 3))
    C = V @ V.T
    C /= np.sqrt(np.outer(np.diag(C), np.diag(C)))
    for _ in range(5):
        lo = rng.uniform(-2, 0.5, dim)
        hi = lo + rng.uniform(0.3, 2.5, dim)
        ref = stats.multivariate_normal.cdf(hi, np.zeros(dim), C, lower_limit=lo, abseps=1e-11, releps=1e-11,
                                           maxpts=2_000_000)
        assert mvn_rect(lo, hi, C) == pytest.approx(ref, abs=2e-7)


def test_mvn_rect_independent_factorises():
    lo, hi = np.array([-0.5, -1.0, 0.2]), np.array([0.7, 0.4, 2.0])
    ref = np.prod(stats.norm.cdf(hi) - stats.norm.cdf(lo))
    assert mvn_rect(lo, hi, np.eye(3)) == pytest.approx(ref, abs=1e-12)
    assert mvn_rect(RectD(lo, hi, np.eye(3))) == pytest.approx(ref, abs=1e-12)


def test_mvn_cdf_orthant():
    # P(all > 0) for exchangeable rho = 1/2, d=3: 1/8 + 3 asin(1/2)/(4 pi) = 1/4
    C = np.full((3, 3), 0.5) + 0.5 * np.eye(3)
    assert mvn_cdf(np.zeros(3), C) == pytest.approx(0.25, abs=1e-10)


def test_mvn_lattice_consistency():
    C = np.array([[1, .3, .5, .2], [.3, 1, .4, .1], [.5, .4, 1, .3], [.2, .1, .3, 1]])
    cuts = [np.array([-0.5, 0.8]), np.array([0.0]), np.array([-1.0, 0.1, 1.2]), np.array([0.4])]
    L = mvn_lattice(cuts, C)
    assert L.shape == (3, 2, 4, 2)
    assert L.sum() == pytest.approx(1.0, abs=1e-12)
    # one cell against mvn_rect
    lo = np.array([-0.5, -np.inf, 0.1, 0.4])
    hi = np.array([0.8, 0.0, 1.2, np.inf])
    assert L[1, 0, 2, 1] == pytest.approx(mvn_rect(lo, hi, C), abs=1e-12)
    # bivariate margin equals the bivariate lattice
    assert np.allclose(L.sum(axis=(1, 3)), bvn_lattice(cuts[0], cuts[2], 0.5), atol=1e-12)


def test_mvn_lattice_batched():
    C = np.full((3, 3), 0.4) + 0.6 * np.eye(3)
    cuts = [np.array([[-0.5, 0.5], [0.0, 1.0]]), np.array([[0.1], [0.2]]), np.array([[-1.0], [0.3]])]
    B = mvn_lattice(cuts, C)
    for k in range(2):
        assert np.allclose(B[k], mvn_lattice([c[k] for c in cuts], C), atol=1e-15)


def test_matrix_validation():
    with pytest.raises(MatrixError):
        mvn_rect(np.zeros(3), np.ones(3), 2.0 * np.eye(3))
    with pytest.raises(MatrixError):
        mvn_rect(np.zeros(3), np.ones(3), np.array([[1, .9, -.9], [.9, 1, .9], [-.9, .9, 1]]))
    with pytest.raises(DomainError):
        mvn_rect(np.ones(3), np.zeros(3), np.eye(3))


def test_links():
    assert get_link("normal") is not None and get_link("logistic") == LOGIT
    with pytest.raises(DomainError):
        get_link("cauchit")
    with pytest.raises(DomainError):
        PROBIT.quantile(1.0)
    t = student_t(4)
    assert t.cdf(1.3) == pytest.approx(stats.t.cdf(1.3, 4), rel=1e-13)
    assert t.quantile(0.9) == pytest.approx(stats.t.ppf(0.9, 4), rel=1e-12)
    z = np.array([-40.0, -5.0, 0.0, 5.0, 40.0])
    ns = LOGIT.normal_score(z)
    assert np.all(np.isfinite(ns)) and np.allclose(ns, -ns[::-1])
    assert ns[1] == pytest.approx(stats.norm.ppf(stats.logistic.cdf(-5.0)), rel=1e-12)
