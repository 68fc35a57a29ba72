import numpy as np
import pytest

from ordinal_ws import CorrelationModel, OrdinalDataset, UnivariateParams, estimate_correlations, fit_independent
from ordinal_ws.cl1 import cl1_gradient, cl1_loglik, pair_prob, structure_name
from ordinal_ws.errors import DomainError, MatrixError

from conftest import random_dataset


def test_structure_names_and_sizes():
    assert structure_name("exch") == "exchangeable" and structure_name("AR1") == "ar1"
    with pytest.raises(DomainError):
        structure_name("toeplitz")
    assert CorrelationModel.n_free("unstructured", 4) == 6
    assert CorrelationModel.n_free("ar1", 4) == 1
    assert CorrelationModel.n_free("exchangeable", 1) == 0
    with pytest.raises(DomainError):
        CorrelationModel("ar1", [0.1, 0.2], 3)


def test_correlation_domains():
    with pytest.raises(MatrixError):
        CorrelationModel("exchangeable", [-0.6], 3)
    with pytest.raises(MatrixError):
        CorrelationModel("ar1", [1.0], 3)
    with pytest.raises(MatrixError):
        CorrelationModel("unstructured", [0.2, 1.0, 0.1], 3)
    R = CorrelationModel("ar1", [0.5], 4).matrix()
    assert R[0, 3] == pytest.approx(0.125) and np.allclose(R, R.T)


@pytest.mark.parametrize("st,th", [("exchangeable", [0.3]), ("ar1", [0.6]), ("unstructured", [0.1, 0.2, 0.3])])
def test_jacobian_matches_finite_differences(st, th):
    cm = CorrelationModel(st, th, 3)
    A = cm.jacobian()
    h = 1e-6
    for j in range(len(th)):
        tp, tm = np.array(th, float), np.array(th, float)
        tp[j] += h
        tm[j] -= h
        num = (CorrelationModel(st, tp, 3).slot_values() - CorrelationModel(st, tm, 3).slot_values()) / (2 * h)
        assert np.allclose(A[:, j], num, atol=1e-8)


@pytest.mark.parametrize("link", ["probit", "logit"])
def test_pair_probabilities_sum_to_one(link):
    par = UnivariateParams([0.4], [-0.8, 0.3, 1.1])
    tot = sum(pair_prob(par, link, [0.2], [-0.5], a, b, 0.45) for a in range(1, 5) for b in range(1, 5))
    assert tot == pytest.approx(1.0, abs=1e-13)


def _mvn_data(rng, n, d, R, K=4, link="probit"):
    L = np.linalg.cholesky(R)
    X = rng.normal(size=(n * d, 1))
    Z = (rng.standard_normal((n, d)) @ L.T).ravel() - 0.5 * X[:, 0]
    cuts = np.array([-0.8, 0.0, 0.9])
    y = 1 + np.sum(Z[:, None] > cuts[None, :], axis=1)
    return OrdinalDataset(np.repeat(np.arange(n), d), np.tile(np.arange(d), n), y, X, ["x"], K)


@pytest.mark.parametrize("st,th", [("exchangeable", [0.5]), ("ar1", [0.6]), ("unstructured", [0.2, 0.5, 0.7])])
def test_correlation_recovery(st, th):
    rng = np.random.default_rng(7)
    R = CorrelationModel(st, th, 3).matrix()
    ds = _mvn_data(rng, 3000, 3, R)
    fit = fit_independent(ds, "probit")
    cm = estimate_correlations(ds, fit.params, "probit", st)
    assert np.max(np.abs(cm.theta - th)) < 0.05
    assert np.max(np.abs(cl1_gradient(ds, fit.params, "probit", cm))) < 1e-5


def test_estimate_maximises_pairwise_likelihood():
    rng = np.random.default_rng(8)
    ds = random_dataset(rng, n=100, d=4)
    fit = fit_independent(ds, "logit")
    cm = estimate_correlations(ds, fit.params, "logit", "exchangeable")
    L0 = cl1_loglik(ds, fit.params, "logit", cm).value
    for dr in (-0.02, 0.02):
        other = CorrelationModel("exchangeable", cm.theta + dr, 4)
        assert cl1_loglik(ds, fit.params, "logit", other).value < L0


def test_independence_and_degenerate_inputs():
    rng = np.random.default_rng(9)
    ds = random_dataset(rng, n=30)
    fit = fit_independent(ds, "probit")
    assert estimate_correlations(ds, fit.params, "probit", "independence").theta.size == 0
    single = OrdinalDataset(np.arange(6), np.arange(6) % 2, [1, 2, 1, 2, 1, 2], np.zeros((6, 0)), [], 2)
    with pytest.raises(DomainError):
        estimate_correlations(single, UnivariateParams([], [0.0]), "probit", "exchangeable")


def test_boundary_estimate_is_flagged():
    # identical responses within every cluster push rho to its upper limit
    y = np.repeat([1, 2, 3, 1, 2, 3] * 5, 2)
    n = len(y) // 2
    ds = OrdinalDataset(np.repeat(np.arange(n), 2), np.tile([0, 1], n), y, np.zeros((len(y), 0)), [], 3)
    cm = estimate_correlations(ds, fit_independent(ds, "probit").params, "probit", "exchangeable")
    assert cm.theta[0] > 0.999
    assert any("boundary" in w for w in cm.warnings)
