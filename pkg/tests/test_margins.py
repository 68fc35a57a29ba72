import numpy as np
import pytest

from ordinal_ws import UnivariateParams, fit_independent
from ordinal_ws.errors import ConvergenceError, DomainError
from ordinal_ws.gauss import LOGIT, PROBIT
from ordinal_ws.margins import (design_blocks, fisher_block, fisher_blocks, ordinal_pmf, pmf_table, score_gamma,
                                score_table, shifted_cutpoints)

from conftest import random_dataset


@pytest.mark.parametrize("link", ["logit", "probit"])
def test_independence_mle_matches_frozen_reference(arthritis, oracles, link):
    ref = oracles["arthritis_independence"][link]
    fit = fit_independent(arthritis, link)
    assert fit.names[:len(ref["names"])] == ref["names"]
    assert np.max(np.abs(fit.params.beta - ref["beta"])) < 1e-6
    assert np.max(np.abs(fit.params.gamma - ref["alpha"])) < 1e-6
    assert fit.loglik == pytest.approx(ref["loglik"], abs=1e-6)


def test_params_validation():
    with pytest.raises(DomainError):
        UnivariateParams([0.0], [0.5, 0.2])
    with pytest.raises(DomainError):
        UnivariateParams([0.0], [])
    a = UnivariateParams([0.2, -0.1], [-1, 0, 1])
    assert np.allclose(UnivariateParams.from_vector(a.vector, 2).vector, a.vector)


def test_pmf_sums_and_tail_accuracy():
    G = np.array([[-40.0, -39.0, 39.0], [30.0, 31.0, 32.0], [-0.5, 0.1, 0.9]])
    for link in (PROBIT, LOGIT):
        P = pmf_table(link, G)
        assert np.allclose(P.sum(1), 1.0, atol=1e-14)
        assert np.all(P >= 0)
    # upper-tail cell resolved without cancellation
    P = pmf_table(LOGIT, np.array([[30.0, 31.0]]))
    assert P[0, 2] == pytest.approx(np.exp(-31.0), rel=1e-6)


def test_score_expectation_and_information():
    rng = np.random.default_rng(1)
    G = np.sort(rng.normal(size=(20, 4)), axis=1)
    for link in (PROBIT, LOGIT):
        P = pmf_table(link, G)
        S = score_table(link, G)
        assert np.max(np.abs(np.einsum("nk,nkq->nq", P, S))) < 1e-12
        info = np.einsum("nk,nka,nkb->nab", P, S, S)
        assert np.allclose(info, fisher_blocks(link, G), atol=1e-12)


def test_single_observation_api():
    par = UnivariateParams([0.5], [-1.0, 0.0, 1.5])
    probs = [ordinal_pmf(par, "probit", [0.2], y) for y in range(1, 5)]
    assert sum(probs) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        ordinal_pmf(par, "probit", [0.2], 5)
    with pytest.raises(DomainError):
        ordinal_pmf(par, "probit", [0.2, 0.1], 1)
    s = score_gamma(par, "probit", [0.2], 2)
    assert s.shape == (3,)
    assert fisher_block(par, "probit", [0.2]).shape == (3, 3)
    assert np.allclose(shifted_cutpoints(par, [[0.2]]), [[-0.9, 0.1, 1.6]])


def test_design_blocks():
    B = design_blocks(np.array([[1.0, 2.0]]), 3)
    assert B.shape == (1, 3, 5)
    assert np.allclose(B[0, :, :2], [[1, 2]] * 3) and np.allclose(B[0, :, 2:], np.eye(3))


def test_fit_score_vanishes_and_collinearity():
    rng = np.random.default_rng(3)
    ds = random_dataset(rng, n=80)
    fit = fit_independent(ds, "probit")
    assert fit.max_score < 1e-6
    X = np.column_stack([ds.X, 2 * ds.X[:, 0]])
    from ordinal_ws import OrdinalDataset
    bad = OrdinalDataset(ds.cluster, ds.index, ds.y, X, ["a", "b", "c"], ds.K)
    with pytest.raises(ConvergenceError):
        fit_independent(bad, "probit")
