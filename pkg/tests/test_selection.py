import math

import numpy as np
import pytest

from ordinal_ws import CorrelationModel, OrdinalDataset, estimate_correlations, fit_independent
from ordinal_ws.selection import (CriteriaReport, assemble_H, assemble_J, cl1_criteria, cluster_scores, model_blocks,
                                  model_blocks_batch, model_search, rank_reports)

from conftest import random_dataset


def _mvn(rng, n, R, link="probit"):
    d = R.shape[0]
    X = rng.normal(size=(n * d, 1))
    Z = (rng.standard_normal((n, d)) @ np.linalg.cholesky(R).T).ravel() - 0.4 * X[:, 0]
    y = 1 + np.sum(Z[:, None] > np.array([-0.7, 0.2, 1.0])[None, :], axis=1)
    return OrdinalDataset(np.repeat(np.arange(n), d), np.tile(np.arange(d), n), y, X, ["x"], 4)


@pytest.fixture(scope="module")
def fitted():
    ds = random_dataset(np.random.default_rng(31), n=80, d=3, K=4, unbalanced=True)
    st = fit_independent(ds, "probit")
    cm = estimate_correlations(ds, st.params, "probit", "unstructured")
    return ds, st, cm


def test_H_block_structure(fitted):
    ds, st, cm = fitted
    H = assemble_H(ds, st.params, cm, "probit")
    r = ds.p + ds.q
    assert H.shape == (r + 3, r + 3)
    assert np.all(H[:r, r:] == 0)
    assert np.any(np.abs(H[r:, :r]) > 1e-6)
    assert np.all(np.linalg.eigvals(H).real > 0)


@pytest.mark.parametrize("mode", ["empirical", "model"])
def test_J_symmetric_psd(fitted, mode):
    ds, st, cm = fitted
    J = assemble_J(ds, st.params, cm, "probit", mode)
    assert np.allclose(J, J.T, atol=1e-14)
    assert np.min(np.linalg.eigvalsh(J)) > -1e-12


def test_model_J_identities(fitted):
    ds, st, cm = fitted
    H = assemble_H(ds, st.params, cm, "probit")
    J = assemble_J(ds, st.params, cm, "probit", "model")
    r = ds.p + ds.q
    # pairwise diagonal: E[u^2] on both sides; the univariate block picks up cross-time covariances
    assert np.allclose(np.diag(J)[r:], np.diag(H)[r:], atol=1e-12)
    assert not np.allclose(J[:r, :r], H[:r, :r], atol=1e-3)


def test_batched_blocks_match_single_cluster(fitted):
    ds, st, cm = fitted
    full = [i for i in range(ds.n) if ds.sizes[i] == 3][:4]
    B1, B12, B2 = model_blocks_batch(ds, st.params, cm, "probit", full)
    for k, i in enumerate(full):
        o1, o12, o2 = model_blocks(ds, st.params, cm, "probit", i)
        assert np.allclose(B1[k], o1) and np.allclose(B12[k], o12) and np.allclose(B2[k], o2)


def test_model_J_agrees_with_empirical_under_working_model():
    rng = np.random.default_rng(32)
    R = np.array([[1, .5, .3], [.5, 1, .5], [.3, .5, 1]])
    ds = _mvn(rng, 4000, R)
    st = fit_independent(ds, "probit")
    cm = estimate_correlations(ds, st.params, "probit", "unstructured")
    g = cluster_scores(ds, st.params, cm, "probit")
    Je = g.T @ g / ds.n
    Jm = assemble_J(ds, st.params, cm, "probit", "model")
    prod = g[:, :, None] * g[:, None, :]
    mcse = prod.std(axis=0, ddof=1) / math.sqrt(ds.n)
    z = np.abs(Je - Jm) / np.maximum(mcse, 1e-12)
    assert np.max(z) < 4.5


def test_trace_equals_dimension_under_independence():
    ds = random_dataset(np.random.default_rng(33), n=60, d=3)
    st = fit_independent(ds, "logit")
    cm = CorrelationModel.independence(ds.d)
    rep = cl1_criteria(ds, "logit", "independence", jmat="model", stage1=st, corr=cm)
    assert rep.penalty_trace == pytest.approx(ds.p + ds.q, abs=1e-9)
    assert rep.t == ds.p + ds.q


def test_criteria_relations_and_invariance():
    ds = random_dataset(np.random.default_rng(34), n=90, d=3, p=2)
    rep = cl1_criteria(ds, "probit", "ar1")
    assert rep.cl1bic - rep.cl1aic == pytest.approx((math.log(ds.n) - 2) * rep.penalty_trace)
    assert rep.cl1aic == pytest.approx(-2 * rep.L2 + 2 * rep.penalty_trace)
    perm = np.random.default_rng(1).permutation(ds.n)
    p2 = cl1_criteria(OrdinalDataset(perm[ds.cluster], ds.index, ds.y, ds.X, ds.names, ds.K), "probit", "ar1")
    sc = cl1_criteria(OrdinalDataset(ds.cluster, ds.index, ds.y, ds.X * [4.0, -0.25], ds.names, ds.K), "probit", "ar1")
    for other in (p2, sc):
        assert other.L2 == pytest.approx(rep.L2, abs=1e-6)
        assert other.penalty_trace == pytest.approx(rep.penalty_trace, abs=1e-6)


def test_free_parameter_count():
    ds = random_dataset(np.random.default_rng(35), n=50, d=4)
    r = ds.p + ds.q
    assert cl1_criteria(ds, "probit", "exchangeable").t == r + 1
    assert cl1_criteria(ds, "probit", "unstructured").t == r + 6


def test_model_search_isolates_failures():
    ds = random_dataset(np.random.default_rng(36), n=60, d=3, p=2)
    X = np.column_stack([ds.X, ds.X[:, 0]])
    dd = OrdinalDataset(ds.cluster, ds.index, ds.y, X, ["x1", "x2", "x1copy"], ds.K)
    ranked, failed = model_search(dd, ("probit",), ("exchangeable", "ar1"), [("x1",), ("x1", "x1copy")])
    assert len(ranked) == 2 and len(failed) == 2
    assert all(r.ok for r in ranked) and all("x1copy" in r.covariates for r in failed)
    assert ranked[0].cl1bic <= ranked[1].cl1bic


def test_rank_ties_prefer_fewer_parameters():
    a = CriteriaReport("probit", "unstructured", ("x",), cl1aic=1.0, cl1bic=5.0, t=9)
    b = CriteriaReport("probit", "exchangeable", ("x",), cl1aic=1.0, cl1bic=5.0, t=7)
    c = CriteriaReport("logit", "ar1", ("x",), cl1aic=1.0, cl1bic=5.0, t=7)
    assert [r.structure for r in rank_reports([a, b, c])] == ["ar1", "exchangeable", "unstructured"]


def test_probit_arthritis_panel(arthritis_full):
    # the criteria for the full probit model reproduce the reference panel to 0.05
    ref = {"exchangeable": (4280.92, 4357.81), "ar1": (4298.97, 4374.26), "unstructured": (4279.97, 4362.37)}
    for st, (aic, bic) in ref.items():
        rep = cl1_criteria(arthritis_full, "probit", st, jmat="model")
        assert rep.cl1aic == pytest.approx(aic, abs=0.05)
        assert rep.cl1bic == pytest.approx(bic, abs=0.05)
