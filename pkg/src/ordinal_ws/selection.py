"""CL1 information criteria for choosing covariates and correlation structure.

The composite estimating function of cluster i stacks
  g_1i = X_i' s_i           (univariate scores, r entries)
  g_2i = A' u_i             (pairwise correlation scores, one per free parameter)
where u_i holds d log f2 / d rho summed per (j<k) slot and A is the
structure Jacobian d rho / d theta.  Both matrices below are averaged over
clusters.  ``H`` is the sensitivity with the sign flipped, -E[dg/dtheta]/n,
so it is positive definite for identified models and block lower-triangular
(g_1 does not involve the correlations).
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cl1 import CorrelationModel, cl1_loglik, estimate_correlations, normal_cuts, pair_rho_scores, structure_name
from .data import OrdinalDataset
from .errors import IdentifiabilityError
from .gauss import Link, bvn_lattice_derivs, get_link, mvn_lattice, norm_pdf
from .margins import (UnivariateParams, design_blocks, fisher_blocks, fit_independent, scores, score_table,
                      shifted_cutpoints, xt_rows)

log = logging.getLogger(__name__)

_FLOOR = 1e-300
_CHUNK = 64  # clusters per model-J batch; bounds quadrature memory


@dataclass
class Cl1Matrices:
    H: np.ndarray
    J: np.ndarray
    r: int          # univariate block size
    n_corr: int     # free correlation parameters

    @property
    def t(self) -> int:
        return self.r + self.n_corr

    @property
    def penalty_trace(self) -> float:
        try:
            return float(np.trace(np.linalg.solve(self.H.T, self.J.T).T))
        except np.linalg.LinAlgError:
            raise IdentifiabilityError("singular CL1 sensitivity matrix") from None


@dataclass
class CriteriaReport:
    link: str
    structure: str
    covariates: tuple
    cl1aic: float = math.nan
    cl1bic: float = math.nan
    L2: float = math.nan
    penalty_trace: float = math.nan
    n: int = 0
    t: int = 0
    theta: tuple = ()
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def descriptor(self) -> str:
        return f"{self.link}/{self.structure}/{'+'.join(self.covariates) or '1'}"

    def to_dict(self) -> dict:
        return {"link": self.link, "structure": self.structure, "covariates": list(self.covariates),
                "cl1aic": self.cl1aic, "cl1bic": self.cl1bic, "L2": self.L2, "trace": self.penalty_trace,
                "n": self.n, "t": self.t, "theta": list(self.theta), "error": self.error}


def _vec(a):
    return a.vector if isinstance(a, UnivariateParams) else np.asarray(a, float)


# ---------------------------------------------------------------------------
# sensitivity

def pair_expectations(link: Link, G, Z, pa, pb, rho):
    """Per observed pair: E[u^2] and E[u * d log f2 / d gamma] for both rows.

    Returns (Euu (P,), Ea (P, q), Eb (P, q)).
    """
    D = bvn_lattice_derivs(Z[pa], Z[pb], rho)
    P = np.maximum(D["P"], _FLOOR)
    dr = D["drho"]
    w = dr / P
    Euu = np.sum(dr * w, axis=(-1, -2))
    # a cut m is the upper bound of row m and the lower bound of row m+1
    ga = D["da_hi"][:, :-1, :]
    Ea = np.sum(ga * (w[:, :-1, :] - w[:, 1:, :]), axis=-1)
    gb = D["db_hi"][:, :, :-1]
    Eb = np.sum(gb * (w[:, :, :-1] - w[:, :, 1:]), axis=-2)
    dz = link.pdf(G) / np.maximum(norm_pdf(Z), _FLOOR)
    return Euu, Ea * dz[pa], Eb * dz[pb]


def assemble_H(data: OrdinalDataset, a_hat, corr_hat: CorrelationModel, link) -> np.ndarray:
    """Sensitivity -E[dg/dtheta] averaged over clusters; (t, t)."""
    link = get_link(link)
    a = _vec(a_hat)
    n, q = data.n, data.q
    G = shifted_cutpoints(a, data.X)
    Xb = design_blocks(data.X, q)
    H11 = np.einsum("nqr,nqs,nst->rt", Xb, fisher_blocks(link, G), Xb) / n
    r = H11.shape[0]
    A = corr_hat.jacobian()
    nc = A.shape[1]
    H = np.zeros((r + nc, r + nc))
    H[:r, :r] = H11
    if nc:
        lay = data.layout
        Z = normal_cuts(link, G)
        rho = corr_hat.slot_values()[lay.pair_slot]
        Euu, Ea, Eb = pair_expectations(link, G, Z, lay.pair_a, lay.pair_b, rho)
        ns = len(lay.slots)
        per_slot = np.bincount(lay.pair_slot, weights=Euu, minlength=ns)
        H[r:, r:] = A.T @ (per_slot[:, None] * A) / n
        rows = xt_rows(data.X[lay.pair_a], Ea) + xt_rows(data.X[lay.pair_b], Eb)   # (P, r)
        S = np.zeros((ns, r))
        np.add.at(S, lay.pair_slot, rows)
        H[r:, :r] = A.T @ S / n
    return H


# ---------------------------------------------------------------------------
# variability

def cluster_scores(data: OrdinalDataset, a_hat, corr_hat: CorrelationModel, link) -> np.ndarray:
    """(n, t) composite scores g_i."""
    link = get_link(link)
    a = _vec(a_hat)
    G = shifted_cutpoints(a, data.X)
    rows = xt_rows(data.X, scores(link, G, data.y))
    g1 = np.zeros((data.n, rows.shape[1]))
    np.add.at(g1, data.cluster, rows)
    A = corr_hat.jacobian()
    if A.shape[1] == 0:
        return g1
    lay = data.layout
    u = pair_rho_scores(data, a, link, corr_hat)
    U = np.zeros((data.n, len(lay.slots)))
    np.add.at(U, (lay.pair_cluster, lay.pair_slot), u)
    return np.concatenate([g1, U @ A], axis=1)


def _einsum_expect(Pj, factors):
    """Sum over joint cells of Pj times the factors, batched over a leading axis.

    ``Pj`` is (nb, K_1, ..., K_D).  ``factors`` is a list of (array, axes):
    the array is (nb, K_a, ...) indexed by the given lattice axes, with at
    most one trailing free dimension that is kept in the output.
    """
    letters = "abcd"
    sub_p = "n" + letters[:Pj.ndim - 1]
    subs, out, free = [], "n", iter("wxyz")
    ops = [Pj]
    for arr, axes in factors:
        s = "n" + "".join(letters[x] for x in axes)
        if arr.ndim > len(axes) + 1:
            c = next(free)
            s += c
            out += c
        subs.append(s)
        ops.append(arr)
    return np.einsum(f"{sub_p},{','.join(subs)}->{out}", *ops)


def model_blocks_batch(data: OrdinalDataset, a_hat, corr_hat: CorrelationModel, link, clusters):
    """Working-model covariance blocks for clusters sharing one time pattern.

    Returns (Omega1 (nb, mq, mq), Omega12 (nb, mq, npair), Omega2 (nb, npair,
    npair)) for s_i and the per-pair correlation scores u_i, built from
    bivariate, trivariate and four-variate normal cells.
    """
    link = get_link(link)
    a = _vec(a_hat)
    q = data.q
    clusters = np.atleast_1d(np.asarray(clusters))
    starts = np.concatenate([[0], np.cumsum(data.sizes)])
    m = int(data.sizes[clusters[0]])
    rows = starts[clusters][:, None] + np.arange(m)[None, :]   # (nb, m)
    tslot = data.index[rows[0]]
    if np.any(data.sizes[clusters] != m) or np.any(data.index[rows] != tslot):
        raise ValueError("clusters in a batch must share their time pattern")
    nb = len(clusters)
    G = shifted_cutpoints(a, data.X[rows.ravel()]).reshape(nb, m, q)
    Z = normal_cuts(link, G)
    R = corr_hat.matrix()
    pairs = list(itertools.combinations(range(m), 2))
    npair = len(pairs)
    ST = score_table(link, G.reshape(nb * m, q)).reshape(nb, m, q + 1, q)

    Om1 = np.zeros((nb, m * q, m * q))
    Dg = fisher_blocks(link, G.reshape(nb * m, q)).reshape(nb, m, q, q)
    for u in range(m):
        Om1[:, u * q:(u + 1) * q, u * q:(u + 1) * q] = Dg[:, u]
    Hu, Om2 = [], np.zeros((nb, npair, npair))
    for k, (u, v) in enumerate(pairs):
        rho = R[tslot[u], tslot[v]]
        D = bvn_lattice_derivs(Z[:, u], Z[:, v], np.full(nb, rho))
        P = np.maximum(D["P"], _FLOOR)
        Hu.append(D["drho"] / P)
        Om2[:, k, k] = np.sum(D["drho"] * Hu[-1], axis=(-1, -2))
        # E[s_u s_v'] from the same cells
        blk = np.einsum("nab,nai,nbj->nij", D["P"], ST[:, u], ST[:, v])
        Om1[:, u * q:(u + 1) * q, v * q:(v + 1) * q] = blk
        Om1[:, v * q:(v + 1) * q, u * q:(u + 1) * q] = np.swapaxes(blk, 1, 2)

    cache: dict[tuple, np.ndarray] = {}

    def joint(key):
        if key not in cache:
            idx = list(key)
            cache[key] = mvn_lattice([Z[:, w] for w in idx], R[np.ix_(tslot[idx], tslot[idx])])
        return cache[key]

    Om12 = np.zeros((nb, m * q, npair))
    for k, (u, v) in enumerate(pairs):
        for w in range(m):
            if w in (u, v):
                continue  # E[s_w u_wv] = 0: the margin of Y_w is free of rho
            key = tuple(sorted((u, v, w)))
            ax = {x: key.index(x) for x in key}
            Om12[:, w * q:(w + 1) * q, k] = _einsum_expect(joint(key), [(ST[:, w], (ax[w],)), (Hu[k], (ax[u], ax[v]))])
    for k, (u, v) in enumerate(pairs):
        for l in range(k + 1, npair):
            s, t = pairs[l]
            key = tuple(sorted({u, v, s, t}))
            ax = {x: key.index(x) for x in key}
            val = _einsum_expect(joint(key), [(Hu[k], (ax[u], ax[v])), (Hu[l], (ax[s], ax[t]))])
            Om2[:, k, l] = Om2[:, l, k] = val
    return Om1, Om12, Om2


def model_blocks(data: OrdinalDataset, a_hat, corr_hat: CorrelationModel, link, i: int):
    """Working-model covariance blocks of cluster i (see model_blocks_batch)."""
    Om1, Om12, Om2 = model_blocks_batch(data, a_hat, corr_hat, link, [i])
    return Om1[0], Om12[0], Om2[0]


def _patterns(data: OrdinalDataset):
    """Clusters grouped by their tuple of time slots."""
    starts = np.concatenate([[0], np.cumsum(data.sizes)])
    groups: dict[tuple, list[int]] = {}
    for i in range(data.n):
        groups.setdefault(tuple(data.index[starts[i]:starts[i + 1]].tolist()), []).append(i)
    return groups


def assemble_J(data: OrdinalDataset, a_hat, corr_hat: CorrelationModel, link, mode: str = "empirical") -> np.ndarray:
    """Variability of the composite scores, averaged over clusters; (t, t)."""
    link = get_link(link)
    if mode == "empirical":
        g = cluster_scores(data, a_hat, corr_hat, link)
        return g.T @ g / data.n
    if mode != "model":
        raise ValueError(f"unknown J mode {mode!r}")
    a = _vec(a_hat)
    q = data.q
    Xb = design_blocks(data.X, q)
    r = Xb.shape[-1]
    A = corr_hat.jacobian()
    nc = A.shape[1]
    J = np.zeros((r + nc, r + nc))
    starts = np.concatenate([[0], np.cumsum(data.sizes)])
    slot_of = {pair: s for s, pair in enumerate(corr_hat.slots)}
    chunks = [(pattern, np.array(cl[s:s + _CHUNK])) for pattern, cl in _patterns(data).items()
              for s in range(0, len(cl), _CHUNK)]
    for pattern, cl in chunks:
        m = len(pattern)
        Om1, Om12, Om2 = model_blocks_batch(data, a, corr_hat, link, cl)
        rows = (starts[cl][:, None] + np.arange(m)[None, :]).ravel()
        Xi = Xb[rows].reshape(len(cl), m * q, r)
        J[:r, :r] += np.einsum("nar,nab,nbs->rs", Xi, Om1, Xi)
        if nc and m > 1:
            Ai = np.array([A[slot_of[(pattern[u], pattern[v])]] for u, v in itertools.combinations(range(m), 2)])
            c = np.einsum("nar,nak->rk", Xi, Om12) @ Ai
            J[:r, r:] += c
            J[r:, :r] += c.T
            J[r:, r:] += Ai.T @ Om2.sum(axis=0) @ Ai
    J /= data.n
    return 0.5 * (J + J.T)


# ---------------------------------------------------------------------------
# criteria

def cl1_matrices(data, a_hat, corr_hat, link, jmat="empirical") -> Cl1Matrices:
    H = assemble_H(data, a_hat, corr_hat, link)
    J = assemble_J(data, a_hat, corr_hat, link, jmat)
    return Cl1Matrices(H, J, data.p + data.q, corr_hat.theta.size)


def cl1_criteria(data: OrdinalDataset, link, structure: str = "exchangeable", covariates=None, *,
                 jmat: str = "empirical", stage1=None, corr: CorrelationModel | None = None) -> CriteriaReport:
    """Fit the CL1 model (independence margins, then pairwise correlations) and score it."""
    link = get_link(link)
    data = data.select(covariates)
    structure = structure_name(structure)
    if stage1 is None:
        stage1 = fit_independent(data, link)
    if corr is None:
        corr = estimate_correlations(data, stage1.params, link, structure)
    mats = cl1_matrices(data, stage1.params, corr, link, jmat)
    tr = mats.penalty_trace
    L2 = cl1_loglik(data, stage1.params, link, corr).value
    return CriteriaReport(link.name, corr.structure, tuple(data.names), -2 * L2 + 2 * tr,
                          -2 * L2 + math.log(data.n) * tr, L2, tr, data.n, mats.t, tuple(corr.theta.tolist()))


def _run_candidate(args):
    data, link, structure, covs, jmat = args
    try:
        return cl1_criteria(data, link, structure, covs, jmat=jmat)
    except Exception as exc:  # reported, excluded from ranking
        name = get_link(link).name
        covs_t = tuple(data.select(covs).names) if covs is not None else tuple(data.names)
        return CriteriaReport(name, structure_name(structure), covs_t, error=f"{type(exc).__name__}: {exc}")


def rank_reports(reports, criterion: str = "cl1bic"):
    """Successful reports sorted by the criterion, then size, then descriptor."""
    ok = [r for r in reports if r.ok]
    return sorted(ok, key=lambda r: (getattr(r, criterion), r.t, r.descriptor))


def model_search(data: OrdinalDataset, links=("probit",), structures=("exchangeable",), covariate_subsets=(None,),
                 *, criterion: str = "cl1bic", jmat: str = "empirical", threads: int = 1):
    """Score every (link, structure, covariates) candidate.

    Returns (ranked successful reports, failed reports).
    """
    if isinstance(links, (str, Link)):
        links = (links,)
    if isinstance(structures, str):
        structures = (structures,)
    cands = [(data, lk, st, cv, jmat) for lk in links for st in structures for cv in covariate_subsets]
    if not cands:
        raise ValueError("no candidate models")
    if threads > 1 and len(cands) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            reports = list(ex.map(_run_candidate, cands))
    else:
        reports = [_run_candidate(c) for c in cands]
    failed = [r for r in reports if not r.ok]
    for r in failed:
        log.warning("candidate %s failed: %s", r.descriptor, r.error)
    return rank_reports(reports, criterion), failed
