"""Univariate cumulative-link ordinal regression.

P(Y <= y | x) = F(alpha_y + x'beta) with F the link cdf, alpha_0 = -inf,
alpha_K = +inf.  All per-observation quantities are vectorised over the rows
of a dataset; the per-row parameter is the shifted cut vector
gamma_ij = alpha + x_ij'beta.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import OrdinalDataset
from .errors import ConvergenceError, DomainError, EvaluationError
from .gauss import Link, get_link

log = logging.getLogger(__name__)


@dataclass
class UnivariateParams:
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if self.gamma.size < 1:
            raise DomainError("at least one cut point is required (K >= 2)")
        if np.any(np.diff(self.gamma) <= 0):
            raise DomainError("cut points must be strictly increasing")

    @property
    def p(self) -> int:
        return self.beta.size

    @property
    def q(self) -> int:
        return self.gamma.size

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.beta, self.gamma])

    @classmethod
    def from_vector(cls, a, p: int) -> "UnivariateParams":
        a = np.asarray(a, dtype=float)
        return cls(a[:p], a[p:])


def _split(a, p):
    if isinstance(a, UnivariateParams):
        return a.beta, a.gamma
    a = np.asarray(a, dtype=float)
    return a[:p], a[p:]


def shifted_cutpoints(a, X) -> np.ndarray:
    """(N, q) array of alpha_m + x_ij'beta."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    beta, gamma = _split(a, X.shape[1])
    return gamma[None, :] + (X @ beta)[:, None]


def pmf_table(link: Link, G) -> np.ndarray:
    """(N, K) category probabilities from shifted cuts G (N, q)."""
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    lo = np.concatenate([np.full((n, 1), -np.inf), G], axis=1)
    hi = np.concatenate([G, np.full((n, 1), np.inf)], axis=1)
    # difference the upper tails when the cell sits right of zero
    right = lo > 0
    with np.errstate(invalid="ignore"):
        upper = link.sf(lo) - link.sf(hi)
        lower = link.cdf(hi) - link.cdf(lo)
    return np.where(right, upper, lower)


def cdf_table(link: Link, G) -> np.ndarray:
    """(N, K+1) cumulative probabilities with 0 and 1 at the ends."""
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    return np.concatenate([np.zeros((n, 1)), link.cdf(G), np.ones((n, 1))], axis=1)


def scores(link: Link, G, y) -> np.ndarray:
    """(N, q) scores d log f1 / d gamma_ij at the observed categories."""
    G = np.asarray(G, dtype=float)
    y0 = np.asarray(y, dtype=np.int64) - 1
    n, q = G.shape
    pm = pmf_table(link, G)
    py = pm[np.arange(n), y0]
    if np.any(py <= 0):
        bad = int(np.flatnonzero(py <= 0)[0])
        raise EvaluationError(f"observation {bad} has zero probability under the model")
    f = link.pdf(G)
    m = np.arange(q)[None, :]
    ind = (m == y0[:, None]).astype(float) - (m == (y0[:, None] - 1)).astype(float)
    return f * ind / py[:, None]


def score_table(link: Link, G) -> np.ndarray:
    """(N, K, q) scores for every possible category of every row."""
    G = np.asarray(G, dtype=float)
    n, q = G.shape
    K = q + 1
    pm = pmf_table(link, G)
    f = link.pdf(G)
    D = np.zeros((K, q))
    D[np.arange(q), np.arange(q)] = 1.0
    D[np.arange(1, K), np.arange(q)] = -1.0
    return f[:, None, :] * D[None, :, :] / pm[:, :, None]


def fisher_blocks(link: Link, G) -> np.ndarray:
    """(N, q, q) tridiagonal expected information of the shifted cuts."""
    G = np.asarray(G, dtype=float)
    n, q = G.shape
    pm = pmf_table(link, G)
    f = link.pdf(G)
    out = np.zeros((n, q, q))
    idx = np.arange(q)
    out[:, idx, idx] = f * f * (1.0 / pm[:, :-1] + 1.0 / pm[:, 1:])
    if q > 1:
        off = -f[:, :-1] * f[:, 1:] / pm[:, 1:-1]
        out[:, idx[:-1], idx[1:]] = off
        out[:, idx[1:], idx[:-1]] = off
    return out


def design_blocks(X, q: int) -> np.ndarray:
    """(N, q, r) blocks X_ij = [x_ij' repeated over q rows | I_q]."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, p = X.shape
    out = np.zeros((n, q, p + q))
    out[:, :, :p] = X[:, None, :]
    out[:, np.arange(q), p + np.arange(q)] = 1.0
    return out


def xt_rows(X, V) -> np.ndarray:
    """Per-row X_ij' v_ij for q-vectors V (N, q); returns (N, r)."""
    return np.concatenate([X * V.sum(axis=1, keepdims=True), V], axis=1)


def loglik_terms(link: Link, G, y) -> np.ndarray:
    pm = pmf_table(link, G)
    py = pm[np.arange(len(pm)), np.asarray(y) - 1]
    with np.errstate(divide="ignore"):
        return np.log(py)


def _observed_hessian_blocks(link: Link, G, y) -> np.ndarray:
    n, q = G.shape
    y0 = np.asarray(y) - 1
    pm = pmf_table(link, G)
    py = pm[np.arange(n), y0]
    has_hi = y0 < q
    has_lo = y0 >= 1
    ihi = np.minimum(y0, q - 1)
    ilo = np.maximum(y0 - 1, 0)
    ghi = G[np.arange(n), ihi]
    glo = G[np.arange(n), ilo]
    fhi = np.where(has_hi, link.pdf(ghi), 0.0)
    flo = np.where(has_lo, link.pdf(glo), 0.0)
    dfhi = np.where(has_hi, link.dpdf(ghi), 0.0)
    dflo = np.where(has_lo, link.dpdf(glo), 0.0)
    M = np.zeros((n, q, q))
    r = np.arange(n)
    hh = dfhi / py - (fhi / py) ** 2
    ll = -dflo / py - (flo / py) ** 2
    hl = fhi * flo / py ** 2
    M[r[has_hi], ihi[has_hi], ihi[has_hi]] += hh[has_hi]
    M[r[has_lo], ilo[has_lo], ilo[has_lo]] += ll[has_lo]
    both = has_hi & has_lo
    M[r[both], ihi[both], ilo[both]] += hl[both]
    M[r[both], ilo[both], ihi[both]] += hl[both]
    return M


# ---------------------------------------------------------------------------
# single-observation API

def _one(params: UnivariateParams, x):
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    if x.shape[1] != params.p:
        raise DomainError(f"covariate row has {x.shape[1]} entries, expected {params.p}")
    return shifted_cutpoints(params, x)


def ordinal_pmf(params: UnivariateParams, link, x, y: int) -> float:
    link = get_link(link)
    K = params.q + 1
    if not 1 <= int(y) <= K:
        raise DomainError(f"category {y} outside 1..{K}")
    return float(pmf_table(link, _one(params, x))[0, int(y) - 1])


def score_gamma(params: UnivariateParams, link, x, y: int) -> np.ndarray:
    link = get_link(link)
    K = params.q + 1
    if not 1 <= int(y) <= K:
        raise DomainError(f"category {y} outside 1..{K}")
    return scores(link, _one(params, x), [int(y)])[0]


def fisher_block(params: UnivariateParams, link, x) -> np.ndarray:
    return fisher_blocks(get_link(link), _one(params, x))[0]


# ---------------------------------------------------------------------------
# independence MLE

@dataclass
class MarginalFit:
    params: UnivariateParams
    loglik: float
    iterations: int
    max_score: float
    names: list[str]
    history: list = field(default_factory=list)

    @property
    def a(self) -> np.ndarray:
        return self.params.vector


def param_names(data: OrdinalDataset) -> list[str]:
    return list(data.names) + [f"alpha{m + 1}" for m in range(data.q)]


def independent_score(data: OrdinalDataset, link: Link, a) -> np.ndarray:
    G = shifted_cutpoints(a, data.X)
    s = scores(link, G, data.y)
    return xt_rows(data.X, s).sum(axis=0)


def initial_params(data: OrdinalDataset, link: Link) -> UnivariateParams:
    counts = data.check_categories()
    cum = np.cumsum(counts)[:-1] / counts.sum()
    return UnivariateParams(np.zeros(data.p), link.quantile(cum))


def fit_independent(data: OrdinalDataset, link, covariates=None, *, tol_score: float = 1e-6,
                    tol_step: float = 1e-8, max_iter: int = 100, start=None) -> MarginalFit:
    """Maximum likelihood under within-cluster independence (Newton-Raphson).

    Steps that break the cut-point ordering or lower the log-likelihood are
    halved, at most 30 times.
    """
    link = get_link(link)
    data = data.select(covariates)
    p = data.p
    a = np.asarray(start, float) if start is not None else initial_params(data, link).vector
    Xb = design_blocks(data.X, data.q)

    def evaluate(a):
        G = shifted_cutpoints(a, data.X)
        return loglik_terms(link, G, data.y).sum(), G

    L, G = evaluate(a)
    history = []
    for it in range(1, max_iter + 1):
        s = scores(link, G, data.y)
        g = xt_rows(data.X, s).sum(axis=0)
        M = _observed_hessian_blocks(link, G, data.y)
        negH = -np.einsum("nqr,nqs,nst->rt", Xb, M, Xb)
        try:
            np.linalg.cholesky(negH)
        except np.linalg.LinAlgError:
            negH = np.einsum("nqr,nqs,nst->rt", Xb, fisher_blocks(link, G), Xb)
        try:
            step = np.linalg.solve(negH, g)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular information matrix: covariates are collinear",
                                   a, history) from None
        gmax = float(np.max(np.abs(g)))
        history.append((it, L, gmax))
        if gmax <= tol_score and np.max(np.abs(step)) <= tol_step:
            a = a + step
            L, G = evaluate(a)
            gfinal = float(np.max(np.abs(independent_score(data, link, a))))
            return MarginalFit(UnivariateParams.from_vector(a, p), float(L), it, gfinal,
                               param_names(data), history)
        t = 1.0
        for _ in range(31):
            cand = a + t * step
            if np.all(np.diff(cand[p:]) > 0):
                Lc, Gc = evaluate(cand)
                if np.isfinite(Lc) and Lc >= L - 1e-10 * max(1.0, abs(L)):
                    break
            t *= 0.5
        else:
            raise ConvergenceError("step halving failed to restore ordering / ascent", a, history)
        a, L, G = cand, Lc, Gc
    raise ConvergenceError(f"no convergence in {max_iter} iterations", a, history)
