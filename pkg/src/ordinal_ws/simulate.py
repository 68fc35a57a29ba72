"""Data generators and the replication harness for simulation experiments."""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, special, stats

from .data import OrdinalDataset
from .errors import ConvergenceError, DomainError, MatrixError
from .gauss import get_link
from .margins import UnivariateParams, shifted_cutpoints

log = logging.getLogger(__name__)

DESIGNS = ("efficiency", "structure", "variables")
SUBSETS = {"x1": ("x1",), "x12": ("x1", "t"), "x123": ("x1", "t", "x3"), "x1234": ("x1", "t", "x3", "x4")}


# ---------------------------------------------------------------------------
# copula samplers

def positive_stable(alpha: float, size, rng) -> np.ndarray:
    """V >= 0 with Laplace transform exp(-s^alpha), 0 < alpha <= 1 (Kanter / CMS)."""
    if not 0 < alpha <= 1:
        raise DomainError("stable index must lie in (0, 1]")
    if alpha == 1:
        return np.ones(size)
    U = rng.uniform(0.0, math.pi, size)
    W = rng.exponential(1.0, size)
    a = np.sin(alpha * U) / np.sin(U) ** (1.0 / alpha)
    b = (np.sin((1.0 - alpha) * U) / W) ** ((1.0 - alpha) / alpha)
    return a * b


def sample_gumbel(n_rows: int, d: int, theta: float, rng) -> np.ndarray:
    """Exchangeable Gumbel copula draws via the Marshall-Olkin frailty construction."""
    if not theta >= 1:
        raise DomainError(f"Gumbel parameter must be >= 1, got {theta}")
    V = positive_stable(1.0 / theta, n_rows, rng)
    E = rng.exponential(1.0, (n_rows, d))
    return np.exp(-((E / V[:, None]) ** (1.0 / theta)))


def sample_elliptical_copula(n_rows: int, R, family: str = "mvn", rng=None, df: float | None = None) -> np.ndarray:
    R = np.asarray(R, float)
    try:
        L = np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise MatrixError("copula correlation matrix is not positive definite") from None
    if not np.allclose(np.diag(R), 1.0):
        raise MatrixError("copula correlation matrix needs a unit diagonal")
    Z = rng.standard_normal((n_rows, R.shape[0])) @ L.T
    if family == "mvn":
        return special.ndtr(Z)
    if family == "mvt":
        if df is None or not df > 0:
            raise DomainError("mvt copula needs df > 0")
        W = rng.chisquare(df, n_rows) / df
        return stats.t.cdf(Z / np.sqrt(W)[:, None], df)
    raise DomainError(f"unknown elliptical family {family!r}")


def ordinalize(U, X, beta, gamma, link) -> np.ndarray:
    """Smallest y with U <= F(gamma_y + x'beta)."""
    link = get_link(link)
    G = shifted_cutpoints(np.concatenate([np.atleast_1d(beta), np.atleast_1d(gamma)]), np.atleast_2d(X))
    U = np.asarray(U, float).reshape(-1)
    return 1 + np.sum(U[:, None] > link.cdf(G), axis=1)


# ---------------------------------------------------------------------------
# designs

def covariate_design(design: str, n: int, d: int, rng):
    """Covariates for n clusters of size d, rows ordered by cluster then time.

    efficiency: x1 cluster-level Bernoulli(1/2) group, x2 Gumbel(tau=0.5)
      uniforms over time, x3 = x1*x2, x4 uniform(-1, 1) per row.
    structure: x1 Bernoulli(1/2) per row and the time index t = j - 1.
    variables: structure plus independent uniform(-1, 1) x3 and x4 per row.
    """
    N = n * d
    if design == "efficiency":
        x1 = np.repeat(rng.integers(0, 2, n).astype(float), d)
        x2 = sample_gumbel(n, d, 2.0, rng).ravel()
        x4 = rng.uniform(-1.0, 1.0, N)
        return np.column_stack([x1, x2, x1 * x2, x4]), ["x1", "x2", "x3", "x4"]
    if design in ("structure", "variables"):
        x1 = rng.integers(0, 2, N).astype(float)
        t = np.tile(np.arange(d, dtype=float), n)
        if design == "structure":
            return np.column_stack([x1, t]), ["x1", "t"]
        x3 = rng.uniform(-1.0, 1.0, N)
        x4 = rng.uniform(-1.0, 1.0, N)
        return np.column_stack([x1, t, x3, x4]), ["x1", "t", "x3", "x4"]
    raise DomainError(f"unknown covariate design {design!r}; choose from {DESIGNS}")


def equal_cutpoints(K: int, link="probit") -> np.ndarray:
    return get_link(link).quantile(np.arange(1, K) / K)


@dataclass
class SimDesign:
    """One simulation setting.

    ``copula`` is gumbel (param theta), mvn or mvt (param: correlation matrix
    or its upper triangle; ``df`` for mvt), or independence.
    ``task``: estimate (efficiency / Type I error), structure or variables
    (selection frequencies).
    """

    n: int
    B: int
    design: str = "efficiency"
    task: str = "estimate"
    d: int = 3
    K: int = 5
    link: str = "probit"
    copula: str = "gumbel"
    copula_param: object = 3.0
    df: float | None = None
    beta: tuple = (-0.5, 0.5, 0.5, 0.0)
    gamma: tuple | None = None
    seed: int = 2024
    working: str = "exchangeable"
    structures: tuple = ("exchangeable", "ar1", "unstructured")
    subsets: tuple = ("x1", "x12", "x123", "x1234")
    jmat: str = "empirical"
    test_coef: str = "x4"
    oracle: bool = False

    def __post_init__(self):
        if min(self.n, self.d, self.B) < 1 or self.K < 2:
            raise DomainError("n, d, B must be positive and K >= 2")
        if self.design not in DESIGNS:
            raise DomainError(f"unknown covariate design {self.design!r}")
        if self.task not in ("estimate", "structure", "variables"):
            raise DomainError(f"unknown task {self.task!r}")
        if self.gamma is None:
            self.gamma = tuple(equal_cutpoints(self.K, self.link).tolist())
        self.beta = tuple(float(b) for b in self.beta)
        self.gamma = tuple(float(g) for g in self.gamma)
        if len(self.gamma) != self.K - 1:
            raise DomainError("gamma needs K-1 cut points")
        if self.copula == "gumbel" and not float(self.copula_param) >= 1:
            raise DomainError("Gumbel parameter must be >= 1")
        if self.copula in ("mvn", "mvt"):
            self.corr_matrix()
            if self.copula == "mvt" and not (self.df and self.df > 0):
                raise DomainError("mvt copula needs df > 0")

    def corr_matrix(self) -> np.ndarray:
        R = np.asarray(self.copula_param, float)
        if R.ndim == 1:
            full = np.eye(self.d)
            full[np.triu_indices(self.d, 1)] = R
            R = full + np.triu(full, 1).T
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise MatrixError("copula correlation matrix is not positive definite") from None
        return R

    def sample_uniforms(self, rng) -> np.ndarray:
        if self.copula == "gumbel":
            return sample_gumbel(self.n, self.d, float(self.copula_param), rng)
        if self.copula == "independence":
            return rng.uniform(size=(self.n, self.d))
        return sample_elliptical_copula(self.n, self.corr_matrix(), self.copula, rng, self.df)

    def generate(self, rng) -> OrdinalDataset:
        X, names = covariate_design(self.design, self.n, self.d, rng)
        U = self.sample_uniforms(rng)
        y = ordinalize(U, X, self.beta, self.gamma, self.link)
        cluster = np.repeat(np.arange(self.n), self.d)
        index = np.tile(np.arange(self.d), self.n)
        return OrdinalDataset(cluster, index, y, X, names, self.K)

    def true_vector(self) -> np.ndarray:
        return np.array(self.beta + self.gamma)


def structure_design(n: int, B: int, seed: int = 2024, **kw) -> SimDesign:
    """Gumbel(theta=2) exchangeable truth with x = (x1, t); the 0.25 intercept sits in the cut points."""
    K = kw.pop("K", 5)
    gamma = tuple((equal_cutpoints(K) + 0.25).tolist())
    return SimDesign(n=n, B=B, design="structure", task="structure", K=K, copula="gumbel", copula_param=2.0,
                     beta=(-0.25, -0.25), gamma=gamma, seed=seed, **kw)


def variables_design(n: int, B: int, seed: int = 2024, **kw) -> SimDesign:
    K = kw.pop("K", 5)
    gamma = tuple((equal_cutpoints(K) + 0.25).tolist())
    return SimDesign(n=n, B=B, design="variables", task="variables", K=K, copula="gumbel", copula_param=2.0,
                     beta=(-0.25, -0.25, 0.0, 0.0), gamma=gamma, seed=seed, **kw)


# ---------------------------------------------------------------------------
# Gumbel maximum likelihood (reference estimator, d <= 3)

def gumbel_cdf(U, theta: float) -> np.ndarray:
    """Archimedean Gumbel copula cdf along the last axis."""
    U = np.asarray(U, float)
    with np.errstate(divide="ignore"):
        t = (-np.log(U)) ** theta
    s = np.sum(t, axis=-1)
    out = np.exp(-s ** (1.0 / theta))
    return np.where(np.any(U <= 0, axis=-1), 0.0, out)


def gumbel_cluster_pmf(data: OrdinalDataset, a, theta: float, link) -> np.ndarray:
    """Per-cluster probability of the observed responses by 2^m inclusion-exclusion."""
    link = get_link(link)
    G = shifted_cutpoints(a, data.X)
    n = len(G)
    pad = np.concatenate([np.zeros((n, 1)), link.cdf(G), np.ones((n, 1))], axis=1)
    hi = pad[np.arange(n), data.y]
    lo = pad[np.arange(n), data.y - 1]
    out = np.zeros(data.n)
    for grp in data.layout.groups:
        m = grp.m
        corners = np.array(np.meshgrid(*[[0, 1]] * m, indexing="ij")).reshape(m, -1).T  # 1 = lower
        sign = (-1.0) ** corners.sum(axis=1)
        Uh, Ul = hi[grp.obs], lo[grp.obs]
        Uc = np.where(corners[None, :, :] == 1, Ul[:, None, :], Uh[:, None, :])
        out[grp.clusters] = np.sum(sign * gumbel_cdf(Uc, theta), axis=1)
    return out


@dataclass
class OracleFit:
    params: UnivariateParams
    theta: float
    loglik: float
    se: np.ndarray  # for (beta, gamma, theta)
    converged: bool


def _unpack(z, p):
    beta = z[:p]
    g0 = z[p]
    inc = np.exp(z[p + 1:-1])
    gamma = g0 + np.concatenate([[0.0], np.cumsum(inc)])
    theta = 1.0 + math.exp(z[-1])
    return beta, gamma, theta


def gumbel_ml_oracle(data: OrdinalDataset, link="probit", start=None) -> OracleFit:
    """Full maximum likelihood for ordinal margins joined by an exchangeable Gumbel copula.

    theta = 1 + exp(tau) keeps the iterate admissible.  Standard errors come
    from a central-difference Hessian in the natural parameters.
    """
    link = get_link(link)
    if data.d > 3:
        raise DomainError("the Gumbel likelihood reference is limited to d <= 3")
    p, q = data.p, data.q
    if start is None:
        from .margins import fit_independent
        a0 = fit_independent(data, link).a
        theta0 = 1.5
    else:
        a0, theta0 = np.asarray(start[0], float), float(start[1])
    z0 = np.concatenate([a0[:p], [a0[p]], np.log(np.diff(a0[p:])), [math.log(max(theta0 - 1, 1e-3))]])

    def nll_natural(v):
        beta, gamma, theta = v[:p], v[p:p + q], v[-1]
        if theta < 1 or np.any(np.diff(gamma) <= 0):
            return 1e300
        pm = gumbel_cluster_pmf(data, np.concatenate([beta, gamma]), theta, link)
        return -float(np.sum(np.log(np.maximum(pm, 1e-300))))

    def nll(z):
        beta, gamma, theta = _unpack(z, p)
        return nll_natural(np.concatenate([beta, gamma, [theta]]))

    res = optimize.minimize(nll, z0, method="BFGS", options={"gtol": 1e-6, "maxiter": 2000})
    beta, gamma, theta = _unpack(res.x, p)
    v = np.concatenate([beta, gamma, [theta]])
    k = len(v)
    Hm = np.zeros((k, k))
    h = 1e-4 * np.maximum(1.0, np.abs(v))
    for i in range(k):
        for j in range(i, k):
            ei, ej = np.eye(k)[i] * h[i], np.eye(k)[j] * h[j]
            Hm[i, j] = Hm[j, i] = (nll_natural(v + ei + ej) - nll_natural(v + ei - ej)
                                   - nll_natural(v - ei + ej) + nll_natural(v - ei - ej)) / (4 * h[i] * h[j])
    try:
        se = np.sqrt(np.maximum(np.diag(np.linalg.inv(Hm)), 0.0))
    except np.linalg.LinAlgError:
        se = np.full(k, np.nan)
    # BFGS often stops on precision loss near the optimum; judge by a central gradient
    grad = np.array([(nll_natural(v + np.eye(k)[i] * h[i]) - nll_natural(v - np.eye(k)[i] * h[i])) / (2 * h[i])
                     for i in range(k)])
    converged = bool(res.success) or float(np.max(np.abs(grad))) < 1e-2
    return OracleFit(UnivariateParams(beta, gamma), theta, -float(res.fun), se, converged)


# ---------------------------------------------------------------------------
# harness

def replication_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(r)]))


def _one_replication(args):
    design, r = args
    from .selection import model_search
    from .wscore import solve_weighted_scores
    rng = replication_rng(design.seed, r)
    data = design.generate(rng)
    out = {"r": r}
    try:
        if design.task == "estimate":
            fit = solve_weighted_scores(data, design.link, structure=design.working)
            out["ws"] = (fit.estimates.tolist(), fit.se.tolist())
            if design.oracle:
                orc = gumbel_ml_oracle(data, design.link)
                out["ml"] = (orc.params.vector.tolist(), orc.se[:-1].tolist())
        elif design.task == "structure":
            ranked, failed = model_search(data, design.link, design.structures, (None,), jmat=design.jmat)
            if failed:
                raise ConvergenceError(failed[0].error)
            out["cl1aic"] = min(ranked, key=lambda c: (c.cl1aic, c.t)).structure
            out["cl1bic"] = min(ranked, key=lambda c: (c.cl1bic, c.t)).structure
        else:
            subsets = [SUBSETS[s] for s in design.subsets]
            ranked, failed = model_search(data, design.link, (design.working,), subsets, jmat=design.jmat)
            if failed:
                raise ConvergenceError(failed[0].error)
            label = {v: k for k, v in SUBSETS.items()}
            out["cl1aic"] = label[min(ranked, key=lambda c: (c.cl1aic, c.t)).covariates]
            out["cl1bic"] = label[min(ranked, key=lambda c: (c.cl1bic, c.t)).covariates]
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


@dataclass
class SimSummary:
    """Aggregates over successful replications.

    Moments are scaled by n: ``bias`` = n * mean error, ``sd`` = n * SD with
    divisor B-1, ``rmse`` = n * sqrt(mean squared error), and ``sqrt_v`` =
    n * sqrt(mean of the estimated variances).  Hence
    rmse^2 = bias^2 + sd^2 (B-1)/B exactly.
    """

    design: dict
    B: int
    n_ok: int
    names: list[str] = field(default_factory=list)
    bias: dict = field(default_factory=dict)
    sd: dict = field(default_factory=dict)
    rmse: dict = field(default_factory=dict)
    sqrt_v: dict = field(default_factory=dict)
    rejection: dict = field(default_factory=dict)      # estimator -> {alpha: rate}
    frequencies: dict = field(default_factory=dict)    # criterion -> {candidate: count}
    failures: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def table(self, digits: int = 2) -> str:
        lines = []
        if self.bias:
            w = max(len(s) for s in self.names) + 2
            for est in self.bias:
                lines.append(f"[{est}]  n = {self.design['n']}, successful replications {self.n_ok}/{self.B}")
                lines.append("".ljust(12) + "".join(s.rjust(w + 6) for s in self.names))
                for lab, src in (("n Bias", self.bias), ("n SD", self.sd), ("n RMSE", self.rmse),
                                 ("n sqrt(V)", self.sqrt_v)):
                    lines.append(lab.ljust(12) + "".join(f"{v:{w + 6}.{digits}f}" for v in src[est]))
                if est in self.rejection:
                    rates = ", ".join(f"alpha={a}: {v:.3f}" for a, v in self.rejection[est].items())
                    lines.append(f"Type I error for {self.design['test_coef']}: {rates}")
        for crit, freq in self.frequencies.items():
            lines.append(f"{crit.upper()}: " + "  ".join(f"{k}={v}" for k, v in freq.items()))
        if self.failures:
            lines.append(f"failed replications: {len(self.failures)}")
        return "\n".join(lines)


def summarize(design: SimDesign, results: list[dict]) -> SimSummary:
    ok = [r for r in results if "error" not in r]
    failed = [(r["r"], r["error"]) for r in results if "error" in r]
    if len(failed) > 0.05 * design.B:
        raise ConvergenceError(f"{len(failed)} of {design.B} replications failed; first: {failed[0][1]}")
    summ = SimSummary(asdict(design), design.B, len(ok), failures=failed)
    n = design.n
    if design.task == "estimate":
        names = covariate_design(design.design, 1, design.d, np.random.default_rng(0))[1]
        names = names + [f"alpha{m + 1}" for m in range(design.K - 1)]
        summ.names = names
        truth = design.true_vector()
        jtest = names.index(design.test_coef) if design.test_coef in names else None
        for est in ("ws", "ml"):
            if not ok or est not in ok[0]:
                continue
            E = np.array([r[est][0] for r in ok])
            S = np.array([r[est][1] for r in ok])
            err = E - truth
            summ.bias[est] = (n * err.mean(0)).tolist()
            summ.sd[est] = (n * E.std(0, ddof=1)).tolist() if len(E) > 1 else [0.0] * len(names)
            summ.rmse[est] = (n * np.sqrt((err ** 2).mean(0))).tolist()
            summ.sqrt_v[est] = (n * np.sqrt((S ** 2).mean(0))).tolist()
            if jtest is not None:
                z = np.abs(E[:, jtest] / S[:, jtest])
                summ.rejection[est] = {str(a): float(np.mean(2 * special.ndtr(-z) < a)) for a in (0.01, 0.05, 0.1)}
    else:
        cands = list(design.structures) if design.task == "structure" else list(design.subsets)
        for crit in ("cl1aic", "cl1bic"):
            c = Counter(r[crit] for r in ok)
            summ.frequencies[crit] = {k: int(c.get(k, 0)) for k in cands}
    return summ


def run_replications(design: SimDesign, threads: int = 1, progress=None) -> SimSummary:
    """Run B replications; replication r uses the stream SeedSequence([seed, r])."""
    jobs = [(design, r) for r in range(design.B)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_one_replication, jobs, chunksize=max(1, design.B // (4 * threads))))
    else:
        results = []
        for j in jobs:
            results.append(_one_replication(j))
            if progress:
                progress(len(results), design.B)
    return summarize(design, results)
