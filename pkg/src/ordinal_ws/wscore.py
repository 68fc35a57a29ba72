"""Weighted scores estimating equations with a discretized normal working model.

Pipeline: independence MLE -> pairwise-likelihood latent correlations ->
working weight matrices W^{-1} = Delta Omega^{-1} frozen at that fit ->
Newton iterations on sum_i X_i' W_i^{-1} s_i(a) = 0 -> sandwich covariance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .cl1 import CorrelationModel, estimate_correlations, normal_cuts, structure_name
from .data import OrdinalDataset, SizeGroup
from .errors import ConvergenceError, DomainError, IdentifiabilityError
from .gauss import Link, bvn_lattice, get_link
from .margins import (MarginalFit, UnivariateParams, design_blocks, fisher_blocks, fit_independent,
                      param_names, pmf_table, scores, shifted_cutpoints, xt_rows)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# working weights

def pair_score_covariance(link: Link, G, Z, pa, pb, rho) -> np.ndarray:
    """E[s_j s_k'] for each pair of rows under the working model; (P, q, q)."""
    pm = pmf_table(link, G)
    f = link.pdf(G)
    cells = bvn_lattice(Z[pa], Z[pb], rho)
    Q = cells / (pm[pa][:, :, None] * pm[pb][:, None, :])
    core = Q[:, :-1, :-1] - Q[:, 1:, :-1] - Q[:, :-1, 1:] + Q[:, 1:, 1:]
    return f[pa][:, :, None] * core * f[pb][:, None, :]


def block_diag_rows(blocks: np.ndarray, obs: np.ndarray) -> np.ndarray:
    """Stack per-row (q, q) blocks of a size group into (n_m, m q, m q)."""
    n_m, m = obs.shape
    q = blocks.shape[-1]
    out = np.zeros((n_m, m * q, m * q))
    for u in range(m):
        out[:, u * q:(u + 1) * q, u * q:(u + 1) * q] = blocks[obs[:, u]]
    return out


@dataclass
class _GroupWeights:
    group: SizeGroup
    Delta1: np.ndarray   # (n_m, mq, mq)
    Omega1: np.ndarray
    Winv: np.ndarray


@dataclass
class WorkingWeights:
    groups: list[_GroupWeights]
    q: int
    ridged: list[int] = field(default_factory=list)  # clusters that needed a ridge

    def cluster(self, i: int):
        """(Delta1_i, Omega1_i, Winv_i) for cluster i."""
        for gw in self.groups:
            hit = np.flatnonzero(gw.group.clusters == i)
            if hit.size:
                k = hit[0]
                return gw.Delta1[k], gw.Omega1[k], gw.Winv[k]
        raise IndexError(i)


def build_weights(data: OrdinalDataset, params_tilde, corr_tilde: CorrelationModel, link) -> WorkingWeights:
    link = get_link(link)
    a = params_tilde.vector if isinstance(params_tilde, UnivariateParams) else np.asarray(params_tilde, float)
    q = data.q
    G = shifted_cutpoints(a, data.X)
    Z = normal_cuts(link, G)
    Delta = fisher_blocks(link, G)
    lay = data.layout
    rho = corr_tilde.slot_values()[lay.pair_slot] if len(lay.pair_slot) else np.zeros(0)
    B = pair_score_covariance(link, G, Z, lay.pair_a, lay.pair_b, rho) if len(rho) else np.zeros((0, q, q))
    groups, ridged = [], []
    for grp in lay.groups:
        m = grp.m
        D1 = block_diag_rows(Delta, grp.obs)
        Om = D1.copy()
        k = 0
        for u in range(m):
            for v in range(u + 1, m):
                blk = B[grp.pairs[:, k]]
                Om[:, u * q:(u + 1) * q, v * q:(v + 1) * q] = blk
                Om[:, v * q:(v + 1) * q, u * q:(u + 1) * q] = np.swapaxes(blk, 1, 2)
                k += 1
        # ridge any numerically singular Omega
        w = np.linalg.eigvalsh(Om)
        bad = w[:, 0] <= 1e-12 * np.maximum(w[:, -1], 1e-300)
        if np.any(bad):
            dim = m * q
            tr = np.trace(Om[bad], axis1=1, axis2=2)
            Om[bad] += (1e-10 * tr / dim)[:, None, None] * np.eye(dim)
            ridged.extend(grp.clusters[bad].tolist())
            log.warning("ridge added to %d singular working covariance matrices", int(bad.sum()))
        Winv = np.swapaxes(np.linalg.solve(Om, D1), 1, 2)
        groups.append(_GroupWeights(grp, D1, Om, Winv))
    return WorkingWeights(groups, q, ridged)


# ---------------------------------------------------------------------------
# estimating equations

def _weighted_rows(data: OrdinalDataset, weights: WorkingWeights, S: np.ndarray) -> np.ndarray:
    """Per-row pieces of W_i^{-1} s_i, i.e. (N, q)."""
    q = weights.q
    out = np.zeros_like(S)
    for gw in weights.groups:
        obs = gw.group.obs
        n_m, m = obs.shape
        v = np.einsum("nij,nj->ni", gw.Winv, S[obs].reshape(n_m, m * q))
        out[obs.ravel()] = v.reshape(n_m * m, q)
    return out


def weighted_score(data: OrdinalDataset, link: Link, weights: WorkingWeights, a, per_cluster=False):
    G = shifted_cutpoints(a, data.X)
    S = scores(link, G, data.y)
    rows = xt_rows(data.X, _weighted_rows(data, weights, S))
    if not per_cluster:
        return rows.sum(axis=0)
    C = np.zeros((data.n, rows.shape[1]))
    np.add.at(C, data.cluster, rows)
    return C


def weighted_sensitivity(data: OrdinalDataset, link: Link, weights: WorkingWeights, a) -> np.ndarray:
    """-H = sum_i X_i' W_i^{-1} Delta_i(a) X_i."""
    q = weights.q
    G = shifted_cutpoints(a, data.X)
    Xb = design_blocks(data.X, q)
    DX = fisher_blocks(link, G) @ Xb  # (N, q, r)
    r = Xb.shape[-1]
    H = np.zeros((r, r))
    for gw in weights.groups:
        obs = gw.group.obs
        n_m, m = obs.shape
        Xg = Xb[obs].reshape(n_m, m * q, r)
        DXg = DX[obs].reshape(n_m, m * q, r)
        H += np.einsum("nir,nij,njs->rs", Xg, gw.Winv, DXg)
    return H


@dataclass
class SandwichCovariance:
    H: np.ndarray
    J: np.ndarray
    V: np.ndarray

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.V), 0.0))


def _collinear_columns(data: OrdinalDataset, H) -> list[str]:
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    v = V[:, 0]
    names = param_names(data)
    return [names[j] for j in np.flatnonzero(np.abs(v) > 0.1)]


def sandwich_covariance(data: OrdinalDataset, a_hat, weights: WorkingWeights, link) -> SandwichCovariance:
    link = get_link(link)
    a_hat = a_hat.vector if isinstance(a_hat, UnivariateParams) else np.asarray(a_hat, float)
    H = weighted_sensitivity(data, link, weights, a_hat)
    C = weighted_score(data, link, weights, a_hat, per_cluster=True)
    J = C.T @ C
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        raise IdentifiabilityError(f"singular sensitivity matrix; collinear columns: {_collinear_columns(data, H)}") from None
    if np.linalg.cond(H) > 1e14:
        raise IdentifiabilityError(f"singular sensitivity matrix; collinear columns: {_collinear_columns(data, H)}")
    V = Hinv @ J @ Hinv.T
    V = 0.5 * (V + V.T)
    return SandwichCovariance(H, J, V)


# ---------------------------------------------------------------------------
# fit report

@dataclass
class FitReport:
    names: list[str]
    estimates: np.ndarray
    se: np.ndarray
    cov: np.ndarray
    correlation: CorrelationModel
    stage1: MarginalFit
    link: str
    covariates: list[str]
    n: int
    iterations: int
    max_score: float
    converged: bool = True
    warnings: list[str] = field(default_factory=list)
    history: list = field(default_factory=list)
    weights: WorkingWeights | None = field(default=None, repr=False)
    sandwich: SandwichCovariance | None = field(default=None, repr=False)
    criteria: dict | None = None

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.estimates / self.se

    @property
    def pvalues(self) -> np.ndarray:
        return 2.0 * special.ndtr(-np.abs(self.z))

    @property
    def params(self) -> UnivariateParams:
        return UnivariateParams.from_vector(self.estimates, len(self.covariates))

    def table(self, digits: int = 3) -> str:
        w = max(len(s) for s in self.names + ["term"])
        lines = [f"{'term':<{w}}  {'Est.':>9} {'SE':>9} {'Z':>9} {'p-value':>9}"]
        for nm, e, s, z, p in zip(self.names, self.estimates, self.se, self.z, self.pvalues):
            ptxt = "<0.001" if p < 0.001 else f"{p:.{digits}f}"
            lines.append(f"{nm:<{w}}  {e:>9.{digits}f} {s:>9.{digits}f} {z:>9.{digits}f} {ptxt:>9}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        R = self.correlation
        out = {
            "estimates": [{"name": nm, "est": float(e), "se": float(s), "z": float(z), "p": float(p)}
                          for nm, e, s, z, p in zip(self.names, self.estimates, self.se, self.z, self.pvalues)],
            "correlation": {"structure": R.structure, "params": R.theta.tolist(), "matrix": R.matrix().tolist()},
            "diagnostics": {"iterations": self.iterations, "max_score": self.max_score,
                            "warnings": list(self.warnings) + list(R.warnings)},
        }
        if self.criteria is not None:
            out["criteria"] = dict(self.criteria)
        return out


def wald_test(fit: FitReport, coefficient) -> tuple[float, float]:
    """Two-sided Wald test of a zero coefficient (name or position)."""
    j = fit.names.index(coefficient) if isinstance(coefficient, str) else int(coefficient)
    se = fit.se[j]
    if not se > 0:
        raise DomainError(f"standard error of {fit.names[j]} is zero")
    z = fit.estimates[j] / se
    return float(z), float(2.0 * special.ndtr(-abs(z)))


def solve_weighted_scores(data: OrdinalDataset, link, covariates=None, structure: str = "exchangeable", *,
                          corr: CorrelationModel | None = None, tol_score: float = 1e-6,
                          tol_step: float = 1e-8, max_iter: int = 100) -> FitReport:
    """Fit the marginal ordinal model by weighted scores.

    ``corr`` fixes the working correlation instead of estimating it.
    """
    link = get_link(link)
    data = data.select(covariates)
    p = data.p
    stage1 = fit_independent(data, link, tol_score=tol_score, tol_step=tol_step, max_iter=max_iter)
    if corr is None:
        corr = estimate_correlations(data, stage1.params, link, structure_name(structure))
    weights = build_weights(data, stage1.params, corr, link)
    notes = []
    if weights.ridged:
        notes.append(f"ridge added to {len(weights.ridged)} singular working covariance matrices")

    a = stage1.a.copy()
    history = []
    for it in range(1, max_iter + 1):
        g = weighted_score(data, link, weights, a)
        negH = weighted_sensitivity(data, link, weights, a)
        try:
            step = np.linalg.solve(negH, g)
        except np.linalg.LinAlgError:
            raise IdentifiabilityError(
                f"singular sensitivity matrix; collinear columns: {_collinear_columns(data, negH)}") from None
        gmax = float(np.max(np.abs(g)))
        history.append((it, gmax, float(np.max(np.abs(step)))))
        if gmax <= tol_score and np.max(np.abs(step)) <= tol_step:
            a = a + step
            break
        t = 1.0
        for _ in range(31):
            cand = a + t * step
            if np.all(np.diff(cand[p:]) > 0):
                break
            t *= 0.5
        else:
            raise ConvergenceError("step halving failed to restore cut-point order", a, history)
        a = cand
    else:
        raise ConvergenceError(f"weighted scores: no convergence in {max_iter} iterations", a, history)

    sw = sandwich_covariance(data, a, weights, link)
    max_score = float(np.max(np.abs(weighted_score(data, link, weights, a))))
    return FitReport(param_names(data), a, sw.se, sw.V, corr, stage1, link.name, list(data.names), data.n,
                     it, max_score, True, notes, history, weights, sw)
