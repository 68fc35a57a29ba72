"""Pairwise (bivariate composite) likelihood for the latent correlations.

Second stage of the two-stage composite likelihood fit: with the univariate
parameters held at their independence MLE, the latent correlations of the
discretized normal working model maximize the sum over clusters and pairs of
bivariate log-probabilities.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .data import OrdinalDataset, upper_pairs
from .errors import ClampWarning, ConvergenceError, DomainError, MatrixError
from .gauss import Link, bvn_rect, bvn_rect_drho, get_link
from .margins import UnivariateParams, shifted_cutpoints

log = logging.getLogger(__name__)

STRUCTURES = ("independence", "exchangeable", "ar1", "unstructured")
_ALIASES = {"exch": "exchangeable", "exchangeable": "exchangeable", "ar1": "ar1", "ar(1)": "ar1",
            "unstr": "unstructured", "unstructured": "unstructured", "ind": "independence",
            "independence": "independence"}
PROB_FLOOR = 1e-12
EXCH_MARGIN = 1e-6
Z_MAX = 8.0  # |rho| < tanh(8) ~ 1 - 2e-7


def structure_name(s: str) -> str:
    try:
        return _ALIASES[s.lower()]
    except KeyError:
        raise DomainError(f"unknown correlation structure {s!r}") from None


@dataclass
class CorrelationModel:
    """Latent correlation structure with free parameters ``theta``."""

    structure: str
    theta: np.ndarray
    d: int
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.structure = structure_name(self.structure)
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if self.theta.size != self.n_free(self.structure, self.d):
            raise DomainError(f"{self.structure} with d={self.d} needs {self.n_free(self.structure, self.d)} parameters")
        if self.structure == "exchangeable" and self.d > 1:
            r = self.theta[0]
            if not (-1.0 / max(self.d - 1, 1) < r < 1):
                raise MatrixError(f"exchangeable correlation {r} outside (-1/(d-1), 1)")
        if self.structure == "ar1" and not abs(self.theta[0]) < 1:
            raise MatrixError("AR(1) correlation must lie in (-1, 1)")
        if self.structure == "unstructured" and np.any(np.abs(self.theta) >= 1):
            raise MatrixError("pairwise correlations must lie in (-1, 1)")

    @staticmethod
    def n_free(structure: str, d: int) -> int:
        structure = structure_name(structure)
        if structure == "independence" or d < 2:
            return 0
        if structure == "unstructured":
            return d * (d - 1) // 2
        return 1

    @classmethod
    def independence(cls, d: int) -> "CorrelationModel":
        return cls("independence", np.zeros(0), d)

    @property
    def slots(self) -> list[tuple[int, int]]:
        return upper_pairs(self.d)

    def slot_values(self) -> np.ndarray:
        """Correlation for every (j<k) slot of the d x d matrix."""
        slots = self.slots
        if not slots or self.structure == "independence":
            return np.zeros(len(slots))
        if self.structure == "exchangeable":
            return np.full(len(slots), self.theta[0])
        if self.structure == "ar1":
            lags = np.array([k - j for j, k in slots])
            return self.theta[0] ** lags
        return self.theta.copy()

    def jacobian(self) -> np.ndarray:
        """(n_slots, n_free) derivative of slot correlations wrt theta."""
        slots = self.slots
        nf = self.theta.size
        A = np.zeros((len(slots), nf))
        if nf == 0:
            return A
        if self.structure == "exchangeable":
            A[:, 0] = 1.0
        elif self.structure == "ar1":
            lags = np.array([k - j for j, k in slots])
            A[:, 0] = lags * self.theta[0] ** (lags - 1)
        else:
            A[:] = np.eye(len(slots))
        return A

    def matrix(self) -> np.ndarray:
        R = np.eye(self.d)
        for (j, k), r in zip(self.slots, self.slot_values()):
            R[j, k] = R[k, j] = r
        return R


# ---------------------------------------------------------------------------
# normal-score cut points of the working model

def normal_cuts(link: Link, G) -> np.ndarray:
    """Phi^{-1}(F(gamma_ijm)) for every row and cut; (N, q)."""
    return link.normal_score(G)


def observed_bounds(link: Link, G, y):
    """Lower/upper normal-score bounds of each row's observed category."""
    Z = normal_cuts(link, G)
    n, q = Z.shape
    pad = np.concatenate([np.full((n, 1), -np.inf), Z, np.full((n, 1), np.inf)], axis=1)
    y = np.asarray(y)
    r = np.arange(n)
    return pad[r, y - 1], pad[r, y]


def pair_prob(params: UnivariateParams, link, x_j, x_k, y_j: int, y_k: int, rho: float) -> float:
    """Bivariate probability P(Y_j = y_j, Y_k = y_k) under the working model."""
    link = get_link(link)
    X = np.vstack([np.atleast_1d(np.asarray(x_j, float)), np.atleast_1d(np.asarray(x_k, float))])
    if X.shape[1] != params.p:
        X = X.reshape(2, params.p)
    G = shifted_cutpoints(params, X)
    lo, hi = observed_bounds(link, G, [y_j, y_k])
    return float(bvn_rect(lo[0], hi[0], lo[1], hi[1], rho))


@dataclass
class PairwiseLik:
    value: float
    contributions: np.ndarray  # per (j<k) slot
    n_clamped: int = 0


@dataclass
class _PairData:
    """Observed-pair rectangle bounds, computed once per univariate fit."""

    la: np.ndarray
    ua: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    slot: np.ndarray
    n_slots: int


def _pair_data(data: OrdinalDataset, params, link: Link) -> _PairData:
    a = params.vector if isinstance(params, UnivariateParams) else np.asarray(params, float)
    G = shifted_cutpoints(a, data.X)
    lo, hi = observed_bounds(link, G, data.y)
    lay = data.layout
    return _PairData(lo[lay.pair_a], hi[lay.pair_a], lo[lay.pair_b], hi[lay.pair_b],
                     lay.pair_slot, len(lay.slots))


def _pair_terms(pd: _PairData, rho_slots):
    rho = rho_slots[pd.slot]
    f2 = bvn_rect(pd.la, pd.ua, pd.lb, pd.ub, rho)
    clamped = f2 < PROB_FLOOR
    f2 = np.maximum(f2, PROB_FLOOR)
    return f2, clamped, rho


def cl1_loglik(data: OrdinalDataset, params, link, corr: CorrelationModel) -> PairwiseLik:
    link = get_link(link)
    pd = _pair_data(data, params, link)
    f2, clamped, _ = _pair_terms(pd, corr.slot_values())
    nclamp = int(clamped.sum())
    if nclamp:
        warnings.warn(f"{nclamp} pair probabilities clamped at {PROB_FLOOR}", ClampWarning, stacklevel=2)
    contrib = np.bincount(pd.slot, weights=np.log(f2), minlength=pd.n_slots)
    return PairwiseLik(float(contrib.sum()), contrib, nclamp)


def pair_rho_scores(data: OrdinalDataset, params, link, corr: CorrelationModel) -> np.ndarray:
    """d log f2 / d rho_jk at every observed pair (global pair order)."""
    link = get_link(link)
    pd = _pair_data(data, params, link)
    f2, _, rho = _pair_terms(pd, corr.slot_values())
    return bvn_rect_drho(pd.la, pd.ua, pd.lb, pd.ub, rho) / f2


def cl1_gradient(data, params, link, corr: CorrelationModel) -> np.ndarray:
    """dL2/dtheta through the structure Jacobian."""
    u = pair_rho_scores(data, params, link, corr)
    per_slot = np.bincount(data.layout.pair_slot, weights=u, minlength=len(corr.slots))
    return corr.jacobian().T @ per_slot


# ---------------------------------------------------------------------------
# estimation

def _theta_range(structure: str, d: int):
    if structure == "exchangeable":
        lo = -1.0 / (d - 1) + EXCH_MARGIN if d > 2 else -math.tanh(Z_MAX)
        return lo, math.tanh(Z_MAX)
    return -math.tanh(Z_MAX), math.tanh(Z_MAX)


def _maximize_1d(fun, grad, lo, hi, tol_grad):
    """Maximize a smooth 1-d function on (lo, hi) working in Fisher-z units.

    Bounded Brent on z first, then the root of the analytic derivative is
    polished with Brent's method on a bracket around the maximizer.
    """
    zlo, zhi = math.atanh(lo), math.atanh(hi)
    res = optimize.minimize_scalar(lambda z: -fun(math.tanh(z)), bounds=(zlo, zhi),
                                   method="bounded", options={"xatol": 1e-10, "maxiter": 500})
    z = float(res.x)
    r = math.tanh(z)
    g = grad(r)
    if abs(g) <= tol_grad:
        return r, g
    # bracket the sign change of the gradient
    step = 1e-6
    for _ in range(40):
        a_, b_ = max(zlo, z - step), min(zhi, z + step)
        ga, gb = grad(math.tanh(a_)), grad(math.tanh(b_))
        if ga > 0 > gb or ga == 0 or gb == 0:
            root = optimize.brentq(lambda t: grad(math.tanh(t)), a_, b_, xtol=1e-15, rtol=1e-15, maxiter=200)
            r = math.tanh(root)
            return r, grad(r)
        if a_ == zlo and b_ == zhi:
            break
        step *= 4
    return r, g  # at the boundary; the caller judges


def estimate_correlations(data: OrdinalDataset, params_hat, link, structure: str, *,
                          tol_grad: float = 1e-6) -> CorrelationModel:
    """Maximize the pairwise log-likelihood in the correlation parameters.

    Unstructured fits separate into one 1-d problem per pair; a non-PD
    assembled matrix is repaired by eigenvalue clipping at 1e-6 and
    renormalization, recorded in ``warnings``.
    """
    link = get_link(link)
    structure = structure_name(structure)
    d = data.d
    nf = CorrelationModel.n_free(structure, d)
    if nf == 0:
        return CorrelationModel(structure, np.zeros(0), d)
    pd = _pair_data(data, params_hat, link)
    if len(pd.slot) == 0:
        raise DomainError("no cluster has two or more observations")
    notes: list[str] = []

    if structure == "unstructured":
        theta = np.zeros(nf)
        for s in range(nf):
            sel = pd.slot == s
            if not np.any(sel):
                raise DomainError(f"no cluster observes pair {upper_pairs(d)[s]}")
            sub = _PairData(pd.la[sel], pd.ua[sel], pd.lb[sel], pd.ub[sel], np.zeros(sel.sum(), int), 1)

            def fun(r, sub=sub):
                f2, _, _ = _pair_terms(sub, np.array([r]))
                return float(np.log(f2).sum())

            def grad(r, sub=sub):
                f2, _, rho = _pair_terms(sub, np.array([r]))
                return float((bvn_rect_drho(sub.la, sub.ua, sub.lb, sub.ub, rho) / f2).sum())

            lo, hi = _theta_range(structure, d)
            theta[s], g = _maximize_1d(fun, grad, lo, hi, tol_grad)
            if abs(g) > tol_grad and not _at_bound(theta[s], lo, hi):
                raise ConvergenceError(f"pair {upper_pairs(d)[s]}: gradient {g:.3g} above tolerance", theta)
        R = CorrelationModel(structure, theta, d).matrix()
        w, V = np.linalg.eigh(R)
        if w.min() < 1e-6:
            w = np.maximum(w, 1e-6)
            R = V @ np.diag(w) @ V.T
            s_ = np.sqrt(np.diag(R))
            R = R / np.outer(s_, s_)
            theta = np.array([R[j, k] for j, k in upper_pairs(d)])
            notes.append("pairwise correlation matrix was not positive definite; eigenvalues clipped at 1e-6")
            log.warning(notes[-1])
        return CorrelationModel(structure, theta, d, notes)

    jac_of = lambda r: CorrelationModel(structure, [r], d).jacobian()[:, 0]
    slot_vals = lambda r: CorrelationModel(structure, [r], d).slot_values()

    def fun(r):
        f2, _, _ = _pair_terms(pd, slot_vals(r))
        return float(np.log(f2).sum())

    def grad(r):
        f2, _, rho = _pair_terms(pd, slot_vals(r))
        u = bvn_rect_drho(pd.la, pd.ua, pd.lb, pd.ub, rho) / f2
        return float(np.dot(jac_of(r)[pd.slot], u))

    lo, hi = _theta_range(structure, d)
    r, g = _maximize_1d(fun, grad, lo, hi, tol_grad)
    if abs(g) > tol_grad and not _at_bound(r, lo, hi):
        raise ConvergenceError(f"{structure}: gradient {g:.3g} above tolerance", np.array([r]))
    if _at_bound(r, lo, hi):
        notes.append(f"{structure} correlation estimate at the boundary ({r:.6g})")
    return CorrelationModel(structure, [r], d, notes)


def _at_bound(r, lo, hi):
    return r - lo < 1e-7 or hi - r < 1e-7
