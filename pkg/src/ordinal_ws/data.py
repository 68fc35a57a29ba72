"""Clustered ordinal data and CSV ingestion."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, IdentifiabilityError

log = logging.getLogger(__name__)


@dataclass
class SizeGroup:
    """All clusters with the same number of observations ``m``."""

    m: int
    clusters: np.ndarray   # (n_m,)
    obs: np.ndarray        # (n_m, m) global observation indices, by within index
    pairs: np.ndarray      # (n_m, m*(m-1)/2) global pair ids, local (u<v) row-major


@dataclass
class Layout:
    pair_a: np.ndarray
    pair_b: np.ndarray
    pair_cluster: np.ndarray
    pair_slot: np.ndarray       # index into the upper triangle of the d x d matrix
    groups: list[SizeGroup]
    slots: list[tuple[int, int]]


def upper_pairs(d: int) -> list[tuple[int, int]]:
    return [(j, k) for j in range(d) for k in range(j + 1, d)]


@dataclass
class OrdinalDataset:
    """Long-format clustered ordinal data.

    ``index`` is the 0-based within-cluster position (time slot); ``y`` holds
    categories 1..K.  Rows are kept sorted by (cluster, index).
    """

    cluster: np.ndarray
    index: np.ndarray
    y: np.ndarray
    X: np.ndarray
    names: list[str]
    K: int
    cluster_labels: list = field(default_factory=list)
    category_map: dict | None = None

    def __post_init__(self):
        self.cluster = np.asarray(self.cluster, dtype=np.int64)
        self.index = np.asarray(self.index, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] == 0:
            X = X.reshape(len(self.y), 0)
        self.X = X
        N = len(self.y)
        if not (len(self.cluster) == len(self.index) == N == X.shape[0]):
            raise DomainError("cluster, index, y and X must have the same number of rows")
        if len(self.names) != X.shape[1]:
            raise DomainError("one name per covariate column is required")
        if np.any(~np.isfinite(X)):
            raise DomainError("missing or non-finite covariate cells")
        if self.K < 2 or np.any((self.y < 1) | (self.y > self.K)):
            raise DomainError(f"responses must lie in 1..{self.K}")
        if np.any(self.index < 0):
            raise DomainError("within-cluster index must be >= 1")
        order = np.lexsort((self.index, self.cluster))
        self.cluster, self.index, self.y, self.X = self.cluster[order], self.index[order], self.y[order], self.X[order]
        dup = (np.diff(self.cluster) == 0) & (np.diff(self.index) == 0)
        if np.any(dup):
            i = int(np.flatnonzero(dup)[0])
            raise DomainError(f"duplicate within-cluster index in cluster {self.cluster[i]}")
        # cluster codes must be 0..n-1
        _, codes = np.unique(self.cluster, return_inverse=True)
        self.cluster = codes.astype(np.int64)
        if not self.cluster_labels:
            self.cluster_labels = list(range(int(codes.max()) + 1 if N else 0))

    @classmethod
    def from_arrays(cls, cluster_ids, within_index, y, X, names=None, K=None):
        """Build from 1-based within-cluster indices and raw cluster labels."""
        labels, codes = np.unique(np.asarray(cluster_ids), return_inverse=True)
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        names = list(names) if names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
        y = np.asarray(y, dtype=np.int64)
        return cls(codes, np.asarray(within_index) - 1, y, X, names,
                   int(K if K is not None else y.max()), list(labels))

    # -- sizes ---------------------------------------------------------------
    @property
    def N(self) -> int:
        return len(self.y)

    @property
    def n(self) -> int:
        return len(self.cluster_labels)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.K - 1

    @property
    def d(self) -> int:
        return int(self.index.max()) + 1

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.cluster, minlength=self.n)

    def select(self, covariates=None) -> "OrdinalDataset":
        """Dataset restricted to a subset of covariate columns (names or positions)."""
        if covariates is None:
            return self
        cols = [self.names.index(c) if isinstance(c, str) else int(c) for c in covariates]
        return OrdinalDataset(self.cluster, self.index, self.y, self.X[:, cols],
                              [self.names[c] for c in cols], self.K,
                              list(self.cluster_labels), self.category_map)

    def check_categories(self):
        counts = np.bincount(self.y, minlength=self.K + 1)[1:]
        empty = [k + 1 for k in range(self.K) if counts[k] == 0]
        if empty:
            raise IdentifiabilityError(f"category {empty[0]} is never observed")
        return counts

    @cached_property
    def layout(self) -> Layout:
        d = self.d
        slots = upper_pairs(d)
        slot_of = -np.ones((d, d), dtype=np.int64)
        for s, (j, k) in enumerate(slots):
            slot_of[j, k] = s
        starts = np.concatenate([[0], np.cumsum(self.sizes)])
        sizes = self.sizes
        pa, pb, pc = [], [], []
        pair_start = np.zeros(self.n + 1, dtype=np.int64)
        # pairs in cluster order, local (u<v) row-major
        for i in range(self.n):
            s0, m = starts[i], sizes[i]
            u, v = np.triu_indices(m, 1)
            pa.append(s0 + u)
            pb.append(s0 + v)
            pc.append(np.full(len(u), i))
            pair_start[i + 1] = pair_start[i] + len(u)
        pa = np.concatenate(pa).astype(np.int64) if pa else np.zeros(0, np.int64)
        pb = np.concatenate(pb).astype(np.int64) if pb else np.zeros(0, np.int64)
        pc = np.concatenate(pc).astype(np.int64) if pc else np.zeros(0, np.int64)
        slot = slot_of[self.index[pa], self.index[pb]] if len(pa) else np.zeros(0, np.int64)
        groups = []
        for m in np.unique(sizes):
            cl = np.flatnonzero(sizes == m)
            obs = starts[cl][:, None] + np.arange(m)[None, :]
            npair = m * (m - 1) // 2
            pairs = pair_start[cl][:, None] + np.arange(npair)[None, :]
            groups.append(SizeGroup(int(m), cl, obs, pairs))
        return Layout(pa, pb, pc, slot, groups, slots)


# ---------------------------------------------------------------------------
# CSV ingestion

def _parse_number(text, what, row):
    try:
        return float(text)
    except ValueError:
        raise DomainError(f"row {row}: non-numeric {what} {text!r}") from None


def cumulative_coding(values, name):
    """Indicator columns I(v >= level_k) for every level above the lowest.

    With levels l_1 < ... < l_L the coefficient of I(v >= l_k) is the
    difference between adjacent categories k-1 and k.  Column labels use the
    level ranks, e.g. ``time[2,3]`` means the variable is at its 2nd or 3rd
    level.
    """
    levels = np.unique(values)
    L = len(levels)
    cols, labels = [], []
    for k in range(1, L):
        cols.append((values >= levels[k]).astype(float))
        labels.append(f"{name}[{','.join(str(j + 1) for j in range(k, L))}]")
    return np.column_stack(cols) if cols else np.zeros((len(values), 0)), labels


def reference_coding(values, name):
    levels = np.unique(values)
    cols = [(values == lv).astype(float) for lv in levels[1:]]
    labels = [f"{name}={lv:g}" for lv in levels[1:]]
    return np.column_stack(cols) if cols else np.zeros((len(values), 0)), labels


def ingest_csv(path, id_col: str, y_col: str, covariates, time_col: str | None = None,
               cumulative=(), reference=()) -> OrdinalDataset:
    """Read long-format clustered ordinal data.

    Rows with an empty response are dropped (counted in the log).  Responses
    are relabelled 1..K preserving order; the mapping is kept in
    ``dataset.category_map``.  When ``time_col`` is given, the within-cluster
    index is the rank of the time value among all distinct time values, so
    gaps stay gaps.  Without it, rows are numbered in file order per cluster.
    ``cumulative`` / ``reference`` name covariates to expand into
    adjacent-category (cumulative indicator) or reference dummies.
    """
    covariates = list(covariates)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [id_col, y_col] + covariates + ([time_col] if time_col else [])
        missing = [c for c in needed if c not in header]
        if missing:
            raise DomainError(f"columns not found in header: {missing}")
        ids, times, ys, cov = [], [], [], []
        rows, dropped = [], 0
        for rownum, rec in enumerate(reader, start=2):
            yv = (rec[y_col] or "").strip()
            if yv == "" or yv.upper() == "NA":
                dropped += 1
                continue
            yf = _parse_number(yv, "response", rownum)
            if yf != int(yf):
                raise DomainError(f"row {rownum}: response {yv!r} is not an integer")
            ids.append(rec[id_col])
            ys.append(int(yf))
            times.append(_parse_number(rec[time_col], "time", rownum) if time_col else None)
            cov.append([_parse_number(rec[c], c, rownum) for c in covariates])
            rows.append(rownum)
    if dropped:
        log.info("dropped %d rows with missing response", dropped)
    ids = np.array(ids, dtype=object)
    rows = np.array(rows)
    if time_col:
        tvals = np.array(times, dtype=float)
        levels = np.unique(tvals)
        within = np.searchsorted(levels, tvals)
    else:
        within = np.zeros(len(ids), dtype=np.int64)
        seen: dict = {}
        for i, c in enumerate(ids):
            within[i] = seen.get(c, 0)
            seen[c] = within[i] + 1
    key = {}
    for i, (c, t) in enumerate(zip(ids, within)):
        if (c, t) in key:
            raise DomainError(f"duplicate (id, time) in rows {rows[key[(c, t)]]} and {rows[i]}")
        key[(c, t)] = i

    yraw = np.array(ys)
    cats = np.unique(yraw)
    ymap = {int(v): k + 1 for k, v in enumerate(cats)}
    y = np.array([ymap[int(v)] for v in yraw])
    if len(cats) < 2:
        raise IdentifiabilityError("response takes a single value")

    raw = np.array(cov, dtype=float).reshape(len(ys), len(covariates))
    blocks, names = [], []
    for j, c in enumerate(covariates):
        if c in cumulative:
            b, lab = cumulative_coding(raw[:, j], c)
        elif c in reference:
            b, lab = reference_coding(raw[:, j], c)
        else:
            b, lab = raw[:, j:j + 1], [c]
        blocks.append(b)
        names.extend(lab)
    X = np.column_stack(blocks) if blocks else np.zeros((len(ys), 0))
    labels, codes = np.unique(ids.astype(str), return_inverse=True)
    ds = OrdinalDataset(codes, within, y, X, names, len(cats), list(labels), ymap)
    return ds
