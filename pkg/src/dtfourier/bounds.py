"""The entropy-like density bound Lambda_{m,k}(p) and level-weight bound evaluators.

Every evaluation runs in log space: with m = n^2 and n in the thousands the
middle branch raises a logarithm to the power k/2.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .families import log_comb
from .fourier import popcount, wht_forward
from .trees import DecisionTree, density, enumerate_structures, label_matrix, spectrum_matrix, truth_table

MAIN_CONSTANT = 58.0
CANONICAL_BASE = 12.0


def _check_lambda_args(m: int, k: int, p: float) -> None:
    if m < 1 or k < 1:
        raise ValueError("m and k must be positive")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")


def log_lambda(m: int, k: int, p: float) -> float:
    """Natural log of Lambda_{m,k}(p); -inf at p = 0."""
    _check_lambda_args(m, k, p)
    if p == 0.0:
        return -math.inf
    log_m, log_p = math.log(m), math.log(p)
    if p <= 1.0 / m:
        return log_p + 0.5 * k * math.log((k + (k - 1) * log_m - log_p) / k)
    return log_p + 0.5 * math.log(1.0 - log_p) + 0.5 * (k - 1) * math.log1p(log_m)


def lambda_(m: int, k: int, p: float) -> float:
    """Lambda_{m,k}(p).

    Zero at p = 0, ``p * (ln(e^k m^(k-1) / p) / k)^(k/2)`` up to p = 1/m and
    ``p * sqrt(ln(e/p) * ln(em)^(k-1))`` above it.
    """
    return math.exp(log_lambda(m, k, p))


def lambda_oracle(m: int, k: int, p: float, grid_size: int = 200) -> float:
    """Grid maximum of p * prod sqrt(ln(e x_i)) over x_i >= 1, x_1...x_i <= m^(i-1)/p.

    Substituting y_i = ln x_i turns the objective into a sum of
    0.5 * ln(1 + y_i) over prefix sums Y_i <= (i-1) ln m - ln p.  A dynamic
    program over a shared grid of prefix-sum values evaluates only feasible
    points, so the result never exceeds the true supremum.  The grid holds
    ``grid_size`` values of the prefix sum.
    """
    _check_lambda_args(m, k, p)
    if k > 4 or not 2 <= grid_size <= 200:
        raise ValueError("the grid oracle supports k <= 4 and 2 <= grid_size <= 200")
    if p == 0.0:
        return 0.0
    caps = [(i - 1) * math.log(m) - math.log(p) for i in range(1, k + 1)]
    # The constraint caps are grid points so that boundary optima are representable.
    grid = np.unique(np.concatenate([np.linspace(0.0, caps[-1], grid_size - k), caps]))
    gain = 0.5 * np.log1p(np.maximum(grid[:, None] - grid[None, :], 0.0))
    reachable = grid[:, None] >= grid[None, :]
    best = np.where(grid == 0.0, 0.0, -np.inf)
    for cap in caps:
        cand = np.where(reachable, best[None, :] + gain, -np.inf).max(axis=1)
        best = np.where(grid <= cap * (1 + 1e-15), cand, -np.inf)
    return p * math.exp(best.max())


def bound_main(n: int, d: int, k: int, p: float, C: float, c: float) -> float:
    """sqrt(binom(d, k)) * (58 C c)^k * Lambda_{n^2,k}(p); zero when k > d."""
    if not 1 <= k <= n or d < 0 or C < 1 or c < 1:
        raise ValueError("need 1 <= k <= n, d >= 0 and constants >= 1")
    if k > d or p == 0.0:
        return 0.0
    return math.exp(0.5 * log_comb(d, k) + k * math.log(MAIN_CONSTANT * C * c) + log_lambda(n * n, k, p))


def bound_clean(n: int, d: int, k: int, C: float) -> float:
    """C^k * sqrt(binom(d, k) * (1 + ln n)^(k-1))."""
    if not 1 <= k <= n or d < 0:
        raise ValueError("need 1 <= k <= n and d >= 0")
    if k > d:
        return 0.0
    return math.exp(k * math.log(C) + 0.5 * (log_comb(d, k) + (k - 1) * math.log1p(math.log(n))))


def bound_canonical(interval_sizes: Sequence[int], ks: Sequence[int], p: float, C: float, n: int) -> float:
    """2 C^k 12^(l-1) Lambda_{n^2,k}(p) prod sqrt(binom(|I_i|, k_i)) for a product family."""
    if len(interval_sizes) != len(ks) or not ks:
        raise ValueError("need one multiplicity per interval and at least one block")
    if any(k not in (1, 2) for k in ks):
        raise ValueError("block multiplicities must be 1 or 2")
    if any(k > s for s, k in zip(interval_sizes, ks)) or p == 0.0:
        return 0.0
    k = sum(ks)
    log_b = (math.log(2) + k * math.log(C) + (len(ks) - 1) * math.log(CANONICAL_BASE)
             + log_lambda(n * n, k, p) + 0.5 * sum(log_comb(s, j) for s, j in zip(interval_sizes, ks)))
    return math.exp(log_b)


def binary_entropy(x: float) -> float:
    """x log2(1/x) + (1-x) log2(1/(1-x)), zero at the endpoints."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    return sum(-t * math.log2(t) for t in (x, 1.0 - x) if t > 0.0)


def clean_normalizer(n: int, d: int, k: int) -> float:
    return math.sqrt(math.comb(d, k) * (1 + math.log(n)) ** (k - 1))


def level_normalizers(n: int, d: int, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Denominators of the level-1 and level-2 density bounds, elementwise in p > 0."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        le = 1.0 - np.log(p)
        first = math.sqrt(d) * p * np.sqrt(le)
        second = math.sqrt(math.comb(d, 2)) * p * np.sqrt(le * (1.0 + math.log(n) - np.log(p)))
    return first, second


def _level_weight_rows(n: int, coeffs: np.ndarray) -> np.ndarray:
    sizes = popcount(np.arange(1 << n, dtype=np.uint64))
    out = np.zeros((coeffs.shape[0], n + 1))
    a = np.abs(coeffs)
    for k in range(n + 1):
        out[:, k] = a[:, sizes == k].sum(axis=1)
    return out


@dataclass
class WeightSweep:
    """Maxima of the normalized level-weight statistics over a family of trees."""

    trees: int = 0
    max_r: dict[tuple[int, int], float] = field(default_factory=dict)
    max_level1_ratio: float = 0.0
    max_level2_ratio: float = 0.0

    @property
    def r_max(self) -> float:
        return max(self.max_r.values(), default=0.0)

    def r_by_depth(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for (d, _), v in self.max_r.items():
            out[d] = max(out.get(d, 0.0), v)
        return out

    def absorb(self, n: int, d: int, weights: np.ndarray, p: np.ndarray) -> None:
        self.trees += weights.shape[0]
        for k in range(1, d + 1):
            r = float(((weights[:, k] / clean_normalizer(n, d, k)) ** (1.0 / k)).max())
            self.max_r[(d, k)] = max(self.max_r.get((d, k), 0.0), r)
        live = p > 0
        if not live.any() or d < 1:
            return
        first, second = level_normalizers(n, d, p[live])
        self.max_level1_ratio = max(self.max_level1_ratio, float((weights[live, 1] / first).max()))
        if d >= 2:
            self.max_level2_ratio = max(self.max_level2_ratio, float((weights[live, 2] / second).max()))


def exhaustive_weight_sweep(n_max: int, d_max: int, labels: Iterable[float] = (-1.0, 0.0, 1.0),
                            sweep: WeightSweep | None = None) -> WeightSweep:
    """Sweep every tree with n <= n_max, 1 <= d <= min(n, d_max) and the given constant labels.

    Each tree structure contributes one matrix product: leaf labelings times
    the linear map from labels to Fourier coefficients.
    """
    sweep = WeightSweep() if sweep is None else sweep
    labels = sorted(set(labels))
    for n in range(1, n_max + 1):
        for d in range(1, min(n, d_max) + 1):
            L = label_matrix(labels, 1 << d)
            p = np.count_nonzero(L, axis=1) / L.shape[1]
            for internal in enumerate_structures(n, d):
                weights = _level_weight_rows(n, L @ spectrum_matrix(n, d, internal).T)
                sweep.absorb(n, d, weights, p)
    return sweep


def tree_weight_sweep(trees: Iterable[DecisionTree], sweep: WeightSweep | None = None) -> WeightSweep:
    sweep = WeightSweep() if sweep is None else sweep
    for T in trees:
        coeffs = wht_forward(truth_table(T)).coeffs[None, :]
        sweep.absorb(T.n, T.d, _level_weight_rows(T.n, coeffs), np.array([density(T)]))
    return sweep


@dataclass(frozen=True)
class WeightRow:
    n: int
    d: int
    k: int
    p: float
    level_weight: float
    bound_main: float
    bound_clean: float

    @property
    def ratio_main(self) -> float:
        return self.level_weight / self.bound_main if self.bound_main else 0.0

    @property
    def ratio_clean(self) -> float:
        return self.level_weight / self.bound_clean if self.bound_clean else 0.0

    @property
    def r(self) -> float:
        return (self.level_weight / clean_normalizer(self.n, self.d, self.k)) ** (1.0 / self.k)


@dataclass
class WeightReport:
    rows: list[WeightRow]

    @property
    def max_ratio_main(self) -> float:
        return max((r.ratio_main for r in self.rows), default=0.0)

    @property
    def max_ratio_clean(self) -> float:
        return max((r.ratio_clean for r in self.rows), default=0.0)

    @property
    def max_r(self) -> float:
        return max((r.r for r in self.rows), default=0.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "d", "k", "p", "level_weight", "bound_main", "bound_clean", "ratio"])
        for r in self.rows:
            w.writerow([r.n, r.d, r.k, repr(r.p), repr(r.level_weight), repr(r.bound_main),
                        repr(r.bound_clean), repr(r.ratio_clean)])
        return buf.getvalue()


def verify_weight_bounds(trees: Iterable[DecisionTree], C: float = 1.0, c: float = 1.0) -> WeightReport:
    """Level weights of each degree-0 tree against both closed-form bounds."""
    rows = []
    for T in trees:
        if T.n > 8 or T.d > 4:
            raise ValueError("weight verification is limited to n <= 8 and d <= 4")
        s = wht_forward(truth_table(T))
        weights = np.bincount(popcount(np.arange(1 << T.n, dtype=np.uint64)), weights=np.abs(s.coeffs),
                              minlength=T.n + 1)
        p = density(T)
        for k in range(1, T.d + 1):
            rows.append(WeightRow(T.n, T.d, k, p, float(weights[k]), bound_main(T.n, T.d, k, p, C, c),
                                  bound_clean(T.n, T.d, k, C)))
    return WeightReport(rows)


@dataclass(frozen=True)
class LambdaRow:
    m: int
    k: int
    p: float
    value: float
    oracle: float

    @property
    def ratio(self) -> float:
        return self.oracle / self.value if self.value else 1.0


def lambda_sweep(ms: Sequence[int] = (4, 64, 4096), ks: Sequence[int] = (1, 2, 3, 4),
                 ps: Sequence[float] = (1e-4, 1e-3, 0.01, 0.1, 0.5, 1.0), grid_size: int = 200) -> list[LambdaRow]:
    return [LambdaRow(m, k, p, lambda_(m, k, p), lambda_oracle(m, k, p, grid_size))
            for m in ms for k in ks for p in ps]


def lambda_csv(rows: Iterable[LambdaRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "k", "p", "lambda", "oracle", "ratio"])
    for r in rows:
        w.writerow([r.m, r.k, repr(r.p), repr(r.value), repr(r.oracle), repr(r.ratio)])
    return buf.getvalue()
