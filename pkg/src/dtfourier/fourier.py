"""Exact Fourier analysis of real functions on the Boolean hypercube.

Points of {-1,1}^n are encoded as integers: bit ``i`` of the index is 0 when
``x_i = +1`` and 1 when ``x_i = -1``.  Subsets S of the variables are bitmasks
in the same bit positions, so ``chi_S(x) = (-1) ** popcount(index & S)``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping

import numpy as np

MAX_VARS = 24
POLY_VARS = 64


def _check_size(n: int) -> None:
    if not 1 <= n <= MAX_VARS:
        raise ValueError(f"number of variables must lie in [1, {MAX_VARS}], got {n}")


def popcount(a):
    """Vectorized popcount for integer arrays (or a Python int)."""
    if isinstance(a, (int, np.integer)):
        return int(a).bit_count()
    return np.bitwise_count(np.asarray(a, dtype=np.uint64)).astype(np.int64)


def _table(values, n: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != 1 << n:
        raise ValueError(f"table must have exactly 2^{n} = {1 << n} entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BooleanFunction:
    """A real-valued function on {-1,1}^n stored as a dense table."""

    n: int
    values: np.ndarray

    def __post_init__(self):
        _check_size(self.n)
        object.__setattr__(self, "values", _table(self.values, self.n))

    @classmethod
    def constant(cls, n: int, c: float = 1.0) -> "BooleanFunction":
        return cls(n, np.full(1 << n, float(c)))

    @classmethod
    def character(cls, n: int, mask: int) -> "BooleanFunction":
        """The parity chi_S for S given as a bitmask."""
        _check_size(n)
        idx = np.arange(1 << n, dtype=np.uint64)
        return cls(n, 1.0 - 2.0 * (popcount(idx & np.uint64(mask)) & 1))

    @classmethod
    def from_callable(cls, n: int, func) -> "BooleanFunction":
        """Tabulate ``func(x)`` where ``x`` is a tuple of +-1 values."""
        _check_size(n)
        vals = [func(index_to_point(b, n)) for b in range(1 << n)]
        return cls(n, vals)

    def is_ternary(self) -> bool:
        return bool(np.isin(self.values, (-1.0, 0.0, 1.0)).all())

    def __eq__(self, other):
        if not isinstance(other, BooleanFunction):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.n, self.values.tobytes()))


@dataclass(frozen=True, eq=False)
class FourierSpectrum:
    """All 2^n Fourier coefficients, indexed by subset bitmask."""

    n: int
    coeffs: np.ndarray

    def __post_init__(self):
        _check_size(self.n)
        object.__setattr__(self, "coeffs", _table(self.coeffs, self.n))

    def __getitem__(self, mask: int) -> float:
        return float(self.coeffs[mask])

    def support(self) -> dict[int, float]:
        nz = np.flatnonzero(self.coeffs)
        return {int(m): float(self.coeffs[m]) for m in nz}

    def __eq__(self, other):
        if not isinstance(other, FourierSpectrum):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash((self.n, self.coeffs.tobytes()))

    def to_csv(self, nonzero_only: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mask", "size", "coefficient"])
        masks = np.flatnonzero(self.coeffs) if nonzero_only else range(1 << self.n)
        for m in masks:
            w.writerow([int(m), int(m).bit_count(), repr(float(self.coeffs[m]))])
        return buf.getvalue()


def index_to_point(index: int, n: int) -> tuple[int, ...]:
    return tuple(-1 if (index >> i) & 1 else 1 for i in range(n))


def point_to_index(x) -> int:
    index = 0
    for i, xi in enumerate(x):
        if xi == -1:
            index |= 1 << i
        elif xi != 1:
            raise ValueError(f"coordinate {i} is {xi}, expected +1 or -1")
    return index


def fwht(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along ``axis``.

    Runs the log2(N) butterfly passes in place on a float64 copy.
    """
    out = np.array(a, dtype=np.float64, copy=True)
    out = np.moveaxis(out, axis, -1)
    size = out.shape[-1]
    if size & (size - 1):
        raise ValueError("transform length must be a power of two")
    lead = out.shape[:-1]
    h = 1
    while h < size:
        view = out.reshape(*lead, size // (2 * h), 2, h)
        a0 = view[..., 0, :].copy()
        view[..., 0, :] += view[..., 1, :]
        view[..., 1, :] = a0 - view[..., 1, :]
        h *= 2
    return np.moveaxis(out, -1, axis)


def wht_forward(f: BooleanFunction) -> FourierSpectrum:
    """Fourier coefficients hat f(S) = 2^-n <f, chi_S>."""
    _check_size(f.n)
    return FourierSpectrum(f.n, np.ldexp(fwht(f.values), -f.n))


def wht_inverse(s: FourierSpectrum) -> BooleanFunction:
    """Evaluate sum_S hat f(S) chi_S at every point."""
    _check_size(s.n)
    return BooleanFunction(s.n, fwht(s.coeffs))


def _check_level(n: int, k: int) -> None:
    if not 0 <= k <= n:
        raise ValueError(f"level k must lie in [0, {n}], got {k}")


def level_mask(n: int, k: int) -> np.ndarray:
    """Boolean selector of subsets of size exactly k."""
    return popcount(np.arange(1 << n, dtype=np.uint64)) == k


def level_part(s: FourierSpectrum, k: int) -> FourierSpectrum:
    _check_level(s.n, k)
    return FourierSpectrum(s.n, np.where(level_mask(s.n, k), s.coeffs, 0.0))


def fourier_weight(s: FourierSpectrum) -> float:
    """Sum of absolute values of all coefficients."""
    return float(np.abs(s.coeffs).sum())


def level_weight(s: FourierSpectrum, k: int) -> float:
    _check_level(s.n, k)
    return float(np.abs(s.coeffs[level_mask(s.n, k)]).sum())


def level_weights(s: FourierSpectrum) -> np.ndarray:
    """Array whose entry k is the level-k weight."""
    sizes = popcount(np.arange(1 << s.n, dtype=np.uint64))
    return np.bincount(sizes, weights=np.abs(s.coeffs), minlength=s.n + 1)


def pointwise_product(f: BooleanFunction, g: BooleanFunction) -> BooleanFunction:
    if f.n != g.n:
        raise ValueError(f"variable counts differ: {f.n} vs {g.n}")
    return BooleanFunction(f.n, f.values * g.values)


class MultilinearPolynomial(Mapping):
    """Sparse multilinear polynomial: bitmask -> nonzero real coefficient."""

    __slots__ = ("n", "_terms")

    def __init__(self, terms: Mapping[int, float] | None = None, n: int = POLY_VARS):
        self.n = n
        clean = {}
        for mask, c in (terms or {}).items():
            mask = int(mask)
            if mask < 0 or mask >> n:
                raise ValueError(f"monomial {mask:#x} uses variables outside 0..{n - 1}")
            if c != 0:
                clean[mask] = float(c)
        self._terms = clean

    @classmethod
    def constant(cls, c: float, n: int = POLY_VARS) -> "MultilinearPolynomial":
        return cls({0: c}, n)

    @classmethod
    def monomial(cls, mask: int, c: float = 1.0, n: int = POLY_VARS) -> "MultilinearPolynomial":
        return cls({mask: c}, n)

    @classmethod
    def from_spectrum(cls, s: FourierSpectrum) -> "MultilinearPolynomial":
        return cls(s.support(), s.n)

    def __getitem__(self, mask):
        return self._terms[mask]

    def __iter__(self):
        return iter(sorted(self._terms))

    def __len__(self):
        return len(self._terms)

    def __eq__(self, other):
        if isinstance(other, MultilinearPolynomial):
            return self._terms == other._terms
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def __repr__(self):
        body = ", ".join(f"{m:#x}: {c!r}" for m, c in sorted(self._terms.items()))
        return f"MultilinearPolynomial({{{body}}}, n={self.n})"

    def __add__(self, other: "MultilinearPolynomial") -> "MultilinearPolynomial":
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0.0) + c
        return MultilinearPolynomial(out, max(self.n, other.n))

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, a: float) -> "MultilinearPolynomial":
        return MultilinearPolynomial({m: a * c for m, c in self._terms.items()}, self.n)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> float:
        """Maximum monomial size; the zero polynomial has degree -inf."""
        if not self._terms:
            return float("-inf")
        return max(m.bit_count() for m in self._terms)

    @property
    def variables(self) -> int:
        """Bitmask of all variables that appear."""
        out = 0
        for m in self._terms:
            out |= m
        return out

    def norm(self) -> float:
        """Sum of absolute coefficients."""
        return float(sum(abs(c) for c in self._terms.values()))

    def __call__(self, x) -> float:
        index = x if isinstance(x, (int, np.integer)) else point_to_index(x)
        return float(sum(c * (1 - 2 * ((index & m).bit_count() & 1)) for m, c in self._terms.items()))

    def evaluate_indices(self, indices: np.ndarray) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.uint64)
        out = np.zeros(idx.shape, dtype=np.float64)
        for m, c in self._terms.items():
            out += c * (1.0 - 2.0 * (popcount(idx & np.uint64(m)) & 1))
        return out

    def to_spectrum(self, n: int | None = None) -> FourierSpectrum:
        n = self.n if n is None else n
        coeffs = np.zeros(1 << n)
        for m, c in self._terms.items():
            if m >> n:
                raise ValueError("polynomial does not fit in the requested variable count")
            coeffs[m] = c
        return FourierSpectrum(n, coeffs)
