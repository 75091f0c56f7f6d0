"""Rorrelation: the alternating product (1/n) 1^T D_{x_1} U D_{x_2} U ... U D_{x_k} 1.

Inputs are n x k sign matrices (column j is x_j); batches carry a leading
sample axis, so a batch of B inputs has shape (B, n, k).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fourier import fwht, popcount

MAX_DIM = 4096
STAR = -1
ORTHOGONALITY_TOL = 1e-10
BATCH = 8192


def _check_dim(n: int) -> None:
    if n < 2 or n > MAX_DIM or n & (n - 1):
        raise ValueError(f"dimension must be a power of two in [2, {MAX_DIM}], got {n}")


@dataclass(frozen=True, eq=False)
class OrthogonalMatrix:
    """A dense n x n orthogonal matrix; ``hadamard`` enables the fast transform path."""

    entries: np.ndarray
    hadamard: bool = False

    def __post_init__(self):
        a = np.ascontiguousarray(self.entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("an orthogonal matrix must be square")
        _check_dim(a.shape[0])
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def orthogonality_error(self) -> float:
        U = self.entries
        return float(np.abs(U.T @ U - np.eye(self.n)).max())

    def check(self, tol: float = ORTHOGONALITY_TOL) -> "OrthogonalMatrix":
        err = self.orthogonality_error()
        if err > tol:
            raise ValueError(f"matrix is not orthogonal: max |U^T U - I| = {err:.3g}")
        return self

    def apply(self, V: np.ndarray) -> np.ndarray:
        """U v for every row v of V."""
        if self.hadamard:
            return fwht(V, axis=-1) / math.sqrt(self.n)
        return V @ self.entries.T

    def apply_transpose(self, V: np.ndarray) -> np.ndarray:
        """U^T v for every row v of V."""
        if self.hadamard:
            return fwht(V, axis=-1) / math.sqrt(self.n)
        return V @ self.entries

    def __eq__(self, other):
        if not isinstance(other, OrthogonalMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())


def haar_orthogonal(n: int, rng: np.random.Generator) -> OrthogonalMatrix:
    """Haar-random orthogonal matrix from the QR factors of a Gaussian matrix.

    Scaling column j of Q by sign(R_jj) makes the factorization unique, which
    removes the bias of the QR sign convention.
    """
    _check_dim(n)
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return OrthogonalMatrix(Q * signs)


def hadamard_matrix(n: int) -> OrthogonalMatrix:
    """Normalized Hadamard matrix with entries n^(-1/2) (-1)^popcount(i & j)."""
    _check_dim(n)
    idx = np.arange(n, dtype=np.uint64)
    parity = popcount(idx[:, None] & idx[None, :]) & 1
    return OrthogonalMatrix((1.0 - 2.0 * parity) / math.sqrt(n), hadamard=True)


@dataclass(frozen=True)
class RorrelationInstance:
    U: OrthogonalMatrix
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("the fold count k must be at least 1")

    @property
    def n(self) -> int:
        return self.U.n

    @property
    def yes_threshold(self) -> float:
        return 2.0 ** -self.k

    @property
    def no_threshold(self) -> float:
        return 2.0 ** (-self.k - 1)

    def supports_mass_checks(self) -> bool:
        """True when k <= (1/3) log2 n - 1."""
        return 3 * (self.k + 1) <= math.log2(self.n)


def _as_batch(inst: RorrelationInstance, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    single = x.ndim == 2
    batch = x[None] if single else x
    if batch.ndim != 3 or batch.shape[1:] != (inst.n, inst.k):
        raise ValueError(f"inputs must have shape ({inst.n}, {inst.k}) or (B, {inst.n}, {inst.k}), got {x.shape}")
    return batch, single


def phi(inst: RorrelationInstance, x) -> float | np.ndarray:
    """Evaluate the rorrelation right to left: k-1 products with U, k diagonal scalings."""
    batch, single = _as_batch(inst, x)
    out = np.empty(batch.shape[0])
    for lo in range(0, batch.shape[0], BATCH):
        xs = batch[lo:lo + BATCH].astype(np.float64)
        v = xs[:, :, -1]
        for j in range(inst.k - 2, -1, -1):
            v = xs[:, :, j] * inst.U.apply(v)
        out[lo:lo + BATCH] = v.sum(axis=1) / inst.n
    return float(out[0]) if single else out


def classify_value(k: int, value):
    """1 when value >= 2^-k, 0 when |value| <= 2^(-k-1), STAR otherwise."""
    v = np.asarray(value, dtype=np.float64)
    out = np.where(v >= 2.0 ** -k, 1, np.where(np.abs(v) <= 2.0 ** (-k - 1), 0, STAR))
    return int(out) if out.ndim == 0 else out


def classify(inst: RorrelationInstance, x):
    return classify_value(inst.k, phi(inst, x))


def quantum_acceptance(inst: RorrelationInstance, x):
    """Acceptance probability (phi + 1) / 2 of the quantum query algorithm."""
    return (phi(inst, x) + 1.0) / 2.0


@dataclass(frozen=True)
class Amplification:
    damping: float
    advantage: float
    repetitions: int

    def error_bound(self) -> float:
        return math.exp(-2.0 * self.repetitions * self.advantage**2)


def amplification(k: int, target_error: float) -> Amplification:
    """Damping p = 1/(1 + 3 * 2^-(k+2)) and the majority-vote length reaching the error.

    The vote errs at most exp(-2 t gamma^2) with gamma = 2^(-k-4); t is the
    smallest integer meeting the target.
    """
    if k < 1 or not 0.0 < target_error < 0.5:
        raise ValueError("need k >= 1 and target error in (0, 1/2)")
    gamma = 2.0 ** (-k - 4)
    t = math.ceil(math.log(1.0 / target_error) / (2.0 * gamma**2))
    while t > 1 and math.exp(-2.0 * (t - 1) * gamma**2) <= target_error:
        t -= 1
    return Amplification(1.0 / (1.0 + 3.0 * 2.0 ** (-(k + 2))), gamma, t)


def sample_uniform(n: int, k: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Independent uniform signs, shape (n, k) or (size, n, k), dtype int8."""
    shape = (n, k) if size is None else (size, n, k)
    return (1 - 2 * rng.integers(0, 2, size=shape, dtype=np.int8)).astype(np.int8)


def _round_signs(v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent +-1 per entry with mean equal to the entry (entries in [-1, 1])."""
    return np.where(rng.random(v.shape) < (1.0 + v) / 2.0, 1, -1).astype(np.int8)


@dataclass(frozen=True)
class HardDistribution:
    """Positively biased inputs whose moments of order below k vanish.

    For each adjacent column pair j, j+1 a Gaussian vector g and its image
    U^T g are scaled by 1/scale, clamped to [-1, 1] and rounded to signs s_j
    and t_j.  Column 1 is s_1, column k is t_{k-1} and each middle column j is
    the product t_{j-1} * s_j.  Every pair is independent and sign-symmetric,
    so products of fewer than k entries average to zero, while each link
    contributes a factor close to (2/pi) U_{ab} to the expected rorrelation.
    """

    instance: RorrelationInstance
    scale: float = 1.0 / 16.0

    def __post_init__(self):
        if not 0.0 < self.scale <= 1.0:
            raise ValueError("scale must lie in (0, 1]")

    def link_correlation(self) -> float:
        """Lower bound (erf(scale/sqrt2)/scale)^2 on the per-link factor; tends to 2/pi."""
        return (math.erf(self.scale / math.sqrt(2.0)) / self.scale) ** 2

    def phi_lower_bound(self) -> float:
        return self.link_correlation() ** (self.instance.k - 1)


def sample_hard(D: HardDistribution, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    inst = D.instance
    batch = 1 if size is None else size
    x = np.empty((batch, inst.n, inst.k), dtype=np.int8)
    if inst.k == 1:
        x[...] = 1
    else:
        carry = None
        for j in range(inst.k - 1):
            g = rng.standard_normal((batch, inst.n))
            h = inst.U.apply_transpose(g)
            s = _round_signs(np.clip(g / D.scale, -1.0, 1.0), rng)
            t = _round_signs(np.clip(h / D.scale, -1.0, 1.0), rng)
            x[:, :, j] = s if carry is None else carry * s
            carry = t
        x[:, :, -1] = carry
    return x[0] if size is None else x


def write_matrix(path: str | Path, U: OrthogonalMatrix) -> None:
    """Header line "n n" followed by little-endian binary64 entries, row-major."""
    with open(path, "wb") as fh:
        fh.write(f"{U.n} {U.n}\n".encode("ascii"))
        fh.write(U.entries.astype("<f8").tobytes(order="C"))


def read_matrix(path: str | Path, check: bool = True) -> OrthogonalMatrix:
    with open(path, "rb") as fh:
        rows, cols = (int(t) for t in fh.readline().split())
        if rows != cols:
            raise ValueError("matrix file is not square")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    if payload.size != rows * cols:
        raise ValueError(f"expected {rows * cols} entries, found {payload.size}")
    U = OrthogonalMatrix(payload.reshape(rows, cols).astype(np.float64))
    return U.check() if check else U


def matrix_csv(U: OrthogonalMatrix) -> str:
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in U.entries)


def read_input(text: str) -> np.ndarray:
    """Parse an input matrix: one row per coordinate, k whitespace-separated signs."""
    rows = [line.replace(",", " ").split() for line in text.splitlines() if line.strip()]
    x = np.array(rows, dtype=np.int64)
    if x.ndim != 2 or not np.isin(x, (-1, 1)).all():
        raise ValueError("input must be a rectangular matrix of +-1 entries")
    return x.astype(np.int8)


def samples_csv(values: np.ndarray, k: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "phi", "class"])
    classes = classify_value(k, values)
    for i, (v, c) in enumerate(zip(np.atleast_1d(values), np.atleast_1d(classes))):
        w.writerow([i, repr(float(v)), "*" if c == STAR else int(c)])
    return buf.getvalue()
