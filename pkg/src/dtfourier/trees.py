"""Generalized decision trees: perfect binary trees with polynomial leaves.

Node addressing is heap style.  A node reached by a path of length ``t`` whose
branch bits are ``bits`` (first step most significant, bit 0 for the ``+1``
branch and 1 for the ``-1`` branch) sits at heap index ``2**t - 1 + bits``.
Variables are 0-based bit positions, matching :mod:`dtfourier.fourier`.
Depth positions inside slicing families are 1-based, stored as bitmasks with
position ``i`` at bit ``i - 1``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .fourier import (
    MAX_VARS,
    BooleanFunction,
    MultilinearPolynomial,
    fwht,
    point_to_index,
)

ENUMERATION_CAP = 10**7

ZERO = MultilinearPolynomial()


@dataclass(frozen=True, eq=False)
class DecisionTree:
    n: int
    d: int
    internal: tuple[int, ...]
    leaves: tuple[MultilinearPolynomial, ...]

    def __post_init__(self):
        if self.d < 0 or self.d > min(self.n, MAX_VARS):
            raise ValueError(f"depth {self.d} outside [0, min(n, {MAX_VARS})]")
        internal = tuple(int(v) for v in self.internal)
        if len(internal) != (1 << self.d) - 1:
            raise ValueError(f"need {(1 << self.d) - 1} internal nodes, got {len(internal)}")
        leaves = tuple(
            leaf if isinstance(leaf, MultilinearPolynomial) else MultilinearPolynomial.constant(leaf, self.n)
            for leaf in self.leaves
        )
        if len(leaves) != 1 << self.d:
            raise ValueError(f"need {1 << self.d} leaves, got {len(leaves)}")
        object.__setattr__(self, "internal", internal)
        object.__setattr__(self, "leaves", leaves)

    @classmethod
    def from_constants(cls, n: int, internal: Sequence[int], values: Sequence[float]) -> "DecisionTree":
        d = len(values).bit_length() - 1
        return cls(n, d, tuple(internal), tuple(MultilinearPolynomial.constant(v, n) for v in values))

    def __eq__(self, other):
        if not isinstance(other, DecisionTree):
            return NotImplemented
        return (self.n, self.d, self.internal, self.leaves) == (other.n, other.d, other.internal, other.leaves)

    def __hash__(self):
        return hash((self.n, self.d, self.internal, self.leaves))

    @property
    def degree(self) -> float:
        return max(leaf.degree for leaf in self.leaves)

    def leaf_constants(self) -> np.ndarray:
        """Leaf labels as floats; only valid for trees of degree at most 0."""
        if self.degree > 0:
            raise ValueError("tree has non-constant leaves")
        return np.array([leaf.get(0, 0.0) for leaf in self.leaves])

    def path_variables(self, leaf: int) -> list[int]:
        """Variables queried on the way to ``leaf``, root first."""
        return [self.internal[(1 << t) - 1 + (leaf >> (self.d - t))] for t in range(self.d)]

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Violation:
    kind: str
    path: tuple[int, ...]
    message: str


def _bits_to_path(bits: int, length: int) -> tuple[int, ...]:
    return tuple(-1 if (bits >> (length - 1 - t)) & 1 else 1 for t in range(length))


def _path_to_bits(path: Sequence[int]) -> int:
    bits = 0
    for step in path:
        if step not in (1, -1):
            raise ValueError(f"path steps must be +1 or -1, got {step}")
        bits = (bits << 1) | (step == -1)
    return bits


def validate(T: DecisionTree) -> Violation | None:
    """Return the first broken tree invariant, or None if the tree is valid."""
    for h, var in enumerate(T.internal):
        if not 0 <= var < T.n:
            t = (h + 1).bit_length() - 1
            return Violation("variable-range", _bits_to_path(h + 1 - (1 << t), t),
                             f"node queries x{var}, outside 0..{T.n - 1}")
    for leaf in range(1 << T.d):
        path = _bits_to_path(leaf, T.d)
        seen = 0
        for t, var in enumerate(T.path_variables(leaf)):
            if seen >> var & 1:
                return Violation("repeated-variable", path[:t], f"x{var} queried twice on one path")
            seen |= 1 << var
        label = T.leaves[leaf]
        if label.variables >> T.n:
            return Violation("leaf-range", path, "leaf polynomial uses variables outside 0..n-1")
        if label.variables & seen:
            return Violation("leaf-variable", path, "leaf polynomial mentions a queried variable")
    return None


def leaf_index_table(n: int, d: int, internal: Sequence[int]) -> np.ndarray:
    """Leaf reached by every point of {-1,1}^n, as an int array of length 2^n."""
    if n > MAX_VARS:
        raise ValueError(f"truth tables need n <= {MAX_VARS}")
    points = np.arange(1 << n, dtype=np.int64)
    heap = np.zeros(1 << n, dtype=np.int64)
    internal = np.asarray(internal, dtype=np.int64)
    for _ in range(d):
        var = internal[heap]
        heap = 2 * heap + 1 + ((points >> var) & 1)
    return heap - ((1 << d) - 1)


def evaluate(T: DecisionTree, x) -> float:
    """Follow the path chosen by ``x`` and evaluate the leaf polynomial there."""
    index = x if isinstance(x, (int, np.integer)) else point_to_index(x)
    h = 0
    for _ in range(T.d):
        h = 2 * h + 1 + ((index >> T.internal[h]) & 1)
    return T.leaves[h - ((1 << T.d) - 1)](index)


def evaluate_closed_form(T: DecisionTree, x) -> float:
    """Sum over all leaves of T(v) times the indicator product of the path."""
    index = x if isinstance(x, (int, np.integer)) else point_to_index(x)
    total = 0.0
    for leaf, label in enumerate(T.leaves):
        weight = 1.0
        for t, var in enumerate(T.path_variables(leaf)):
            v = -1 if (leaf >> (T.d - 1 - t)) & 1 else 1
            xv = -1 if (index >> var) & 1 else 1
            weight *= (1 + v * xv) / 2
        total += label(index) * weight
    return total


def truth_table(T: DecisionTree) -> BooleanFunction:
    leaf_of = leaf_index_table(T.n, T.d, T.internal) if T.d else np.zeros(1 << T.n, dtype=np.int64)
    if T.degree <= 0:
        return BooleanFunction(T.n, T.leaf_constants()[leaf_of])
    values = np.zeros(1 << T.n)
    for leaf, label in enumerate(T.leaves):
        hit = np.flatnonzero(leaf_of == leaf)
        values[hit] = label.evaluate_indices(hit)
    return BooleanFunction(T.n, values)


def density(T: DecisionTree) -> float:
    """Fraction of leaves whose label is not the zero polynomial."""
    return sum(not leaf.is_zero for leaf in T.leaves) / (1 << T.d)


def subtree(T: DecisionTree, v: Sequence[int]) -> DecisionTree:
    """The depth d-|v| tree rooted at the node reached by path ``v``."""
    m = len(v)
    if m > T.d:
        raise ValueError(f"path of length {m} is longer than the depth {T.d}")
    bits = _path_to_bits(v)
    depth = T.d - m
    internal = []
    for t in range(depth):
        base = (1 << (m + t)) - 1 + (bits << t)
        internal.extend(T.internal[base:base + (1 << t)])
    leaves = T.leaves[bits << depth:(bits + 1) << depth]
    return DecisionTree(T.n, depth, tuple(internal), leaves)


def level_family(d: int, k: int) -> list[int]:
    """All k-subsets of the depth positions {1..d}, as bitmasks."""
    return [sum(1 << i for i in c) for c in itertools.combinations(range(d), k)]


def _family_masks(family, d: int) -> list[int]:
    masks = family.masks() if hasattr(family, "masks") else family
    out = [int(m) for m in masks]
    for m in out:
        if m < 0 or m >> d:
            raise ValueError(f"family member {m:#x} is not a subset of {{1..{d}}}")
    return out


def _slice_terms(n: int, d: int, internal: Sequence[int], masks: Sequence[int]):
    """Yield (leaf, monomial, sign) for every (leaf, member set) pair."""
    for leaf in range(1 << d):
        path_vars = [internal[(1 << t) - 1 + (leaf >> (d - t))] for t in range(d)]
        for S in masks:
            mono = 0
            neg = 0
            for t in range(d):
                if S >> t & 1:
                    mono ^= 1 << path_vars[t]
                    neg ^= (leaf >> (d - 1 - t)) & 1
            yield leaf, mono, -1.0 if neg else 1.0


def slice(T: DecisionTree, family) -> MultilinearPolynomial:
    """Keep, for each leaf, only the path-expansion terms indexed by ``family``."""
    masks = _family_masks(family, T.d)
    scale = math.ldexp(1.0, -T.d)
    acc: dict[int, float] = {}
    for leaf, mono, sign in _slice_terms(T.n, T.d, T.internal, masks):
        for m, c in T.leaves[leaf].items():
            key = m ^ mono
            acc[key] = acc.get(key, 0.0) + sign * scale * c
    return MultilinearPolynomial(acc, T.n)


def slice_matrix(n: int, d: int, internal: Sequence[int], family) -> np.ndarray:
    """Linear map from constant leaf labels to slice coefficients, shape (2^n, 2^d)."""
    masks = _family_masks(family, d)
    out = np.zeros((1 << n, 1 << d))
    scale = math.ldexp(1.0, -d)
    for leaf, mono, sign in _slice_terms(n, d, internal, masks):
        out[mono, leaf] += sign * scale
    return out


def slice_additivity_check(T: DecisionTree, first, second) -> bool:
    a = _family_masks(first, T.d)
    b = _family_masks(second, T.d)
    if set(a) & set(b):
        raise ValueError("families overlap")
    return slice(T, a + b) == slice(T, a) + slice(T, b)


@dataclass(frozen=True)
class PM01:
    """Leaves are 0 with probability 1 - density, else +1 or -1 uniformly."""

    density: float = 0.5


@dataclass(frozen=True)
class Monomial:
    """Leaves are 0 or a signed degree-k monomial avoiding the path variables."""

    k: int
    density: float = 0.5


def random_tree(n: int, d: int, leaf_model=PM01(), rng: np.random.Generator | None = None) -> DecisionTree:
    rng = np.random.default_rng() if rng is None else rng
    if not 0 <= d <= min(n, MAX_VARS):
        raise ValueError(f"cannot build a depth-{d} tree on {n} variables")
    if not 0.0 <= leaf_model.density <= 1.0:
        raise ValueError("density must lie in [0, 1]")
    if isinstance(leaf_model, Monomial) and leaf_model.k > n - d:
        raise ValueError(f"degree-{leaf_model.k} leaves need at least {d + leaf_model.k} variables")
    internal = [0] * ((1 << d) - 1)
    used = [0] * ((1 << (d + 1)) - 1)
    for h in range(len(internal)):
        free = [i for i in range(n) if not used[h] >> i & 1]
        var = int(free[rng.integers(len(free))])
        internal[h] = var
        used[2 * h + 1] = used[2 * h + 2] = used[h] | (1 << var)
    leaves = []
    for leaf in range(1 << d):
        if rng.random() >= leaf_model.density:
            leaves.append(MultilinearPolynomial({}, n))
            continue
        sign = 1.0 if rng.random() < 0.5 else -1.0
        if isinstance(leaf_model, Monomial):
            path = used[(1 << d) - 1 + leaf]
            free = [i for i in range(n) if not path >> i & 1]
            chosen = rng.choice(len(free), size=leaf_model.k, replace=False)
            mask = sum(1 << free[i] for i in chosen)
            leaves.append(MultilinearPolynomial.monomial(mask, sign, n))
        else:
            leaves.append(MultilinearPolynomial.constant(sign, n))
    return DecisionTree(n, d, tuple(internal), tuple(leaves))


def structure_count(n: int, d: int) -> int:
    """Number of valid internal-node assignments of a depth-d tree."""
    return math.prod((n - t) ** (1 << t) for t in range(d))


def tree_count(n: int, d: int, num_labels: int) -> int:
    return structure_count(n, d) * num_labels ** (1 << d)


def enumerate_structures(n: int, d: int) -> Iterator[tuple[int, ...]]:
    """Every valid internal table, heap order, each node's variable ascending."""
    size = (1 << d) - 1
    internal = [0] * size
    used = [0] * (2 * size + 1)

    def fill(h):
        if h == size:
            yield tuple(internal)
            return
        for var in range(n):
            if used[h] >> var & 1:
                continue
            internal[h] = var
            used[2 * h + 1] = used[2 * h + 2] = used[h] | (1 << var)
            yield from fill(h + 1)

    yield from fill(0)


def label_matrix(labels: Sequence[float], num_leaves: int) -> np.ndarray:
    """All leaf labelings in lexicographic order, one per row."""
    return np.array(list(itertools.product(labels, repeat=num_leaves)), dtype=np.float64).reshape(-1, num_leaves)


def enumerate_trees(n: int, d: int, label_set: Iterable[float]) -> Iterator[DecisionTree]:
    """Every valid degree-0 tree with labels from ``label_set``, canonical order."""
    labels = sorted(set(label_set))
    count = tree_count(n, d, len(labels))
    if count > ENUMERATION_CAP:
        raise ValueError(f"{count} trees exceed the enumeration cap of {ENUMERATION_CAP}")
    for internal in enumerate_structures(n, d):
        for values in itertools.product(labels, repeat=1 << d):
            yield DecisionTree.from_constants(n, internal, values)


def reach_matrix(n: int, d: int, internal: Sequence[int]) -> np.ndarray:
    """0/1 matrix A with A[x, leaf] = 1 iff point x reaches leaf."""
    A = np.zeros((1 << n, 1 << d))
    leaf_of = leaf_index_table(n, d, internal) if d else np.zeros(1 << n, dtype=np.int64)
    A[np.arange(1 << n), leaf_of] = 1.0
    return A


def spectrum_matrix(n: int, d: int, internal: Sequence[int]) -> np.ndarray:
    """Linear map from constant leaf labels to Fourier coefficients, shape (2^n, 2^d)."""
    return np.ldexp(fwht(reach_matrix(n, d, internal), axis=0), -n)


def to_text(T: DecisionTree) -> str:
    lines = [f"{T.n} {T.d}", " ".join(str(v) for v in T.internal)]
    for leaf in T.leaves:
        lines.append(",".join(f"{m}:{leaf[m]!r}" for m in leaf))
    return "\n".join(lines) + "\n"


def from_text(text: str) -> DecisionTree:
    lines = text.split("\n")
    n, d = (int(t) for t in lines[0].split())
    internal = tuple(int(t) for t in lines[1].split())
    leaves = []
    for line in lines[2:2 + (1 << d)]:
        terms = {}
        for item in filter(None, line.split(",")):
            mask, coeff = item.split(":")
            terms[int(mask)] = float(coeff)
        leaves.append(MultilinearPolynomial(terms, n))
    return DecisionTree(n, d, internal, tuple(leaves))
