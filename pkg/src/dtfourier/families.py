"""Elementary set families and the recursive partition of the k-subsets of {1..n}.

Sets of integers are stored as bitmasks with element ``i`` at bit ``i - 1``.
An elementary family is a product ``C(I_1, k_1) * ... * C(I_l, k_l)`` over
pairwise disjoint integer intervals with every ``k_j`` in {0, 1, 2}; a family
with no blocks is ``{emptyset}``.
"""
from __future__ import annotations

import csv
import functools
import io
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

ENUMERATION_CAP = 10**7
COVER_CHECK_CAP = 10**8
ALPHA = 2 + math.sqrt(2)


@dataclass(frozen=True, order=True)
class IntegerInterval:
    """The integers lo..hi inclusive; empty when hi == lo - 1."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.hi < self.lo - 1:
            raise ValueError(f"invalid interval [{self.lo}..{self.hi}]")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def __contains__(self, x: int) -> bool:
        return self.lo <= x <= self.hi

    def __iter__(self):
        return iter(range(self.lo, self.hi + 1))

    def translate(self, x: int) -> "IntegerInterval":
        return IntegerInterval(self.lo + x, self.hi + x)

    def intersect(self, other: "IntegerInterval") -> "IntegerInterval":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return IntegerInterval(lo, hi) if hi >= lo else IntegerInterval(lo, lo - 1)

    def __str__(self):
        return f"[{self.lo}..{self.hi}]"


def _mask(elements: Iterable[int]) -> int:
    out = 0
    for e in elements:
        if e < 1:
            raise ValueError("set elements must be positive integers")
        out |= 1 << (e - 1)
    return out


def mask_to_set(mask: int) -> frozenset[int]:
    return frozenset(i + 1 for i in range(mask.bit_length()) if mask >> i & 1)


@dataclass(frozen=True)
class ExplicitFamily:
    sets: frozenset[int]

    @classmethod
    def from_sets(cls, sets: Iterable[Iterable[int]]) -> "ExplicitFamily":
        return cls(frozenset(_mask(s) for s in sets))

    @classmethod
    def level(cls, n: int, k: int) -> "ExplicitFamily":
        """All k-subsets of {1..n}."""
        return cls.from_sets(itertools.combinations(range(1, n + 1), k))

    def masks(self) -> list[int]:
        return sorted(self.sets)

    def as_sets(self) -> set[frozenset[int]]:
        return {mask_to_set(m) for m in self.sets}

    def translate(self, x: int) -> "ExplicitFamily":
        if x < 0:
            raise ValueError("translation must be nonnegative")
        return ExplicitFamily(frozenset(m << x for m in self.sets))

    def __len__(self):
        return len(self.sets)

    def __or__(self, other: "ExplicitFamily") -> "ExplicitFamily":
        return ExplicitFamily(self.sets | other.sets)


def star(A: ExplicitFamily, B: ExplicitFamily) -> ExplicitFamily:
    """The family of all unions a | b with a in A and b in B."""
    return ExplicitFamily(frozenset(a | b for a in A.sets for b in B.sets))


@dataclass(frozen=True)
class ElementaryFamily:
    blocks: tuple[tuple[IntegerInterval, int], ...] = ()

    def __post_init__(self):
        blocks = tuple((iv if isinstance(iv, IntegerInterval) else IntegerInterval(*iv), int(k))
                       for iv, k in self.blocks)
        for iv, k in blocks:
            if k not in (0, 1, 2):
                raise ValueError(f"block multiplicity must be 0, 1 or 2, got {k}")
        nonempty = sorted(iv for iv, _ in blocks if iv.size)
        for a, b in zip(nonempty, nonempty[1:]):
            if b.lo <= a.hi:
                raise ValueError(f"intervals {a} and {b} overlap")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def of(cls, *blocks: tuple[int, int, int]) -> "ElementaryFamily":
        """Shorthand: ``ElementaryFamily.of((1, 3, 1), (5, 6, 2))``."""
        return cls(tuple((IntegerInterval(lo, hi), k) for lo, hi, k in blocks))

    @property
    def k(self) -> int:
        return sum(k for _, k in self.blocks)

    def size(self) -> int:
        return ef_size(self)

    def is_empty(self) -> bool:
        return any(k > iv.size for iv, k in self.blocks)

    def translate(self, x: int) -> "ElementaryFamily":
        return ElementaryFamily(tuple((iv.translate(x), k) for iv, k in self.blocks))

    def restrict(self, n: int) -> "ElementaryFamily":
        """Intersect with the power set of {1..n}."""
        ground = IntegerInterval(1, n)
        return ElementaryFamily(tuple((iv.intersect(ground), k) for iv, k in self.blocks))

    def masks(self) -> list[int]:
        return ef_enumerate(self).masks()

    def normalized(self) -> "ElementaryFamily":
        """Drop multiplicity-0 blocks and sort by interval; same member sets."""
        return ElementaryFamily(tuple(sorted((iv, k) for iv, k in self.blocks if k)))

    def __str__(self):
        if not self.blocks:
            return "{}"
        return " ".join(f"{iv}:{k}" for iv, k in self.blocks)


def parse_family(text: str) -> ElementaryFamily:
    text = text.strip()
    if text == "{}":
        return ElementaryFamily(())
    blocks = []
    for token in text.split():
        iv, k = token.rsplit(":", 1)
        lo, hi = iv.strip("[]").split("..")
        blocks.append((IntegerInterval(int(lo), int(hi)), int(k)))
    return ElementaryFamily(tuple(blocks))


def ef_size(E: ElementaryFamily) -> int:
    return math.prod(math.comb(iv.size, k) for iv, k in E.blocks)


def ef_enumerate(E: ElementaryFamily) -> ExplicitFamily:
    size = ef_size(E)
    if size > ENUMERATION_CAP:
        raise ValueError(f"family of size {size} exceeds the enumeration cap")
    choices = [[_mask(c) for c in itertools.combinations(iv, k)] for iv, k in E.blocks]
    return ExplicitFamily(frozenset(functools.reduce(int.__or__, combo, 0)
                                    for combo in itertools.product(*choices)))


def families_disjoint(E: ElementaryFamily, F: ElementaryFamily) -> bool:
    """Decide E and F share no member, without enumerating either.

    A common member picks exactly k_j elements from each block of E and
    exactly k'_l from each block of F, which is a transportation problem on
    the pairwise block intersections.
    """
    if E.is_empty() or F.is_empty() or E.k != F.k:
        return True
    G = nx.DiGraph()
    for j, (iv, k) in enumerate(E.blocks):
        G.add_edge("s", ("e", j), capacity=k)
    for l, (iv, k) in enumerate(F.blocks):
        G.add_edge(("f", l), "t", capacity=k)
    for (j, (a, _)), (l, (b, _)) in itertools.product(enumerate(E.blocks), enumerate(F.blocks)):
        overlap = a.intersect(b).size
        if overlap:
            G.add_edge(("e", j), ("f", l), capacity=overlap)
    if E.k == 0:
        return False
    if "s" not in G or "t" not in G:
        return True
    return nx.maximum_flow_value(G, "s", "t") < E.k


@functools.lru_cache(maxsize=None)
def _partition_pow2(n: int, k: int) -> tuple[ElementaryFamily, ...]:
    if k == 0:
        return (ElementaryFamily(()),)
    if k > n:
        return ()
    if k <= 2:
        return (ElementaryFamily(((IntegerInterval(1, n), k),)),)
    if n <= 2:
        return ()
    half = n // 2
    parts = []
    for i in range(k + 1):
        right = [E.translate(half) for E in _partition_pow2(half, k - i)]
        for left in _partition_pow2(half, i):
            for r in right:
                parts.append(ElementaryFamily(left.blocks + r.blocks))
    return tuple(parts)


def partition_pnk(n: int, k: int) -> list[ElementaryFamily]:
    """Partition the k-subsets of {1..n} into nonempty elementary families.

    Splits the ground set in half and recurses on each side, taking products
    over how many of the k elements fall on the left.  Other n run at the
    next power of two and restrict every block to {1..n}.
    """
    if n < 1 or k < 0:
        raise ValueError("need n >= 1 and k >= 0")
    m = 1 << (n - 1).bit_length()
    parts = _partition_pow2(m, k)
    if m != n:
        parts = (E.restrict(n) for E in parts)
    return [E for E in parts if not E.is_empty()]


def partition_cost(parts: Sequence[ElementaryFamily]) -> float:
    return math.fsum(math.sqrt(ef_size(E)) for E in parts)


@functools.lru_cache(maxsize=None)
def canonical_cost(n: int, k: int) -> tuple[int, float]:
    """Part count and cost of partition_pnk(n, k) for n a power of two, without building it.

    A product of families has size equal to the product of sizes, so both
    quantities follow the same halving recursion as the partition itself.
    """
    if n < 1 or n & (n - 1):
        raise ValueError("n must be a power of two")
    if k == 0:
        return 1, 1.0
    if k > n:
        return 0, 0.0
    if k <= 2:
        return 1, math.sqrt(math.comb(n, k))
    if n <= 2:
        return 0, 0.0
    parts, cost = 0, 0.0
    for i in range(k + 1):
        pl, cl = canonical_cost(n // 2, i)
        pr, cr = canonical_cost(n // 2, k - i)
        parts += pl * pr
        cost += cl * cr
    return parts, cost


def log_comb(n: int, k: int) -> float:
    if not 0 <= k <= n:
        return -math.inf
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def pi_upper_bound(n: int, k: int, c: float) -> float:
    """(2+sqrt2)^(k-1) c^(k-1) / sqrt(k) * (2n/k)^(k/2)."""
    if c < 1:
        raise ValueError("the constant c must be at least 1")
    return math.exp((k - 1) * math.log(ALPHA * c) - 0.5 * math.log(k) + 0.5 * k * math.log(2 * n / k))


def recurrence_bound(n: int, k: int, c: float) -> float:
    """Solution of the halving recurrence for n a power of two."""
    return math.exp((k - 1) * math.log(ALPHA * c) - 0.5 * math.log(k) + 0.5 * k * math.log(n / k))


def binomial_split_sum(k: int) -> float:
    """sum_{i=1}^{k-1} (k/i)^(i/2) (k/(k-i))^((k-i)/2) / sqrt(i(k-i)), in log space."""
    if k < 1:
        raise ValueError("k must be positive")
    terms = []
    for i in range(1, k):
        j = k - i
        log_t = 0.5 * i * math.log(k / i) + 0.5 * j * math.log(k / j) - 0.5 * math.log(i * j)
        terms.append(math.exp(log_t))
    return math.fsum(terms)


def binomial_split_ratios(k_max: int = 60) -> list[float]:
    """binomial_split_sum(k) / sqrt(2^k / k) for k = 1..k_max."""
    return [binomial_split_sum(k) / math.sqrt(2.0**k / k) for k in range(1, k_max + 1)]


def measured_binomial_constant(k_max: int = 60) -> float:
    """Smallest c >= 1 that makes the binomial-sum inequality hold for all k <= k_max."""
    return max(1.0, max(binomial_split_ratios(k_max)))


def colex_ranks(E: ElementaryFamily) -> np.ndarray:
    """Colexicographic rank of every member set among all k-sets of the integers.

    Blocks are disjoint intervals, so a member's sorted elements run block by
    block and each block's share of the rank depends only on its own choice.
    """
    total = np.zeros(1, dtype=np.int64)
    offset = 0
    for iv, k in sorted(E.normalized().blocks):
        contrib = np.array([sum(math.comb(e - 1, offset + t + 1) for t, e in enumerate(c))
                            for c in itertools.combinations(iv, k)], dtype=np.int64)
        total = np.add.outer(total, contrib).ravel()
        offset += k
    return total


@dataclass
class CoverReport:
    n: int
    k: int
    parts: int
    members: int
    disjoint: bool
    covers: bool

    @property
    def ok(self) -> bool:
        return self.disjoint and self.covers


def cover_check(parts: Sequence[ElementaryFamily], n: int, k: int, cap: int = COVER_CHECK_CAP) -> CoverReport:
    """Enumerate every member of every part and check an exact disjoint cover of P_{n,k}."""
    total = math.comb(n, k)
    if total > cap:
        raise ValueError(f"binom({n},{k}) = {total} exceeds the cover-check cap")
    seen = np.zeros(total, dtype=bool)
    disjoint = True
    members = 0
    for E in parts:
        if E.k != k or any(iv.size and (iv.lo < 1 or iv.hi > n) for iv, kk in E.blocks if kk):
            return CoverReport(n, k, len(parts), members, disjoint, False)
        r = colex_ranks(E)
        members += r.size
        if seen[r].any() or np.unique(r).size != r.size:
            disjoint = False
        seen[r] = True
    return CoverReport(n, k, len(parts), members, disjoint, bool(seen.all()) and members == total)


def pairwise_disjoint(parts: Sequence[ElementaryFamily]) -> bool:
    return all(families_disjoint(a, b) for a, b in itertools.combinations(parts, 2))


@dataclass(frozen=True)
class RecurrenceRow:
    n: int
    k: int
    parts: int
    cost: float
    lower: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.cost / self.bound

    @property
    def ok(self) -> bool:
        return self.cost <= self.bound


def recurrence_bound_check(n_max: int, k_max: int, c: float | None = None) -> list[RecurrenceRow]:
    """Cost of the canonical partition against the recurrence solution on a grid."""
    if n_max & (n_max - 1) or not 1 <= n_max <= 1024 or not 1 <= k_max <= 8:
        raise ValueError("n_max must be a power of two <= 1024 and k_max <= 8")
    c = measured_binomial_constant() if c is None else c
    rows = []
    n = 1
    while n <= n_max:
        for k in range(1, k_max + 1):
            parts, cost = canonical_cost(n, k)
            if not parts:
                continue
            lower = math.sqrt(math.comb(n, k))
            bound = lower if min(n, k) <= 2 else recurrence_bound(n, k, c)
            rows.append(RecurrenceRow(n, k, parts, cost, lower, bound))
        n *= 2
    return rows


def partition_text(parts: Sequence[ElementaryFamily]) -> str:
    return "".join(f"{E}\n" for E in parts)


def cost_report_csv(rows: Iterable[tuple[int, int, int, float, float, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "k", "parts", "cost", "lower", "upper"])
    for n, k, parts, cost, lower, upper in rows:
        w.writerow([n, k, parts, repr(cost), repr(lower), repr(upper)])
    return buf.getvalue()
