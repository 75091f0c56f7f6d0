"""Query-bounded distinguishers, advantage estimation, mass checks and run plumbing."""
from __future__ import annotations

import csv
import datetime
import hashlib
import io
import math
import os
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .bounds import exhaustive_weight_sweep, tree_weight_sweep, WeightSweep
from .families import measured_binomial_constant
from .rorrelation import (HardDistribution, OrthogonalMatrix, RorrelationInstance, classify_value,
                          haar_orthogonal, hadamard_matrix, phi, read_matrix, sample_hard, sample_uniform)
from .trees import DecisionTree, PM01, random_tree, structure_count

SEED_ENV = "DTFOURIER_SEED"
CONSTANTS_FILE = Path(__file__).with_name("constants.txt")
BATCH = 2000

# Stream indices; every random draw in a run comes from exactly one of these.
STREAM_MATRIX, STREAM_UNIFORM, STREAM_HARD, STREAM_POLICY, STREAM_TREES = range(5)


def stream_rng(seed: int, stream: int, batch: int = 0) -> np.random.Generator:
    """Independent generator for (master seed, stream, batch), stable across worker counts."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, batch)))


class QueryBudgetExceeded(RuntimeError):
    pass


class AuditedInput:
    """Read-only view of a batch of inputs that counts distinct entries read per sample."""

    def __init__(self, x: np.ndarray, budget: int):
        self._x = x
        self.budget = budget
        self._seen = np.zeros(x.shape, dtype=bool)

    @property
    def batch(self) -> int:
        return self._x.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self._x.shape[1], self._x.shape[2]

    def read(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Entries x[b, rows[b, q], cols[b, q]] for every sample b."""
        b = np.arange(self.batch)[:, None]
        self._seen[b, rows, cols] = True
        worst = int(self.reads().max(initial=0))
        if worst > self.budget:
            raise QueryBudgetExceeded(f"a sample read {worst} entries with a budget of {self.budget}")
        return self._x[b, rows, cols]

    def read_all(self) -> np.ndarray:
        n, k = self.shape
        rows = np.broadcast_to(np.repeat(np.arange(n), k), (self.batch, n * k))
        cols = np.broadcast_to(np.tile(np.arange(k), n), (self.batch, n * k))
        return self.read(rows, cols).reshape(self.batch, n, k)

    def reads(self) -> np.ndarray:
        return self._seen.sum(axis=(1, 2))


class Distinguisher:
    """A randomized query algorithm: a distribution over depth-``depth`` decision trees."""

    name = "abstract"

    def __init__(self, depth: int):
        if depth < 0:
            raise ValueError("depth must be nonnegative")
        self.depth = depth

    def decide(self, inst: RorrelationInstance, x: AuditedInput, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class ConstantDistinguisher(Distinguisher):
    name = "constant"

    def __init__(self, value: int = 0):
        super().__init__(0)
        self.value = value

    def decide(self, inst, x, rng):
        return np.full(x.batch, float(self.value))


class TreeDistinguisher(Distinguisher):
    """A fixed decision tree over the n*k entries; variable v is entry (v // k, v % k)."""

    name = "fixed-tree"

    def __init__(self, tree: DecisionTree):
        super().__init__(tree.d)
        self.tree = tree
        self.values = tree.leaf_constants()

    def decide(self, inst, x, rng):
        k = inst.k
        internal = np.asarray(self.tree.internal, dtype=np.int64)
        heap = np.zeros(x.batch, dtype=np.int64)
        for _ in range(self.tree.d):
            var = internal[heap]
            bit = x.read((var // k)[:, None], (var % k)[:, None])[:, 0] < 0
            heap = 2 * heap + 1 + bit
        return self.values[heap - len(internal)]


class RandomProbeDistinguisher(Distinguisher):
    """Reads ``depth`` uniformly random entries and votes on the sign of a rorrelation proxy.

    The proxy sums x_{a,j} U_{ab} x_{b,j+1} over read pairs in adjacent columns.
    """

    name = "random-probe"

    def decide(self, inst, x, rng):
        n, k = x.shape
        if self.depth == 0 or k < 2:
            return np.zeros(x.batch)
        flat = np.argsort(rng.random((x.batch, n * k)), axis=1)[:, :self.depth]
        rows, cols = flat // k, flat % k
        vals = x.read(rows, cols).astype(np.float64)
        U = inst.U.entries
        proxy = np.zeros(x.batch)
        for a in range(self.depth):
            for b in range(self.depth):
                adj = cols[:, b] == cols[:, a] + 1
                w = U[rows[:, a], rows[:, b]]
                proxy += np.where(adj, w * vals[:, a] * vals[:, b], 0.0)
        return (proxy > 0).astype(np.float64)


class GreedyProbeDistinguisher(Distinguisher):
    """Reads depth//2 random rows of column 1, each with its most correlated row of column 2.

    Outputs 1 when the weighted partial inner product is positive.
    """

    name = "greedy-probe"

    def decide(self, inst, x, rng):
        n, k = x.shape
        pairs = self.depth // 2
        if pairs == 0 or k < 2:
            return np.zeros(x.batch)
        U = inst.U.entries
        rows = np.argsort(rng.random((x.batch, n)), axis=1)[:, :pairs]
        partner = np.abs(U).argmax(axis=1)[rows]
        left = x.read(rows, np.zeros_like(rows)).astype(np.float64)
        right = x.read(partner, np.ones_like(partner)).astype(np.float64)
        score = (U[rows, partner] * left * right).sum(axis=1)
        return (score > 0).astype(np.float64)


class FullInformationDistinguisher(Distinguisher):
    """Reads every entry and accepts exactly the inputs classified as 1."""

    name = "full"

    def __init__(self, n: int, k: int):
        super().__init__(n * k)

    def decide(self, inst, x, rng):
        return (classify_value(inst.k, phi(inst, x.read_all())) == 1).astype(np.float64)


POLICIES: dict[str, Callable[[int], Distinguisher]] = {
    "random-probe": RandomProbeDistinguisher,
    "greedy-probe": GreedyProbeDistinguisher,
}


def advantage_bound(n: int, k: int, d: int, c_prime: float) -> float:
    """min(1, (c' d log2(n+k)^(2-1/k) / n^(1-1/k))^(k/2))."""
    if min(n, k, d) < 1 or c_prime < 1:
        raise ValueError("all arguments must be at least 1")
    return min(1.0, advantage_bound_raw(n, k, d, c_prime))


def advantage_bound_raw(n: int, k: int, d: int, c_prime: float) -> float:
    base = c_prime * d * math.log2(n + k) ** (2 - 1 / k) / n ** (1 - 1 / k)
    return base ** (k / 2)


def required_constant(n: int, k: int, d: int, advantage: float) -> float:
    """Smallest c' for which the unclamped advantage bound reaches ``advantage``."""
    if d < 1 or advantage <= 0:
        return 0.0
    return advantage ** (2 / k) * n ** (1 - 1 / k) / (d * math.log2(n + k) ** (2 - 1 / k))


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return mean, se


def _batches(total: int, size: int = BATCH) -> list[tuple[int, int]]:
    return [(i, min(size, total - lo)) for i, lo in enumerate(range(0, total, size))]


def _collect(task: Callable[[int, int], np.ndarray], total: int, workers: int) -> np.ndarray:
    """Run ``task(batch_index, count)`` over all batches and concatenate in batch order."""
    jobs = _batches(total)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: task(*job), jobs))
    else:
        parts = [task(*job) for job in jobs]
    return np.concatenate(parts) if parts else np.zeros(0)


@dataclass(frozen=True)
class AdvantageRow:
    policy: str
    d: int
    mean_uniform: float
    mean_hard: float
    advantage: float
    se: float
    bound: float

    def within_bound(self, sigmas: float = 4.0) -> bool:
        return self.advantage <= self.bound + sigmas * self.se


def run_distinguisher(dist: Distinguisher, D: HardDistribution, samples: int, seed: int,
                      c_prime: float = 1.0, workers: int = 1) -> AdvantageRow:
    """Monte Carlo acceptance rates under the uniform and hard distributions.

    Samples are drawn from fixed streams, so every policy sees the same inputs.
    """
    inst = D.instance

    def run(stream, sampler):
        def task(batch, count):
            x = sampler(stream_rng(seed, stream, batch), count)
            audited = AuditedInput(x, dist.depth)
            out = dist.decide(inst, audited, stream_rng(seed, STREAM_POLICY, 2 * batch + (stream == STREAM_HARD)))
            if audited.reads().max(initial=0) > dist.depth:
                raise QueryBudgetExceeded(f"{dist.name} exceeded its budget of {dist.depth}")
            return out
        return _collect(task, samples, workers)

    gu = run(STREAM_UNIFORM, lambda rng, m: sample_uniform(inst.n, inst.k, rng, m))
    gd = run(STREAM_HARD, lambda rng, m: sample_hard(D, rng, m))
    mu, su = _mean_se(gu)
    md, sd = _mean_se(gd)
    bound = advantage_bound(inst.n, inst.k, dist.depth, c_prime) if dist.depth else 0.0
    return AdvantageRow(dist.name, dist.depth, mu, md, abs(md - mu), math.hypot(su, sd), bound)


@dataclass
class AdvantageReport:
    n: int
    k: int
    rows: list[AdvantageRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy", "d", "mean_uniform", "mean_hard", "advantage", "se", "bound"])
        for r in self.rows:
            w.writerow([r.policy, r.d, repr(r.mean_uniform), repr(r.mean_hard), repr(r.advantage),
                        repr(r.se), repr(r.bound)])
        return buf.getvalue()

    def c_prime_needed(self) -> float:
        return max((required_constant(self.n, self.k, r.d, r.advantage) for r in self.rows if r.d), default=0.0)


@dataclass(frozen=True)
class MassReport:
    n: int
    k: int
    samples: int
    uniform_nonzero: float
    uniform_se: float
    hard_yes: float
    hard_se: float

    @property
    def uniform_ok(self) -> bool:
        return self.uniform_nonzero <= 2.0 ** (-self.k - 1) + 4 * self.uniform_se

    @property
    def hard_ok(self) -> bool:
        return self.hard_yes >= 2.0 ** -self.k - 4 * self.hard_se

    @property
    def ok(self) -> bool:
        return self.uniform_ok and self.hard_ok

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "k", "samples", "uniform_nonzero", "uniform_se", "hard_yes", "hard_se", "ok"])
        w.writerow([self.n, self.k, self.samples, repr(self.uniform_nonzero), repr(self.uniform_se),
                    repr(self.hard_yes), repr(self.hard_se), int(self.ok)])
        return buf.getvalue()


def phi_samples(D: HardDistribution, samples: int, seed: int, hard: bool, workers: int = 1) -> np.ndarray:
    inst = D.instance
    if hard:
        task = lambda b, m: phi(inst, sample_hard(D, stream_rng(seed, STREAM_HARD, b), m))
    else:
        task = lambda b, m: phi(inst, sample_uniform(inst.n, inst.k, stream_rng(seed, STREAM_UNIFORM, b), m))
    return _collect(task, samples, workers)


def mass_checks(D: HardDistribution, samples: int, seed: int, workers: int = 1) -> MassReport:
    """Empirical P_uniform[f != 0] and P_hard[f = 1]."""
    inst = D.instance
    if not inst.supports_mass_checks():
        raise ValueError(f"k = {inst.k} exceeds (1/3) log2 n - 1 for n = {inst.n}")
    nonzero = (classify_value(inst.k, phi_samples(D, samples, seed, False, workers)) != 0).astype(float)
    yes = (classify_value(inst.k, phi_samples(D, samples, seed, True, workers)) == 1).astype(float)
    return MassReport(inst.n, inst.k, samples, *_mean_se(nonzero), *_mean_se(yes))


@dataclass
class ExperimentConfig:
    """Flat key=value run configuration.

    ``matrix`` is ``haar`` (drawn from the seed's matrix stream), ``hadamard``
    or a path to a matrix file.  ``depths`` and ``policies`` are comma lists.
    """

    n: int = 1024
    k: int = 2
    matrix: str = "haar"
    samples_uniform: int = 5000
    samples_hard: int = 5000
    depths: tuple[int, ...] = (1, 4, 16, 64)
    policies: tuple[str, ...] = ("random-probe", "greedy-probe")
    seed: int = 20240601
    scale: float = 1.0 / 16.0
    workers: int = 1
    out: str = "out"

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError("n must be a power of two")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if min(self.samples_uniform, self.samples_hard) < 1000:
            raise ValueError("sample counts must be at least 1000")
        unknown = set(self.policies) - set(POLICIES)
        if unknown:
            raise ValueError(f"unknown policies: {sorted(unknown)}")

    @classmethod
    def parse(cls, text: str, environ: dict | None = None) -> "ExperimentConfig":
        environ = os.environ if environ is None else environ
        values = {}
        types = {f.name: f.type for f in fields(cls)}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if not sep or key not in types:
                raise ValueError(f"line {lineno}: expected a known key=value, got {line!r}")
            values[key] = _convert(key, raw)
        if SEED_ENV in environ:
            values["seed"] = int(environ[SEED_ENV])
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.parse(Path(path).read_text())

    def dump(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    def build_matrix(self) -> OrthogonalMatrix:
        if self.matrix == "haar":
            return haar_orthogonal(self.n, stream_rng(self.seed, STREAM_MATRIX))
        if self.matrix == "hadamard":
            return hadamard_matrix(self.n)
        U = read_matrix(self.matrix)
        if U.n != self.n:
            raise ValueError(f"matrix file has dimension {U.n}, config says {self.n}")
        return U


def _convert(key: str, raw: str):
    if key in ("depths",):
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if key in ("policies",):
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    if key == "scale":
        return float(raw)
    if key in ("matrix", "out"):
        return raw
    return int(raw)


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=10)
    except (OSError, subprocess.TimeoutExpired):
        return "unknown"
    return out.stdout.strip() or "unknown"


def file_sha256(path: str | Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return "missing"


def manifest(cfg: ExperimentConfig | None = None, command: str = "", constants: str | Path = CONSTANTS_FILE,
             extra: dict | None = None) -> str:
    lines = [f"command={command}", f"version={__version__}", f"git_describe={git_describe()}",
             f"constants_sha256={file_sha256(constants)}"]
    for key, value in (extra or {}).items():
        lines.append(f"{key}={value}")
    if cfg is not None:
        lines.append(cfg.dump().rstrip("\n"))
    return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, c_prime: float = 1.0) -> AdvantageReport:
    inst = RorrelationInstance(cfg.build_matrix(), cfg.k)
    D = HardDistribution(inst, cfg.scale)
    samples = min(cfg.samples_uniform, cfg.samples_hard)
    rows = []
    for name in cfg.policies:
        for d in cfg.depths:
            rows.append(run_distinguisher(POLICIES[name](d), D, samples, cfg.seed, c_prime, cfg.workers))
    return AdvantageReport(cfg.n, cfg.k, rows)


def read_constants(path: str | Path = CONSTANTS_FILE) -> dict[str, float]:
    """Numeric entries of a key=value constants file; other keys are provenance."""
    out = {}
    for line in Path(path).read_text().splitlines():
        key, sep, value = line.partition("=")
        if not sep:
            continue
        try:
            out[key.strip()] = float(value)
        except ValueError:
            pass
    return out


@dataclass
class ConstantsEstimate:
    c_hat: float
    C1_hat: float
    C2_hat: float
    C1_random: float
    C2_random: float
    c_prime_hat: float
    seed: int
    exhaustive_trees: int
    random_trees: int
    notes: dict = field(default_factory=dict)

    @property
    def C1_stability(self) -> float:
        return abs(self.C1_random - self.C1_hat) / self.C1_hat

    @property
    def C2_stability(self) -> float:
        return abs(self.C2_random - self.C2_hat) / self.C2_hat

    def to_text(self, date: str | None = None) -> str:
        date = datetime.date.today().isoformat() if date is None else date
        lines = [
            "# measured constants; regenerate with `dtfourier estimate-constants`",
            f"c_hat={self.c_hat!r}",
            f"C1_hat={self.C1_hat!r}",
            f"C2_hat={self.C2_hat!r}",
            f"C1_random={self.C1_random!r}",
            f"C2_random={self.C2_random!r}",
            f"c_prime_hat={self.c_prime_hat!r}",
            f"exhaustive_trees={self.exhaustive_trees}",
            f"random_trees={self.random_trees}",
            "grid=binomial sum k<=60; trees n<=5 d<=3 labels -1,0,1; advantage n=256 k=2 d=1,4,16",
            f"seed={self.seed}",
            f"date={date}",
        ]
        return "\n".join(lines) + "\n"


def random_tree_grid(n_max: int, d_max: int, factor: int, seed: int) -> WeightSweep:
    """``factor`` random trees per tree structure on every (n, d) cell, leaf density uniform."""
    rng = stream_rng(seed, STREAM_TREES)

    def trees():
        for n in range(1, n_max + 1):
            for d in range(1, min(n, d_max) + 1):
                for _ in range(factor * structure_count(n, d)):
                    yield random_tree(n, d, PM01(float(rng.random())), rng)

    return tree_weight_sweep(trees())


def estimate_constants(seed: int = 20240601, n_max: int = 5, d_max: int = 3, random_factor: int = 10,
                       advantage_samples: int = 2000) -> ConstantsEstimate:
    exhaustive = exhaustive_weight_sweep(n_max, d_max)
    sampled = random_tree_grid(n_max, d_max, random_factor, seed)
    inst = RorrelationInstance(haar_orthogonal(256, stream_rng(seed, STREAM_MATRIX)), 2)
    D = HardDistribution(inst)
    rows = [run_distinguisher(policy(d), D, advantage_samples, seed)
            for policy in POLICIES.values() for d in (1, 4, 16)]
    c_prime = max(1.0, AdvantageReport(256, 2, rows).c_prime_needed())
    return ConstantsEstimate(
        c_hat=measured_binomial_constant(),
        C1_hat=exhaustive.max_level1_ratio,
        C2_hat=exhaustive.max_level2_ratio,
        C1_random=sampled.max_level1_ratio,
        C2_random=sampled.max_level2_ratio,
        c_prime_hat=c_prime,
        seed=seed,
        exhaustive_trees=exhaustive.trees,
        random_trees=sampled.trees,
    )
