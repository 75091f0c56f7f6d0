"""Command-line entry point.  Exit codes: 0 success, 1 failed check, 2 bad arguments."""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds, families, harness, rorrelation, trees


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _manifest(args, cfg=None, **extra) -> None:
    extra = {k: v for k, v in vars(args).items() if k not in ("func", "out", "config", "command", "constants")} | extra
    _write(Path(args.out), "manifest.txt", harness.manifest(cfg, args.command, args.constants, extra))


def _constants(args) -> dict[str, float]:
    try:
        return harness.read_constants(args.constants)
    except OSError:
        return {}


def cmd_partition(args) -> int:
    parts = families.partition_pnk(args.n, args.k)
    cost = families.partition_cost(parts)
    c_hat = _constants(args).get("c_hat", families.measured_binomial_constant())
    lower = math.sqrt(math.comb(args.n, args.k))
    upper = families.pi_upper_bound(args.n, args.k, c_hat)
    text = families.partition_text(parts)
    print(text, end="")
    print(f"cost {cost!r} lower {lower!r} upper {upper!r}")
    _write(Path(args.out), "partition.txt", text)
    _write(Path(args.out), "cost.csv", families.cost_report_csv([(args.n, args.k, len(parts), cost, lower, upper)]))
    _manifest(args, c_hat=repr(c_hat))
    ok = lower * (1 - 1e-12) <= cost <= upper
    if math.comb(args.n, args.k) <= 10**6:
        ok = ok and families.cover_check(parts, args.n, args.k).ok
    return 0 if ok else 1


def cmd_weight_check(args) -> int:
    consts = _constants(args)
    C = max(1.0, consts.get("C1_hat", 1.0), consts.get("C2_hat", 1.0))
    c = max(1.0, consts.get("c_hat", 1.0))
    out = Path(args.out)
    if args.exhaustive:
        sweep = bounds.exhaustive_weight_sweep(args.n, args.d)
        lines = ["d,k,max_r"] + [f"{d},{k},{v!r}" for (d, k), v in sorted(sweep.max_r.items())]
        _write(out, "weight_sweep.csv", "\n".join(lines) + "\n")
        print(f"trees {sweep.trees} max_r {sweep.r_max!r} C1 {sweep.max_level1_ratio!r} C2 {sweep.max_level2_ratio!r}")
        _manifest(args)
        return 0 if math.isfinite(sweep.r_max) else 1
    rng = harness.stream_rng(args.seed, harness.STREAM_TREES)
    sample = (trees.random_tree(args.n, args.d, trees.PM01(float(rng.random())), rng) for _ in range(args.samples))
    report = bounds.verify_weight_bounds(sample, C, c)
    report.rows = [r for r in report.rows if r.k <= args.kmax]
    _write(out, "weight_check.csv", report.to_csv())
    print(f"rows {len(report.rows)} max_ratio_main {report.max_ratio_main!r} "
          f"max_ratio_clean {report.max_ratio_clean!r} max_r {report.max_r!r}")
    _manifest(args, C=repr(C), c=repr(c))
    return 0 if report.max_ratio_main <= 1.0 else 1


def cmd_lambda_sweep(args) -> int:
    rows = bounds.lambda_sweep(grid_size=args.grid)
    _write(Path(args.out), "lambda.csv", bounds.lambda_csv(rows))
    worst = min(r.ratio for r in rows)
    over = max(r.ratio for r in rows)
    print(f"cells {len(rows)} min_ratio {worst!r} max_ratio {over!r}")
    _manifest(args)
    return 0 if 0.98 <= worst and over <= 1 + 1e-12 else 1


def cmd_haar_gen(args) -> int:
    U = rorrelation.haar_orthogonal(args.n, harness.stream_rng(args.seed, harness.STREAM_MATRIX))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rorrelation.write_matrix(out / "matrix.bin", U)
    if args.csv:
        _write(out, "matrix.csv", rorrelation.matrix_csv(U))
    err = U.orthogonality_error()
    print(f"n {args.n} orthogonality_error {err!r}")
    _manifest(args)
    return 0 if err <= rorrelation.ORTHOGONALITY_TOL else 1


def cmd_rorr_eval(args) -> int:
    x = rorrelation.read_input(Path(args.input).read_text())
    n = x.shape[0]
    if args.matrix == "hadamard":
        U = rorrelation.hadamard_matrix(n)
    else:
        U = rorrelation.read_matrix(args.matrix)
    inst = rorrelation.RorrelationInstance(U, args.k)
    value = rorrelation.phi(inst, x)
    cls = rorrelation.classify_value(args.k, value)
    print(repr(value))
    print(f"class {'*' if cls == rorrelation.STAR else cls} acceptance {(value + 1) / 2!r}")
    _write(Path(args.out), "samples.csv", rorrelation.samples_csv(np.array([value]), args.k))
    _manifest(args)
    return 0


def _load_config(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.load(args.config) if args.config else harness.ExperimentConfig()
    if args.out is None:
        args.out = cfg.out
    return cfg


def cmd_distinguish(args) -> int:
    cfg = _load_config(args)
    c_prime = max(1.0, _constants(args).get("c_prime_hat", 1.0))
    report = harness.run_experiment(cfg, c_prime)
    _write(Path(args.out), "advantage.csv", report.to_csv())
    print(report.to_csv(), end="")
    _manifest(args, cfg, c_prime=repr(c_prime))
    return 0 if all(r.within_bound() and r.advantage <= 1 for r in report.rows) else 1


def cmd_mass_check(args) -> int:
    cfg = _load_config(args)
    inst = rorrelation.RorrelationInstance(cfg.build_matrix(), cfg.k)
    D = rorrelation.HardDistribution(inst, cfg.scale)
    try:
        report = harness.mass_checks(D, min(cfg.samples_uniform, cfg.samples_hard), cfg.seed, cfg.workers)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write(Path(args.out), "mass.csv", report.to_csv())
    print(report.to_csv(), end="")
    _manifest(args, cfg)
    return 0 if report.ok else 1


def cmd_estimate_constants(args) -> int:
    est = harness.estimate_constants(seed=args.seed)
    text = est.to_text()
    path = _write(Path(args.out), "constants.txt", text)
    if args.pin:
        harness.CONSTANTS_FILE.write_text(text)
        path = harness.CONSTANTS_FILE
    print(text, end="")
    _manifest(args, written=str(path))
    return 0 if est.c_hat >= 1 else 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dtfourier", description=__doc__)
    p.add_argument("--constants", default=str(harness.CONSTANTS_FILE), help="pinned constants file")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("partition", help="partition the k-subsets of {1..n} into elementary families")
    s.add_argument("n", type=int)
    s.add_argument("k", type=int)
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_partition)

    s = sub.add_parser("weight-check", help="level weights of decision trees against the bounds")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--kmax", type=int, required=True)
    s.add_argument("--exhaustive", action="store_true", help="sweep every tree up to n, d")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_weight_check)

    s = sub.add_parser("lambda-sweep", help="closed form against the grid oracle")
    s.add_argument("--grid", type=int, default=200)
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_lambda_sweep)

    s = sub.add_parser("haar-gen", help="write a Haar-random orthogonal matrix")
    s.add_argument("n", type=int)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", default="out")
    s.add_argument("--csv", action="store_true", help="also write a CSV copy")
    s.set_defaults(func=cmd_haar_gen)

    s = sub.add_parser("rorr-eval", help="evaluate the rorrelation of one input matrix")
    s.add_argument("--matrix", required=True, help="matrix file or 'hadamard'")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--input", required=True, help="text file, one row of k signs per coordinate")
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_rorr_eval)

    for name, func, help_ in (("distinguish", cmd_distinguish, "estimate distinguisher advantages"),
                              ("mass-check", cmd_mass_check, "class masses under both distributions")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="key=value configuration file")
        s.add_argument("--out", default=None, help="output directory (default: the config's out)")
        s.set_defaults(func=func)

    s = sub.add_parser("estimate-constants", help="measure the constants used by the checks")
    s.add_argument("--seed", type=int, default=20240601)
    s.add_argument("--out", default="out")
    s.add_argument("--pin", action="store_true", help="overwrite the shipped constants file")
    s.set_defaults(func=cmd_estimate_constants)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
