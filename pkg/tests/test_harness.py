import math

import numpy as np
import pytest

from dtfourier import cli
from dtfourier.harness import (
    SEED_ENV,
    AdvantageReport,
    AuditedInput,
    ConstantDistinguisher,
    ExperimentConfig,
    FullInformationDistinguisher,
    GreedyProbeDistinguisher,
    QueryBudgetExceeded,
    RandomProbeDistinguisher,
    TreeDistinguisher,
    advantage_bound,
    advantage_bound_raw,
    estimate_constants,
    manifest,
    mass_checks,
    phi_samples,
    read_constants,
    required_constant,
    run_distinguisher,
    run_experiment,
    stream_rng,
)
from dtfourier.rorrelation import (
    HardDistribution,
    RorrelationInstance,
    classify_value,
    haar_orthogonal,
    hadamard_matrix,
    write_matrix,
)
from dtfourier.trees import DecisionTree


@pytest.fixture(scope="module")
def hard64():
    inst = RorrelationInstance(haar_orthogonal(64, stream_rng(1, 0)), 2)
    return HardDistribution(inst)


class TestStreams:
    def test_streams_differ_and_replay(self):
        a = stream_rng(5, 1, 0).random(4)
        assert np.array_equal(a, stream_rng(5, 1, 0).random(4))
        assert not np.array_equal(a, stream_rng(5, 2, 0).random(4))
        assert not np.array_equal(a, stream_rng(5, 1, 1).random(4))


class TestAudit:
    def test_counts_distinct_entries(self):
        x = np.ones((2, 4, 2), dtype=np.int8)
        audited = AuditedInput(x, 2)
        audited.read(np.array([[0], [1]]), np.array([[0], [1]]))
        audited.read(np.array([[0], [1]]), np.array([[0], [1]]))
        assert audited.reads().tolist() == [1, 1]

    def test_budget_enforced(self):
        audited = AuditedInput(np.ones((1, 4, 2), dtype=np.int8), 2)
        with pytest.raises(QueryBudgetExceeded):
            audited.read(np.array([[0, 1, 2]]), np.array([[0, 0, 0]]))

    def test_cheating_policy_caught(self, hard64):
        class Peek(RandomProbeDistinguisher):
            def decide(self, inst, x, rng):
                x.read_all()
                return np.zeros(x.batch)
        with pytest.raises(QueryBudgetExceeded):
            run_distinguisher(Peek(4), hard64, 1000, seed=0)

    @pytest.mark.parametrize("policy", [RandomProbeDistinguisher, GreedyProbeDistinguisher])
    def test_policies_stay_within_depth(self, policy, hard64):
        rng = np.random.default_rng(0)
        x = AuditedInput(np.ones((50, 64, 2), dtype=np.int8), 16)
        policy(16).decide(hard64.instance, x, rng)
        assert x.reads().max() <= 16


class TestDistinguishers:
    def test_constant_has_no_advantage(self, hard64):
        for value in (0, 1):
            row = run_distinguisher(ConstantDistinguisher(value), hard64, 1000, seed=3)
            assert row.advantage == 0.0
            assert row.mean_uniform == row.mean_hard == value

    def test_fixed_tree(self):
        # depth-1 tree reading entry (0, 1): outputs 1 exactly when x_{0,1} = -1
        inst = RorrelationInstance(hadamard_matrix(4), 2)
        dist = TreeDistinguisher(DecisionTree.from_constants(8, [1], [0, 1]))
        x = np.ones((3, 4, 2), dtype=np.int8)
        x[1, 0, 1] = -1
        x[2, 1, 0] = -1
        audited = AuditedInput(x, 1)
        assert dist.decide(inst, audited, None).tolist() == [0.0, 1.0, 0.0]
        assert audited.reads().tolist() == [1, 1, 1]

    def test_full_information_matches_direct_estimate(self, hard64):
        seed, samples = 4, 3000
        row = run_distinguisher(FullInformationDistinguisher(64, 2), hard64, samples, seed)
        yes_u = np.mean(classify_value(2, phi_samples(hard64, samples, seed, hard=False)) == 1)
        yes_d = np.mean(classify_value(2, phi_samples(hard64, samples, seed, hard=True)) == 1)
        assert row.mean_uniform == yes_u
        assert row.mean_hard == yes_d
        assert row.advantage == abs(yes_d - yes_u)
        assert row.advantage >= 2**-2 - 2**-3 - 4 * row.se

    def test_worker_count_does_not_change_results(self, hard64):
        one = run_distinguisher(RandomProbeDistinguisher(8), hard64, 5000, seed=6, workers=1)
        three = run_distinguisher(RandomProbeDistinguisher(8), hard64, 5000, seed=6, workers=3)
        assert one == three

    def test_negative_depth(self):
        with pytest.raises(ValueError):
            RandomProbeDistinguisher(-1)


class TestAdvantageBound:
    def test_example(self):
        expected = 4 * math.log2(1026) ** 1.5 / math.sqrt(1024)
        assert math.isclose(advantage_bound_raw(1024, 2, 4, 1.0), expected, rel_tol=1e-14)
        assert advantage_bound(1024, 2, 4, 1.0) == min(1.0, expected)

    def test_monotone_in_depth(self):
        vals = [advantage_bound_raw(2**20, 3, d, 1.0) for d in range(1, 200)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_clamped_to_one(self):
        assert advantage_bound(1024, 2, 16, 1.0) == 1.0
        assert advantage_bound_raw(1024, 2, 16, 1.0) > 1.0

    def test_required_constant_inverts_bound(self):
        c = required_constant(1024, 3, 8, 0.2)
        assert math.isclose(advantage_bound_raw(1024, 3, 8, c), 0.2, rel_tol=1e-12)
        assert required_constant(1024, 3, 8, 0.0) == 0.0

    def test_domain(self):
        with pytest.raises(ValueError):
            advantage_bound(1024, 2, 0, 1.0)


class TestMassChecks:
    def test_single_fold(self):
        inst = RorrelationInstance(haar_orthogonal(64, stream_rng(2, 0)), 1)
        report = mass_checks(HardDistribution(inst), 20000, seed=2)
        assert report.uniform_nonzero <= 1 / 4 + 4 * report.uniform_se
        assert report.hard_yes >= 1 / 2 - 4 * report.hard_se
        assert report.ok
        assert report.to_csv().splitlines()[0] == "n,k,samples,uniform_nonzero,uniform_se,hard_yes,hard_se,ok"

    def test_precondition(self, hard64):
        with pytest.raises(ValueError):
            mass_checks(hard64, 1000, seed=0)


class TestConfig:
    def test_parse(self):
        cfg = ExperimentConfig.parse("n=64 # dimension\nk=1\n\ndepths=1, 2\npolicies=greedy-probe\nscale=0.25\n",
                                     environ={})
        assert (cfg.n, cfg.k, cfg.depths, cfg.policies, cfg.scale) == (64, 1, (1, 2), ("greedy-probe",), 0.25)

    def test_environment_overrides_seed(self):
        assert ExperimentConfig.parse("seed=1\n", environ={SEED_ENV: "99"}).seed == 99

    def test_dump_roundtrip(self):
        cfg = ExperimentConfig(n=256, depths=(2, 3), scale=0.1)
        assert ExperimentConfig.parse(cfg.dump(), environ={}) == cfg

    @pytest.mark.parametrize("text", ["n=48\n", "k=0\n", "samples_hard=10\n", "policies=oracle\n", "bogus=1\n",
                                      "n\n"])
    def test_invalid(self, text):
        with pytest.raises(ValueError):
            ExperimentConfig.parse(text, environ={})

    def test_matrix_sources(self, tmp_path):
        assert ExperimentConfig(n=8, matrix="hadamard").build_matrix() == hadamard_matrix(8)
        haar = ExperimentConfig(n=8, seed=3).build_matrix()
        assert haar == ExperimentConfig(n=8, seed=3).build_matrix()
        path = tmp_path / "u.bin"
        write_matrix(path, haar)
        assert ExperimentConfig(n=8, matrix=str(path)).build_matrix() == haar
        with pytest.raises(ValueError):
            ExperimentConfig(n=16, matrix=str(path)).build_matrix()


class TestReports:
    def test_byte_identical_reruns(self):
        cfg = ExperimentConfig(n=64, k=2, samples_uniform=1000, samples_hard=1000, depths=(1, 4), seed=8)
        a, b = run_experiment(cfg).to_csv(), run_experiment(cfg).to_csv()
        assert a == b
        assert a.splitlines()[0] == "policy,d,mean_uniform,mean_hard,advantage,se,bound"
        assert len(a.splitlines()) == 5

    def test_signal_grows_with_depth(self):
        report = run_experiment(ExperimentConfig())
        for policy in ("random-probe", "greedy-probe"):
            rows = [r for r in report.rows if r.policy == policy]
            assert [r.d for r in rows] == [1, 4, 16, 64]
            for a, b in zip(rows, rows[1:]):
                assert b.advantage >= a.advantage - 2 * math.hypot(a.se, b.se)
            assert all(r.advantage <= 1 for r in rows)

    def test_c_prime_needed(self):
        report = AdvantageReport(1024, 2, [])
        assert report.c_prime_needed() == 0.0

    def test_manifest_has_no_clock(self):
        cfg = ExperimentConfig()
        text = manifest(cfg, "distinguish")
        assert text == manifest(cfg, "distinguish")
        keys = [line.split("=", 1)[0] for line in text.splitlines()]
        assert {"command", "git_describe", "constants_sha256", "seed", "n"} <= set(keys)
        assert "date" not in keys and "time" not in keys

    def test_shipped_constants(self):
        consts = read_constants()
        assert consts["c_hat"] >= 1
        assert {"C1_hat", "C2_hat", "c_prime_hat"} <= set(consts)

    def test_constants_replay(self):
        kwargs = dict(seed=3, n_max=3, d_max=2, random_factor=2, advantage_samples=1000)
        a, b = estimate_constants(**kwargs), estimate_constants(**kwargs)
        assert a == b
        assert a.to_text("2000-01-01") == b.to_text("2000-01-01")
        assert a.c_hat >= 1


class TestCli:
    def run(self, *argv):
        return cli.main(list(argv))

    def test_no_arguments(self, capsys):
        assert self.run() == 2
        assert "usage" in capsys.readouterr().err

    def test_bad_arguments(self, tmp_path):
        assert self.run("partition", "eight", "3") == 2
        assert self.run("frobnicate") == 2
        assert self.run("partition", "8", "3", "--out", str(tmp_path), "--extra") == 2

    def test_partition(self, tmp_path, capsys):
        assert self.run("partition", "8", "3", "--out", str(tmp_path)) == 0
        lines = capsys.readouterr().out.splitlines()
        cost, lower, upper = (float(lines[-1].split()[i]) for i in (1, 3, 5))
        assert math.sqrt(math.comb(8, 3)) <= cost <= upper
        assert {p.name for p in tmp_path.iterdir()} == {"partition.txt", "cost.csv", "manifest.txt"}

    def test_rorr_eval_example(self, tmp_path, capsys):
        src = tmp_path / "x.txt"
        src.write_text("1 1\n1 1\n")
        assert self.run("rorr-eval", "--matrix", "hadamard", "--k", "2", "--input", str(src),
                        "--out", str(tmp_path)) == 0
        assert capsys.readouterr().out.startswith("0.7071067811865475\n")

    def test_haar_gen_and_eval(self, tmp_path, capsys):
        assert self.run("haar-gen", "4", "--seed", "1", "--out", str(tmp_path), "--csv") == 0
        src = tmp_path / "x.txt"
        src.write_text("1\n1\n1\n1\n")
        assert self.run("rorr-eval", "--matrix", str(tmp_path / "matrix.bin"), "--k", "1", "--input", str(src),
                        "--out", str(tmp_path)) == 0
        assert "1.0\n" in capsys.readouterr().out

    def test_missing_input_file(self, tmp_path):
        assert self.run("rorr-eval", "--matrix", "hadamard", "--k", "1", "--input", str(tmp_path / "nope"),
                        "--out", str(tmp_path)) == 2

    def test_lambda_sweep(self, tmp_path):
        assert self.run("lambda-sweep", "--grid", "60", "--out", str(tmp_path)) == 0
        assert (tmp_path / "lambda.csv").exists()

    def test_weight_check(self, tmp_path):
        assert self.run("weight-check", "--n", "6", "--d", "3", "--kmax", "3", "--samples", "50",
                        "--out", str(tmp_path)) == 0
        assert self.run("weight-check", "--n", "3", "--d", "2", "--kmax", "2", "--exhaustive",
                        "--out", str(tmp_path)) == 0

    def test_mass_check(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text(f"n=64\nk=1\nsamples_uniform=2000\nsamples_hard=2000\nout={tmp_path / 'o'}\n")
        assert self.run("mass-check", "--config", str(conf)) == 0
        assert (tmp_path / "o" / "mass.csv").exists()
        conf.write_text("n=64\nk=2\n")
        assert self.run("mass-check", "--config", str(conf), "--out", str(tmp_path)) == 2

    def test_distinguish(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("n=64\nk=2\nsamples_uniform=1000\nsamples_hard=1000\ndepths=1,4\n")
        out = tmp_path / "o"
        assert self.run("distinguish", "--config", str(conf), "--out", str(out)) == 0
        first = (out / "advantage.csv").read_bytes()
        assert self.run("distinguish", "--config", str(conf), "--out", str(out)) == 0
        assert (out / "advantage.csv").read_bytes() == first
        assert "samples_hard=1000" in (out / "manifest.txt").read_text()
