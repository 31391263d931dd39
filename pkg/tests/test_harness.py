import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import polyagg as pa
from polyagg import harness


class TestGini:
    def test_equal_returns(self):
        assert harness.gini([1.0, 1.0, 1.0]) == 0.0

    def test_two_agent_extreme(self):
        assert harness.gini([0.0, 1.0]) == pytest.approx(0.5, abs=1e-12)

    def test_one_two_three(self):
        assert harness.gini([1.0, 2.0, 3.0]) == pytest.approx(2 / 9, abs=1e-12)

    def test_zero_welfare_raises(self):
        with pytest.raises(pa.ZeroWelfare):
            harness.gini([0.0, 0.0])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.integers(-6, 6))
    def test_scale_invariant(self, seed, exponent):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.05, 1.0, size=int(rng.integers(2, 6)))
        c = 2.0**exponent  # dyadic scale keeps the arithmetic exact
        assert harness.gini(c * x) == harness.gini(x)


class TestNashWelfare:
    def test_geometric_mean(self):
        assert harness.nash_welfare([4.0, 1.0]) == pytest.approx(2.0, abs=1e-12)

    def test_idempotent_on_constants(self):
        assert harness.nash_welfare([0.7, 0.7, 0.7]) == pytest.approx(0.7, abs=1e-12)

    def test_zero_annihilates(self):
        assert harness.nash_welfare([0.0, 0.9]) == 0.0

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            harness.nash_welfare([-0.1, 0.5])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_one_homogeneous(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.05, 1.0, size=3)
        c = float(rng.uniform(0.1, 4.0))
        assert harness.nash_welfare(c * x) == pytest.approx(
            c * harness.nash_welfare(x), rel=1e-12)


class TestNormalizedReturns:
    def test_extremes(self, simplex2):
        pipe = harness.prepare(simplex2, 2000, seed=1)
        res = pa.utilitarian(pipe.model, pipe.poly)
        norm = harness.normalized_returns(res, pipe.poly, pipe.model.reward_vectors())
        assert np.all(norm >= -1e-7) and np.all(norm <= 1 + 1e-7)

    def test_midpoint(self, simplex2):
        pipe = harness.prepare(simplex2, 2000, seed=2)
        res = pa.egalitarian(pipe.model, pipe.poly)
        norm = harness.normalized_returns(res, pipe.poly, pipe.model.reward_vectors())
        assert np.allclose(norm, 0.5, atol=1e-6)

    def test_agent_optimal_policy_scores_one(self, simplex2):
        pipe = harness.prepare(simplex2.replace_rewards(simplex2.rewards[:1]),
                               2000, seed=3)
        res = pa.utilitarian(pipe.model, pipe.poly)
        norm = harness.normalized_returns(res, pipe.poly, pipe.model.reward_vectors())
        assert norm[0] == pytest.approx(1.0, abs=1e-7)


def small_spec(tmp_source=None, **overrides):
    kwargs = dict(
        source={"generator": "simplex", "params": {"actions": 3}},
        rules=(harness.RuleSpec("utilitarian"), harness.RuleSpec("max-quantile")),
        seed=50,
        num_instances=2,
        samples=4000,
        burn_in=2000,
        thinning=4,
    )
    kwargs.update(overrides)
    if tmp_source is not None:
        kwargs["source"] = tmp_source
    return harness.ExperimentSpec(**kwargs)


class TestRunExperiment:
    def test_single_agent_trivial(self):
        m = pa.gen_simplex_instance(2)
        single = m.replace_rewards(m.rewards[:1])
        import tempfile, pathlib

        with tempfile.TemporaryDirectory() as tmp:
            path = pathlib.Path(tmp) / "m.json"
            pa.save_momdp(single, path)
            spec = small_spec(
                tmp_source={"file": str(path)},
                rules=(harness.RuleSpec("utilitarian"),),
                num_instances=1,
            )
            out = harness.run_experiment(spec)
        assert len(out.rows) == 1
        assert out.rows[0].returns[0] == pytest.approx(1.0, abs=1e-7)
        assert out.rows[0].gini == 0.0

    def test_rows_and_aggregates(self):
        out = harness.run_experiment(small_spec())
        assert len(out.rows) == 4  # 2 rules x 2 instances
        assert {a["rule"] for a in out.aggregates} == {"utilitarian", "max-quantile"}
        for agg in out.aggregates:
            assert agg["instances"] == 2

    def test_byte_identical_reruns(self):
        spec = small_spec()
        a = harness.run_experiment(spec)
        b = harness.run_experiment(spec)
        assert a.csv_text == b.csv_text
        assert a.json_text == b.json_text

    def test_json_metrics_round_trip(self):
        out = harness.run_experiment(small_spec())
        rows = harness.load_metrics_json(out.json_text)
        assert len(rows) == len(out.rows)
        for got, want in zip(rows, out.rows):
            assert got.rule == want.rule
            assert got.instance_seed == want.instance_seed
            assert got.returns == want.returns
            assert got.gini == want.gini
            assert got.nash == want.nash

    def test_failures_recorded_and_run_continues(self):
        # constant rewards: every agent dropped -> prepare fails per instance
        spec = small_spec(
            source={"generator": "random", "params": {"states": 2, "actions": 2,
                                                      "agents": 1}},
        )
        # patch generator output through a file with constant rewards
        import tempfile, pathlib

        m = pa.gen_simplex_instance(2).replace_rewards(np.full((1, 1, 2), 2.0))
        with tempfile.TemporaryDirectory() as tmp:
            path = pathlib.Path(tmp) / "flat.json"
            pa.save_momdp(m, path)
            spec = small_spec(tmp_source={"file": str(path)}, num_instances=2)
            out = harness.run_experiment(spec)
        assert len(out.rows) == 0
        assert len(out.failures) == 2
        assert out.failures[0]["error"] == "AllAgentsIndifferent"

    def test_csv_columns_frozen(self):
        out = harness.run_experiment(small_spec())
        header = out.csv_text.splitlines()[0]
        assert header == "kind,seed,rule,gini,nash,gini_se,nash_se,returns"
        kinds = [line.split(",")[0] for line in out.csv_text.splitlines()[1:]]
        assert kinds.count("row") == 4
        assert kinds.count("aggregate") == 2

    def test_runtime_excluded_by_default(self):
        out = harness.run_experiment(small_spec())
        assert "runtime" not in out.csv_text
        assert "wall_time" not in out.json_text

    def test_runtime_opt_in(self):
        out = harness.run_experiment(small_spec(record_runtime=True))
        assert "runtime" in out.csv_text.splitlines()[0]
        assert "wall_time" in out.json_text

    def test_spec_from_json(self):
        doc = {
            "source": {"generator": "simplex", "params": {"actions": 2}},
            "rules": [{"name": "utilitarian"}, {"name": "approval", "alpha": 0.8}],
            "seed": 3,
            "instances": 2,
            "samples": 1000,
        }
        spec = harness.ExperimentSpec.from_json(json.dumps(doc))
        assert spec.rules[1].params == {"alpha": 0.8}
        assert spec.samples == 1000

    def test_unknown_rule_rejected(self):
        with pytest.raises(ValueError, match="unknown rule"):
            harness.RuleSpec("best-rule-ever")

    def test_write_experiment(self, tmp_path):
        out = harness.write_experiment(small_spec(), tmp_path / "exp")
        assert (tmp_path / "exp" / "results.csv").read_text() == out.csv_text
        assert (tmp_path / "exp" / "results.json").read_text() == out.json_text
