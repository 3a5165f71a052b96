"""Benchmark harness tests: seeding, trials, sweeps and CSV emission."""

import numpy as np
import pytest

import hankelid as hk
from hankelid.bench import (
    CurvePoint,
    SuccessCurve,
    TrialConfig,
    derive_seed,
    emit_csv,
    run_sweep,
    run_trial,
    success_rate,
)


def _fast_config(**overrides):
    defaults = dict(family="compartmental", n=2, method="altmin", seed=7)
    defaults.update(overrides)
    return TrialConfig(**defaults)


class TestDeriveSeed:
    def test_deterministic(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)

    def test_sensitive_to_every_part(self):
        base = derive_seed(1, 2, 3)
        assert base != derive_seed(2, 2, 3)
        assert base != derive_seed(1, 3, 3)
        assert base != derive_seed(1, 2, 4)

    def test_negative_base_seed_ok(self):
        assert 0 <= derive_seed(-5, 2, 0) < (1 << 64)


class TestRunTrial:
    def test_determinism_contract(self):
        first = run_trial(_fast_config())
        second = run_trial(_fast_config())
        assert first.irf == second.irf
        assert first.success == second.success
        assert first.iterations == second.iterations

    def test_irf_matches_markov_oracle(self):
        config = _fast_config(method="dcp", seed=3)
        result = run_trial(config)
        param, theta_star = hk.compartmental_instance(config.n, config.seed)
        truth = hk.assemble(param, theta_star)
        ref = hk.markov_sequence(truth, 5)
        Y = hk.build_hankel(ref, 3, 3)
        sol = hk.solve_dcp(Y, param, settings=config.dc, inner_settings=config.inner)
        cand = hk.markov_sequence(hk.assemble(param, sol.theta), 5)
        assert result.irf == pytest.approx(hk.impulse_response_fit(cand, ref), abs=1e-12)
        assert result.success == (result.irf <= 1e-3)

    def test_infinite_threshold(self):
        result = run_trial(_fast_config(success_threshold=np.inf))
        assert result.success

    def test_success_invariant(self):
        result = run_trial(_fast_config(seed=11))
        assert result.success == (result.irf <= 1e-3)

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            _fast_config(method="magic")

    def test_random_family_needs_q(self):
        with pytest.raises(ValueError):
            TrialConfig(family="random", n=3, method="dcp", seed=0)

    def test_pem_trial_runs(self):
        result = run_trial(_fast_config(method="pem", seed=5))
        assert np.isfinite(result.irf) or result.irf == np.inf
        assert result.wall_clock_ms >= 0


class TestSuccessRate:
    def _result(self, irf, threshold=1e-3):
        from hankelid.bench import TrialResult
        return TrialResult(irf=irf, success=irf <= threshold, iterations=1,
                           wall_clock_ms=0, extras={})

    def test_fraction(self):
        results = [self._result(1e-5), self._result(0.5), self._result(1e-4)]
        assert success_rate(results) == pytest.approx(2 / 3)

    def test_all_success(self):
        assert success_rate([self._result(1e-9)] * 4) == 1.0

    def test_all_failure(self):
        assert success_rate([self._result(1.0)] * 4) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            success_rate([])


class TestRunSweep:
    def test_single_trial_rates_are_binary(self):
        curves = run_sweep("compartmental", ["altmin"], [2, 3], 1, base_seed=1)
        for point in curves["altmin"].points:
            assert point.rate in (0.0, 1.0)
            assert point.successes <= point.trials

    def test_deterministic_and_order_free(self):
        kwargs = dict(trials_per_point=3, base_seed=5)
        first = run_sweep("compartmental", ["altmin"], [2, 3], **kwargs)
        second = run_sweep("compartmental", ["altmin"], [3, 2], **kwargs)
        for method in first:
            by_value_1 = {pt.value: pt for pt in first[method].points}
            by_value_2 = {pt.value: pt for pt in second[method].points}
            assert by_value_1.keys() == by_value_2.keys()
            for value in by_value_1:
                assert by_value_1[value].rate == by_value_2[value].rate
                assert by_value_1[value].mean_irf == by_value_2[value].mean_irf

    def test_threshold_monotonicity(self):
        loose = run_sweep("compartmental", ["altmin"], [2], 4, base_seed=2,
                          success_threshold=1e-1)
        tight = run_sweep("compartmental", ["altmin"], [2], 4, base_seed=2,
                          success_threshold=1e-6)
        assert loose["altmin"].points[0].rate >= tight["altmin"].points[0].rate

    def test_random_family_sweeps_q(self):
        curves = run_sweep("random", ["altmin"], [1, 2], 2, base_seed=3, n=2)
        assert curves["altmin"].sweep_variable == "q"
        assert [pt.value for pt in curves["altmin"].points] == [1, 2]


class TestEmitCsv:
    def _single_curve(self):
        return {"dcp": SuccessCurve(
            sweep_variable="q",
            points=(CurvePoint(value=4, trials=25, successes=20,
                               rate=0.8, mean_irf=2.1e-4),))}

    def test_single_point_layout(self, tmp_path):
        path = tmp_path / "out.csv"
        emit_csv(self._single_curve(), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "method,sweep_variable,sweep_value,trials,successes,rate,mean_irf"
        assert lines[1] == "dcp,q,4,25,20,0.8,0.00021"
        assert len(lines) == 2

    def test_method_ordering(self, tmp_path):
        curves = {
            "pem": SuccessCurve("q", (CurvePoint(2, 4, 1, 0.25, 0.5),)),
            "dcp": SuccessCurve("q", (CurvePoint(2, 4, 4, 1.0, 1e-6),)),
            "altmin": SuccessCurve("q", (CurvePoint(2, 4, 2, 0.5, 0.1),)),
        }
        path = tmp_path / "out.csv"
        emit_csv(curves, path)
        methods = [line.split(",")[0] for line in path.read_text().splitlines()[1:]]
        assert methods == ["altmin", "dcp", "pem"]

    def test_byte_identical_reemission(self, tmp_path):
        curves = run_sweep("compartmental", ["altmin"], [2], 2, base_seed=9)
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        emit_csv(curves, first)
        emit_csv(curves, second)
        assert first.read_bytes() == second.read_bytes()

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_csv({}, tmp_path / "out.csv")


class TestReproducibility:
    def test_sweep_to_csv_bytes(self, tmp_path):
        paths = []
        for name in ("one.csv", "two.csv"):
            curves = run_sweep("compartmental", ["altmin", "pem"], [2], 2,
                               base_seed=123)
            path = tmp_path / name
            emit_csv(curves, path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()
