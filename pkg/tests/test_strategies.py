import numpy as np
import pytest

from dbdsim.exceptions import BoundViolation
from dbdsim.strategies import (
    BS_OMEGA,
    BS_TAU,
    CD_BS_DELTA,
    MIRROR_OMEGA,
    MIRROR_TAU,
    OptimizationProblem,
    bs_cost,
    builtin_strategy,
    integrated_mirror_efficiency,
    load_knot_table,
    mirror_cost,
    oct_mirror_envelope,
    oct_mirror_problem,
    optimize,
    parse_knot_table,
    save_knot_table,
)
from dbdsim.units import (
    ConstantDetuning,
    KnotDetuning,
    LinearDetuning,
    PulseEnvelope,
)

NULL = (PulseEnvelope("box", 0.0, 0.5), ConstantDetuning(0.0))


class TestBuiltins:
    def test_shared_beam_splitter_envelope(self):
        for name in ("c_dbd", "cd_dbd", "ds_dbd"):
            env = builtin_strategy(name).bs_envelope
            assert env.shape == "gaussian"
            assert env.peak == BS_OMEGA
            assert env.width == BS_TAU

    def test_c_dbd_is_resonant(self):
        spec = builtin_strategy("c_dbd")
        assert spec.bs_protocol.evaluate(0.3) == 0.0
        assert spec.mirror_protocol.evaluate(-0.5) == 0.0
        assert spec.mirror_envelope.peak == MIRROR_OMEGA
        assert spec.mirror_envelope.width == MIRROR_TAU

    def test_cd_dbd_offsets_only_the_splitter(self):
        spec = builtin_strategy("cd_dbd")
        assert spec.bs_protocol.evaluate(0.0) == CD_BS_DELTA
        assert spec.mirror_protocol.evaluate(0.0) == 0.0

    def test_ds_dbd_sweeps(self):
        spec = builtin_strategy("ds_dbd")
        assert spec.bs_protocol.evaluate(0.0) == pytest.approx(0.315)
        # mirror sweep spans far outside the first band and needs the
        # wide bound: the same ramp under the default bound must refuse
        assert spec.mirror_protocol.evaluate(-3.84) == pytest.approx(-8.5)
        tight = LinearDetuning(0.75, -4.0, width=MIRROR_TAU)
        with pytest.raises(BoundViolation):
            tight.evaluate(-3.84)

    def test_oct_mirror_window(self):
        env = oct_mirror_envelope()
        assert env.support == (0.0, 2.0 * env.center)
        assert env.evaluate(env.center) == pytest.approx(env.peak)
        edge = env.evaluate(env.support[1] - 1e-12)
        assert edge == pytest.approx(0.1054 * env.peak, rel=1e-2)

    def test_oct_hybrid_uses_packaged_knots(self):
        spec = builtin_strategy("oct_hybrid")
        table = load_knot_table()
        assert isinstance(spec.mirror_protocol, KnotDetuning)
        assert spec.mirror_protocol.values == table.values
        assert np.all(np.abs(table.values) <= table.bound)

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            builtin_strategy("adiabatic")


class TestCosts:
    def test_null_pulse_scores(self):
        assert bs_cost(NULL, (0.0,)) == pytest.approx(1.0, abs=1e-12)
        assert mirror_cost(NULL, (0.0,)) == pytest.approx(2.0, abs=1e-12)

    def test_published_splitter_is_nearly_balanced(self):
        spec = builtin_strategy("ds_dbd")
        assert bs_cost(spec.bs, (0.0,)) < 0.05

    def test_empty_samples_rejected(self):
        with pytest.raises(ValueError):
            bs_cost(NULL, ())
        with pytest.raises(ValueError):
            mirror_cost(NULL, ())


class TestProblem:
    def test_target_validation(self):
        with pytest.raises(ValueError):
            OptimizationProblem("phase_gate", NULL[0], (0.0, 1.0), (0.0,))

    def test_budget_floor(self):
        with pytest.raises(ValueError):
            OptimizationProblem("bs_balanced", NULL[0], (0.0, 1.0), (0.0,),
                                budget=50)

    def test_envelope_bound_keys(self):
        with pytest.raises(ValueError):
            OptimizationProblem("bs_balanced", NULL[0], (0.0, 1.0), (0.0,),
                                envelope_bounds={"chirp": (0.0, 1.0)})

    def test_mirror_problem_defaults(self):
        prob = oct_mirror_problem()
        assert prob.target == "mirror_bidirectional"
        assert len(prob.momentum_samples) == 17
        assert len(prob.knot_times) == 8
        assert prob.knot_times[0] == 0.0
        assert prob.knot_times[-1] == pytest.approx(7.758)
        assert prob.delta_max == 4.0


def tiny_bs_problem(**kw):
    env = PulseEnvelope("gaussian", 2.0, 0.47)
    times = tuple(np.linspace(-1.41, 1.41, 4))
    defaults = dict(momentum_samples=(0.0,), budget=150, rtol=1e-5)
    defaults.update(kw)
    return OptimizationProblem("bs_balanced", env, times, **defaults)


class TestOptimizer:
    def test_deterministic_per_seed(self):
        a = optimize(tiny_bs_problem(), seed=3)
        b = optimize(tiny_bs_problem(), seed=3)
        assert a.cost == b.cost
        assert a.protocol.values == b.protocol.values
        assert a.evaluations_used == b.evaluations_used

    def test_budget_charged_and_flagged(self):
        res = optimize(tiny_bs_problem(budget=150), seed=0)
        assert res.budget_exhausted
        assert res.evaluations_used == 150

    def test_history_strictly_improves(self):
        res = optimize(tiny_bs_problem(), seed=1)
        hist = np.asarray(res.cost_history)
        assert hist.size >= 1
        assert np.all(np.diff(hist) < 0.0)
        assert hist[-1] == res.cost

    def test_finds_a_balanced_splitter(self):
        # the prescan alone contains the resonant profile, which is
        # already close to 50/50 at this drive
        res = optimize(tiny_bs_problem(budget=400), seed=0)
        assert res.cost < 0.1
        assert res.best == (res.envelope, res.protocol)

    def test_result_respects_band(self):
        res = optimize(tiny_bs_problem(
            warm_starts=((9.0, -9.0, 9.0, -9.0),)), seed=0)
        assert np.all(np.abs(res.protocol.values) <= 4.0)

    def test_bad_warm_start_size(self):
        with pytest.raises(ValueError):
            optimize(tiny_bs_problem(warm_starts=((1.0, 2.0),)), seed=0)

    def test_envelope_variables(self):
        res = optimize(tiny_bs_problem(
            envelope_bounds={"peak": (1.5, 2.5)}), seed=0)
        assert 1.5 <= res.envelope.peak <= 2.5


class TestKnotTables:
    def test_save_parse_round_trip(self, tmp_path):
        proto = KnotDetuning((0.0, 0.7, 1.9), (0.5, -1.25, 3.0), bound=6.0)
        path = tmp_path / "knots.txt"
        save_knot_table(str(path), proto, "test_run", 42)
        text = path.read_text()
        assert text.startswith("# strategy=test_run seed=42 bound=6")
        back = parse_knot_table(text)
        assert back.times == proto.times
        assert back.values == proto.values
        assert back.bound == 6.0

    def test_parse_defaults_bound(self):
        back = parse_knot_table("0 1\n2 -1\n")
        assert back.bound == 4.0

    def test_parse_needs_two_rows(self):
        with pytest.raises(ValueError):
            parse_knot_table("# nothing\n0.0 1.0\n")

    def test_load_from_explicit_path(self, tmp_path):
        proto = KnotDetuning((0.0, 1.0), (1.0, -1.0))
        path = tmp_path / "knots.txt"
        save_knot_table(str(path), proto, "x", 0)
        assert load_knot_table(str(path)).values == proto.values


class TestIntegratedEfficiency:
    def test_published_mirror_scale(self):
        spec = builtin_strategy("c_dbd")
        eta = integrated_mirror_efficiency(spec.mirror, sigma_p=0.05)
        assert 0.95 < eta < 0.98
