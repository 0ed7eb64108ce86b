import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memdbn.device import (
    ALPHA_EPS,
    DeviceParameterError,
    DeviceParams,
    FitError,
    PulseTrace,
    SynapticCell,
    apply_pulse,
    delta_g_depression,
    delta_g_potentiation,
    device_preset,
    fit_device_model,
    load_preset_dir,
    read_conductance,
    sample_cell,
    sample_pair,
    simulate_pulse_train,
    PRESET_NAMES,
)


def make_params(**kw):
    base = dict(g_max=1.0, g_min=0.0, n_p=20, n_d=20, alpha_p=ALPHA_EPS / 10, alpha_d=ALPHA_EPS / 10)
    base.update(kw)
    return DeviceParams(**base)


class TestUpdateEquations:
    def test_linear_limit_potentiation(self):
        p = make_params(n_p=20)
        assert delta_g_potentiation(p, 1e-9, 0.3) == pytest.approx(0.05, abs=1e-12)

    def test_single_pulse_full_swing(self):
        p = make_params(n_p=1, alpha_p=1.0)
        assert delta_g_potentiation(p, 1.0, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_two_pulse_nonlinear_recursion(self):
        p = make_params(n_p=2, alpha_p=2.0)
        dg1 = delta_g_potentiation(p, 2.0, 0.0)
        assert dg1 == pytest.approx(0.731059, abs=1e-6)
        dg2 = delta_g_potentiation(p, 2.0, dg1)
        assert dg2 == pytest.approx(0.268941, abs=1e-6)
        assert dg1 + dg2 == pytest.approx(1.0, abs=1e-12)

    def test_linear_limit_depression(self):
        p = make_params(n_d=20)
        assert delta_g_depression(p, 1e-9, 0.3) == pytest.approx(-0.05, abs=1e-12)

    def test_depression_mirrors_potentiation(self):
        p = make_params(n_d=2, alpha_d=2.0)
        assert delta_g_depression(p, 2.0, 1.0) == pytest.approx(-0.731059, abs=1e-6)

    def test_depression_single_pulse_full_swing(self):
        for alpha in (0.5, 2.0, 10.0):
            p = make_params(n_d=1, alpha_d=alpha)
            assert delta_g_depression(p, alpha, 1.0) == pytest.approx(-1.0, abs=1e-12)

    def test_invalid_params_rejected(self):
        with pytest.raises(DeviceParameterError):
            make_params(g_max=0.0, g_min=1.0)
        with pytest.raises(DeviceParameterError):
            make_params(n_p=0)
        with pytest.raises(DeviceParameterError):
            make_params(yield_fraction=1.5)
        with pytest.raises(DeviceParameterError):
            make_params(pairing="both")

    def test_continuity_at_linear_limit(self):
        p = make_params(n_p=7, n_d=7)
        at_eps = delta_g_potentiation(p, ALPHA_EPS, 0.4)
        assert abs(at_eps - 1.0 / 7) <= 1e-6

    @given(alpha=st.floats(ALPHA_EPS, 20.0), n=st.integers(1, 500),
           ratio=st.floats(3.0, 1000.0))
    @settings(max_examples=60, deadline=None)
    def test_exact_traversal_property(self, alpha, n, ratio):
        g_min = 1e-6
        p = make_params(g_max=g_min * ratio, g_min=g_min, n_p=n, n_d=n,
                        alpha_p=alpha, alpha_d=alpha)
        g = p.g_min
        for _ in range(n):
            g += delta_g_potentiation(p, alpha, g)
        assert g == pytest.approx(p.g_max, rel=1e-9)
        g = p.g_max
        for _ in range(n):
            g += delta_g_depression(p, alpha, g)
        assert g == pytest.approx(p.g_min, rel=1e-9, abs=1e-9 * p.g_max)

    @given(alpha=st.floats(ALPHA_EPS, 20.0), g1=st.floats(0.0, 1.0), g2=st.floats(0.0, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_state(self, alpha, g1, g2):
        p = make_params(n_p=10, n_d=10, alpha_p=alpha, alpha_d=alpha)
        lo, hi = min(g1, g2), max(g1, g2)
        assert delta_g_potentiation(p, alpha, hi) <= delta_g_potentiation(p, alpha, lo) + 1e-15
        assert delta_g_potentiation(p, alpha, hi) >= 0
        # depression magnitude shrinks as the remaining swing g_max - g grows
        assert abs(delta_g_depression(p, alpha, lo)) <= abs(delta_g_depression(p, alpha, hi)) + 1e-15
        assert delta_g_depression(p, alpha, lo) <= 0


class TestApplyPulse:
    def test_linear_device_reaches_g_max_exactly(self):
        p = make_params()
        cell = SynapticCell(g=0.0, alpha_p_local=ALPHA_EPS / 10, alpha_d_local=ALPHA_EPS / 10)
        rng = np.random.default_rng(0)
        for _ in range(20):
            apply_pulse(cell, p, "potentiate", rng)
        assert cell.g == pytest.approx(1.0, rel=1e-12)

    def test_stuck_cell_is_fixed_point(self):
        p = make_params(yield_fraction=0.0)
        cell = SynapticCell(g=0.0, alpha_p_local=1.0, alpha_d_local=1.0, stuck="stuck-hrs")
        rng = np.random.default_rng(0)
        for direction in ("potentiate", "depress", "potentiate"):
            apply_pulse(cell, p, direction, rng)
        assert cell.g == 0.0

    def test_cycle_noise_std(self):
        p = make_params(gamma=0.3)
        rng = np.random.default_rng(7)
        deltas = []
        for _ in range(100_000):
            cell = SynapticCell(g=0.0, alpha_p_local=ALPHA_EPS / 10, alpha_d_local=1.0)
            apply_pulse(cell, p, "potentiate", rng)
            deltas.append(cell.g)
        # ideal step 0.05, noise sigma = gamma * dg = 0.015
        assert np.std(deltas) == pytest.approx(0.015, rel=0.05)
        assert np.mean(deltas) == pytest.approx(0.05, rel=0.01)

    def test_one_draw_per_noisy_pulse(self):
        p = make_params(gamma=0.5)
        rng_a = np.random.default_rng(3)
        cell = SynapticCell(g=0.2, alpha_p_local=1.0, alpha_d_local=1.0)
        apply_pulse(cell, p, "potentiate", rng_a)
        rng_b = np.random.default_rng(3)
        rng_b.standard_normal()
        assert rng_a.standard_normal() == rng_b.standard_normal()

    def test_no_draw_when_gamma_zero(self):
        p = make_params(gamma=0.0)
        rng_a = np.random.default_rng(3)
        cell = SynapticCell(g=0.2, alpha_p_local=1.0, alpha_d_local=1.0)
        apply_pulse(cell, p, "potentiate", rng_a)
        assert rng_a.standard_normal() == np.random.default_rng(3).standard_normal()

    @given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(0.0, 3.0))
    @settings(max_examples=40, deadline=None)
    def test_clamping_under_any_noise(self, seed, gamma):
        p = make_params(gamma=gamma, alpha_p=1.0, alpha_d=1.0, n_p=5, n_d=5)
        rng = np.random.default_rng(seed)
        cell = SynapticCell(g=0.5, alpha_p_local=1.0, alpha_d_local=1.0)
        for _ in range(50):
            apply_pulse(cell, p, "potentiate" if rng.random() < 0.5 else "depress", rng)
            assert p.g_min <= cell.g <= p.g_max


class TestSampleCell:
    def test_degenerate_distributions(self):
        p = make_params(alpha_p=2.0, alpha_d=3.0)
        cell = sample_cell(p, np.random.default_rng(0))
        assert cell.alpha_p_local == 2.0
        assert cell.alpha_d_local == 3.0
        assert cell.stuck == "none"
        lo = 0.5 - 0.05
        hi = 0.5 + 0.05
        assert lo <= cell.g <= hi

    def test_zero_yield_split(self):
        p = make_params(yield_fraction=0.0)
        rng = np.random.default_rng(11)
        states = [sample_cell(p, rng).stuck for _ in range(10_000)]
        assert all(s != "none" for s in states)
        hrs = sum(s == "stuck-hrs" for s in states)
        assert hrs / 10_000 == pytest.approx(0.5, abs=0.025)

    def test_d2d_std_on_unclamped_draws(self):
        p = make_params(alpha_p=5.0, sigma_alpha_p=5.0)
        rng = np.random.default_rng(123)
        for _ in range(10_000):
            sample_cell(p, rng)
        # replay the identical stream: draw order is alpha_p, alpha_d,
        # fault uniform, init uniform per cell
        rng = np.random.default_rng(123)
        draws = []
        for _ in range(10_000):
            draws.append(5.0 + 5.0 * rng.standard_normal())
            rng.standard_normal()
            rng.random()
            rng.random()
        assert np.std(draws) == pytest.approx(5.0, rel=0.10)

    def test_clamped_at_eps(self):
        p = make_params(alpha_p=0.1, sigma_alpha_p=10.0)
        rng = np.random.default_rng(5)
        alphas = [sample_cell(p, rng).alpha_p_local for _ in range(300)]
        assert min(alphas) >= ALPHA_EPS

    def test_pair_sampling(self):
        p = make_params(pairing="differential-potentiation-only")
        pair = sample_pair(p, np.random.default_rng(0))
        # potentiation-only pairs start near the low rail
        assert pair.positive.g <= 0.1
        assert pair.negative.g <= 0.1


class TestReadConductance:
    def test_no_noise_paths(self):
        p = make_params(read_noise_frac=0.0)
        cell = SynapticCell(g=0.42, alpha_p_local=1.0, alpha_d_local=1.0)
        assert read_conductance(cell, p, np.random.default_rng(0), noisy=True) == 0.42
        p2 = make_params(read_noise_frac=0.5)
        assert read_conductance(cell, p2, np.random.default_rng(0), noisy=False) == 0.42

    def test_noise_std(self):
        p = make_params(read_noise_frac=0.1)
        cell = SynapticCell(g=1.0, alpha_p_local=1.0, alpha_d_local=1.0)
        rng = np.random.default_rng(9)
        reads = [read_conductance(cell, p, rng, noisy=True) for _ in range(100_000)]
        assert np.std(reads) == pytest.approx(0.1, rel=0.05)

    def test_clamped_below_zero(self):
        p = make_params(read_noise_frac=5.0)
        cell = SynapticCell(g=0.1, alpha_p_local=1.0, alpha_d_local=1.0)
        rng = np.random.default_rng(2)
        assert min(read_conductance(cell, p, rng, noisy=True) for _ in range(200)) >= 0.0

    def test_range_referenced_noise(self):
        p = make_params(read_noise_frac=0.1, read_noise_ref="range", g_max=10.0, g_min=0.0)
        cell = SynapticCell(g=5.0, alpha_p_local=1.0, alpha_d_local=1.0)
        rng = np.random.default_rng(9)
        reads = [read_conductance(cell, p, rng, noisy=True) for _ in range(50_000)]
        assert np.std(reads) == pytest.approx(1.0, rel=0.05)


class TestPulseTrain:
    def test_full_potentiation_trace(self):
        p = make_params(alpha_p=1.5)
        trace = simulate_pulse_train(p, ["potentiate"] * 20, np.random.default_rng(0))
        g = np.array(trace.g_after)
        assert len(trace) == 20
        assert (np.diff(g) >= -1e-15).all()
        assert g[-1] == pytest.approx(1.0, rel=1e-9)

    def test_empty_train(self):
        p = make_params()
        assert len(simulate_pulse_train(p, [], np.random.default_rng(0))) == 0

    def test_two_pulse_values(self):
        p = make_params(n_p=2, alpha_p=2.0)
        trace = simulate_pulse_train(p, ["potentiate", "potentiate"], np.random.default_rng(0))
        assert trace.g_after == pytest.approx([0.731059, 1.0], abs=1e-6)

    def test_seeded_reproducibility(self):
        p = make_params(gamma=0.4, alpha_p=2.0, alpha_d=2.0)
        pulses = ["potentiate"] * 15 + ["depress"] * 7
        a = simulate_pulse_train(p, pulses, np.random.default_rng(77))
        b = simulate_pulse_train(p, pulses, np.random.default_rng(77))
        assert a.g_after == b.g_after

    def test_csv_round_trip(self, tmp_path):
        p = make_params(n_p=5, alpha_p=1.0)
        trace = simulate_pulse_train(p, ["potentiate"] * 5 + ["depress"] * 3,
                                     np.random.default_rng(0))
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        back = PulseTrace.from_csv(path)
        assert back.g_after == pytest.approx(trace.g_after)
        assert back.direction == trace.direction
        assert back.pulse_index == trace.pulse_index


class TestFit:
    def synth(self, params, rng=None):
        rng = rng or np.random.default_rng(0)
        pulses = ["potentiate"] * params.n_p + ["depress"] * params.n_d
        return simulate_pulse_train(params, pulses, rng)

    def test_linear_synthetic(self):
        p = make_params(n_p=20, n_d=20)
        fit = fit_device_model(self.synth(p))
        assert fit.params.alpha_p <= 0.05

    def test_ecram_round_trip(self):
        p = device_preset("ecram").with_overrides(gamma=0.0)
        fit = fit_device_model(self.synth(p))
        assert fit.params.alpha_p == pytest.approx(0.5, rel=0.05)
        assert fit.params.alpha_d == pytest.approx(0.5, rel=0.05)

    def test_sige_round_trip(self):
        p = device_preset("sige-epiram").with_overrides(gamma=0.0)
        fit = fit_device_model(self.synth(p))
        assert fit.params.alpha_p == pytest.approx(8.0, rel=0.05)
        assert fit.params.alpha_d == pytest.approx(15.0, rel=0.05)
        assert fit.params.g_max == pytest.approx(40e-6, rel=0.01)
        assert fit.params.g_min == pytest.approx(1e-6, rel=0.01)

    def test_too_short(self):
        with pytest.raises(FitError):
            fit_device_model(PulseTrace([0], ["potentiate"], [0.5]))

    def test_non_monotone_rejected(self):
        trace = PulseTrace()
        for k, g in enumerate([0.2, 0.5, 0.1, 0.8, 1.0]):
            trace.append(k, "potentiate", g)
        with pytest.raises(FitError):
            fit_device_model(trace)


class TestPresets:
    def test_pcm_row(self):
        p = device_preset("pcm")
        assert p.g_max == pytest.approx(2.2e-3)
        assert p.g_min == pytest.approx(7e-6)
        assert p.n_p == 30
        assert p.alpha_p == 6.0
        assert p.gamma == 0.3
        assert p.pairing == "differential-potentiation-only"

    def test_oxrram_row(self):
        p = device_preset("oxrram")
        assert p.g_max == pytest.approx(250e-6)
        assert p.g_min == pytest.approx(20e-6)
        assert p.n_d == 100
        assert p.alpha_d == 15.0
        assert p.gamma == 0.3
        assert p.pairing == "differential-depression-only"

    def test_ideal_linear_row(self):
        p = device_preset("ideal-linear")
        assert p.n_p == p.n_d == 20
        assert p.alpha_p == ALPHA_EPS
        assert p.gamma == 0.0

    def test_unknown_name(self):
        with pytest.raises(LookupError):
            device_preset("memristor-9000")

    def test_all_presets_valid(self):
        for name in PRESET_NAMES:
            device_preset(name)

    def test_registry_dir_and_json_round_trip(self, tmp_path):
        for name in PRESET_NAMES:
            device_preset(name).to_json(tmp_path / f"{name}.json")
        registry = load_preset_dir(tmp_path)
        assert set(registry) == set(PRESET_NAMES)
        assert registry["pcm"] == device_preset("pcm")
