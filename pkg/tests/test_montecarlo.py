import math

import numpy as np
import pytest
from statsmodels.stats.proportion import proportion_confint

from irgain.channel import ChannelImpulseResponse, snr_to_energy, synth_received_flat
from irgain.model import SystemConfig, draw_hops, random_symbols, spreading_matrices
from irgain.montecarlo import (
    BLOCK_SIZE,
    BerEstimate,
    SweepAxis,
    TrialPlan,
    apply_axis,
    point_seed,
    run_ber,
    run_sweep,
    simulate_block,
    wilson_interval,
)
from irgain.rng import stream


def test_wilson_matches_statsmodels():
    for e, n in ((0, 10), (3, 10), (50, 100), (17, 1000), (1000, 1000)):
        lo, hi = wilson_interval(e, n)
        ref = proportion_confint(e, n, alpha=0.05, method="wilson")
        assert math.isclose(lo, ref[0], abs_tol=1e-12) and math.isclose(hi, ref[1], abs_tol=1e-12)


def test_wilson_coverage():
    rng = stream(1)
    covered = 0
    for _ in range(1000):
        e = int(rng.binomial(500, 0.1))
        lo, hi = wilson_interval(e, 500)
        covered += lo <= 0.1 <= hi
    assert covered >= 930


def test_estimate_invariants():
    est = BerEstimate.from_counts(3, 100)
    assert est.ci_low <= est.ber <= est.ci_high and est.ber == 0.03
    with pytest.raises(ValueError):
        BerEstimate.from_counts(5, 4)


def test_plan_validation():
    cfg = SystemConfig(64, 8, (1.0, 1.0))
    with pytest.raises(ValueError):
        TrialPlan(cfg, 0, 1)
    with pytest.raises(ValueError):
        TrialPlan(cfg, 10, 1, target_user=2)
    with pytest.raises(ValueError, match="infeasible"):
        TrialPlan(SystemConfig(64, 8, (1.0,) * 21), 10, 1, detector="ML")


def test_noiseless_single_user_is_error_free():
    for det in ("MF", "ZF", "MMSE", "ML"):
        cfg = SystemConfig(64, 8, (1.0,), noise_sigma=0.0)
        assert run_ber(TrialPlan(cfg, 5000, 2, det)).errors == 0


def test_noise_dominated_is_coin_flip():
    cfg = SystemConfig(64, 8, (1.0,), noise_sigma=1e6)
    est = run_ber(TrialPlan(cfg, 10**5, 3, max_errors=None))
    assert est.ci_low <= 0.5 <= est.ci_high


def test_single_user_awgn():
    E = snr_to_energy(4.0, 1.0)
    est = run_ber(TrialPlan(SystemConfig(64, 8, (E,)), 2 * 10**5, 4, max_errors=None))
    p = 0.5 * math.erfc(math.sqrt(E) / math.sqrt(2))
    assert abs(est.ber - p) <= 3 * math.sqrt(p * (1 - p) / est.trials)


def test_thread_count_independence():
    plan = TrialPlan(SystemConfig(128, 16, (2.0, 2.0, 4.0)), 5 * BLOCK_SIZE + 17, 5, "MF",
                     ChannelImpulseResponse((1.0, 0.9, 0.8)), max_errors=None)
    assert run_ber(plan, 1) == run_ber(plan, 3)
    plan = plan.replace(detector="MMSE", num_trials=3 * BLOCK_SIZE)
    assert run_ber(plan, 1) == run_ber(plan, 2)


def test_early_stop_is_deterministic_and_block_aligned():
    plan = TrialPlan(SystemConfig(64, 8, (1.0, 1.0)), 50 * BLOCK_SIZE, 6, max_errors=500)
    a, b = run_ber(plan, 1), run_ber(plan, 4)
    assert a == b and a.errors >= 500 and a.trials % BLOCK_SIZE == 0 and a.trials < plan.num_trials


def test_early_stop_unbiased():
    base = TrialPlan(SystemConfig(64, 8, (1.0, 1.0)), 40 * BLOCK_SIZE, 7, max_errors=None)
    full = run_ber(base)
    stopped = run_ber(base.replace(max_errors=300))
    assert full.overlaps(stopped)


def test_mf_fast_path_matches_dense_synthesis():
    # independent oracle: build S, synthesise every chip with noise, despread
    cfg = SystemConfig(64, 8, (1.0, 2.0))
    mf = run_ber(TrialPlan(cfg, 10**5, 8, "MF", max_errors=None))
    errors = 0
    for i in range(25):
        rng = stream(99, i)
        slots, pols = draw_hops(cfg, rng, (4000, 2))
        b = random_symbols(rng, (4000, 2))
        S = spreading_matrices(slots, pols, 64)
        r = synth_received_flat(S, cfg.amplitudes, b, 1.0, rng)
        y0 = np.einsum("tn,tn->t", S[:, :, 0].astype(float), r)
        errors += int(np.count_nonzero(np.where(y0 >= 0, 1, -1) != b[:, 0]))
    assert mf.overlaps(BerEstimate.from_counts(errors, 10**5))


def test_block_streams():
    plan = TrialPlan(SystemConfig(64, 8, (1.0, 1.0), noise_sigma=2.0), BLOCK_SIZE * 2, 9)
    assert simulate_block(plan, 0, BLOCK_SIZE) == simulate_block(plan, 0, BLOCK_SIZE)
    a = stream(9, 0).integers(0, 2**62, size=4)
    assert not np.array_equal(a, stream(9, 1).integers(0, 2**62, size=4))


def test_coded_pulse_rate_ci_overlap():
    E = snr_to_energy(6.0, 1.0)
    a = run_ber(TrialPlan(SystemConfig(128, 8, (E, E)), 10**6, 10, max_errors=None))
    b = run_ber(TrialPlan(SystemConfig(128, 128, (E, E)), 10**6, 11, max_errors=None))
    assert a.overlaps(b)


def test_sweep_singleton_equals_run_ber():
    base = TrialPlan(SystemConfig(128, 8, (4.0, 4.0)), 3 * BLOCK_SIZE, 12, max_errors=None)
    [(v, est)] = run_sweep(base, "pulse_rate", [32])
    assert v == 32 and est == run_ber(apply_axis(base, SweepAxis.PULSE_RATE, 32))


def test_sweep_non_divisor():
    base = TrialPlan(SystemConfig(128, 8, (4.0, 4.0)), 100, 12)
    with pytest.raises(ValueError, match="valid values"):
        run_sweep(base, "pulse_rate", [7])


def test_sweep_axes():
    base = TrialPlan(SystemConfig(128, 8, (2.0, 4.0)), 100, 13)
    p = apply_axis(base, SweepAxis.SNR_DB, 6.0)
    assert math.isclose(p.config.energies[0], snr_to_energy(6.0, 1.0))
    assert math.isclose(p.config.energies[1] / p.config.energies[0], 2.0)
    p = apply_axis(base, SweepAxis.NUM_USERS, 4)
    assert p.config.energies == (2.0, 4.0, 4.0, 4.0)
    assert apply_axis(base, SweepAxis.NUM_USERS, 1).config.energies == (2.0,)
    assert point_seed(13, SweepAxis.SNR_DB, 6.0) != point_seed(13, SweepAxis.SNR_DB, 8.0)
    assert point_seed(13, SweepAxis.SNR_DB, 6.0) == point_seed(13, SweepAxis.SNR_DB, 6.0)


def test_snr_sweep_monotone_fig2_setting():
    h = ChannelImpulseResponse((1.0, 0.9, 0.8))
    base = TrialPlan(SystemConfig(128, 32, (1.0, 1.0, 2.0)), 2 * 10**5, 14, channel=h, max_errors=None)
    res = run_sweep(base, "snr_db", [2, 4, 6, 8])
    bers = [e.ber for _, e in res]
    assert all(b < a for a, b in zip(bers, bers[1:]))
