import numpy as np
import pytest

from audiodiff.errors import ParameterError
from audiodiff.schedule import (build_linear_schedule, check_step,
                                load_schedule, save_schedule,
                                schedule_from_config, schedule_hash,
                                schedule_to_config, snr_weight)

# Hand-computed reference for N=2, beta = (0.1, 0.2):
#   alpha      = (0.9, 0.8)
#   alpha_bar  = (0.9, 0.72)
#   posterior  = (0, (1-0.9)/(1-0.72) * 0.2) = (0, 1/14)
#   snr        = (9, 18/7)


def test_two_step_closed_form():
    s = build_linear_schedule(2, 0.1, 0.2)
    tol = 1e-15
    assert np.allclose(s.beta, [0.1, 0.2], atol=tol, rtol=0.0)
    assert np.allclose(s.alpha, [0.9, 0.8], atol=tol, rtol=0.0)
    assert np.allclose(s.alpha_bar, [0.9, 0.72], atol=tol, rtol=0.0)
    assert s.posterior_var[0] == 0.0
    assert abs(s.posterior_var[1] - 1.0 / 14.0) < tol
    assert np.allclose(s.snr, [9.0, 18.0 / 7.0], atol=1e-14, rtol=0.0)


def test_gamma_modes_on_two_step():
    s = build_linear_schedule(2, 0.1, 0.2, gamma_mode="snr")
    assert np.allclose(s.gamma, s.snr, atol=0.0, rtol=0.0)

    s = build_linear_schedule(2, 0.1, 0.2, gamma_mode="min_snr", snr_clamp=5.0)
    # min(9,5)/9 and min(18/7,5)/(18/7)
    assert abs(s.gamma[0] - 5.0 / 9.0) < 1e-15
    assert s.gamma[1] == 1.0

    s = build_linear_schedule(2, 0.1, 0.2, gamma_mode="uniform")
    assert np.all(s.gamma == 1.0)


def test_snr_weight_matches_gamma_and_clamps():
    s = build_linear_schedule(10, 0.05, 0.3)
    for n in range(1, 11):
        assert snr_weight(s, n) == s.snr[n - 1]
        assert snr_weight(s, n, clamp=np.inf) == 1.0
    # large clamp leaves low-SNR steps unweighted
    assert snr_weight(s, 10, clamp=1e9) == 1.0
    with pytest.raises(ParameterError):
        snr_weight(s, 1, clamp=0.0)


def test_invariants_over_parameter_sweep():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(2, 400))
        b0 = float(rng.uniform(1e-5, 5e-3))
        b1 = float(rng.uniform(b0 + 1e-4, 0.3))
        s = build_linear_schedule(n, b0, b1)
        assert np.all(np.diff(s.beta) > 0.0)
        assert np.all((s.alpha_bar > 0.0) & (s.alpha_bar < 1.0))
        assert np.all(np.diff(s.alpha_bar) < 0.0)
        assert np.all(np.diff(s.snr) < 0.0)
        assert s.posterior_var[0] == 0.0
        assert np.all(s.posterior_var >= 0.0)
        # posterior variance never exceeds the forward beta
        assert np.all(s.posterior_var <= s.beta + 1e-15)


def test_validation_rejects_bad_ranges():
    with pytest.raises(ParameterError):
        build_linear_schedule(0)
    with pytest.raises(ParameterError):
        build_linear_schedule(10, 0.0, 0.02)
    with pytest.raises(ParameterError):
        build_linear_schedule(10, 0.02, 0.01)
    with pytest.raises(ParameterError):
        build_linear_schedule(10, 1e-4, 1.0)
    # flat ramp only allowed for a single step
    with pytest.raises(ParameterError):
        build_linear_schedule(10, 0.02, 0.02)
    assert build_linear_schedule(1, 0.02, 0.02).n_steps == 1
    with pytest.raises(ParameterError):
        build_linear_schedule(10, gamma_mode="nope")
    with pytest.raises(ParameterError):
        build_linear_schedule(10, gamma_mode="min_snr")
    with pytest.raises(ParameterError):
        build_linear_schedule(10, gamma_mode="min_snr", snr_clamp=-1.0)


def test_check_step_bounds():
    s = build_linear_schedule(5)
    check_step(s, 1)
    check_step(s, 5)
    for bad in (0, 6, -1, 2.5, "3"):
        with pytest.raises(IndexError):
            check_step(s, bad)


def test_config_round_trip_and_hash(tmp_path):
    s = build_linear_schedule(123, 2e-4, 0.015, gamma_mode="min_snr",
                              snr_clamp=5.0)
    text = schedule_to_config(s)
    t = schedule_from_config(text)
    assert t.n_steps == s.n_steps
    assert np.array_equal(t.beta, s.beta)
    assert np.array_equal(t.gamma, s.gamma)
    assert t.snr_clamp == 5.0
    assert schedule_hash(t) == schedule_hash(s)
    # a different schedule hashes differently
    other = build_linear_schedule(123, 2e-4, 0.016)
    assert schedule_hash(other) != schedule_hash(s)

    path = tmp_path / "sched.txt"
    save_schedule(path, s)
    u = load_schedule(path)
    assert np.array_equal(u.alpha_bar, s.alpha_bar)
    assert u.gamma_mode == "min_snr"
