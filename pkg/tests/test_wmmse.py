import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rsma_cran.model import (ChannelState, DesignVariables, RateAllocation, SystemConfig, build_orders,
                             zero_design)
from rsma_cran.rates import evaluate, fronthaul_usage, stream_rates
from rsma_cran.scenario import ScenarioSpec, generate, make_config
from rsma_cran.clustering import design_sets
from rsma_cran.wmmse import (AlgorithmOptions, error_common, error_private, initialize, lower_bound_common,
                             lower_bound_private, mmse_filter, run_algorithm1, update_filters, update_sigma,
                             update_weights, upper_bound_fronthaul)

from helpers import crandn, random_instance, random_pd, ref_single_link_rate


def one_link(h=1.0, v=1.0, omega=0.0, noise=1.0, n_u=1):
    cfg = SystemConfig(1, n_u, [1], [10.0], [10.0], [noise] * n_u)
    struct = build_orders([], n_u)
    chan = ChannelState(np.full((n_u, 1), h, dtype=complex))
    vars = DesignVariables(np.full((n_u, 1), v, dtype=complex), np.zeros((0, 1), dtype=complex),
                           (np.array([[omega]], dtype=complex),), RateAllocation.zeros(struct))
    return cfg, chan, struct, vars


# --- error variances and filters -------------------------------------------

def test_error_with_zero_filter_is_one():
    cfg, chan, struct, vars = one_link()
    assert error_private(0, vars, chan, struct, cfg, 0.0) == 1.0


def test_error_half_filter():
    # |0.5 - 1|^2 + 0.25 * 1
    cfg, chan, struct, vars = one_link()
    assert error_private(0, vars, chan, struct, cfg, 0.5) == pytest.approx(0.5, abs=1e-15)


@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       st.floats(1e-3, 10))
def test_error_at_mmse_filter(a, nu):
    # minimizing the quadratic in u by hand gives nu / (|a|^2 + nu)
    u = mmse_filter(a, nu)
    e = abs(np.conj(u) * a - 1) ** 2 + abs(u) ** 2 * nu
    assert e == pytest.approx(nu / (abs(a) ** 2 + nu), rel=1e-10)


def test_filter_unit_gain_unit_noise():
    cfg, chan, struct, vars = one_link()
    u_p, u_c = update_filters(vars, chan, struct, cfg)
    assert u_p[0] == pytest.approx(0.5, abs=1e-15) and len(u_c) == 0


def test_filter_zero_precoder():
    cfg, chan, struct, vars = one_link(v=0.0)
    assert update_filters(vars, chan, struct, cfg)[0][0] == 0.0


@given(st.integers(0, 2**32 - 1))
def test_filter_is_local_minimizer(seed):
    rng = np.random.default_rng(seed)
    cfg, chan, struct, vars = random_instance(rng)
    u_p, u_c = update_filters(vars, chan, struct, cfg)
    for k in range(cfg.num_ues):
        e0 = error_private(k, vars, chan, struct, cfg, u_p[k])
        for d in (1e-3, -1e-3, 1e-3j, -1e-3j):
            assert error_private(k, vars, chan, struct, cfg, u_p[k] + d) >= e0 - 1e-15
    for n, (l, k) in enumerate(struct.pairs):
        e0 = error_common(l, k, vars, chan, struct, cfg, u_c[n])
        for d in (1e-3, -1e-3, 1e-3j, -1e-3j):
            assert error_common(l, k, vars, chan, struct, cfg, u_c[n] + d) >= e0 - 1e-15


# --- weights ---------------------------------------------------------------

def test_weight_reciprocal_of_half():
    cfg, chan, struct, vars = one_link()
    w_p, _ = update_weights(vars, chan, struct, cfg, (np.array([0.5]), np.zeros(0)))
    assert w_p[0] == pytest.approx(2.0, abs=1e-14)


def test_weight_with_zero_filter_is_one():
    cfg, chan, struct, vars = one_link()
    w_p, _ = update_weights(vars, chan, struct, cfg, (np.array([0.0]), np.zeros(0)))
    assert w_p[0] == 1.0


def test_weight_tightness_identity():
    cfg, chan, struct, vars = one_link()
    u = update_filters(vars, chan, struct, cfg)
    w_p, _ = update_weights(vars, chan, struct, cfg, u)
    assert w_p[0] == pytest.approx(2.0, abs=1e-14)
    assert math.log2(w_p[0]) == pytest.approx(stream_rates(vars, chan, struct, cfg)[0][0], abs=1e-14)


# --- bounds ----------------------------------------------------------------

@given(st.integers(0, 2**32 - 1))
def test_bounds_tight_at_updates(seed):
    rng = np.random.default_rng(seed)
    cfg, chan, struct, vars = random_instance(rng)
    u_p, u_c = update_filters(vars, chan, struct, cfg)
    w_p, w_c = update_weights(vars, chan, struct, cfg, (u_p, u_c))
    f_p, f_c = stream_rates(vars, chan, struct, cfg)
    for k in range(cfg.num_ues):
        assert lower_bound_private(k, vars, u_p[k], w_p[k], chan, struct, cfg) == pytest.approx(f_p[k], abs=1e-10)
    for n, (l, k) in enumerate(struct.pairs):
        assert lower_bound_common(l, k, vars, u_c[n], w_c[n], chan, struct, cfg) == pytest.approx(f_c[n], abs=1e-10)
    sigma = update_sigma(vars, cfg)
    for i in range(cfg.num_rrhs):
        assert upper_bound_fronthaul(i, vars, sigma[i], cfg) == pytest.approx(fronthaul_usage(i, vars, cfg), abs=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_bound_direction_random_auxiliaries(seed):
    rng = np.random.default_rng(seed)
    cfg, chan, struct, vars = random_instance(rng)
    f_p, f_c = stream_rates(vars, chan, struct, cfg)
    for _ in range(20):
        for k in range(cfg.num_ues):
            u, w = complex(crandn(rng)), math.exp(rng.normal(0, 1.5))
            assert lower_bound_private(k, vars, u, w, chan, struct, cfg) <= f_p[k] + 1e-9
        for n, (l, k) in enumerate(struct.pairs):
            u, w = complex(crandn(rng)), math.exp(rng.normal(0, 1.5))
            assert lower_bound_common(l, k, vars, u, w, chan, struct, cfg) <= f_c[n] + 1e-9
        for i in range(cfg.num_rrhs):
            S = random_pd(rng, cfg.antennas[i], rng.uniform(0.1, 5.0))
            assert upper_bound_fronthaul(i, vars, S, cfg) >= fronthaul_usage(i, vars, cfg) - 1e-9


def test_lower_bound_with_unit_weight_random_filters():
    rng = np.random.default_rng(5)
    cfg, chan, struct, vars = random_instance(rng, num_ues=3, sets=[{0, 1, 2}])
    f_p, _ = stream_rates(vars, chan, struct, cfg)
    for u in crandn(rng, 1000) * 2:
        assert lower_bound_private(0, vars, u, 1.0, chan, struct, cfg) <= f_p[0] + 1e-12


def test_lower_bound_vanishing_weight_goes_to_minus_infinity():
    cfg, chan, struct, vars = one_link()
    vals = [lower_bound_private(0, vars, 0.5, w, chan, struct, cfg) for w in (1e-3, 1e-6, 1e-9)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < -25
    assert max(vals) <= stream_rates(vars, chan, struct, cfg)[0][0]


def test_fronthaul_bound_zero_precoders_sigma_omega():
    cfg, chan, struct, vars = one_link(v=0.0, omega=0.7)
    assert upper_bound_fronthaul(0, vars, vars.omega[0], cfg) == pytest.approx(0.0, abs=1e-14)


def test_sigma_zero_precoders_is_omega():
    rng = np.random.default_rng(2)
    cfg, chan, struct, _ = random_instance(rng, num_rrhs=2, antennas=[2, 1])
    z = zero_design(cfg, struct)
    omega = (random_pd(rng, 2), random_pd(rng, 1))
    z = DesignVariables(z.v_private, z.v_common, omega, z.rates)
    for S, O in zip(update_sigma(z, cfg), omega):
        assert np.array_equal(S, O)


def test_sigma_scalar_sum():
    cfg, chan, struct, vars = one_link(v=1.0, omega=1.0, n_u=3)
    assert update_sigma(vars, cfg)[0][0, 0] == pytest.approx(4.0, abs=1e-14)


# --- initialization and the outer loop -------------------------------------

@given(st.integers(0, 2**32 - 1))
def test_initialization_strictly_feasible(seed):
    rng = np.random.default_rng(seed)
    cfg, chan, struct, _ = random_instance(rng)
    vars = initialize(chan, struct, cfg, init_seed=seed % 1000)
    rep = evaluate(vars, chan, struct, cfg)
    assert rep.feasible
    assert np.all(rep.g_fronthaul < np.array(cfg.fronthaul_capacity))
    assert np.all(rep.p_power <= np.array(cfg.power_limit) * (1 + 1e-12))


def test_zero_fronthaul_gives_zero_rate_quickly():
    spec = ScenarioSpec(seed=3)
    cfg = make_config(2, 3, 1, 0.0, 30.0, spec)
    _, chan = generate(spec, cfg)
    struct = design_sets("rsma-sc", chan, 3)
    vars, rep, trace = run_algorithm1(chan, struct, cfg)
    assert rep.r_min == 0.0 and rep.feasible
    assert trace.iterations <= 2 and trace.converged
    assert not np.any(vars.streams)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_single_link_matches_grid_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    gain = float(rng.uniform(0.5, 20.0))
    P, C = float(rng.uniform(1.0, 10.0)), float(rng.uniform(1.0, 6.0))
    cfg = SystemConfig(1, 1, [1], [C], [P], [1.0])
    chan = ChannelState(np.array([[math.sqrt(gain) * np.exp(1j * rng.uniform(0, 2 * np.pi))]]))
    _, rep, trace = run_algorithm1(chan, build_orders([], 1), cfg)
    assert rep.feasible
    assert rep.r_min == pytest.approx(ref_single_link_rate(gain, P, C), abs=1e-3)


def test_eight_ue_instance_monotone_and_terminates():
    spec = ScenarioSpec(seed=0)
    cfg = make_config(4, 8, 1, 10.0, 43.0, spec)
    _, chan = generate(spec, cfg)
    struct = design_sets("rsma-sc", chan, 8)
    _, rep, trace = run_algorithm1(chan, struct, cfg)
    r = np.array(trace.r_min)
    assert np.all(np.diff(r) >= -1e-6)
    assert trace.iterations < 200 and trace.converged
    assert rep.feasible


def test_options_validation():
    cfg, chan, struct, _ = one_link()
    with pytest.raises(ValueError):
        run_algorithm1(chan, struct, cfg, AlgorithmOptions(epsilon=0.0))
