import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rsma_cran.model import (
    ChannelState,
    CommonStructure,
    ConfigError,
    DesignVariables,
    RateAllocation,
    SystemConfig,
    WmmseAuxiliaries,
    build_orders,
    complex_from_json,
    complex_to_json,
    validate_config,
)

from helpers import random_auxiliaries, random_instance, random_sets


def four_rrh_config(**over):
    base = dict(num_rrhs=4, num_ues=8, antennas=[1, 1, 1, 1], fronthaul_capacity=[10.0] * 4,
                power_limit=[20.0] * 4, noise_variance=[1.2589e-13] * 8)
    base.update(over)
    return SystemConfig(**base)


def test_validate_four_rrh_config_ok():
    validate_config(four_rrh_config())


def test_validate_rejects_short_antenna_list():
    with pytest.raises(ConfigError, match="antennas"):
        validate_config(four_rrh_config(antennas=[1, 1, 1]))


def test_validate_rejects_zero_power():
    with pytest.raises(ConfigError, match="power_limit"):
        validate_config(four_rrh_config(power_limit=[20.0, 0.0, 20.0, 20.0]))


@pytest.mark.parametrize("field,value", [
    ("fronthaul_capacity", [10.0, -1.0, 10.0, 10.0]),
    ("noise_variance", [1.0] * 7),
    ("noise_variance", [1.0] * 7 + [0.0]),
    ("antennas", [1, 0, 1, 1]),
])
def test_validate_names_offending_field(field, value):
    with pytest.raises(ConfigError, match=field):
        validate_config(four_rrh_config(**{field: value}))


def test_zero_fronthaul_is_valid():
    validate_config(four_rrh_config(fronthaul_capacity=[0.0] * 4))


def test_antenna_offsets_cover_all_antennas():
    cfg = four_rrh_config(antennas=[2, 1, 3, 1])
    assert [list(r) for r in cfg.antenna_offsets] == [[0, 1], [2], [3, 4, 5], [6]]
    assert cfg.total_antennas == 7


# build_orders (UE and set indices are 0-based here)

def test_orders_largest_set_first():
    s = build_orders([{0, 1, 2}, {0, 1}], 3)
    assert s.orders[0] == (0, 1)


def test_non_member_has_empty_order():
    s = build_orders([{0, 1}], 3)
    assert s.membership[2] == () and s.orders[2] == ()


def test_equal_cardinality_tie_break_by_set_index():
    s = build_orders([{0, 1}, {0, 2}], 3)
    assert s.orders[0] == (0, 1)
    s = build_orders([{0, 2}, {0, 1}], 3)
    assert s.orders[0] == (0, 1)


@pytest.mark.parametrize("sets", [[{0}], [{0, 1}, {1, 0}], [{0, 5}], [{-1, 0}]])
def test_build_orders_rejects_bad_sets(sets):
    with pytest.raises(ConfigError):
        build_orders(sets, 3)


@given(st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_membership_matches_pairs(num_ues, seed):
    rng = np.random.default_rng(seed)
    sets = random_sets(rng, num_ues, max_sets=6)
    s = build_orders(sets, num_ues)
    from_membership = {(l, k) for k in range(num_ues) for l in s.membership[k]}
    from_sets = {(l, k) for l, S in enumerate(s.sets) for k in S}
    assert from_membership == from_sets == set(s.pairs)
    for k in range(num_ues):
        assert sorted(s.orders[k]) == sorted(s.membership[k])
        sizes = [len(s.sets[l]) for l in s.orders[k]]
        assert sizes == sorted(sizes, reverse=True)
    assert build_orders(sets, num_ues) == s


def test_laminar_orders_follow_inclusion():
    sets = [{0, 1}, {0, 1, 2, 3}, {0, 1, 2}, {4, 5}, set(range(6))]
    s = build_orders(sets, 6)
    for k in range(6):
        chain = [s.sets[l] for l in s.orders[k]]
        for a, b in zip(chain, chain[1:]):
            assert b < a


# JSON round trips

def _roundtrip(obj):
    return json.loads(json.dumps(obj))


def test_complex_json_is_bit_exact():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    b = complex_from_json(_roundtrip(complex_to_json(a)))
    assert np.array_equal(a, b)


def test_types_roundtrip():
    rng = np.random.default_rng(2)
    cfg, chan, struct, vars = random_instance(rng, 3, 4, [1, 2, 1], sets=[{0, 1}, {0, 1, 2, 3}])
    assert SystemConfig.from_dict(_roundtrip(cfg.to_dict())) == cfg
    assert np.array_equal(ChannelState.from_dict(_roundtrip(chan.to_dict())).h, chan.h)
    assert CommonStructure.from_dict(_roundtrip(struct.to_dict())) == struct
    back = DesignVariables.from_dict(_roundtrip(vars.to_dict(struct)), struct, cfg)
    assert np.array_equal(back.v_private, vars.v_private)
    assert np.array_equal(back.v_common, vars.v_common)
    assert all(np.array_equal(a, b) for a, b in zip(back.omega, vars.omega))
    assert np.array_equal(back.rates.common, vars.rates.common)
    aux = random_auxiliaries(rng, cfg, struct)
    aux2 = WmmseAuxiliaries.from_dict(_roundtrip(aux.to_dict()))
    assert np.array_equal(aux2.u_common, aux.u_common)
    assert all(np.array_equal(a, b) for a, b in zip(aux2.sigma, aux.sigma))


def test_rates_from_dict_requires_exact_pairs():
    struct = build_orders([{0, 1}], 3)
    d = RateAllocation([0, 0, 0], [0.1, 0.2]).to_dict(struct)
    d["common"].append({"set": 0, "ue": 2, "rate": 0.0})
    with pytest.raises(ConfigError):
        RateAllocation.from_dict(d, struct)


def test_design_check_rejects_non_psd_omega():
    rng = np.random.default_rng(3)
    cfg, chan, struct, vars = random_instance(rng, 2, 2, [1, 1], sets=[])
    bad = DesignVariables(vars.v_private, vars.v_common, (np.array([[-1.0]]), vars.omega[1]), vars.rates)
    with pytest.raises(ConfigError, match="omega"):
        bad.check(cfg, struct)


def test_channel_rejects_non_finite():
    with pytest.raises(ConfigError):
        ChannelState(np.array([[np.nan + 0j]]))
