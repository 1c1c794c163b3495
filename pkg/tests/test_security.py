import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfiqkd import ChannelParams, ProtocolParams, SessionParams, TallyTable
from rfiqkd.finitekey import S0_FLOOR, DecoyBounds, decoy_bounds
from rfiqkd.security import (
    analyze,
    asymptotic_c,
    binary_entropy,
    c_quantity,
    estimate_theta,
    eve_information,
    secret_key_rate,
)
from rfiqkd.statmodel import expected_tallies, qber

probs = st.floats(0.0, 0.5)


# -- binary entropy -------------------------------------------------------------------

def test_entropy_maximum():
    assert binary_entropy(0.5) == 1.0


def test_entropy_endpoints():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0


def test_entropy_reference_value():
    # 40-digit reference: 0.49991595816452799564...
    assert binary_entropy(0.11) == pytest.approx(0.49991595816452800, rel=1e-14)
    assert binary_entropy(0.11) == pytest.approx(0.49993, abs=5e-5)


@pytest.mark.parametrize("x", [-0.01, 1.01, math.nan])
def test_entropy_rejects_non_probability(x):
    with pytest.raises(ValueError):
        binary_entropy(x)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0))
def test_entropy_symmetric_and_bounded(x):
    assert 0 <= binary_entropy(x) <= 1
    assert binary_entropy(x) == pytest.approx(binary_entropy(1 - x), abs=1e-12)


# -- C -----------------------------------------------------------------------------------

def test_c_aligned_ideal_channel():
    assert c_quantity([0.0, 0.5, 0.5, 0.0]) == 2.0


def test_c_uncorrelated():
    assert c_quantity([0.5, 0.5, 0.5, 0.5]) == 0.0


def test_c_long_link(records):
    res = analyze(records[250].tallies, records[250].protocol, records[250].session)
    assert res.c_value == pytest.approx(0.78, abs=0.03)


@settings(max_examples=200, deadline=None)
@given(st.lists(probs, min_size=4, max_size=4))
def test_c_range(e):
    assert 0 <= c_quantity(e) <= 4


# -- Eve's information ----------------------------------------------------------------

def test_ideal_case_leaks_nothing():
    u, v, i_e = eve_information(0.0, 2.0)
    assert (u, v, i_e) == (1.0, 0.0, 0.0)


def test_no_correlations_full_leakage():
    u, v, i_e = eve_information(0.0, 0.0)
    assert u == 0.0 and i_e == 1.0


def test_long_link_regression():
    # frozen from a 40-digit evaluation at e = 2.47%, C = 0.78
    u, v, i_e = eve_information(0.0247, 0.78)
    assert u == pytest.approx(0.64031559503726015, rel=1e-13)
    assert v == 0.0
    assert i_e == pytest.approx(0.68764234836585643, rel=1e-13)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.0, 0.499), st.floats(0.0, 4.0))
def test_eve_information_ranges(e, c):
    u, v, i_e = eve_information(e, c)
    assert 0 <= u <= 1 and 0 <= v <= 1 and 0 <= i_e <= 1


@settings(max_examples=300, deadline=None)
@given(st.floats(0.0, 0.499), st.floats(0.0, 4.0), st.floats(0.0, 4.0))
def test_eve_information_non_increasing_in_c(e, c1, c2):
    lo, hi = sorted((c1, c2))
    assert eve_information(e, hi)[2] <= eve_information(e, lo)[2] + 1e-12


# -- secret key rate ------------------------------------------------------------------

@pytest.mark.parametrize("km, expected", [(200, 49.65), (250, 0.65), (50, 189080.80)])
def test_published_key_rates(records, km, expected):
    rec = records[km]
    res = analyze(rec.tallies, rec.protocol, rec.session)
    assert res.skr_bits_per_second == pytest.approx(expected, rel=0.10)


def test_total_leakage_gives_no_key(records):
    t = records[250].tallies
    bounds = DecoyBounds(S0_FLOOR, 1.0, 1e6, 1e6, 0.5)
    res = secret_key_rate(t, bounds, 0.0, SessionParams())
    assert res.i_e_upper == 1.0
    assert res.skr_per_pulse == 0.0 and res.skr_bits_per_second == 0.0


def test_empty_key_basis_raises(records):
    rec = records[250]
    n, m = dict(rec.tallies.n), dict(rec.tallies.m)
    n["ZZ", "mu"] = n["ZZ", "nu"] = m["ZZ", "mu"] = m["ZZ", "nu"] = 0.0
    t = TallyTable(n, m)
    with pytest.raises(ValueError):
        analyze(t, rec.protocol, rec.session)
    assert analyze(t, rec.protocol, rec.session, strict=False).skr_bits_per_second == 0.0


def test_leakage_uses_pooled_key_basis_error(records):
    rec = records[250]
    res = analyze(rec.tallies, rec.protocol, rec.session)
    assert res.e_zz == pytest.approx(2198 / 124317, rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 80.0), st.floats(0.0, 2 * math.pi), st.floats(0.0, 0.5))
def test_rate_never_negative(loss, theta, e_d):
    pp = ProtocolParams(0.388, 0.123, 0.5, 0.5, 0.476, 0.262, 0.262)
    ch = ChannelParams(loss_db=loss, theta=theta, e_d_z=e_d, e_d_xy=e_d)
    res = analyze(expected_tallies(ch, pp, 8.1e11), pp, SessionParams(), strict=False)
    assert res.skr_per_pulse >= 0 and res.skr_bits_per_second >= 0


@settings(max_examples=60, deadline=None)
@given(st.floats(5.0, 60.0), st.floats(0.01, 5.0))
def test_rate_non_increasing_in_loss(loss, d_loss):
    pp = ProtocolParams(0.388, 0.123, 0.5, 0.5, 0.476, 0.262, 0.262)
    rates = [analyze(expected_tallies(ChannelParams(loss_db=x), pp, 8.1e11), pp, SessionParams(),
                     strict=False).skr_bits_per_second for x in (loss, loss + d_loss)]
    assert rates[1] <= rates[0]


# -- asymptotic C and angle estimation ---------------------------------------------

def test_asymptotic_c_is_frame_independent():
    for theta in np.linspace(0, 2 * math.pi, 100, endpoint=False):
        ch = ChannelParams(p_d=0.0, e_d_z=0.0, e_d_xy=0.0, loss_db=47.10, theta=theta)
        assert asymptotic_c(ch) == pytest.approx(2.0, abs=1e-9)


def test_estimate_theta_endpoints():
    assert estimate_theta(0.0) == 0.0
    assert estimate_theta(0.5) == pytest.approx(math.pi / 2, abs=1e-15)


@pytest.mark.parametrize("e", [-1e-3, 0.51])
def test_estimate_theta_rejects_out_of_range(e):
    with pytest.raises(ValueError):
        estimate_theta(e)


def _invert_exact_xx(target, mu=0.388, eta=1e-4, p_d=1e-8):
    # bisection on the exact signal-state XX QBER; it increases with theta on [0, pi/2]
    loss = 10 * math.log10(0.7 / eta)

    def e_of(theta):
        return float(qber(ChannelParams(0.7, p_d, 0.0, 0.0, loss, theta), "XX", mu))

    lo, hi = 0.0, math.pi / 2
    for _ in range(80):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if e_of(mid) < target else (lo, mid)
    return lo


def test_estimate_theta_recovers_preset_angle():
    assert estimate_theta(0.03015) == pytest.approx(math.pi / 9, abs=1e-3)
    assert estimate_theta(0.0302) == pytest.approx(math.pi / 9, abs=1e-2)


def test_closed_form_agrees_with_exact_inversion():
    assert estimate_theta(0.03015) == pytest.approx(_invert_exact_xx(0.03015), abs=1e-3)


@pytest.mark.parametrize("eta", [1e-4, 1e-6])
@pytest.mark.parametrize("theta", np.linspace(0.1, 1.2, 12))
def test_estimate_theta_round_trip(theta, eta):
    ch = ChannelParams(p_d=0.0, e_d_z=0.0, e_d_xy=0.0, loss_db=10 * math.log10(0.7 / eta), theta=theta)
    assert estimate_theta(float(qber(ch, "XX", 0.388))) == pytest.approx(theta, abs=1e-2)


def test_vectorized_analysis_matches_scalar(records):
    ch = ChannelParams(loss_db=39.29)
    pp = ProtocolParams.symmetric(np.array([0.4, 0.3]), np.array([0.1, 0.05]),
                                  np.array([0.5, 0.7]), np.array([0.6, 0.8]))
    vec = analyze(expected_tallies(ch, pp, 8.1e11), pp, SessionParams())
    one_pp = ProtocolParams.symmetric(0.3, 0.05, 0.7, 0.8)
    one = analyze(expected_tallies(ch, one_pp, 8.1e11), one_pp, SessionParams())
    assert vec.skr_bits_per_second[1] == pytest.approx(one.skr_bits_per_second, rel=1e-12)
    assert decoy_bounds(expected_tallies(ch, one_pp, 8.1e11), "ZZ", one_pp).s1_lower == pytest.approx(
        vec.s1_lower[1], rel=1e-12)
