"""One-decoy finite-key estimation.

Hoeffding fluctuation bounds on the observed tallies, then decoy-state
bounds on vacuum events, single-photon events and the single-photon error
rate for one basis pair. Functions broadcast over array-valued tallies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .statmodel import ChannelParams, ProtocolParams, TallyTable, check_basis_pair, gain, qber

S0_FLOOR = 1e-10
MIN_DECOY_GAP = 1e-6


@dataclass(frozen=True)
class EpsilonBudget:
    """Failure probabilities and the composition constants of the key-length formula.

    The default Hoeffding parameters reproduce the published 50-250 km
    results; see the README for the calibration.
    """

    eps_sec: float = 1e-9
    eps_cor: float = 1e-15
    eps_1: float = 1e-11
    eps_2: float = 3e-11
    a: int = 6
    b: int = 43

    def __post_init__(self):
        for name in ("eps_sec", "eps_cor", "eps_1", "eps_2"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        for name in ("a", "b"):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value}")


@dataclass(frozen=True)
class DecoyBounds:
    s0_lower: float
    s0_upper: float
    s1_lower: float
    m1_upper: float
    e1_upper: float


def tau(i: int, pp: ProtocolParams):
    """Probability that a pulse carries exactly ``i`` photons, mixed over both intensities."""
    if i not in (0, 1):
        raise ValueError(f"only photon numbers 0 and 1 are used, got {i}")
    total = 0.0
    for k in ("mu", "nu"):
        x = np.asarray(pp.intensity(k), dtype=float)
        total = total + pp.intensity_prob(k) * np.exp(-x) * x**i / math.factorial(i)
    return total


def hoeffding_halfwidth(x, eps: float):
    """sqrt(x/2 * ln(1/eps)) -- deviation of a sum of ``x`` bounded trials."""
    return np.sqrt(np.asarray(x, dtype=float) / 2 * math.log(1 / eps))


def hoeffding_bounds(x, k, p_k, eps: float, x_tot=None):
    """Intensity-normalized lower/upper bounds on a tally observed with intensity ``k``.

    ``x_tot`` is the count entering the half-width (the basis-pair total over
    both intensities); it defaults to ``x``. The lower bound is clamped at 0.
    """
    if x_tot is None:
        x_tot = x
    scale = np.exp(np.asarray(k, dtype=float)) / p_k
    delta = hoeffding_halfwidth(x_tot, eps)
    lower = np.maximum(scale * (x - delta), 0.0)
    upper = scale * (x + delta)
    return lower, upper


def decoy_bounds(t: TallyTable, basis_pair: str, pp: ProtocolParams, eb: EpsilonBudget = EpsilonBudget()) -> DecoyBounds:
    """Vacuum, single-photon and single-photon-error bounds for one basis pair.

    When the single-photon lower bound collapses to zero the error-rate bound
    is reported as 0.5 rather than raising.
    """
    check_basis_pair(basis_pair)
    mu = np.asarray(pp.mu, dtype=float)
    nu = np.asarray(pp.nu, dtype=float)
    if np.any(mu - nu < MIN_DECOY_GAP):
        raise ValueError("degenerate decoy: mu - nu below 1e-6")
    p_mu, p_nu = pp.p_mu, pp.p_nu
    tau0, tau1 = tau(0, pp), tau(1, pp)

    n_mu, n_nu = t.n[basis_pair, "mu"], t.n[basis_pair, "nu"]
    m_mu, m_nu = t.m[basis_pair, "mu"], t.m[basis_pair, "nu"]
    n_tot, m_tot = n_mu + n_nu, m_mu + m_nu

    _, n_mu_up = hoeffding_bounds(n_mu, mu, p_mu, eb.eps_1, n_tot)
    n_nu_lo, _ = hoeffding_bounds(n_nu, nu, p_nu, eb.eps_1, n_tot)
    _, m_mu_up = hoeffding_bounds(m_mu, mu, p_mu, eb.eps_2, m_tot)
    m_nu_lo, _ = hoeffding_bounds(m_nu, nu, p_nu, eb.eps_2, m_tot)

    s0_lower = np.maximum(tau0 / (mu - nu) * (mu * n_nu_lo - nu * n_mu_up), S0_FLOOR)

    # second branch evaluated at the weaker (decoy) intensity
    d_n = hoeffding_halfwidth(n_tot, eb.eps_1)
    d_m = hoeffding_halfwidth(m_tot, eb.eps_2)
    s0_upper = np.minimum(
        2 * (m_tot + d_n),
        2 * tau0 * np.exp(nu) / p_nu * (m_nu + d_m) + 2 * d_n,
    )
    s0_upper = np.maximum(s0_upper, s0_lower)

    s1_lower = tau1 * mu / (nu * (mu - nu)) * (
        n_nu_lo - nu**2 / mu**2 * n_mu_up - (mu**2 - nu**2) / mu**2 * s0_upper / tau0
    )
    s1_lower = np.maximum(s1_lower, 0.0)

    m1_upper = np.maximum(tau1 / (mu - nu) * (m_mu_up - m_nu_lo), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(s1_lower > 0, m1_upper / np.where(s1_lower > 0, s1_lower, 1.0), 0.5)
    e1_upper = np.clip(ratio, 0.0, 0.5)

    return DecoyBounds(_out(s0_lower), _out(s0_upper), _out(s1_lower), _out(m1_upper), _out(e1_upper))


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def asymptotic_e1_upper(ch: ChannelParams, pp: ProtocolParams, basis_pair: str) -> float:
    """Infinite-data limit of the decoy error-rate bound, built from the model gains.

    Computed per sent pulse directly from gains and QBERs, without going
    through a tally table, so it can serve as a check of :func:`decoy_bounds`.
    """
    mu, nu, p_mu, p_nu = pp.mu, pp.nu, pp.p_mu, pp.p_nu
    tau0, tau1 = tau(0, pp), tau(1, pp)
    q = {k: gain(ch, basis_pair, x) for k, x in (("mu", mu), ("nu", nu))}
    e = {k: qber(ch, basis_pair, x) for k, x in (("mu", mu), ("nu", nu))}
    s0_up = min(2 * (p_mu * q["mu"] * e["mu"] + p_nu * q["nu"] * e["nu"]),
                2 * tau0 * math.exp(nu) * q["nu"] * e["nu"])
    s1_lo = tau1 * mu / (nu * (mu - nu)) * (
        math.exp(nu) * q["nu"] - nu**2 / mu**2 * math.exp(mu) * q["mu"]
        - (mu**2 - nu**2) / mu**2 * s0_up / tau0
    )
    m1_up = tau1 / (mu - nu) * (math.exp(mu) * q["mu"] * e["mu"] - math.exp(nu) * q["nu"] * e["nu"])
    if s1_lo <= 0:
        return 0.5
    return float(min(max(m1_up / s1_lo, 0.0), 0.5))
