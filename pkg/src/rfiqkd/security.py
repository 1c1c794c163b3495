"""RFI security core: the rotation-invariant quantity C, Eve's information,
the finite-key secret key rate and misalignment-angle estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .finitekey import DecoyBounds, EpsilonBudget, decoy_bounds
from .statmodel import (
    PHASE_PAIRS,
    ChannelParams,
    ProtocolParams,
    SessionParams,
    TallyTable,
    single_photon_error_rate,
)

DEFAULT_F = 1.16


@dataclass
class SecurityResult:
    c_value: float
    e_zz_1u: float
    u_value: float
    v_value: float
    i_e_upper: float
    skr_per_pulse: float
    skr_bits_per_second: float
    e_zz: float = float("nan")
    n_zz: float = float("nan")
    s0_lower: float = float("nan")
    s1_lower: float = float("nan")
    e1_upper: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {k: float(v) for k, v in self.__dict__.items() if k != "e1_upper"}
        out["e1_upper"] = {k: float(v) for k, v in self.e1_upper.items()}
        return out


def binary_entropy(x):
    """Shannon entropy of a Bernoulli(x) variable in bits, with 0 log 0 = 0."""
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError(f"binary entropy needs 0 <= x <= 1, got {x}")
    return _h(arr)


def _h(x):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    inner = (x > 0) & (x < 1)
    safe = np.where(inner, x, 0.5)
    val = -safe * np.log2(safe) - (1 - safe) * np.log2(1 - safe)
    out = np.where(inner, val, 0.0)
    return float(out) if out.ndim == 0 else out


def c_quantity(e1u) -> float:
    """Sum of the squared phase-basis correlators from the four error bounds
    (XX, XY, YX, YY)."""
    return sum((1 - 2 * np.asarray(e, dtype=float)) ** 2 for e in e1u)


def eve_information(e_zz_1u, c):
    """Return ``(u, v, I_E)``.

    ``v`` is taken as 0 when ``e_zz_1u`` is 0 or the radicand is negative, and
    capped at 1 so the entropy argument stays a probability.
    """
    e = np.asarray(e_zz_1u, dtype=float)
    c = np.asarray(c, dtype=float)
    root = np.sqrt(np.maximum(c, 0.0) / 2)
    u = np.minimum(root / (1 - e), 1.0)
    radicand = np.maximum(c / 2 - (1 - e) ** 2 * u**2, 0.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        v = np.where(e > 0, np.sqrt(radicand) / np.where(e > 0, e, 1.0), 0.0)
    v = np.minimum(v, 1.0)
    i_e = (1 - e) * _h((1 + u) / 2) + e * _h((1 + v) / 2)
    i_e = np.clip(i_e, 0.0, 1.0)
    return _scalar(u), _scalar(v), _scalar(i_e)


def _scalar(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _finite_key_penalty(eb: EpsilonBudget) -> float:
    return eb.a * math.log2(eb.b / eb.eps_sec) + math.log2(2 / eb.eps_cor)


def secret_key_rate(
    t: TallyTable,
    bounds_zz: DecoyBounds,
    c_value,
    sess: SessionParams,
    eb: EpsilonBudget = EpsilonBudget(),
    f: float = DEFAULT_F,
    *,
    strict: bool = True,
) -> SecurityResult:
    """Finite-key secret key rate from the key-basis tallies and decoy bounds.

    The rate is clamped at zero. With ``strict`` an empty key basis raises
    ``ValueError``; otherwise such entries yield a zero rate.
    """
    n_zz = np.asarray(t.n_total("ZZ"), dtype=float)
    if strict and np.any(n_zz <= 0):
        raise ValueError("no key-basis detections: secret key rate undefined")
    with np.errstate(divide="ignore", invalid="ignore"):
        e_zz = np.where(n_zz > 0, t.m_total("ZZ") / np.where(n_zz > 0, n_zz, 1.0), 0.5)
    u, v, i_e = eve_information(bounds_zz.e1_upper, c_value)
    key_bits = (
        bounds_zz.s0_lower
        + bounds_zz.s1_lower * (1 - i_e)
        - n_zz * f * _h(e_zz)
        - _finite_key_penalty(eb)
    )
    rate = np.where(n_zz > 0, np.maximum(key_bits / sess.n_tot, 0.0), 0.0)
    return SecurityResult(
        c_value=_scalar(c_value),
        e_zz_1u=_scalar(bounds_zz.e1_upper),
        u_value=u,
        v_value=v,
        i_e_upper=i_e,
        skr_per_pulse=_scalar(rate),
        skr_bits_per_second=_scalar(rate * sess.rep_rate_hz),
        e_zz=_scalar(e_zz),
        n_zz=_scalar(n_zz),
        s0_lower=_scalar(bounds_zz.s0_lower),
        s1_lower=_scalar(bounds_zz.s1_lower),
    )


def analyze(
    t: TallyTable,
    pp: ProtocolParams,
    sess: SessionParams,
    eb: EpsilonBudget = EpsilonBudget(),
    f: float = DEFAULT_F,
    *,
    strict: bool = True,
) -> SecurityResult:
    """Full finite-key pipeline: decoy bounds on all five pairs, C, key rate."""
    bounds = {b: decoy_bounds(t, b, pp, eb) for b in ("ZZ",) + PHASE_PAIRS}
    c_value = c_quantity([bounds[b].e1_upper for b in PHASE_PAIRS])
    result = secret_key_rate(t, bounds["ZZ"], c_value, sess, eb, f, strict=strict)
    result.e1_upper = {b: bounds[b].e1_upper for b in bounds}
    return result


def asymptotic_c(ch: ChannelParams) -> float:
    """C evaluated with the model's true single-photon error rates."""
    return float(c_quantity([single_photon_error_rate(ch, b) for b in PHASE_PAIRS]))


def estimate_theta(e_xx_mu: float) -> float:
    """Misalignment angle from the signal-state X-basis QBER.

    Valid in the weak-pulse regime (mu*eta << 1) with dark counts well
    below mu*eta.
    """
    if not 0.0 <= e_xx_mu <= 0.5:
        raise ValueError(f"E_XX must lie in [0, 0.5], got {e_xx_mu}")
    return math.acos(1 - 2 * e_xx_mu)
