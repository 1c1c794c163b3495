"""Analytic forward model of a decoy-state RFI-QKD link.

Maps channel and operating parameters to per-detector click probabilities,
gains, QBERs and the expected detection tallies for the five sifted basis
pairs. Every function broadcasts over numpy arrays in the intensity and
protocol arguments so the optimizer can evaluate whole populations at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

BASIS_PAIRS = ("ZZ", "XX", "XY", "YX", "YY")
PHASE_PAIRS = ("XX", "XY", "YX", "YY")
INTENSITIES = ("mu", "nu")


def check_basis_pair(basis_pair: str) -> None:
    if basis_pair not in BASIS_PAIRS:
        raise ValueError(f"unknown basis pair {basis_pair!r}; expected one of {BASIS_PAIRS}")


@dataclass(frozen=True)
class ChannelParams:
    """Physical description of the link.

    ``e_d_z`` and ``e_d_xy`` are the optical intrinsic error rates of the
    key basis and of the phase bases; ``theta`` is the X/Y reference-frame
    rotation in radians.
    """

    eta_d: float = 0.7
    p_d: float = 1e-8
    e_d_z: float = 0.007
    e_d_xy: float = 0.014
    loss_db: float = 0.0
    theta: float = math.pi / 9

    def __post_init__(self):
        if not 0.0 <= self.eta_d <= 1.0:
            raise ValueError(f"eta_d must lie in [0, 1], got {self.eta_d}")
        if not 0.0 <= self.p_d < 1.0:
            raise ValueError(f"p_d must lie in [0, 1), got {self.p_d}")
        for name in ("e_d_z", "e_d_xy"):
            value = getattr(self, name)
            if not 0.0 <= value <= 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5], got {value}")
        if not (self.loss_db >= 0.0 and math.isfinite(self.loss_db)):
            raise ValueError(f"loss_db must be finite and >= 0, got {self.loss_db}")
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")

    def intrinsic_error(self, basis_pair: str) -> float:
        return self.e_d_z if basis_pair == "ZZ" else self.e_d_xy

    def with_loss(self, loss_db: float) -> "ChannelParams":
        return ChannelParams(self.eta_d, self.p_d, self.e_d_z, self.e_d_xy, loss_db, self.theta)


@dataclass(frozen=True)
class ProtocolParams:
    """Operating parameters chosen by the users.

    Fields may be scalars or equally shaped arrays (one entry per candidate).
    Basis probabilities are shared by Alice's preparation and Bob's
    measurement.
    """

    mu: float
    nu: float
    p_mu: float
    p_nu: float
    p_z: float
    p_x: float
    p_y: float

    def __post_init__(self):
        mu, nu = np.asarray(self.mu), np.asarray(self.nu)
        if np.any(nu <= 0) or np.any(mu <= 0):
            raise ValueError("intensities must be positive")
        if np.any(nu >= mu):
            raise ValueError("decoy intensity nu must be strictly below signal intensity mu")
        probs = [np.asarray(getattr(self, n)) for n in ("p_mu", "p_nu", "p_z", "p_x", "p_y")]
        if any(np.any((p <= 0) | (p >= 1)) for p in probs):
            raise ValueError("all probabilities must lie in (0, 1)")
        if np.any(np.abs(probs[0] + probs[1] - 1) > 1e-9):
            raise ValueError("p_mu + p_nu must equal 1")
        if np.any(np.abs(probs[2] + probs[3] + probs[4] - 1) > 1e-9):
            raise ValueError("p_z + p_x + p_y must equal 1")

    @classmethod
    def symmetric(cls, mu, nu, p_mu, p_z) -> "ProtocolParams":
        """Build parameters with ``p_x == p_y`` and ``p_nu = 1 - p_mu``."""
        p_x = (1 - np.asarray(p_z, dtype=float)) / 2
        return cls(mu, nu, p_mu, 1 - np.asarray(p_mu, dtype=float), p_z, p_x, p_x)

    def intensity(self, k: str):
        return self.mu if k == "mu" else self.nu

    def intensity_prob(self, k: str):
        return self.p_mu if k == "mu" else self.p_nu

    def basis_prob(self, basis: str):
        return {"Z": self.p_z, "X": self.p_x, "Y": self.p_y}[basis]

    def as_dict(self) -> dict:
        return {n: float(getattr(self, n)) for n in ("mu", "nu", "p_mu", "p_nu", "p_z", "p_x", "p_y")}


@dataclass(frozen=True)
class SessionParams:
    n_tot: float = 8.1e11
    rep_rate_hz: float = 150e6

    def __post_init__(self):
        if not self.n_tot >= 1:
            raise ValueError(f"n_tot must be >= 1, got {self.n_tot}")
        if not self.rep_rate_hz > 0:
            raise ValueError(f"rep_rate_hz must be positive, got {self.rep_rate_hz}")


def _zero_counts() -> dict:
    return {(b, k): 0.0 for b in BASIS_PAIRS for k in INTENSITIES}


@dataclass
class TallyTable:
    """Detection counts ``n`` and error counts ``m`` keyed by (basis pair, intensity)."""

    n: dict = field(default_factory=_zero_counts)
    m: dict = field(default_factory=_zero_counts)

    def __post_init__(self):
        keys = set(_zero_counts())
        if set(self.n) != keys or set(self.m) != keys:
            raise ValueError("tally table must contain exactly the keys (pair, intensity) for "
                             f"pairs {BASIS_PAIRS} and intensities {INTENSITIES}")
        for key in keys:
            n, m = np.asarray(self.n[key]), np.asarray(self.m[key])
            if np.any(m < 0) or np.any(n < 0):
                raise ValueError(f"negative count at {key}")
            if np.any(m > n):
                raise ValueError(f"error count exceeds detection count at {key}: m={m}, n={n}")

    def keys(self) -> Iterator[tuple[str, str]]:
        return iter(self.n)

    def n_total(self, basis_pair: str):
        return self.n[basis_pair, "mu"] + self.n[basis_pair, "nu"]

    def m_total(self, basis_pair: str):
        return self.m[basis_pair, "mu"] + self.m[basis_pair, "nu"]

    def qber(self, basis_pair: str):
        """Error ratio pooled over both intensities."""
        return self.m_total(basis_pair) / self.n_total(basis_pair)

    def scaled(self, factor: float) -> "TallyTable":
        return TallyTable({k: v * factor for k, v in self.n.items()},
                          {k: v * factor for k, v in self.m.items()})

    def is_integral(self) -> bool:
        return all(float(v).is_integer() for d in (self.n, self.m) for v in d.values())

    def __eq__(self, other):
        if not isinstance(other, TallyTable):
            return NotImplemented
        return all(np.array_equal(self.n[k], other.n[k]) and np.array_equal(self.m[k], other.m[k])
                   for k in self.n)


def transmittance(ch: ChannelParams) -> float:
    """Overall transmission efficiency including the detector."""
    return ch.eta_d * 10.0 ** (-ch.loss_db / 10.0)


def detector_fractions(basis_pair: str, theta: float) -> tuple[float, float, float, float]:
    """Fraction of the arriving light routed to each (prepared bit, detector) outcome.

    Returned in the order (0->0, 0->1, 1->0, 1->1).
    """
    check_basis_pair(basis_pair)
    if basis_pair == "ZZ":
        same, cross = 1.0, 0.0
    elif basis_pair in ("XX", "YY"):
        same, cross = (1 + math.cos(theta)) / 2, (1 - math.cos(theta)) / 2
    elif basis_pair == "XY":
        same, cross = (1 - math.sin(theta)) / 2, (1 + math.sin(theta)) / 2
    else:
        same, cross = (1 + math.sin(theta)) / 2, (1 - math.sin(theta)) / 2
    return same, cross, cross, same


def _click(k, eta: float, p_d: float, fraction: float):
    # (1-p_d) e^{-k eta} (e^{k eta a} + p_d - 1), written with expm1 for small k*eta
    x = np.asarray(k, dtype=float) * eta
    return (1 - p_d) * np.exp(-x) * (np.expm1(x * fraction) + p_d)


def pair_probabilities(ch: ChannelParams, basis_pair: str, k):
    """Probabilities that Bob registers outcome j given Alice sent bit i, ordered
    (P00, P01, P10, P11), for pulses of mean photon number ``k``."""
    fractions = detector_fractions(basis_pair, ch.theta)
    eta = transmittance(ch)
    return tuple(_click(k, eta, ch.p_d, a) for a in fractions)


def gain(ch: ChannelParams, basis_pair: str, k):
    """Detection probability per pulse, averaged over Alice's two bit values."""
    right, wrong = _split(pair_probabilities(ch, basis_pair, k))
    return (right + wrong) / 2


def gain_closed_form(ch: ChannelParams, basis_pair: str, k):
    """Gain from the collapsed expressions; independent of :func:`pair_probabilities`."""
    check_basis_pair(basis_pair)
    x = np.asarray(k, dtype=float) * transmittance(ch)
    pre = np.exp(-x) * (1 - ch.p_d)
    if basis_pair == "ZZ":
        return pre * (np.expm1(x) + 2 * ch.p_d)
    if basis_pair in ("XX", "YY"):
        c = math.cos(ch.theta)
    else:
        c = math.sin(ch.theta)
    return pre * (np.expm1(x * (1 + c) / 2) + np.expm1(x * (1 - c) / 2) + 2 * ch.p_d)


def _safe_ratio(num, den):
    num, den = np.asarray(num, dtype=float), np.asarray(den, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def _split(probs):
    p00, p01, p10, p11 = probs
    return p00 + p11, p01 + p10


def _folded_error(right, wrong):
    # min(e, 1-e) taken before e_d is applied; the min{} rule is unchanged since
    # e_d(1-2e)+e maps e -> 1-e onto its complement, and the fold makes mirrored
    # pairs (XY/YX) bitwise identical
    return _safe_ratio(np.minimum(right, wrong), right + wrong)


def _apply_intrinsic(e, e_d):
    e_tilde = e_d * (1 - 2 * e) + e
    return np.minimum(e_tilde, 1 - e_tilde)


def flipped_pairs(ch: ChannelParams, k) -> dict:
    """Whether the pre-flip error rate exceeds 1/2 (the parties then relabel that pair)."""
    out = {}
    for b in BASIS_PAIRS:
        p00, p01, p10, p11 = pair_probabilities(ch, b, k)
        e = _safe_ratio(p01 + p10, p00 + p01 + p10 + p11)
        out[b] = ch.intrinsic_error(b) * (1 - 2 * e) + e > 0.5
    return out


def qber(ch: ChannelParams, basis_pair: str, k):
    """Observed error rate E including the intrinsic optical error, folded to <= 1/2.

    Raises ZeroDivisionError when the gain vanishes.
    """
    right, wrong = _split(pair_probabilities(ch, basis_pair, k))
    if np.any(np.asarray(right + wrong) == 0):
        raise ZeroDivisionError(f"zero gain in {basis_pair}: QBER undefined")
    return _apply_intrinsic(_folded_error(right, wrong), ch.intrinsic_error(basis_pair))


def expected_tallies(ch: ChannelParams, pp: ProtocolParams, sess: SessionParams | float) -> TallyTable:
    """Expected n and m for every tallied (pair, intensity).

    ``sess`` may be a bare pulse count; mixed-basis events are sifted out
    and never tallied.
    """
    n_tot = sess.n_tot if isinstance(sess, SessionParams) else float(sess)
    n, m = {}, {}
    for b in BASIS_PAIRS:
        p_basis = pp.basis_prob(b[0]) * pp.basis_prob(b[1])
        for k in INTENSITIES:
            right, wrong = _split(pair_probabilities(ch, b, pp.intensity(k)))
            q = (right + wrong) / 2
            e = _apply_intrinsic(_folded_error(right, wrong), ch.intrinsic_error(b))
            n[b, k] = n_tot * p_basis * pp.intensity_prob(k) * q
            m[b, k] = n[b, k] * e
    return TallyTable(n, m)


def photon_yields(ch: ChannelParams, basis_pair: str, photons: int) -> tuple[float, float, float, float]:
    """Click probabilities for an exact ``photons``-photon input, ordered like
    :func:`pair_probabilities`.

    Obtained from the Poisson expansion of the coherent-state expressions, so
    that sum_n e^{-k} k^n / n! * y_n reproduces the pair probabilities.
    """
    eta = transmittance(ch)
    p_d = ch.p_d
    # (1-eta(1-a))^n - (1-p_d)(1-eta)^n, factored to avoid cancellation at small eta
    lost = (1 - eta) ** photons
    return tuple(
        (1 - p_d) * lost * (math.expm1(photons * math.log1p(eta * a / (1 - eta))) + p_d)
        if eta < 1 else (1 - p_d) * ((1 - eta * (1 - a)) ** photons - (1 - p_d) * lost)
        for a in detector_fractions(basis_pair, ch.theta)
    )


def single_photon_error_rate(ch: ChannelParams, basis_pair: str) -> float:
    """True single-photon error rate of the model, the quantity the decoy bounds estimate."""
    y00, y01, y10, y11 = photon_yields(ch, basis_pair, 1)
    e = (y01 + y10) / (y00 + y01 + y10 + y11)
    return float(_apply_intrinsic(e, ch.intrinsic_error(basis_pair)))
