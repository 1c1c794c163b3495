"""Monte Carlo session simulator used as a stochastic oracle for the analytic model.

Each pulse draws an intensity, Alice's basis and bit, and Bob's basis. For
the five tallied basis pairs the two detectors click as independent
Bernoulli trials with the pair probabilities of the forward model; every
click adds one detection, clicks on the wrong detector add one error, and
each click's classification is then flipped with the intrinsic error
probability. Under this convention the expected tallies coincide with
:func:`rfiqkd.statmodel.expected_tallies`.

Pulses are processed in fixed-size batches, each with its own RNG stream
derived from ``(seed, batch index)``, so the result does not depend on how
many workers are used.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .finitekey import EpsilonBudget
from .security import DEFAULT_F, SecurityResult, analyze
from .statmodel import (
    BASIS_PAIRS,
    INTENSITIES,
    ChannelParams,
    ProtocolParams,
    SessionParams,
    TallyTable,
    flipped_pairs,
    pair_probabilities,
)

AGGREGATE_BATCH = 10**9
PULSE_BATCH = 2**20
_BASES = ("Z", "X", "Y")


@dataclass(frozen=True)
class SimConfig:
    seed: int
    pulses: int
    ch: ChannelParams
    pp: ProtocolParams

    def __post_init__(self):
        if int(self.pulses) != self.pulses or self.pulses < 1:
            raise ValueError(f"pulses must be a positive integer, got {self.pulses}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed}")


def _batch_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _batches(pulses: int, size: int):
    start, index = 0, 0
    while start < pulses:
        count = min(size, pulses - start)
        yield index, count
        start += count
        index += 1


def _click_table(cfg: SimConfig) -> dict:
    """(pair, intensity) -> ((P_correct, P_wrong) for bit 0, same for bit 1)."""
    table = {}
    for b in BASIS_PAIRS:
        for k in INTENSITIES:
            p00, p01, p10, p11 = (float(p) for p in pair_probabilities(cfg.ch, b, cfg.pp.intensity(k)))
            table[b, k] = ((p00, p01), (p11, p10))
    return table


def _aggregate_batch(cfg: SimConfig, index: int, count: int, clicks: dict) -> np.ndarray:
    # Multinomial cell counts followed by binomial click counts are equal in
    # distribution to drawing every pulse individually.
    rng = _batch_rng(cfg.seed, index)
    pp = cfg.pp
    cells, probs = [], []
    for k in INTENSITIES:
        for a in _BASES:
            for b in _BASES:
                for bit in (0, 1):
                    cells.append((a + b, k, bit))
                    probs.append(pp.intensity_prob(k) * pp.basis_prob(a) * pp.basis_prob(b) / 2)
    probs = np.asarray(probs, dtype=float)
    counts = rng.multinomial(count, probs / probs.sum())
    out = np.zeros((len(BASIS_PAIRS), len(INTENSITIES), 2))
    for (pair, k, bit), n_cell in zip(cells, counts):
        if pair not in BASIS_PAIRS:
            continue
        p_right, p_wrong = clicks[pair, k][bit]
        e_d = cfg.ch.intrinsic_error(pair)
        right = rng.binomial(n_cell, p_right)
        wrong = rng.binomial(n_cell, p_wrong)
        errors = rng.binomial(right, e_d) + rng.binomial(wrong, 1 - e_d)
        out[BASIS_PAIRS.index(pair), INTENSITIES.index(k)] += (right + wrong, errors)
    return out


def _pulse_batch(cfg: SimConfig, index: int, count: int, clicks: dict) -> np.ndarray:
    rng = _batch_rng(cfg.seed, index)
    pp = cfg.pp
    basis_p = [pp.p_z, pp.p_x, pp.p_y]
    is_signal = rng.random(count) < pp.p_mu
    alice = rng.choice(3, size=count, p=basis_p)
    bob = rng.choice(3, size=count, p=basis_p)
    bit = rng.integers(0, 2, size=count)
    u_right, u_wrong = rng.random(count), rng.random(count)
    f_right, f_wrong = rng.random(count), rng.random(count)

    out = np.zeros((len(BASIS_PAIRS), len(INTENSITIES), 2))
    for i, pair in enumerate(BASIS_PAIRS):
        in_pair = (alice == _BASES.index(pair[0])) & (bob == _BASES.index(pair[1]))
        e_d = cfg.ch.intrinsic_error(pair)
        for j, k in enumerate(INTENSITIES):
            sel = in_pair & (is_signal if k == "mu" else ~is_signal)
            (r0, w0), (r1, w1) = clicks[pair, k]
            p_right = np.where(bit[sel] == 0, r0, r1)
            p_wrong = np.where(bit[sel] == 0, w0, w1)
            right = u_right[sel] < p_right
            wrong = u_wrong[sel] < p_wrong
            errors = (right & (f_right[sel] < e_d)).sum() + (wrong & (f_wrong[sel] >= e_d)).sum()
            out[i, j] += (right.sum() + wrong.sum(), errors)
    return out


def simulate_session(cfg: SimConfig, *, method: str = "aggregate", workers: int = 1) -> TallyTable:
    """Sample an integer-valued tally table for ``cfg.pulses`` pulses.

    ``method="pulse"`` draws every pulse explicitly (slow, for cross-checks);
    the default draws equivalent multinomial/binomial counts per batch.
    """
    if method == "aggregate":
        batch_fn, size = _aggregate_batch, AGGREGATE_BATCH
    elif method == "pulse":
        batch_fn, size = _pulse_batch, PULSE_BATCH
    else:
        raise ValueError(f"unknown method {method!r}")
    clicks = _click_table(cfg)
    jobs = list(_batches(int(cfg.pulses), size))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: batch_fn(cfg, job[0], job[1], clicks), jobs))
    else:
        parts = [batch_fn(cfg, i, c, clicks) for i, c in jobs]
    total = np.sum(parts, axis=0)

    # pairs whose raw error rate exceeds 1/2 are relabelled by the parties
    n, m = {}, {}
    for i, b in enumerate(BASIS_PAIRS):
        for j, k in enumerate(INTENSITIES):
            det, err = total[i, j]
            if flipped_pairs(cfg.ch, cfg.pp.intensity(k))[b]:
                err = det - err
            n[b, k], m[b, k] = float(det), float(err)
    return TallyTable(n, m)


def session_skr(
    tallies: TallyTable,
    cfg: SimConfig,
    eb: EpsilonBudget = EpsilonBudget(),
    f: float = DEFAULT_F,
    rep_rate_hz: float = 150e6,
) -> SecurityResult:
    """Finite-key analysis of tallies collected over ``cfg.pulses`` pulses.

    A session without key-basis detections yields a zero rate.
    """
    sess = SessionParams(n_tot=cfg.pulses, rep_rate_hz=rep_rate_hz)
    return analyze(tallies, cfg.pp, sess, eb, f, strict=False)


def end_to_end_skr(
    cfg: SimConfig,
    eb: EpsilonBudget = EpsilonBudget(),
    f: float = DEFAULT_F,
    rep_rate_hz: float = 150e6,
    *,
    workers: int = 1,
) -> SecurityResult:
    """Simulate a session and push its tallies through the finite-key analysis."""
    return session_skr(simulate_session(cfg, workers=workers), cfg, eb, f, rep_rate_hz)
