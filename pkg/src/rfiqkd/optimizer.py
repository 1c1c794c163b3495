"""Search for the operating parameters that maximize the finite-key rate.

A real-coded genetic algorithm (tournament selection, uniform crossover,
Gaussian mutation, elitism) with a repair step that projects every child
onto the constraint set, and an exhaustive grid search used to validate it.

Genes are ``(mu, nu, p_mu, p_z, p_x)``; ``p_nu = 1 - p_mu`` and
``p_y = p_x`` are implied, and both parties use the same basis
probabilities.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .finitekey import EpsilonBudget
from .security import DEFAULT_F, SecurityResult, analyze
from .statmodel import ChannelParams, ProtocolParams, SessionParams, expected_tallies

GENES = ("mu", "nu", "p_mu", "p_z", "p_x")
_SIMPLEX_TOL = 1e-12


class InfeasibleLinkError(RuntimeError):
    """No candidate in the search space yields a positive key rate."""


@dataclass(frozen=True)
class SearchSpace:
    mu_range: tuple[float, float] = (0.05, 1.0)
    nu_range: tuple[float, float] = (0.001, 0.5)
    min_gap: float = 0.01
    prob_floor: float = 0.01
    p_mu_range: tuple[float, float] | None = None
    p_z_range: tuple[float, float] | None = None

    def __post_init__(self):
        for name in ("mu_range", "nu_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi <= 1:
                raise ValueError(f"{name} must satisfy 0 < lo <= hi <= 1, got {(lo, hi)}")
        if self.min_gap <= 0:
            raise ValueError("min_gap must be positive")
        if self.mu_range[0] <= self.min_gap:
            raise ValueError("mu_range lower end must exceed min_gap")
        if not 0 < self.prob_floor < 1 / 3:
            raise ValueError("prob_floor must lie in (0, 1/3)")
        for name, (lo, hi) in (("p_mu_range", self.p_mu_bounds), ("p_z_range", self.p_z_bounds)):
            if not 0 < lo <= hi < 1:
                raise ValueError(f"{name} must lie inside (0, 1), got {(lo, hi)}")

    @property
    def p_mu_bounds(self) -> tuple[float, float]:
        return self.p_mu_range or (self.prob_floor, 1 - self.prob_floor)

    @property
    def p_z_bounds(self) -> tuple[float, float]:
        return self.p_z_range or (self.prob_floor, 1 - 2 * self.prob_floor)

    def gene_bounds(self) -> np.ndarray:
        p_z_lo, p_z_hi = self.p_z_bounds
        return np.array([
            self.mu_range,
            self.nu_range,
            self.p_mu_bounds,
            (p_z_lo, p_z_hi),
            ((1 - p_z_hi) / 2, (1 - p_z_lo) / 2),
        ], dtype=float)


@dataclass(frozen=True)
class GAConfig:
    population: int = 64
    generations: int = 200
    tournament_size: int = 4
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    mutation_sigma: float = 0.05
    seed: int = 0
    elitism: int = 2

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if not 1 <= self.tournament_size <= self.population:
            raise ValueError("tournament_size must lie in [1, population]")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mutation_sigma < 0:
            raise ValueError("mutation_sigma must be >= 0")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must lie in [0, population)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class Candidate:
    mu: float
    nu: float
    p_mu: float
    p_z: float
    p_x: float
    fitness: float = float("nan")

    @classmethod
    def from_genes(cls, genes, fitness=float("nan")) -> "Candidate":
        return cls(*(float(g) for g in genes), fitness=float(fitness))

    @classmethod
    def from_protocol(cls, pp: ProtocolParams) -> "Candidate":
        return cls(float(pp.mu), float(pp.nu), float(pp.p_mu), float(pp.p_z), float(pp.p_x))

    def genes(self) -> np.ndarray:
        return np.array([self.mu, self.nu, self.p_mu, self.p_z, self.p_x], dtype=float)

    def to_protocol(self) -> ProtocolParams:
        return _protocol(self.genes()[None, :], scalar=True)


def _protocol(genes: np.ndarray, scalar: bool = False) -> ProtocolParams:
    mu, nu, p_mu, p_z, p_x = (genes[:, i] for i in range(5))
    if scalar:
        mu, nu, p_mu, p_z, p_x = (float(v[0]) for v in (mu, nu, p_mu, p_z, p_x))
    return ProtocolParams(mu, nu, p_mu, 1 - p_mu, p_z, p_x, p_x)


def repair(genes, space: SearchSpace) -> np.ndarray:
    """Project candidates onto the feasible set.

    Intensities are clipped to their ranges and the decoy is lowered until
    ``mu - nu >= min_gap``; the basis simplex is renormalized with
    ``p_y = p_x`` and clipped to the probability floor. Feasible input is
    returned unchanged.
    """
    g = np.array(genes, dtype=float, copy=True)
    squeeze = g.ndim == 1
    g = np.atleast_2d(g)
    mu = np.clip(g[:, 0], *space.mu_range)
    nu = np.clip(g[:, 1], *space.nu_range)
    nu = np.where(mu - nu < space.min_gap - _SIMPLEX_TOL, mu - space.min_gap, nu)
    p_mu = np.clip(g[:, 2], *space.p_mu_bounds)

    p_z = np.maximum(g[:, 3], _SIMPLEX_TOL)
    p_x = np.maximum(g[:, 4], _SIMPLEX_TOL)
    total = p_z + 2 * p_x
    off = np.abs(total - 1) > _SIMPLEX_TOL
    p_z = np.where(off, p_z / total, p_z)
    p_x = np.where(off, p_x / total, p_x)
    clipped = np.clip(p_z, *space.p_z_bounds)
    p_x = np.where(clipped != p_z, (1 - clipped) / 2, p_x)

    out = np.column_stack([mu, nu, p_mu, clipped, p_x])
    return out[0] if squeeze else out


def fitness_batch(genes, ch: ChannelParams, sess: SessionParams, eb: EpsilonBudget = EpsilonBudget(), f: float = DEFAULT_F) -> np.ndarray:
    """Key rate in bit/s for each row of an already repaired gene matrix."""
    genes = np.atleast_2d(np.asarray(genes, dtype=float))
    pp = _protocol(genes)
    with np.errstate(all="ignore"):
        res = analyze(expected_tallies(ch, pp, sess), pp, sess, eb, f, strict=False)
    return np.nan_to_num(np.atleast_1d(np.asarray(res.skr_bits_per_second, dtype=float)), nan=0.0)


def fitness(c: Candidate, ch: ChannelParams, sess: SessionParams, eb: EpsilonBudget = EpsilonBudget(), f: float = DEFAULT_F) -> float:
    """Key rate in bit/s of one candidate; invalid candidates score 0."""
    try:
        return float(fitness_batch(c.genes(), ch, sess, eb, f)[0])
    except ValueError:
        return 0.0


def _evaluate(genes, ch, sess, eb, f, workers: int) -> np.ndarray:
    if workers <= 1 or len(genes) < 2 * workers:
        return fitness_batch(genes, ch, sess, eb, f)
    chunks = np.array_split(genes, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda g: fitness_batch(g, ch, sess, eb, f), chunks))
    return np.concatenate(parts)


def _finish(genes: np.ndarray, fit: float, ch, sess, eb, f) -> tuple[ProtocolParams, SecurityResult]:
    if not fit > 0:
        raise InfeasibleLinkError("no candidate yields a positive secret key rate")
    pp = _protocol(genes[None, :], scalar=True)
    return pp, analyze(expected_tallies(ch, pp, sess), pp, sess, eb, f)


def _stream(seed: int, generation: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, generation, index]))


def optimize(
    ch: ChannelParams,
    sess: SessionParams,
    eb: EpsilonBudget = EpsilonBudget(),
    f: float = DEFAULT_F,
    space: SearchSpace = SearchSpace(),
    cfg: GAConfig = GAConfig(),
    *,
    initial=(),
    history: list | None = None,
    workers: int = 1,
) -> tuple[ProtocolParams, SecurityResult]:
    """Genetic-algorithm maximization of the key rate over ``space``.

    ``initial`` candidates (Candidate or ProtocolParams) seed the first
    population. When ``history`` is given, the best fitness of every
    generation is appended to it. Results depend only on ``cfg`` and the
    inputs, never on ``workers``.
    """
    bounds = space.gene_bounds()
    lo, width = bounds[:, 0], bounds[:, 1] - bounds[:, 0]
    sigma = cfg.mutation_sigma * width

    seeds = [c if isinstance(c, Candidate) else Candidate.from_protocol(c) for c in initial]
    pop = np.empty((cfg.population, len(GENES)))
    for i in range(cfg.population):
        if i < len(seeds):
            pop[i] = seeds[i].genes()
        else:
            pop[i] = lo + width * _stream(cfg.seed, 0, i).random(len(GENES))
    pop = repair(pop, space)
    fit = _evaluate(pop, ch, sess, eb, f, workers)
    if history is not None:
        history.append(float(fit.max()))

    n_children = cfg.population - cfg.elitism
    for gen in range(1, cfg.generations + 1):
        order = np.argsort(-fit, kind="stable")
        elite = order[: cfg.elitism]
        children = np.empty((n_children, len(GENES)))
        for i in range(n_children):
            rng = _stream(cfg.seed, gen, i)
            parents = []
            for _ in range(2):
                entrants = rng.integers(0, cfg.population, size=cfg.tournament_size)
                parents.append(pop[entrants[np.argmax(fit[entrants])]])
            child = parents[0].copy()
            if rng.random() < cfg.crossover_rate:
                mask = rng.random(len(GENES)) < 0.5
                child[mask] = parents[1][mask]
            mutate = rng.random(len(GENES)) < cfg.mutation_rate
            child += mutate * rng.normal(0.0, 1.0, len(GENES)) * sigma
            children[i] = child
        children = repair(children, space)
        child_fit = _evaluate(children, ch, sess, eb, f, workers)
        pop = np.vstack([pop[elite], children])
        fit = np.concatenate([fit[elite], child_fit])
        if history is not None:
            history.append(float(fit.max()))

    best = int(np.argmax(fit))
    return _finish(pop[best], fit[best], ch, sess, eb, f)


def grid_search(
    ch: ChannelParams,
    sess: SessionParams,
    eb: EpsilonBudget = EpsilonBudget(),
    f: float = DEFAULT_F,
    space: SearchSpace = SearchSpace(),
    resolution: int = 6,
) -> tuple[ProtocolParams, SecurityResult]:
    """Exhaustive evaluation of a Cartesian grid over (mu, nu, p_mu, p_z)."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    axes = [np.linspace(*space.mu_range, resolution),
            np.linspace(*space.nu_range, resolution),
            np.linspace(*space.p_mu_bounds, resolution),
            np.linspace(*space.p_z_bounds, resolution)]
    grid = np.array(list(itertools.product(*axes)))
    genes = repair(np.column_stack([grid, (1 - grid[:, 3]) / 2]), space)
    fit = fitness_batch(genes, ch, sess, eb, f)
    best = int(np.argmax(fit))
    return _finish(genes[best], fit[best], ch, sess, eb, f)
