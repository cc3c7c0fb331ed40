"""Stochastic weighted-particle integration of the same dynamics.

Selection acts deterministically on the weights (m may be negative, so
exponential reweighting handles both signs of net growth uniformly); births
add a batch of midpoint offspring per step.  Newborn mass is deterministic
apart from the trait-dependence of the within-step survival weight, which
matches the mild-form update of the grid solver in expectation -- the two
solvers approximate the same equation at the same order in dt, which is
what makes the cross-validation bands meaningful.  Runs are bitwise
reproducible for a fixed seed and config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import MomentTrack, ParticleEnsemble, centered_stats
from .errors import ConfigError, ExtinctionError, SolverAbortError
from .grid_solver import duhamel_weight
from .reproduction import midpoint_draws
from .selection import SelectionRate, selection_moments


@dataclass
class ParticleSolverConfig:
    dt: float = 1e-2
    t_end: float = 10.0
    n_target: int = 10_000
    record_every: int = 10
    moment_order: int = 8
    seed: int = 0
    max_count_factor: float = 2.0   # resample when count > factor * n_target
    min_ess_factor: float = 0.5     # resample when ESS < factor * n_target

    def __post_init__(self):
        if self.dt <= 0 or self.t_end < 0:
            raise ConfigError("need dt > 0 and t_end >= 0")
        if self.dt > 0.2:
            raise ConfigError("dt too large: newborn mass per step must stay under 20%")
        if self.n_target < 2:
            raise ConfigError("n_target must be at least 2")


class ParticleSolver:
    def __init__(self, ensemble: ParticleEnsemble, rate: SelectionRate,
                 config: ParticleSolverConfig):
        self.ensemble = ensemble
        self.rate = rate
        self.config = config
        self.step_index = 0
        self.rng = np.random.Generator(np.random.PCG64(config.seed))

    @property
    def t(self) -> float:
        return self.step_index * self.config.dt

    @property
    def effective_sample_size(self) -> float:
        return 1.0 / float(np.max(self.ensemble.weights))

    def step(self):
        cfg = self.config
        ens = self.ensemble
        rho = ens.total_mass
        dt = cfg.dt

        decay = np.exp(-self.rate.evaluate(ens.positions) * dt)
        masses = ens.weights * rho * decay
        surviving = masses.sum()
        if surviving <= 0.0:
            raise ExtinctionError(f"all particle weights underflowed at t = {self.t:.6g}")

        n_b = math.ceil(cfg.n_target * dt)
        offspring = midpoint_draws(ens.positions, masses / surviving, n_b, self.rng)
        # newborn share carries the within-step survival weight of its own
        # trait, mirroring the grid solver's mild-form source term
        newborn = (rho / n_b) * duhamel_weight(self.rate.evaluate(offspring), dt)

        positions = np.concatenate([ens.positions, offspring])
        masses = np.concatenate([masses, newborn])
        total = masses.sum()
        if not np.isfinite(total):
            raise SolverAbortError(f"non-finite mass at t = {self.t:.6g}", t=self.t)
        self.ensemble = ParticleEnsemble(
            positions=positions, weights=masses / total,
            total_mass=total, rng_seed=ens.rng_seed,
        )
        self.step_index += 1

        if (self.ensemble.size > cfg.max_count_factor * cfg.n_target
                or self.effective_sample_size < cfg.min_ess_factor * cfg.n_target):
            self.resample()

    def resample(self):
        """Systematic (low-variance) resampling back to n_target atoms.

        Mass is unchanged and every empirical moment is preserved in
        expectation.
        """
        n = self.config.n_target
        ens = self.ensemble
        cdf = np.cumsum(ens.weights)
        cdf[-1] = 1.0
        probes = (self.rng.random() + np.arange(n)) / n
        idx = np.searchsorted(cdf, probes, side="right")
        self.ensemble = ParticleEnsemble(
            positions=ens.positions[idx],
            weights=np.full(n, 1.0 / n),
            total_mass=ens.total_mass,
            rng_seed=ens.rng_seed,
        )

    def record(self, observers=()) -> MomentTrack:
        k = self.config.moment_order
        rho, xbar, m = centered_stats(self.ensemble, k + 2)
        if self.rate.is_polynomial:
            s = selection_moments(self.rate, xbar, m)
        else:
            w = self.ensemble.weights
            d = self.ensemble.positions - xbar
            dm = self.rate.evaluate(self.ensemble.positions) - self.rate.evaluate(xbar)
            s = np.array([(w * dm * d**j).sum() for j in range(k + 1)])
        track = MomentTrack(
            t=self.t, rho=rho, xbar=xbar, M=m[: k + 1], S=s,
            extras={"seed": float(self.config.seed), "ess": self.effective_sample_size},
        )
        for obs in observers:
            extra = obs(self, track)
            if extra:
                track.extras.update(extra)
        return track

    def run(self, observers=()) -> list[MomentTrack]:
        target = int(round(self.config.t_end / self.config.dt))
        tracks = []
        if self.step_index == 0:
            tracks.append(self.record(observers))
        while self.step_index < target:
            self.step()
            if self.step_index % self.config.record_every == 0 or self.step_index == target:
                tracks.append(self.record(observers))
        return tracks
