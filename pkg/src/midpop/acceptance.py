"""Verification suite: every release gate as an executable check.

Each criterion returns a CriterionResult with the numbers it measured;
`run_all` executes them in order.  The pytest module tests/test_acceptance.py
and the `midpop check` CLI subcommand both drive these functions, so the
gate is identical in either entry point.  Scenario-based criteria share
one artifact directory per scenario to avoid recomputing long runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .ensemble import GridDensity, ParticleEnsemble, raw_moments
from .fourier_solver import SpectralState, residual
from .grid_solver import GridSolver, GridSolverConfig, discretize_profile, make_grid
from .hierarchy import contraction_rate
from .metrics import (
    fit_rate,
    limit_profile_cf,
    limit_profile_cf_derivative,
    limit_profile_pdf,
)
from .reproduction import offspring_density, offspring_moments, sample_offspring
from .runner import read_tracks_csv, run_scenario
from .scenarios import builtin_scenario
from .selection import SelectionRate


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        info = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"[{status}] criterion {self.number}: {self.name} ({info}) [{self.elapsed:.1f}s]"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return v


class _Workspace:
    """Artifact cache: each scenario is run at most once per suite run."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.summaries: dict[str, dict] = {}

    def scenario(self, name: str, overrides=None, key=None) -> tuple[Path, dict]:
        key = key or name
        out = self.root / key
        if key not in self.summaries:
            cfg = builtin_scenario(name, overrides)
            self.summaries[key] = run_scenario(cfg, out)
        return out, self.summaries[key]


def _random_density(rng, n=1024, x_lo=-3.0, x_hi=3.0) -> GridDensity:
    h = (x_hi - x_lo) / (n - 1)
    x = np.linspace(x_lo, x_hi, n)
    bumps = sum(
        rng.uniform(0.2, 1.0) * np.exp(-((x - rng.uniform(-2, 2)) ** 2) / rng.uniform(0.05, 0.5))
        for _ in range(3)
    )
    return GridDensity(x_lo, h, bumps * rng.uniform(0.5, 2.0))


def criterion_1(ws: _Workspace) -> CriterionResult:
    """Midpoint operator conserves mass and mean; the sampler is unbiased."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_mass = worst_mean = 0.0
    for _ in range(100):
        f = _random_density(rng)
        mu_in = raw_moments(f, 1)
        mu_out = raw_moments(offspring_density(f), 1)
        worst_mass = max(worst_mass, abs(mu_out[0] / mu_in[0] - 1.0))
        worst_mean = max(worst_mean, abs((mu_out[1] - mu_in[1]) / mu_in[1]))
    ens = ParticleEnsemble(rng.uniform(-2, 2, 40), rng.uniform(0.1, 1.0, 40))
    expected = offspring_moments(raw_moments(ens, 4))
    n = 10**6
    out = sample_offspring(ens, n, np.random.default_rng(102))
    worst_z = 0.0
    for k in range(1, 5):
        emp = float(np.mean(out**k))
        se = float(np.std(out**k)) / np.sqrt(n)
        worst_z = max(worst_z, abs(emp - expected[k]) / se)
    passed = worst_mass <= 1e-12 and worst_mean <= 1e-12 and worst_z <= 4.0
    return CriterionResult(1, "midpoint operator conservation", passed, {
        "mass_rel": worst_mass, "mean_rel": worst_mean, "sampler_max_z": worst_z,
    }, time.perf_counter() - t0)


def criterion_2(ws: _Workspace) -> CriterionResult:
    """Grid-operator moments match the closed moment map within binning bounds."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(201)
    worst = {k: 0.0 for k in range(5)}
    passed = True
    for _ in range(100):
        f = _random_density(rng)
        mu_in = raw_moments(f, 4)
        mu_out = raw_moments(offspring_density(f), 4)
        expected = offspring_moments(mu_in)
        h, mass = f.h, f.mass
        xmax = max(abs(f.x_min), abs(f.nodes[-1]))
        budget = {
            0: 1e-12 * mass,
            1: 1e-12 * max(1.0, abs(expected[1])),
            2: h**2 / 4 * mass,
            3: 0.75 * h**2 * xmax * mass,
            4: 1.5 * h**2 * xmax**2 * mass + h**4 / 16 * mass,
        }
        for k in range(5):
            frac = abs(mu_out[k] - expected[k]) / budget[k]
            worst[k] = max(worst[k], frac)
            passed = passed and frac <= 1.0 + 1e-9
    return CriterionResult(2, "moment-map oracle with binning bounds", passed, {
        f"order{k}_of_budget": worst[k] for k in range(5)
    }, time.perf_counter() - t0)


def criterion_3(ws: _Workspace) -> CriterionResult:
    """Variance decays at rate 1/2 under constant selection; first order in dt."""
    t0 = time.perf_counter()
    _, summary = ws.scenario("constant-m-baseline")
    rate1 = summary["fits"]["m2_rate"]["value"]
    _, summary_half = ws.scenario(
        "constant-m-baseline",
        overrides={"name": "constant-m-baseline-dt-half",
                   "grid": {"dt": 5e-3, "record_every": 20}},
        key="constant-m-baseline-dt-half",
    )
    rate2 = summary_half["fits"]["m2_rate"]["value"]
    dev1, dev2 = abs(rate1 - 0.5), abs(rate2 - 0.5)
    passed = dev1 <= 0.02 and dev2 <= 0.62 * dev1
    return CriterionResult(3, "constant-selection variance decay rate", passed, {
        "rate": rate1, "deviation": dev1, "rate_half_dt": rate2,
        "halving_ratio": dev2 / dev1 if dev1 > 0 else 0.0,
    }, time.perf_counter() - t0)


def criterion_4(ws: _Workspace) -> CriterionResult:
    """The limit profile is stationary; its transform matches its density."""
    t0 = time.perf_counter()
    st = SpectralState.from_cf(limit_profile_cf, xi_max=64.0, n_xi=4096)
    r_analytic = residual(st, derivative=limit_profile_cf_derivative(st.xi))
    r_fd = residual(st)
    worst_tf = 0.0
    for xi in (0.5, 1.0, 2.0):
        val = 2 * quad(lambda x: limit_profile_pdf(x) * np.cos(xi * x), 0, 200, limit=2000)[0]
        worst_tf = max(worst_tf, abs(val - limit_profile_cf(xi)))
    passed = r_analytic <= 1e-12 and r_fd <= 1e-5 and worst_tf <= 1e-6
    return CriterionResult(4, "limit profile stationarity", passed, {
        "residual_analytic": r_analytic, "residual_fd": r_fd,
        "transform_err": worst_tf,
    }, time.perf_counter() - t0)


def criterion_5(ws: _Workspace) -> CriterionResult:
    """Spectral flow contracts to the limit profile at the predicted rate."""
    t0 = time.perf_counter()
    out, summary = ws.scenario("r0-convergence")
    lam = contraction_rate(2.5)
    env = summary["envelopes"]["ds_contraction"]
    fitted = summary["fits"]["ds_rate"]["value"]
    passed = env["pass"] and fitted >= 0.9 * lam
    return CriterionResult(5, "spectral convergence rate with constant selection",
                           passed, {
        "envelope_max_ratio": env["max_ratio"], "fitted_rate": fitted,
        "required_rate": 0.9 * lam,
    }, time.perf_counter() - t0)


def criterion_6(ws: _Workspace) -> CriterionResult:
    """Concentrated profiles under quadratic selection stay concentrated."""
    t0 = time.perf_counter()
    out, summary = ws.scenario("dirac-stability")
    cols = read_tracks_csv(out / "grid.csv")
    t = cols["t"]
    xbar = cols["xbar"]
    i20 = int(np.argmin(np.abs(t - 20.0)))
    i40 = int(np.argmin(np.abs(t - 40.0)))
    mean_drift = abs(xbar[i40] - xbar[i20])
    env2 = summary["envelopes"]["m2_dirac"]
    env4 = summary["envelopes"]["m4_dirac"]
    passed = env2["pass"] and env4["pass"] and mean_drift <= 1e-4
    return CriterionResult(6, "concentration stability envelopes", passed, {
        "m2_max_ratio": env2["max_ratio"], "m4_max_ratio": env4["max_ratio"],
        "mean_drift_20_40": mean_drift,
    }, time.perf_counter() - t0)


def criterion_7(ws: _Workspace) -> CriterionResult:
    """Improved decay rate and variance lower bound on the same scenario."""
    t0 = time.perf_counter()
    out, _ = ws.scenario("dirac-stability")
    cols = read_tracks_csv(out / "grid.csv")
    t, m2, m4, m6 = cols["t"], cols["M2"], cols["M4"], cols["M6"]
    ratio0 = m6[0] / m2[0]
    fit = fit_rate(t, m2, (10.0, 30.0))
    sel = t <= 30.0
    lower_ratio = float(np.min(m2[sel] / (0.5 * m2[0] * np.exp(-t[sel] / 2))))
    measured_constant = float(np.min(m2[sel] / (m2[0] * np.exp(-t[sel] / 2))))
    mono = t >= 1.0
    mono &= t <= 30.0
    kurt = m4[mono] / m2[mono]
    worst_uptick = float(np.max(np.diff(kurt) / kurt[:-1]))
    passed = (ratio0 <= 1e-2 and abs(fit.rate - 0.5) <= 0.05
              and lower_ratio >= 1.0 and worst_uptick <= 1e-9)
    return CriterionResult(7, "improved rates and variance lower bound", passed, {
        "m6_over_m2_initial": ratio0, "m2_rate": fit.rate,
        "lower_bound_margin": lower_ratio,
        "measured_lower_constant": measured_constant,
        "kurtosis_uptick": worst_uptick,
    }, time.perf_counter() - t0)


def criterion_8(ws: _Workspace) -> CriterionResult:
    """Closed-form remainder bound dominates the measured remainder."""
    t0 = time.perf_counter()
    out, _ = ws.scenario("dirac-stability")
    cols = read_tracks_csv(out / "grid.csv")
    worst = 0.0
    for xi in ("0.1", "0.5", "1"):
        frac = cols[f"r_meas_{xi}"] / cols[f"r_bound_{xi}"]
        worst = max(worst, float(np.max(frac)))
    passed = worst <= 1.0 + 1e-9
    return CriterionResult(8, "remainder bound domination", passed,
                           {"max_measured_over_bound": worst},
                           time.perf_counter() - t0)


def criterion_9(ws: _Workspace) -> CriterionResult:
    """Particle solver reproduces grid mass, mean and variance in seed bands."""
    t0 = time.perf_counter()
    _, summary = ws.scenario("cross-solver")
    checks = summary["cross_solver"]["checks"]
    worst = max(c["z"] for c in checks.values())
    passed = all(c["pass"] for c in checks.values())
    return CriterionResult(9, "cross-solver consistency", passed,
                           {"max_z": worst, "n_checks": len(checks)},
                           time.perf_counter() - t0)


def criterion_10(ws: _Workspace) -> CriterionResult:
    """A run restarted mid-way is bitwise identical to an uninterrupted one."""
    t0 = time.perf_counter()
    rate = SelectionRate.quadratic(0.0, 0.0, 1.0)

    def fresh():
        n = 8192
        x_min, h = make_grid(0.5, 0.158, n)
        f = discretize_profile({"kind": "gaussian", "mean": 0.5, "var": 1e-3}, x_min, h, n)
        return GridSolver(f, rate, GridSolverConfig(dt=1e-2, t_end=1.0, record_every=10))

    direct = fresh()
    direct.config.t_end = 2.0
    direct.run()
    restarted = fresh()
    restarted.run()                 # to t1 = 1
    restarted.config.t_end = 2.0
    restarted.run()                 # continue to t2 = 2
    identical = bool(np.array_equal(direct.f.values, restarted.f.values))
    return CriterionResult(10, "restart bitwise identity", identical,
                           {"identical": identical}, time.perf_counter() - t0)


ALL_CRITERIA = (
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
    criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
)


def run_all(out_dir, numbers=None) -> list[CriterionResult]:
    ws = _Workspace(Path(out_dir))
    results = []
    for i, fn in enumerate(ALL_CRITERIA, start=1):
        if numbers and i not in numbers:
            continue
        results.append(fn(ws))
    return results
