"""Scenario configuration, orchestration and bit-stable artifact emission.

A scenario bundles a selection rate, an initial profile, one or more
solvers with their parameters, metric and envelope specifications, and
fit windows.  Running it writes, per solver, a trajectory CSV under a
fixed versioned column schema, plus a summary JSON in which every field
is tagged either "measured" (computed from this run) or "calibrated"
(supplied by the configuration), and a MANIFEST recording the schema and
a hash of the configuration.  Identical configurations produce byte
identical CSV output.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fourier_solver
from .ensemble import MomentTrack, ParticleEnsemble
from .errors import ConfigError, HypothesisViolationError, SolverAbortError
from .grid_solver import GridSolver, GridSolverConfig, discretize_profile, make_grid
from .hierarchy import EnvelopeSpec, envelope, measured_remainder, remainder_bound
from .metrics import XiGrid, fit_rate, fourier_distance, limit_profile_cf
from .particle_solver import ParticleSolver, ParticleSolverConfig
from .selection import SelectionRate

SCHEMA_VERSION = 1


# -- configuration ------------------------------------------------------------


@dataclass
class ScenarioConfig:
    name: str
    selection: dict
    initial: dict
    grid: dict | None = None
    particle: dict | None = None
    fourier: dict | None = None
    metric: dict = field(default_factory=dict)
    envelopes: list = field(default_factory=list)
    fits: list = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    def rate(self) -> SelectionRate:
        return build_rate(self.selection)


def build_rate(spec: dict) -> SelectionRate:
    kind = spec.get("kind")
    if kind == "constant":
        return SelectionRate.constant(float(spec["a"]))
    if kind == "affine":
        return SelectionRate.affine(float(spec["a"]), float(spec["b"]),
                                    lower_bound=spec.get("lower_bound"))
    if kind == "quadratic":
        return SelectionRate.quadratic(float(spec.get("a", 0.0)),
                                       float(spec.get("b", 0.0)),
                                       float(spec["c"]))
    if kind == "lipschitz_table":
        return SelectionRate.from_table(spec["x"], spec["m"],
                                        lipschitz=spec.get("lipschitz"))
    raise ConfigError(f"unknown selection kind {kind!r}")


def profile_nominal_stats(spec: dict) -> tuple[float, float, float]:
    """Nominal (mean, variance, support half-span) of a profile spec."""
    kind = spec.get("kind")
    if kind == "gaussian":
        return float(spec["mean"]), float(spec["var"]), 0.0
    if kind == "uniform":
        a, b = float(spec["a"]), float(spec["b"])
        return (a + b) / 2.0, (b - a) ** 2 / 12.0, (b - a) / 2.0
    if kind == "two_atoms":
        x1, x2, w = float(spec["x1"]), float(spec["x2"]), float(spec.get("w", 0.5))
        mean = w * x1 + (1 - w) * x2
        var = w * (x1 - mean) ** 2 + (1 - w) * (x2 - mean) ** 2
        return mean, var, max(abs(x1 - mean), abs(x2 - mean))
    if kind == "table":
        data = np.loadtxt(spec["path"])
        x, f = data[:, 0], np.maximum(data[:, 1], 0.0)
        mass = np.trapezoid(f, x)
        mean = np.trapezoid(x * f, x) / mass
        var = np.trapezoid((x - mean) ** 2 * f, x) / mass
        return float(mean), float(var), float(max(mean - x[0], x[-1] - mean))
    raise ConfigError(f"unknown initial profile kind {kind!r}")


def standardized_cf(spec: dict):
    """Transform of the standardized initial profile, for the spectral solver."""
    kind = spec.get("kind")
    if kind == "gaussian":
        return lambda xi: np.exp(-np.asarray(xi, dtype=float) ** 2 / 2.0)
    if kind == "uniform":
        root3 = np.sqrt(3.0)
        return lambda xi: np.sinc(root3 * np.asarray(xi, dtype=float) / np.pi)
    if kind == "two_atoms":
        mean, var, _ = profile_nominal_stats(spec)
        s = np.sqrt(var)
        p1 = (float(spec["x1"]) - mean) / s
        p2 = (float(spec["x2"]) - mean) / s
        w = float(spec.get("w", 0.5))
        return lambda xi: (w * np.exp(-1j * np.asarray(xi, dtype=float) * p1)
                           + (1 - w) * np.exp(-1j * np.asarray(xi, dtype=float) * p2))
    raise ConfigError(f"no standardized transform for profile kind {kind!r}")


_REQUIRED_SOLVER_FIELDS = {
    "grid": ("dt", "t_end"),
    "particle": ("dt", "t_end", "n_target"),
    "fourier": ("dt", "t_end"),
}


def load_config(source) -> ScenarioConfig:
    """Parse and validate a scenario from a dict, JSON/TOML text, or path.

    Validation covers required fields and the hypotheses of any envelope
    that encodes a stability statement: for the concentration envelopes
    the stability margin at the initial mean must exceed the decay
    parameter delta, and both numbers are reported when it does not.
    """
    if isinstance(source, dict):
        data = dict(source)
    else:
        text, name_hint = _read_source(source)
        data = _parse_text(text, name_hint)
    for key in ("name", "selection", "initial"):
        if key not in data:
            raise ConfigError(f"missing required config field {key!r}")
    solvers = {k: data.get(k) for k in ("grid", "particle", "fourier")}
    if not any(solvers.values()):
        raise ConfigError("config enables no solver (need grid, particle or fourier)")
    for solver_name, params in solvers.items():
        if params is None:
            continue
        for fld in _REQUIRED_SOLVER_FIELDS[solver_name]:
            if fld not in params:
                raise ConfigError(f"missing field {fld!r} in {solver_name} solver config")
            if float(params[fld]) < 0 or (fld != "t_end" and float(params[fld]) <= 0):
                raise ConfigError(f"{solver_name}.{fld} must be positive")
    cfg = ScenarioConfig(
        name=str(data["name"]),
        selection=data["selection"],
        initial=data["initial"],
        grid=solvers["grid"],
        particle=solvers["particle"],
        fourier=solvers["fourier"],
        metric=data.get("metric", {}),
        envelopes=data.get("envelopes", []),
        fits=data.get("fits", []),
        raw=data,
    )
    _check_hypotheses(cfg)
    return cfg


def _read_source(source) -> tuple[str, str]:
    path = Path(source)
    if path.suffix in (".json", ".toml") and path.exists():
        return path.read_text(encoding="utf-8"), path.suffix
    return str(source), ""


def _parse_text(text: str, name_hint: str) -> dict:
    if name_hint == ".toml":
        return _parse_toml(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError as json_err:
        try:
            return _parse_toml(text)
        except Exception:
            raise ConfigError(f"config parse error: {json_err}") from json_err


def _parse_toml(text: str) -> dict:
    try:
        import tomllib as toml_mod
    except ImportError:
        import tomli as toml_mod
    try:
        return toml_mod.loads(text)
    except toml_mod.TOMLDecodeError as err:
        raise ConfigError(f"config parse error: {err}") from err


def _check_hypotheses(cfg: ScenarioConfig):
    rate = cfg.rate()
    mean0, _, _ = profile_nominal_stats(cfg.initial)
    for env in cfg.envelopes:
        if env.get("kind") != "dirac_stability":
            continue
        delta = float(env["params"]["delta"])
        margin = rate.stability_margin(mean0)
        if not delta < margin:
            raise HypothesisViolationError(
                f"scenario {cfg.name!r}: concentration-stability hypothesis fails: "
                f"delta = {delta} must be below the stability margin "
                f"{margin:.6g} at the initial mean {mean0}"
            )


# -- running -------------------------------------------------------------------


def run_scenario(cfg: ScenarioConfig, out_dir, threads: int = 1) -> dict:
    """Execute the configured solvers and write the artifact directory.

    Writes <solver>.csv per solver, profile.csv for grid runs, summary.json
    and MANIFEST.json.  Returns the summary dict.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    rate = cfg.rate()
    summary: dict = {
        "scenario": cfg.name,
        "schema_version": SCHEMA_VERSION,
        "config_hash": config_hash(cfg.raw),
    }
    try:
        return _run_scenario_inner(cfg, rate, out, summary, started, threads)
    except SolverAbortError as err:
        summary["aborted"] = {"time": err.t, "error": str(err), "tag": "measured"}
        summary["wall_time_s"] = _measured(time.perf_counter() - started)
        write_json(out / "summary.json", summary)
        raise


def _run_scenario_inner(cfg, rate, out, summary, started, threads) -> dict:
    series: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    csv_schemas: dict[str, list[str]] = {}
    grid_tracks = None

    if cfg.grid is not None:
        grid_tracks = _run_grid(cfg, rate)
        _apply_envelopes(cfg, grid_tracks, summary, solver="grid")
        columns = write_tracks_csv(out / "grid.csv", grid_tracks)
        csv_schemas["grid.csv"] = columns
        _collect_series(series, grid_tracks, prefix="")
        _write_profile_csv(out / "profile.csv", cfg, rate)
        csv_schemas["profile.csv"] = ["x", "density", "limit_profile"]

    if cfg.fourier is not None:
        tracks = _run_fourier(cfg)
        _apply_envelopes(cfg, tracks, summary, solver="fourier")
        columns = write_tracks_csv(out / "fourier.csv", tracks)
        csv_schemas["fourier.csv"] = columns
        _collect_series(series, tracks, prefix="")
        argmax = [tr.extras.get("ds_argmax_xi") for tr in tracks if "ds_argmax_xi" in tr.extras]
        if argmax:
            summary["ds_argmax_xi_final"] = _measured(argmax[-1])

    if cfg.particle is not None:
        all_tracks, seeds = _run_particle(cfg, rate, threads)
        columns = write_tracks_csv(out / "particle.csv", all_tracks)
        csv_schemas["particle.csv"] = columns
        summary["seeds"] = {"value": seeds, "tag": "calibrated"}
        if cfg.grid is not None and cfg.raw.get("compare"):
            summary["cross_solver"] = _cross_solver_bands(
                cfg.raw["compare"], grid_tracks, all_tracks
            )

    for spec in cfg.raw.get("monotone", []):
        key = spec["series"]
        if key not in series:
            raise ConfigError(f"monotone check references unknown series {key!r}")
        t, y = series[key]
        sel = t >= float(spec.get("after", 0.0))
        if "until" in spec:
            sel &= t <= float(spec["until"])
        diffs = np.diff(y[sel])
        scale = np.abs(y[sel][:-1]) + 1e-300
        worst = float(np.max(diffs / scale)) if diffs.size else 0.0
        summary.setdefault("monotone", {})[spec["name"]] = {
            "pass": bool(worst <= 1e-9),
            "max_relative_uptick": worst,
            "tag": "measured",
        }

    summary["fits"] = {}
    for fit_spec in cfg.fits:
        name = fit_spec["name"]
        key = fit_spec["series"]
        if key not in series:
            raise ConfigError(f"fit {name!r} references unknown series {key!r}")
        t, y = series[key]
        window = tuple(fit_spec["window"])
        fit = fit_rate(t, y, window)
        summary["fits"][name] = {
            "value": fit.rate,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
            "series": key,
            "window": list(window),
            "tag": "measured",
        }

    summary["wall_time_s"] = _measured(time.perf_counter() - started)
    write_json(out / "summary.json", summary)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": summary["config_hash"],
        "csv_files": csv_schemas,
        "config": cfg.raw,
    }
    write_json(out / "MANIFEST.json", manifest)
    return summary


def _measured(value) -> dict:
    return {"value": value, "tag": "measured"}


def _run_grid(cfg: ScenarioConfig, rate: SelectionRate):
    p = cfg.grid
    mean0, var0, span = profile_nominal_stats(cfg.initial)
    n = int(p.get("n", 4096))
    width = p.get("half_width")
    if width is None:
        width = float(p.get("width_multiple", 12.0)) * np.sqrt(var0) + span
    x_min, h = make_grid(mean0, float(width), n)
    density = discretize_profile(cfg.initial, x_min, h, n)
    solver = GridSolver(density, rate, GridSolverConfig(
        dt=float(p["dt"]), t_end=float(p["t_end"]),
        record_every=int(p.get("record_every", 10)),
        moment_order=int(p.get("moment_order", 8)),
    ))
    observers = []
    if p.get("track_remainder"):
        observers.append(_remainder_observer(tuple(p.get("remainder_xi", (0.1, 0.5, 1.0)))))
    return solver.run(observers=observers)


def _remainder_observer(xis):
    def observer(solver, track):
        values = measured_remainder(solver.f, solver.rate, xis)
        alpha, beta = solver.rate.lipschitz_decomposition(track.xbar)
        out = {}
        for xi, val in zip(xis, values):
            out[f"r_meas_{xi:g}"] = float(abs(val))
            out[f"r_bound_{xi:g}"] = remainder_bound(
                2, alpha, beta, track.M[2], track.M[4], xi
            )
        return out
    return observer


def _run_fourier(cfg: ScenarioConfig):
    p = cfg.fourier
    cf0 = standardized_cf(cfg.initial)
    state = fourier_solver.SpectralState.from_cf(
        cf0, xi_max=float(p.get("xi_max", 64.0)), n_xi=int(p.get("n_xi", 4096))
    )
    dt = float(p["dt"])
    t_end = float(p["t_end"])
    record_every = int(p.get("record_every", 100))
    s_values = tuple(cfg.metric.get("s", (2.5,)))
    grid = _xi_grid(cfg.metric)
    tracks = [_spectral_track(state, s_values, grid)]
    n_steps = int(round(t_end / dt))
    for i in range(1, n_steps + 1):
        state = fourier_solver.step(state, dt)
        if i % record_every == 0 or i == n_steps:
            tracks.append(_spectral_track(state, s_values, grid))
    return tracks


def _xi_grid(metric: dict) -> XiGrid:
    g = metric.get("xi_grid", {})
    return XiGrid(
        xi_min=float(g.get("xi_min", 1e-3)),
        xi_max=float(g.get("xi_max", 1e3)),
        n_points=int(g.get("n_points", 2000)),
        spacing=g.get("spacing", "log"),
        refine=bool(g.get("refine", True)),
    )


def _spectral_track(state, s_values, grid) -> MomentTrack:
    extras = {"residual": fourier_solver.residual(state)}
    for s in s_values:
        d, arg = fourier_distance(state.cf, limit_profile_cf, s, grid)
        extras[f"ds_{s:g}"] = d
        extras["ds_argmax_xi"] = arg
    m = np.array([1.0, 0.0, state.variance_fitted()])
    return MomentTrack(t=state.t, rho=1.0, xbar=0.0, M=m, S=np.zeros(3), extras=extras)


def _run_particle(cfg: ScenarioConfig, rate: SelectionRate, threads: int):
    p = cfg.particle
    mean0, var0, _ = profile_nominal_stats(cfg.initial)
    n_target = int(p["n_target"])
    seeds = list(p.get("seeds", range(int(p.get("n_seeds", 1)))))
    base = int(p.get("seed_offset", 10_000))

    def one(seed: int):
        rng = np.random.default_rng(base + seed)
        if cfg.initial.get("kind") == "gaussian":
            positions = rng.normal(mean0, np.sqrt(var0), n_target)
        elif cfg.initial.get("kind") == "uniform":
            positions = rng.uniform(float(cfg.initial["a"]), float(cfg.initial["b"]), n_target)
        elif cfg.initial.get("kind") == "two_atoms":
            w = float(cfg.initial.get("w", 0.5))
            choice = rng.random(n_target) < w
            positions = np.where(choice, float(cfg.initial["x1"]), float(cfg.initial["x2"]))
        else:
            raise ConfigError("particle solver supports gaussian/uniform/two_atoms starts")
        ens = ParticleEnsemble(positions, np.full(n_target, 1.0 / n_target),
                               total_mass=float(cfg.initial.get("mass", 1.0)),
                               rng_seed=seed)
        solver = ParticleSolver(ens, rate, ParticleSolverConfig(
            dt=float(p["dt"]), t_end=float(p["t_end"]), n_target=n_target,
            record_every=int(p.get("record_every", 10)),
            moment_order=int(p.get("moment_order", 4)), seed=seed,
        ))
        return solver.run()

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_seed = list(pool.map(one, seeds))
    else:
        per_seed = [one(s) for s in seeds]
    tracks = [tr for run in per_seed for tr in run]
    return tracks, seeds


def _apply_envelopes(cfg: ScenarioConfig, tracks, summary: dict, solver: str):
    checks = summary.setdefault("envelopes", {})
    for env in cfg.envelopes:
        if env.get("solver", "grid") != solver:
            continue
        name = env["name"]
        target = env["target"]
        params = dict(env["params"])
        for key, value in list(params.items()):
            if isinstance(value, str) and value.startswith("initial:"):
                params[key] = _series_value(tracks[0], value.split(":", 1)[1])
        if env.get("check_margin", False):
            mean0, _, _ = profile_nominal_stats(cfg.initial)
            params["margin"] = cfg.rate().stability_margin(mean0)
        bound = envelope(EnvelopeSpec(env["kind"], params))
        slack = float(env.get("slack", 1.0))
        lower = bool(env.get("lower", False))
        t = np.array([tr.t for tr in tracks])
        y = np.array([_series_value(tr, target) for tr in tracks])
        t_max = env.get("t_max")
        sel = t <= float(t_max) if t_max is not None else np.ones_like(t, bool)
        bounds = bound(t[sel]) * slack
        ratios = bounds / y[sel] if lower else y[sel] / bounds
        for tr, t_i, ok in zip(tracks, t, sel):
            if ok:
                tr.extras[f"env_{name}"] = float(bound(t_i) * slack)
        checks[name] = {
            "pass": bool(np.all(ratios <= 1.0 + 1e-12)),
            "max_ratio": float(np.max(ratios)),
            "slack": slack,
            "lower": lower,
            "target": target,
            "tag": "measured",
        }


def _cross_solver_bands(spec: dict, grid_tracks, particle_tracks) -> dict:
    """Seed-band agreement between the two solvers at selected times."""
    times = [float(t) for t in spec.get("times", (1.0, 5.0, 10.0))]
    quantities = list(spec.get("quantities", ("rho", "xbar", "M2")))
    sigma = float(spec.get("sigma", 3.0))
    by_seed: dict[float, list] = {}
    for tr in particle_tracks:
        by_seed.setdefault(tr.extras["seed"], []).append(tr)
    out: dict = {"sigma": sigma, "tag": "measured", "checks": {}}
    for t_cmp in times:
        g = min(grid_tracks, key=lambda tr: abs(tr.t - t_cmp))
        if abs(g.t - t_cmp) > 1e-9:
            raise ConfigError(f"grid run does not record the comparison time {t_cmp}")
        for q in quantities:
            vals = []
            for seed_tracks in by_seed.values():
                p = min(seed_tracks, key=lambda tr: abs(tr.t - t_cmp))
                if abs(p.t - t_cmp) > 1e-9:
                    raise ConfigError(
                        f"particle run does not record the comparison time {t_cmp}"
                    )
                vals.append(_series_value(p, q))
            vals = np.array(vals)
            spread = float(vals.std(ddof=1))
            z = abs(float(vals.mean()) - _series_value(g, q)) / spread if spread > 0 else np.inf
            out["checks"][f"{q}_t{t_cmp:g}"] = {
                "grid": _series_value(g, q),
                "particle_mean": float(vals.mean()),
                "seed_spread": spread,
                "z": z,
                "pass": bool(z <= sigma),
            }
    return out


def _series_value(track: MomentTrack, key: str) -> float:
    if key == "rho":
        return track.rho
    if key == "xbar":
        return track.xbar
    if key.startswith("M"):
        return float(track.M[int(key[1:])])
    if key.startswith("S"):
        return float(track.S[int(key[1:])])
    if key in track.extras:
        return float(track.extras[key])
    raise ConfigError(f"unknown series key {key!r}")


def _collect_series(series: dict, tracks, prefix: str):
    t = np.array([tr.t for tr in tracks])
    k_max = tracks[0].order
    for k in range(2, k_max + 1):
        series[f"{prefix}M{k}"] = (t, np.array([tr.M[k] for tr in tracks]))
    series[f"{prefix}rho"] = (t, np.array([tr.rho for tr in tracks]))
    for key in tracks[0].extras:
        if all(key in tr.extras for tr in tracks):
            series[f"{prefix}{key}"] = (t, np.array([tr.extras[key] for tr in tracks]))
    # ratio series used by the improved-rate diagnostics
    if k_max >= 4:
        m2 = np.array([tr.M[2] for tr in tracks])
        m4 = np.array([tr.M[4] for tr in tracks])
        series[f"{prefix}M4_over_M2"] = (t, m4 / m2)


# -- artifact files ------------------------------------------------------------


def format_float(x: float) -> str:
    return repr(float(x))


def write_tracks_csv(path, tracks) -> list[str]:
    """Write MomentTrack rows under the versioned column schema.

    Columns: t, rho, xbar, M2..MK, S0..SK, then extras in the order they
    appear on the first row.  Uses repr() for floats, so identical runs
    produce identical bytes.
    """
    k_max = tracks[0].order
    extra_keys = list(tracks[0].extras.keys())
    columns = (["t", "rho", "xbar"]
               + [f"M{k}" for k in range(2, k_max + 1)]
               + [f"S{k}" for k in range(0, (tracks[0].S.size if tracks[0].S is not None else 0))]
               + extra_keys)
    lines = [",".join(columns)]
    for tr in tracks:
        vals = [tr.t, tr.rho, tr.xbar]
        vals += [tr.M[k] for k in range(2, k_max + 1)]
        if tr.S is not None:
            vals += list(tr.S)
        vals += [tr.extras.get(k, float("nan")) for k in extra_keys]
        lines.append(",".join(format_float(v) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return columns


def _write_profile_csv(path, cfg: ScenarioConfig, rate: SelectionRate):
    # final standardized profile against the universal limit shape is a
    # plotting aid; regenerate the grid cheaply at modest resolution
    from .ensemble import standardize
    from .metrics import limit_profile_pdf

    p = cfg.grid
    mean0, var0, span = profile_nominal_stats(cfg.initial)
    n = min(int(p.get("n", 4096)), 8192)
    width = p.get("half_width")
    if width is None:
        width = float(p.get("width_multiple", 12.0)) * np.sqrt(var0) + span
    x_min, h = make_grid(mean0, float(width), n)
    density = discretize_profile(cfg.initial, x_min, h, n)
    solver = GridSolver(density, rate, GridSolverConfig(
        dt=float(p["dt"]), t_end=min(float(p["t_end"]), 5.0), record_every=10**9
    ))
    solver.run()
    std, _, _ = standardize(solver.f)
    lines = ["x,density,limit_profile"]
    stride = max(1, std.size // 2000)
    for x, v in zip(std.nodes[::stride], std.values[::stride]):
        lines.append(",".join(format_float(u) for u in (x, v, limit_profile_pdf(x))))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_tracks_csv(path) -> dict[str, np.ndarray]:
    """Read a trajectory CSV back into column arrays."""
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = text[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    return {name: data[:, j] for j, name in enumerate(header)}


def write_json(path, payload: dict):
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n",
        encoding="utf-8",
    )


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def config_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
