"""Built-in scenario library.

Ships the five verification scenarios the acceptance suite runs, so no
hand-written configuration is needed.  Numeric parameters carried here
(grid width multiples, envelope constants, fit windows) are calibration
inputs, recorded as such in every summary the runner emits.
"""

from __future__ import annotations

import copy

from .runner import ScenarioConfig, load_config

_CONSTANT_M_BASELINE = {
    "name": "constant-m-baseline",
    "selection": {"kind": "constant", "a": 0.0},
    "initial": {"kind": "gaussian", "mean": 0.0, "var": 1.0},
    # width_multiple 3 keeps the half-grid binning floor of the midpoint
    # operator far below M2(20) = e^-10 at N = 4096 (calibrated)
    "grid": {"n": 4096, "width_multiple": 3.0, "dt": 1e-2, "t_end": 20.0,
             "record_every": 10, "moment_order": 8},
    "envelopes": [
        # reference curve for the decay plots; the slack absorbs the
        # first-order time-stepping bias at dt = 1e-2 (calibrated)
        {"name": "m2_reference", "kind": "improved_rate", "target": "M2",
         "solver": "grid", "params": {"rate": 0.5, "constant": "initial:M2"},
         "slack": 1.15},
    ],
    "fits": [
        {"name": "m2_rate", "series": "M2", "window": [5.0, 20.0]},
    ],
}

_DIRAC_STABILITY = {
    "name": "dirac-stability",
    "selection": {"kind": "quadratic", "a": 0.0, "b": 0.0, "c": 1.0},
    "initial": {"kind": "gaussian", "mean": 0.5, "var": 1e-3},
    "grid": {"n": 65536, "width_multiple": 5.0, "dt": 1e-2, "t_end": 40.0,
             "record_every": 10, "moment_order": 8,
             "track_remainder": True, "remainder_xi": [0.1, 0.5, 1.0]},
    "envelopes": [
        {"name": "m2_dirac", "kind": "dirac_stability", "target": "M2",
         "solver": "grid", "check_margin": True,
         "params": {"delta": 0.2, "amplitude": "initial:M2"}},
        {"name": "m4_dirac", "kind": "dirac_stability", "target": "M4",
         "solver": "grid", "check_margin": True,
         "params": {"delta": 0.2, "amplitude": "initial:M4"}},
    ],
    "fits": [
        {"name": "m2_rate", "series": "M2", "window": [10.0, 30.0]},
    ],
}

_IMPROVED_RATES = {
    "name": "improved-rates",
    "selection": {"kind": "quadratic", "a": 0.0, "b": 0.0, "c": 1.0},
    "initial": {"kind": "gaussian", "mean": 0.5, "var": 1e-3},
    "grid": {"n": 65536, "width_multiple": 5.0, "dt": 1e-2, "t_end": 30.0,
             "record_every": 10, "moment_order": 8},
    "envelopes": [
        # the lower-bound constant 0.5 is a conservative calibration; the
        # measured ratio is reported alongside
        {"name": "m2_lower", "kind": "m2_lower", "target": "M2",
         "solver": "grid", "params": {"constant": 0.5, "m2_0": "initial:M2"},
         "lower": True},
    ],
    "fits": [
        {"name": "m2_rate", "series": "M2", "window": [10.0, 30.0]},
    ],
    "monotone": [
        {"name": "m4_over_m2", "series": "M4_over_M2", "after": 1.0},
    ],
}

_R0_CONVERGENCE = {
    "name": "r0-convergence",
    "selection": {"kind": "constant", "a": 0.0},
    "initial": {"kind": "uniform", "a": -1.7320508075688772, "b": 1.7320508075688772},
    # xi_max 16 (not the solver default 64) puts four times the resolution
    # near the origin, where heavy-tail structure accumulates (calibrated);
    # the transform is below 3e-6 at xi = 16 for all of [0, 100]
    "fourier": {"xi_max": 16.0, "n_xi": 4096, "dt": 2e-3, "t_end": 100.0,
                "record_every": 500},
    "metric": {"s": [2.5], "xi_grid": {"xi_min": 2e-2, "xi_max": 1e3,
                                       "n_points": 2000, "refine": True}},
    "envelopes": [
        {"name": "ds_contraction", "kind": "ds_bound", "target": "ds_2.5",
         "solver": "fourier", "slack": 1.1,
         "params": {"d0": "initial:ds_2.5", "L": 0.0, "c": 1.0, "s": 2.5}},
    ],
    "fits": [
        {"name": "ds_rate", "series": "ds_2.5", "window": [20.0, 100.0]},
    ],
}

_CROSS_SOLVER = {
    "name": "cross-solver",
    "selection": {"kind": "quadratic", "a": 0.0, "b": 0.0, "c": 1.0},
    "initial": {"kind": "gaussian", "mean": 0.5, "var": 1e-3},
    "grid": {"n": 65536, "width_multiple": 5.0, "dt": 1e-2, "t_end": 10.0,
             "record_every": 100, "moment_order": 4},
    "particle": {"n_target": 100000, "dt": 1e-2, "t_end": 10.0,
                 "record_every": 100, "moment_order": 4,
                 "n_seeds": 10, "seed_offset": 10000},
    "compare": {"times": [1.0, 5.0, 10.0],
                "quantities": ["rho", "xbar", "M2", "M4"], "sigma": 3.0},
    "fits": [],
}

_LIBRARY = {
    cfg["name"]: cfg
    for cfg in (
        _CONSTANT_M_BASELINE,
        _DIRAC_STABILITY,
        _IMPROVED_RATES,
        _R0_CONVERGENCE,
        _CROSS_SOLVER,
    )
}


def scenario_names() -> list[str]:
    return sorted(_LIBRARY)


def builtin_scenario(name: str, overrides: dict | None = None) -> ScenarioConfig:
    """Load a built-in scenario, optionally with shallow per-solver overrides."""
    if name not in _LIBRARY:
        raise KeyError(f"unknown scenario {name!r}; available: {', '.join(scenario_names())}")
    data = copy.deepcopy(_LIBRARY[name])
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key].update(value)
        else:
            data[key] = value
    return load_config(data)
