"""Render decay figures from simulation artifact directories.

Consumes only the runner's CSV files and summary JSON (schema version 1:
columns t, rho, xbar, M2..MK, S0..SK, then named extras).  Each panel
becomes one PNG.  Decay panels draw the data series, any envelope column
attached to it, and an annotated fitted slope recomputed here with the
same least-squares-on-log rule the simulation summary uses, over the
same window, so the annotation and the summary agree to full precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

PANEL_KINDS = ("m2_decay", "m4_over_m2", "ds_decay", "profile_overlay")
SUPPORTED_SCHEMA = 1


class SchemaError(ValueError):
    """An input file does not carry the columns or version expected."""


@dataclass
class FigureSpec:
    """Inputs and panel selection for one rendering run.

    inputs maps roles to file paths: "grid" and "fourier" name trajectory
    CSVs, "profile" the profile CSV, "summary" the summary JSON.  Panels
    are drawn in order; log_scale applies to the decay panels.
    """

    inputs: dict
    panels: list
    log_scale: bool = True
    prefix: str = "fig"

    @staticmethod
    def from_json(path) -> "FigureSpec":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        spec = FigureSpec(
            inputs=data.get("inputs", {}),
            panels=list(data.get("panels", [])),
            log_scale=bool(data.get("log_scale", True)),
            prefix=str(data.get("prefix", "fig")),
        )
        for panel in spec.panels:
            if panel not in PANEL_KINDS:
                raise SchemaError(f"unknown panel kind {panel!r}")
        base = Path(path).parent
        spec.inputs = {k: str((base / v)) if not Path(v).is_absolute() else v
                       for k, v in spec.inputs.items()}
        return spec


def read_csv(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return {name: data[:, j] for j, name in enumerate(header)}


def fit_slope(t: np.ndarray, y: np.ndarray, window) -> float:
    """Least-squares decay rate of log y over the window (negated slope).

    Deliberately identical to the rule the simulation summary applies.
    """
    t_a, t_b = window
    sel = (t >= t_a) & (t <= t_b)
    slope, _ = np.polyfit(t[sel], np.log(y[sel]), 1)
    return -float(slope)


def render(spec: FigureSpec, out_dir) -> list[Path]:
    """Write one PNG per requested panel; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = _load_summary(spec)
    written = []
    for panel in spec.panels:
        target = out / f"{spec.prefix}_{panel}.png"
        if panel == "m2_decay":
            _decay_panel(spec, summary, target, csv_role="grid", series="M2",
                         title="variance decay")
        elif panel == "m4_over_m2":
            _ratio_panel(spec, target)
        elif panel == "ds_decay":
            _decay_panel(spec, summary, target, csv_role="fourier", series="ds_2.5",
                         title="Fourier distance decay")
        elif panel == "profile_overlay":
            _profile_panel(spec, target)
        written.append(target)
    return written


def _load_summary(spec: FigureSpec) -> dict:
    path = spec.inputs.get("summary")
    if path is None:
        return {}
    summary = json.loads(Path(path).read_text(encoding="utf-8"))
    version = summary.get("schema_version")
    if version != SUPPORTED_SCHEMA:
        raise SchemaError(f"summary schema version {version} not supported")
    return summary


def _column(cols: dict, name: str, path) -> np.ndarray:
    if name not in cols:
        raise SchemaError(f"missing column {name!r} in {path}")
    return cols[name]


def _envelope_columns(summary: dict, series: str) -> list[str]:
    return [f"env_{name}" for name, env in summary.get("envelopes", {}).items()
            if env.get("target") == series]


def _fit_for_series(summary: dict, series: str):
    for name, fit in summary.get("fits", {}).items():
        if fit.get("series") == series:
            return name, fit
    return None, None


def _new_axes():
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=120)
    return fig, ax


def _decay_panel(spec, summary, target, csv_role, series, title):
    path = spec.inputs.get(csv_role)
    if path is None:
        raise SchemaError(f"panel needs an {csv_role!r} input CSV")
    cols = read_csv(path)
    t = _column(cols, "t", path)
    y = _column(cols, series, path)
    fig, ax = _new_axes()
    ax.plot(t, y, lw=1.4, label=series)
    for env_col in _envelope_columns(summary, series):
        if env_col in cols:
            ax.plot(t, cols[env_col], "--", lw=1.1, label=env_col)
    fit_name, fit = _fit_for_series(summary, series)
    if fit is not None:
        window = fit["window"]
        slope = fit_slope(t, y, window)
        sel = (t >= window[0]) & (t <= window[1])
        anchor = np.exp(np.log(y[sel][0]) - slope * (t[sel] - t[sel][0]))
        ax.plot(t[sel], anchor, ":", lw=1.0,
                label=f"{fit_name}: rate {slope:.6f}")
        ax.annotate(f"fitted rate {slope:.6f}", xy=(0.05, 0.08),
                    xycoords="axes fraction", fontsize=9)
    if spec.log_scale:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(series)
    ax.set_title(title)
    ax.legend(fontsize=8)
    _save(fig, target)


def _ratio_panel(spec, target):
    path = spec.inputs.get("grid")
    if path is None:
        raise SchemaError("panel needs a 'grid' input CSV")
    cols = read_csv(path)
    t = _column(cols, "t", path)
    ratio = _column(cols, "M4", path) / _column(cols, "M2", path)
    fig, ax = _new_axes()
    ax.plot(t, ratio, lw=1.4)
    if spec.log_scale:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("M4 / M2")
    ax.set_title("kurtosis-weighted variance ratio")
    _save(fig, target)


def _profile_panel(spec, target):
    path = spec.inputs.get("profile")
    if path is None:
        raise SchemaError("panel needs a 'profile' input CSV")
    cols = read_csv(path)
    x = _column(cols, "x", path)
    fig, ax = _new_axes()
    ax.plot(x, _column(cols, "density", path), lw=1.4, label="standardized profile")
    ax.plot(x, _column(cols, "limit_profile", path), "--", lw=1.1,
            label="limit profile")
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.set_xlim(-6, 6)
    ax.set_title("profile against the universal limit shape")
    ax.legend(fontsize=8)
    _save(fig, target)


def _save(fig, target: Path):
    # fixed metadata keeps the bytes reproducible across runs
    fig.savefig(target, format="png", metadata={"Software": "decayplots"})
    plt.close(fig)
