"""Render error-bar figures from sweep results.

Input is the sweep harness's ``results.csv`` (+ ``manifest.json``); output is
one image per plot spec: one line per estimator, mean markers with one-sided
std error bars, log axes where the spec says so.  Bias plots show |mean| on
a log axis, with exact zeros clamped to the axis floor and drawn with a
distinct hollow marker.  Rendering is read-only over the CSV.
"""

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import pandas as pd  # noqa: E402

REQUIRED_COLUMNS = ("experiment", "mdp", "pair", "N", "T", "gamma", "beta",
                    "estimator", "metric", "mean", "std")
X_COLUMNS = {"N": "N", "T": "T", "beta": "beta", "divergence": "pair"}
METRICS = ("bias", "variance", "mse", "ess")

ESTIMATOR_ORDER = ("onpolicy", "is", "pdis", "pdwis", "decis", "decpdis", "decpdwis")
ESTIMATOR_STYLE = {
    "onpolicy": dict(color="black", marker="x"),
    "is": dict(color="tab:blue", marker="o"),
    "pdis": dict(color="tab:orange", marker="s"),
    "pdwis": dict(color="tab:green", marker="^"),
    "decis": dict(color="tab:cyan", marker="o", linestyle="--"),
    "decpdis": dict(color="tab:red", marker="s", linestyle="--"),
    "decpdwis": dict(color="tab:olive", marker="^", linestyle="--"),
}


@dataclass(frozen=True)
class PlotSpec:
    """One figure: a metric against a swept column, one series per estimator."""

    x: str                       # N | T | beta | divergence
    metric: str                  # bias | variance | mse | ess
    experiment: Optional[str] = None   # filter when the CSV holds several
    logx: bool = True
    logy: bool = True
    estimators: Optional[tuple] = None  # None = every estimator in the CSV
    filename: Optional[str] = None

    def __post_init__(self):
        if self.x not in X_COLUMNS:
            raise ValueError(f"unknown x column {self.x!r}; choose from {sorted(X_COLUMNS)}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}; choose from {METRICS}")
        if self.estimators is not None:
            object.__setattr__(self, "estimators", tuple(self.estimators))

    @property
    def output_name(self) -> str:
        if self.filename:
            return self.filename
        stem = f"{self.experiment}_" if self.experiment else ""
        return f"{stem}{self.metric}_vs_{self.x}.png"

    @classmethod
    def from_dict(cls, doc: dict) -> "PlotSpec":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()})


def load_results(path) -> pd.DataFrame:
    frame = pd.read_csv(path)
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"results file is missing column(s): {', '.join(missing)}")
    return frame


def _series_frame(frame: pd.DataFrame, spec: PlotSpec):
    rows = frame[frame["metric"] == spec.metric]
    if spec.experiment is not None:
        rows = rows[rows["experiment"] == spec.experiment]
        if rows.empty:
            raise ValueError(f"no rows for experiment {spec.experiment!r}")
    if rows.empty:
        raise ValueError(f"no rows for metric {spec.metric!r}")
    estimators = spec.estimators
    if estimators is None:
        estimators = tuple(e for e in ESTIMATOR_ORDER if e in set(rows["estimator"]))
    if not estimators:
        raise ValueError("empty estimator selection")
    missing = sorted(set(estimators) - set(rows["estimator"]))
    if missing:
        raise ValueError(f"estimator(s) not in results: {', '.join(missing)}")
    rows = rows[rows["estimator"].isin(estimators)].copy()

    x_col = X_COLUMNS[spec.x]
    if spec.x == "divergence":
        rows["_x"] = rows[x_col].astype(float)
    else:
        rows["_x"] = rows[x_col]
    if rows["_x"].nunique() < 1:
        raise ValueError(f"column {x_col!r} carries no values")
    # every non-x grid axis must be single-valued, otherwise the figure would
    # silently mix cells
    for other in ("N", "T", "gamma", "beta", "pair"):
        if other == x_col:
            continue
        if rows[other].nunique() > 1:
            raise ValueError(
                f"column {other!r} has several values; narrow the spec or the CSV")
    return rows, estimators


def build_figure(frame: pd.DataFrame, spec: PlotSpec):
    """Figure + axes for a spec; exposed separately so tests can inspect artists."""
    rows, estimators = _series_frame(frame, spec)
    use_abs = spec.metric == "bias" and spec.logy

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    y_label = f"|{spec.metric}|" if use_abs else spec.metric
    positives = rows.loc[rows["mean"].abs() > 0, "mean"].abs() if use_abs else None
    floor = (float(positives.min()) / 10 if positives is not None and len(positives)
             else 1e-12)

    for est in estimators:
        sub = rows[rows["estimator"] == est].sort_values("_x")
        x = sub["_x"].to_numpy(dtype=float)
        mean = sub["mean"].to_numpy(dtype=float)
        std = sub["std"].to_numpy(dtype=float)
        style = ESTIMATOR_STYLE.get(est, {})
        if use_abs:
            y = abs(mean)
            clamped = y == 0.0
            y = y.copy()
            y[clamped] = floor
            ax.errorbar(x, y, yerr=std, label=est, capsize=2.5, **style)
            if clamped.any():
                ax.plot(x[clamped], y[clamped], linestyle="none", marker="v",
                        markerfacecolor="none", markersize=9,
                        color=style.get("color", "gray"))
        else:
            ax.errorbar(x, mean, yerr=std, label=est, capsize=2.5, **style)

    if spec.logx:
        ax.set_xscale("log")
    if spec.logy:
        ax.set_yscale("log")
    ax.set_xlabel(spec.x)
    ax.set_ylabel(y_label)
    title = spec.experiment or str(rows["experiment"].iloc[0])
    ax.set_title(f"{title}: {y_label} vs {spec.x}")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    return fig, ax


def render(results_csv, spec: PlotSpec, out_dir) -> Path:
    """Render one spec from a results.csv; returns the written file path."""
    frame = load_results(results_csv)
    fig, _ = build_figure(frame, spec)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / spec.output_name
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out


# default figure recipes per builtin experiment name
BUILTIN_SPECS = {
    "fig1_var_mse_vs_N": [("N", "variance"), ("N", "mse")],
    "fig2_bias_vs_beta": [("beta", "bias")],
    "fig3_bias_vs_T": [("T", "bias")],
    "fig4_var_mse_vs_T": [("T", "variance"), ("T", "mse")],
    "fig_var_vs_PD": [("divergence", "variance"), ("divergence", "mse")],
    "fig5_ess_vs_N": [("N", "ess")],
    "fig6_ess_vs_T": [("T", "ess")],
    "app_bias_vs_beta_N1000": [("beta", "bias"), ("beta", "variance"),
                               ("beta", "mse"), ("beta", "ess")],
    "app_var_vs_T_gamma_0_9": [("T", "bias"), ("T", "variance"),
                               ("T", "mse"), ("T", "ess")],
    "app_var_vs_T_gamma_0_9999": [("T", "bias"), ("T", "variance"),
                                  ("T", "mse"), ("T", "ess")],
    "app_var_vs_PD_mdp1": [("divergence", "bias"), ("divergence", "variance"),
                           ("divergence", "mse"), ("divergence", "ess")],
}


def specs_for_experiment(name: str):
    if name not in BUILTIN_SPECS:
        return None
    # beta sweeps are linear in x (the grid is symmetric about zero)
    return [PlotSpec(x=x, metric=metric, experiment=name, logx=(x != "beta"))
            for x, metric in BUILTIN_SPECS[name]]


def render_all(results_dir, out_dir) -> list:
    """One figure set per experiment recorded in the manifest."""
    results_dir = Path(results_dir)
    manifest_path = results_dir / "manifest.json"
    csv_path = results_dir / "results.csv"
    if not manifest_path.exists() or not csv_path.exists():
        raise ValueError(f"{results_dir} must contain results.csv and manifest.json")
    manifest = json.loads(manifest_path.read_text())
    entries = manifest.get("experiments", [manifest] if "name" in manifest else [])
    frame = load_results(csv_path)
    written = []
    for entry in entries:
        name = entry.get("name")
        specs = specs_for_experiment(name)
        if specs is None:
            warnings.warn(f"no figure recipe for experiment {name!r}; skipping")
            continue
        for spec in specs:
            fig, _ = build_figure(frame, spec)
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            path = out / spec.output_name
            fig.savefig(path, dpi=110)
            plt.close(fig)
            written.append(path)
    return written
