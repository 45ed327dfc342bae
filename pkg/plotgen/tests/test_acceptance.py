"""Secondary acceptance: render every builtin-experiment figure from a
results.csv produced by the primary CLI, checking one series per estimator
and error bars equal to the std column.

The results file is produced by invoking ``factored-ope sweep`` as a
subprocess (plotgen consumes the sweep harness only through its files and
CLI).  Smoke-scale grids keep the run fast; the rendering contract being
verified does not depend on the data scale.
"""

import csv
import shutil
import subprocess

import pytest

from plotgen import PlotSpec, build_figure, load_results, render_all
from plotgen.core import BUILTIN_SPECS

pytestmark = pytest.mark.skipif(
    shutil.which("factored-ope") is None,
    reason="factored-ope CLI not installed; secondary acceptance needs the primary package")


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    subprocess.run(
        ["factored-ope", "sweep", "--builtin", "all", "--smoke", "--out-dir", str(out)],
        check=True, capture_output=True, text=True, timeout=600)
    return out


def test_criterion_12_render_all_builtin_figures(sweep_dir, tmp_path):
    written = render_all(sweep_dir, tmp_path / "figs")
    expected = sum(len(v) for v in BUILTIN_SPECS.values())
    ok = len(written) == expected and all(p.exists() and p.stat().st_size > 0 for p in written)
    print(f"ACCEPTANCE 12 plotgen renders all builtin figures: "
          f"{'PASS' if ok else 'FAIL'} ({len(written)}/{expected} figures)")
    assert ok


def test_criterion_12_series_and_error_bars_match_csv(sweep_dir):
    frame = load_results(sweep_dir / "results.csv")
    spec = PlotSpec(x="N", metric="variance", experiment="fig1_var_mse_vs_N")
    fig, ax = build_figure(frame, spec)
    estimators = {"onpolicy", "is", "pdis", "pdwis", "decis", "decpdis", "decpdwis"}
    assert {c.get_label() for c in ax.containers} == estimators

    by_est = {}
    with open(sweep_dir / "results.csv") as fh:
        for row in csv.DictReader(fh):
            if row["experiment"] == "fig1_var_mse_vs_N" and row["metric"] == "variance":
                by_est.setdefault(row["estimator"], []).append(
                    (int(row["N"]), float(row["mean"]), float(row["std"])))
    for container in ax.containers:
        expected = sorted(by_est[container.get_label()])
        segments = container[2][0].get_segments()
        assert len(segments) == len(expected)
        for seg, (_, mean, std) in zip(segments, expected):
            lo, hi = seg[0][1], seg[1][1]
            assert hi - lo == pytest.approx(2 * std, rel=1e-6, abs=1e-12)
