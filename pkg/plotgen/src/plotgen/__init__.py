"""Figure rendering for factored-ope sweep results."""

__version__ = "0.1.0"

from .core import (
    BUILTIN_SPECS,
    PlotSpec,
    build_figure,
    load_results,
    render,
    render_all,
    specs_for_experiment,
)
