"""Figure rendering for benchmark curves and solve audits."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_SWEEP_LABELS = {"q": "number of free parameters", "n": "system order"}
_MARKERS = {"dcp": "o", "altmin": "s", "pem": "^"}


def plot_success_curves(curves: dict, destination, title: str | None = None) -> None:
    """Render success rate vs sweep value, one line per method, to a file."""
    if not curves:
        raise ValueError("no curves to plot")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    variable = next(iter(curves.values())).sweep_variable
    for method in sorted(curves):
        points = sorted(curves[method].points, key=lambda pt: pt.value)
        ax.plot([pt.value for pt in points], [pt.rate for pt in points],
                marker=_MARKERS.get(method, "d"), label=method)
    ax.set_xlabel(_SWEEP_LABELS.get(variable, variable))
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.05, 1.05)
    ax.grid(True, alpha=0.4)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(destination, dpi=150)
    plt.close(fig)


def plot_objective_trace(solution, destination, title: str | None = None) -> None:
    """Render the outer-loop objective trace of a solve to a file."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    trace = solution.objective_trace
    ax.semilogy(range(1, len(trace) + 1), [max(val, 1e-300) for val in trace],
                marker="o")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("regularized objective")
    ax.grid(True, alpha=0.4)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(destination, dpi=150)
    plt.close(fig)
