"""PNG figures for experiment reports.

Kept out of the numerical modules: only the CLI report path imports this.
Figures are rendered with the Agg backend and without timestamp metadata,
so identical reports give identical files.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.8),
    "figure.dpi": 100,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, folder, name):
    path = os.path.join(folder, name)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return name


def _figure(xlabel, ylabel, title):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return fig, ax


def _positive(v):
    v = np.asarray(v, dtype=float)
    return np.where(v > 0, v, np.nan)


def snapshots(ensemble, folder):
    fig, ax = _figure("x1", "density", "particle cloud")
    pts = ensemble.states
    for k in sorted({0, pts.shape[0] // 2, pts.shape[0] - 1}):
        ax.hist(pts[k, :, 0], bins=60, density=True, histtype="step",
                label=f"t = {ensemble.times[k]:g}")
    ax.legend()
    return [_save(fig, folder, "snapshots.png")]


def contraction(report, folder):
    fig, ax = _figure("t", "W2^2", "coupled contraction")
    ax.semilogy(report.times, _positive(report.w2_values**2), label="measured")
    ax.semilogy(report.times, report.bound, "--", label=f"bound, lambda = {report.declared_lambda:g}")
    ax.axhline(report.noise_floor**2, color="grey", lw=0.8, label="noise floor")
    ax.axvspan(*report.fit_window, color="C2", alpha=0.08)
    ax.legend()
    return [_save(fig, folder, "contraction.png")]


def ergodicity(report, folder):
    fig, ax = _figure("t", "W2^2 to invariant estimate", "ergodic decay")
    ax.semilogy(report.times, _positive(report.w2_sq), label="measured")
    ax.semilogy(report.times, report.bound, "--", label="bound")
    ax.axhline(report.noise_floor**2, color="grey", lw=0.8, label="noise floor")
    ax.legend()
    return [_save(fig, folder, "ergodicity.png")]


def invariant(estimate, folder, reference=None):
    fig, ax = _figure("x1", "density", "invariant estimate")
    ax.hist(estimate.cloud.points[:, 0], bins=60, density=True, alpha=0.6, label="particles")
    if reference is not None:
        ax.hist(reference, bins=60, density=True, histtype="step", label="reference law")
    ax.legend()
    return [_save(fig, folder, "invariant.png")]


def moments(report, folder):
    fig, ax = _figure("T", "sup second moment", "uniform moment bound")
    ax.plot(report.horizons, report.sups, "o-")
    return [_save(fig, folder, "moments.png")]


def index_gaps(indices, values, ylabel, title, folder, name):
    fig, ax = _figure("n", ylabel, title)
    ax.loglog(indices, _positive(values), "o-")
    return [_save(fig, folder, name)]


def penalization(report, folder):
    fig, ax = _figure("epsilon", "sup mean-square gap", "penalization limit")
    ax.loglog(report.epsilons, _positive(report.sup_mse), "o-")
    ax.invert_xaxis()
    return [_save(fig, folder, "penalization.png")]


def invariant_convergence(report, folder):
    fig, ax = _figure("n", "W2 to limit estimate", "invariant-measure convergence")
    ax.loglog(report.indices, _positive(report.w2_gap), "o-", label="W2")
    ax.loglog(report.indices, _positive(report.w1_gap), "s-", label="W1")
    ax.axhline(report.floor, color="grey", lw=0.8, label="Monte-Carlo floor")
    ax.legend()
    return [_save(fig, folder, "invariant_convergence.png")]
