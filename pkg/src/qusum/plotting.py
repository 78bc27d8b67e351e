"""Static figures for trade-off curves (matplotlib, file output only)."""

import math
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata so repeated runs write identical SVG files
_SVG_METADATA = {"Date": None, "Creator": None}


def plot_tradeoff(results: Sequence, path, title: str = "") -> None:
    """Delay against ln T_FA with error bars, the fitted line and the two
    reference slopes (1/D(q||p) for the measurement, 1/D(sigma||rho) for the
    quantum bound) drawn through the fitted intercept."""
    plt.rcParams["svg.hashsalt"] = "qusum"
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for k, res in enumerate(results):
        color = f"C{k}"
        x = np.log([r.tfa_mean for r in res.rows])
        y = np.array([r.delay_mean for r in res.rows])
        xerr = np.array([r.tfa_stderr / r.tfa_mean for r in res.rows])
        yerr = np.array([r.delay_stderr for r in res.rows])
        label = res.label or f"l={res.block_l}"
        ax.errorbar(x, y, xerr=xerr, yerr=yerr, fmt="o", ms=4, color=color, label=f"{label} (simulated)")
        xs = np.linspace(x.min(), x.max(), 50)
        f = res.fit
        ax.plot(xs, f.intercept + f.slope * xs, "-", color=color, lw=1, label=f"fit slope {f.slope:.3f}")
        ax.plot(xs, f.intercept + f.theory_slope * xs, "--", color=color, lw=0.8,
                label=f"1/D(q||p) = {f.theory_slope:.3f}")
        if math.isfinite(f.quantum_slope):
            ax.plot(xs, f.intercept + f.quantum_slope * xs, ":", color="k", lw=0.8,
                    label=f"1/D(sigma||rho) = {f.quantum_slope:.3f}" if k == 0 else None)
    ax.set_xlabel("ln T_FA")
    ax.set_ylabel("mean detection delay (states)")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, metadata=_SVG_METADATA if str(path).endswith(".svg") else None)
    plt.close(fig)
