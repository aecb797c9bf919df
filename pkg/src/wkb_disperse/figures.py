"""Report figures rendered headlessly next to the delimited output.

Every function takes data already computed by the library, draws one PNG,
closes the figure, and returns the path.  Nothing here recomputes physics;
the CLI feeds each figure the same arrays it writes to CSV so the two
artifacts cannot drift apart.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "decay_figure",
    "local_decay_figure",
    "kernel_figure",
    "density_figure",
    "jost_figure",
    "lemma_figure",
    "verify_figure",
]

_DPI = 130


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return str(path)


def decay_figure(scan, path):
    """Sup-norm decay against the t^(-1/2) reference line."""
    ts = np.array([row.t for row in scan.rows])
    sups = np.array([row.sup for row in scan.rows])
    guide = sups[0] * np.sqrt(ts[0] / ts)
    fig, (ax, ax2) = plt.subplots(1, 2, figsize=(8.4, 3.4))
    ax.loglog(ts, sups, "o-", label="sup |K(t)|")
    ax.loglog(ts, guide, "--", color="gray", label=r"$\propto t^{-1/2}$")
    ax.set_xlabel("t")
    ax.set_ylabel("sup over grid pairs")
    ax.legend(frameon=False)
    ax.set_title(f"{scan.model_label}: kernel decay")
    scaled = np.array([row.scaled for row in scan.rows])
    ax2.semilogx(ts, scaled, "s-", color="tab:red")
    ax2.axhline(scaled[0], color="gray", lw=0.8)
    ax2.set_xlabel("t")
    ax2.set_ylabel(r"sup $\cdot\, \sqrt{t}$")
    ax2.set_title(f"flatness spread {scan.spread():.3f}")
    return _save(fig, path)


def local_decay_figure(scan, path):
    """Fixed-box sup norm against the t^(-1) reference line."""
    ts = np.array([row.t for row in scan.rows])
    sups = np.array([row.sup for row in scan.rows])
    weighted = np.array([row.weighted for row in scan.rows])
    guide = sups[0] * ts[0] / ts
    fig, (ax, ax2) = plt.subplots(1, 2, figsize=(8.4, 3.4))
    ax.loglog(ts, sups, "o-", label="sup |K(t)| on box")
    ax.loglog(ts, guide, "--", color="gray", label=r"$\propto t^{-1}$")
    ax.set_xlabel("t")
    ax.set_ylabel(f"sup over [{scan.box[0]:g}, {scan.box[1]:g}]^2")
    ax.legend(frameon=False)
    ax.set_title(f"{scan.model_label}: local decay")
    ax2.semilogx(ts, weighted, "s-", color="tab:red")
    ax2.axhline(weighted[0], color="gray", lw=0.8)
    ax2.set_xlabel("t")
    ax2.set_ylabel(r"sup $\cdot\, t$")
    return _save(fig, path)


def kernel_figure(xs, xps, mag, t, path):
    """Heatmap of |K(t, x, x')| over the requested pair grid."""
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    mesh = ax.pcolormesh(xps, xs, mag, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label=f"|K({t:g}, x, x')|")
    ax.set_xlabel("x'")
    ax.set_ylabel("x")
    ax.set_title(f"propagator magnitude at t = {t:g}")
    return _save(fig, path)


def density_figure(lams, dens, pair, path):
    """Spectral density along the wavenumber grid at one point pair."""
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    ax.plot(lams, dens, "-", lw=1.2)
    ax.axhline(0.0, color="gray", lw=0.6)
    ax.set_xlabel("wavenumber")
    ax.set_ylabel("spectral density")
    ax.set_title(f"density at (x, x') = ({pair[0]:g}, {pair[1]:g})")
    return _save(fig, path)


def jost_figure(xs, u_plus, u_minus, lam, path):
    """Moduli and real parts of both scattering solutions."""
    fig, (ax, ax2) = plt.subplots(1, 2, figsize=(8.4, 3.4))
    ax.plot(xs, np.abs(u_plus), label="|u+|")
    ax.plot(xs, np.abs(u_minus), label="|u-|")
    ax.set_xlabel("x")
    ax.set_ylabel("modulus")
    ax.legend(frameon=False)
    ax.set_title(f"scattering solutions at wavenumber {lam:g}")
    ax2.plot(xs, np.real(u_plus), label="Re u+")
    ax2.plot(xs, np.real(u_minus), label="Re u-")
    ax2.set_xlabel("x")
    ax2.legend(frameon=False)
    return _save(fig, path)


def lemma_figure(table, path):
    """Empirical oscillatory-bound constant across window sizes."""
    ms = np.array([row.big_m for row in table.rows])
    cs = np.array([row.c_emp for row in table.rows])
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.loglog(ms, cs, "o-")
    ax.axhline(cs[0], color="gray", lw=0.8)
    ax.set_xlabel("window size M")
    ax.set_ylabel("empirical constant")
    flag = "flagged" if table.flagged else "stable"
    ax.set_title(f"{table.lemma} bound: drift {table.drift_factor:.2f} "
                 f"per decade ({flag})")
    return _save(fig, path)


def verify_figure(checks, path):
    """Margin chart: measured value vs bound for each property check."""
    names = [c["check"] for c in checks]
    # margin of 1 means exactly at the bound; smaller is better
    ratios = [max(c["value"] / c["bound"], 1e-18) if c["bound"] > 0 else 1.0
              for c in checks]
    colors = ["tab:green" if c["passed"] else "tab:red" for c in checks]
    fig, ax = plt.subplots(figsize=(6.4, 0.6 + 0.5 * len(names)))
    ax.barh(names, ratios, color=colors)
    ax.axvline(1.0, color="black", lw=1.0)
    ax.set_xscale("log")
    ax.set_xlabel("measured / bound (left of 1 passes)")
    ax.invert_yaxis()
    return _save(fig, path)
