"""
Static figures written next to the CSV outputs (non-interactive Agg backend).
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .stability import surface_trace  # noqa: E402

RC = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "savefig.bbox": "tight",
    # deterministic output: no creation timestamps in the files
    "svg.hashsalt": "gelwrinkle",
}


def _save(fig, path):
    fig.savefig(path, metadata={"Software": None} if str(path).endswith(".png") else None)
    plt.close(fig)
    return path


def plot_timeseries(records, path, report=None):
    """Growth g(t) with unstable steps highlighted and the located onset marked."""
    with plt.rc_context(RC):
        fig, (ax, bx) = plt.subplots(2, 1, sharex=True, figsize=(5.0, 4.8))
        t = np.array([r.t for r in records])
        g = np.array([r.g for r in records])
        neg = np.array([r.n_negative for r in records])
        ax.plot(t, g, "-", color="C0", lw=1.2)
        if np.any(neg > 0):
            ax.plot(t[neg > 0], g[neg > 0], "x", color="C3", label="K indefinite")
        if report is not None and report.found:
            ax.axhline(report.g_c, color="C3", ls="--", lw=0.8, label=f"g_c = {report.g_c:.2f} µm")
            ax.legend(frameon=False)
        ax.set_ylabel("growth g [µm]")
        vol = np.array([r.fluid_volume for r in records])
        bx.plot(t, vol, "-", color="C2", lw=1.2)
        bx.set_ylabel("fluid volume [mm³]")
        bx.set_xlabel("time t [s]")
        return _save(fig, path)


def plot_mode(mode, mesh, path, N_c=None):
    """Surface-normal trace of the critical mode along the film surface."""
    trace, coord = surface_trace(mode, mesh)
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        if mesh.periodic:
            ax.plot(np.degrees(coord), trace, "-", color="C0", lw=1.2)
            ax.set_xlabel("polar angle [deg]")
        else:
            ax.plot(coord, trace, "-", color="C0", lw=1.2)
            ax.set_xlabel("x [mm]")
        ax.axhline(0.0, color="k", lw=0.5)
        ax.set_ylabel("normal mode displacement")
        if N_c is not None:
            ax.set_title(f"critical mode, N_c = {N_c:g}")
        return _save(fig, path)


def plot_sweep(parameter, rows, path):
    """Critical growth and wrinkle count against the swept parameter."""
    ok = [r for r in rows if r.get("status") == "ok"]
    with plt.rc_context(RC):
        fig, (ax, bx) = plt.subplots(1, 2, figsize=(8.0, 3.4))
        if ok:
            x = [r["value"] for r in ok]
            ax.plot(x, [r["g_c"] for r in ok], "o-", color="C0")
            bx.plot(x, [r["N_c"] for r in ok], "s-", color="C1")
        for a in (ax, bx):
            a.set_xlabel(parameter)
        ax.set_ylabel("critical growth g_c [µm]")
        bx.set_ylabel("wrinkle count N_c")
        return _save(fig, path)
