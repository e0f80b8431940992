"""Figure rendering for run and study reports.

Every function takes plain arrays, writes one PNG next to the delimited
output, and returns the path it wrote.  Rendering is headless (Agg);
nothing here ever opens a window.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["energy_figure", "q_history_figure", "separation_figure",
           "convergence_figure", "field_error_figure", "two_body_figure"]

_DPI = 130


def energy_figure(path, times, energies, h0: float) -> str:
    """Total energy and its relative drift against time."""
    times = np.asarray(times, dtype=float)
    energies = np.asarray(energies, dtype=float)
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7.0, 5.6), sharex=True)
    ax0.plot(times, energies, lw=1.0, color="tab:blue")
    ax0.axhline(h0, color="0.6", lw=0.8, ls="--", label=f"H(0) = {h0:.6g}")
    ax0.set_ylabel("total energy H")
    ax0.legend(loc="best", fontsize=8)
    scale = max(abs(h0), 1e-300)
    drift = np.abs(energies - h0) / scale
    ax1.semilogy(times, np.maximum(drift, 1e-18), lw=1.0, color="tab:red")
    ax1.set_xlabel("t")
    ax1.set_ylabel("|H(t) - H(0)| / |H(0)|")
    ax1.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return str(path)


def q_history_figure(path, times, q_running, window_boundaries=(),
                     envelope=None) -> str:
    """Running energy-scale bound Q(t), window boundaries, fitted envelope.

    envelope: optional (q0, C) pair drawing (q0 + C) exp(C (1 + t)).
    """
    times = np.asarray(times, dtype=float)
    q_running = np.asarray(q_running, dtype=float)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(times, q_running, lw=1.2, color="tab:blue", label="Q(t) running sup")
    for i, b in enumerate(window_boundaries):
        ax.axvline(b, color="0.8", lw=0.6,
                   label="window boundaries" if i == 0 else None)
    if envelope is not None:
        q0, c = envelope
        tt = np.linspace(times[0], times[-1], 256)
        ax.plot(tt, (q0 + c) * np.exp(c * (1.0 + tt)), color="tab:orange",
                ls="--", lw=1.0, label=f"(Q0 + C) exp(C (1 + t)), C = {c:.4g}")
    ax.set_xlabel("t")
    ax.set_ylabel("Q")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return str(path)


def separation_figure(path, times, min_charge_distance,
                      min_charge_separation, lam: float,
                      epsilon: float) -> str:
    """Minimum plasma-charge and charge-charge distances against the
    1/(2 H0) floor and the regularisation radius."""
    times = np.asarray(times, dtype=float)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    d = np.asarray(min_charge_distance, dtype=float)
    s = np.asarray(min_charge_separation, dtype=float)
    if np.any(np.isfinite(d)):
        ax.semilogy(times, d, lw=1.0, color="tab:blue",
                    label="min plasma-charge distance")
    if np.any(np.isfinite(s)):
        ax.semilogy(times, s, lw=1.0, color="tab:green",
                    label="min charge-charge separation")
    ax.axhline(lam, color="tab:red", ls="--", lw=1.0,
               label=f"1 / (2 H0) = {lam:.4g}")
    ax.axhline(epsilon, color="0.5", ls=":", lw=1.0,
               label=f"epsilon = {epsilon:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("distance")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return str(path)


def convergence_figure(path, xs, ys, xlabel: str, ylabel: str,
                       title: str = "", order: float | None = None) -> str:
    """Log-log convergence plot with an optional fitted-order guide line."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.4))
    ax.loglog(xs, np.maximum(ys, 1e-18), "o-", color="tab:blue", lw=1.0)
    if order is not None and len(xs) >= 2 and ys.max() > 0:
        ref = ys.max() * (xs / xs[ys.argmax()]) ** order
        ax.loglog(xs, np.maximum(ref, 1e-18), "--", color="0.6",
                  label=f"slope {order:.3g}")
        ax.legend(loc="best", fontsize=8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title, fontsize=10)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return str(path)


def field_error_figure(path, thetas, max_errors, mean_errors) -> str:
    """Tree-solver accuracy against the opening angle."""
    thetas = np.asarray(thetas, dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.4))
    ax.semilogy(thetas, np.maximum(np.asarray(max_errors, float), 1e-18),
                "o-", color="tab:red", label="max relative error")
    ax.semilogy(thetas, np.maximum(np.asarray(mean_errors, float), 1e-18),
                "s-", color="tab:blue", label="mean relative error")
    ax.set_xlabel("opening angle theta")
    ax.set_ylabel("relative error vs direct sum")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return str(path)


def two_body_figure(path, times, x, xi) -> str:
    """Reference two-body solution: separation history and planar view."""
    times = np.asarray(times, dtype=float)
    x = np.asarray(x, dtype=float)    # (T, 3)
    xi = np.asarray(xi, dtype=float)  # (T, 3)
    sep = np.linalg.norm(x - xi, axis=1)
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9.0, 4.2))
    ax0.plot(times, sep, lw=1.0, color="tab:blue")
    ax0.set_xlabel("t")
    ax0.set_ylabel("|x - xi|")
    ax0.grid(True, alpha=0.3)
    ax1.plot(x[:, 0], x[:, 1], lw=1.0, color="tab:blue", label="particle")
    ax1.plot(xi[:, 0], xi[:, 1], lw=1.0, color="tab:red", label="charge")
    ax1.plot(x[0, 0], x[0, 1], "o", color="tab:blue", ms=4)
    ax1.plot(xi[0, 0], xi[0, 1], "o", color="tab:red", ms=4)
    ax1.set_xlabel("x")
    ax1.set_ylabel("y")
    ax1.set_aspect("equal", adjustable="datalim")
    ax1.legend(loc="best", fontsize=8)
    ax1.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return str(path)
