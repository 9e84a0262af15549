"""Figure rendering for fit reports: profile surfaces and weight curves.

All functions write PNG files into an output directory and return the list
of written paths.  The delimited tables remain the canonical outputs; the
figures are a convenience layer over them.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .weights import duration_weight, memory_weight


def _tau_tag(tau) -> str:
    return "none" if tau is None else f"{tau:g}"


def _grid_axes(rows):
    psi_s = sorted({r.psi_s for r in rows})
    psi_e = sorted({r.psi_e for r in rows})
    return psi_s, psi_e


def _surface(rows, psi_s, psi_e, value):
    z = np.full((len(psi_e), len(psi_s)), np.nan)
    si = {v: k for k, v in enumerate(psi_s)}
    ei = {v: k for k, v in enumerate(psi_e)}
    for r in rows:
        v = value(r)
        if v is not None and np.isfinite(v):
            z[ei[r.psi_e], si[r.psi_s]] = v
    return z


def _draw_surface(ax, psi_s, psi_e, z, chosen, title):
    if len(psi_s) >= 2 and len(psi_e) >= 2 and np.isfinite(z).sum() >= 4:
        mesh = ax.contourf(psi_s, psi_e, z, levels=20, cmap="viridis")
        contours = ax.contour(psi_s, psi_e, z, levels=10, colors="white", linewidths=0.6)
        ax.clabel(contours, inline=True, fontsize=7, fmt="%.2f")
        plt.colorbar(mesh, ax=ax)
    else:
        mesh = ax.imshow(z, origin="lower", aspect="auto", cmap="viridis",
                         extent=(min(psi_s) - 0.5, max(psi_s) + 0.5,
                                 min(psi_e) - 0.5, max(psi_e) + 0.5))
        plt.colorbar(mesh, ax=ax)
    if chosen is not None:
        ax.plot([chosen[0]], [chosen[1]], "o", color="red", markersize=8)
    ax.set_xlabel(r"$\psi_s$")
    ax.set_ylabel(r"$\psi_e$")
    ax.set_title(title)


def render_profile(fit, out_dir) -> list[Path]:
    """Log-likelihood surface over (psi_s, psi_e), one figure per half-life."""
    out_dir = Path(out_dir)
    written = []
    taus = sorted({r.tau for r in fit.grid_profile}, key=lambda v: (v is not None, v or 0.0))
    for tau in taus:
        rows = [r for r in fit.grid_profile if r.tau == tau]
        psi_s, psi_e = _grid_axes(rows)
        z = _surface(rows, psi_s, psi_e, lambda r: r.loglik)
        if not np.isfinite(z).any():
            continue
        fig, ax = plt.subplots(figsize=(6, 5))
        chosen = fit.chosen[:2] if fit.chosen[2] == tau else None
        _draw_surface(ax, psi_s, psi_e, z, chosen,
                      f"profile log-likelihood (tau = {_tau_tag(tau)})")
        fig.tight_layout()
        path = out_dir / f"profile_loglik_tau_{_tau_tag(tau)}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def render_coefficient_surfaces(fit, out_dir) -> list[Path]:
    """Per-coefficient estimate surfaces at the selected half-life."""
    out_dir = Path(out_dir)
    written = []
    tau = fit.chosen[2]
    rows = [r for r in fit.grid_profile if r.tau == tau and r.coef is not None]
    if not rows:
        return written
    psi_s, psi_e = _grid_axes(rows)
    if len(psi_s) < 2 or len(psi_e) < 2:
        return written
    labels = [f"start:{c}" for c in fit.start_cols] + [f"end:{c}" for c in fit.end_cols]
    for k, label in enumerate(labels):
        z = _surface(rows, psi_s, psi_e, lambda r: r.coef[k])
        if not np.isfinite(z).any():
            continue
        fig, ax = plt.subplots(figsize=(6, 5))
        _draw_surface(ax, psi_s, psi_e, z, fit.chosen[:2], f"estimate: {label}")
        fig.tight_layout()
        safe = label.replace(":", "_").replace("/", "_")
        path = out_dir / f"coef_{safe}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def render_weight_curves(psi_s, psi_e, tau, floor, out_dir,
                         durations=(0.5, 1.0, 2.0, 5.0), horizon=None) -> list[Path]:
    """Event weight against time since the event, one line per duration."""
    out_dir = Path(out_dir)
    if horizon is None:
        horizon = 4.0 * tau if tau is not None else 10.0
    elapsed = np.linspace(0.0, horizon, 200)
    written = []
    for side, psi in (("start", psi_s), ("end", psi_e)):
        fig, ax = plt.subplots(figsize=(6, 4))
        for d in durations:
            w = np.array([duration_weight(d, psi, floor) * memory_weight(u, tau)
                          for u in elapsed])
            ax.plot(elapsed, w, label=f"duration {d:g}")
        ax.set_xlabel("time since event")
        ax.set_ylabel("event weight")
        ax.set_title(f"{side} model weight (psi = {psi:g}, tau = {_tau_tag(tau)})")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"weights_{side}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def render_all(fit, out_dir) -> list[Path]:
    """Render every report figure for a fit result."""
    written = render_profile(fit, out_dir)
    written += render_coefficient_surfaces(fit, out_dir)
    psi_s, psi_e, tau = fit.chosen
    written += render_weight_curves(psi_s, psi_e, tau, fit.duration_floor, out_dir)
    return written
