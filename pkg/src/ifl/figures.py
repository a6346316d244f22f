"""Render the report tables to PNG figures next to the CSV output."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def render_gaussian_scaling(rows, out_dir: str) -> str:
    first = {}
    for r in rows:
        first.setdefault(r["N"], r)
    ns = sorted(first)
    sigma = [first[n]["sigma0_sq"] for n in ns]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    ax = axes[0]
    ax.loglog(ns, sigma, "o-", label="groundstate variance")
    if len(ns) > 1 and ns[0] > 0:
        guide = [sigma[0] * (n / ns[0]) ** 2 for n in ns]
        ax.loglog(ns, guide, "k--", lw=0.8, label="N^2 guide")
    ax.set_xlabel("N")
    ax.set_ylabel("sum_y G(0,y)^2")
    ax.legend(fontsize=8)
    ax = axes[1]
    r1 = [first[n]["sigma0_sq_over_n2log2"] for n in ns]
    r2 = [first[n]["sigma0_sq_over_n2"] for n in ns]
    if any(v is not None for v in r1):
        ax.semilogx([n for n, v in zip(ns, r1) if v], [v for v in r1 if v], "s-",
                    label="/(N^2 ln^2 N)")
    if any(v is not None for v in r2):
        ax.semilogx([n for n, v in zip(ns, r2) if v], [v for v in r2 if v], "o-",
                    label="/N^2")
    ax.set_xlabel("N")
    ax.set_ylabel("normalized variance")
    ax.legend(fontsize=8)
    return _save(fig, out_dir, "gaussian_scaling.png")


def render_testfn_scaling(rows, diag_rows, out_dir: str) -> str:
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    ax = axes[0]
    for t in sorted({r["T"] for r in rows}):
        sel = sorted((r for r in rows if r["T"] == t), key=lambda r: r["N"])
        ax.semilogx([r["N"] for r in sel], [r["bound_B_lnN_over_R2"] for r in sel],
                    "o-", label=f"T={t:g}")
    ax.set_xlabel("N")
    ax.set_ylabel("bound_B ln N / R^2")
    ax.legend(fontsize=8)
    ax = axes[1]
    pts = [r for r in diag_rows if r["h_log_ratio"] is not None]
    ax.plot([r["radius"] for r in pts], [r["h_log_ratio"] for r in pts], "o", ms=3)
    ax.axhline(1.0, color="k", lw=0.8, ls="--")
    ax.set_xlabel("|i| on axes")
    ax.set_ylabel("h(i) ln(N+1)/ln(|i|+1)")
    return _save(fig, out_dir, "testfn_scaling.png")


def render_tail_check(rows, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(7, 4))
    labels = []
    for idx, r in enumerate(rows):
        err_lo = max(0.0, r["p_hat"] - r["ci_low"])
        err_hi = max(0.0, r["ci_high"] - r["p_hat"])
        ax.errorbar(idx, r["p_hat"], yerr=[[err_lo], [err_hi]], fmt="o", ms=3, color="C0")
        ax.plot(idx, r["tail_floor"], "_", color="C3", ms=12)
        labels.append(f"N={r['N']}\nT={r['T']:g}\n#{r['draw']}")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, fontsize=6)
    ax.set_yscale("log")
    ax.set_ylabel("P(|phi_0| >= T sqrt(ln N))")
    ax.set_title("tail estimates (dots, 95% CI) vs entropy floor (dashes)", fontsize=9)
    return _save(fig, out_dir, "tail_check.png")


def render_oracle_validate(rows, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(7, 4))
    cases = [f"{r['case']}\nN={r['N']} #{r['draw']}" for r in rows]
    margin = []
    for r in rows:
        thr = abs(r["threshold"]) if r["threshold"] else 1e-12
        margin.append(abs(r["value"]) / max(thr, 1e-300) if r["comparator"] != ">=" else 0.0)
    colors = ["C2" if r["ok"] else "C3" for r in rows]
    ax.bar(range(len(rows)), np.maximum(margin, 1e-12), color=colors)
    ax.axhline(1.0, color="k", lw=0.8, ls="--")
    ax.set_yscale("log")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(cases, fontsize=5, rotation=90)
    ax.set_ylabel("|value| / threshold")
    return _save(fig, out_dir, "oracle_validate.png")


def render(kind: str, output, out_dir: str) -> list[str]:
    """Render the figures for one experiment output; returns written paths."""
    written = []
    tables = output.tables
    if kind == "gaussian-scaling":
        written.append(render_gaussian_scaling(tables["gaussian_scaling"][1], out_dir))
    elif kind == "testfn-scaling":
        written.append(
            render_testfn_scaling(
                tables["testfn_scaling"][1], tables["testfn_hitting"][1], out_dir
            )
        )
    elif kind == "tail-check":
        written.append(render_tail_check(tables["tail_check"][1], out_dir))
    elif kind == "oracle-validate":
        written.append(render_oracle_validate(tables["oracle_validate"][1], out_dir))
    return written
