"""Optional SVG rendering of the report tables (needs matplotlib)."""

from __future__ import annotations

from pathlib import Path


def render_svgs(report, outdir) -> list:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ImportError("SVG output needs matplotlib (pip install artifact[plots])") from exc
    outdir = Path(outdir)
    written = []
    t = report.tables

    def save(fig, name):
        fig.tight_layout()
        fig.savefig(outdir / name, format="svg")
        plt.close(fig)
        written.append(name)

    if "scatter" in t:
        df = t["scatter"]
        outs = list(dict.fromkeys(df["output"]))
        fig, axes = plt.subplots(1, len(outs), figsize=(3 * len(outs), 3), squeeze=False)
        for ax, name in zip(axes[0], outs):
            d = df[df["output"] == name]
            ax.scatter(d["y"], d["yhat"], s=2, alpha=0.4)
            lo, hi = d["y"].min(), d["y"].max()
            ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
            ax.set_title(name)
            ax.set_xlabel("y")
        axes[0][0].set_ylabel("yhat")
        save(fig, "scatter.svg")
    if "residue_histogram" in t:
        df = t["residue_histogram"]
        outs = list(dict.fromkeys(df["output"]))
        fig, axes = plt.subplots(1, len(outs), figsize=(3 * len(outs), 3), squeeze=False)
        for ax, name in zip(axes[0], outs):
            d = df[df["output"] == name]
            ax.bar(d["bin_center"], d["density"], width=d["bin_center"].diff().median(), alpha=0.5)
            for col in [c for c in d.columns if c.startswith("pdf_")]:
                ax.plot(d["bin_center"], d[col], lw=1, label=col[4:])
            ax.set_title(name)
        axes[0][0].legend(fontsize=6)
        save(fig, "residue_histogram.svg")
    if "learning_curve" in t:
        d = t["learning_curve"]
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.plot(d["size"], d["train_error"], "o-", label="train")
        ax.plot(d["size"], d["test_error"], "s-", label="test")
        ax.set_xscale("log")
        ax.set_xlabel("training rows")
        ax.legend()
        save(fig, "learning_curve.svg")
    if "pfi" in t:
        d = t["pfi"].sort_values("importance")
        fig, ax = plt.subplots(figsize=(4, max(3, 0.18 * len(d))))
        ax.barh(d["feature"], d["importance"], xerr=d["importance_std"])
        ax.set_xlabel("MSE increase")
        save(fig, "pfi.svg")
    if "uncertainty_bands" in t:
        df = t["uncertainty_bands"]
        outs = list(dict.fromkeys(df["output"]))
        fig, axes = plt.subplots(1, len(outs), figsize=(3 * len(outs), 3), squeeze=False)
        for ax, name in zip(axes[0], outs):
            d = df[df["output"] == name].sort_values("yhat")
            ax.scatter(d["yhat"], d["y"], s=2, alpha=0.3)
            ax.plot(d["yhat"], d["gum_lo"], "k-", lw=0.8)
            ax.plot(d["yhat"], d["gum_hi"], "k-", lw=0.8)
            ax.plot(d["yhat"], d["fum_lo"], "r-", lw=0.6)
            ax.plot(d["yhat"], d["fum_hi"], "r-", lw=0.6)
            ax.set_title(name)
        save(fig, "uncertainty_bands.svg")
    return written
