"""Line charts of the four sweep metrics, one file per metric."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import FIGURES, PROTOCOLS, SweepPoint  # noqa: E402

LABELS = {"crp": "cluster-based", "aodv": "AODV"}
STYLE = {"crp": dict(marker="o", color="tab:blue"), "aodv": dict(marker="s", color="tab:red", linestyle="--")}


def plot_metric(points: list[SweepPoint], name: str, path: Path) -> Path:
    attr, title = FIGURES[name]
    with plt.rc_context({"svg.hashsalt": "crnroute"}):
        return _draw(points, name, attr, title, path)


def _draw(points, name, attr, title, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for proto in PROTOCOLS:
        pts = sorted((p for p in points if p.protocol == proto), key=lambda p: p.n_cr)
        xs = [p.n_cr for p in pts if getattr(p, attr) is not None]
        ys = [getattr(p, attr) for p in pts if getattr(p, attr) is not None]
        if xs:
            ax.plot(xs, ys, label=LABELS[proto], **STYLE[proto])
    ax.set_xlabel("Number of CRs")
    ax.set_ylabel(title)
    if name == "success":
        ax.set_ylim(0, 1.05)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    # fixed metadata keeps repeated renders byte-identical
    meta = {"Date": None} if path.suffix == ".svg" else {"Software": None}
    fig.savefig(path, metadata=meta)
    plt.close(fig)
    return path


def render_figures(points: list[SweepPoint], out: Path, svg: bool = False) -> list[Path]:
    ext = ".svg" if svg else ".png"
    out.mkdir(parents=True, exist_ok=True)
    return [plot_metric(points, name, out / f"fig_{name}{ext}") for name in FIGURES]
