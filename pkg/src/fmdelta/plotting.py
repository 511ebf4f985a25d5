"""SVG charts of bench results: one panel per algorithm, one line per mode."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .pktgen import MODES  # noqa: E402

PANELS = {
    "baseline": ("zlib level", "Baseline (zlib)"),
    "fm-delta": ("word size (bytes)", "FM-Delta"),
}
STYLE = {"ordered": dict(color="tab:blue", marker="o"), "random": dict(color="tab:orange", marker="s")}

# fixed salt and no date keep the SVG bytes reproducible
_RC = {"svg.hashsalt": "fmdelta", "svg.fonttype": "path", "font.size": 9}


def render_svg(results) -> bytes:
    results = list(results)
    algorithms = [a for a in PANELS if any(r.algorithm == a for r in results)]
    if not algorithms:
        raise ValueError("no plottable results")
    with matplotlib.rc_context(_RC):
        fig, axes = plt.subplots(1, len(algorithms), figsize=(4.2 * len(algorithms), 3.4), squeeze=False)
        try:
            for ax, algorithm in zip(axes[0], algorithms):
                _panel(ax, algorithm, [r for r in results if r.algorithm == algorithm])
            fig.tight_layout()
            buf = io.BytesIO()
            fig.savefig(buf, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return buf.getvalue()


def _panel(ax, algorithm: str, rows) -> None:
    xlabel, title = PANELS[algorithm]
    for mode in MODES:
        series = sorted((r for r in rows if r.mode == mode), key=lambda r: r.parameter)
        if not series:
            continue
        xs = [r.parameter for r in series]
        ax.plot(xs, [r.ratio for r in series], label=mode, gid=f"series-{algorithm}-{mode}", **STYLE[mode])
        lo, hi = [r.ratio_min for r in series], [r.ratio_max for r in series]
        if lo != hi:
            ax.fill_between(xs, lo, hi, color=STYLE[mode]["color"], alpha=0.15, linewidth=0)
    if algorithm == "fm-delta":
        ax.set_xscale("log", base=2)
        ax.set_xticks(sorted({r.parameter for r in rows}))
        ax.get_xaxis().set_major_formatter(matplotlib.ticker.ScalarFormatter())
        ax.minorticks_off()
    else:
        ax.set_xticks(sorted({r.parameter for r in rows}))
    ax.set_xlabel(xlabel)
    ax.set_ylabel("compression ratio")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(frameon=False)
