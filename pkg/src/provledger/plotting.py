"""Render benchmark rows to a PNG next to the CSV.

One figure per experiment:

* retrieval - mean extraction time against chain length, one panel per
  case count, one line per method;
* overhead  - box plot of per-block sealing time with and without case roots;
* txtime    - box plot of apply time per transaction kind plus the
  Write/Read baselines.

Boxes follow the usual convention (whiskers at 1.5 IQR). Rows read back
from a CSV carry no raw samples, so their boxes are drawn from the stored
quartiles with the upper whisker capped at the recorded maximum.
"""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bench import BenchRow  # noqa: E402

_US = 1e3  # ns per microsecond


def _retrieval(ax_row, rows: Sequence[BenchRow]) -> None:
    by_cases: dict[int, dict[str, list[tuple[int, float]]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        by_cases[r.cases][r.method_or_kind].append((r.blocks, r.mean_ns / 1e6))
    for ax, cases in zip(ax_row, sorted(by_cases)):
        for method, pts in sorted(by_cases[cases].items()):
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
        ax.set_title(f"{cases} cases")
        ax.set_xlabel("blocks")
        ax.grid(alpha=0.3)
    ax_row[0].set_ylabel("mean extraction time (ms)")
    ax_row[0].legend(fontsize="small")


def _box_stats(r: BenchRow) -> dict:
    iqr = r.q3_ns - r.q1_ns
    return {
        "label": r.method_or_kind,
        "med": r.median_ns / _US,
        "q1": r.q1_ns / _US,
        "q3": r.q3_ns / _US,
        "whislo": max(0.0, r.q1_ns - 1.5 * iqr) / _US,
        "whishi": min(r.max_ns, r.q3_ns + 1.5 * iqr) / _US,
        "mean": r.mean_ns / _US,
        "fliers": [],
    }


def _boxes(ax, rows: Sequence[BenchRow], ylabel: str) -> None:
    if all(r.values for r in rows):
        ax.boxplot([[v / _US for v in r.values] for r in rows], whis=1.5, showmeans=True,
                   showfliers=False)
        ax.set_xticks(range(1, len(rows) + 1), [r.method_or_kind for r in rows])
    else:
        ax.bxp([_box_stats(r) for r in rows], showmeans=True, showfliers=False)
    ax.set_ylabel(ylabel)
    ax.tick_params(axis="x", labelrotation=30)
    ax.grid(axis="y", alpha=0.3)


def plot_rows(rows: Sequence[BenchRow], path: str | Path) -> Path:
    """Draw every experiment present in ``rows`` into one PNG at ``path``."""
    groups: dict[str, list[BenchRow]] = defaultdict(list)
    for r in rows:
        groups[r.experiment].append(r)
    if not groups:
        raise ValueError("no rows to plot")

    n_ret = len({r.cases for r in groups.get("retrieval", ())})
    panels = [(name, n_ret if name == "retrieval" else 1) for name in groups]
    width = max(n for _, n in panels)
    fig, axes = plt.subplots(len(panels), width, figsize=(4.2 * width, 3.6 * len(panels)),
                             squeeze=False)
    for (name, n), ax_row in zip(panels, axes):
        for extra in ax_row[n:]:
            extra.set_visible(False)
        if name == "retrieval":
            _retrieval(ax_row[:n], groups[name])
        elif name == "overhead":
            _boxes(ax_row[0], groups[name], "sealing time per block (us)")
            r0 = groups[name][0]
            ax_row[0].set_title(f"{r0.blocks} blocks, {r0.cases} cases")
        else:
            _boxes(ax_row[0], groups[name], "apply time (us)")
            ax_row[0].set_title(name)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out
