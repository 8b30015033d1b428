"""
SVG figures built from metrics tables: per-round rejection rates per
service group with one line per operator, and occupancy stacked by operator
and by service. Raw series are drawn faintly under their smoothed version;
the emergency window is shaded.
"""
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from metrics import group_rejection_series, smooth  # noqa: E402

logger = logging.getLogger(__name__)

# fixed ids and no timestamp so identical data renders to identical bytes
plt.rcParams["svg.hashsalt"] = "hypervisor"
SVG_METADATA = {"Date": None}

REJECTION_GROUPS: Dict[str, Optional[Tuple[str, ...]]] = {
    "all": None,
    "voice": ("voice",),
    "video": ("video",),
    "msg": ("msg",),
}


def emergency_window(frame: pd.DataFrame) -> Optional[Tuple[int, int]]:
    """[start, end) of the emergency rounds recorded in a metrics table."""
    rounds = frame.loc[frame["mode"] == "emergency", "round"]
    if rounds.empty:
        return None
    return int(rounds.min()), int(rounds.max()) + 1


def _finish(fig, ax, window: Optional[Tuple[int, int]], path: str) -> str:
    if window is not None:
        ax.axvspan(window[0], window[1], color="tab:red", alpha=0.08, label="emergency")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper left", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    logger.info(f"Wrote figure {path}")
    return path


def plot_rejection(runs: Dict[str, pd.DataFrame], services: Optional[Sequence[str]], title: str,
                   path: str, smoothing_window: int = 25) -> str:
    """
    Rejection rate per round for a group of services, one line per (run, operator).

    Args:
        runs: metrics tables keyed by run label (e.g. ``static``, ``dynamic``)
        services: service names of the group, None for all services
        title: figure title
        path: output SVG
        smoothing_window: centered moving-average window in rounds
    """
    fig, ax = plt.subplots(figsize=(9, 4))
    window = None
    for label, frame in runs.items():
        window = window or emergency_window(frame)
        for vo in dict.fromkeys(frame["vo"]):
            series = group_rejection_series(frame, vo=vo, services=services)
            rounds = list(series.index)
            raw = [None if pd.isna(v) else float(v) for v in series]
            smoothed = smooth(raw, smoothing_window)
            name = f"{vo} ({label})" if len(runs) > 1 else vo
            line, = ax.plot(rounds, [float("nan") if v is None else v for v in smoothed], label=name)
            ax.plot(rounds, [float("nan") if v is None else v for v in raw],
                    color=line.get_color(), alpha=0.2, linewidth=0.6)
    ax.set_title(title)
    ax.set_xlabel("round")
    ax.set_ylabel("rejection rate")
    ax.set_ylim(-0.02, 1.02)
    return _finish(fig, ax, window, path)


def plot_occupancy(frame: pd.DataFrame, by: str, title: str, path: str, smoothing_window: int = 25) -> str:
    """Occupancy per round stacked by ``vo`` or ``service`` (smoothed), with the raw total on top."""
    if by not in ("vo", "service"):
        raise ValueError(f"occupancy can be stacked by 'vo' or 'service', not {by!r}")
    table = frame.pivot_table(index="round", columns=by, values="occupancy", aggfunc="sum", sort=False)
    table = table.fillna(0.0)
    rounds = list(table.index)
    layers = [smooth(list(table[col]), smoothing_window) for col in table.columns]

    fig, ax = plt.subplots(figsize=(9, 4))
    ax.stackplot(rounds, layers, labels=[str(c) for c in table.columns], alpha=0.8)
    ax.plot(rounds, list(table.sum(axis=1)), color="black", alpha=0.3, linewidth=0.6, label="total (raw)")
    ax.set_title(title)
    ax.set_xlabel("round")
    ax.set_ylabel("occupied fraction")
    ax.set_ylim(0.0, 1.02)
    return _finish(fig, ax, emergency_window(frame), path)


def render_figures(runs: Dict[str, pd.DataFrame], out_dir: str, smoothing_window: int = 25) -> List[str]:
    """
    Write the full figure set for one or more labelled runs.

    Returns:
        Paths of the SVG files written
    """
    os.makedirs(out_dir, exist_ok=True)
    runs = {label: frame for label, frame in runs.items() if not frame.empty}
    if not runs:
        logger.warning("No metric rows to plot; skipping figures")
        return []

    written = []
    for group, services in REJECTION_GROUPS.items():
        path = os.path.join(out_dir, f"rejection_{group}.svg")
        written.append(plot_rejection(runs, services, f"Rejection rate ({group})", path, smoothing_window))
    for label, frame in runs.items():
        suffix = f"_{label}" if len(runs) > 1 else ""
        for by in ("vo", "service"):
            path = os.path.join(out_dir, f"occupancy_by_{by}{suffix}.svg")
            title = f"Occupancy by {'operator' if by == 'vo' else 'service'}" + (f" ({label})" if suffix else "")
            written.append(plot_occupancy(frame, by, title, path, smoothing_window))
    return written
