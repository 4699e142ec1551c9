"""
Navigation metrics over evaluated episodes.

    SR   mean S_i
    SPL  mean S_i * l_i / max(p_i, l_i)
    SNA  mean S_i * m_i / max(n_i, m_i)
    DTG  mean final geodesic distance to the goal (NE is the same number)
    SWS  mean S_i over episodes whose sound stopped before the end
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence
import csv
import json
import os

import numpy as np

from ..exceptions import ValidationError

METRIC_NAMES = ("SR", "SPL", "SNA", "DTG", "SWS", "NE")


@dataclass
class EpisodeRecord:
    """
    Outcome of one evaluation episode.

    Attributes:
        episode: Episode index within the evaluation run
        world_seed: Seed of the world it ran in
        success: S_i
        path_length: p_i, MoveForward transitions that changed cell
        shortest_length: l_i, MoveForward steps on the shortest path
        num_actions: n_i, all actions including Stop
        min_actions: m_i, actions of the shortest-path plan including Stop
        final_distance: Geodesic distance to the goal at the end
        sound_stopped: The sound stopped before the episode ended
        spec: Episode definition
        poses: Visited poses [row, col, heading], p_0 first
        actions: Taken action values
        descriptions: Decoded description per step, when requested
    """
    episode: int
    world_seed: int
    success: bool
    path_length: int
    shortest_length: int
    num_actions: int
    min_actions: int
    final_distance: float
    sound_stopped: bool
    spec: Dict[str, Any] = field(default_factory=dict)
    poses: List[List[int]] = field(default_factory=list)
    actions: List[str] = field(default_factory=list)
    descriptions: Optional[List[str]] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "EpisodeRecord":
        return cls(**json.loads(line))


def compute_metrics(records: Sequence[EpisodeRecord]) -> Dict[str, Optional[float]]:
    """
    Aggregate metrics; SWS is None when no episode had its sound stop.

    Raises:
        ValidationError: If records is empty
    """
    if not records:
        raise ValidationError("No episode records to aggregate", field="records")
    success = np.array([float(r.success) for r in records])
    shortest = np.array([float(r.shortest_length) for r in records])
    path = np.array([float(r.path_length) for r in records])
    min_actions = np.array([float(r.min_actions) for r in records])
    num_actions = np.array([float(r.num_actions) for r in records])
    stopped = np.array([r.sound_stopped for r in records], dtype=bool)

    spl = success * shortest / np.maximum(np.maximum(path, shortest), 1.0)
    sna = success * min_actions / np.maximum(np.maximum(num_actions, min_actions), 1.0)
    dtg = float(np.mean([r.final_distance for r in records]))
    return {
        "SR": float(success.mean()),
        "SPL": float(spl.mean()),
        "SNA": float(sna.mean()),
        "DTG": dtg,
        "SWS": float(success[stopped].mean()) if stopped.any() else None,
        "NE": dtg,
    }


# ==================== Output ====================

def write_records(path: str, records: Iterable[EpisodeRecord]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(record.to_json() + "\n")


def read_records(path: str) -> List[EpisodeRecord]:
    with open(path, "r", encoding="utf-8") as f:
        return [EpisodeRecord.from_json(line) for line in f if line.strip()]


def _cell(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def write_metrics_csv(path: str, rows: Sequence[Dict[str, Any]], columns: Sequence[str] = METRIC_NAMES) -> None:
    """One CSV row per entry; extra keys (run name, seed) come first."""
    keys = [k for k in rows[0] if k not in columns] if rows else []
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(keys + list(columns))
        for row in rows:
            writer.writerow(
                [row.get(k, "") for k in keys]
                + [_cell(row.get(c)) if not isinstance(row.get(c), str) else row[c] for c in columns]
            )


def format_table(rows: Sequence[Dict[str, Any]], columns: Sequence[str] = METRIC_NAMES) -> str:
    """Fixed-width text table for terminal output."""
    if not rows:
        return ""
    keys = [k for k in rows[0] if k not in columns]
    header = keys + list(columns)
    body = []
    for row in rows:
        cells = [str(row.get(k, "")) for k in keys]
        for c in columns:
            value = row.get(c)
            cells.append("-" if value is None else (value if isinstance(value, str) else f"{value:.3f}"))
        body.append(cells)
    widths = [max(len(h), *(len(r[i]) for r in body)) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in body)
    return "\n".join(lines)


def summarize(values: Sequence[Optional[float]]) -> str:
    """'mean±std' over seeds, skipping absent values."""
    present = [v for v in values if v is not None]
    if not present:
        return "-"
    return f"{np.mean(present):.3f}±{np.std(present):.3f}"
