"""
Text rendering of evaluated episodes for failure analysis.

Map legend:
    #  wall          .  free cell       *  visited
    G  goal cell     o  other object    ^ > v <  final agent pose
"""

from typing import List, Optional

from ..core.base import Action, Heading
from ..env.sim import EpisodeSpec, goal_cells
from ..env.world import World, label_name
from .metrics import EpisodeRecord

ARROWS = {Heading.N: "^", Heading.E: ">", Heading.S: "v", Heading.W: "<"}


def render_map(world: World, record: EpisodeRecord) -> str:
    spec = EpisodeSpec.from_dict(record.spec)
    goals = set(goal_cells(world, spec))
    visited = {(p[0], p[1]) for p in record.poses}
    final = record.poses[-1] if record.poses else None
    rows = []
    for r in range(world.height):
        line = []
        for c in range(world.width):
            cell = (r, c)
            if final is not None and cell == (final[0], final[1]):
                line.append(ARROWS[Heading(final[2])])
            elif not world.is_free(cell):
                line.append("#")
            elif cell in goals:
                line.append("G")
            elif world.object_at(cell) is not None:
                line.append("o")
            elif cell in visited:
                line.append("*")
            else:
                line.append(".")
        rows.append("".join(line))
    return "\n".join(rows)


def render_episode(world: World, record: EpisodeRecord) -> str:
    """Header, map and one line per step with pose, action and description."""
    spec = EpisodeSpec.from_dict(record.spec)
    goal = world.objects[spec.goal]
    status = "success" if record.success else "failure"
    lines = [
        f"episode {record.episode} world {record.world_seed}: {status}, "
        f"goal {label_name(goal.label)} at {goal.cell}, final distance {record.final_distance:g}",
        render_map(world, record),
    ]
    for t, action in enumerate(record.actions):
        pose = record.poses[t]
        text: Optional[str] = None
        if record.descriptions is not None and t < len(record.descriptions):
            text = record.descriptions[t]
        step = f"t={t:3d} ({pose[0]},{pose[1]}) {Heading(pose[2]).name} {Action(action).short}"
        lines.append(step + (f" | {text}" if text else ""))
    return "\n".join(lines)


def render_records(worlds_by_seed, records: List[EpisodeRecord], failures_only: bool = False) -> str:
    blocks = [
        render_episode(worlds_by_seed(r.world_seed), r)
        for r in records
        if not (failures_only and r.success)
    ]
    return "\n\n".join(blocks)
