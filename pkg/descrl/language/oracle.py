"""
Rule-based action describer.

Turns a window of a trajectory into a templated description:

    "turn <dir> into the <room>"   entering a room right after a turn
    "enter the <room>"             entering a room otherwise
    "go past the <object>"         an object comes into view
    "go forward" / "wait near the <room>"   nothing else happened
    "stop near the <goal>"         closes every future description

Past windows look back k steps from t along the trajectory; future windows
follow the shortest path from the pose at t for at most k steps.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.base import Action, DescriptionMode
from ..env.sim import visible_objects
from ..env.world import Cell, Pose, World, follow, label_name, shortest_path_actions
from ..exceptions import DescriptionError, EpisodeError, ValidationError
from .vocab import EOS, PAD, VOCAB, Vocabulary

MAX_DESC_LEN = 24
DEFAULT_K = 19


@dataclass
class Description:
    """
    Token ids ending with EOS, optionally with soft targets (l x |V|).
    """
    tokens: List[int]
    mode: DescriptionMode
    soft: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self, vocab: Vocabulary = VOCAB) -> str:
        return vocab.text(self.tokens)

    def padded(self, length: int) -> np.ndarray:
        out = np.full(length, PAD, dtype=np.int64)
        n = min(length, len(self.tokens))
        out[:n] = self.tokens[:n]
        return out


@dataclass
class Trajectory:
    """
    Poses p_0..p_T and the actions a_1..a_T between them.

    actions[i] takes poses[i] to poses[i + 1].
    """
    poses: List[Pose]
    actions: List[Action]
    goal_cells: List[Cell]
    goal_label: int

    def __post_init__(self):
        if len(self.poses) != len(self.actions) + 1:
            raise ValidationError(
                f"{len(self.poses)} poses do not fit {len(self.actions)} actions",
                field="actions",
            )

    def append(self, action: Action, pose: Pose) -> None:
        self.actions.append(action)
        self.poses.append(pose)


def _check_on_world(world: World, poses: Sequence[Pose]) -> None:
    for pose in poses:
        if not world.is_free(pose.cell):
            raise EpisodeError(f"Trajectory leaves free space at {pose.cell}")


def window_path(
    world: World,
    traj: Trajectory,
    t: int,
    mode: DescriptionMode,
    k: int = DEFAULT_K,
    radius: int = 1,
) -> Tuple[List[Pose], List[Action], List[Pose], List[Action]]:
    """
    Poses and actions covered by the window at step t.

    Returns:
        (past poses, past actions, future poses, future actions); the unused
        half is empty. Future poses start at p_t.
    """
    if not traj.poses or not 0 <= t < len(traj.poses):
        raise DescriptionError(f"Empty window at t={t}", mode=mode.value)
    past_poses: List[Pose] = []
    past_actions: List[Action] = []
    future_poses: List[Pose] = []
    future_actions: List[Action] = []
    if mode in (DescriptionMode.PAST, DescriptionMode.PAST_FUTURE):
        a = max(0, t - k)
        past_poses = traj.poses[a:t + 1]
        past_actions = traj.actions[a:t]
        _check_on_world(world, past_poses)
    if mode in (DescriptionMode.FUTURE, DescriptionMode.PAST_FUTURE):
        _check_on_world(world, [traj.poses[t]])
        future_actions = shortest_path_actions(world, traj.poses[t], traj.goal_cells, radius)[:k]
        future_poses = follow(world, traj.poses[t], future_actions)
    return past_poses, past_actions, future_poses, future_actions


def window_bounds(t: int, mode: DescriptionMode, k: int, n_future: int) -> Tuple[int, int]:
    """[a, b] step indices of the window (future steps counted along the shortest path)."""
    a = t if mode is DescriptionMode.FUTURE else max(0, t - k)
    b = t if mode is DescriptionMode.PAST else t + n_future
    return a, b


def _clauses(
    world: World,
    poses: Sequence[Pose],
    actions: Sequence[Action],
    goal_cells: Sequence[Cell],
    half_width: int,
) -> List[List[str]]:
    clauses: List[List[str]] = []
    seen = set(visible_objects(world, poses[0], half_width))
    last_turn: Optional[str] = None
    for i, action in enumerate(actions, start=1):
        prev, pose = poses[i - 1], poses[i]
        if action is Action.TURN_LEFT:
            last_turn = "left"
        elif action is Action.TURN_RIGHT:
            last_turn = "right"
        if pose.cell != prev.cell:
            room = world.room_at(pose.cell)
            if room != world.room_at(prev.cell):
                noun = label_name(room)
                if last_turn is not None:
                    clauses.append(["turn", last_turn, "into", "the", noun])
                else:
                    clauses.append(["enter", "the", noun])
            last_turn = None
        for idx in visible_objects(world, pose, half_width):
            if idx in seen:
                continue
            seen.add(idx)
            obj = world.objects[idx]
            if obj.cell in goal_cells:
                continue
            clauses.append(["go", "past", "the", obj.name])
    return clauses


def _moved(poses: Sequence[Pose]) -> bool:
    return any(p.cell != poses[0].cell for p in poses)


def _truncate(clauses: List[List[str]], max_len: int) -> List[List[str]]:
    # Oldest clauses go first; EOS takes one slot.
    while clauses and sum(len(c) for c in clauses) + 1 > max_len:
        clauses = clauses[1:]
    return clauses


def describe_clauses(
    world: World,
    traj: Trajectory,
    t: int,
    mode: DescriptionMode,
    k: int = DEFAULT_K,
    radius: int = 1,
    half_width: int = 3,
) -> List[List[str]]:
    """Clauses of the description at step t, before truncation."""
    past_poses, past_actions, future_poses, future_actions = window_path(
        world, traj, t, mode, k, radius
    )
    clauses: List[List[str]] = []
    if past_poses:
        past = _clauses(world, past_poses, past_actions, traj.goal_cells, half_width)
        if not past:
            if _moved(past_poses):
                past = [["go", "forward"]]
            else:
                past = [["wait", "near", "the", label_name(world.room_at(past_poses[-1].cell))]]
        clauses.extend(past)
    if future_poses:
        future = _clauses(world, future_poses, future_actions, traj.goal_cells, half_width)
        if not future and _moved(future_poses):
            future = [["go", "forward"]]
        future.append(["stop", "near", "the", label_name(traj.goal_label)])
        clauses.extend(future)
    return clauses


def describe(
    world: World,
    traj: Trajectory,
    t: int,
    mode: DescriptionMode,
    k: int = DEFAULT_K,
    radius: int = 1,
    half_width: int = 3,
    max_len: int = MAX_DESC_LEN,
    vocab: Vocabulary = VOCAB,
) -> Description:
    """
    Description of the window at step t.

    Args:
        world: World the trajectory lives in
        traj: Trajectory with goal cells (future windows plan towards them)
        t: Anchor step
        mode: past, future or past_future
        k: Window reaches k steps back (past) or ahead (future)
        radius: Success radius used when planning the future path
        half_width: Visual patch half width for the salient-object rule
        max_len: Token limit including EOS

    Raises:
        DescriptionError: If t is outside the trajectory
        EpisodeError: If the trajectory leaves free space
    """
    mode = DescriptionMode.parse(mode)
    clauses = _truncate(describe_clauses(world, traj, t, mode, k, radius, half_width), max_len)
    words = [w for clause in clauses for w in clause]
    return Description(tokens=vocab.encode(words) + [EOS], mode=mode)


def soft_targets(
    tokens: Sequence[int],
    smoothing: float,
    temperature: float = 1.0,
    vocab_size: int = len(VOCAB),
) -> np.ndarray:
    """
    Row-stochastic targets: label-smoothed one-hot rows raised to 1/T and renormalized.

    Raises:
        ValidationError: If smoothing is outside [0, 1) or temperature <= 0
    """
    if not 0.0 <= smoothing < 1.0:
        raise ValidationError("smoothing must be in [0, 1)", field="smoothing")
    if temperature <= 0:
        raise ValidationError("temperature must be > 0", field="temperature")
    tokens = np.asarray(tokens, dtype=np.int64)
    rows = np.full((len(tokens), vocab_size), smoothing / vocab_size)
    rows[np.arange(len(tokens)), tokens] += 1.0 - smoothing
    if temperature != 1.0:
        rows = rows ** (1.0 / temperature)
        rows /= rows.sum(axis=1, keepdims=True)
    return rows
