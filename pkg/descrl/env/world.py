"""
Procedural grid worlds.

A world is an H x W grid of free and wall cells. Free cells carry a room
label; some free cells also hold an object. Rooms come from a binary space
partition with one door per split; a repair pass carves through walls until
free space is a single 4-connected component.
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..core.base import Action, Heading, WorldConfig, logger
from ..exceptions import EpisodeError, InfeasibleWorldError, UnreachableGoalError

Cell = Tuple[int, int]

ROOM_TYPES: Tuple[str, ...] = (
    "kitchen", "bedroom", "bathroom", "hallway", "office", "lounge", "dining", "laundry",
)
OBJECT_CATEGORIES: Tuple[str, ...] = (
    "chair", "couch", "table", "bed", "sink", "plant", "tv", "cabinet", "shelf",
    "piano", "toilet", "fireplace",
)
# Semantic labels: rooms 1..8, objects 9..20.
SEMANTIC_NAMES: Tuple[str, ...] = ROOM_TYPES + OBJECT_CATEGORIES
N_SEM = len(SEMANTIC_NAMES)
FIRST_OBJECT_LABEL = len(ROOM_TYPES) + 1

UNREACHABLE = -1


def label_name(label: int) -> str:
    """Noun for a semantic label in 1..N_SEM."""
    return SEMANTIC_NAMES[label - 1]


def is_object_label(label: int) -> bool:
    return FIRST_OBJECT_LABEL <= label <= N_SEM


@dataclass(frozen=True)
class Pose:
    """Agent cell and heading."""
    cell: Cell
    heading: Heading

    def forward_cell(self) -> Cell:
        dr, dc = self.heading.vector
        return (self.cell[0] + dr, self.cell[1] + dc)

    def after(self, action: Action, world: "World") -> "Pose":
        """Pose after an action; MoveForward into a wall leaves the pose unchanged."""
        if action is Action.TURN_LEFT:
            return Pose(self.cell, self.heading.turn_left())
        if action is Action.TURN_RIGHT:
            return Pose(self.cell, self.heading.turn_right())
        if action is Action.MOVE_FORWARD:
            ahead = self.forward_cell()
            if world.is_free(ahead):
                return Pose(ahead, self.heading)
        return self

    def to_list(self) -> List[int]:
        return [int(self.cell[0]), int(self.cell[1]), int(self.heading)]

    @classmethod
    def from_list(cls, values: Sequence[int]) -> "Pose":
        return cls((int(values[0]), int(values[1])), Heading(int(values[2])))


@dataclass(frozen=True)
class WorldObject:
    label: int
    cell: Cell

    @property
    def name(self) -> str:
        return label_name(self.label)


@dataclass(eq=False)
class World:
    """
    Immutable grid world.

    Attributes:
        seed: Generator seed
        walls: (H, W) bool, True for walls
        rooms: (H, W) int8 room label per free cell, 0 on walls
        objects: Placed object instances
    """
    seed: int
    walls: np.ndarray
    rooms: np.ndarray
    objects: Tuple[WorldObject, ...]
    _distance_cache: Dict[FrozenSet[Cell], np.ndarray] = field(
        default_factory=dict, repr=False, compare=False
    )

    @property
    def height(self) -> int:
        return int(self.walls.shape[0])

    @property
    def width(self) -> int:
        return int(self.walls.shape[1])

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and not bool(self.walls[cell])

    def free_cells(self) -> List[Cell]:
        return [(int(r), int(c)) for r, c in zip(*np.nonzero(~self.walls))]

    def room_at(self, cell: Cell) -> int:
        return int(self.rooms[cell])

    def object_at(self, cell: Cell) -> Optional[WorldObject]:
        for obj in self.objects:
            if obj.cell == cell:
                return obj
        return None

    def label_at(self, cell: Cell) -> int:
        """Object label if an object stands on the cell, else the room label."""
        obj = self.object_at(cell)
        return obj.label if obj is not None else self.room_at(cell)

    def semantic_grid(self) -> np.ndarray:
        """(H, W) labels, 0 on walls."""
        grid = self.rooms.astype(np.int16).copy()
        for obj in self.objects:
            grid[obj.cell] = obj.label
        return grid

    def cells_of(self, label: int) -> List[Cell]:
        return [obj.cell for obj in self.objects if obj.label == label]

    def distance_map(self, targets: Iterable[Cell]) -> np.ndarray:
        """BFS distance from every cell to the nearest target (UNREACHABLE for walls/cut-off)."""
        key = frozenset(targets)
        cached = self._distance_cache.get(key)
        if cached is None:
            cached = _bfs(self.walls, key)
            cached.setflags(write=False)
            self._distance_cache[key] = cached
        return cached

    # ==================== Serialization ====================

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "walls": ["".join("#" if w else "." for w in row) for row in self.walls],
            "rooms": self.rooms.astype(int).tolist(),
            "objects": [{"label": o.label, "cell": list(o.cell)} for o in self.objects],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "World":
        walls = np.array([[ch == "#" for ch in row] for row in data["walls"]], dtype=bool)
        objects = tuple(
            WorldObject(int(o["label"]), (int(o["cell"][0]), int(o["cell"][1])))
            for o in data["objects"]
        )
        return cls(
            seed=int(data["seed"]),
            walls=walls,
            rooms=np.array(data["rooms"], dtype=np.int8),
            objects=objects,
        )


# ==================== Distances ====================

_STEPS = ((-1, 0), (0, 1), (1, 0), (0, -1))


def _bfs(walls: np.ndarray, sources: Iterable[Cell]) -> np.ndarray:
    dist = np.full(walls.shape, UNREACHABLE, dtype=np.int32)
    queue: deque = deque()
    for cell in sorted(sources):
        if not walls[cell] and dist[cell] == UNREACHABLE:
            dist[cell] = 0
            queue.append(cell)
    height, width = walls.shape
    while queue:
        r, c = queue.popleft()
        for dr, dc in _STEPS:
            nr, nc = r + dr, c + dc
            if 0 <= nr < height and 0 <= nc < width and not walls[nr, nc] \
                    and dist[nr, nc] == UNREACHABLE:
                dist[nr, nc] = dist[r, c] + 1
                queue.append((nr, nc))
    return dist


def geodesic_distance(world: World, a: Cell, b: Cell) -> float:
    """
    4-connected shortest path length between two free cells.

    Returns:
        Number of cells, or inf when disconnected

    Raises:
        EpisodeError: If either cell is a wall or outside the grid
    """
    for cell in (a, b):
        if not world.is_free(cell):
            raise EpisodeError(f"Cell {cell} is not free")
    d = int(world.distance_map([b])[a])
    return float("inf") if d == UNREACHABLE else float(d)


def shortest_path_actions(world: World, start: Pose, goals: Sequence[Cell], radius: int = 1) -> List[Action]:
    """
    Fewest actions that bring the agent within ``radius`` of a goal cell, then Stop.

    Every MoveForward decreases the geodesic distance by one, so the
    MoveForward count is d(start) - radius when d(start) > radius. Ties are
    broken by preferring forward, then right, then left.

    Raises:
        UnreachableGoalError: If no goal cell is reachable
    """
    if not world.is_free(start.cell):
        raise EpisodeError(f"Start cell {start.cell} is not free")
    dist = world.distance_map(goals)
    if dist[start.cell] == UNREACHABLE:
        raise UnreachableGoalError("Goal unreachable from start", start=start.cell, goal=list(goals))

    parents: Dict[Pose, Tuple[Optional[Pose], Optional[Action]]] = {start: (None, None)}
    queue: deque = deque([start])
    found: Optional[Pose] = None
    while queue:
        pose = queue.popleft()
        if dist[pose.cell] <= radius:
            found = pose
            break
        for action in (Action.MOVE_FORWARD, Action.TURN_RIGHT, Action.TURN_LEFT):
            if action is Action.MOVE_FORWARD:
                ahead = pose.forward_cell()
                if not world.is_free(ahead) or dist[ahead] != dist[pose.cell] - 1:
                    continue
            nxt = pose.after(action, world)
            if nxt not in parents:
                parents[nxt] = (pose, action)
                queue.append(nxt)

    assert found is not None
    actions: List[Action] = [Action.STOP]
    node = found
    while True:
        parent, action = parents[node]
        if parent is None:
            break
        actions.append(action)
        node = parent
    actions.reverse()
    return actions


def follow(world: World, start: Pose, actions: Sequence[Action]) -> List[Pose]:
    """Poses p_0..p_T visited by executing actions from start."""
    poses = [start]
    for action in actions:
        poses.append(poses[-1].after(action, world))
    return poses


# ==================== Generation ====================

@dataclass
class _Rect:
    top: int
    left: int
    bottom: int  # inclusive
    right: int   # inclusive

    @property
    def rows(self) -> int:
        return self.bottom - self.top + 1

    @property
    def cols(self) -> int:
        return self.right - self.left + 1


def _partition(cfg: WorldConfig, rng: np.random.Generator, walls: np.ndarray) -> List[_Rect]:
    leaves = [_Rect(1, 1, cfg.height - 2, cfg.width - 2)]
    span = 2 * cfg.min_room + 1
    while len(leaves) < cfg.rooms:
        candidates = [i for i, r in enumerate(leaves) if max(r.rows, r.cols) >= span]
        if not candidates:
            logger.debug("World %s: stopped partitioning at %d rooms", cfg, len(leaves))
            break
        # Split the largest room first.
        idx = max(candidates, key=lambda i: (leaves[i].rows * leaves[i].cols, -i))
        rect = leaves.pop(idx)
        horizontal = rect.rows > rect.cols or (rect.rows == rect.cols and rng.random() < 0.5)
        if horizontal and rect.rows < span:
            horizontal = False
        if not horizontal and rect.cols < span:
            horizontal = True
        if horizontal:
            line = int(rng.integers(rect.top + cfg.min_room, rect.bottom - cfg.min_room + 1))
            walls[line, rect.left:rect.right + 1] = True
            door = int(rng.integers(rect.left, rect.right + 1))
            walls[line, door] = False
            leaves.append(_Rect(rect.top, rect.left, line - 1, rect.right))
            leaves.append(_Rect(line + 1, rect.left, rect.bottom, rect.right))
        else:
            line = int(rng.integers(rect.left + cfg.min_room, rect.right - cfg.min_room + 1))
            walls[rect.top:rect.bottom + 1, line] = True
            door = int(rng.integers(rect.top, rect.bottom + 1))
            walls[door, line] = False
            leaves.append(_Rect(rect.top, rect.left, rect.bottom, line - 1))
            leaves.append(_Rect(rect.top, line + 1, rect.bottom, rect.right))
    return leaves


def _components(walls: np.ndarray) -> np.ndarray:
    labels = np.full(walls.shape, -1, dtype=np.int32)
    count = 0
    for r, c in zip(*np.nonzero(~walls)):
        if labels[r, c] >= 0:
            continue
        dist = _bfs(walls, [(int(r), int(c))])
        labels[dist != UNREACHABLE] = count
        count += 1
    return labels


def _repair_connectivity(walls: np.ndarray) -> int:
    """Carve the shortest wall run joining component 0 to another one; repeat."""
    carved = 0
    height, width = walls.shape
    while True:
        labels = _components(walls)
        if labels.max() <= 0:
            return carved
        sources = [(int(r), int(c)) for r, c in zip(*np.nonzero(labels == 0))]
        parent: Dict[Cell, Optional[Cell]] = {s: None for s in sources}
        queue: deque = deque(sources)
        target: Optional[Cell] = None
        while queue and target is None:
            r, c = queue.popleft()
            for dr, dc in _STEPS:
                nr, nc = r + dr, c + dc
                if not (1 <= nr < height - 1 and 1 <= nc < width - 1) or (nr, nc) in parent:
                    continue
                parent[(nr, nc)] = (r, c)
                if labels[nr, nc] > 0:
                    target = (nr, nc)
                    break
                queue.append((nr, nc))
        if target is None:
            raise InfeasibleWorldError("Free space cannot be connected")
        node: Optional[Cell] = target
        while node is not None:
            if walls[node]:
                walls[node] = False
                carved += 1
            node = parent[node]


def _fill_room_labels(walls: np.ndarray, rooms: np.ndarray) -> None:
    # Doors and carved cells take the label of a labelled neighbour.
    pending = [(int(r), int(c)) for r, c in zip(*np.nonzero((~walls) & (rooms == 0)))]
    while pending:
        remaining = []
        for r, c in pending:
            for dr, dc in _STEPS:
                nr, nc = r + dr, c + dc
                if rooms[nr, nc] > 0:
                    rooms[r, c] = rooms[nr, nc]
                    break
            else:
                remaining.append((r, c))
        if len(remaining) == len(pending):
            raise InfeasibleWorldError("Unlabelled free cells remain")
        pending = remaining


def generate_world(seed: int, cfg: WorldConfig) -> World:
    """
    Build a world deterministically from a seed.

    Raises:
        ValidationError: If the config is invalid (grid smaller than 9x9)
        InfeasibleWorldError: If no objects are requested or they do not fit
    """
    cfg.validate()
    if cfg.objects < 1:
        raise InfeasibleWorldError("At least one object is required", seed=seed)
    rng = np.random.default_rng(seed)

    walls = np.zeros((cfg.height, cfg.width), dtype=bool)
    walls[0, :] = walls[-1, :] = True
    walls[:, 0] = walls[:, -1] = True
    leaves = _partition(cfg, rng, walls)
    carved = _repair_connectivity(walls)
    if carved:
        logger.debug("World seed=%d: carved %d wall cells to connect rooms", seed, carved)

    rooms = np.zeros(walls.shape, dtype=np.int8)
    replace = len(leaves) > len(ROOM_TYPES)
    types = rng.choice(len(ROOM_TYPES), size=len(leaves), replace=replace) + 1
    for rect, room_type in zip(leaves, types):
        block = rooms[rect.top:rect.bottom + 1, rect.left:rect.right + 1]
        free = ~walls[rect.top:rect.bottom + 1, rect.left:rect.right + 1]
        block[free] = room_type
    _fill_room_labels(walls, rooms)

    free_cells = [(int(r), int(c)) for r, c in zip(*np.nonzero(~walls))]
    if cfg.objects > len(free_cells):
        raise InfeasibleWorldError(
            f"{cfg.objects} objects do not fit in {len(free_cells)} free cells", seed=seed
        )
    picks = rng.choice(len(free_cells), size=cfg.objects, replace=False)
    n_cat = len(OBJECT_CATEGORIES)
    categories = list(rng.permutation(n_cat)[:min(cfg.objects, n_cat)])
    if cfg.objects > n_cat:
        categories += list(rng.integers(0, n_cat, size=cfg.objects - n_cat))
    objects = tuple(
        WorldObject(FIRST_OBJECT_LABEL + int(cat), free_cells[int(i)])
        for i, cat in zip(picks, categories)
    )
    return World(seed=seed, walls=walls, rooms=rooms, objects=objects)


def world_from_ascii(rows: Sequence[str], room_rows: Sequence[str], objects: Sequence[Tuple[int, Cell]] = (), seed: int = 0) -> World:
    """
    Hand-built world for tests and examples.

    ``rows`` uses '#' for walls; ``room_rows`` gives one digit (room label)
    per cell, ignored on walls.
    """
    walls = np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)
    rooms = np.array([[int(ch) if ch.isdigit() else 0 for ch in row] for row in room_rows], dtype=np.int8)
    rooms[walls] = 0
    return World(
        seed=seed, walls=walls, rooms=rooms,
        objects=tuple(WorldObject(label, cell) for label, cell in objects),
    )
