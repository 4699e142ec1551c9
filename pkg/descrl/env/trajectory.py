"""
Per-step trajectory logs, one JSON object per line.
"""

from dataclasses import asdict, dataclass
from typing import IO, Iterator, List, Optional
import json

from ..core.base import Action
from .sim import Observation, StepOutcome
from ..exceptions import EpisodeError


@dataclass
class StepLog:
    t: int
    pose: List[int]
    action: str
    reward: float
    distance: int
    silent: bool
    done: bool
    success: bool

    @classmethod
    def from_step(cls, obs: Observation, action: Action, outcome: StepOutcome) -> "StepLog":
        return cls(
            t=obs.t,
            pose=obs.pose.to_list(),
            action=action.value,
            reward=outcome.reward,
            distance=outcome.distance,
            silent=obs.silent,
            done=outcome.done,
            success=outcome.success,
        )


class TrajectoryLogger:
    """
    Append-only JSONL writer.

    Example:
        with TrajectoryLogger(path) as log:
            obs, outcome = env.step(action)
            log.write(StepLog.from_step(obs, action, outcome))
    """

    def __init__(self, path: str):
        self.path = path
        self._file: Optional[IO[str]] = None

    def __enter__(self) -> "TrajectoryLogger":
        self._file = open(self.path, "a", encoding="utf-8")
        return self

    def __exit__(self, *args) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None

    def write(self, step: StepLog, episode: Optional[int] = None) -> None:
        if self._file is None:
            raise EpisodeError("TrajectoryLogger used outside its context")
        record = asdict(step)
        if episode is not None:
            record["episode"] = episode
        self._file.write(json.dumps(record, sort_keys=True) + "\n")


def read_trajectory(path: str) -> Iterator[StepLog]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                data = json.loads(line)
                data.pop("episode", None)
                yield StepLog(**data)
