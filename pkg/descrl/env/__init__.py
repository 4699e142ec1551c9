"""Grid worlds and navigation episodes."""

from .world import (
    N_SEM, OBJECT_CATEGORIES, ROOM_TYPES, Pose, World, WorldObject, generate_world,
    geodesic_distance, shortest_path_actions, follow, label_name,
)
from .sim import (
    NUM_CHANNELS, EpisodeSpec, NavEnv, Observation, StepOutcome, compute_reward,
    render_audio, render_visual,
)
from .pool import EnvPool, WorldCache, sample_episode, world_seeds

__all__ = [
    "N_SEM", "OBJECT_CATEGORIES", "ROOM_TYPES", "Pose", "World", "WorldObject",
    "generate_world", "geodesic_distance", "shortest_path_actions", "follow", "label_name",
    "NUM_CHANNELS", "EpisodeSpec", "NavEnv", "Observation", "StepOutcome",
    "compute_reward", "render_audio", "render_visual",
    "EnvPool", "WorldCache", "sample_episode", "world_seeds",
]
