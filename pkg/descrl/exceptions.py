from typing import Optional, Any, Sequence


class DescRLError(Exception):

    def __init__(
        self,
        message: str,
        code: Optional[str] = None,
        details: Optional[dict] = None
    ):
        super().__init__(message)
        self.message = message
        self.code = code
        self.details = details or {}

    def __str__(self) -> str:
        if self.code:
            return f"[{self.code}] {self.message}"
        return self.message

    def to_dict(self) -> dict:
        """Convert exception to dictionary."""
        return {
            "error": self.__class__.__name__,
            "message": self.message,
            "code": self.code,
            "details": self.details,
        }


class ShapeError(DescRLError):
    """Tensor shapes do not fit the operation."""

    def __init__(
        self,
        message: str,
        node: Optional[str] = None,
        shapes: Optional[Sequence[Any]] = None,
        **kwargs
    ):
        details = {
            "node": node,
            "shapes": [tuple(s) for s in shapes] if shapes else None,
        }
        if node:
            message = f"{node}: {message}"
        super().__init__(message, code="SHAPE_ERR", details=details, **kwargs)


class GradientError(DescRLError):
    """Gradients are not usable (NaN or infinite)."""

    def __init__(self, message: str, parameter: Optional[str] = None, **kwargs):
        details = {"parameter": parameter}
        super().__init__(message, code="GRAD_ERR", details=details, **kwargs)


class ValidationError(DescRLError):
    """Configuration or input validation error."""

    def __init__(self, message: str, field: Optional[str] = None, **kwargs):
        details = {"field": field}
        super().__init__(message, code="VALID_ERR", details=details, **kwargs)


class InfeasibleWorldError(DescRLError):
    """World generator config cannot be satisfied."""

    def __init__(self, message: str, seed: Optional[int] = None, **kwargs):
        details = {"seed": seed}
        super().__init__(message, code="WORLD_ERR", details=details, **kwargs)


class EpisodeError(DescRLError):
    """Invalid use of an episode or a pose."""

    def __init__(self, message: str, **kwargs):
        super().__init__(message, code="EPISODE_ERR", **kwargs)


class UnreachableGoalError(DescRLError):
    """No traversable path to the goal."""

    def __init__(
        self,
        message: str,
        start: Optional[Any] = None,
        goal: Optional[Any] = None,
        **kwargs
    ):
        details = {"start": start, "goal": goal}
        super().__init__(message, code="PATH_ERR", details=details, **kwargs)


class DescriptionError(DescRLError):
    """Action description could not be produced or matched."""

    def __init__(self, message: str, mode: Optional[str] = None, **kwargs):
        details = {"mode": mode}
        super().__init__(message, code="DESC_ERR", details=details, **kwargs)


class CheckpointError(DescRLError):
    """Checkpoint file is malformed or does not fit the model."""

    def __init__(self, message: str, path: Optional[str] = None, **kwargs):
        details = {"path": path}
        super().__init__(message, code="CKPT_ERR", details=details, **kwargs)


class TrainingError(DescRLError):
    """Training aborted."""

    def __init__(self, message: str, dump_path: Optional[str] = None, **kwargs):
        details = {"dump_path": dump_path}
        super().__init__(message, code="TRAIN_ERR", details=details, **kwargs)


class AuxTaskNotFoundError(DescRLError):
    """Requested auxiliary task not registered."""

    def __init__(self, kind: str, available: Sequence[str] = (), **kwargs):
        message = f"Auxiliary task '{kind}' not found. Available: {', '.join(available)}"
        super().__init__(message, code="AUX_404", **kwargs)
