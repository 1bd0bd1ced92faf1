"""Right-continuous step functions for estimated curves."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd

from .exceptions import ValidationError


def _frozen(values: Optional[Any], n: int, name: str) -> Optional[np.ndarray]:
    if values is None:
        return None
    arr = np.array(values, dtype=float)
    if arr.shape != (n,):
        raise ValidationError(f"{name} must have one entry per jump time")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StepFunction:
    """
    A right-continuous step function defined from ``origin`` onwards.

    The function equals ``initial_value`` on [origin, first jump) and
    ``values[j]`` on [jump_times[j], jump_times[j + 1]). Optional arrays carry
    pointwise variance, confidence bands and the risk-set counts behind each
    jump.

    Example:
        >>> f = StepFunction([1.0, 2.0], [0.5, 0.8])
        >>> f(1.5)
        0.5
    """

    jump_times: np.ndarray
    values: np.ndarray
    initial_value: float = 0.0
    origin: float = 0.0
    variance: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    at_risk: Optional[np.ndarray] = None
    events: Optional[np.ndarray] = None
    kind: str = "generic"
    label: str = ""
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.jump_times, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float).reshape(-1)
        if times.shape != values.shape:
            raise ValidationError("jump_times and values must have the same length")
        if times.size and np.any(np.diff(times) <= 0):
            raise ValidationError("jump times must be strictly ascending")
        if times.size and times[0] < self.origin:
            raise ValidationError("jump times must not precede the origin")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "values", values)
        n = times.size
        for name in ("variance", "lower", "upper", "at_risk", "events"):
            object.__setattr__(self, name, _frozen(getattr(self, name), n, name))

    def __len__(self) -> int:
        return int(self.jump_times.size)

    def __call__(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Evaluate the function (right-continuous)."""
        return self._lookup(t, side="right")

    def left_limit(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Evaluate the limit from the left, f(t-)."""
        return self._lookup(t, side="left")

    def _lookup(self, t: Union[float, np.ndarray], side: str) -> Union[float, np.ndarray]:
        arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, arr, side=side) - 1
        if self.values.size:
            out = np.where(idx >= 0, self.values[np.clip(idx, 0, None)], self.initial_value)
        else:
            out = np.full(arr.shape, self.initial_value, dtype=float)
        if out.ndim == 0:
            return float(out)
        return out

    @property
    def increments(self) -> np.ndarray:
        """Jump sizes at each jump time."""
        return np.diff(np.concatenate([[self.initial_value], self.values]))

    @property
    def final_value(self) -> float:
        return float(self.values[-1]) if self.values.size else float(self.initial_value)

    @classmethod
    def from_increments(
        cls,
        jump_times: np.ndarray,
        increments: np.ndarray,
        initial_value: float = 0.0,
        **kwargs: Any,
    ) -> "StepFunction":
        """Build a step function by accumulating jump sizes."""
        values = initial_value + np.cumsum(np.asarray(increments, dtype=float))
        return cls(jump_times, values, initial_value=initial_value, **kwargs)

    def to_frame(self) -> pd.DataFrame:
        """
        Tabulate the function.

        The first row holds the origin and the initial value; each further row
        is a jump. Columns: time, estimate, lower, upper, variance, at_risk, events.
        """
        n = len(self)
        times = np.concatenate([[self.origin], self.jump_times])
        frame = pd.DataFrame(
            {"time": times, "estimate": np.concatenate([[self.initial_value], self.values])}
        )
        for name in ("lower", "upper", "variance"):
            column = getattr(self, name)
            initial = self.initial_value if name != "variance" else 0.0
            frame[name] = (
                np.concatenate([[initial], column]) if column is not None else np.nan
            )
        for name in ("at_risk", "events"):
            column = getattr(self, name)
            frame[name] = np.concatenate([[np.nan], column]) if column is not None else np.nan
        if n == 0:
            frame = frame.iloc[:1]
        return frame

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write the tabulated function at full precision."""
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format=None)
        return path
