"""Time-sampled solution container shared by integrators and diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from kdv2.spectral import Grid, GridField

__all__ = ["Trajectory"]


@dataclass
class Trajectory:
    """Sampled states of one evolution, with per-sample scalar diagnostics.

    `times[0]` is 0 and `states[0]` is the initial condition exactly as
    supplied.  A run stopped by the sup-norm guard keeps everything sampled
    up to the stop and records the blow-up time; early termination is data,
    not an error.
    """

    grid: Grid
    times: np.ndarray
    states: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    terminated_early: bool = False
    blow_up_time: Optional[float] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states)
        if self.states.shape != (len(self.times), self.grid.n):
            raise ValueError(
                f"states shape {self.states.shape} does not match "
                f"{len(self.times)} times on a {self.grid.n}-point grid"
            )
        if len(self.times) > 0:
            if self.times[0] != 0.0:
                raise ValueError("trajectory must start at t = 0")
            if np.any(np.diff(self.times) <= 0):
                raise ValueError("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def snapshot(self, i: int) -> GridField:
        return GridField(self.grid, np.array(self.states[i], dtype=float))

    @property
    def initial(self) -> GridField:
        return self.snapshot(0)

    @property
    def final(self) -> GridField:
        return self.snapshot(len(self.times) - 1)

    @property
    def t_final(self) -> float:
        return float(self.times[-1])
