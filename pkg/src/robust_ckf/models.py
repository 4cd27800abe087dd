"""State-space models: the generic container and the range/bearing tracking target."""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .numerics import is_spd


class SensorCoincidence(ValueError):
    """Target sits exactly on the sensor, so the bearing is undefined."""


def wrap_angle(a):
    """Wrap angles into (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


@dataclass(frozen=True)
class SystemModel:
    """Discrete-time model ``x_k = f(x_{k-1}, u_{k-1}) + w``, ``z_k = h(x_k) + v``.

    ``angular`` lists measurement components that are angles; the filters wrap
    their innovations into (-pi, pi]. With ``vectorized`` set, ``process`` and
    ``measure`` accept a stack of states of shape (k, n) in one call.
    """

    n: int
    m: int
    process: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    measure: Callable[[np.ndarray], np.ndarray]
    dt: float = 1.0
    angular: Tuple[int, ...] = ()
    r: int = 0
    vectorized: bool = False

    def zero_input(self):
        return np.zeros(self.r)


@dataclass(frozen=True)
class NoiseSpec:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=np.float64))
        R = np.atleast_2d(np.asarray(self.R, dtype=np.float64))
        for name, mat in (("Q", Q), ("R", R)):
            if not is_spd(mat, floor=0.0):
                raise ValueError(f"{name} must be symmetric positive semidefinite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class TargetScenario:
    """Parameters of the ballistic-style tracking example.

    Positions are the pair (x1, x3) in meters; the sensor sits at (sx, sy).
    """

    Ts: float = 0.1
    kx: float = 0.002
    ky: float = 0.002
    g: float = 9.81
    sx: float = -1300.0
    sy: float = -300.0
    x0: Tuple[float, float, float, float] = (0.0, 0.0, -50.0, 0.0)
    steps: int = 400

    def __post_init__(self):
        if not self.Ts > 0:
            raise ValueError("Ts must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        if len(self.x0) != 4:
            raise ValueError("x0 must have four components")
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))


def target_process(x, scenario: TargetScenario):
    """Noise-free one-step propagation of the tracking target.

    Works on a single state of shape (4,) or a stack of shape (k, 4).
    """
    x = np.asarray(x, dtype=np.float64)
    x1, x2, x3, x4 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    Ts = scenario.Ts
    return np.stack(
        [
            x1 + Ts * x3,
            x2 + Ts * (-scenario.kx * x3**2),
            x3 + Ts * x4,
            x4 + Ts * (scenario.ky * x3**2 - scenario.g),
        ],
        axis=-1,
    )


def target_measure(x, scenario: TargetScenario):
    """Range (m) and four-quadrant bearing (rad, in (-pi, pi]) of (x1, x3) seen from the sensor."""
    x = np.asarray(x, dtype=np.float64)
    dx = x[..., 0] - scenario.sx
    dy = x[..., 2] - scenario.sy
    if np.any((dx == 0.0) & (dy == 0.0)):
        raise SensorCoincidence("target position coincides with the sensor")
    return np.stack([np.hypot(dx, dy), wrap_angle(np.arctan2(dy, dx))], axis=-1)


def target_model(scenario: Optional[TargetScenario] = None) -> SystemModel:
    scenario = scenario or TargetScenario()
    return SystemModel(
        n=4,
        m=2,
        process=lambda x, u, dt: target_process(x, scenario),
        measure=lambda x: target_measure(x, scenario),
        dt=scenario.Ts,
        angular=(1,),
        vectorized=True,
    )


def linear_model(F, H, b=None, dt=1.0) -> SystemModel:
    """Affine process ``x -> F x + b`` with linear measurement ``z = H x``."""
    F = np.atleast_2d(np.asarray(F, dtype=np.float64))
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    b = np.zeros(F.shape[0]) if b is None else np.asarray(b, dtype=np.float64)
    return SystemModel(
        n=F.shape[0],
        m=H.shape[0],
        process=lambda x, u, dt_: np.asarray(x) @ F.T + b,
        measure=lambda x: np.asarray(x) @ H.T,
        dt=dt,
        vectorized=True,
    )
