"""Window-based noise adaptation on top of the cubature filter.

Two estimators share one sliding window of per-epoch records:

* the innovation-based baseline (ACKF), a uniform-weight covariance match
  ``R = mean(v v^T) - mean(H P- H^T)``;
* the robust variant (CMRACKF), which weights every epoch by its inverse
  estimated variance before matching, so epochs with outlying innovations
  barely move the estimate of ``R``.

``H P- H^T`` is never formed from a Jacobian. Each record stores the cubature
spread of the predicted measurement (``Pzz - R`` for that epoch) instead.
"""

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ckf import (
    Gaussian,
    UpdateOutput,
    correct,
    innovation,
    measurement_moments,
    predict,
)
from .models import SystemModel
from .numerics import SPD_FLOOR, spd_project, symmetrize, weighted_outer_sum

VARIANCE_FLOOR = 1e-12
VARIANCE_MODES = ("paper_literal", "normalized")
WARMUP_POLICIES = ("nominal_until_full",)


@dataclass
class EpochRecord:
    innovation: np.ndarray
    variance: float
    hph: np.ndarray
    residual: Optional[np.ndarray] = None


class SlidingWindow:
    """FIFO buffer of the last ``capacity`` epoch records, newest last."""

    def __init__(self, capacity):
        if int(capacity) != capacity or capacity < 1:
            raise ValueError("window capacity must be a positive integer")
        self.capacity = int(capacity)
        self._records = deque(maxlen=self.capacity)

    def push(self, record: EpochRecord):
        self._records.append(record)

    @property
    def records(self):
        return list(self._records)

    @property
    def full(self):
        return len(self._records) == self.capacity

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def innovations(self):
        return np.array([r.innovation for r in self._records])

    def residuals(self):
        return np.array([r.residual for r in self._records])

    def variances(self):
        return np.array([r.variance for r in self._records])


@dataclass(frozen=True)
class AdaptiveConfig:
    window_size: int = 30
    r_floor: float = 0.01
    q_floor: float = 0.01
    adapt_q: bool = False
    variance_mode: str = "paper_literal"
    warmup_policy: str = "nominal_until_full"
    # forces uniform window weights in the robust filter (reduces it to the baseline)
    uniform_weights: bool = False
    joseph: bool = False
    # floors apply in coordinates whitened by the nominal R (resp. Q) diagonal;
    # off, they are absolute eigenvalue floors
    relative_floor: bool = True

    def __post_init__(self):
        if int(self.window_size) != self.window_size or self.window_size < 2:
            raise ValueError("window_size must be an integer >= 2")
        if not (self.r_floor > 0 and self.q_floor > 0):
            raise ValueError("r_floor and q_floor must be positive")
        if self.variance_mode not in VARIANCE_MODES:
            raise ValueError(f"variance_mode must be one of {VARIANCE_MODES}")
        if self.warmup_policy not in WARMUP_POLICIES:
            raise ValueError(f"warmup_policy must be one of {WARMUP_POLICIES}")


def epoch_variance(nu, R, m=None, mode="paper_literal"):
    """Per-epoch variance estimate ``v^T R v / m`` (``v^T R^-1 v / m`` when normalized).

    Clamped below at 1e-12 so the inverse-variance weights stay finite.
    """
    nu = np.asarray(nu, dtype=np.float64).ravel()
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    m = nu.size if m is None else m
    if m < 1:
        raise ValueError("measurement count must be >= 1")
    if mode == "paper_literal":
        q = nu @ R @ nu
    elif mode == "normalized":
        q = nu @ np.linalg.solve(R, nu)
    else:
        raise ValueError(f"unknown variance mode {mode!r}")
    return max(float(q) / m, VARIANCE_FLOOR)


def window_weights(window, uniform=False):
    """Normalized inverse-variance weights of the window records (sum to one)."""
    if len(window) == 0:
        raise ValueError("window is empty")
    if uniform:
        return np.full(len(window), 1.0 / len(window))
    inv = 1.0 / window.variances()
    return inv / inv.sum()


def innovation_cov_plain(window):
    """Uniform window average of ``v v^T``; divides by the records present."""
    nus = window.innovations()
    return symmetrize(weighted_outer_sum(nus, np.full(len(nus), 1.0 / len(nus))))


def innovation_cov_weighted(window, uniform=False):
    """``(1/N) sum_j w_j v_j v_j^T`` with ``N`` the record count.

    The weights already sum to one, so this is the plain average divided by
    ``N`` when all variances agree. :func:`estimate_R` uses the weighted mean
    ``sum_j w_j v_j v_j^T`` instead.
    """
    w = window_weights(window, uniform)
    return symmetrize(weighted_outer_sum(window.innovations(), w)) / len(window)


def _weighted_moment(vectors, w):
    return symmetrize(weighted_outer_sum(vectors, w))


def mean_hph(window):
    total = 0.0
    for r in window:
        total = total + r.hph
    return symmetrize(total / len(window))


def floor_scaled(m, floor, scale=None):
    """:func:`spd_project` in coordinates whitened by the diagonal of ``scale``."""
    if scale is None:
        return spd_project(m, floor)
    d = np.sqrt(np.diag(np.atleast_2d(scale)))
    return symmetrize(spd_project(m / np.outer(d, d), floor) * np.outer(d, d))


def estimate_R(window, floor=SPD_FLOOR, uniform=False, scale=None, weights=None):
    """Covariance-matching estimate of the measurement noise covariance.

    Weighted innovation second moment minus the window mean of the
    predicted-measurement spread, projected back onto SPD matrices. With
    ``scale`` (normally the nominal R) the eigenvalue floor is relative to
    that matrix's diagonal instead of absolute.
    """
    w = window_weights(window, uniform) if weights is None else weights
    C = _weighted_moment(window.innovations(), w)
    return floor_scaled(C - mean_hph(window), floor, scale)


def statistical_jacobian(Pxz, P_prior):
    """Statistically linearized measurement matrix ``H = Pxz^T P-^-1``."""
    return np.linalg.solve(P_prior, Pxz).T


def estimate_Q(window, prediction_moment, P_post, H, floor=SPD_FLOOR, uniform=False, scale=None):
    """Innovation/residual estimate of the process noise covariance.

    In measurement space ``H Q H^T = C_v - C_eta - H (M + P+) H^T`` where ``M``
    is the cubature second moment of the propagated points (the predicted
    covariance without ``Q``) and ``P+`` the posterior covariance. The result
    is lifted to state space with the pseudo-inverse of ``H``.
    """
    w = window_weights(window, uniform)
    C_nu = _weighted_moment(window.innovations(), w)
    C_eta = _weighted_moment(window.residuals(), w)
    M = C_nu - C_eta - H @ (prediction_moment + P_post) @ H.T
    G = np.linalg.pinv(H)
    return floor_scaled(G @ symmetrize(M) @ G.T, floor, scale)


@dataclass(frozen=True)
class AdaptiveOutput:
    update: UpdateOutput
    R: np.ndarray
    Q_next: np.ndarray
    weights: Optional[np.ndarray]
    adapted: bool

    @property
    def posterior(self):
        return self.update.posterior

    @property
    def innovation(self):
        return self.update.innovation


def _adaptive_step(model, belief, z, u, Q, R, window, config, weighted, nominal_Q=None):
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    nominal_Q = Q if nominal_Q is None else np.atleast_2d(nominal_Q)
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    predicted = predict(model, belief, Q, u)
    moments = measurement_moments(model, predicted)
    nu = innovation(model, z, moments.predicted_z)
    record = EpochRecord(
        innovation=nu,
        variance=epoch_variance(nu, R, model.m, config.variance_mode),
        hph=moments.spread,
    )
    # the current epoch belongs to its own window, as in the sum j0..k
    window.push(record)

    uniform = not weighted or config.uniform_weights
    adapted = window.full
    weights = None
    R_used = R
    if adapted:
        weights = window_weights(window, uniform)
        R_used = estimate_R(
            window,
            config.r_floor,
            uniform,
            scale=R if config.relative_floor else None,
            weights=weights,
        )

    out = correct(model, predicted, moments, z, R_used, joseph=config.joseph)
    z_post = np.asarray(model.measure(out.posterior.mean), dtype=np.float64).ravel()
    record.residual = innovation(model, z, z_post)

    Q_next = Q
    if weighted and config.adapt_q and adapted:
        H = statistical_jacobian(moments.Pxz, predicted.cov)
        Q_next = estimate_Q(
            window,
            predicted.cov - Q,
            out.posterior.cov,
            H,
            config.q_floor,
            uniform,
            scale=nominal_Q if config.relative_floor else None,
        )
    return out.posterior, AdaptiveOutput(out, R_used, Q_next, weights, adapted)


def ackf_step(model: SystemModel, belief: Gaussian, z, u, Q, R, window, config=None):
    """Innovation-based adaptive step with uniform window weights.

    ``R`` is the nominal measurement covariance, used until the window fills.
    """
    config = config or AdaptiveConfig()
    return _adaptive_step(model, belief, z, u, Q, R, window, config, weighted=False)


def cmrackf_step(model: SystemModel, belief: Gaussian, z, u, Q, R, window, config=None, nominal_Q=None):
    """Robust adaptive step: inverse-variance weighted covariance matching.

    Returns ``(posterior, AdaptiveOutput)``; ``AdaptiveOutput.Q_next`` carries
    the process-noise estimate for the next epoch when ``adapt_q`` is on and
    is ``Q`` otherwise. ``nominal_Q`` sets the scale of the relative Q floor
    (defaults to ``Q``).
    """
    config = config or AdaptiveConfig()
    return _adaptive_step(
        model, belief, z, u, Q, R, window, config, weighted=True, nominal_Q=nominal_Q
    )
