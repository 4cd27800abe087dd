"""Cubature Kalman filter: third-degree spherical-radial rule, time and measurement update."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .models import SystemModel, wrap_angle
from .numerics import SPD_FLOOR, cholesky_factor, spd_project, symmetrize


class SingularInnovationCovariance(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"covariance shape {cov.shape} does not match mean size {mean.size}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size


@dataclass(frozen=True)
class CubatureSet:
    points: np.ndarray  # (2L, L), one point per row
    weight: float


@dataclass(frozen=True)
class MeasurementMoments:
    """Cubature statistics of the predicted measurement.

    ``spread`` is the centered measurement covariance without noise, i.e. the
    cubature estimate of ``H P- H^T``; ``Pzz = spread + R``.
    """

    predicted_z: np.ndarray
    spread: np.ndarray
    Pxz: np.ndarray


@dataclass(frozen=True)
class UpdateOutput:
    posterior: Gaussian
    innovation: np.ndarray
    predicted_z: np.ndarray
    Pzz: np.ndarray
    Pxz: np.ndarray
    gain: np.ndarray
    R: np.ndarray
    spread: np.ndarray


@lru_cache(maxsize=None)
def unit_directions(L):
    """The 2L signed unit directions scaled by sqrt(L), one per row (read-only)."""
    eye = np.eye(L)
    xi = np.sqrt(L) * np.vstack([eye, -eye])
    xi.setflags(write=False)
    return xi


def cubature_points(belief: Gaussian) -> CubatureSet:
    S = cholesky_factor(belief.cov)
    L = belief.dim
    points = belief.mean + unit_directions(L) @ S.T
    return CubatureSet(points=points, weight=1.0 / (2 * L))


def _propagate(fn, points, vectorized):
    if vectorized:
        return np.atleast_2d(np.asarray(fn(points), dtype=np.float64))
    return np.array([np.asarray(fn(p), dtype=np.float64).ravel() for p in points])


def _centered(values, weight, angular=()):
    """Weighted mean and deviations; angular columns are averaged on the circle."""
    values = np.array(values, dtype=np.float64)
    if angular:
        idx = list(angular)
        ref = values[0, idx]
        values[:, idx] = ref + wrap_angle(values[:, idx] - ref)
    mean = weight * values.sum(axis=0)
    dev = values - mean
    if angular:
        mean[idx] = wrap_angle(mean[idx])
    return mean, dev


def predict(model: SystemModel, belief: Gaussian, Q, u=None, floor=SPD_FLOOR) -> Gaussian:
    """Time update. Covariance is the centered cubature spread plus ``Q``."""
    u = model.zero_input() if u is None else u
    cs = cubature_points(belief)
    X = _propagate(lambda x: model.process(x, u, model.dt), cs.points, model.vectorized)
    mean, dev = _centered(X, cs.weight)
    cov = cs.weight * dev.T @ dev + Q
    return Gaussian(mean, spd_project(cov, floor))


def measurement_moments(model: SystemModel, predicted: Gaussian) -> MeasurementMoments:
    # fresh points from the predicted belief, not the ones from the time update
    cs = cubature_points(predicted)
    Z = _propagate(model.measure, cs.points, model.vectorized)
    z_pred, dz = _centered(Z, cs.weight, model.angular)
    dx = cs.points - predicted.mean
    spread = symmetrize(cs.weight * dz.T @ dz)
    Pxz = cs.weight * dx.T @ dz
    return MeasurementMoments(z_pred, spread, Pxz)


def innovation(model: SystemModel, z, z_pred):
    nu = np.asarray(z, dtype=np.float64).ravel() - z_pred
    if model.angular:
        idx = list(model.angular)
        nu[idx] = wrap_angle(nu[idx])
    return nu


def correct(
    model: SystemModel,
    predicted: Gaussian,
    moments: MeasurementMoments,
    z,
    R,
    floor=SPD_FLOOR,
    joseph=False,
) -> UpdateOutput:
    """Gain, posterior mean and covariance given precomputed measurement moments."""
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    try:
        Pzz = spd_project(moments.spread + R, floor)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationCovariance(str(exc)) from exc
    K = np.linalg.solve(Pzz, moments.Pxz.T).T
    nu = innovation(model, z, moments.predicted_z)
    mean = predicted.mean + K @ nu
    if joseph:
        H = np.linalg.solve(predicted.cov, moments.Pxz).T
        A = np.eye(predicted.dim) - K @ H
        cov = A @ predicted.cov @ A.T + K @ R @ K.T
    else:
        cov = predicted.cov - K @ Pzz @ K.T
    return UpdateOutput(
        posterior=Gaussian(mean, spd_project(cov, floor)),
        innovation=nu,
        predicted_z=moments.predicted_z,
        Pzz=Pzz,
        Pxz=moments.Pxz,
        gain=K,
        R=R,
        spread=moments.spread,
    )


def update(model: SystemModel, predicted: Gaussian, z, R, floor=SPD_FLOOR, joseph=False):
    return correct(model, predicted, measurement_moments(model, predicted), z, R, floor, joseph)


def ckf_step(model: SystemModel, belief: Gaussian, z, u, Q, R, joseph=False):
    """One predict/update cycle; returns ``(posterior, UpdateOutput)``."""
    predicted = predict(model, belief, Q, u)
    out = update(model, predicted, z, R, joseph=joseph)
    return out.posterior, out
