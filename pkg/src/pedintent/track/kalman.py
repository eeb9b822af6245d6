"""Constant-velocity Kalman filter over (u, v, a, h) box measurements.

The 8-D state is box centre (u, v), aspect ratio a = w/h, height h and
their per-frame velocities. Process and measurement noise scale with the
current box height.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

NDIM = 4


class DegenerateCovarianceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class KalmanParams:
    std_weight_position: float = 1.0 / 20
    std_weight_velocity: float = 1.0 / 160
    std_weight_measurement: float = 1.0 / 20
    std_aspect: float = 1e-2
    std_aspect_velocity: float = 1e-5
    std_aspect_measurement: float = 1e-1


_F = np.eye(2 * NDIM)
for _i in range(NDIM):
    _F[_i, NDIM + _i] = 1.0
_H = np.eye(NDIM, 2 * NDIM)


def _symmetrize(m):
    return 0.5 * (m + m.T)


def initiate(measurement, params=KalmanParams()):
    """New state from an unassociated measurement; velocities start at zero."""
    z = np.asarray(measurement, dtype=float)
    h = z[3]
    wp, wv = params.std_weight_position, params.std_weight_velocity
    std = np.array([
        2 * wp * h, 2 * wp * h, params.std_aspect, 2 * wp * h,
        10 * wv * h, 10 * wv * h, params.std_aspect_velocity, 10 * wv * h,
    ])
    return KalmanState(np.r_[z, np.zeros(NDIM)], np.diag(std**2))


def process_noise(mean, params=KalmanParams()):
    h = mean[3]
    wp, wv = params.std_weight_position, params.std_weight_velocity
    std = np.array([
        wp * h, wp * h, params.std_aspect, wp * h,
        wv * h, wv * h, params.std_aspect_velocity, wv * h,
    ])
    return np.diag(std**2)


def measurement_noise(mean, params=KalmanParams()):
    h = mean[3]
    wm = params.std_weight_measurement
    std = np.array([wm * h, wm * h, params.std_aspect_measurement, wm * h])
    return np.diag(std**2)


def predict(state, params=KalmanParams()):
    mean = _F @ state.mean
    cov = _F @ state.covariance @ _F.T + process_noise(state.mean, params)
    return KalmanState(mean, _symmetrize(cov))


def project(state, params=KalmanParams()):
    """Predicted measurement and innovation covariance ``S = H P H^T + R``."""
    mean = _H @ state.mean
    cov = _H @ state.covariance @ _H.T + measurement_noise(state.mean, params)
    return mean, _symmetrize(cov)


def update_linear(mean, cov, z, H, R):
    """Generic Kalman measurement update (Joseph form).

    Works for any state/measurement dimension; used by the box filter and
    directly testable on scalar cases.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if not np.all(np.isfinite(z)):
        raise ValueError("measurement must be finite")
    S = _symmetrize(H @ cov @ H.T + R)
    try:
        chol = scipy.linalg.cho_factor(S, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovarianceError("innovation covariance not positive-definite") from exc
    gain = scipy.linalg.cho_solve(chol, H @ cov, check_finite=False).T
    innovation = z - H @ mean
    new_mean = mean + gain @ innovation
    I_KH = np.eye(len(mean)) - gain @ H
    new_cov = I_KH @ cov @ I_KH.T + gain @ R @ gain.T
    return new_mean, _symmetrize(new_cov)


def update(state, measurement, params=KalmanParams()):
    R = measurement_noise(state.mean, params)
    mean, cov = update_linear(state.mean, state.covariance, measurement, _H, R)
    return KalmanState(mean, cov)


def mahalanobis_sq(residual, S):
    """``r^T S^-1 r`` via a Cholesky solve."""
    r = np.asarray(residual, dtype=float)
    try:
        chol = scipy.linalg.cholesky(S, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovarianceError("innovation covariance is singular") from exc
    y = scipy.linalg.solve_triangular(chol, r, lower=True, check_finite=False)
    return float(y @ y)
