"""Linear-Gaussian motion and measurement primitives.

Everything here is a pure function of immutable values. Likelihoods are
returned in the log domain.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .exceptions import ConfigurationError, NumericalError

LOG_2PI = np.log(2.0 * np.pi)

Probability = Union[float, Callable[[np.ndarray], np.ndarray]]


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class GaussianDensity:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float).reshape(mean.size, mean.size)
        mean.setflags(write=False)
        cov = _symmetrize(cov)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def _evaluate_probability(p: Probability, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if callable(p):
        out = np.asarray(p(x), dtype=float).reshape(x.shape[0])
    else:
        out = np.full(x.shape[0], float(p))
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class DiscDetection:
    """Detection probability ``inside`` within a disc around the origin, ``outside`` elsewhere.

    ``components`` selects which state entries hold the position.
    """

    radius: float
    inside: float = 1.0
    outside: float = 0.0
    components: tuple[int, ...] = (0, 1)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        dist = np.linalg.norm(x[:, list(self.components)], axis=1)
        return np.where(dist <= self.radius, self.inside, self.outside)


@dataclass(frozen=True)
class UniformClutter:
    """Poisson clutter with ``rate`` expected points, uniform on a rectangle."""

    rate: float
    low: tuple[float, ...]
    high: tuple[float, ...]

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.high, self.low)))

    def intensity(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        inside = np.all((z >= self.low) & (z <= self.high), axis=1)
        return np.where(inside, self.rate / self.volume, 0.0)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        n = rng.poisson(self.rate)
        return rng.uniform(self.low, self.high, size=(n, len(self.low)))


@dataclass(frozen=True)
class UniformClutterOutsideDisc:
    """Uniform clutter on the square ``[-half_width, half_width]^2`` minus a centred disc."""

    rate: float
    half_width: float
    radius: float

    @property
    def volume(self) -> float:
        return (2.0 * self.half_width) ** 2 - np.pi * self.radius**2

    def intensity(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        in_square = np.all(np.abs(z) < self.half_width, axis=1)
        outside_disc = np.linalg.norm(z, axis=1) > self.radius
        return np.where(in_square & outside_disc, self.rate / self.volume, 0.0)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        n = rng.poisson(self.rate)
        out = np.empty((0, 2))
        while out.shape[0] < n:
            cand = rng.uniform(-self.half_width, self.half_width, size=(2 * n + 4, 2))
            cand = cand[np.linalg.norm(cand, axis=1) > self.radius]
            out = np.vstack([out, cand])
        return out[:n]


@dataclass(frozen=True)
class NoClutter:
    rate: float = 0.0

    def intensity(self, z: np.ndarray) -> np.ndarray:
        return np.zeros(np.atleast_2d(z).shape[0])

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.empty((0, 0))


@dataclass(frozen=True)
class MotionModel:
    F: np.ndarray
    Q: np.ndarray
    ps: Probability = 1.0

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if F.shape[0] != F.shape[1] or Q.shape != F.shape:
            raise ConfigurationError(f"F {F.shape} and Q {Q.shape} must be square and equal")
        if not callable(self.ps) and not 0.0 <= float(self.ps) <= 1.0:
            raise ConfigurationError(f"survival probability {self.ps} outside [0, 1]")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Q", _symmetrize(Q))

    def survival_probability(self, x: np.ndarray) -> np.ndarray:
        return _evaluate_probability(self.ps, x)


@dataclass(frozen=True)
class MeasurementModel:
    H: np.ndarray
    R: np.ndarray
    pd: Probability = 1.0
    clutter: object = field(default_factory=NoClutter)

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if R.shape != (H.shape[0], H.shape[0]):
            raise ConfigurationError(f"R {R.shape} does not match H {H.shape}")
        if not callable(self.pd) and not 0.0 <= float(self.pd) <= 1.0:
            raise ConfigurationError(f"detection probability {self.pd} outside [0, 1]")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", _symmetrize(R))

    @property
    def clutter_rate(self) -> float:
        return float(self.clutter.rate)

    def detection_probability(self, x: np.ndarray) -> np.ndarray:
        return _evaluate_probability(self.pd, x)

    def clutter_intensity(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(self.clutter.intensity(np.atleast_2d(z)), dtype=float)


def constant_velocity(T: float = 1.0, q: float = 0.01, ps: Probability = 0.995) -> MotionModel:
    """Nearly constant velocity model on the state ``[px, vx, py, vy]``."""
    F1 = np.array([[1.0, T], [0.0, 1.0]])
    Q1 = q * np.array([[T**3 / 3.0, T**2 / 2.0], [T**2 / 2.0, T]])
    return MotionModel(np.kron(np.eye(2), F1), np.kron(np.eye(2), Q1), ps)


def position_sensor(R: np.ndarray, pd: Probability, clutter) -> MeasurementModel:
    """Observe ``(px, py)`` from the state ``[px, vx, py, vy]``."""
    H = np.kron(np.eye(2), np.array([[1.0, 0.0]]))
    return MeasurementModel(H, R, pd, clutter)


def _check_dims(d: GaussianDensity, mat: np.ndarray, what: str):
    if mat.shape[-1] != d.dim:
        raise ConfigurationError(f"{what} has {mat.shape[-1]} columns, density has dimension {d.dim}")


def kalman_predict(d: GaussianDensity, m: MotionModel) -> GaussianDensity:
    _check_dims(d, m.F, "F")
    return GaussianDensity(m.F @ d.mean, m.F @ d.cov @ m.F.T + m.Q)


def innovation(d: GaussianDensity, m: MeasurementModel) -> tuple[np.ndarray, np.ndarray]:
    """Predicted measurement and innovation covariance ``H P H' + R``."""
    _check_dims(d, m.H, "H")
    return m.H @ d.mean, _symmetrize(m.H @ d.cov @ m.H.T + m.R)


def _cholesky(S: np.ndarray):
    try:
        return cho_factor(S, lower=True)
    except (LinAlgError, ValueError) as exc:
        raise NumericalError(f"innovation covariance not positive definite:\n{S}") from exc


def mahalanobis_sq(z_pred: np.ndarray, S: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis distance of each row of ``Z`` from ``z_pred`` under ``S``."""
    Z = np.atleast_2d(Z)
    nu = Z - z_pred
    c = _cholesky(S)
    return np.einsum("ij,ij->i", nu, cho_solve(c, nu.T).T)


def log_gaussian(Z: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log density of each row of ``Z`` under ``N(mean, cov)``."""
    Z = np.atleast_2d(Z)
    c = _cholesky(cov)
    nu = Z - mean
    maha = np.einsum("ij,ij->i", nu, cho_solve(c, nu.T).T)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    return -0.5 * (maha + logdet + mean.size * LOG_2PI)


def kalman_update_many(
    d: GaussianDensity, Z: np.ndarray, m: MeasurementModel
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Condition ``d`` on each row of ``Z`` separately.

    Returns the posterior means (one row per measurement), the shared posterior
    covariance and the predictive log-likelihood of each measurement.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != m.H.shape[0]:
        raise ConfigurationError(f"measurement dimension {Z.shape[1]} != {m.H.shape[0]}")
    z_pred, S = innovation(d, m)
    c = _cholesky(S)
    PHt = d.cov @ m.H.T
    K = cho_solve(c, PHt.T).T
    nu = Z - z_pred
    means = d.mean + nu @ K.T
    IKH = np.eye(d.dim) - K @ m.H
    cov = _symmetrize(IKH @ d.cov @ IKH.T + K @ m.R @ K.T)
    maha = np.einsum("ij,ij->i", nu, cho_solve(c, nu.T).T)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    loglik = -0.5 * (maha + logdet + z_pred.size * LOG_2PI)
    return means, cov, loglik


def kalman_update(
    d: GaussianDensity, z: np.ndarray, m: MeasurementModel
) -> tuple[GaussianDensity, float]:
    """Joseph-form Kalman update; returns the posterior and ``log N(z; H mu, S)``."""
    z = np.asarray(z, dtype=float).reshape(1, -1)
    means, cov, loglik = kalman_update_many(d, z, m)
    return GaussianDensity(means[0], cov), float(loglik[0])


def gate(d: GaussianDensity, z: np.ndarray, m: MeasurementModel, gamma: float) -> bool:
    """True iff the squared Mahalanobis distance of ``z`` is at most ``gamma``."""
    if gamma <= 0:
        raise ConfigurationError("gate threshold must be positive")
    z_pred, S = innovation(d, m)
    return bool(mahalanobis_sq(z_pred, S, np.asarray(z, dtype=float))[0] <= gamma)


def moment_match(weights: np.ndarray, means: np.ndarray, covs: np.ndarray) -> GaussianDensity:
    """Single Gaussian with the first two moments of a weighted mixture."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    means = np.atleast_2d(means)
    mu = w @ means
    diff = means - mu
    covs = np.asarray(covs).reshape(len(w), mu.size, mu.size)
    cov = np.einsum("i,ijk->jk", w, covs) + np.einsum("i,ij,ik->jk", w, diff, diff)
    return GaussianDensity(mu, cov)
