"""Measurement-driven (adaptive) birth as used with labelled RFS filters.

Each measurement at step ``k`` seeds one Bernoulli at step ``k + 1``. Its
existence probability is the expected birth count shared out among the
measurements in proportion to how unlikely each was to come from an existing
target, capped by ``r_b_max``. The spatial density is user-defined and
centred on the measured position.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .components import BernoulliTrack, Origin
from .exceptions import ConfigurationError, ContractViolation
from .gaussian_models import GaussianDensity

BirthSchedule = Union[float, Sequence[float], Callable[[int], float]]


@dataclass(frozen=True)
class AdaptiveBirthConfig:
    """Parameters of the adaptive birth rule.

    ``lambda_b_bar`` is the expected number of births per step: a constant, a
    sequence indexed by step (1-based; the last entry is repeated) or a
    callable of the step.
    """

    r_b_max: float
    lambda_b_bar: BirthSchedule
    birth_cov: np.ndarray
    birth_velocity_mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    position_indices: tuple[int, ...] = (0, 2)
    velocity_indices: tuple[int, ...] = (1, 3)

    def __post_init__(self):
        if not 0.0 <= self.r_b_max <= 1.0:
            raise ConfigurationError(f"r_b_max={self.r_b_max} outside [0, 1]")
        cov = np.atleast_2d(np.asarray(self.birth_cov, dtype=float))
        if not np.allclose(cov, cov.T) or np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ConfigurationError("birth covariance must be symmetric positive definite")
        object.__setattr__(self, "birth_cov", cov)
        object.__setattr__(
            self, "birth_velocity_mean", np.asarray(self.birth_velocity_mean, dtype=float).reshape(-1)
        )

    @property
    def state_dim(self) -> int:
        return self.birth_cov.shape[0]

    def expected_births(self, k: int | None = None) -> float:
        lam = self.lambda_b_bar
        if callable(lam):
            value = lam(k)
        elif np.ndim(lam) == 0:
            value = lam
        else:
            seq = list(lam)
            if k is None:
                raise ConfigurationError("a step index is needed for a per-step birth schedule")
            value = seq[min(max(k, 1), len(seq)) - 1]
        value = float(value)
        if value < 0:
            raise ConfigurationError("expected number of births must be nonnegative")
        return value


def association_probabilities(log_weights: np.ndarray, assigned_to_track: np.ndarray) -> np.ndarray:
    """Probability that each measurement was associated to an existing target.

    ``assigned_to_track[h, i]`` is true when hypothesis ``h`` assigns measurement
    ``i`` to a previously existing track. Log weights must be normalised.
    """
    log_weights = np.asarray(log_weights, dtype=float).reshape(-1)
    if log_weights.size == 0:
        raise ContractViolation("no hypotheses given")
    total = logsumexp(log_weights)
    if abs(total) > 1e-6:
        raise ContractViolation(f"hypothesis log weights not normalised (logsumexp={total:.3g})")
    mask = np.asarray(assigned_to_track, dtype=float).reshape(log_weights.size, -1)
    return np.clip(np.exp(log_weights) @ mask, 0.0, 1.0)


def association_probability(z_index: int, updated_hypotheses, n_tracks) -> float:
    """r_U for one measurement from ``(log_weight, Assignment)`` pairs.

    A measurement counts as associated in a hypothesis when its column index
    is below that hypothesis' number of existing tracks (``n_tracks`` is an int
    or one int per hypothesis).
    """
    hyps = list(updated_hypotheses)
    counts = [n_tracks] * len(hyps) if np.ndim(n_tracks) == 0 else list(n_tracks)
    log_w = np.array([lw for lw, _ in hyps], dtype=float)
    mask = np.array([[a.mapping[z_index] < n] for (_, a), n in zip(hyps, counts)])
    return float(association_probabilities(log_w, mask)[0])


def birth_existences(r_u_all, cfg: AdaptiveBirthConfig, next_time: int | None = None) -> np.ndarray:
    r_u = np.asarray(r_u_all, dtype=float).reshape(-1)
    if np.any((r_u < 0) | (r_u > 1)):
        raise ContractViolation("association probabilities must lie in [0, 1]")
    free = 1.0 - r_u
    denom = free.sum()
    if denom <= 0:
        return np.zeros_like(r_u)
    return np.minimum(cfg.r_b_max, free / denom * cfg.expected_births(next_time))


def birth_existence(r_u_all, z_index: int, cfg: AdaptiveBirthConfig, next_time: int | None = None) -> float:
    if len(r_u_all) == 0:
        raise ContractViolation("at least one measurement is required")
    return float(birth_existences(r_u_all, cfg, next_time)[z_index])


def make_birth_bernoulli(
    z: np.ndarray,
    r: float,
    cfg: AdaptiveBirthConfig,
    next_time: int,
    z_index: int | None = None,
    track_id: Hashable = None,
) -> BernoulliTrack:
    """Bernoulli at the measured position with the configured velocity mean and covariance."""
    mean = np.zeros(cfg.state_dim)
    mean[list(cfg.position_indices)] = np.asarray(z, dtype=float).reshape(-1)
    if cfg.velocity_indices:
        mean[list(cfg.velocity_indices)] = cfg.birth_velocity_mean
    return BernoulliTrack(
        float(r),
        GaussianDensity(mean, cfg.birth_cov),
        track_id=track_id,
        birth_time=next_time,
        origin=Origin.ADAPTIVE_BIRTH,
        origin_measurement=z_index,
    )
