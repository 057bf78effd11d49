"""Bernoulli and Poisson component algebra used by the PMBM-family filters."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Hashable

import numpy as np

from .exceptions import NumericalError
from .gaussian_models import (
    LOG_2PI,
    GaussianDensity,
    MeasurementModel,
    MotionModel,
    innovation,
    kalman_predict,
    kalman_update,
    log_gaussian,
    moment_match,
)

PPP_PRUNE = 1e-5
BERNOULLI_PRUNE = 1e-5


class Origin(enum.Enum):
    BAYES_NEW = "bayes_new"
    ADAPTIVE_BIRTH = "adaptive_birth"


@dataclass(frozen=True)
class BernoulliTrack:
    r: float
    density: GaussianDensity
    track_id: Hashable = None
    birth_time: int = 0
    origin: Origin = Origin.BAYES_NEW
    origin_measurement: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"existence probability {self.r} outside [0, 1]")


@dataclass(frozen=True)
class PoissonIntensity:
    """Gaussian-mixture intensity of undetected targets."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if np.any(w < 0):
            raise ValueError("PPP weights must be nonnegative")
        dim = np.asarray(self.means).shape[-1]
        means = np.asarray(self.means, dtype=float).reshape(w.size, dim)
        covs = np.asarray(self.covs, dtype=float).reshape(w.size, dim, dim)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)

    @classmethod
    def empty(cls, dim: int) -> "PoissonIntensity":
        return cls(np.zeros(0), np.zeros((0, dim)), np.zeros((0, dim, dim)))

    @classmethod
    def from_terms(cls, terms, dim: int | None = None) -> "PoissonIntensity":
        terms = list(terms)
        if not terms:
            if dim is None:
                raise ValueError("dimension needed for an empty intensity")
            return cls.empty(dim)
        return cls(
            np.array([w for w, _ in terms]),
            np.stack([d.mean for _, d in terms]),
            np.stack([d.cov for _, d in terms]),
        )

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def terms(self) -> list[tuple[float, GaussianDensity]]:
        return [(float(w), GaussianDensity(mu, P)) for w, mu, P in zip(self.weights, self.means, self.covs)]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return self.weights.size

    def scaled(self, factor) -> "PoissonIntensity":
        return PoissonIntensity(self.weights * factor, self.means, self.covs)

    def pruned(self, threshold: float = PPP_PRUNE) -> "PoissonIntensity":
        keep = self.weights >= threshold
        return PoissonIntensity(self.weights[keep], self.means[keep], self.covs[keep])

    def concat(self, other: "PoissonIntensity") -> "PoissonIntensity":
        return PoissonIntensity(
            np.concatenate([self.weights, other.weights]),
            np.concatenate([self.means, other.means]),
            np.concatenate([self.covs, other.covs]),
        )


def _safe_log(x: float) -> float:
    return float(np.log(x)) if x > 0 else -np.inf


def detection_mass(ppp: PoissonIntensity, z: np.ndarray, m: MeasurementModel):
    """Per-term contributions to the inner product of the intensity with ``pD * l(z|.)``.

    Returns the per-term masses together with the Kalman-updated term means
    and covariances. ``pD`` is evaluated at each term mean.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    n = len(ppp)
    if n == 0:
        return np.zeros(0), ppp.means.copy(), ppp.covs.copy()
    H, R = m.H, m.R
    P = ppp.covs
    PHt = P @ H.T
    S = H @ PHt + R
    S = 0.5 * (S + S.transpose(0, 2, 1))
    sign, logdet = np.linalg.slogdet(S)
    if np.any(sign <= 0):
        raise NumericalError("innovation covariance of a PPP term is not positive definite")
    S_inv = np.linalg.inv(S)
    nu = z - ppp.means @ H.T
    maha = np.einsum("ni,nij,nj->n", nu, S_inv, nu)
    loglik = -0.5 * (maha + logdet + z.size * LOG_2PI)
    K = PHt @ S_inv
    means = ppp.means + np.einsum("nij,nj->ni", K, nu)
    IKH = np.eye(ppp.dim) - K @ H
    covs = IKH @ P @ IKH.transpose(0, 2, 1) + K @ R @ K.transpose(0, 2, 1)
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    pd = m.detection_probability(ppp.means)
    mass = ppp.weights * pd * np.exp(loglik)
    return mass, means, covs


def init_bernoulli_from_measurement(
    ppp: PoissonIntensity,
    z: np.ndarray,
    m: MeasurementModel,
    track_id: Hashable = None,
    birth_time: int = 0,
    measurement_index: int | None = None,
) -> tuple[BernoulliTrack, float]:
    """New Bernoulli created by measurement ``z`` via Bayes' rule on the PPP.

    The existence probability weighs "detection of an undetected target"
    against "clutter"; the density is the PPP conditioned on ``z``, collapsed
    to one Gaussian. The returned log weight is the new-track column entry
    ``log(<lambda, pD l(z|.)> + lambda_C(z))``.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    mass, means, covs = detection_mass(ppp, z, m)
    e = float(mass.sum())
    clutter = float(m.clutter_intensity(z)[0])
    total = e + clutter
    if e > 0:
        used = mass > 0
        density = moment_match(mass[used], means[used], covs[used])
        r = e / total
    else:
        Hp = np.linalg.pinv(m.H)
        density = GaussianDensity(Hp @ z, Hp @ m.R @ Hp.T)
        r = 0.0
    track = BernoulliTrack(
        min(r, 1.0), density, track_id, birth_time, Origin.BAYES_NEW, measurement_index
    )
    return track, _safe_log(total)


def predict_bernoulli(t: BernoulliTrack, m: MotionModel) -> BernoulliTrack:
    ps = float(m.survival_probability(t.density.mean)[0])
    return replace(t, r=t.r * ps, density=kalman_predict(t.density, m))


def update_bernoulli_detection(
    t: BernoulliTrack, z: np.ndarray, m: MeasurementModel
) -> tuple[BernoulliTrack, float]:
    post, loglik = kalman_update(t.density, z, m)
    pd = float(m.detection_probability(t.density.mean)[0])
    logw = _safe_log(t.r) + _safe_log(pd) + loglik
    return replace(t, r=1.0, density=post), logw


def update_bernoulli_misdetection(
    t: BernoulliTrack, m: MeasurementModel
) -> tuple[BernoulliTrack, float]:
    pd = float(m.detection_probability(t.density.mean)[0])
    miss = t.r * (1.0 - pd)
    norm = 1.0 - t.r + miss
    r_new = miss / norm if norm > 0 else 0.0
    return replace(t, r=min(r_new, 1.0)), _safe_log(norm)


def detection_log_weights(t: BernoulliTrack, Z: np.ndarray, m: MeasurementModel) -> np.ndarray:
    """Vectorised ``log r + log pD + log N(z; H mu, S)`` over the rows of ``Z``."""
    z_pred, S = innovation(t.density, m)
    pd = float(m.detection_probability(t.density.mean)[0])
    return _safe_log(t.r) + _safe_log(pd) + log_gaussian(Z, z_pred, S)


def predict_ppp(
    ppp: PoissonIntensity,
    m: MotionModel,
    birth: PoissonIntensity | None = None,
    prune: float = PPP_PRUNE,
) -> PoissonIntensity:
    if len(ppp):
        ps = m.survival_probability(ppp.means)
        means = ppp.means @ m.F.T
        covs = np.einsum("ij,njk,lk->nil", m.F, ppp.covs, m.F) + m.Q
        covs = 0.5 * (covs + covs.transpose(0, 2, 1))
        out = PoissonIntensity(ppp.weights * ps, means, covs)
    else:
        out = ppp
    if birth is not None and len(birth):
        out = out.concat(birth)
    return out.pruned(prune)


def update_ppp_misdetection(
    ppp: PoissonIntensity, m: MeasurementModel, prune: float = PPP_PRUNE
) -> PoissonIntensity:
    if not len(ppp):
        return ppp
    pd = m.detection_probability(ppp.means)
    return ppp.scaled(1.0 - pd).pruned(prune)
