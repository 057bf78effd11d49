"""PMBM, PMB, A-MBM and A-MB filtering recursions.

All four variants share one code path. The adaptive variants keep the
Poisson intensity identically zero, so a measurement can only be clutter or a
detection of an existing track, and new tracks enter through adaptive birth at
the following prediction. The PMB variants collapse the hypothesis mixture to
a single multi-Bernoulli after every update.

Global hypotheses are stored as an integer table ``selectors`` with one row
per hypothesis and one column per track; entry ``a >= 0`` picks local
hypothesis ``a`` of that track and ``-1`` means the track does not exist in
that hypothesis.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import adaptive_birth as ab
from .assignment import FORBIDDEN, kbest_budget, kbest_decomposed
from .components import (
    BernoulliTrack,
    PoissonIntensity,
    init_bernoulli_from_measurement,
    predict_bernoulli,
    predict_ppp,
    update_ppp_misdetection,
)
from .exceptions import ConfigurationError, NumericalError
from .gaussian_models import LOG_2PI, GaussianDensity, MeasurementModel, MotionModel, moment_match

# Stand-in for log(0) in misdetection baselines so cost differences stay finite.
LOG_FLOOR = -700.0


class Variant(enum.Enum):
    PMBM = "PMBM"
    PMB = "PMB"
    A_MBM = "A-MBM"
    A_MB = "A-MB"

    @property
    def adaptive(self) -> bool:
        return self in (Variant.A_MBM, Variant.A_MB)

    @property
    def multi_bernoulli(self) -> bool:
        return self in (Variant.PMB, Variant.A_MB)

    @classmethod
    def parse(cls, name: "str | Variant") -> "Variant":
        if isinstance(name, Variant):
            return name
        key = name.strip().upper().replace("_", "-")
        for v in cls:
            if v.value == key:
                return v
        raise ConfigurationError(
            f"unknown filter variant {name!r}; choose from {', '.join(v.value for v in cls)}"
        )


@dataclass(frozen=True)
class FilterConfig:
    variant: Variant = Variant.PMBM
    n_h_max: int = 200
    prune_ppp: float = 1e-5
    prune_bernoulli: float = 1e-5
    prune_hypothesis: float = 1e-10
    gate_gamma: float = 20.0
    estimator_threshold: float = 0.4
    adaptive: ab.AdaptiveBirthConfig | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if min(self.prune_ppp, self.prune_bernoulli, self.prune_hypothesis, self.gate_gamma) <= 0:
            raise ConfigurationError("pruning and gating thresholds must be positive")
        if not 0.0 < self.estimator_threshold < 1.0:
            raise ConfigurationError("estimator threshold must lie in (0, 1)")
        if self.n_h_max < 1:
            raise ConfigurationError("n_h_max must be at least 1")


@dataclass(frozen=True)
class FilterModels:
    """Models assumed by the filter. ``birth(k)`` is the PPP birth intensity at step ``k``."""

    motion: MotionModel
    sensor: MeasurementModel
    birth: Callable[[int], PoissonIntensity]

    @property
    def state_dim(self) -> int:
        return self.motion.F.shape[0]


@dataclass(frozen=True)
class Track:
    track_id: int
    hypotheses: tuple[BernoulliTrack, ...]


@dataclass(frozen=True)
class PmbmDensity:
    ppp: PoissonIntensity
    tracks: tuple[Track, ...] = ()
    log_weights: np.ndarray = field(default_factory=lambda: np.zeros(1))
    selectors: np.ndarray = field(default_factory=lambda: np.zeros((1, 0), dtype=int))
    assoc_prob: np.ndarray | None = None
    next_id: int = 0

    @classmethod
    def empty(cls, dim: int) -> "PmbmDensity":
        return cls(PoissonIntensity.empty(dim))

    @property
    def global_hypotheses(self) -> list[tuple[float, tuple[int, ...]]]:
        return [(float(w), tuple(int(a) for a in row)) for w, row in zip(self.log_weights, self.selectors)]

    @property
    def n_hypotheses(self) -> int:
        return self.log_weights.size

    def bernoullis(self, h: int) -> list[BernoulliTrack]:
        """Bernoulli components present in global hypothesis ``h``."""
        return [t.hypotheses[a] for t, a in zip(self.tracks, self.selectors[h]) if a >= 0]


Estimate = list[tuple[int, np.ndarray]]


def _require_adaptive(cfg: FilterConfig) -> ab.AdaptiveBirthConfig:
    if cfg.adaptive is None:
        raise ConfigurationError(f"{cfg.variant.value} needs an AdaptiveBirthConfig")
    return cfg.adaptive


def predict(
    d: PmbmDensity,
    cfg: FilterConfig,
    models: FilterModels,
    k: int,
    prev_measurements: np.ndarray | None = None,
) -> PmbmDensity:
    """Prediction from step ``k - 1`` to step ``k``.

    For adaptive variants, ``prev_measurements`` are the measurements of step
    ``k - 1``; each seeds a birth Bernoulli appended to every global hypothesis.
    """
    if cfg.variant.adaptive:
        adaptive = _require_adaptive(cfg)
        ppp = PoissonIntensity.empty(models.state_dim)
    else:
        ppp = predict_ppp(d.ppp, models.motion, models.birth(k), cfg.prune_ppp)
    tracks = [
        Track(t.track_id, tuple(predict_bernoulli(b, models.motion) for b in t.hypotheses))
        for t in d.tracks
    ]
    selectors = d.selectors
    next_id = d.next_id
    if cfg.variant.adaptive and prev_measurements is not None and len(prev_measurements):
        Z = np.atleast_2d(prev_measurements)
        r_u = d.assoc_prob if d.assoc_prob is not None and d.assoc_prob.size == len(Z) else np.zeros(len(Z))
        r_birth = ab.birth_existences(r_u, adaptive, k)
        new_cols = []
        for j, (z, r) in enumerate(zip(Z, r_birth)):
            if r < cfg.prune_bernoulli:
                continue
            b = ab.make_birth_bernoulli(z, r, adaptive, k, z_index=j, track_id=next_id)
            tracks.append(Track(next_id, (b,)))
            next_id += 1
            new_cols.append(0)
        if new_cols:
            births = np.zeros((selectors.shape[0], len(new_cols)), dtype=int)
            selectors = np.hstack([selectors, births])
    return replace(d, ppp=ppp, tracks=tuple(tracks), selectors=selectors, next_id=next_id)


def _lse(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return -np.inf
    mx = x.max()
    if not np.isfinite(mx):
        return float(mx)
    return float(mx + np.log(np.exp(x - mx).sum()))


@dataclass
class _ScanOutcomes:
    """Misdetection and detection outcomes of every local hypothesis against one scan.

    Column ``l`` of ``costs`` holds, for each measurement, the negative log
    detection weight relative to the misdetection weight of local hypothesis
    ``l`` (``inf`` outside the gate).
    """

    costs: np.ndarray
    miss_logw: np.ndarray
    miss_r: np.ndarray
    means: np.ndarray
    gains: np.ndarray
    post_covs: np.ndarray
    innovations: np.ndarray

    def detected(self, b: BernoulliTrack, l: int, j: int) -> BernoulliTrack:
        mean = self.means[l] + self.gains[l] @ self.innovations[l, j]
        return replace(b, r=1.0, density=GaussianDensity(mean, self.post_covs[l]))

    def missed(self, b: BernoulliTrack, l: int) -> BernoulliTrack:
        return replace(b, r=float(min(self.miss_r[l], 1.0)))


def _scan_outcomes(
    bernoullis: list[BernoulliTrack], Z: np.ndarray, sensor: MeasurementModel, gamma: float
) -> _ScanOutcomes:
    m, dz = Z.shape
    L = len(bernoullis)
    if L == 0:
        empty = np.zeros(0)
        return _ScanOutcomes(np.zeros((m, 0)), empty, empty, empty, empty, empty, empty)
    r = np.array([b.r for b in bernoullis])
    mu = np.stack([b.density.mean for b in bernoullis])
    P = np.stack([b.density.cov for b in bernoullis])
    pd = sensor.detection_probability(mu)
    miss = r * (1.0 - pd)
    norm = 1.0 - r + miss
    with np.errstate(divide="ignore", invalid="ignore"):
        miss_r = np.where(norm > 0, miss / norm, 0.0)
        miss_logw = np.maximum(np.log(norm), LOG_FLOOR)
    H, R = sensor.H, sensor.R
    PHt = P @ H.T
    S = H @ PHt + R
    S = 0.5 * (S + S.transpose(0, 2, 1))
    sign, logdet = np.linalg.slogdet(S)
    if np.any(sign <= 0):
        raise NumericalError("innovation covariance of a track is not positive definite")
    S_inv = np.linalg.inv(S)
    K = PHt @ S_inv
    IKH = np.eye(mu.shape[1]) - K @ H
    post = IKH @ P @ IKH.transpose(0, 2, 1) + K @ R @ K.transpose(0, 2, 1)
    post = 0.5 * (post + post.transpose(0, 2, 1))
    nu = Z[None, :, :] - (mu @ H.T)[:, None, :]
    maha = np.einsum("lmi,lij,lmj->lm", nu, S_inv, nu)
    gated = (maha <= gamma) & ((r > 0) & (pd > 0))[:, None]
    with np.errstate(divide="ignore"):
        det_logw = (np.log(r) + np.log(pd))[:, None] - 0.5 * (maha + logdet[:, None] + dz * LOG_2PI)
    costs = np.where(gated, -(det_logw - miss_logw[:, None]), FORBIDDEN).T
    return _ScanOutcomes(costs, miss_logw, miss_r, mu, K, post, nu)


def update(
    d: PmbmDensity,
    Z: np.ndarray,
    cfg: FilterConfig,
    models: FilterModels,
    k: int = 0,
) -> PmbmDensity:
    """Measurement update with Murty-generated data association hypotheses."""
    sensor = models.sensor
    Z = np.asarray(Z, dtype=float).reshape(-1, sensor.H.shape[0])
    m = Z.shape[0]
    n_tracks = len(d.tracks)

    # Outcomes per local hypothesis, shared by every parent that selects it.
    offsets = np.zeros(n_tracks + 1, dtype=int)
    flat: list[BernoulliTrack] = []
    for t_idx, t in enumerate(d.tracks):
        offsets[t_idx + 1] = offsets[t_idx] + len(t.hypotheses)
        flat.extend(t.hypotheses)
    scan = _scan_outcomes(flat, Z, sensor, cfg.gate_gamma)
    active_local = np.isfinite(scan.costs).any(axis=0)

    # New-track column entries: Bayes' rule on the PPP (zero PPP -> pure clutter).
    new_tracks = []
    new_logw = np.zeros(m)
    for j in range(m):
        b, lw = init_bernoulli_from_measurement(d.ppp, Z[j], sensor, None, k, j)
        new_tracks.append(b)
        new_logw[j] = lw
    # A measurement neither clutter nor target-generated under the model is
    # kept as clutter with vanishing weight.
    diag = -np.maximum(new_logw, LOG_FLOOR)

    child_logw: list[float] = []
    child_codes: list[np.ndarray] = []
    child_assoc: list[np.ndarray] = []
    rows = np.arange(m)
    for h in range(d.n_hypotheses):
        sel = d.selectors[h]
        present = np.flatnonzero(sel >= 0)
        local = offsets[present] + sel[present]
        base = d.log_weights[h] + scan.miss_logw[local].sum()
        act = active_local[local]
        act_tracks = present[act]
        na = act_tracks.size
        C = np.full((m, na + m), FORBIDDEN)
        C[:, :na] = scan.costs[:, local[act]]
        C[rows, na + rows] = diag
        parent_codes = np.full(n_tracks, -1, dtype=int)
        parent_codes[present] = sel[present] * (m + 1)
        budget = kbest_budget(d.log_weights[h], cfg.n_h_max)
        for a in kbest_decomposed(C, budget):
            mapping = np.asarray(a.mapping, dtype=int)
            to_track = mapping < na
            codes = parent_codes.copy()
            codes[act_tracks[mapping[to_track]]] += rows[to_track] + 1
            child_logw.append(base - a.total_cost)
            child_codes.append(codes)
            child_assoc.append(to_track)

    n_child = len(child_logw)
    logw = np.array(child_logw)
    codes = np.array(child_codes, dtype=int).reshape(n_child, n_tracks)
    assoc = np.array(child_assoc, dtype=bool).reshape(n_child, m)

    # Hypothesis pruning and cap, then renormalise.
    logw = logw - _lse(logw)
    keep = np.flatnonzero(logw >= np.log(cfg.prune_hypothesis))
    keep = keep[np.argsort(-logw[keep], kind="stable")][: cfg.n_h_max]
    logw = logw[keep] - _lse(logw[keep])
    codes, assoc = codes[keep], assoc[keep]
    assoc_prob = ab.association_probabilities(logw, assoc) if m else np.zeros(0)

    # Materialise the local hypotheses that survive.
    tracks: list[Track] = []
    columns: list[np.ndarray] = []
    for t_idx, t in enumerate(d.tracks):
        col = codes[:, t_idx]
        used = np.unique(col[col >= 0])
        if used.size == 0:
            continue
        hyps = []
        for code in used:
            parent, j = divmod(int(code), m + 1)
            l = offsets[t_idx] + parent
            b = t.hypotheses[parent]
            hyps.append(scan.missed(b, l) if j == 0 else scan.detected(b, l, j - 1))
        tracks.append(Track(t.track_id, tuple(hyps)))
        columns.append(np.where(col >= 0, np.searchsorted(used, col), -1))
    next_id = d.next_id
    new_present = ~assoc
    for j in range(m):
        if not new_present[:, j].any() or new_tracks[j].r <= 0:
            continue
        tracks.append(Track(next_id, (replace(new_tracks[j], track_id=next_id),)))
        columns.append(np.where(new_present[:, j], 0, -1))
        next_id += 1
    selectors = np.stack(columns, axis=1) if columns else np.zeros((logw.size, 0), dtype=int)

    ppp = update_ppp_misdetection(d.ppp, sensor, cfg.prune_ppp)
    out = PmbmDensity(ppp, tuple(tracks), logw, selectors, assoc_prob, next_id)
    return _prune_bernoullis(out, cfg.prune_bernoulli)


def _prune_bernoullis(d: PmbmDensity, threshold: float) -> PmbmDensity:
    """Drop low-existence local hypotheses, merge duplicate hypotheses, drop dead tracks."""
    sel = d.selectors.copy()
    for t_idx, t in enumerate(d.tracks):
        r = np.array([b.r for b in t.hypotheses])
        col = sel[:, t_idx]
        low = (col >= 0) & (r[np.maximum(col, 0)] < threshold)
        col[low] = -1
    if sel.shape[0] > 1:
        uniq, inverse = np.unique(sel, axis=0, return_inverse=True)
        top = d.log_weights.max()
        mass = np.bincount(inverse.reshape(-1), weights=np.exp(d.log_weights - top), minlength=len(uniq))
        logw = np.log(mass) + top
        order = np.argsort(-logw, kind="stable")
        sel, logw = uniq[order], logw[order]
    else:
        logw = d.log_weights
    logw = logw - _lse(logw)

    tracks = []
    columns = []
    for t_idx, t in enumerate(d.tracks):
        col = sel[:, t_idx]
        used = np.unique(col[col >= 0])
        if used.size == 0:
            continue
        remap = np.full(len(t.hypotheses), -1, dtype=int)
        remap[used] = np.arange(used.size)
        tracks.append(Track(t.track_id, tuple(t.hypotheses[a] for a in used)))
        columns.append(np.where(col >= 0, remap[np.maximum(col, 0)], -1))
    selectors = np.stack(columns, axis=1) if columns else np.zeros((logw.size, 0), dtype=int)
    return replace(d, tracks=tuple(tracks), log_weights=logw, selectors=selectors)


def reduce_to_pmb(d: PmbmDensity, prune_bernoulli: float = 1e-5) -> PmbmDensity:
    """Collapse the multi-Bernoulli mixture to one multi-Bernoulli, track by track."""
    w = np.exp(d.log_weights - _lse(d.log_weights))
    tracks = []
    for t_idx, t in enumerate(d.tracks):
        col = d.selectors[:, t_idx]
        hyp_w = np.zeros(len(t.hypotheses))
        np.add.at(hyp_w, col[col >= 0], w[col >= 0])
        r_h = np.array([b.r for b in t.hypotheses])
        mass = hyp_w * r_h
        r = float(min(mass.sum(), 1.0))
        if r < prune_bernoulli or mass.sum() <= 0:
            continue
        used = mass > 0
        if used.sum() == 1:
            dens = t.hypotheses[int(np.flatnonzero(used)[0])].density
        else:
            dens = moment_match(
                mass[used],
                np.stack([b.density.mean for b, u in zip(t.hypotheses, used) if u]),
                np.stack([b.density.cov for b, u in zip(t.hypotheses, used) if u]),
            )
        first = t.hypotheses[int(np.argmax(mass))]
        tracks.append(Track(t.track_id, (replace(first, r=r, density=dens),)))
    selectors = np.zeros((1, len(tracks)), dtype=int)
    return replace(d, tracks=tuple(tracks), log_weights=np.zeros(1), selectors=selectors)


def estimate(d: PmbmDensity, cfg: FilterConfig) -> Estimate:
    """Tracks of the most likely global hypothesis whose existence exceeds the threshold."""
    if d.n_hypotheses == 0:
        return []
    h = int(np.argmax(d.log_weights))
    out = []
    for t, a in zip(d.tracks, d.selectors[h]):
        if a >= 0 and t.hypotheses[a].r > cfg.estimator_threshold:
            out.append((t.track_id, t.hypotheses[a].density.mean.copy()))
    return out


@dataclass
class Diagnostics:
    hypothesis_counts: list[int] = field(default_factory=list)
    track_counts: list[int] = field(default_factory=list)
    step_seconds: list[float] = field(default_factory=list)

    @property
    def total_seconds(self) -> float:
        return float(sum(self.step_seconds))


def run_filter(
    cfg: FilterConfig,
    models: FilterModels,
    measurements: Sequence[np.ndarray],
) -> tuple[list[Estimate], Diagnostics]:
    """Run predict, update, (reduce) and estimate over steps ``1..len(measurements)``."""
    if cfg.variant.adaptive:
        _require_adaptive(cfg)
    d = PmbmDensity.empty(models.state_dim)
    estimates: list[Estimate] = []
    diag = Diagnostics()
    prev = None
    for k, Z in enumerate(measurements, start=1):
        tic = time.perf_counter()
        d = predict(d, cfg, models, k, prev)
        d = update(d, Z, cfg, models, k)
        if cfg.variant.multi_bernoulli:
            d = reduce_to_pmb(d, cfg.prune_bernoulli)
        estimates.append(estimate(d, cfg))
        diag.step_seconds.append(time.perf_counter() - tic)
        diag.hypothesis_counts.append(d.n_hypotheses)
        diag.track_counts.append(len(d.tracks))
        prev = np.asarray(Z, dtype=float).reshape(-1, models.sensor.H.shape[0])
    return estimates, diag
