"""Expected predicted cardinality at step 2: Bayesian birth versus adaptive birth.

Both quantities assume no targets at step 0 and constant survival and
detection probabilities. The adaptive figure averages the adaptive-birth
cardinality ``min(m * r_b_max, lambda_2)`` over the distribution of the
number ``m`` of step-1 measurements.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, ContractViolation, NumericalError
from .simulation import ScenarioConfig

PMF_TOLERANCE = 1e-12


def bayes_expected_cardinality(ps: float, lb1: float, lb2: float) -> float:
    return ps * lb1 + lb2


def _check_pmf(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float).reshape(-1)
    if np.any(rho < 0):
        raise ContractViolation("pmf has negative entries")
    if abs(rho.sum() - 1.0) > PMF_TOLERANCE:
        raise ContractViolation(f"pmf sums to {rho.sum()!r}, not 1")
    return rho


def adaptive_expected_cardinality_sum(r_b_max: float, lb2: float, rho) -> float:
    """Direct average of ``min(m * r_b_max, lb2)`` over ``rho`` (``rho[m]`` for m = 0, 1, ...)."""
    rho = np.asarray(rho, dtype=float).reshape(-1)
    m = np.arange(rho.size)
    return float(np.sum(np.minimum(m * r_b_max, lb2) * rho))


def adaptive_expected_cardinality(r_b_max: float, lb2: float, rho) -> float:
    """Closed form ``lb2 + sum_{m <= m_check} (r_b_max m - lb2) rho(m)``, ``m_check = floor(lb2 / r_b_max)``.

    Cross-checked against :func:`adaptive_expected_cardinality_sum`.
    """
    if not 0.0 <= r_b_max <= 1.0 or lb2 < 0:
        raise ConfigurationError("need r_b_max in [0, 1] and lb2 >= 0")
    rho = _check_pmf(rho)
    if r_b_max == 0:
        value = 0.0
    else:
        m_check = min(math.floor(lb2 / r_b_max), rho.size - 1)
        m = np.arange(m_check + 1)
        value = float(lb2 + np.sum((r_b_max * m - lb2) * rho[: m_check + 1]))
    direct = adaptive_expected_cardinality_sum(r_b_max, lb2, rho)
    if abs(value - direct) > 1e-12 * max(1.0, abs(value)) + lb2 * PMF_TOLERANCE:
        raise NumericalError(f"closed form {value!r} disagrees with direct sum {direct!r}")
    return value


def poisson_pmf(mean: float, tol: float = PMF_TOLERANCE) -> np.ndarray:
    """Poisson pmf truncated once the remaining tail mass is below ``tol``; renormalised."""
    from scipy.stats import poisson

    upper = int(poisson.isf(tol, mean)) + 2 if mean > 0 else 0
    pmf = poisson.pmf(np.arange(upper + 1), mean)
    return pmf / pmf.sum()


@dataclass(frozen=True)
class EmpiricalPmf:
    pmf: np.ndarray
    stderr: np.ndarray
    samples: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.samples.size


def rho_z1(cfg: ScenarioConfig, n_samples: int, seed: int = 0) -> EmpiricalPmf:
    """Empirical distribution of the number of measurements at step 1 under the generative model."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    sensor = cfg.sensor
    counts = np.empty(n_samples, dtype=int)
    for i in range(n_samples):
        X = cfg.birth.sample(1, rng)
        detected = 0
        if len(X):
            detected = int(np.sum(rng.random(len(X)) < sensor.detection_probability(X)))
        counts[i] = detected + rng.poisson(sensor.clutter_rate)
    pmf = np.bincount(counts) / n_samples
    stderr = np.sqrt(pmf * (1 - pmf) / n_samples)
    return EmpiricalPmf(pmf, stderr, counts)


def _constant(prob, what: str) -> float:
    if callable(prob):
        raise ConfigurationError(f"{what} must be constant for the cardinality analysis")
    return float(prob)


@dataclass
class CardinalityReport:
    bayes_expected: float
    adaptive_expected: float
    empirical_adaptive: float
    empirical_stderr: float
    gap: float
    r_b_max: float
    lb1: float
    lb2: float
    sweep: list[tuple[float, float]] = field(default_factory=list)

    @property
    def best_r_b_max(self) -> float:
        return min(self.sweep, key=lambda rg: (rg[1], -rg[0]))[0]

    def violations(self) -> list[str]:
        out = []
        if self.gap < -3 * self.empirical_stderr:
            out.append(f"gap {self.gap:.6g} below -3 standard errors")
        gaps = [g for _, g in self.sweep]
        if any(b > a + 1e-12 for a, b in zip(gaps, gaps[1:])):
            out.append("gap increases somewhere along the r_b_max sweep")
        if self.sweep and gaps[-1] > min(gaps) + 1e-12:
            out.append("largest r_b_max in the sweep does not minimise the gap")
        return out


def lemma1_report(
    cfg: ScenarioConfig,
    n_samples: int,
    seed: int = 0,
    r_b_max: float | None = None,
    sweep=tuple(np.round(np.linspace(0.1, 1.0, 10), 10)),
) -> CardinalityReport:
    """Bayesian versus adaptive expected cardinality at step 2 for a scenario."""
    if cfg.adaptive is None:
        raise ConfigurationError(f"scenario {cfg.name!r} has no adaptive-birth settings")
    ps = _constant(cfg.motion.ps, "survival probability")
    _constant(cfg.sensor.pd, "detection probability")
    lb1 = cfg.birth.expected_births(1)
    lb2 = cfg.adaptive.expected_births(2)
    rmax = cfg.adaptive.r_b_max if r_b_max is None else r_b_max
    emp = rho_z1(cfg, n_samples, seed)
    bayes = bayes_expected_cardinality(ps, lb1, lb2)
    adaptive = adaptive_expected_cardinality(rmax, lb2, emp.pmf)
    per_sample = np.minimum(emp.samples * rmax, lb2)
    se = float(per_sample.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    sweep_gaps = [(float(r), bayes - adaptive_expected_cardinality(float(r), lb2, emp.pmf)) for r in sweep]
    return CardinalityReport(
        bayes_expected=bayes,
        adaptive_expected=adaptive,
        empirical_adaptive=float(per_sample.mean()),
        empirical_stderr=se,
        gap=bayes - adaptive,
        r_b_max=rmax,
        lb1=lb1,
        lb2=lb2,
        sweep=sweep_gaps,
    )
