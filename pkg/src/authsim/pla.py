"""Physical-layer authentication: Alice's distance test and Eve's forgery.

Alice stores her slot-1 estimate and, at a later slot ``t``, compares the
fresh estimate against the AR prediction ``alpha**(t-1) * h_hat(1)``.  Eve
fuses her own looks at the channel into a GLS estimate of ``h(1)`` and
imposes the predicted channel.

The statistic ``psi`` keeps its per-entry normalisation, so it hovers around
one under the legitimate hypothesis.  Chi-square laws apply to
``psi_norm = 2 N psi``, which is what every probability here evaluates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .channel import ChannelTrace, Party, PilotSchedule, ScenarioParams, complex_normal
from .numerics import (GaussianLinearModel, NumericalError, ar_observation_model, gls_estimate,
                       noncentral_chi2_cdf, noncentral_chi2_cdf_grid)

VARIANCE_MODES = ("exact", "literal")
ATTACK_MODELS = ("refreshed", "physical")


class DegenerateVarianceError(NumericalError):
    """The residual has no randomness left, so the statistic is 0/0."""


@dataclass(frozen=True)
class PlaConfig:
    theta: float
    t: int = 3
    variance_mode: str = "exact"
    attack_model: str = "refreshed"
    covariance: str = "exact"

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta!r}")
        if int(self.t) != self.t or self.t < 2:
            raise ValueError(f"t must be an integer >= 2, got {self.t!r}")
        if self.variance_mode not in VARIANCE_MODES:
            raise ValueError(f"variance_mode must be one of {VARIANCE_MODES}")
        if self.attack_model not in ATTACK_MODELS:
            raise ValueError(f"attack_model must be one of {ATTACK_MODELS}")
        if self.covariance not in ("exact", "lagless"):
            raise ValueError("covariance must be 'exact' or 'lagless'")


class Statistic(NamedTuple):
    value: np.ndarray | float
    normalized: np.ndarray | float


def residual_variance(t: int, params: ScenarioParams, mode: str = "exact") -> float:
    """Variance of ``h_hat(t) - alpha**(t-1) h_hat(1)`` per complex entry.

    ``exact`` includes the estimation noise on both looks; ``literal`` is the
    simpler expression ``sigma_A**2 + (1 - alpha**2) alpha**(t-1)``.
    """
    if t < 2:
        raise ValueError(f"slot must be >= 2, got {t}")
    a, s2 = params.alpha, params.sigma_A ** 2
    if mode == "exact":
        decay = a ** (2 * (t - 1))
        var = s2 * (1.0 + decay) + 1.0 - decay
    elif mode == "literal":
        var = s2 + (1.0 - a * a) * a ** (t - 1)
    else:
        raise ValueError(f"unknown variance mode {mode!r}")
    if var <= 0.0:
        raise DegenerateVarianceError(f"residual variance is zero at slot {t}")
    return var


def _normalized_distance(x, ref, t, params, mode) -> Statistic:
    x, ref = np.asarray(x), np.asarray(ref)
    N = x.shape[-1]
    gamma2 = residual_variance(t, params, mode)
    d = x - params.alpha ** (t - 1) * ref
    value = np.sum(d.real ** 2 + d.imag ** 2, axis=-1) / (N * gamma2)
    return Statistic(value, 2 * N * value)


def test_statistic(h_hat_t, h_hat_1, t: int, params: ScenarioParams, mode: str = "exact") -> Statistic:
    """Distance between the slot-``t`` estimate and the slot-1 prediction."""
    return _normalized_distance(h_hat_t, h_hat_1, t, params, mode)


test_statistic.__test__ = False  # not a pytest test despite the name


def noncentrality(forged, h_hat_1, t: int, params: ScenarioParams, mode: str = "exact") -> Statistic:
    """Mean offset of a forged channel from Alice's prediction, in statistic units."""
    return _normalized_distance(forged, h_hat_1, t, params, mode)


def decide(psi, theta):
    """``True`` (authentic) iff ``psi < theta``; a tie is rejected."""
    return np.less(psi, theta)


@dataclass(frozen=True, eq=False)
class EveObservationStack:
    """Eve's estimates of one run, observation axis first: ``(slots, *batch, N)``."""

    observations: np.ndarray
    transmitters: tuple[Party, ...]
    model: GaussianLinearModel

    def __post_init__(self):
        if self.observations.shape[0] != len(self.transmitters) or self.model.dim != len(self.transmitters):
            raise ValueError("stack length, schedule length and model dimension must agree")


def build_regression(schedule: PilotSchedule, params: ScenarioParams,
                     covariance: str = "exact") -> GaussianLinearModel:
    """Linear model of Eve's stacked estimates over the slots of ``schedule``.

    The coefficient at slot ``t`` uses the correlation factor of whoever
    transmitted in that slot.
    """
    betas = [params.beta(p) for p in schedule.tx]
    return ar_observation_model(betas, params.alpha, params.sigma_E, covariance)


def eve_observations(trace: ChannelTrace, params: ScenarioParams, last_slot: int,
                     covariance: str = "exact") -> EveObservationStack:
    if last_slot < 1:
        raise ValueError("Eve needs at least one observed slot")
    sched = trace.schedule.truncated(last_slot)
    return EveObservationStack(trace.eve_stack(range(1, last_slot + 1)), sched.tx,
                               build_regression(sched, params, covariance))


def forge_channel(stack: EveObservationStack, target_slot: int, alpha: float) -> np.ndarray:
    """Channel Eve imposes at ``target_slot``: the AR prediction of her ML ``h(1)``."""
    return alpha ** (target_slot - 1) * gls_estimate(stack.model, stack.observations)


def attacked_estimate(forged, t: int, params: ScenarioParams, rng: np.random.Generator,
                      attack_model: str = "refreshed", mode: str = "exact") -> np.ndarray:
    """Alice's slot-``t`` estimate when the packet comes from Eve.

    ``refreshed``: the forged channel arrives with the same residual fluctuation
    a legitimate packet has, so the statistic is noncentral chi-square with
    the noncentrality of :func:`noncentrality`.  ``physical``: only Alice's
    own estimation noise is added.
    """
    forged = np.asarray(forged)
    if attack_model == "refreshed":
        scale = math.sqrt(residual_variance(t, params, mode))
    elif attack_model == "physical":
        scale = params.sigma_A
    else:
        raise ValueError(f"unknown attack model {attack_model!r}")
    return forged + scale * complex_normal(rng, forged.shape)


def fa_probability(theta, N: int, mode: str = "exact"):
    """Probability that a legitimate packet is rejected."""
    if mode != "exact":
        raise ValueError("the chi-square false-alarm law holds only for the exact variance")
    if np.ndim(theta) == 0:
        if math.isinf(theta):
            return 0.0
        return 1.0 - noncentral_chi2_cdf(2 * N * float(theta), 2 * N, 0.0)
    theta = np.asarray(theta, dtype=float)
    return 1.0 - noncentral_chi2_cdf_grid(2 * N * theta, 2 * N, [0.0])[0]


def md_probability(theta, noncentrality_norm, N: int):
    """Probability that a forged packet is accepted, given its noncentrality.

    Scalars give a scalar; arrays give shape ``(len(noncentrality), len(theta))``.
    """
    if np.ndim(theta) == 0 and np.ndim(noncentrality_norm) == 0:
        return noncentral_chi2_cdf(2 * N * float(theta), 2 * N, float(noncentrality_norm))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return noncentral_chi2_cdf_grid(2 * N * theta, 2 * N, noncentrality_norm)


def md_probability_physical(theta, noncentrality_norm, N: int, gamma2: float, sigma_A: float):
    """Acceptance probability when only Alice's estimation noise perturbs the forgery.

    The statistic is then ``(sigma_A**2/gamma2)`` times a noncentral
    chi-square with noncentrality ``noncentrality_norm * gamma2 / sigma_A**2``.
    With ``sigma_A = 0`` the decision is deterministic.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    lam = np.atleast_1d(np.asarray(noncentrality_norm, dtype=float))
    if sigma_A == 0:
        return (lam[:, None] / (2 * N) < theta[None, :]).astype(float)
    scale = gamma2 / sigma_A ** 2
    return noncentral_chi2_cdf_grid(2 * N * theta * scale, 2 * N, lam * scale)
