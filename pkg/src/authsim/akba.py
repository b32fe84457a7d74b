"""Asymmetric-key authentication keyed by a quantized channel estimate.

Bob quantizes the real and imaginary parts of his slot-1 estimate into a
word, hashes it and would seed a key pair from the digest.  Eve wins when
she reproduces the same word, so the attack is a per-component MAP choice
of quantizer cell under the Gaussian posterior of ``h(1)`` given her looks.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .channel import (TRACE_STREAM, PilotSchedule, ScenarioParams, block_sizes,
                      generate_trace, stream)
from .numerics import (GaussianLinearModel, NumericalError, ar_observation_model, gls_estimate,
                       log_erf_interval, wilson_interval)


@dataclass(frozen=True)
class QuantizerConfig:
    """Uniform saturating quantizer with ``levels`` cells.

    Cells have width ``2 v_sat / levels`` across ``[-v_sat, v_sat]``; the two
    outer cells extend to infinity.  Intervals are ``(tau_k, tau_{k+1}]``.
    """

    levels: int
    v_sat: float

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 2:
            raise ValueError(f"levels must be an integer >= 2, got {self.levels!r}")
        if not self.v_sat > 0:
            raise ValueError(f"v_sat must be positive, got {self.v_sat!r}")

    @cached_property
    def interior(self) -> np.ndarray:
        step = 2.0 * self.v_sat / self.levels
        return -self.v_sat + step * np.arange(1, self.levels)

    @cached_property
    def thresholds(self) -> np.ndarray:
        """``tau_1 .. tau_{K+1}`` including the infinite ends."""
        return np.concatenate(([-np.inf], self.interior, [np.inf]))

    @property
    def bits_per_level(self) -> int:
        return max(1, math.ceil(math.log2(self.levels)))


def quantize_component(x, q: QuantizerConfig):
    """1-based cell index ``k`` with ``x`` in ``(tau_k, tau_{k+1}]``."""
    k = np.searchsorted(q.interior, x, side="left") + 1
    return int(k) if np.ndim(k) == 0 else k


def flatten(v) -> np.ndarray:
    """Complex ``(..., N)`` to real ``(..., 2N)``: real parts, then imaginary parts."""
    v = np.asarray(v)
    return np.concatenate((v.real, v.imag), axis=-1)


@dataclass(frozen=True)
class QuantizedWord:
    levels: tuple[int, ...]
    bits: str

    @classmethod
    def from_levels(cls, levels, q: QuantizerConfig) -> "QuantizedWord":
        levels = tuple(int(k) for k in levels)
        if any(not 1 <= k <= q.levels for k in levels):
            raise ValueError("level index out of range")
        width = q.bits_per_level
        return cls(levels, "".join(format(k - 1, f"0{width}b") for k in levels))


def unpack(bits: str, q: QuantizerConfig) -> tuple[int, ...]:
    width = q.bits_per_level
    if len(bits) % width:
        raise ValueError("bit string length is not a multiple of the level width")
    return tuple(int(bits[i:i + width], 2) + 1 for i in range(0, len(bits), width))


def bits_from_estimate(estimate, q: QuantizerConfig) -> QuantizedWord:
    return QuantizedWord.from_levels(quantize_component(flatten(estimate), q), q)


@dataclass(frozen=True)
class KeyDigest:
    digest: bytes
    hash_name: str

    def hex(self) -> str:
        return self.digest.hex()


def derive_key(word: QuantizedWord, hash_name: str = "sha256") -> KeyDigest:
    """Digest of the word's bit string; key agreement is digest equality."""
    h = hashlib.new(hash_name)
    h.update(len(word.bits).to_bytes(4, "big"))
    h.update(word.bits.encode("ascii"))
    return KeyDigest(h.digest(), hash_name)


def build_regression_akba(slots: int, params: ScenarioParams, covariance: str = "exact") -> GaussianLinearModel:
    """Eve's model with Alice on odd slots and Bob on even slots."""
    sched = PilotSchedule.preset("akba-default", slots)
    betas = [params.beta(p) for p in sched.tx]
    return ar_observation_model(betas, params.alpha, params.sigma_E, covariance)


@dataclass(frozen=True)
class ComponentPosterior:
    """Per-component Gaussian ``exp(-a (x - center)^2)``; ``a = inf`` is a point mass."""

    center: np.ndarray
    a: float


def component_posterior(model: GaussianLinearModel, y, prior: bool = True,
                        target_noise_var: float = 0.0) -> ComponentPosterior:
    """Posterior of the flattened real components of ``h(1)`` given Eve's stack ``y``.

    With the complex Gaussian likelihood the real and imaginary parts
    decouple, each with exponent ``-(A x^2 - 2 Re(B) x)`` where
    ``A = w^H K^-1 w`` and ``B = w^H K^-1 y``.  ``prior`` adds the unit
    channel prior; ``target_noise_var`` widens the result to the law of a
    noisy look ``h(1) + sigma w`` (pass ``sigma**2``).
    """
    info = model.information
    if math.isinf(info):
        center = flatten(gls_estimate(model, y))
        a = math.inf
    else:
        a = info + (1.0 if prior else 0.0)
        if a <= 0:
            raise NumericalError("posterior is improper: no information and no prior")
        center = flatten(model.score(y)) / a
    if target_noise_var > 0:
        var = (0.0 if math.isinf(a) else 0.5 / a) + 0.5 * target_noise_var
        a = 0.5 / var
    return ComponentPosterior(center, a)


def cell_log_probabilities(post: ComponentPosterior, q: QuantizerConfig) -> np.ndarray:
    """Normalized log-probability of every cell, shape ``(..., 2N, levels)``."""
    c = np.asarray(post.center)[..., None]
    if math.isinf(post.a):
        k = quantize_component(post.center, q)
        out = np.full(np.shape(post.center) + (q.levels,), -np.inf)
        np.put_along_axis(out, np.asarray(k)[..., None] - 1, 0.0, axis=-1)
        return out
    r = math.sqrt(post.a)
    tau = q.thresholds
    return log_erf_interval(r * (tau[:-1] - c), r * (tau[1:] - c)) - math.log(2.0)


def cell_log_posterior(k: int, model: GaussianLinearModel, g_stack_n, q: QuantizerConfig,
                       part: str = "real", prior: bool = True) -> float:
    """Log of ``int_{tau_k}^{tau_{k+1}} exp(-(a h^2 + b h)) dh`` for one channel entry.

    ``g_stack_n`` holds Eve's observations of a single entry.  The result is
    unnormalized: the constant ``b^2/4a`` and the Gaussian width are kept.
    """
    g = np.asarray(g_stack_n).reshape(model.dim, 1)
    post = component_posterior(model, g, prior)
    idx = {"real": 0, "imag": 1}[part]
    if math.isinf(post.a):
        return float(cell_log_probabilities(post, q)[idx, k - 1])
    a, m = post.a, float(post.center[idx])
    b = -2.0 * a * m
    norm = 0.5 * math.log(math.pi / a) - math.log(2.0) + b * b / (4.0 * a)
    r = math.sqrt(a)
    lo, hi = q.thresholds[k - 1], q.thresholds[k]
    return float(norm + log_erf_interval(r * (lo - m), r * (hi - m)))


def attack_levels(post: ComponentPosterior, q: QuantizerConfig) -> np.ndarray:
    """MAP cell per component; ties go to the lower index."""
    return np.argmax(cell_log_probabilities(post, q), axis=-1) + 1


def optimal_attack(stack, params: ScenarioParams, q: QuantizerConfig, prior: bool = True,
                   target_bob_noise: bool = True) -> QuantizedWord:
    """Eve's single best guess of Bob's word from her stacked looks ``(slots, N)``."""
    stack = np.asarray(stack)
    model = build_regression_akba(stack.shape[0], params)
    noise = params.sigma_B ** 2 if target_bob_noise else 0.0
    post = component_posterior(model, stack, prior, noise)
    return QuantizedWord.from_levels(attack_levels(post, q), q)


def naive_attack_levels(model: GaussianLinearModel, y, q: QuantizerConfig) -> np.ndarray:
    """Quantize Eve's GLS point estimate directly."""
    return quantize_component(flatten(gls_estimate(model, y)), q)


def enumerate_words(log_probs: np.ndarray, limit: int) -> list[tuple[tuple[int, ...], float]]:
    """The ``limit`` most probable words, best first, for independent components.

    ``log_probs`` has shape ``(components, levels)``.  Best-first search from
    the per-component argmax word; each expansion degrades one component to
    its next most probable cell.  Equal scores are ordered by level tuple.
    """
    log_probs = np.asarray(log_probs, dtype=float)
    n_comp, n_lev = log_probs.shape
    ranked = np.argsort(-log_probs, axis=1, kind="stable")

    def state(ranks):
        levels = tuple(int(ranked[i, r]) + 1 for i, r in enumerate(ranks))
        score = float(sum(log_probs[i, lv - 1] for i, lv in enumerate(levels)))
        return (-score, levels, ranks)

    start = (0,) * n_comp
    heap = [state(start)]
    seen = {start}
    out = []
    while heap and len(out) < limit:
        neg, levels, ranks = heapq.heappop(heap)
        out.append((levels, -neg))
        for i in range(n_comp):
            if ranks[i] + 1 < n_lev:
                nxt = ranks[:i] + (ranks[i] + 1,) + ranks[i + 1:]
                if nxt not in seen:
                    seen.add(nxt)
                    heapq.heappush(heap, state(nxt))
    return out


def enumerate_attacks(stack, params: ScenarioParams, q: QuantizerConfig, L: int,
                      prior: bool = True, target_bob_noise: bool = True) -> list[QuantizedWord]:
    """Eve's first ``L`` guesses in nonincreasing joint posterior.

    Longer requests than the word space are truncated to all words.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    stack = np.asarray(stack)
    model = build_regression_akba(stack.shape[0], params)
    noise = params.sigma_B ** 2 if target_bob_noise else 0.0
    logp = cell_log_probabilities(component_posterior(model, stack, prior, noise), q)
    total = q.levels ** logp.shape[0]
    return [QuantizedWord.from_levels(lv, q) for lv, _ in enumerate_words(logp, min(L, total))]


def _rank_of(target: tuple[int, ...], log_probs: np.ndarray, limit: int) -> int:
    for i, (levels, _) in enumerate(enumerate_words(log_probs, limit)):
        if levels == target:
            return i
    return limit


def simulate_block(params: ScenarioParams, q: QuantizerConfig, rng: np.random.Generator, n: int,
                   attacks: int = 1, observed_slots: int = 2, prior: bool = True) -> np.ndarray:
    """Position of Bob's word in Eve's guess list for ``n`` fresh runs.

    Returns an int array; a value ``>= attacks`` means Eve never guessed it.
    """
    p = _with_schedule(params, observed_slots)
    trace = generate_trace(p, rng, batch=(n,))
    bob = quantize_component(flatten(trace.hB_hat[1]), q)
    model = build_regression_akba(observed_slots, params)
    y = trace.eve_stack(range(1, observed_slots + 1))
    post = component_posterior(model, y, prior, params.sigma_B ** 2)
    logp = cell_log_probabilities(post, q)
    best = np.argmax(logp, axis=-1) + 1
    hit = np.all(best == bob, axis=-1)
    rank = np.where(hit, 0, attacks).astype(np.int64)
    if attacks > 1:
        total = q.levels ** logp.shape[-2]
        limit = min(attacks, total)
        for i in np.flatnonzero(~hit):
            rank[i] = _rank_of(tuple(int(k) for k in bob[i]), logp[i], limit)
            if rank[i] == limit:
                rank[i] = attacks
    return rank


def _with_schedule(params: ScenarioParams, slots: int) -> ScenarioParams:
    return replace(params, schedule=PilotSchedule.preset("akba-default", slots))


@dataclass(frozen=True)
class AkbaEstimate:
    md: float
    md_lo: float
    md_hi: float
    trials: int
    fa: float = 0.0


def md_probability_mc(params: ScenarioParams, q: QuantizerConfig, trials: int, attacks: int = 1,
                      observed_slots: int = 2, prior: bool = True) -> AkbaEstimate:
    """Fraction of runs in which one of Eve's ``attacks`` guesses equals Bob's word.

    False alarms cannot happen: Bob's own signature always verifies.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    hits = 0
    for b, n in enumerate(block_sizes(trials)):
        rank = simulate_block(params, q, stream(params.seed, TRACE_STREAM, b), n,
                              attacks, observed_slots, prior)
        hits += int(np.count_nonzero(rank < attacks))
    lo, hi = wilson_interval(hits, trials)
    return AkbaEstimate(hits / trials, lo, hi, trials)

