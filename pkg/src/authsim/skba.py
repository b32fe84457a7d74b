"""Symmetric-key agreement by code-offset reconciliation.

Alice snaps her slot-2 estimate to the nearest codeword and publishes the
offset ``epsilon``.  Bob subtracts it from his slot-1 estimate and decodes;
Eve does the same with her ML estimate of ``h(1)``.  The key is a hash of
the decoded codeword index.

Two codebooks are supported: an explicit random Gaussian book decoded by
exhaustive search, and the scaled integer lattice ``step * Z^{2N}`` decoded
by componentwise rounding (its "index" is the integer coordinate vector).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from .akba import flatten
from .channel import (AUX_STREAM, CODEBOOK_STREAM, TRACE_STREAM, PilotSchedule, ScenarioParams,
                      block_sizes, complex_normal, generate_trace, stream)
from .numerics import ar_observation_model, gls_estimate, gls_mse, wilson_interval

_DIST_BUDGET = 1 << 22  # complex elements per distance chunk


@dataclass(frozen=True, eq=False)
class Codebook:
    kind: str
    N: int
    codewords: np.ndarray | None = None
    step: float | None = None
    scale: float = 1.0

    @property
    def size(self) -> float:
        return math.inf if self.kind == "lattice" else self.codewords.shape[0]

    @property
    def codeword_variance(self) -> float:
        """Per-entry power of a typical codeword (unit channel power for the lattice)."""
        return self.scale ** 2 if self.kind == "random" else 1.0

    def codeword(self, index) -> np.ndarray:
        if self.kind == "random":
            return self.codewords[index]
        coords = np.asarray(index, dtype=float) * self.step
        return coords[..., :self.N] + 1j * coords[..., self.N:]


def build_codebook(kind: str, N: int, size: int = 64, seed: int = 0, scale: float = 1.0,
                   step: float = 1.0) -> Codebook:
    if kind == "random":
        if size < 2:
            raise ValueError("a random codebook needs at least 2 codewords")
        if not scale > 0:
            raise ValueError("scale must be positive")
        words = scale * complex_normal(stream(seed, CODEBOOK_STREAM), (size, N))
        if np.unique(words, axis=0).shape[0] != size:
            raise ValueError("codebook draw produced duplicate codewords")
        words.setflags(write=False)
        return Codebook("random", N, codewords=words, scale=scale)
    if kind == "lattice":
        if not step > 0:
            raise ValueError("step must be positive")
        return Codebook("lattice", N, step=float(step))
    raise ValueError(f"unknown codebook kind {kind!r}")


def _squared_distances(v: np.ndarray, words: np.ndarray) -> np.ndarray:
    d = v[..., None, :] - words
    return np.sum(d.real ** 2 + d.imag ** 2, axis=-1)


def decode(v, cb: Codebook) -> np.ndarray:
    """Index of the nearest codeword for every vector in ``v`` (shape ``(..., N)``).

    Ties go to the lowest index; on the lattice, to the lower integer.
    """
    v = np.asarray(v)
    if cb.kind == "lattice":
        return np.ceil(flatten(v) / cb.step - 0.5).astype(np.int64)
    flat = v.reshape(-1, cb.N)
    rows = max(1, _DIST_BUDGET // (cb.codewords.size or 1))
    out = np.empty(flat.shape[0], dtype=np.int64)
    for s in range(0, flat.shape[0], rows):
        out[s:s + rows] = np.argmin(_squared_distances(flat[s:s + rows], cb.codewords), axis=-1)
    return out.reshape(v.shape[:-1])


def same_index(a, b, cb: Codebook) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    return np.all(a == b, axis=-1) if cb.kind == "lattice" else a == b


def nearest_codeword(v, cb: Codebook):
    """``(codeword, index)`` minimizing squared Euclidean distance to ``v``."""
    idx = decode(v, cb)
    index = tuple(int(i) for i in idx) if cb.kind == "lattice" else int(idx)
    return cb.codeword(idx), index


def enumerate_codewords(v, cb: Codebook, L: int) -> list[tuple[np.ndarray, int]]:
    """The ``L`` codewords closest to ``v``, nearest first, ties by index."""
    if cb.kind != "random":
        raise ValueError("enumeration needs an explicit codebook")
    if not 1 <= L <= cb.size:
        raise ValueError(f"L must lie in [1, {cb.size}]")
    d = _squared_distances(np.asarray(v), cb.codewords)
    order = np.argsort(d, kind="stable")[:L]
    return [(cb.codewords[i], int(i)) for i in order]


def codeword_rank(v, target, cb: Codebook) -> np.ndarray:
    """Position of codeword ``target`` in the distance order around each ``v``."""
    v = np.asarray(v)
    target = np.asarray(target)
    flat = v.reshape(-1, cb.N)
    tflat = target.reshape(-1)
    rows = max(1, _DIST_BUDGET // cb.codewords.size)
    out = np.empty(flat.shape[0], dtype=np.int64)
    idx = np.arange(cb.codewords.shape[0])
    for s in range(0, flat.shape[0], rows):
        d = _squared_distances(flat[s:s + rows], cb.codewords)
        t = tflat[s:s + rows]
        dt = np.take_along_axis(d, t[:, None], axis=-1)
        ahead = (d < dt) | ((d == dt) & (idx < t[:, None]))
        out[s:s + rows] = ahead.sum(axis=-1)
    return out.reshape(v.shape[:-1])


@dataclass(frozen=True, eq=False)
class ReconciliationMessage:
    epsilon: np.ndarray


@dataclass(frozen=True)
class KeyIndex:
    index: int | tuple[int, ...]

    def key(self, bits: int, hash_name: str = "sha256") -> str:
        return key_from_index(self.index, bits, hash_name)


def reconcile_alice(h_hat_A2, cb: Codebook):
    """Alice's codeword, its index and the public offset."""
    h = np.asarray(h_hat_A2)
    idx = decode(h, cb)
    c = cb.codeword(idx)
    return c, idx, ReconciliationMessage(h - c)


def decode_bob(h_hat_B1, msg: ReconciliationMessage, cb: Codebook) -> KeyIndex:
    return KeyIndex(nearest_codeword(np.asarray(h_hat_B1) - msg.epsilon, cb)[1])


def eve_model(params: ScenarioParams, static_handshake: bool = False):
    """Eve's two-look model: Alice's pilot at slot 1, Bob's at slot 2."""
    alpha = 1.0 if static_handshake else params.alpha
    return ar_observation_model([params.beta1, params.beta2], alpha, params.sigma_E)


def eve_ml_estimate(g_hat_1, g_hat_2, params: ScenarioParams, static_handshake: bool = False):
    """GLS estimate of ``h(1)`` from Eve's slot-1 and slot-2 looks."""
    y = np.stack([np.asarray(g_hat_1), np.asarray(g_hat_2)], axis=0)
    return gls_estimate(eve_model(params, static_handshake), y)


def decode_eve(h_tilde_E, msg: ReconciliationMessage, cb: Codebook) -> KeyIndex:
    return KeyIndex(nearest_codeword(np.asarray(h_tilde_E) - msg.epsilon, cb)[1])


def key_from_index(index, bits: int, hash_name: str = "sha256") -> str:
    """First ``bits`` bits of the hash of the codeword index, as a '0'/'1' string."""
    if bits < 0:
        raise ValueError("bits must be nonnegative")
    if isinstance(index, (tuple, list, np.ndarray)):
        text = ",".join(str(int(i)) for i in index)
    else:
        text = str(int(index))
    digest = hashlib.new(hash_name, b"codeword-index:" + text.encode("ascii")).digest()
    if bits > 8 * len(digest):
        raise ValueError(f"{hash_name} yields only {8 * len(digest)} bits")
    return "".join(format(byte, "08b") for byte in digest)[:bits]


def log_likelihood_ratio(c_star, h_tilde, noise_var: float, codeword_var: float):
    """Per-entry log ratio of the codeword-conditional density to the marginal.

    Numerator: ``CN(c_star, noise_var I)``; denominator ``CN(0, (codeword_var
    + noise_var) I)``.
    """
    if not noise_var > 0:
        raise ValueError("noise variance must be positive")
    h = np.asarray(h_tilde)
    N = h.shape[-1]
    marg = codeword_var + noise_var
    d = h - np.asarray(c_star)
    cond_sq = np.sum(d.real ** 2 + d.imag ** 2, axis=-1)
    marg_sq = np.sum(h.real ** 2 + h.imag ** 2, axis=-1)
    return math.log(marg / noise_var) + (marg_sq / marg - cond_sq / noise_var) / N


def _with_schedule(params: ScenarioParams) -> ScenarioParams:
    return replace(params, schedule=PilotSchedule.preset("akba-default", 2))


@dataclass(frozen=True)
class BlockOutcome:
    bob_fail: np.ndarray
    eve_rank: np.ndarray
    llr_bob: np.ndarray
    llr_eve: np.ndarray


def effective_noise(params: ScenarioParams, static_handshake: bool) -> tuple[float, float]:
    """Variance of Bob's and Eve's decoding residual around Alice's codeword."""
    drift = 0.0 if static_handshake else 2.0 * (1.0 - params.alpha)
    bob = params.sigma_A ** 2 + params.sigma_B ** 2 + drift
    eve = params.sigma_A ** 2 + gls_mse(eve_model(params, static_handshake)) + drift
    return bob, eve


def simulate_block(params: ScenarioParams, cb: Codebook, rng: np.random.Generator, n: int,
                   attacks: int = 1, static_handshake: bool = False,
                   with_llr: bool = False) -> BlockOutcome:
    """Run the agreement ``n`` times.

    ``eve_rank`` is where Alice's codeword falls in Eve's nearest-first list
    (``attacks`` or more means it is not among her guesses).
    """
    p = _with_schedule(params)
    trace = generate_trace(p, rng, batch=(n,), static_slots=(2,) if static_handshake else ())
    h_a2 = trace.hA_hat[2]
    idx_a = decode(h_a2, cb)
    eps = h_a2 - cb.codeword(idx_a)
    h_b = trace.hB_hat[1] - eps
    bob_fail = ~same_index(decode(h_b, cb), idx_a, cb)
    h_e = eve_ml_estimate(trace.gE_hat[1], trace.gE_hat[2], params, static_handshake) - eps
    if attacks > 1:
        if cb.kind != "random":
            raise ValueError("multiple attacks need an explicit codebook")
        rank = codeword_rank(h_e, idx_a, cb)
    else:
        rank = np.where(same_index(decode(h_e, cb), idx_a, cb), 0, 1)
    llr_b = llr_e = np.empty(0)
    if with_llr:
        nb, ne = effective_noise(params, static_handshake)
        c = cb.codeword(idx_a)
        llr_b = log_likelihood_ratio(c, h_b, nb, cb.codeword_variance)
        llr_e = log_likelihood_ratio(c, h_e, ne, cb.codeword_variance)
    return BlockOutcome(bob_fail, rank, llr_b, llr_e)


@dataclass(frozen=True)
class SkbaEstimate:
    fa: float
    fa_lo: float
    fa_hi: float
    md: float
    md_lo: float
    md_hi: float
    trials: int


def fa_md_mc(params: ScenarioParams, cb: Codebook, trials: int, attacks: int = 1,
             static_handshake: bool = False) -> SkbaEstimate:
    """Decoding-based rates: Bob misses Alice's codeword (FA); Eve hits it (MD)."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    fa = md = 0
    for b, n in enumerate(block_sizes(trials)):
        out = simulate_block(params, cb, stream(params.seed, TRACE_STREAM, b), n, attacks, static_handshake)
        fa += int(np.count_nonzero(out.bob_fail))
        md += int(np.count_nonzero(out.eve_rank < attacks))
    return SkbaEstimate(fa / trials, *wilson_interval(fa, trials), md / trials,
                        *wilson_interval(md, trials), trials)


def llr_fa_md_mc(params: ScenarioParams, cb: Codebook, lam: float, trials: int,
                 static_handshake: bool = False) -> SkbaEstimate:
    """Threshold-test rates: ``P[Lambda_B <= lam]`` (FA) and ``P[Lambda_E > lam]`` (MD)."""
    fa = md = 0
    for b, n in enumerate(block_sizes(trials)):
        out = simulate_block(params, cb, stream(params.seed, TRACE_STREAM, b), n, 1,
                             static_handshake, with_llr=True)
        fa += int(np.count_nonzero(out.llr_bob <= lam))
        md += int(np.count_nonzero(out.llr_eve > lam))
    return SkbaEstimate(fa / trials, *wilson_interval(fa, trials), md / trials,
                        *wilson_interval(md, trials), trials)


def lattice_fa_closed_form(step: float, noise_var: float, N: int) -> float:
    """FA of lattice rounding under iid ``CN(0, noise_var)`` residuals."""
    p = math.erfc(step / (2.0 * math.sqrt(noise_var))) if noise_var > 0 else 0.0
    return -math.expm1(2 * N * math.log1p(-p)) if p < 1 else 1.0


def key_rate_bound(lam: float, params: ScenarioParams, trials: int, codeword_var: float = 1.0,
                   static_handshake: bool = True) -> float:
    """``-(1/N) log2 P[Lambda_B > lam]`` with ``h_tilde_B`` drawn from its marginal.

    Returns ``inf`` when no exceedance is observed in ``trials`` draws.
    """
    noise, _ = effective_noise(params, static_handshake)
    N = params.N
    marg = codeword_var + noise
    hits = 0
    for b, n in enumerate(block_sizes(trials)):
        rng = stream(params.seed, AUX_STREAM, b)
        c = math.sqrt(codeword_var) * complex_normal(rng, (n, N))
        h = math.sqrt(marg) * complex_normal(rng, (n, N))
        hits += int(np.count_nonzero(log_likelihood_ratio(c, h, noise, codeword_var) > lam))
    if hits == 0:
        return math.inf
    return -math.log2(hits / trials) / N
