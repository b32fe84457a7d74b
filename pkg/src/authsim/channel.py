"""Time-varying MIMO channel model and the pilot estimates each party sees.

All channel vectors are flattened ``M x M`` matrices of ``N = M**2``
unit-variance circularly-symmetric complex Gaussian entries.  Functions
accept a leading batch shape so that many independent trials can be drawn
in one call; the channel-entry axis is always last.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

# Purpose tags for stream derivation; keep stable, they key reproducibility.
TRACE_STREAM = 0
ATTACK_STREAM = 1
CODEBOOK_STREAM = 2
AUX_STREAM = 3

BLOCK_SIZE = 4096


def block_sizes(trials: int, block_size: int = BLOCK_SIZE) -> list[int]:
    """Split ``trials`` into fixed-size blocks; block ``b`` always owns the same trials."""
    full, rest = divmod(int(trials), block_size)
    return [block_size] * full + ([rest] if rest else [])


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based generator for ``(seed, *key)``.

    The same key always yields the same stream, whatever else has been
    drawn; this is what keeps Monte Carlo blocks reproducible in isolation.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """iid CN(0, 1) samples."""
    z = rng.standard_normal(tuple(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * math.sqrt(0.5)


class Party(enum.Enum):
    ALICE = "A"
    BOB = "B"


@dataclass(frozen=True)
class PilotSchedule:
    """Transmitter of the pilot in each slot; slots are numbered from 1."""

    tx: tuple[Party, ...]

    def __post_init__(self):
        if len(self.tx) == 0:
            raise ValueError("schedule must contain at least one slot")
        object.__setattr__(self, "tx", tuple(Party(p) for p in self.tx))

    @classmethod
    def preset(cls, name: str, length: int) -> "PilotSchedule":
        if length < 1:
            raise ValueError("schedule length must be at least 1")
        if name == "pla-default":
            first, second = Party.BOB, Party.ALICE
        elif name == "akba-default":
            first, second = Party.ALICE, Party.BOB
        else:
            raise ValueError(f"unknown schedule preset {name!r}")
        return cls(tuple(first if t % 2 else second for t in range(1, length + 1)))

    @classmethod
    def parse(cls, text: str, length: int | None = None) -> "PilotSchedule":
        """Preset name (needs ``length``) or a literal string such as ``"BAB"``."""
        text = text.strip()
        if text in ("pla-default", "akba-default"):
            if length is None:
                raise ValueError("a preset schedule needs an explicit length")
            return cls.preset(text, length)
        return cls(tuple(Party(c) for c in text.upper()))

    def __len__(self):
        return len(self.tx)

    def transmitter(self, t: int) -> Party:
        return self.tx[t - 1]

    def truncated(self, length: int) -> "PilotSchedule":
        return PilotSchedule(self.tx[:length])

    def __str__(self):
        return "".join(p.value for p in self.tx)


@dataclass(frozen=True)
class ScenarioParams:
    M: int
    alpha: float
    beta1: float
    beta2: float
    sigma_A: float
    sigma_B: float
    sigma_E: float
    schedule: PilotSchedule
    seed: int = 0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M!r}")
        for name in ("alpha", "beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        for name in ("sigma_A", "sigma_B", "sigma_E"):
            v = getattr(self, name)
            if not v >= 0.0:
                raise ValueError(f"{name} must be nonnegative, got {v!r}")

    @property
    def N(self) -> int:
        return self.M * self.M

    def beta(self, party: Party) -> float:
        """Correlation of Eve's channel to ``party`` with the legitimate channel."""
        return self.beta1 if party is Party.ALICE else self.beta2


def init_channel(params: ScenarioParams, rng: np.random.Generator, batch=()) -> np.ndarray:
    return complex_normal(rng, tuple(batch) + (params.N,))


def evolve(h_prev: np.ndarray, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """One AR(1) step that preserves the unit marginal variance."""
    if not abs(alpha) <= 1.0:
        raise ValueError(f"|alpha| must not exceed 1, got {alpha!r}")
    z = complex_normal(rng, np.shape(h_prev))
    return alpha * h_prev + math.sqrt(1.0 - alpha * alpha) * z


def derive_eve_channel(h: np.ndarray, beta: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta!r}")
    z = complex_normal(rng, np.shape(h))
    return beta * h + math.sqrt(1.0 - beta * beta) * z


def observe(true_channel: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if not sigma >= 0.0:
        raise ValueError(f"sigma must be nonnegative, got {sigma!r}")
    return true_channel + sigma * complex_normal(rng, np.shape(true_channel))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ChannelTrace:
    """Channels and estimates of one (or a batch of) protocol runs.

    ``h``, ``g1`` and ``g2`` have shape ``(*batch, T, N)``.  The estimate
    dictionaries map a 1-based slot to an array of shape ``(*batch, N)`` and
    only hold the slots on which that party actually received a pilot.
    """

    schedule: PilotSchedule
    h: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    hA_hat: dict[int, np.ndarray] = field(default_factory=dict)
    hB_hat: dict[int, np.ndarray] = field(default_factory=dict)
    gE_hat: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.schedule)

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.h.shape[:-2]

    def channel(self, t: int) -> np.ndarray:
        return self.h[..., t - 1, :]

    def eve_stack(self, slots=None) -> np.ndarray:
        """Eve's estimates stacked on a leading observation axis."""
        slots = range(1, self.T + 1) if slots is None else slots
        return np.stack([self.gE_hat[t] for t in slots], axis=0)


def generate_trace(params: ScenarioParams, rng: np.random.Generator | None = None,
                   batch=(), static_slots: tuple[int, ...] = ()) -> ChannelTrace:
    """Draw a full protocol trace.

    ``static_slots`` lists slots whose channel is copied from the previous
    slot instead of evolving (an idealised instantaneous exchange).
    Draw order per slot is fixed: channel, g1, g2, receiver noise, Eve noise.
    """
    schedule = params.schedule
    if len(schedule) < 1:
        raise ValueError("schedule length must be at least 1")
    if rng is None:
        rng = stream(params.seed, TRACE_STREAM)
    batch = tuple(batch)
    T, N = len(schedule), params.N
    h = np.empty(batch + (T, N), dtype=complex)
    g1 = np.empty_like(h)
    g2 = np.empty_like(h)
    hA_hat, hB_hat, gE_hat = {}, {}, {}
    for t in range(1, T + 1):
        if t == 1:
            h_t = init_channel(params, rng, batch)
        elif t in static_slots:
            h_t = h[..., t - 2, :].copy()
        else:
            h_t = evolve(h[..., t - 2, :], params.alpha, rng)
        h[..., t - 1, :] = h_t
        g1[..., t - 1, :] = derive_eve_channel(h_t, params.beta1, rng)
        g2[..., t - 1, :] = derive_eve_channel(h_t, params.beta2, rng)
        if schedule.transmitter(t) is Party.BOB:
            hA_hat[t] = _frozen(observe(h_t, params.sigma_A, rng))
            g_tx = g2[..., t - 1, :]
        else:
            hB_hat[t] = _frozen(observe(h_t, params.sigma_B, rng))
            g_tx = g1[..., t - 1, :]
        gE_hat[t] = _frozen(observe(g_tx, params.sigma_E, rng))
    return ChannelTrace(schedule, _frozen(h), _frozen(g1), _frozen(g2), hA_hat, hB_hat, gE_hat)


TRACE_COLUMNS = ("slot", "n", "h_re", "h_im", "g1_re", "g1_im", "g2_re", "g2_im",
                 "hA_hat_re", "hA_hat_im", "hB_hat_re", "hB_hat_im", "gE_hat_re", "gE_hat_im")


def write_trace_csv(trace: ChannelTrace, path) -> None:
    """Dump an unbatched trace, one row per (slot, entry); absent estimates are blank."""
    if trace.batch_shape:
        raise ValueError("only unbatched traces can be dumped")

    def pair(d, t, n):
        if t not in d:
            return ["", ""]
        v = d[t][n]
        return [repr(float(v.real)), repr(float(v.imag))]

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for t in range(1, trace.T + 1):
            for n in range(trace.h.shape[-1]):
                row = [t, n + 1]
                for arr in (trace.h, trace.g1, trace.g2):
                    v = arr[t - 1, n]
                    row += [repr(float(v.real)), repr(float(v.imag))]
                row += pair(trace.hA_hat, t, n) + pair(trace.hB_hat, t, n) + pair(trace.gE_hat, t, n)
                writer.writerow(row)
