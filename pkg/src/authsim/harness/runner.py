"""Seeded Monte Carlo runner.

Trials are cut into fixed blocks (see :func:`authsim.channel.block_sizes`)
and block ``b`` always draws from the streams keyed by ``(seed, purpose, b)``.
Workers only change who computes a block, never what it draws, and results
are folded in block order, so output is identical for any worker count.
The same block streams are used at every sweep point (common random
numbers), and each trial evaluates the legitimate packet and the attack on
the same channel realization.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .. import akba, pla, skba
from ..channel import ATTACK_STREAM, TRACE_STREAM, block_sizes, generate_trace, stream
from ..numerics import NumericalError, wilson_interval
from .config import ExperimentConfig, SkbaConfig, resolve_param
from .table import ResultRow, ResultTable

log = logging.getLogger(__name__)


@dataclass
class BlockCounts:
    fa: np.ndarray
    md: np.ndarray
    md_analytic: np.ndarray | None


@lru_cache(maxsize=8)
def _codebook(block: SkbaConfig, N: int) -> skba.Codebook:
    return block.build(N)


def _pla_block(cfg: ExperimentConfig, thresholds, b: int, n: int) -> BlockCounts:
    p, blk = cfg.scenario, cfg.block
    t, mode = blk.t, blk.variance_mode
    trace = generate_trace(p, stream(p.seed, TRACE_STREAM, b), batch=(n,))
    h1, ht = trace.hA_hat[1], trace.hA_hat[t]
    psi0 = pla.test_statistic(ht, h1, t, p, mode).value
    forged = pla.forge_channel(pla.eve_observations(trace, p, t - 1, blk.covariance), t, p.alpha)
    attacked = pla.attacked_estimate(forged, t, p, stream(p.seed, ATTACK_STREAM, b), blk.attack_model, mode)
    psi1 = pla.test_statistic(attacked, h1, t, p, mode).value
    th = np.asarray(thresholds, dtype=float)
    fa = np.count_nonzero(~pla.decide(psi0[:, None], th[None, :]), axis=0)
    md = np.count_nonzero(pla.decide(psi1[:, None], th[None, :]), axis=0)
    analytic = None
    if mode == "exact":
        ncp = pla.noncentrality(forged, h1, t, p, mode).normalized
        if blk.attack_model == "refreshed":
            cond = pla.md_probability(th, ncp, p.N)
        else:
            cond = pla.md_probability_physical(th, ncp, p.N, pla.residual_variance(t, p, mode), p.sigma_A)
        analytic = cond.sum(axis=0)
    return BlockCounts(fa, md, analytic)


def _akba_block(cfg: ExperimentConfig, thresholds, b: int, n: int) -> BlockCounts:
    p, blk = cfg.scenario, cfg.block
    th = np.asarray(thresholds, dtype=np.int64)
    rank = akba.simulate_block(p, blk.quantizer, stream(p.seed, TRACE_STREAM, b), n,
                               int(th.max()), blk.observed_slots, blk.prior)
    md = np.count_nonzero(rank[:, None] < th[None, :], axis=0)
    return BlockCounts(np.zeros(th.size, dtype=np.int64), md, None)


def _skba_block(cfg: ExperimentConfig, thresholds, b: int, n: int) -> BlockCounts:
    p, blk = cfg.scenario, cfg.block
    th = np.asarray(thresholds, dtype=np.int64)
    cb = _codebook(blk, p.N)
    out = skba.simulate_block(p, cb, stream(p.seed, TRACE_STREAM, b), n, int(th.max()), blk.static_handshake)
    fa = np.full(th.size, np.count_nonzero(out.bob_fail))
    md = np.count_nonzero(out.eve_rank[:, None] < th[None, :], axis=0)
    return BlockCounts(fa, md, None)


_BLOCKS = {"pla": _pla_block, "akba": _akba_block, "skba": _skba_block}


def _run_block(task) -> BlockCounts:
    cfg, thresholds, b, n = task
    return _BLOCKS[cfg.scheme](cfg, thresholds, b, n)


def _fa_analytic(cfg: ExperimentConfig, thresholds):
    p, blk = cfg.scenario, cfg.block
    if cfg.scheme == "pla":
        if blk.variance_mode != "exact":
            return [None] * len(thresholds)
        return [pla.fa_probability(th, p.N) for th in thresholds]
    if cfg.scheme == "akba":
        return [0.0] * len(thresholds)
    if blk.codebook == "lattice":
        noise, _ = skba.effective_noise(p, blk.static_handshake)
        return [skba.lattice_fa_closed_form(blk.step, noise, p.N)] * len(thresholds)
    return [None] * len(thresholds)


def _point(cfg: ExperimentConfig, thresholds, param_values, pool) -> list[ResultRow]:
    tasks = [(cfg, tuple(thresholds), b, n) for b, n in enumerate(block_sizes(cfg.trials))]
    try:
        results = list(pool.map(_run_block, tasks)) if pool is not None else [_run_block(t) for t in tasks]
        fa_exact = _fa_analytic(cfg, thresholds)
    except NumericalError as exc:
        log.warning("numerical failure at %s: %s", param_values, exc)
        return [ResultRow.failed(v, cfg.trials, cfg.seed, str(exc)) for v in param_values]

    k = len(thresholds)
    fa = np.zeros(k, dtype=np.int64)
    md = np.zeros(k, dtype=np.int64)
    md_sum = np.zeros(k) if results and results[0].md_analytic is not None else None
    for r in results:
        fa += r.fa
        md += r.md
        if md_sum is not None:
            md_sum += r.md_analytic
    rows = []
    n = cfg.trials
    for i, v in enumerate(param_values):
        fa_lo, fa_hi = wilson_interval(int(fa[i]), n)
        md_lo, md_hi = wilson_interval(int(md[i]), n)
        md_exact = None if md_sum is None else float(min(max(md_sum[i] / n, 0.0), 1.0))
        rows.append(ResultRow(v, fa[i] / n, fa_lo, fa_hi, md[i] / n, md_lo, md_hi,
                              fa_exact[i], md_exact, n, cfg.seed))
    return rows


def _pool(workers: int):
    return ProcessPoolExecutor(max_workers=workers) if workers > 1 else None


def sweep_threshold(cfg: ExperimentConfig, grid, workers: int | None = None) -> ResultTable:
    """ROC-style sweep of the scheme's decision parameter on shared draws.

    PLA sweeps ``theta``; the key-based schemes sweep the number of attack
    attempts.  Every grid point sees the same trials, so the curve is
    monotone by construction.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid must not be empty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be sorted ascending")
    name = cfg.threshold_param
    thresholds = [int(round(v)) for v in grid] if name == "attacks" else [float(v) for v in grid]
    for th in thresholds:
        cfg.with_value(name, th)  # validates every grid point
    pool = _pool(workers or cfg.workers)
    try:
        rows = _point(cfg, thresholds, grid, pool)
    finally:
        if pool is not None:
            pool.shutdown()
    return ResultTable(name, rows)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ResultTable:
    """Run the configured experiment, one row per sweep point."""
    workers = workers or cfg.workers
    if cfg.sweep is None:
        return sweep_threshold(cfg, [cfg.threshold_value()], workers)
    _, name = resolve_param(cfg.scheme, cfg.sweep.param)
    if name == cfg.threshold_param:
        return sweep_threshold(cfg, cfg.sweep.values, workers)
    pool = _pool(workers)
    rows = []
    try:
        for v in cfg.sweep.values:
            point = cfg.with_value(cfg.sweep.param, v)
            rows += _point(point, [point.threshold_value()], [v], pool)
    finally:
        if pool is not None:
            pool.shutdown()
    return ResultTable(name, rows)
