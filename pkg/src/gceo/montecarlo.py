"""Statistical confirmation of the distortion algebra by simulation.

Descriptions are simulated literally: X ~ N(0, sigma_x2), observations
Y_i = X + N_i, finest descriptions W_i = Y_i + T_i with the test-channel
variance implied by the allocation, and coarser stages by adding
independent refinement noise (so a stage's description is a degraded
version of the next).  Everything is jointly Gaussian, so the per-stage
MMSE estimate is linear:

    xhat = D * sum_i W_i / (sigma_n2[i] + sigma_t2[i]),    D = 1/precision.

The sampler is counter-based (Philox keyed by seed and shard index) and
the sample range is partitioned into fixed-size shards with a fixed
reduction order, so results are bit-identical regardless of how the
shards are executed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .model import CeoInstance, _check_allocation, channel_noise_from_r, distortion

SHARD_SIZE = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    n_samples: int
    seed: int

    def __post_init__(self):
        if self.n_samples <= 0:
            raise ArgumentError(f"n_samples must be positive, got {self.n_samples}")
        if not 0 <= self.seed < 2**64:
            raise ArgumentError("seed must fit in 64 bits")


@dataclass(frozen=True)
class SimReport:
    empirical_mse: tuple[float, ...]
    analytic_d: tuple[float, ...]
    stderr: tuple[float, ...]
    z_scores: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "empirical_mse": list(self.empirical_mse),
            "analytic_d": list(self.analytic_d),
            "stderr": list(self.stderr),
            "z_scores": list(self.z_scores),
        }


def _shard_rng(seed: int, shard: int) -> np.random.Generator:
    key = np.array([seed, shard], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _stage_noise_plan(instance: CeoInstance, chain):
    """Per-encoder test-channel variances by stage plus refinement increments.

    Returns (variances[j][i], increments[i][j]) where increments[i][j] >= 0
    is the extra noise turning stage j+1's description into stage j's.
    """
    M = len(chain)
    variances = [
        [channel_noise_from_r(instance, i, chain[j][i]) for i in range(instance.L)]
        for j in range(M)
    ]
    increments = []
    for i in range(instance.L):
        incs = []
        for j in range(M - 1):
            v_coarse, v_fine = variances[j][i], variances[j + 1][i]
            if v_coarse == math.inf:
                incs.append(math.inf)
                continue
            gap = v_coarse - v_fine
            if gap < -1e-12:
                raise ArgumentError(
                    f"encoder {i}: stage {j + 1} noise below stage {j + 2}; chain not nondecreasing"
                )
            incs.append(max(gap, 0.0))
        increments.append(incs)
    return variances, increments


def _simulate(instance: CeoInstance, chain, config: SimConfig, coef_scale: float = 1.0) -> SimReport:
    M = len(chain)
    L = instance.L
    variances, increments = _stage_noise_plan(instance, chain)
    analytic = [distortion(instance, chain[j]) for j in range(M)]
    coef = [
        [
            coef_scale * analytic[j] / (instance.sigma_n2[i] + variances[j][i])
            if variances[j][i] != math.inf
            else 0.0
            for i in range(L)
        ]
        for j in range(M)
    ]
    sum_se = [0.0] * M
    sum_se2 = [0.0] * M
    n = config.n_samples
    shards = (n + SHARD_SIZE - 1) // SHARD_SIZE
    for shard in range(shards):
        m = min(SHARD_SIZE, n - shard * SHARD_SIZE)
        rng = _shard_rng(config.seed, shard)
        x = rng.normal(0.0, math.sqrt(instance.sigma_x2), size=m)
        w = np.zeros((M, L, m))
        for i in range(L):
            y = x + rng.normal(0.0, math.sqrt(instance.sigma_n2[i]), size=m)
            finest = variances[M - 1][i]
            if finest != math.inf:
                w[M - 1, i] = y + (
                    rng.normal(0.0, math.sqrt(finest), size=m) if finest > 0.0 else 0.0
                )
            for j in range(M - 2, -1, -1):
                inc = increments[i][j]
                if variances[j][i] == math.inf:
                    continue
                w[j, i] = w[j + 1, i] + (
                    rng.normal(0.0, math.sqrt(inc), size=m) if inc > 0.0 else 0.0
                )
        for j in range(M):
            xhat = np.zeros(m)
            for i in range(L):
                if coef[j][i] != 0.0:
                    xhat += coef[j][i] * w[j, i]
            se = (x - xhat) ** 2
            sum_se[j] += float(se.sum())
            sum_se2[j] += float((se * se).sum())
    mse = [s / n for s in sum_se]
    stderr = []
    for j in range(M):
        var = (sum_se2[j] - n * mse[j] ** 2) / max(n - 1, 1)
        stderr.append(math.sqrt(max(var, 0.0) / n))
    z = [
        (mse[j] - analytic[j]) / stderr[j] if stderr[j] > 0.0 else math.inf
        for j in range(M)
    ]
    return SimReport(
        empirical_mse=tuple(mse),
        analytic_d=tuple(analytic),
        stderr=tuple(stderr),
        z_scores=tuple(z),
    )


def simulate_distortion(instance: CeoInstance, r, config: SimConfig) -> SimReport:
    """Single-stage simulation of the allocation r against its predicted MMSE."""
    r = _check_allocation(instance, r)
    return _simulate(instance, [r], config)


def simulate_refinement(instance: CeoInstance, r_chain, config: SimConfig) -> SimReport:
    """Multistage simulation of a nondecreasing allocation chain.

    Stage j's estimate uses only stage j's (degraded) descriptions; each
    stage is scored against its own predicted distortion.
    """
    chain = [_check_allocation(instance, r) for r in r_chain]
    if not chain:
        raise ArgumentError("need at least one stage")
    for j in range(1, len(chain)):
        if any(a > b + 1e-12 for a, b in zip(chain[j - 1], chain[j])):
            raise ArgumentError(f"allocation chain decreases at stage {j + 1}")
    return _simulate(instance, chain, config)
