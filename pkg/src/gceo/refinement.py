"""Multistage refinement feasibility for growing rate tuples.

A nondecreasing chain of rate tuples R_1 <= ... <= R_M admits an M-stage
scheme in which every stage j attains its own minimal distortion D*(R_j)
if and only if, for every stage j and every nonempty subset A of encoders,

    sum_{i in A} (R_{i,j} - R_{i,j-1})
        >= (1/2) ln(1/D*(R_j))
           - (1/2) ln( 1/sigma_x2
                       + sum_{i in A}    (1 - exp(-2 r*_i(R_{j-1}))) / sigma_n2[i]
                       + sum_{i not in A}(1 - exp(-2 r*_i(R_j)))     / sigma_n2[i] )
           + sum_{i in A} (r*_i(R_j) - r*_i(R_{j-1})),

with stage 0 the all-zero tuple.  The full-set inequality always holds with
equality (the stage sum rates are forced), and the test decomposes exactly
into its adjacent two-stage instances.

The same test has a geometric form: the stage increment must lie on the
dominant face of the conditional rate region whose descriptions are the
test channels of r*(R_j) given the coarser channels of r*(R_{j-1}).
``dominant_face_form`` evaluates that membership through the Gaussian
covariance engine, as an independent cross-check of the inequality form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ArgumentError
from .model import CeoInstance, exp_neg2r, channel_noise_from_r
from .polymatroid import iter_nonempty_subsets, mask_to_indices
from .inversion import OmegaTag, classify_omega, r_star
from .scheduler import Description, gaussian_mi

FEASIBILITY_TOL = 1e-6


@dataclass(frozen=True)
class StageSlack:
    stage: int
    subset: tuple[int, ...]
    slack: float


@dataclass(frozen=True)
class RefinementReport:
    feasible: bool
    per_stage: tuple[tuple[StageSlack, ...], ...]
    worst: StageSlack
    r_chain: tuple[tuple[float, ...], ...]
    d_chain: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "worst": {
                "stage": self.worst.stage,
                "subset": [i + 1 for i in self.worst.subset],
                "slack": self.worst.slack,
            },
            "r_chain": [list(r) for r in self.r_chain],
            "d_chain": list(self.d_chain),
            "per_stage": [
                [
                    {"subset": [i + 1 for i in s.subset], "slack": s.slack}
                    for s in stage
                ]
                for stage in self.per_stage
            ],
        }


def _validate_stages(instance: CeoInstance, stages) -> list[tuple[float, ...]]:
    out = []
    for j, stage in enumerate(stages):
        stage = tuple(float(v) for v in stage)
        if len(stage) != instance.L:
            raise ArgumentError(f"stage {j + 1} has length {len(stage)}, expected {instance.L}")
        if any(v < 0.0 or math.isnan(v) for v in stage):
            raise ArgumentError(f"stage {j + 1} has negative or NaN rates")
        if out and any(a > b + 1e-12 for a, b in zip(out[-1], stage)):
            raise ArgumentError(f"stage {j + 1} decreases some rate relative to stage {j}")
        out.append(stage)
    if not out:
        raise ArgumentError("need at least one stage")
    return out


def stage_slacks(instance: CeoInstance, R_prev, R_next, r_prev, r_next, d_next) -> list:
    """Per-subset slack of the stage inequality, for one adjacent stage pair."""
    L = instance.L
    w_prev = [(1.0 - exp_neg2r(v)) / instance.sigma_n2[i] for i, v in enumerate(r_prev)]
    w_next = [(1.0 - exp_neg2r(v)) / instance.sigma_n2[i] for i, v in enumerate(r_next)]
    slacks = []
    for mask in iter_nonempty_subsets(L):
        idx = mask_to_indices(mask)
        mixed = 1.0 / instance.sigma_x2
        lhs = 0.0
        bonus = 0.0
        for i in range(L):
            if mask >> i & 1:
                mixed += w_prev[i]
                lhs += R_next[i] - R_prev[i]
                bonus += r_next[i] - r_prev[i]
            else:
                mixed += w_next[i]
        rhs = 0.5 * math.log(1.0 / d_next) - 0.5 * math.log(mixed) + bonus
        slacks.append((idx, lhs - rhs))
    return slacks


def check_refinement(instance: CeoInstance, stages, tol: float = FEASIBILITY_TOL) -> RefinementReport:
    """Exact feasibility test of a multistage refinement chain.

    Evaluates the stage inequality for every stage and every nonempty
    subset; feasible iff every slack is >= -tol (boundary cases count as
    feasible).
    """
    stages = _validate_stages(instance, stages)
    L = instance.L
    zero = (0.0,) * L
    chain = [zero] + stages
    inversions = [r_star(instance, R) for R in chain]
    per_stage = []
    worst = StageSlack(stage=0, subset=(), slack=math.inf)
    for j in range(1, len(chain)):
        slacks = stage_slacks(
            instance,
            chain[j - 1],
            chain[j],
            inversions[j - 1].r_star,
            inversions[j].r_star,
            inversions[j].d_star,
        )
        stage_list = tuple(StageSlack(stage=j, subset=idx, slack=s) for idx, s in slacks)
        per_stage.append(stage_list)
        for entry in stage_list:
            if entry.slack < worst.slack:
                worst = entry
    feasible = worst.slack >= -tol
    return RefinementReport(
        feasible=feasible,
        per_stage=tuple(per_stage),
        worst=worst,
        r_chain=tuple(inv.r_star for inv in inversions),
        d_chain=tuple(inv.d_star for inv in inversions),
    )


def pairwise_equivalence(instance: CeoInstance, stages, tol: float = FEASIBILITY_TOL) -> bool:
    """Whether the full-chain verdict equals the AND of adjacent-pair verdicts.

    This must always hold (the stage test only couples adjacent stages); it
    is exposed as a runnable consistency check rather than assumed.
    """
    stages = _validate_stages(instance, stages)
    full = check_refinement(instance, stages, tol).feasible
    pairs = True
    prev = None
    for stage in stages:
        pair = [stage] if prev is None else [prev, stage]
        pairs = pairs and check_refinement(instance, pair, tol).feasible
        prev = stage
    return full == pairs


def dominant_face_form(instance: CeoInstance, R_prev, R_next, tol: float = FEASIBILITY_TOL) -> bool:
    """Stage feasibility via conditional-region membership of the increment.

    Builds the fine descriptions of r*(R_next) and the nested coarse
    descriptions of r*(R_prev), computes every conditional subset rank with
    the covariance engine, and checks that the rate increment sits on the
    dominant face.  A chain whose allocation is not nested (some r*
    coordinate decreasing) admits no such construction and returns False.
    """
    stages = _validate_stages(instance, [R_prev, R_next])
    R_prev, R_next = stages
    L = instance.L
    r_prev = r_star(instance, R_prev).r_star
    r_next = r_star(instance, R_next).r_star
    if any(b < a - 1e-9 for a, b in zip(r_prev, r_next)):
        return False
    fine = [
        Description(i, channel_noise_from_r(instance, i, r_next[i]), stage=2)
        for i in range(L)
    ]
    coarse = [
        Description(i, channel_noise_from_r(instance, i, min(r_prev[i], r_next[i])), stage=1)
        for i in range(L)
    ]

    def conditional_rank(mask: int) -> float:
        idx = mask_to_indices(mask)
        conditioning = [fine[i] for i in range(L) if not mask >> i & 1] + list(coarse)
        total = 0.0
        for pos, i in enumerate(idx):
            total += gaussian_mi(instance, fine[i], conditioning + [fine[k] for k in idx[:pos]])
        return total

    full = (1 << L) - 1
    increment = [b - a for a, b in zip(R_prev, R_next)]
    if abs(sum(increment) - conditional_rank(full)) > max(tol, 1e-7):
        return False
    for mask in iter_nonempty_subsets(L):
        lhs = sum(increment[i] for i in mask_to_indices(mask))
        if lhs < conditional_rank(mask) - tol:
            return False
    return True


@dataclass(frozen=True)
class GridNode:
    R: tuple[float, float]
    region: OmegaTag
    d_star: float
    r_star: tuple[float, float]
    reachable: bool


def reachable_set_l2(instance: CeoInstance, R_from, grid, tol: float = FEASIBILITY_TOL):
    """Reachability map over a rectangular rate grid (two encoders).

    ``grid`` is (min, max, step) applied to both axes.  Each node R is
    classified, inverted, and tested for two-stage refinement feasibility
    from ``R_from``; nodes that do not dominate ``R_from`` are unreachable
    by definition (stage rates never decrease).  Nodes are emitted in
    row-major order (R1 outer, R2 inner).
    """
    if instance.L != 2:
        raise ArgumentError("grids are defined for two encoders")
    lo, hi, step = (float(v) for v in grid)
    if not (step > 0.0 and hi >= lo):
        raise ArgumentError(f"bad grid spec {grid}")
    R_from = tuple(float(v) for v in R_from)
    n = int(round((hi - lo) / step)) + 1
    nodes = []
    for a in range(n):
        R1 = lo + a * step
        for b in range(n):
            R2 = lo + b * step
            inv = r_star(instance, (R1, R2))
            tag = classify_omega(instance, (R1, R2))
            if R1 >= R_from[0] - 1e-12 and R2 >= R_from[1] - 1e-12:
                target = (max(R1, R_from[0]), max(R2, R_from[1]))
                reach = check_refinement(instance, [R_from, target], tol).feasible
            else:
                reach = False
            nodes.append(
                GridNode(
                    R=(R1, R2),
                    region=tag,
                    d_star=inv.d_star,
                    r_star=(inv.r_star[0], inv.r_star[1]),
                    reachable=reach,
                )
            )
    return nodes
