"""Successive Wyner-Ziv schedules and the Gaussian conditional-MI engine.

A schedule realizes a dominant-face rate tuple as an ordered pipeline of
single-description Wyner-Ziv steps: each step conveys one description of
one encoder, the decoder uses everything decoded so far as side
information, and a step's rate is the conditional mutual information
I(Y_i; W | decoded so far).  Splitting one encoder's description into a
coarse stage (its test channel plus extra independent noise, so
coarse -> fine -> Y_i is Markov) and a fine stage is enough to reach any
point of the dominant face with at most 2L - 1 steps, and at most
L + d steps when the point lies on a d-dimensional face.

The construction is recursive peeling over the active encoder set A with
accumulated side information Z, writing A-j for A without encoder j:

  (a) if some encoder j already sits at its fully conditioned rate
      I(Y_j; W_j | W_{A-j}, Z), schedule its description last among A and
      recurse on A-j — an exact reduction (telescoping of the rank);
  (a') if some encoder j sits at its unconditioned rate I(Y_j; W_j | Z),
      schedule it first, add it to Z, and recurse on A-j — also exact,
      since conditioning on a full description shifts every remaining
      group rank by the same amount;
  (b) otherwise split a candidate j whose rate is strictly between those
      extremes: choose the coarse noise so that
      rate(coarse | Z) + rate(fine | coarse, fines of A-j, Z) = R_j,
      decode the coarse description first, the fine one last, and recurse
      on A-j with the coarse description added to Z.

Split candidates are tried in ascending encoder index, and a candidate
whose remainder turns out infeasible deeper in the recursion hands over
to the next one.  Every produced schedule is re-validated from scratch.
All rates are computed from the joint Gaussian covariance of the involved
variables via Schur-complement conditioning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DegeneracyError, InternalInconsistencyError
from .model import (
    CeoInstance,
    _check_allocation,
    channel_noise_from_r,
    distortion,
    r_from_channel_noise,
)
from . import polymatroid

RATE_TOL = 1e-9
_LOG_VAR_HI = 60.0


@dataclass(frozen=True)
class Description:
    """One description of one encoder's observation.

    ``sigma_t2_total`` is the total test-channel noise added to Y_encoder;
    a coarse stage (1) has strictly more noise than the fine stage (2) of
    the same encoder, and the two are nested (coarse = fine + extra noise).
    """

    encoder: int
    sigma_t2_total: float
    stage: int = 2

    def to_dict(self) -> dict:
        return {
            "encoder": self.encoder + 1,
            "stage": self.stage,
            "sigma_t2": self.sigma_t2_total,
        }


@dataclass(frozen=True)
class WzStep:
    description: Description
    rate: float
    side_info: tuple[Description, ...] = ()

    def to_dict(self) -> dict:
        d = self.description.to_dict()
        d["rate"] = self.rate
        d["side_info"] = [[s.encoder + 1, s.stage] for s in self.side_info]
        return d


@dataclass(frozen=True)
class Schedule:
    """Wyner-Ziv steps in decode order."""

    steps: tuple[WzStep, ...]

    @property
    def total_steps(self) -> int:
        return len(self.steps)

    def per_encoder_rate(self, L: int) -> tuple[float, ...]:
        sums = [0.0] * L
        for step in self.steps:
            sums[step.description.encoder] += step.rate
        return tuple(sums)

    def to_list(self) -> list[dict]:
        return [s.to_dict() for s in self.steps]


def _covariance(instance: CeoInstance, variables) -> np.ndarray:
    """Joint covariance of a list of variables.

    A variable is either ("Y", encoder) for a raw observation or a
    Description.  Same-encoder descriptions are nested, so their noise
    covariance is the smaller total noise.
    """
    n = len(variables)
    cov = np.empty((n, n))
    sx2 = instance.sigma_x2
    for a in range(n):
        for b in range(a, n):
            va, vb = variables[a], variables[b]
            value = sx2
            ea = va[1] if isinstance(va, tuple) else va.encoder
            eb = vb[1] if isinstance(vb, tuple) else vb.encoder
            if ea == eb:
                value += instance.sigma_n2[ea]
                ta = 0.0 if isinstance(va, tuple) else va.sigma_t2_total
                tb = 0.0 if isinstance(vb, tuple) else vb.sigma_t2_total
                value += min(ta, tb)
            cov[a, b] = cov[b, a] = value
    return cov


def gaussian_mi(
    instance: CeoInstance,
    target: Description,
    decoded=(),
    given_source: bool = False,
) -> float:
    """I(Y_target.encoder ; target | decoded descriptions [, X]).

    Vacuous side information (infinite noise) is dropped.  With
    ``given_source`` the conditioning additionally includes the source X,
    which reduces the answer to the description-rate map of the target's
    encoder (useful as a consistency hook).
    """
    if target.sigma_t2_total == math.inf:
        return 0.0
    # Same-encoder descriptions are nested, so (numerically) equal total
    # noise means the same random variable: drop duplicates, and a side
    # description at least as fine as the target pins it completely.  The
    # relative tolerance absorbs last-ulp differences between allocations
    # recovered through different solvers.
    rel = 1e-10
    cond: list = []
    kept: dict[int, list[float]] = {}
    for d in decoded:
        if d.sigma_t2_total == math.inf:
            continue
        vs = kept.setdefault(d.encoder, [])
        if any(abs(d.sigma_t2_total - v) <= rel * max(v, d.sigma_t2_total) for v in vs):
            continue
        vs.append(d.sigma_t2_total)
        cond.append(d)
    for d in cond:
        if d.encoder == target.encoder and (
            d.sigma_t2_total <= target.sigma_t2_total * (1.0 + rel)
        ):
            return 0.0
    variables = [("Y", target.encoder), target] + cond
    cov = _covariance(instance, variables)
    if given_source:
        # Condition on X first: subtract the rank-one source component.
        cov = cov - instance.sigma_x2
    if cond:
        k = 2
        s_ab = cov[:k, :k]
        s_ac = cov[:k, k:]
        s_cc = cov[k:, k:]
        try:
            solved = np.linalg.solve(s_cc, s_ac.T)
        except np.linalg.LinAlgError as exc:
            raise DegeneracyError(f"singular side-information covariance: {exc}") from exc
        cond_cov = s_ab - s_ac @ solved
    else:
        cond_cov = cov[:2, :2]
    v_y = cond_cov[0, 0]
    v_w = cond_cov[1, 1]
    det = v_y * v_w - cond_cov[0, 1] * cond_cov[1, 0]
    if det <= 0.0 or v_y <= 0.0 or v_w <= 0.0:
        raise DegeneracyError("conditional covariance is not positive definite")
    return 0.5 * math.log(v_y * v_w / det)


def fine_description(instance: CeoInstance, r, i: int) -> Description:
    return Description(encoder=i, sigma_t2_total=channel_noise_from_r(instance, i, r[i]), stage=2)


@dataclass
class _Builder:
    instance: CeoInstance
    r: tuple[float, ...]
    tol: float
    fines: dict[int, Description] = field(default_factory=dict)

    def _mi(self, target, decoded):
        return gaussian_mi(self.instance, target, decoded)

    def peel(self, active: list[int], z: list[Description], rates: dict[int, float]) -> list[WzStep]:
        """Schedule the active encoders given already-decoded side info z."""
        if not active:
            return []
        others = {j: [self.fines[k] for k in active if k != j] for j in active}
        conditioned = {j: self._mi(self.fines[j], others[j] + z) for j in active}

        # (a) some encoder already at its fully conditioned rate: decode last.
        for j in active:
            if abs(rates[j] - conditioned[j]) <= self.tol:
                rest = self.peel([k for k in active if k != j], z, rates)
                decoded = tuple(z) + tuple(s.description for s in rest)
                return rest + [WzStep(self.fines[j], conditioned[j], decoded)]

        # (a') someone already at its unconditioned rate: decode first.
        for j in active:
            top = self._mi(self.fines[j], z)
            if abs(rates[j] - top) <= self.tol:
                rest = self.peel([k for k in active if k != j], z + [self.fines[j]], rates)
                return [WzStep(self.fines[j], top, tuple(z))] + rest

        # (b) split a candidate whose rate is strictly inside its range; a
        # failing candidate (bad bracket or an infeasible remainder) just
        # hands over to the next one.
        failures = []
        for j in active:
            top = self._mi(self.fines[j], z)
            if not conditioned[j] + self.tol < rates[j] < top - self.tol:
                continue
            try:
                coarse, coarse_rate = self._split(j, others[j], z, rates[j])
                rest = self.peel([k for k in active if k != j], z + [coarse], rates)
            except InternalInconsistencyError as exc:
                failures.append(f"encoder {j}: {exc}")
                continue
            decoded = tuple(z) + (coarse,) + tuple(s.description for s in rest)
            fine_rate = self._mi(self.fines[j], list(decoded))
            steps = (
                [WzStep(coarse, coarse_rate, tuple(z))]
                + rest
                + [WzStep(self.fines[j], fine_rate, decoded)]
            )
            if abs(fine_rate + coarse_rate - rates[j]) <= 10 * self.tol + 1e-12:
                return steps
            failures.append(f"encoder {j}: split rates drifted")
        raise InternalInconsistencyError(
            "no split candidate produced a valid schedule: " + "; ".join(failures or ["none eligible"])
        )

    def _split(self, j: int, other_fines, z, target_rate: float):
        """Coarse noise variance for encoder j so that coarse-then-fine meets target_rate.

        The objective rate(coarse(s) | z) + rate(fine | coarse(s), other fines, z)
        decreases from the unconditioned to the conditioned rate as the coarse
        noise s grows; the bracket signs are asserted and a sign violation
        aborts the candidate.
        """
        fine = self.fines[j]
        lo = math.log(fine.sigma_t2_total) + 1e-12 if fine.sigma_t2_total > 0 else -_LOG_VAR_HI
        hi = _LOG_VAR_HI

        def objective(x: float) -> float:
            coarse = Description(j, math.exp(x), stage=1)
            return (
                self._mi(coarse, z)
                + self._mi(fine, [coarse] + other_fines + z)
                - target_rate
            )

        # At the lower edge the coarse description nearly duplicates the fine
        # one and the covariance can lose rank in floating point; nudge up.
        f_lo = None
        for _ in range(8):
            try:
                f_lo = objective(lo)
                break
            except DegeneracyError:
                lo += 1e-6
        if f_lo is None:
            raise InternalInconsistencyError("coarse bracket degenerate at the fine end")
        f_hi = objective(hi)
        if not (f_lo > 0.0 > f_hi):
            raise InternalInconsistencyError(
                f"split bracket not monotone: f(lo)={f_lo:.3e}, f(hi)={f_hi:.3e}"
            )
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            f_mid = objective(mid)
            if abs(f_mid) <= 0.1 * self.tol or hi - lo < 1e-15:
                break
            if f_mid > 0.0:
                lo = mid
            else:
                hi = mid
        else:
            raise InternalInconsistencyError("coarse-variance search did not converge")
        coarse = Description(j, math.exp(mid), stage=1)
        return coarse, self._mi(coarse, list(z))


def build_schedule(instance: CeoInstance, r, R, tol: float = RATE_TOL) -> Schedule:
    """Successive Wyner-Ziv schedule realizing a dominant-face rate tuple.

    Zero-allocation encoders carry no rate on the dominant face and are
    skipped.  The result is validated before being returned.
    """
    r = _check_allocation(instance, r)
    if not polymatroid.on_dominant_face(instance, r, R, max(tol, 1e-9) * 10):
        raise ArgumentError("rate tuple is not on the dominant face of the allocation")
    active = [i for i in range(instance.L) if r[i] > 0.0]
    builder = _Builder(
        instance,
        r,
        tol,
        fines={i: fine_description(instance, r, i) for i in active},
    )
    steps = builder.peel(active, [], {i: R[i] for i in active})
    schedule = Schedule(tuple(steps))
    report = validate_schedule(instance, schedule, R, max(tol * 100, 1e-7))
    if not report.ok:
        raise InternalInconsistencyError(
            "constructed schedule failed validation: " + "; ".join(report.diagnostics)
        )
    return schedule


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    diagnostics: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def validate_schedule(instance: CeoInstance, schedule: Schedule, R, tol: float = 1e-7) -> ValidationReport:
    """Re-derive every claim a schedule makes and compare against R.

    Checks, in order: stored step rates against rates recomputed from the
    exact decoded set at each point, per-encoder rate sums, well-ordering of
    coarse before fine, the 2L - 1 step bound, and the final MMSE against
    the allocation's distortion.
    """
    L = instance.L
    diags = []
    decoded: list[Description] = []
    seen_stages: dict[int, list[int]] = {}
    for idx, step in enumerate(schedule.steps):
        recomputed = gaussian_mi(instance, step.description, decoded)
        if abs(recomputed - step.rate) > tol:
            diags.append(
                f"step {idx} (encoder {step.description.encoder}, stage {step.description.stage}): "
                f"stored rate {step.rate:.12f} != recomputed {recomputed:.12f}"
            )
        enc = step.description.encoder
        stages = seen_stages.setdefault(enc, [])
        if step.description.stage == 2 and 1 in stages:
            coarse_noise = next(
                s.description.sigma_t2_total
                for s in schedule.steps
                if s.description.encoder == enc and s.description.stage == 1
            )
            if not step.description.sigma_t2_total < coarse_noise:
                diags.append(f"encoder {enc}: fine stage is not strictly finer than coarse stage")
        if step.description.stage == 1 and 2 in stages:
            diags.append(f"encoder {enc}: coarse stage decoded after fine stage")
        if step.description.stage in stages:
            diags.append(f"encoder {enc}: stage {step.description.stage} scheduled twice")
        stages.append(step.description.stage)
        decoded.append(step.description)

    sums = schedule.per_encoder_rate(L)
    for i in range(L):
        if abs(sums[i] - R[i]) > tol:
            diags.append(f"encoder {i}: rate sum {sums[i]:.12f} != target {R[i]:.12f}")
    if schedule.total_steps > 2 * L - 1:
        diags.append(f"{schedule.total_steps} steps exceeds bound {2 * L - 1}")

    finest: dict[int, Description] = {}
    for step in schedule.steps:
        d = step.description
        if d.encoder not in finest or d.sigma_t2_total < finest[d.encoder].sigma_t2_total:
            finest[d.encoder] = d
    r_recovered = [0.0] * L
    for enc, d in finest.items():
        r_recovered[enc] = r_from_channel_noise(instance, enc, d.sigma_t2_total)
    mmse_cov = source_mmse(instance, list(finest.values()))
    mmse_formula = distortion(instance, r_recovered)
    if abs(mmse_cov - mmse_formula) > tol:
        diags.append(
            f"final MMSE {mmse_cov:.12f} != allocation distortion {mmse_formula:.12f}"
        )
    return ValidationReport(ok=not diags, diagnostics=tuple(diags))


def source_mmse(instance: CeoInstance, descriptions) -> float:
    """Var(X | descriptions) by direct covariance conditioning."""
    descs = [d for d in descriptions if d.sigma_t2_total != math.inf]
    if not descs:
        return instance.sigma_x2
    cov = _covariance(instance, descs)
    cross = np.full(len(descs), instance.sigma_x2)
    try:
        solved = np.linalg.solve(cov, cross)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError(f"singular description covariance: {exc}") from exc
    return instance.sigma_x2 - float(cross @ solved)


def schedule_for_face(instance: CeoInstance, r, R, tol: float = RATE_TOL) -> Schedule:
    """Schedule built block-by-block along the face containing R.

    The face's blocks are decoded in order, each block's rates forming a
    dominant-face point of the region conditioned on all earlier blocks;
    the step count is then at most L plus the face dimension.
    """
    r = _check_allocation(instance, r)
    face = polymatroid.identify_face(instance, r, R, max(tol, polymatroid.FACE_TOL))
    builder = _Builder(
        instance,
        r,
        tol,
        fines={i: fine_description(instance, r, i) for i in face.active},
    )
    steps: list[WzStep] = []
    z: list[Description] = []
    for block in face.blocks:
        block_steps = builder.peel(list(block), list(z), {i: R[i] for i in block})
        steps.extend(block_steps)
        z.extend(builder.fines[i] for i in block)
    schedule = Schedule(tuple(steps))
    report = validate_schedule(instance, schedule, R, max(tol * 100, 1e-7))
    if not report.ok:
        raise InternalInconsistencyError(
            "face schedule failed validation: " + "; ".join(report.diagnostics)
        )
    return schedule
