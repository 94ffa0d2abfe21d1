"""Stochastic gradient loop with adaptive step scalings, momentum, caps, and
full trajectory recording.

Update shape: sample a minibatch, compute its statistics, ask the rule for a
scaling gamma, then move

    x_{k+1} = x_k - gamma * direction              (gamma-valued rules)
    x_{k+1} = x_k - eta * (gamma * direction)      (eta-scaled rules)

where the direction is the corrected mean gradient mean(g_i - s_i) for the
oracle-corrected rules (stops, grads) and the plain mean gradient otherwise.
The eta-scaled rules are constant (gamma fixed at 1), grads, and grad.

Momentum replaces the displacement with a buffer:

    m_k = (1 - beta_k) * gamma_k * gbar_k + beta_k * m_{k-1}
    x_{k+1} = x_k - eta_k * m_k

which reduces bitwise to the plain update when beta_k == 0.

Determinism: one generator seeded from the run seed drives batch sampling;
full-batch mode consumes no random draws, so equal seeds give byte-identical
trajectory files.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .ioutil import atomic_write_text, format_float
from .problems import batch_stats, distance_sq_to_solution, full_gradient, full_value
from .rng import Xoshiro256
from .stepsizes import (
    CORRECTED_DIRECTION_KINDS,
    ETA_KINDS,
    MissingOracleError,
    ORACLE_KINDS,
    StepDecision,
    adjusted_gradient_diversity,
    alig_gamma,
    grad_scaling,
    plain_gradient_diversity,
    sps_gamma,
    sps_max_gamma,
    stop_gamma,
    stops_gamma,
    update_cap,
)

STATIONARY_SQ_NORM = 1e-24

MOMENTUM_KINDS = ("none", "constant", "nesterov_like")

TRAJECTORY_HEADER = (
    "iter,f_full,dist_sq,gamma_applied,gamma_raw,gamma_max,"
    "diversity,grad_norm_sq,improvement"
)


@dataclass
class MomentumSchedule:
    """Momentum coefficient sequence.

    none: beta = 0 always. constant: the given beta. nesterov_like: beta at
    the (k+1)-th step is k/(k+2), i.e. 0, 1/3, 2/4, ... for k = 0, 1, 2, ...
    """

    kind: str = "none"
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in MOMENTUM_KINDS:
            raise ValueError("unknown momentum kind %r" % (self.kind,))
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")

    def beta_at(self, k):
        if self.kind == "none":
            return 0.0
        if self.kind == "constant":
            return self.beta
        return k / (k + 2.0)

    @property
    def active(self):
        return self.kind != "none"


@dataclass
class RunConfig:
    """Everything a run needs besides the problem.

    batch_size None means deterministic full-batch mode (no random draws);
    an explicit batch_size, N included, samples uniformly with replacement.
    eta_schedule: a float used every step, or a sequence indexed by step;
    None falls back to rule.eta. x0 None starts at the origin.
    """

    rule: object
    iterations: int
    seed: int = 0
    batch_size: int | None = None
    eta_schedule: object = None
    momentum_schedule: MomentumSchedule = field(default_factory=MomentumSchedule)
    record_every: int = 1
    x0: object = None
    f_lower: float | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def eta_at(self, k):
        sched = self.eta_schedule
        if sched is None:
            sched = self.rule.eta
        if sched is None:
            return None
        if np.isscalar(sched):
            return float(sched)
        return float(sched[k])


@dataclass
class IterationRecord:
    iter: int
    f_full: float
    dist_sq: float
    gamma_applied: float
    gamma_raw: float
    gamma_max: float
    diversity: float
    grad_norm_sq: float
    improvement: float = math.nan


@dataclass
class Trajectory:
    records: list
    final_x: np.ndarray
    halted_reason: str  # budget | stationary | error


@dataclass
class CapState:
    """Mutable holder for the current step-size cap gamma_max."""

    cap: float

    def advance(self, rule, applied_gamma):
        # update_cap requires a positive previous step; a zero step carries
        # the cap forward unchanged so the schedule cannot collapse to zero
        if rule.cap_mode != "none" and applied_gamma > 0.0:
            self.cap = update_cap(rule, applied_gamma, self.cap)


def sample_batch(rng, total, n, full_batch=False):
    """Minibatch index draw: uniform with replacement, or 0..N-1 exactly in
    full-batch mode (which consumes no generator state)."""
    if full_batch:
        if n is not None and n != total:
            raise ValueError("full_batch requires n == N")
        return np.arange(total, dtype=np.intp)
    if n < 1:
        raise ValueError("batch size must be >= 1")
    return np.asarray(rng.integers_below(total, n), dtype=np.intp)


def require_rule_support(problem, rule):
    """Raise MissingOracleError before a run starts if the rule needs optimum
    statistics the problem cannot provide."""
    if rule.kind in ORACLE_KINDS and problem.optimum is None:
        raise MissingOracleError(
            "rule %r needs the optimum oracle (x*, per-sample gradients and "
            "values there); this problem carries none" % (rule.kind,)
        )


def _decide(stats, rule, cap, f_lower):
    """Dispatch one rule evaluation to a StepDecision."""
    kind = rule.kind
    if kind == "constant":
        return StepDecision(1.0, 1.0, False, "plain_mean_grad")
    if kind == "stops":
        raw = stops_gamma(stats)
        gamma = min(raw, cap)
        return StepDecision(gamma, raw, gamma < raw, "corrected_mean_grad")
    if kind == "sps":
        raw = sps_gamma(stats)
        gamma = min(raw, cap)
        return StepDecision(gamma, raw, gamma < raw, "plain_mean_grad")
    if kind == "grads":
        raw = adjusted_gradient_diversity(stats, rule.delta)
        gamma = min(raw, cap)
        return StepDecision(gamma, raw, gamma < raw, "corrected_mean_grad")
    if kind == "stop":
        return stop_gamma(stats, f_lower=f_lower, cap=cap, delta=rule.delta)
    if kind == "grad":
        return grad_scaling(stats, cap=cap, delta=rule.delta)
    if kind == "sps_max":
        raw = sps_max_gamma(stats, rule.c, math.inf, f_lower=f_lower)
        gamma = min(raw, cap)
        return StepDecision(gamma, raw, gamma < raw, "plain_mean_grad")
    if kind == "alig":
        raw = alig_gamma(stats, math.inf, delta=rule.delta, f_lower=f_lower)
        gamma = min(raw, cap)
        return StepDecision(gamma, raw, gamma < raw, "plain_mean_grad")
    raise ValueError("unknown rule kind %r" % (kind,))


def _direction(stats, decision):
    if decision.direction_kind == "corrected_mean_grad":
        return stats.corrected_mean_grad
    return stats.mean_grad


def _diagnostic_diversity(stats, rule):
    """Best-effort diversity for the trajectory row; NaN when undefined."""
    try:
        if rule.kind in CORRECTED_DIRECTION_KINDS and stats.corrected_mean_grad is not None:
            return adjusted_gradient_diversity(stats, rule.delta)
        return plain_gradient_diversity(stats, rule.delta)
    except ArithmeticError:
        return math.nan


def _state_fields(problem, x):
    return full_value(problem, x), distance_sq_to_solution(problem, x)


def _apply(x, eta, decision, direction):
    v = decision.gamma * direction
    if eta is None:
        return x - v
    return x - eta * v


def _record(problem, x, k, stats, decision, cap, rule):
    f_full, dist_sq = _state_fields(problem, x)
    return IterationRecord(
        iter=k,
        f_full=f_full,
        dist_sq=dist_sq,
        gamma_applied=decision.gamma,
        gamma_raw=decision.raw_gamma,
        gamma_max=cap,
        diversity=_diagnostic_diversity(stats, rule),
        grad_norm_sq=stats.grad_norm_sq,
        improvement=math.nan,
    )


def gsgm_step(x, problem, rule, cap_state, rng, *, n=None, eta=None, f_lower=None, k=0):
    """One update of the general loop. n None means full batch; eta is needed
    only by the eta-scaled rules. Returns the next iterate and the record for
    the state at x (pre-step) plus the step quantities."""
    idx = sample_batch(rng, problem.sample_count, n, full_batch=n is None)
    stats = batch_stats(problem, x, idx)
    cap = cap_state.cap
    decision = _decide(stats, rule, cap, f_lower)
    if rule.kind in ETA_KINDS:
        if eta is None:
            raise ValueError("rule %r needs eta" % (rule.kind,))
        x_next = _apply(x, eta, decision, _direction(stats, decision))
    else:
        x_next = _apply(x, None, decision, _direction(stats, decision))
    rec = _record(problem, x, k, stats, decision, cap, rule)
    cap_state.advance(rule, decision.gamma)
    return x_next, rec


@dataclass
class MomentumState:
    m: np.ndarray
    k: int = 0


def momentum_step(x, state, problem, rule, config, rng, *, cap_state=None):
    """One momentum update (grad or constant rules).

    The buffer update (1 - beta)*gamma*gbar + beta*m is arranged so beta == 0
    reproduces gsgm_step bitwise: the beta term is skipped entirely, leaving
    exactly gamma * gbar.
    """
    if rule.kind not in ("grad", "constant"):
        raise ValueError("momentum supports the grad and constant rules, not %r" % (rule.kind,))
    if cap_state is None:
        cap_state = CapState(rule.initial_cap())
    eta = config.eta_at(state.k)
    if eta is None:
        raise ValueError("momentum needs eta")
    idx = sample_batch(rng, problem.sample_count, config.batch_size,
                       full_batch=config.batch_size is None)
    stats = batch_stats(problem, x, idx)
    cap = cap_state.cap
    decision = _decide(stats, rule, cap, config.f_lower)
    beta = config.momentum_schedule.beta_at(state.k)
    scaled = ((1.0 - beta) * decision.gamma) * stats.mean_grad
    if beta == 0.0:
        m_next = scaled
    else:
        m_next = scaled + beta * state.m
    x_next = x - eta * m_next
    rec = _record(problem, x, state.k, stats, decision, cap, rule)
    cap_state.advance(rule, decision.gamma)
    return x_next, MomentumState(m_next, state.k + 1), rec


def initial_point(problem, x0):
    if x0 is None:
        return np.zeros(problem.dimension)
    x = np.ascontiguousarray(np.asarray(x0, dtype=np.float64))
    if x.shape != (problem.dimension,):
        raise ValueError("x0 must be a length-%d vector" % problem.dimension)
    return x


def run(problem, config):
    """Execute the loop for config.iterations steps, recording every
    record_every-th iteration plus a final state-only row.

    Halts early when the full gradient is numerically stationary
    (||gbar_full||^2 <= 1e-24) or when a step fails (undefined step,
    diverging scaling, non-finite iterate); the reason lands in
    Trajectory.halted_reason. Step errors never propagate; configuration
    errors (bad sizes, missing oracle, missing eta) do.
    """
    rule = config.rule
    require_rule_support(problem, rule)
    n = config.batch_size
    if n is not None and n > problem.sample_count:
        raise ValueError("batch_size exceeds the sample count")
    if rule.cap_mode == "smoothing" and rule.smoothing_ratio is None:
        effective = problem.sample_count if n is None else n
        rule = replace(rule, smoothing_ratio=effective / problem.sample_count)
    if rule.kind in ETA_KINDS and config.eta_at(0) is None:
        raise ValueError("rule %r needs eta" % (rule.kind,))
    if config.momentum_schedule.active and rule.kind not in ("grad", "constant"):
        raise ValueError("momentum supports the grad and constant rules, not %r" % (rule.kind,))

    rng = Xoshiro256(config.seed)
    x = initial_point(problem, config.x0)
    cap_state = CapState(rule.initial_cap())
    mom = MomentumState(np.zeros(problem.dimension), 0)
    use_momentum = config.momentum_schedule.kind != "none"

    records = []
    halted = "budget"
    steps_taken = 0
    for k in range(config.iterations):
        g_full = full_gradient(problem, x)
        if float(g_full @ g_full) <= STATIONARY_SQ_NORM:
            halted = "stationary"
            break
        try:
            if use_momentum:
                x_next, mom, rec = momentum_step(
                    x, mom, problem, rule, config, rng, cap_state=cap_state
                )
            else:
                x_next, rec = gsgm_step(
                    x, problem, rule, cap_state, rng,
                    n=n, eta=config.eta_at(k), f_lower=config.f_lower, k=k,
                )
        except ArithmeticError:
            halted = "error"
            break
        if not np.all(np.isfinite(x_next)):
            halted = "error"
            break
        if k % config.record_every == 0:
            records.append(rec)
        x = x_next
        steps_taken = k + 1

    f_full, dist_sq = _state_fields(problem, x)
    g_full = full_gradient(problem, x)
    records.append(IterationRecord(
        iter=steps_taken,
        f_full=f_full,
        dist_sq=dist_sq,
        gamma_applied=math.nan,
        gamma_raw=math.nan,
        gamma_max=math.nan,
        diversity=math.nan,
        grad_norm_sq=float(g_full @ g_full),
        improvement=math.nan,
    ))
    return Trajectory(records=records, final_x=x, halted_reason=halted)


def trajectory_rows(traj):
    for r in traj.records:
        yield [r.iter, r.f_full, r.dist_sq, r.gamma_applied, r.gamma_raw,
               r.gamma_max, r.diversity, r.grad_norm_sq, r.improvement]


def write_trajectory_csv(traj, path):
    lines = [TRAJECTORY_HEADER]
    for row in trajectory_rows(traj):
        lines.append(",".join([str(row[0])] + [format_float(v) for v in row[1:]]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_trajectory_csv(path):
    """Parse a trajectory CSV back into IterationRecords (no final_x)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != TRAJECTORY_HEADER:
        raise ValueError("not a trajectory CSV: %s" % (path,))
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 9:
            raise ValueError("malformed trajectory row: %r" % (ln,))
        records.append(IterationRecord(
            iter=int(parts[0]),
            f_full=float(parts[1]),
            dist_sq=float(parts[2]),
            gamma_applied=float(parts[3]),
            gamma_raw=float(parts[4]),
            gamma_max=float(parts[5]),
            diversity=float(parts[6]),
            grad_norm_sq=float(parts[7]),
            improvement=float(parts[8]),
        ))
    return records
