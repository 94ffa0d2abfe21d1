"""Step-size and scaling rules computed from minibatch statistics.

Kinds (the closed set used everywhere, including the CLI):

* constant: fixed step eta, plain mean-gradient direction.
* stops:    2*mean[f(x,xi) - f(x*,xi) - <s_i, x-x*>] / ||mean(g_i - s_i)||^2,
            applied along the corrected mean gradient.
* sps:      2*mean[f(x,xi) - f(x*,xi)] / ||gbar||^2, plain direction.
* grads:    adjusted gradient diversity as a scaling on top of eta, corrected direction.
* stop:     min(cap, 2*mean[f(x,xi) - f_lower] / (||gbar||^2 + delta)), plain direction.
* grad:     min(cap, plain gradient diversity) as a scaling on top of eta, plain direction.
* sps_max:  min(cap, mean[f - f_lower] / (c*||gbar||^2)), fixed cap baseline.
* alig:     min(cap, mean[f - f_lower] / (||gbar||^2 + delta)), fixed cap baseline.

Caps evolve by update_cap: theorem mode multiplies the previous applied gamma
by (1 + mu*gamma_min/2) for stop or (1 + mu*gamma_min/4) for grad; smoothing
mode multiplies it by tau**(n/N). Zero-gradient conventions: diversity 1 and
step 0 at exact stationarity, so the optimizer halts instead of dividing 0/0.
"""

import math
from dataclasses import dataclass

import numpy as np

RULE_KINDS = ("constant", "stops", "sps", "grads", "stop", "grad", "sps_max", "alig")
THEORETICAL_KINDS = frozenset({"stops", "sps", "grads"})
PRACTICAL_KINDS = frozenset({"stop", "grad", "sps_max", "alig"})
ETA_KINDS = frozenset({"constant", "grads", "grad"})        # effective step = eta * gamma
CORRECTED_DIRECTION_KINDS = frozenset({"stops", "grads"})   # direction = mean(g_i - s_i)
ORACLE_KINDS = frozenset({"stops", "sps", "grads"})         # need OptimumInfo
CAP_MODES = ("none", "theorem", "smoothing")


class DivergingScalingError(ArithmeticError):
    """Exact gradient cancellation: the mean gradient vanished while per-sample
    gradients did not, so the diversity scaling diverges."""


class UndefinedStepError(ArithmeticError):
    """Zero step-size denominator with a positive numerator."""


class MissingOracleError(ValueError):
    """A rule needed optimum-oracle statistics the problem does not carry."""


@dataclass
class StepRule:
    """One rule kind plus its parameters.

    delta defaults per kind when left None: 1e-6 for the practical rules
    (stop, grad, sps_max, alig), 0 for the rest. Theorem-mode caps need mu and
    gamma_min; smoothing-mode caps need smoothing_ratio = n/N (the run loop
    fills it from the batch size when left None).
    """

    kind: str
    eta: float | None = None
    c: float = 0.5
    delta: float | None = None
    cap_mode: str = "none"
    mu: float | None = None
    gamma_min: float | None = None
    tau: float = 2.0
    smoothing_ratio: float | None = None
    gamma_max0: float | None = None

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError("unknown rule kind %r (valid: %s)" % (self.kind, ", ".join(RULE_KINDS)))
        if self.cap_mode not in CAP_MODES:
            raise ValueError("unknown cap mode %r" % (self.cap_mode,))
        if self.delta is None:
            self.delta = 1e-6 if self.kind in PRACTICAL_KINDS else 0.0
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.kind == "sps_max" and self.c <= 0:
            raise ValueError("sps_max needs c > 0")
        if self.cap_mode != "none":
            if self.kind not in ("stop", "grad"):
                raise ValueError("cap schedules apply to the stop/grad rules only")
            if self.cap_mode == "smoothing" and self.tau <= 1.0:
                raise ValueError("smoothing mode needs tau > 1")
        if self.gamma_max0 is not None and self.gamma_max0 <= 0:
            raise ValueError("gamma_max0 must be > 0")
        if self.eta is not None and self.eta < 0:
            raise ValueError("eta must be >= 0")

    def initial_cap(self):
        """gamma_max^0: explicit value, else gamma_min (theorem), 1 (smoothing), inf."""
        if self.gamma_max0 is not None:
            return float(self.gamma_max0)
        if self.cap_mode == "theorem":
            if self.gamma_min is None:
                raise ValueError("theorem cap mode needs gamma_min for gamma_max0")
            return float(self.gamma_min)
        if self.cap_mode == "smoothing":
            return 1.0
        return math.inf


@dataclass
class StepDecision:
    gamma: float
    raw_gamma: float
    capped: bool
    direction_kind: str  # plain_mean_grad | corrected_mean_grad


def _ratio(numerator, denominator):
    """Shared zero conventions: 0/0 -> 0 (converged), pos/0 -> undefined."""
    if denominator == 0.0:
        if numerator == 0.0:
            return 0.0
        raise UndefinedStepError("zero denominator with positive numerator: step undefined")
    return numerator / denominator


def plain_gradient_diversity(stats, delta=0.0):
    """mean ||g_i||^2 over ||gbar||^2 + delta; >= 1 when delta = 0 and gbar != 0."""
    num = stats.mean_sq_grad_norm
    den = stats.grad_norm_sq + delta
    if den == 0.0:
        if num == 0.0:
            return 1.0
        raise DivergingScalingError(
            "diverging scaling: mean gradient cancelled exactly while per-sample "
            "gradients are nonzero"
        )
    return num / den


def adjusted_gradient_diversity(stats, delta=0.0):
    """Same ratio on optimum-corrected gradients g_i - s_i."""
    if stats.corrected_mean_sq_grad_norm is None:
        raise MissingOracleError(
            "adjusted gradient diversity needs corrected batch statistics; "
            "the problem carries no optimum oracle"
        )
    num = stats.corrected_mean_sq_grad_norm
    den = stats.corrected_grad_norm_sq + delta
    if den == 0.0:
        if num == 0.0:
            return 1.0
        raise DivergingScalingError(
            "diverging scaling: corrected mean gradient cancelled exactly while "
            "corrected per-sample gradients are nonzero"
        )
    return num / den


def stops_gamma(stats):
    """Corrected Polyak step 2*mean_gap / ||corrected mean gradient||^2."""
    if stats.mean_gap is None or stats.corrected_mean_grad is None:
        raise MissingOracleError(
            "stops needs f(x*,xi) and s_i per sample; the problem carries no optimum oracle"
        )
    return _ratio(2.0 * stats.mean_gap, stats.corrected_grad_norm_sq)


def sps_gamma(stats):
    """Polyak step 2*mean[f(x,xi) - f(x*,xi)] / ||gbar||^2."""
    if stats.mean_value_at_opt is None:
        raise MissingOracleError(
            "sps needs f(x*,xi) per sample; the problem carries no optimum oracle"
        )
    return _ratio(2.0 * (stats.mean_value - stats.mean_value_at_opt), stats.grad_norm_sq)


def _lower_bound_mean(stats, f_lower):
    return stats.mean_f_lower if f_lower is None else float(np.mean(f_lower))


def stop_gamma(stats, f_lower=None, cap=math.inf, delta=0.0):
    """Capped practical Polyak step using per-sample lower bounds f_lower."""
    num = 2.0 * (stats.mean_value - _lower_bound_mean(stats, f_lower))
    if num < 0.0:
        raise ValueError("per-sample lower bound exceeds the observed loss; f_lower is invalid")
    raw = _ratio(num, stats.grad_norm_sq + delta)
    capped = raw > cap
    return StepDecision(cap if capped else raw, raw, capped, "plain_mean_grad")


def grad_scaling(stats, cap=math.inf, delta=0.0):
    """Capped plain-diversity scaling (multiplies the base step eta)."""
    raw = plain_gradient_diversity(stats, delta)
    capped = raw > cap
    return StepDecision(cap if capped else raw, raw, capped, "plain_mean_grad")


def sps_max_gamma(stats, c, cap, f_lower=None):
    """Fixed-cap Polyak baseline mean[f - f_lower] / (c * ||gbar||^2)."""
    if c <= 0:
        raise ValueError("c must be > 0")
    num = stats.mean_value - _lower_bound_mean(stats, f_lower)
    if num < 0.0:
        raise ValueError("per-sample lower bound exceeds the observed loss; f_lower is invalid")
    return min(cap, _ratio(num, c * stats.grad_norm_sq))


def alig_gamma(stats, cap, delta=0.0, f_lower=None):
    """Fixed-cap baseline mean[f - f_lower] / (||gbar||^2 + delta)."""
    num = stats.mean_value - _lower_bound_mean(stats, f_lower)
    if num < 0.0:
        raise ValueError("per-sample lower bound exceeds the observed loss; f_lower is invalid")
    return min(cap, _ratio(num, stats.grad_norm_sq + delta))


def update_cap(rule, previous_gamma, previous_cap):
    """Next gamma_max from the previous applied gamma (see module docstring).

    Callers must skip the update when the applied gamma was 0 (a zero step
    leaves the iterate unchanged; collapsing the cap to 0 would freeze the run).
    """
    if rule.cap_mode == "none":
        return previous_cap
    if previous_gamma <= 0.0:
        raise ValueError("cap update needs previous applied gamma > 0")
    if rule.cap_mode == "theorem":
        if rule.mu is None or rule.gamma_min is None:
            raise ValueError("theorem cap mode needs mu and gamma_min")
        quarter = 4.0 if rule.kind == "grad" else 2.0
        return (1.0 + rule.mu * rule.gamma_min / quarter) * previous_gamma
    # smoothing
    if rule.smoothing_ratio is None:
        raise ValueError("smoothing cap mode needs smoothing_ratio = n/N")
    return (rule.tau ** rule.smoothing_ratio) * previous_gamma
