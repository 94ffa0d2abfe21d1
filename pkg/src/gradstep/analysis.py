"""Spectral constants, reference steps, convergence-neighborhood radii, and
checks of the contraction guarantees against recorded trajectories.

Eigen-decompositions are done with a self-contained cyclic Jacobi sweep on the
smaller Gram matrix (A^T A when d <= N, A A^T otherwise, mapping eigenvectors
back through A^T u / sqrt(lambda)), with power iteration available as an
independent cross-check.
"""

import math
import sys
from dataclasses import dataclass

import numpy as np

from .ioutil import atomic_write_text, format_float
from .problems import (
    KIND_LEAST_SQUARES,
    batch_stats,
    optimum_info_exact,
)
from .rng import Xoshiro256
from .stepsizes import MissingOracleError, _ratio


# ---------------------------------------------------------------- eigen tools

def jacobi_eigh(M, tol=1e-14, max_sweeps=60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (values ascending, vectors as columns). Input is symmetrized
    first; convergence is declared when the off-diagonal Frobenius mass drops
    below tol relative to the total.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("square matrix required")
    A = 0.5 * (M + M.T)
    V = np.eye(n)
    if n == 1:
        return A[0].copy(), V
    total = math.sqrt(float(np.sum(A * A)))
    if total == 0.0:
        return np.zeros(n), V
    for _ in range(max_sweeps):
        off_part = A.copy()
        np.fill_diagonal(off_part, 0.0)
        off = math.sqrt(float(np.sum(off_part * off_part)))
        if off <= tol * total:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                # entries that cannot perturb the diagonal get zeroed outright;
                # rotating on them stalls (theta overflows, rotation is a no-op)
                g = 100.0 * abs(apq)
                if abs(A[p, p]) + g == abs(A[p, p]) and abs(A[q, q]) + g == abs(A[q, q]):
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise ArithmeticError("jacobi sweep did not converge")
    values = np.diag(A).copy()
    order = np.argsort(values)
    return values[order], V[:, order]


def power_iteration_top(problem, iters=300, seed=17):
    """Largest eigenvalue of A^T A by power iteration (independent of the
    Jacobi path; used as a cross-check oracle)."""
    A = problem.A
    d = problem.dimension
    v = Xoshiro256(seed).normals(d)
    v /= math.sqrt(float(v @ v))
    lam = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        norm = math.sqrt(float(w @ w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam = float(v @ (A.T @ (A @ v)))
    return lam


@dataclass
class GramSpectrum:
    """Nonzero spectrum of A^T A: values ascending, unit eigenvectors as
    matching columns, and the ambient dimension."""

    values: np.ndarray
    vectors: np.ndarray
    dim: int


def gram_spectrum(problem):
    """Nonzero eigenpairs of A^T A, computed on the smaller Gram matrix."""
    A = problem.A
    N, d = A.shape
    if d <= N:
        values, vectors = jacobi_eigh(A.T @ A)
    else:
        values, small = jacobi_eigh(problem._row_gram)
        keep = values > 0.0
        vecs = []
        for j in np.flatnonzero(keep):
            lam = values[j]
            v = A.T @ small[:, j]
            vecs.append(v / math.sqrt(lam))
        values = values[keep]
        vectors = np.stack(vecs, axis=1) if vecs else np.zeros((d, 0))
    top = float(values[-1]) if values.size else 0.0
    if top <= 0.0:
        raise ValueError("zero matrix has no usable spectrum")
    nonzero = values > top * 1e-12
    return GramSpectrum(values[nonzero], vectors[:, nonzero], d)


# ---------------------------------------------------------------- constants

@dataclass
class SpectralConstants:
    """Smoothness and strong-convexity constants of the finite-sum objective.

    L bounds each summand's curvature (max row norm squared, quartered for
    logistic because sigmoid' <= 1/4); L_f bounds the averaged objective
    (lambda_max(A^T A)/N, same quartering); mu is the smallest nonzero
    eigenvalue of A^T A / N, i.e. curvature restricted to the row space.
    """

    L: float
    L_f: float
    mu: float
    condition: float


def spectral_constants(problem):
    spectrum = gram_spectrum(problem)
    factor = 1.0 if problem.kind == KIND_LEAST_SQUARES else 0.25
    N = problem.sample_count
    L = factor * float(problem.row_norms_sq.max())
    L_f = factor * float(spectrum.values[-1]) / N
    mu = factor * float(spectrum.values[0]) / N
    return SpectralConstants(L=L, L_f=L_f, mu=mu, condition=L_f / mu)


def auto_eta(kind, constants):
    """Default eta for the eta-scaled rules: 1/L_f for plain constant steps,
    1/L for the corrected diversity rule, 1/(2L) for the plain one."""
    if kind == "constant":
        return 1.0 / constants.L_f
    if kind == "grads":
        return 1.0 / constants.L
    if kind == "grad":
        return 1.0 / (2.0 * constants.L)
    return None


# ---------------------------------------------------------------- reference step

def scag_reference_step(problem, x):
    """Full-batch adaptive step mean(resid^2)/||mean(resid_i a_i)||^2 for
    least squares; 0 on the solution set."""
    if problem.kind != KIND_LEAST_SQUARES:
        raise ValueError("reference step defined for least squares only")
    stats = batch_stats(problem, x, np.arange(problem.sample_count))
    return _ratio(2.0 * stats.mean_value, stats.grad_norm_sq)


def eigenvector_start(problem, which, scale):
    """x* + scale * (unit eigenvector of A^T A); `which` is "min", "max", or
    a 0-based index into the ascending nonzero spectrum."""
    if problem.kind != KIND_LEAST_SQUARES:
        raise ValueError("eigenvector starts defined for least squares only")
    opt = problem.optimum or optimum_info_exact(problem)
    spectrum = gram_spectrum(problem)
    count = spectrum.values.size
    if which == "min":
        idx = 0
    elif which == "max":
        idx = count - 1
    else:
        idx = int(which)
        if not 0 <= idx < count:
            raise IndexError("eigenvector index %d out of range [0, %d)" % (idx, count))
    return opt.x_star + scale * spectrum.vectors[:, idx]


def improvement_factor(traj, constants):
    """gamma_applied/(1/L_f) per recorded step; also fills the improvement
    column in place. Terminal/NaN rows are skipped."""
    records = traj.records if hasattr(traj, "records") else traj
    out = []
    for rec in records:
        if math.isnan(rec.gamma_applied):
            continue
        rec.improvement = rec.gamma_applied * constants.L_f
        out.append(rec.improvement)
    return np.asarray(out)


# ---------------------------------------------------------------- neighborhoods

@dataclass
class NeighborhoodBounds:
    """Variance-at-optimum quantities and the convergence-neighborhood radii
    they imply for the capped rules. sigma_sq_grad is None when per-sample
    argmin sets are unavailable (logistic)."""

    sigma_sq_stop: float
    sigma_sq_grad: float | None
    radius_stop: float
    radius_grad: float | None


def neighborhood_bounds(problem, constants):
    opt = problem.optimum
    if opt is None:
        raise MissingOracleError("neighborhood radii need the optimum oracle")
    sigma_stop = float(opt.f_at_opt - np.mean(opt.per_sample_infimum))
    sigma_stop = max(sigma_stop, 0.0)
    if problem.kind == KIND_LEAST_SQUARES:
        resid_opt = problem.A @ opt.x_star - problem.b
        rn = problem.row_norms_sq
        dist_sq = np.where(rn > 0.0, resid_opt * resid_opt / np.where(rn > 0.0, rn, 1.0), 0.0)
        sigma_grad = constants.L * float(dist_sq.mean())
        radius_grad = 16.0 * sigma_grad / constants.mu
    else:
        sigma_grad = None
        radius_grad = None
    return NeighborhoodBounds(
        sigma_sq_stop=sigma_stop,
        sigma_sq_grad=sigma_grad,
        radius_stop=4.0 * sigma_stop / constants.mu,
        radius_grad=radius_grad,
    )


# ---------------------------------------------------------------- report checks

@dataclass
class ReportRow:
    check: str
    step_or_seed: int
    lhs: float
    rhs: float
    passed: bool


REPORT_HEADER = "check,step_or_seed,lhs,rhs,pass"


def _per_step_rows(records, name, factor_of, tol):
    rows = []
    for prev, cur in zip(records, records[1:]):
        if math.isnan(prev.gamma_applied) or cur.iter != prev.iter + 1:
            continue
        rhs = factor_of(prev.gamma_applied) * prev.dist_sq + tol
        rows.append(ReportRow(name, prev.iter, cur.dist_sq, rhs, cur.dist_sq <= rhs))
    return rows


def contraction_report(traj, constants, rule, *, bounds=None, gamma_min=None,
                       momentum=False, f_star=None, tol=1e-10):
    """Check the contraction guarantee matching the rule kind.

    Per-step distance contraction for the oracle-corrected rules (single
    trajectory, consecutive records); decay-plus-neighborhood bounds for the
    capped rules (pass one trajectory or a list; a list is averaged over
    seeds); the momentum flag switches to the objective-gap bound checked at
    every recorded iteration, which needs f_star.
    """
    trajs = list(traj) if isinstance(traj, (list, tuple)) else [traj]
    kind = rule.kind
    mu, L = constants.mu, constants.L

    if momentum:
        if f_star is None:
            raise ValueError("momentum bound needs f_star")
        gmin = 1.0 if gamma_min is None else gamma_min
        rows = []
        for t in trajs:
            d1 = t.records[0].dist_sq
            seen = set()
            for rec in t.records[1:]:
                if rec.iter < 1 or rec.iter in seen:
                    continue
                seen.add(rec.iter)
                rhs = L * d1 / (2.0 * gmin * rec.iter) + tol
                lhs = rec.f_full - f_star
                rows.append(ReportRow("momentum_gap_bound", rec.iter, lhs, rhs, lhs <= rhs))
        return rows

    if kind == "stops":
        return _per_step_rows(trajs[0].records, "corrected_step_contraction",
                              lambda g: 1.0 - mu * g, tol)
    if kind == "grads":
        return _per_step_rows(trajs[0].records, "corrected_scaling_contraction",
                              lambda g: 1.0 - g * mu / L, tol)
    if kind in ("stop", "sps", "sps_max", "alig"):
        if bounds is None:
            raise ValueError("neighborhood check needs bounds")
        gmin = (1.0 / L) if gamma_min is None else gamma_min
        name = "capped_step_neighborhood"
        radius = bounds.radius_stop
        decay = 1.0 - mu * gmin
    elif kind == "grad":
        if bounds is None:
            raise ValueError("neighborhood check needs bounds")
        if bounds.radius_grad is None:
            raise ValueError("neighborhood radius unavailable for this problem")
        gmin = 1.0 if gamma_min is None else gamma_min
        name = "capped_scaling_neighborhood"
        radius = bounds.radius_grad
        decay = 1.0 - mu * gmin / (2.0 * L)
    else:
        return []

    d0 = float(np.mean([t.records[0].dist_sq for t in trajs]))
    K = min(t.records[-1].iter for t in trajs)
    finals = [t.records[-1].dist_sq for t in trajs]
    lhs = float(np.mean(finals))
    rhs = (decay ** K) * d0 + radius + tol
    return [ReportRow(name, len(trajs), lhs, rhs, lhs <= rhs)]


def rate_fit(traj):
    """Empirical per-iteration contraction factor of dist_sq: exp of the
    least-squares slope of log dist_sq over the longest finite positive
    prefix of the records."""
    records = traj.records if hasattr(traj, "records") else traj
    xs, ys = [], []
    for rec in records:
        d = rec.dist_sq
        if not (d > 0.0) or math.isinf(d):
            break
        xs.append(rec.iter)
        ys.append(math.log(d))
    if len(xs) < 10:
        raise ValueError("need at least 10 positive dist_sq records to fit")
    slope = np.polyfit(np.asarray(xs, dtype=np.float64), np.asarray(ys), 1)[0]
    return float(math.exp(slope))


# ---------------------------------------------------------------- report output

def write_report_csv(rows, path):
    lines = [REPORT_HEADER]
    for r in rows:
        lines.append(",".join([
            r.check, str(r.step_or_seed), format_float(r.lhs), format_float(r.rhs),
            "1" if r.passed else "0",
        ]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def print_report_summary(rows, stream=None):
    """One line per check name: count, pass/fail, worst margin (lhs - rhs,
    positive means violation). Returns True when every row passed."""
    stream = stream or sys.stdout
    names = []
    for r in rows:
        if r.check not in names:
            names.append(r.check)
    all_ok = True
    for name in names:
        group = [r for r in rows if r.check == name]
        fails = sum(1 for r in group if not r.passed)
        worst = max(r.lhs - r.rhs for r in group)
        ok = fails == 0
        all_ok = all_ok and ok
        stream.write("%s: %d checks, %s, worst margin %.3e\n"
                     % (name, len(group), "all pass" if ok else "%d FAIL" % fails, worst))
    if not rows:
        stream.write("no checks run\n")
    return all_ok
