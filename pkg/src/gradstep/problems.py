"""Finite-sum objectives over linear models.

Two families are supported, both parameterized by a dense N x d matrix A and a
target vector b:

* least squares:         f(x, xi_i) = 0.5 * (a_i^T x - b_i)^2
* logistic regression:   f(x, xi_i) = -[b_i*ln(h) + (1-b_i)*ln(1-h)],  h = sigmoid(a_i^T x)

A problem may carry an optimum oracle (x*, per-sample gradients s_i at x*,
per-sample lower bounds f_i*, f(x*)), which the corrected step-size rules need.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .ioutil import atomic_write_text, format_float
from .rng import Xoshiro256

KIND_LEAST_SQUARES = "least_squares"
KIND_LOGISTIC = "logistic"

_FILE_KIND = {KIND_LEAST_SQUARES: "ls", KIND_LOGISTIC: "logit"}
_KIND_FROM_FILE = {v: k for k, v in _FILE_KIND.items()}


class OptimumUnavailableError(ValueError):
    """The requested optimum oracle does not exist or cannot be computed."""


@dataclass
class OptimumInfo:
    """Everything the corrected ("theoretical") rules need at the optimum."""

    x_star: np.ndarray
    per_sample_grad_at_opt: np.ndarray  # N x d, rows s_i
    per_sample_infimum: np.ndarray      # N lower bounds f_i*
    f_at_opt: float


@dataclass(eq=False)
class FiniteSumProblem:
    """Immutable-by-convention container for one finite-sum instance."""

    kind: str
    A: np.ndarray
    b: np.ndarray
    rows_normalized: bool = False
    optimum: OptimumInfo | None = None

    def __post_init__(self):
        self.A = np.ascontiguousarray(np.asarray(self.A, dtype=np.float64))
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.A.ndim != 2 or self.b.shape != (self.A.shape[0],):
            raise ValueError("A must be N x d with b of length N")
        if self.kind not in (KIND_LEAST_SQUARES, KIND_LOGISTIC):
            raise ValueError("unknown problem kind: %r" % (self.kind,))
        if self.kind == KIND_LOGISTIC and not np.all((self.b == 0.0) | (self.b == 1.0)):
            raise ValueError("logistic labels must be exactly 0 or 1")
        if self.rows_normalized:
            norms = np.sum(self.A * self.A, axis=1)
            if np.max(np.abs(norms - 1.0)) > 1e-12:
                raise ValueError("rows_normalized set but a row norm differs from 1")

    @property
    def sample_count(self):
        return self.A.shape[0]

    @property
    def dimension(self):
        return self.A.shape[1]

    @cached_property
    def row_norms_sq(self):
        return np.sum(self.A * self.A, axis=1)

    @cached_property
    def _row_gram(self):
        # A A^T, used for distances to the affine solution set when N < d
        return self.A @ self.A.T


@dataclass
class BatchStats:
    """One-pass statistics of a sampled minibatch at a point x.

    Corrected quantities (anything involving the optimum) are None when the
    problem has no optimum oracle.
    """

    n: int
    mean_grad: np.ndarray               # gbar = (1/n) sum g_i
    mean_sq_grad_norm: float            # (1/n) sum ||g_i||^2
    mean_value: float                   # (1/n) sum f(x, xi_i)
    mean_f_lower: float = 0.0           # (1/n) sum f_i lower bounds
    corrected_mean_grad: np.ndarray | None = None   # (1/n) sum (g_i - s_i)
    corrected_mean_sq_grad_norm: float | None = None  # (1/n) sum ||g_i - s_i||^2
    mean_value_at_opt: float | None = None          # (1/n) sum f(x*, xi_i)
    mean_gap: float | None = None       # (1/n) sum [f(x,xi) - f(x*,xi) - <s_i, x - x*>]

    @property
    def grad_norm_sq(self):
        return float(self.mean_grad @ self.mean_grad)

    @property
    def corrected_grad_norm_sq(self):
        if self.corrected_mean_grad is None:
            return None
        return float(self.corrected_mean_grad @ self.corrected_mean_grad)

    @classmethod
    def from_gradients(cls, grads, grads_at_opt=None):
        """Build stats from raw per-sample gradient rows (value fields unset)."""
        G = np.asarray(grads, dtype=np.float64)
        n = G.shape[0]
        stats = cls(
            n=n,
            mean_grad=G.mean(axis=0),
            mean_sq_grad_norm=float(np.mean(np.sum(G * G, axis=1))),
            mean_value=float("nan"),
        )
        if grads_at_opt is not None:
            S = np.asarray(grads_at_opt, dtype=np.float64)
            C = G - S
            stats.corrected_mean_grad = C.mean(axis=0)
            stats.corrected_mean_sq_grad_norm = float(np.mean(np.sum(C * C, axis=1)))
        return stats


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_point(x, dimension):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dimension,):
        raise ValueError("x has wrong dimension")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    return x


def per_sample_value(problem, x, i):
    """f(x, xi_i) for one sample."""
    x = _check_point(x, problem.dimension)
    if not 0 <= i < problem.sample_count:
        raise IndexError("sample index out of range")
    z = float(problem.A[i] @ x)
    if problem.kind == KIND_LEAST_SQUARES:
        r = z - problem.b[i]
        return 0.5 * r * r
    return float(np.logaddexp(0.0, z) - problem.b[i] * z)


def per_sample_gradient(problem, x, i):
    """grad f(x, xi_i) for one sample."""
    x = _check_point(x, problem.dimension)
    if not 0 <= i < problem.sample_count:
        raise IndexError("sample index out of range")
    z = float(problem.A[i] @ x)
    if problem.kind == KIND_LEAST_SQUARES:
        return (z - problem.b[i]) * problem.A[i]
    h = float(_sigmoid(np.array([z]))[0])
    return (h - problem.b[i]) * problem.A[i]


def _batch_residuals(problem, x, A_S, b_S):
    """Per-sample 'residual' factor: g_i = resid_i * a_i for both families."""
    z = A_S @ x
    if problem.kind == KIND_LEAST_SQUARES:
        resid = z - b_S
        values = 0.5 * resid * resid
    else:
        resid = _sigmoid(z) - b_S
        values = np.logaddexp(0.0, z) - b_S * z
    return resid, values


def batch_stats(problem, x, indices):
    """One pass over a minibatch: means of values, gradients, squared norms.

    The squared-norm fields use the inner-product fast path
    <[||a_j||^2], resid^2>/n rather than materializing per-sample gradients.
    """
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("empty index list")
    x = _check_point(x, problem.dimension)
    n = idx.size
    A_S = problem.A[idx]
    b_S = problem.b[idx]
    rn_S = problem.row_norms_sq[idx]

    resid, values = _batch_residuals(problem, x, A_S, b_S)
    stats = BatchStats(
        n=int(n),
        mean_grad=A_S.T @ resid / n,
        mean_sq_grad_norm=float(rn_S @ (resid * resid) / n),
        mean_value=float(values.mean()),
    )

    opt = problem.optimum
    if opt is not None:
        stats.mean_f_lower = float(opt.per_sample_infimum[idx].mean())
        resid_opt, values_opt = _batch_residuals(problem, opt.x_star, A_S, b_S)
        cresid = resid - resid_opt
        stats.corrected_mean_grad = A_S.T @ cresid / n
        stats.corrected_mean_sq_grad_norm = float(rn_S @ (cresid * cresid) / n)
        stats.mean_value_at_opt = float(values_opt.mean())
        if problem.kind == KIND_LEAST_SQUARES:
            # exact quadratic identity: f(x) - f(x*) - <s, x - x*> = 0.5*(resid - resid*)^2
            stats.mean_gap = float(0.5 * np.mean(cresid * cresid))
        else:
            mean_s = A_S.T @ resid_opt / n
            stats.mean_gap = (
                stats.mean_value - stats.mean_value_at_opt - float(mean_s @ (x - opt.x_star))
            )
    if n == 1:
        # single sample: mean ||g||^2 and ||mean g||^2 are the same quantity;
        # route both through one expression so the equality is bitwise
        stats.mean_sq_grad_norm = stats.grad_norm_sq
        if stats.corrected_mean_grad is not None:
            stats.corrected_mean_sq_grad_norm = stats.corrected_grad_norm_sq
    return stats


def full_value(problem, x):
    """Full objective (1/N) sum_i f(x, xi_i)."""
    _, values = _batch_residuals(problem, x, problem.A, problem.b)
    return float(values.mean())


def full_gradient(problem, x):
    """Gradient of the full objective."""
    resid, _ = _batch_residuals(problem, x, problem.A, problem.b)
    return problem.A.T @ resid / problem.sample_count


def attach_optimum(problem, x_star):
    """Return a copy of `problem` carrying the oracle built at `x_star`.

    Per-sample lower bounds are 0 for both families (attained for least
    squares, a valid possibly-unattained bound for logistic).
    """
    x_star = np.asarray(x_star, dtype=np.float64)
    resid_opt, values_opt = _batch_residuals(problem, x_star, problem.A, problem.b)
    info = OptimumInfo(
        x_star=x_star,
        per_sample_grad_at_opt=resid_opt[:, None] * problem.A,
        per_sample_infimum=np.zeros(problem.sample_count),
        f_at_opt=float(values_opt.mean()),
    )
    return FiniteSumProblem(problem.kind, problem.A, problem.b, problem.rows_normalized, info)


def generate_consistent_linear_system(rows, cols, seed, normalize):
    """Random least squares with a planted solution: A ~ iid standard normal
    (row-major draw order), optional row normalization, x* ~ standard normal,
    b = A x*. Interpolating by construction: every s_i = 0 and f_i* = 0.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    gen = Xoshiro256(seed)
    A = gen.normals(rows * cols).reshape(rows, cols)
    if normalize:
        norms = np.sqrt(np.sum(A * A, axis=1))
        if np.any(norms == 0.0):
            raise ValueError("cannot normalize a zero row")
        A = A / norms[:, None]
    x_star = gen.normals(cols)
    b = A @ x_star
    info = OptimumInfo(
        x_star=x_star,
        per_sample_grad_at_opt=np.zeros((rows, cols)),
        per_sample_infimum=np.zeros(rows),
        f_at_opt=0.0,
    )
    return FiniteSumProblem(KIND_LEAST_SQUARES, A, b, bool(normalize), info)


def perturb_targets(problem, noise_scale, seed):
    """Least squares with b += noise_scale * standard normals; drops the oracle
    (the planted point is no longer the optimum)."""
    if problem.kind != KIND_LEAST_SQUARES:
        raise ValueError("target noise applies to least squares only")
    gen = Xoshiro256(seed)
    b = problem.b + noise_scale * gen.normals(problem.sample_count)
    return FiniteSumProblem(KIND_LEAST_SQUARES, problem.A, b, problem.rows_normalized, None)


def generate_logistic_problem(rows, cols, seed, normalize, flip_prob=0.0):
    """Random logistic instance: A ~ iid standard normal (row-major), optional
    row normalization, labels thresholded at a planted direction's sign, each
    label then flipped independently with probability `flip_prob` (no flip
    draws are consumed when flip_prob == 0). Carries no optimum oracle."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    gen = Xoshiro256(seed)
    A = gen.normals(rows * cols).reshape(rows, cols)
    if normalize:
        norms = np.sqrt(np.sum(A * A, axis=1))
        if np.any(norms == 0.0):
            raise ValueError("cannot normalize a zero row")
        A = A / norms[:, None]
    x_planted = gen.normals(cols)
    labels = (A @ x_planted >= 0.0).astype(np.float64)
    if flip_prob > 0.0:
        flips = gen.uniforms(rows) < flip_prob
        labels = np.where(flips, 1.0 - labels, labels)
    return FiniteSumProblem(KIND_LOGISTIC, A, labels, bool(normalize), None)


def two_quadratic_1d():
    """The 1-D two-sample instance f_1 = 0.5(x-1)^2, f_2 = 0.5(x+1)^2.

    Averaged objective 0.5 x^2 + 0.5, minimized at x* = 0 with f(x*) = 0.5;
    non-interpolating (s_1 = -1, s_2 = +1).
    """
    base = FiniteSumProblem(
        KIND_LEAST_SQUARES,
        np.array([[1.0], [1.0]]),
        np.array([1.0, -1.0]),
        rows_normalized=True,
    )
    return attach_optimum(base, np.zeros(1))


def optimum_info_exact(problem):
    """Oracle for solvable problems: the planted optimum if present, else the
    minimum-norm least-squares solution of the normal equations.

    Logistic problems without a planted optimum raise OptimumUnavailableError
    (the infimum may be unattained, e.g. separable data).
    """
    if problem.optimum is not None:
        return problem.optimum
    if problem.kind != KIND_LEAST_SQUARES:
        raise OptimumUnavailableError(
            "optimum unavailable: logistic problems need a planted optimum "
            "(the infimum may be unattained)"
        )
    x_star, *_ = np.linalg.lstsq(problem.A, problem.b, rcond=None)
    return attach_optimum(problem, x_star).optimum


def with_exact_optimum(problem):
    """Problem carrying optimum_info_exact's oracle (no-op if already present)."""
    if problem.optimum is not None:
        return problem
    info = optimum_info_exact(problem)
    return FiniteSumProblem(problem.kind, problem.A, problem.b, problem.rows_normalized, info)


def distance_sq_to_solution(problem, x):
    """Squared distance from x to the solution: the point x* when the system
    determines one (N >= d), else the affine solution set {x : Ax = b}
    (iterates stay in x0 + rowspace(A), so this is the meaningful metric for
    underdetermined consistent systems). NaN when no optimum is known."""
    if problem.optimum is None:
        return float("nan")
    x = np.asarray(x, dtype=np.float64)
    if problem.kind == KIND_LEAST_SQUARES and problem.sample_count < problem.dimension:
        r = problem.A @ x - problem.b
        try:
            return float(r @ np.linalg.solve(problem._row_gram, r))
        except np.linalg.LinAlgError:
            z, *_ = np.linalg.lstsq(problem.A, r, rcond=None)
            return float(z @ z)
    diff = x - problem.optimum.x_star
    return float(diff @ diff)


def save_problem(problem, path):
    """Line-oriented text format: `kind N d`, N rows of A, one line of b, and
    (when an optimum oracle is attached) a final `xstar` line with d reals."""
    lines = ["%s %d %d" % (_FILE_KIND[problem.kind], problem.sample_count, problem.dimension)]
    for row in problem.A:
        lines.append(" ".join(format_float(v) for v in row))
    lines.append(" ".join(format_float(v) for v in problem.b))
    if problem.optimum is not None:
        lines.append("xstar " + " ".join(format_float(v) for v in problem.optimum.x_star))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_problem(path):
    """Inverse of save_problem: parses the text format, detects normalized rows,
    and rebuilds the optimum oracle from an `xstar` line when present."""
    with open(path) as fh:
        tokens_by_line = [line.split() for line in fh if line.strip()]
    if not tokens_by_line:
        raise ValueError("empty problem file: %s" % path)
    header = tokens_by_line[0]
    if len(header) != 3 or header[0] not in _KIND_FROM_FILE:
        raise ValueError("bad header line (want `kind N d` with kind ls|logit): %r" % header)
    kind = _KIND_FROM_FILE[header[0]]
    n_rows, n_cols = int(header[1]), int(header[2])
    body = tokens_by_line[1:]
    if len(body) < n_rows + 1:
        raise ValueError("problem file truncated: expected %d rows of A plus b" % n_rows)
    A = np.array([[float(t) for t in body[i]] for i in range(n_rows)])
    if A.shape != (n_rows, n_cols):
        raise ValueError("matrix rows do not match the declared dimension")
    b = np.array([float(t) for t in body[n_rows]])
    if b.shape != (n_rows,):
        raise ValueError("target vector length does not match N")
    x_star = None
    rest = body[n_rows + 1:]
    if rest:
        flat = [t for line in rest for t in line]
        if flat[0] != "xstar" or len(flat) != 1 + n_cols:
            raise ValueError("trailing content must be `xstar` followed by %d reals" % n_cols)
        x_star = np.array([float(t) for t in flat[1:]])
    norms = np.sum(A * A, axis=1)
    normalized = bool(np.max(np.abs(norms - 1.0)) <= 1e-12)
    problem = FiniteSumProblem(kind, A, b, normalized, None)
    if x_star is not None:
        problem = attach_optimum(problem, x_star)
    return problem
