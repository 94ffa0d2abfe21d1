"""Command-line front end.

Subcommands: gen (write a problem file), run (one optimization run to a
trajectory CSV), compare (two rules on shared problems/starts, with aligned
distance columns, an improvement-factor series, and rendered figures), and
verify (check the convergence guarantees, emitting a report CSV plus figure;
exit status reflects the checks).

Exit codes: 0 success, 1 usage or configuration error, 2 verification
failure, 3 numerical error.
"""

import argparse
import math
import os
import sys

import numpy as np

from .analysis import (
    contraction_report,
    eigenvector_start,
    improvement_factor,
    neighborhood_bounds,
    print_report_summary,
    spectral_constants,
    auto_eta,
    write_report_csv,
)
from .optimizer import (
    MomentumSchedule,
    RunConfig,
    run,
    write_trajectory_csv,
)
from .problems import (
    KIND_LEAST_SQUARES,
    OptimumUnavailableError,
    generate_consistent_linear_system,
    generate_logistic_problem,
    load_problem,
    perturb_targets,
    save_problem,
    two_quadratic_1d,
)
from .stepsizes import ETA_KINDS, MissingOracleError, RULE_KINDS, StepRule


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; the contract here is 1."""

    def error(self, message):
        raise UsageError(message)


def _fmt(v):
    return "%.17g" % v


# ---------------------------------------------------------------- flag parsing

def _parse_batch(text):
    if text == "full":
        return None
    try:
        n = int(text)
    except ValueError:
        raise UsageError("--batch expects an integer or 'full'")
    if n < 1:
        raise UsageError("--batch must be >= 1")
    return n


def _parse_momentum(text):
    if text == "none":
        return MomentumSchedule("none")
    if text == "nesterov":
        return MomentumSchedule("nesterov_like")
    if text.startswith("const:"):
        try:
            beta = float(text.split(":", 1)[1])
        except ValueError:
            raise UsageError("--momentum const:BETA needs a numeric BETA")
        return MomentumSchedule("constant", beta)
    raise UsageError("--momentum expects none, const:BETA, or nesterov")


def _parse_start(problem, text, scale):
    if text == "zeros":
        return None
    if text.startswith("eig:"):
        sel = text.split(":", 1)[1]
        which = sel if sel in ("min", "max") else None
        if which is None:
            try:
                which = int(sel)
            except ValueError:
                raise UsageError("--start eig: expects min, max, or an index")
        return eigenvector_start(problem, which, scale)
    if text.startswith("file:"):
        path = text.split(":", 1)[1]
        with open(path, "r", encoding="utf-8") as fh:
            values = [float(tok) for tok in fh.read().split()]
        x = np.asarray(values, dtype=np.float64)
        if x.shape != (problem.dimension,):
            raise UsageError(
                "start file holds %d values, problem dimension is %d"
                % (x.size, problem.dimension)
            )
        return x
    raise UsageError("--start expects zeros, eig:min, eig:max, eig:K, or file:PATH")


def _resolve_eta(text, kind, problem):
    if text is None:
        return None
    if text == "auto":
        if kind not in ETA_KINDS:
            return None
        return auto_eta(kind, spectral_constants(problem))
    try:
        return float(text)
    except ValueError:
        raise UsageError("--eta expects a number or 'auto'")


def _build_rule(args, problem, kind):
    cap_mode = getattr(args, "cap", "none")
    mu = None
    gamma_min = None
    if cap_mode == "theorem":
        constants = spectral_constants(problem)
        mu = constants.mu
        gamma_min = (1.0 / constants.L) if kind == "stop" else 1.0
    return StepRule(
        kind,
        eta=None,
        c=getattr(args, "c", 0.5),
        delta=getattr(args, "delta", None),
        cap_mode=cap_mode,
        mu=mu,
        gamma_min=gamma_min,
        tau=getattr(args, "tau", 2.0),
        gamma_max0=getattr(args, "gamma_max0", None),
    )


# ---------------------------------------------------------------- gen

def cmd_gen(args):
    if args.kind == "ls":
        problem = generate_consistent_linear_system(
            args.rows, args.cols, args.seed, normalize=args.normalize
        )
        if args.noise > 0.0:
            problem = perturb_targets(problem, args.noise, seed=args.seed + 1)
    else:
        problem = generate_logistic_problem(
            args.rows, args.cols, args.seed, normalize=args.normalize,
            flip_prob=args.noise,
        )
    save_problem(problem, args.out)
    print("wrote %s: %s %dx%d" % (args.out, problem.kind, args.rows, args.cols))
    return 0


# ---------------------------------------------------------------- run

def _run_once(problem, args, rule, eta, x0):
    config = RunConfig(
        rule=rule,
        iterations=args.iters,
        seed=args.seed,
        batch_size=args.batch,
        eta_schedule=eta,
        momentum_schedule=getattr(args, "momentum", MomentumSchedule("none")),
        record_every=args.record_every,
        x0=x0,
    )
    return run(problem, config)


def cmd_run(args):
    problem = load_problem(args.problem)
    rule = _build_rule(args, problem, args.rule)
    eta = _resolve_eta(args.eta, args.rule, problem)
    if rule.kind in ETA_KINDS and eta is None:
        raise UsageError("rule %r needs --eta (a number or 'auto')" % rule.kind)
    x0 = _parse_start(problem, args.start, args.start_scale)
    args.momentum = _parse_momentum(args.momentum)
    traj = _run_once(problem, args, rule, eta, x0)
    if rule.kind not in ETA_KINDS and problem.kind == KIND_LEAST_SQUARES:
        # for step-valued rules the improvement column is the ratio to 1/L_f
        improvement_factor(traj, spectral_constants(problem))
    write_trajectory_csv(traj, args.out)
    final = traj.records[-1]
    print("final_f=%s dist_sq=%s halted=%s rows=%d out=%s" % (
        _fmt(final.f_full), _fmt(final.dist_sq), traj.halted_reason,
        len(traj.records), args.out,
    ))
    if args.plot:
        from .plotting import plot_convergence

        recs = traj.records
        plot_convergence(
            [("f_full", [r.iter for r in recs], [r.f_full for r in recs]),
             ("dist_sq", [r.iter for r in recs], [r.dist_sq for r in recs])],
            args.plot, title="%s trajectory" % rule.kind, ylabel="value",
        )
    return 3 if traj.halted_reason == "error" else 0


# ---------------------------------------------------------------- compare

def _effective_steps(traj, rule, eta):
    steps = []
    iters = []
    for rec in traj.records:
        if math.isnan(rec.gamma_applied):
            continue
        step = rec.gamma_applied if rule.kind not in ETA_KINDS else eta * rec.gamma_applied
        steps.append(step)
        iters.append(rec.iter)
    return iters, steps


def _start_slug(text):
    return text.replace(":", "_").replace("/", "_").replace(".", "_")


def cmd_compare(args):
    if args.problem:
        problems = [load_problem(args.problem)]
    else:
        problems = [
            generate_consistent_linear_system(
                args.rows, args.cols, args.gen_seed + i, normalize=args.normalize
            )
            for i in range(args.systems)
        ]
    os.makedirs(args.out_dir, exist_ok=True)
    from .plotting import plot_convergence, plot_improvement

    worst_factor = math.inf
    exit_code = 0
    for i, problem in enumerate(problems):
        rule_a = _build_rule(args, problem, args.rule_a)
        rule_b = _build_rule(args, problem, args.rule_b)
        eta_a = _resolve_eta(args.eta_a, args.rule_a, problem)
        eta_b = _resolve_eta(args.eta_b, args.rule_b, problem)
        for kind, eta in ((args.rule_a, eta_a), (args.rule_b, eta_b)):
            if kind in ETA_KINDS and eta is None:
                raise UsageError("rule %r needs an eta (number or 'auto')" % kind)
        for start_text in args.start:
            x0 = _parse_start(problem, start_text, args.start_scale)
            traj_a = _run_once(problem, args, rule_a, eta_a, x0)
            traj_b = _run_once(problem, args, rule_b, eta_b, x0)
            if traj_a.halted_reason == "error" or traj_b.halted_reason == "error":
                exit_code = 3
            slug = "%d_%s" % (i, _start_slug(start_text))
            pair_path = os.path.join(args.out_dir, "compare_%s.csv" % slug)
            ra, rb = traj_a.records, traj_b.records
            lines = ["iter,dist_sq_%s,dist_sq_%s,f_%s,f_%s"
                     % (args.rule_a, args.rule_b, args.rule_a, args.rule_b)]
            for pa, pb in zip(ra, rb):
                if pa.iter != pb.iter:
                    break
                lines.append(",".join([str(pa.iter), _fmt(pa.dist_sq), _fmt(pb.dist_sq),
                                       _fmt(pa.f_full), _fmt(pb.f_full)]))
            with open(pair_path, "w", encoding="utf-8") as fh:
                fh.write("\n".join(lines) + "\n")

            it_a, st_a = _effective_steps(traj_a, rule_a, eta_a)
            it_b, st_b = _effective_steps(traj_b, rule_b, eta_b)
            imp_path = os.path.join(args.out_dir, "improvement_%s.csv" % slug)
            imp_lines = ["iter,factor"]
            factors = []
            for (ka, sa), (kb, sb) in zip(zip(it_a, st_a), zip(it_b, st_b)):
                if ka != kb:
                    break
                factor = 1.0 if sa == sb else sa / sb
                factors.append(factor)
                imp_lines.append("%d,%s" % (ka, _fmt(factor)))
            with open(imp_path, "w", encoding="utf-8") as fh:
                fh.write("\n".join(imp_lines) + "\n")
            if factors:
                worst_factor = min(worst_factor, min(factors))

            plot_convergence(
                [(args.rule_a, [r.iter for r in ra], [r.dist_sq for r in ra]),
                 (args.rule_b, [r.iter for r in rb], [r.dist_sq for r in rb])],
                os.path.join(args.out_dir, "convergence_%s.png" % slug),
                title="system %d, start %s" % (i, start_text),
            )
            if factors:
                plot_improvement(
                    it_a[: len(factors)], factors,
                    os.path.join(args.out_dir, "improvement_%s.png" % slug),
                )
            print("system %d start %s: wrote %s, %s" % (i, start_text, pair_path, imp_path))
    if math.isfinite(worst_factor):
        print("worst step factor %s vs %s: %s" % (args.rule_a, args.rule_b, _fmt(worst_factor)))
    return exit_code


# ---------------------------------------------------------------- verify

def _verify_problem(args, default_builder):
    if args.problem:
        return load_problem(args.problem)
    return default_builder()


def cmd_verify(args):
    theorem = args.theorem
    momentum = MomentumSchedule("none")
    bounds = None
    gamma_min = None
    seeds = [args.seed]

    if theorem in (1, 2):
        problem = _verify_problem(
            args, lambda: generate_consistent_linear_system(8, 3, 1000 + args.seed,
                                                            normalize=True)
        )
        constants = spectral_constants(problem)
        if theorem == 1:
            rule = StepRule("stops")
            eta = None
        else:
            rule = StepRule("grads", eta=1.0 / constants.L)
            eta = 1.0 / constants.L
        iters = args.iters or 60
        batch = None
        record_every = 1
    elif theorem in (3, 4):
        problem = _verify_problem(args, two_quadratic_1d)
        constants = spectral_constants(problem)
        bounds = neighborhood_bounds(problem, constants)
        if theorem == 3:
            gamma_min = 1.0 / constants.L
            rule = StepRule("stop", delta=0.0, cap_mode="theorem",
                            mu=constants.mu, gamma_min=gamma_min)
            eta = None
        else:
            gamma_min = 1.0
            eta = 1.0 / (2.0 * constants.L)
            rule = StepRule("grad", eta=eta, delta=0.0, cap_mode="theorem",
                            mu=constants.mu, gamma_min=gamma_min)
        iters = args.iters or 400
        batch = args.batch if args.batch is not None else 1
        record_every = iters
        seeds = list(range(args.seed, args.seed + args.seeds))
    else:
        # function-gap bound: the guarantee is stated in expectation, so the
        # default verification uses full gradients (deterministic runs) on one
        # random interpolating instance per seed
        iters = args.iters or 300
        rows = []
        for j in range(args.seeds):
            problem = _verify_problem(
                args, lambda: generate_consistent_linear_system(
                    10, 4, 2000 + args.seed + j, normalize=True)
            )
            constants = spectral_constants(problem)
            eta = 1.0 / (2.0 * constants.L)
            rule = StepRule("grad", eta=eta, delta=0.0, gamma_max0=1.0)
            config = RunConfig(
                rule=rule, iterations=iters, seed=args.seed + j,
                batch_size=args.batch, eta_schedule=eta,
                momentum_schedule=MomentumSchedule("nesterov_like"),
                record_every=args.record_every,
            )
            traj = run(problem, config)
            rows.extend(contraction_report(traj, constants, rule, momentum=True,
                                           gamma_min=1.0, f_star=0.0))
        return _finish_verify(args, theorem, rows)

    if args.full_batch:
        batch = None

    trajs = []
    for seed in seeds:
        config = RunConfig(
            rule=rule, iterations=iters, seed=seed, batch_size=batch,
            eta_schedule=eta, momentum_schedule=momentum,
            record_every=record_every,
            x0=np.full(problem.dimension, 2.0) if theorem in (3, 4) else None,
        )
        trajs.append(run(problem, config))

    if theorem in (1, 2):
        rows = contraction_report(trajs[0], constants, rule)
    else:
        rows = contraction_report(trajs, constants, rule, bounds=bounds,
                                  gamma_min=gamma_min)
    return _finish_verify(args, theorem, rows)


def _finish_verify(args, theorem, rows):

    write_report_csv(rows, args.out)
    ok = print_report_summary(rows)
    from .plotting import plot_report

    plot_report(rows, os.path.splitext(args.out)[0] + ".png",
                title="theorem %d checks" % theorem)
    print("report: %s (%d rows)" % (args.out, len(rows)))
    return 0 if ok and rows else 2


# ---------------------------------------------------------------- wiring

def build_parser():
    parser = CliParser(prog="gradstep", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    g = sub.add_parser("gen", help="write a problem file")
    g.add_argument("--rows", type=int, required=True)
    g.add_argument("--cols", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--normalize", action="store_true")
    g.add_argument("--kind", choices=("ls", "logit"), default="ls")
    g.add_argument("--noise", type=float, default=0.0,
                   help="target noise scale (ls) or label flip probability (logit)")
    g.add_argument("--out", default="problem.txt")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="one optimization run")
    r.add_argument("--problem", required=True)
    r.add_argument("--rule", choices=RULE_KINDS, required=True)
    r.add_argument("--eta", default=None, help="number or 'auto'")
    r.add_argument("--delta", type=float, default=None)
    r.add_argument("--cap", choices=("none", "theorem", "smoothing"), default="none")
    r.add_argument("--tau", type=float, default=2.0)
    r.add_argument("--gamma-max0", dest="gamma_max0", type=float, default=None)
    r.add_argument("--c", type=float, default=0.5)
    r.add_argument("--batch", type=_parse_batch, default=None,
                   help="integer batch size or 'full' (default)")
    r.add_argument("--iters", type=int, default=100)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--momentum", default="none", help="none, const:BETA, or nesterov")
    r.add_argument("--record-every", dest="record_every", type=int, default=1)
    r.add_argument("--start", default="zeros",
                   help="zeros, eig:min, eig:max, eig:K, or file:PATH")
    r.add_argument("--start-scale", dest="start_scale", type=float, default=1.0)
    r.add_argument("--out", default="trajectory.csv")
    r.add_argument("--plot", default=None, help="optional convergence PNG path")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare",
                       help="two rules on shared problems and starts")
    c.add_argument("--problem", default=None, help="problem file; omit to generate")
    c.add_argument("--rows", type=int, default=5)
    c.add_argument("--cols", type=int, default=2)
    c.add_argument("--gen-seed", dest="gen_seed", type=int, default=1)
    c.add_argument("--systems", type=int, default=1)
    c.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=True)
    c.add_argument("--rule-a", dest="rule_a", choices=RULE_KINDS, default="stops")
    c.add_argument("--rule-b", dest="rule_b", choices=RULE_KINDS, default="constant")
    c.add_argument("--eta-a", dest="eta_a", default="auto")
    c.add_argument("--eta-b", dest="eta_b", default="auto")
    c.add_argument("--delta", type=float, default=None)
    c.add_argument("--batch", type=_parse_batch, default=None)
    c.add_argument("--iters", type=int, default=40)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--record-every", dest="record_every", type=int, default=1)
    c.add_argument("--start", action="append", default=None,
                   help="repeatable: zeros, eig:min, eig:max, eig:K, file:PATH")
    c.add_argument("--start-scale", dest="start_scale", type=float, default=1.0)
    c.add_argument("--out-dir", dest="out_dir", default="compare_out")
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("verify", help="check convergence guarantees")
    v.add_argument("--theorem", type=int, choices=(1, 2, 3, 4, 5), required=True)
    v.add_argument("--seeds", type=int, default=30)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--iters", type=int, default=None)
    v.add_argument("--batch", type=_parse_batch, default=None)
    v.add_argument("--full-batch", dest="full_batch", action="store_true")
    v.add_argument("--record-every", dest="record_every", type=int, default=1)
    v.add_argument("--problem", default=None, help="optional problem file override")
    v.add_argument("--out", default="verify_report.csv")
    v.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) == "compare" and args.start is None:
            args.start = ["zeros"]
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write("usage error: %s\n" % exc)
        return 1
    except (MissingOracleError, OptimumUnavailableError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 1
    except (OSError, ValueError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 1
    except ArithmeticError as exc:
        sys.stderr.write("numerical error: %s\n" % exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
