"""Command-line front end: ``psdc {certify,solve,bench-sparse,bench-poisson}``.

Exit codes: 0 success or certified, 1 usage/config error, 2 refuted
certificate (or a run skipped for lack of one), 3 solver failure.
"""

import argparse
import dataclasses
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .bench import (POISSON_DC, PoissonConfig, SparseSweepConfig, gen_poisson_trial,
                    gen_sparse_trial, poisson_problem, run_poisson_experiment,
                    run_sparse_sweep, sparse_problem)
from .errors import (ConfigurationError, ConvergenceError, DesignFailure, DivergenceError,
                     InvalidInputError, InvariantViolation, NumericalError, PsdcError)
from .io import (check_keys, dumps, fmt_float, load_json, resolve_matrix, write_json,
                 write_matrix)
from .model import check_convexity_quadratic, sparse_convexity_certificate
from .solver import DcConfig, dca_solve

EXIT_OK, EXIT_CONFIG, EXIT_REFUTED, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("psdc")

_TRIAL_SPARSE = ("n", "m", "S", "snr_db", "seed", "index")
_TRIAL_POISSON = ("segments", "seed", "length", "channels", "high", "index")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, "%s: error: %s\n" % (self.prog, message))


class _Run:
    """Resolved command-line context shared by the subcommands."""

    def __init__(self, args):
        self.args = args
        self.config_path = args.config
        self.base_dir = os.path.dirname(os.path.abspath(args.config))
        self.out = args.out
        self.quiet = args.quiet

    def say(self, line):
        if not self.quiet:
            print(line)

    def manifest(self, command, config, **extra):
        m = {"command": command, "version": __version__, "config_path": self.config_path,
             "config": config, "seed": self.args.seed, "force": self.args.force}
        m.update(extra)
        os.makedirs(self.out, exist_ok=True)
        write_json(os.path.join(self.out, "manifest.json"), m)


def _threads(args):
    if args.threads is not None:
        n = args.threads
    elif os.environ.get("PSDC_THREADS"):
        try:
            n = int(os.environ["PSDC_THREADS"])
        except ValueError:
            raise ConfigurationError("PSDC_THREADS must be an integer")
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise ConfigurationError("--threads must be at least 1")
    return n


def _dc_config(d, where="solver", base=None):
    names = [f.name for f in dataclasses.fields(DcConfig)]
    check_keys(d, names, where)
    return dataclasses.replace(base or DcConfig(), **d)


def _sparse_trial(d, seed, where):
    check_keys(d, _TRIAL_SPARSE, where)
    d = dict(d)
    if seed is not None:
        d["seed"] = seed
    return gen_sparse_trial(**d)


def _poisson_trial(d, seed, where):
    check_keys(d, _TRIAL_POISSON, where)
    d = dict(d)
    if seed is not None:
        d["seed"] = seed
    return gen_poisson_trial(**d)


def _number(d, key, where, default=None):
    if key not in d:
        if default is None:
            raise ConfigurationError("%s: missing key %s" % (where, key))
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError("%s.%s: expected a number" % (where, key))
    return float(v)


# ---------------------------------------------------------------------------
# certify

def cmd_certify(run):
    cfg = load_json(run.config_path)
    kind = cfg.get("type", "quadratic")
    if kind == "quadratic":
        check_keys(cfg, ("type", "A", "gamma", "Xi", "B", "kappa", "tol"), "config",
                   required=("A", "gamma", "Xi", "B", "kappa"))
        mats = {k: resolve_matrix(cfg[k], run.base_dir, k)
                for k in ("A", "gamma", "Xi", "B", "kappa")}
        cert = check_convexity_quadratic(mats["A"], mats["gamma"].ravel(), mats["Xi"],
                                         mats["B"], mats["kappa"].ravel(), cfg.get("tol"))
    elif kind == "sparse":
        check_keys(cfg, ("type", "A", "trial", "lambda", "rho", "tol"), "config",
                   required=("lambda", "rho"))
        A = _sparse_A(cfg, run)
        cert = sparse_convexity_certificate(A, _number(cfg, "lambda", "config"),
                                            _number(cfg, "rho", "config"), cfg.get("tol"))
    else:
        raise ConfigurationError("config.type: unknown problem type %r" % kind)
    run.say("min_eigenvalue %s" % fmt_float(cert.min_eigenvalue))
    run.say("tolerance %s" % fmt_float(cert.tolerance))
    run.say("verdict %s" % cert.verdict)
    report = {"min_eigenvalue": cert.min_eigenvalue, "tolerance": cert.tolerance,
              "verdict": cert.verdict}
    run.manifest("certify", cfg, certificate=report)
    return EXIT_OK if cert.certified else EXIT_REFUTED


def _sparse_A(cfg, run):
    if ("A" in cfg) == ("trial" in cfg):
        raise ConfigurationError("config: give exactly one of A and trial")
    if "A" in cfg:
        return resolve_matrix(cfg["A"], run.base_dir, "A")
    return _sparse_trial(cfg["trial"], run.args.seed, "trial").A


# ---------------------------------------------------------------------------
# solve

def _build_problem(p, run):
    kind = p.get("type")
    if kind == "sparse":
        check_keys(p, ("type", "A", "y", "trial", "lambda", "rho", "smoother"), "problem",
                   required=("lambda", "rho"))
        lam, rho = _number(p, "lambda", "problem"), _number(p, "rho", "problem")
        smoother = p.get("smoother", "quad")
        if smoother not in ("quad", "log"):
            raise ConfigurationError("problem.smoother: unknown smoother %r" % smoother)
        if "trial" in p:
            if "A" in p or "y" in p:
                raise ConfigurationError("problem: trial excludes A and y")
            t = _sparse_trial(p["trial"], run.args.seed, "problem.trial")
            A, y = t.A, t.y
        else:
            check_keys(p, ("type", "A", "y", "lambda", "rho", "smoother"), "problem",
                       required=("A", "y"))
            A = resolve_matrix(p["A"], run.base_dir, "problem.A")
            y = resolve_matrix(p["y"], run.base_dir, "problem.y").ravel()
        if not 0.0 <= rho <= 1.0:
            cert = sparse_convexity_certificate(A, lam, rho)
            return None, cert, np.zeros(A.shape[1])
        prob = sparse_problem(A, y, lam, rho, smoother)
        return prob, prob.certificate, np.zeros(A.shape[1])
    if kind == "poisson":
        check_keys(p, ("type", "Y", "trial", "lambda", "theta", "eps_dom", "high"),
                   "problem", required=("lambda", "theta"))
        if ("Y" in p) == ("trial" in p):
            raise ConfigurationError("problem: give exactly one of Y and trial")
        if "trial" in p:
            Y = _poisson_trial(p["trial"], run.args.seed, "problem.trial").Y
        else:
            Y = resolve_matrix(p["Y"], run.base_dir, "problem.Y")
        high = _number(p, "high", "problem", 50.0)
        prob, certs = poisson_problem(Y, _number(p, "lambda", "problem"),
                                      _number(p, "theta", "problem"), high,
                                      _number(p, "eps_dom", "problem", 1e-8))
        return prob, prob.certificate, np.clip(np.asarray(Y, float), 1.0, high)
    raise ConfigurationError("problem.type: unknown problem type %r" % kind)


def cmd_solve(run):
    cfg = load_json(run.config_path)
    check_keys(cfg, ("problem", "solver", "x0", "timing"), "config", required=("problem",))
    kind = cfg["problem"].get("type") if isinstance(cfg["problem"], dict) else None
    dc = _dc_config(cfg.get("solver", {}), base=POISSON_DC if kind == "poisson" else None)
    try:
        prob, cert, x0 = _build_problem(cfg["problem"], run)
    except DesignFailure as exc:
        run.say("verdict refuted (%s)" % exc)
        return EXIT_REFUTED
    run.say("certificate %s (min eigenvalue %s)" % (cert.verdict, fmt_float(cert.min_eigenvalue)))
    if not cert.certified and not run.args.force:
        run.say("refusing to solve an uncertified model; pass --force to override")
        return EXIT_REFUTED
    if prob is None:
        raise ConfigurationError("problem.rho: %r is outside [0, 1]; no steering matrix"
                                 % cfg["problem"]["rho"])
    if "x0" in cfg:
        x0 = resolve_matrix(cfg["x0"], run.base_dir, "x0").reshape(x0.shape)
    t0 = time.perf_counter()
    x, trace = dca_solve(prob, x0, cfg=dc)
    wall = time.perf_counter() - t0
    timing = cfg.get("timing", True)
    if not timing:
        trace.elapsed_s = [0.0] * len(trace.elapsed_s)

    os.makedirs(run.out, exist_ok=True)
    write_matrix(os.path.join(run.out, "solution.psdm"), x)
    meta = {"shape": list(x.shape), "cost": trace.costs[-1], "outer_iters": trace.outer_iters,
            "reason": trace.reason, "inner1_iters": sum(trace.inner1_iters),
            "inner2_iters": sum(trace.inner2_iters),
            "certificate": {"min_eigenvalue": cert.min_eigenvalue,
                            "tolerance": cert.tolerance, "verdict": cert.verdict}}
    write_json(os.path.join(run.out, "solution.json"), meta)
    trace.to_csv(os.path.join(run.out, "trace.csv"))
    run.manifest("solve", cfg, **({"wall_seconds": wall} if timing else {}))
    run.say("final_cost %s" % fmt_float(trace.costs[-1]))
    run.say("outer_iters %d inner1_iters %d inner2_iters %d reason %s"
            % (trace.outer_iters, meta["inner1_iters"], meta["inner2_iters"], trace.reason))
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench

def _bench(run, config_cls, runner, command):
    cfg = load_json(run.config_path)
    names = [f.name for f in dataclasses.fields(config_cls) if f.name not in ("dc", "threads")]
    check_keys(cfg, names + ["solver", "timing"], "config")
    kwargs = {k: v for k, v in cfg.items() if k not in ("solver", "timing")}
    for k, v in kwargs.items():
        if isinstance(v, list):
            kwargs[k] = tuple(v)
    if run.args.seed is not None:
        kwargs["seed"] = run.args.seed
    kwargs["threads"] = _threads(run.args)
    base = next(f for f in dataclasses.fields(config_cls) if f.name == "dc").default_factory()
    kwargs["dc"] = _dc_config(cfg.get("solver", {}), base=base)
    try:
        conf = config_cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError("config: %s" % exc)
    t0 = time.perf_counter()
    result = runner(conf)
    wall = time.perf_counter() - t0
    timing = cfg.get("timing", True)
    extra = {"command": command, "version": __version__, "seed": conf.seed}
    if timing:
        extra["wall_seconds"] = wall
    result.write(run.out, "sweep", timing=timing, extra_manifest=extra)
    run.manifest(command, cfg, **({"wall_seconds": wall} if timing else {}))
    for c in result.cells:
        run.say("%s %s=%s lambda=%s mse=%s %s"
                % (c["smoother"], "theta" if result.kind == "poisson" else "rho",
                   fmt_float(c["rho_or_theta"]), fmt_float(c["lambda"]),
                   fmt_float(c["mse"]), c["status"]))
    skipped = [c for c in result.cells if c["status"] != "ok"]
    return EXIT_REFUTED if skipped and len(skipped) == len(result.cells) else EXIT_OK


def cmd_bench_sparse(run):
    return _bench(run, SparseSweepConfig, run_sparse_sweep, "bench-sparse")


def cmd_bench_poisson(run):
    return _bench(run, PoissonConfig, run_poisson_experiment, "bench-poisson")


COMMANDS = {"certify": cmd_certify, "solve": cmd_solve,
            "bench-sparse": cmd_bench_sparse, "bench-poisson": cmd_bench_poisson}


def build_parser():
    parser = _Parser(prog="psdc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", default=".", metavar="DIR")
        p.add_argument("--seed", type=int, default=None, metavar="U64")
        p.add_argument("--threads", type=int, default=None, metavar="N")
        p.add_argument("--force", action="store_true")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](_Run(args))
    except (ConfigurationError, InvalidInputError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except DesignFailure as exc:
        print("refuted: %s" % exc, file=sys.stderr)
        return EXIT_REFUTED
    except (InvariantViolation, ConvergenceError, DivergenceError, NumericalError) as exc:
        print("solver failure: %s" % exc, file=sys.stderr)
        return EXIT_SOLVER
    except PsdcError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
