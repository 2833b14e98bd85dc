"""Synthetic experiments: sparse recovery and Poisson denoising sweeps.

Every trial draws from its own Philox stream keyed by ``(seed, index)``, so
a sweep is a pure function of its configuration and can be split across
workers without changing a single bit of the output.
"""

import csv
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .atoms import (analysis_group_norm, box_indicator, column_quad_smoother, l1_norm,
                    l21_rows, log_smoother, poisson_fidelity, quad_smoother,
                    quadratic_fidelity)
from .errors import ConfigurationError, DesignFailure
from .io import fmt_float, write_json
from .model import (PsdcRegularizer, assemble_compact, design_steering_matrix,
                    sparse_convexity_certificate, steering_matrix_sparse)
from .solver import DcConfig, dca_solve, ista

__all__ = [
    "SparseTrial", "PoissonTrial", "SweepResult", "SparseSweepConfig",
    "PoissonConfig", "trial_rng", "gen_sparse_trial", "gen_poisson_trial",
    "difference_operator", "sparse_problem", "poisson_problem", "mse", "mse_db",
    "snr_db", "lambda_for_snr", "lambda_grid", "run_sparse_sweep",
    "run_poisson_experiment", "count_change_points", "SWEEP_COLUMNS", "POISSON_DC",
]

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ["smoother", "rho_or_theta", "lambda", "trials", "mse", "mse_db",
                 "mean_outer_iters", "mean_seconds", "seed", "first_index",
                 "last_index", "status"]
TRACE_COLUMNS = ["smoother", "rho_or_theta", "lambda", "index", "k", "cost",
                 "inner1_iters", "inner2_iters", "elapsed_s"]


def trial_rng(seed, index=0):
    """Independent Philox stream for trial ``index`` of a run seeded by ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


@dataclass
class SparseTrial:
    A: np.ndarray
    x_star: np.ndarray
    y: np.ndarray
    snr_db: float
    seed: int
    index: int = 0


@dataclass
class PoissonTrial:
    X_star: np.ndarray
    Y: np.ndarray
    change_points: np.ndarray
    seed: int
    index: int = 0


def snr_db(signal, noise):
    return 20.0 * np.log10(np.linalg.norm(signal) / np.linalg.norm(noise))


def gen_sparse_trial(n=1000, m=200, S=20, snr_db=20.0, seed=0, index=0):
    """Gaussian design, ``S``-sparse Gaussian truth, noise at an exact SNR.

    The noise is drawn as a standard normal direction and rescaled so that
    ``20 log10(||A x*|| / ||e||)`` equals ``snr_db``.
    """
    if not 0 < S <= n:
        raise ConfigurationError("need 0 < S <= n, got S=%r, n=%r" % (S, n))
    if not 0 < m <= n:
        raise ConfigurationError("need 0 < m <= n")
    rng = trial_rng(seed, index)
    A = rng.standard_normal((m, n))
    x_star = np.zeros(n)
    support = rng.choice(n, size=S, replace=False)
    x_star[support] = rng.standard_normal(S)
    # a zero draw would leave fewer than S nonzeros
    while np.count_nonzero(x_star) < S:
        zero = support[x_star[support] == 0]
        x_star[zero] = rng.standard_normal(zero.size)
    clean = A @ x_star
    e = rng.standard_normal(m)
    e *= np.linalg.norm(clean) / (np.linalg.norm(e) * 10.0 ** (snr_db / 20.0))
    return SparseTrial(A=A, x_star=x_star, y=clean + e, snr_db=float(snr_db),
                       seed=int(seed), index=int(index))


def difference_operator(n):
    """First-order forward differences, shape ``(n - 1, n)``."""
    D = np.zeros((n - 1, n))
    i = np.arange(n - 1)
    D[i, i] = -1.0
    D[i, i + 1] = 1.0
    return D


def gen_poisson_trial(segments=8, seed=0, length=128, channels=4, high=50.0, index=0):
    """Jointly piecewise-constant intensities and their Poisson counts.

    All ``channels`` columns share ``segments - 1`` change points drawn
    uniformly without replacement; every segment of every column takes a
    value uniform on ``[0, high]``.
    """
    if segments < 2 or segments > length:
        raise ConfigurationError("need 2 <= segments <= length")
    rng = trial_rng(seed, index)
    cps = np.sort(rng.choice(np.arange(1, length), size=segments - 1, replace=False))
    levels = rng.uniform(0.0, high, size=(segments, channels))
    seg_id = np.searchsorted(cps, np.arange(length), side="right")
    X = levels[seg_id]
    Y = rng.poisson(X).astype(np.int64)
    return PoissonTrial(X_star=X, Y=Y, change_points=cps, seed=int(seed), index=int(index))


def mse(estimates, truths):
    """Sum over trials of ``||x_est - x*||^2``."""
    estimates, truths = list(estimates), list(truths)
    if len(estimates) != len(truths):
        raise ConfigurationError("got %d estimates for %d truths" % (len(estimates), len(truths)))
    return float(sum(np.sum((np.asarray(a, float) - np.asarray(b, float)) ** 2)
                     for a, b in zip(estimates, truths)))


def mse_db(value):
    return 10.0 * np.log10(value) if value > 0 else -np.inf


def lambda_for_snr(lambda_star, snr):
    """Rescale a tuned weight from 20 dB to another SNR."""
    if not lambda_star > 0:
        raise ConfigurationError("lambda_star must be positive")
    return lambda_star * 10.0 ** ((20.0 - snr) / 20.0)


def lambda_grid(scale, lo=1e-2, hi=1e2, points=15):
    return scale * np.logspace(np.log10(lo), np.log10(hi), points)


def count_change_points(X, threshold=1e-3):
    """Rows of ``D X`` whose norm exceeds ``threshold``."""
    DX = np.diff(np.asarray(X, dtype=float), axis=0)
    return int(np.sum(np.linalg.norm(DX.reshape(DX.shape[0], -1), axis=1) > threshold))


# ---------------------------------------------------------------------------
# problem builders

def sparse_problem(A, y, lam, rho, smoother="quad", certificate=None):
    """``0.5||y - Ax||^2 + lam * (||x||_1 - (||.||_1 [] phi)(x))``.

    ``phi`` is the quadratic or logarithmic smoother steered by
    ``B = sqrt(rho / lam) A``; with ``rho = 0`` the model is the lasso.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    B = steering_matrix_sparse(A, lam, rho)
    if smoother == "quad":
        phi = quad_smoother(B)
    elif smoother == "log":
        phi = log_smoother(B)
    else:
        raise ConfigurationError("smoother must be 'quad' or 'log', got %r" % smoother)
    reg = PsdcRegularizer(l1_norm((n,)), l1_norm((n,)), phi, np.eye(n))
    prob = assemble_compact(quadratic_fidelity(A, y), [(lam, reg)])
    if certificate is None:
        certificate = sparse_convexity_certificate(A, lam, rho)
    return prob.with_certificate(certificate)


def poisson_problem(Y, lam, theta, high=50.0, eps_dom=1e-8, curvature_floor=50.01,
                    reduce_nullspace=True):
    """Poisson denoising with a group-TV-type pSDC penalty.

    ``F1 = F_TCT + lam ||(D X)^T||_{2,1} + box``, ``F2 = lam ||Z^T||_{2,1}`` and
    ``Phi = lam/2 sum_i ||B_i z_i||^2``, each ``B_i`` designed against
    ``diag(Y[:, i]) / curvature_floor^2``. ``theta = 0`` is group TV.

    Returns the problem with the worst column certificate attached.
    """
    Y = np.asarray(Y)
    length, channels = Y.shape
    D = difference_operator(length)
    Bs, certs = [], []
    for i in range(channels):
        V = np.diag(Y[:, i].astype(float)) / curvature_floor ** 2
        B, cert = design_steering_matrix(V, D, lam, theta, reduce_nullspace=reduce_nullspace)
        Bs.append(B)
        certs.append(cert)
    reg = PsdcRegularizer(psi1=analysis_group_norm(D, shape=(length, channels)),
                          psi2=l21_rows((length - 1, channels)),
                          phi=column_quad_smoother(Bs), M=D)
    prob = assemble_compact(poisson_fidelity(Y, eps_dom), [(lam, reg)],
                            constraint=box_indicator(eps_dom, high, (length, channels)))
    worst = min(certs, key=lambda c: c.min_eigenvalue)
    return prob.with_certificate(worst), certs


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class SweepResult:
    """Grid of aggregated metrics; ``cells`` rows follow :data:`SWEEP_COLUMNS`."""

    kind: str
    config: dict
    cells: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def best(self, smoother, rho_or_theta=None):
        rows = [c for c in self.cells if c["smoother"] == smoother and c["status"] == "ok"
                and (rho_or_theta is None or c["rho_or_theta"] == rho_or_theta)]
        if not rows:
            raise KeyError("no completed cell for %s" % smoother)
        return min(rows, key=lambda c: c["mse"])

    def to_csv(self, path, timing=True):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_COLUMNS)
            for c in self.cells:
                row = []
                for col in SWEEP_COLUMNS:
                    v = c[col]
                    if col == "mean_seconds" and not timing:
                        v = ""
                    elif isinstance(v, float):
                        v = fmt_float(v)
                    row.append(v)
                w.writerow(row)

    def write(self, out_dir, stem, timing=True, extra_manifest=None):
        """Write ``<stem>.csv``, per-run traces and ``<stem>.manifest.json``.

        Poisson results also get ``<stem>_signals.csv`` with the truth, the
        counts and the best recovery per ``theta``.
        """
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, stem + ".csv")
        self.to_csv(csv_path, timing=timing)
        files = [stem + ".csv", stem + "_traces.csv"]
        with open(os.path.join(out_dir, stem + "_traces.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in self.extras.get("traces", []):
                row = list(row)
                if not timing:
                    row[-1] = ""
                w.writerow([fmt_float(v) if isinstance(v, float) else v for v in row])
        if "signals" in self.extras:
            files.append(stem + "_signals.csv")
            self._write_signals(os.path.join(out_dir, stem + "_signals.csv"))
        manifest = {"kind": self.kind, "config": self.config, "files": files,
                    "columns": SWEEP_COLUMNS}
        manifest.update({k: v for k, v in self.extras.items()
                         if k not in ("signals", "traces")})
        manifest.update(extra_manifest or {})
        write_json(os.path.join(out_dir, stem + ".manifest.json"), manifest)
        return csv_path

    def _write_signals(self, path):
        sig = self.extras["signals"]
        X, Y = sig["X_star"], sig["Y"]
        best = sorted(sig["best"].items())
        header = ["row"] + ["x_star_%d" % i for i in range(X.shape[1])] + \
            ["y_%d" % i for i in range(Y.shape[1])]
        for th, b in best:
            header += ["theta%g_lambda%g_%d" % (th, b["lambda"], i) for i in range(X.shape[1])]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for j in range(X.shape[0]):
                row = [j] + [fmt_float(v) for v in X[j]] + [int(v) for v in Y[j]]
                for _, b in best:
                    row += [fmt_float(v) for v in b["X"][j]]
                w.writerow(row)


@dataclass
class SparseSweepConfig:
    n: int = 1000
    m: int = 200
    S: int = 20
    snr_db: float = 20.0
    trials: int = 50
    seed: int = 0
    smoothers: Sequence[str] = ("quad", "log")
    rhos: Sequence[float] = (0.0, 0.5)
    lambda_lo: float = 1e-2
    lambda_hi: float = 1e2
    lambda_points: int = 15
    lambdas: Optional[Sequence[float]] = None
    l1_baseline: bool = True
    threads: int = 1
    dc: DcConfig = field(default_factory=DcConfig)

    def __post_init__(self):
        for s in self.smoothers:
            if s not in ("quad", "log"):
                raise ConfigurationError("smoothers: unknown smoother %r" % s)
        if self.trials < 1:
            raise ConfigurationError("trials must be positive")


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _cell(smoother, value, lam, cfg, outcomes, status="ok"):
    base = {"smoother": smoother, "rho_or_theta": float(value), "lambda": float(lam),
            "trials": cfg["trials"], "seed": cfg["seed"], "first_index": 0,
            "last_index": cfg["trials"] - 1, "status": status}
    if status != "ok":
        base.update(mse=float("nan"), mse_db=float("nan"), mean_outer_iters=float("nan"),
                    mean_seconds=float("nan"))
        return base
    err = sum(o["se"] for o in outcomes)
    base.update(mse=err, mse_db=float(mse_db(err)),
                mean_outer_iters=float(np.mean([o["iters"] for o in outcomes])),
                mean_seconds=float(np.mean([o["seconds"] for o in outcomes])))
    return base


def run_sparse_sweep(config=None):
    """Monte Carlo MSE sweep over ``(smoother, rho, lambda)``.

    ``rho = 0`` cells run the DC solver with a zero smoother (the l1 model);
    with ``l1_baseline`` an additional ``"l1"`` row per ``lambda`` runs ISTA
    directly. Cells whose convexity certificate is refuted on any trial are
    marked skipped.
    """
    cfg = config or SparseSweepConfig()
    trials = _map(lambda i: gen_sparse_trial(cfg.n, cfg.m, cfg.S, cfg.snr_db, cfg.seed, i),
                  range(cfg.trials), cfg.threads)
    scale = float(np.median([np.max(np.abs(t.A.T @ t.y)) for t in trials]))
    lams = (np.asarray(cfg.lambdas, dtype=float) if cfg.lambdas is not None
            else lambda_grid(scale, cfg.lambda_lo, cfg.lambda_hi, cfg.lambda_points))
    cfg_dict = _sparse_config_dict(cfg, lams, scale)

    # S = (1 - rho) A^T A does not depend on lambda
    certs = {}
    for rho in cfg.rhos:
        certs[rho] = [sparse_convexity_certificate(t.A, 1.0, rho) for t in trials]

    cells, two_iter, traces = [], [], []
    dc = cfg.dc
    for lam in lams:
        if cfg.l1_baseline:
            def run_l1(t, lam=lam):
                t0 = time.perf_counter()
                x, it = ista(t.A, t.y, lam, eps=dc.eps2, delta=dc.delta2,
                             max_iters=dc.inner_max_iters, on_fail=dc.inner_on_fail)
                return {"se": float(np.sum((x - t.x_star) ** 2)), "iters": it,
                        "seconds": time.perf_counter() - t0}
            cells.append(_cell("l1", 0.0, lam, cfg_dict, _map(run_l1, trials, cfg.threads)))
        for smoother in cfg.smoothers:
            for rho in cfg.rhos:
                if not all(c.certified for c in certs[rho]):
                    cells.append(_cell(smoother, rho, lam, cfg_dict, [],
                                       status="skipped: refuted certificate"))
                    continue

                def run_dc(pair, lam=lam, smoother=smoother, rho=rho):
                    t, cert = pair
                    t0 = time.perf_counter()
                    prob = sparse_problem(t.A, t.y, lam, rho, smoother, certificate=cert)
                    x, tr = dca_solve(prob, np.zeros(cfg.n), cfg=dc)
                    out = {"se": float(np.sum((x - t.x_star) ** 2)),
                           "iters": tr.outer_iters, "seconds": time.perf_counter() - t0,
                           "trace": tr.rows()}
                    if len(tr.costs) > 2 and tr.costs[-1] != 0:
                        out["two_iter_gap"] = (tr.costs[2] - tr.costs[-1]) / abs(tr.costs[-1])
                    return out
                outcomes = _map(run_dc, list(zip(trials, certs[rho])), cfg.threads)
                for i, o in enumerate(outcomes):
                    traces.extend((smoother, float(rho), float(lam), i) + r for r in o["trace"])
                    if "two_iter_gap" in o:
                        two_iter.append({"smoother": smoother, "rho": float(rho),
                                         "lambda": float(lam), "index": i,
                                         "gap": float(o["two_iter_gap"])})
                cells.append(_cell(smoother, rho, lam, cfg_dict, outcomes))
                log.info("sparse %s rho=%g lambda=%.4g mse=%.4g", smoother, rho, lam,
                         cells[-1]["mse"])
    within = [g["gap"] <= 0.01 for g in two_iter]
    extras = {"lambda_scale": scale, "traces": traces, "two_iteration": {
        "runs": len(within), "within_1pct": int(sum(within)), "gaps": two_iter}}
    return SweepResult("sparse", cfg_dict, cells, extras)


# the Poisson landscape is flat near the optimum; loose inner solves
# leave SE differences between theta values of the same order as the effect
POISSON_DC = DcConfig(eps1=1e-6, eps2=1e-6)


def _sparse_config_dict(cfg, lams, scale):
    d = asdict(cfg)
    d["smoothers"] = list(cfg.smoothers)
    d["rhos"] = [float(r) for r in cfg.rhos]
    d["lambdas"] = [float(v) for v in lams]
    d["lambda_scale"] = scale
    d.pop("threads")
    return d


@dataclass
class PoissonConfig:
    seed: int = 0
    segments: int = 8
    length: int = 128
    channels: int = 4
    high: float = 50.0
    eps_dom: float = 1e-8
    thetas: Sequence[float] = (0.0, 0.25, 0.5, 0.75)
    lambdas: Sequence[float] = (0.3, 0.4, 0.5, 0.6, 0.7, 0.85, 1.0, 1.2, 1.5)
    reduce_nullspace: bool = True
    threads: int = 1
    dc: DcConfig = field(default_factory=lambda: POISSON_DC)

    def __post_init__(self):
        for th in self.thetas:
            if not 0.0 <= th <= 1.0:
                raise ConfigurationError("thetas: %r is outside [0, 1]" % th)
        if not all(lam > 0 for lam in self.lambdas):
            raise ConfigurationError("lambdas must be positive")


def run_poisson_experiment(config=None):
    """SE sweep over ``(theta, lambda)`` on one Poisson instance.

    ``theta = 0`` rows are the group-TV baseline. The recovered signal of
    the best cell per ``theta`` is kept in ``extras["signals"]``.
    """
    cfg = config or PoissonConfig()
    trial = gen_poisson_trial(cfg.segments, cfg.seed, cfg.length, cfg.channels, cfg.high)
    cfg_dict = asdict(cfg)
    cfg_dict["thetas"] = [float(t) for t in cfg.thetas]
    cfg_dict["lambdas"] = [float(v) for v in cfg.lambdas]
    cfg_dict.pop("threads")
    cfg_dict["trials"] = 1
    x0 = np.clip(trial.Y.astype(float), 1.0, cfg.high)

    def run(cell):
        theta, lam = cell
        t0 = time.perf_counter()
        try:
            prob, certs = poisson_problem(trial.Y, lam, theta, cfg.high, cfg.eps_dom,
                                           reduce_nullspace=cfg.reduce_nullspace)
        except DesignFailure as exc:
            return cell, None, str(exc)
        X, tr = dca_solve(prob, x0, cfg=cfg.dc)
        return cell, {"se": float(np.sum((X - trial.X_star) ** 2)), "iters": tr.outer_iters,
                      "seconds": time.perf_counter() - t0, "X": X,
                      "min_eig": min(c.min_eigenvalue for c in certs),
                      "theta_eff": [c.effective_theta for c in certs],
                      "change_points": count_change_points(X), "trace": tr.rows()}, None

    grid = [(th, lam) for th in cfg.thetas for lam in cfg.lambdas]
    cells, details, signals, traces = [], [], {}, []
    for (theta, lam), out, err in _map(run, grid, cfg.threads):
        name = "group_tv" if theta == 0 else "psdc_quad"
        if out is None:
            cells.append(_cell(name, theta, lam, cfg_dict, [], status="skipped: " + err))
            continue
        cells.append(_cell(name, theta, lam, cfg_dict, [out]))
        traces.extend((name, float(theta), float(lam), 0) + r for r in out["trace"])
        details.append({"theta": float(theta), "lambda": float(lam),
                        "min_eigenvalue": out["min_eig"], "effective_theta": out["theta_eff"],
                        "change_points": out["change_points"], "se": out["se"]})
        key = float(theta)
        if key not in signals or out["se"] < signals[key][0]:
            signals[key] = (out["se"], float(lam), out["X"])
    extras = {"cells": details, "true_change_points": trial.change_points.tolist(),
              "traces": traces,
              "signals": {"X_star": trial.X_star, "Y": trial.Y,
                          "best": {k: {"lambda": v[1], "se": v[0], "X": v[2]}
                                   for k, v in signals.items()}}}
    return SweepResult("poisson", cfg_dict, cells, extras)
