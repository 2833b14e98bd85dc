"""Double-loop DC algorithm for nonconvexly regularized convex models.

Each outer iteration linearizes the concave part ``-(F2 [] Phi)(Xi x)`` at
``x_k`` through the envelope gradient ``u_k = Xi^T grad Phi(Xi x_k - z_k)``
(step 1) and then minimizes the convex majorant ``F1(x) - <u_k, x>``
(step 2). Both subproblems are solved inexactly by proximal gradient with
the relative stopping rule ``||x+ - x|| <= eps (||x|| + delta)``.
"""

import csv
import time
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .atoms import SmoothAtom, l1_norm, quadratic_fidelity, scale_prox
from .errors import ConfigurationError, InvariantViolation
from .inner import InnerConfig, prox_gradient, prox_gradient_backtracking
from .io import fmt_float, write_json
from .model import solve_envelope

__all__ = [
    "DcConfig", "SolveTrace", "Step1Result", "dca_step1", "dca_step2",
    "dca_solve", "ista", "prox_gradient", "prox_gradient_backtracking",
]

DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class DcConfig:
    """Tolerances and policies of :func:`dca_solve`.

    ``eps1``/``delta1`` drive the step-1 (envelope) inner loop and
    ``eps2``/``delta2`` the step-2 loop. ``inner_on_fail`` chooses whether
    an inner loop that hits ``inner_max_iters`` raises or only warns.
    ``step0`` is the initial trial step of the backtracking step-2 solver
    used when the fidelity has an open domain.
    """

    eps1: float = 1e-3
    eps2: float = 1e-3
    delta1: float = 1e-10
    delta2: float = 1e-10
    inner_max_iters: int = 100000
    outer_tol: float = 1e-6
    outer_max_iters: int = 100
    warm_start: bool = True
    enforce_descent: bool = False
    descent_tol: float = 1e-9
    inner_on_fail: str = "raise"
    step_factor: float = 1.99
    step0: float = 1.0

    def __post_init__(self):
        if not self.outer_tol > 0:
            raise ConfigurationError("outer_tol must be positive")
        if self.outer_max_iters < 1 or self.inner_max_iters < 1:
            raise ConfigurationError("iteration caps must be positive")
        if not self.step0 > 0:
            raise ConfigurationError("step0 must be positive")
        # InnerConfig validates the remaining fields
        self.inner1()
        self.inner2()

    def inner1(self):
        return InnerConfig(self.eps1, self.delta1, self.inner_max_iters,
                           self.step_factor, self.inner_on_fail)

    def inner2(self):
        return InnerConfig(self.eps2, self.delta2, self.inner_max_iters,
                           self.step_factor, self.inner_on_fail)


@dataclass
class SolveTrace:
    """Per-outer-iteration record of a DCA run.

    Index ``k = 0`` is the starting point. ``elapsed_s`` is cumulative wall
    time since the start of :func:`dca_solve`.
    """

    costs: List[float] = field(default_factory=list)
    inner1_iters: List[int] = field(default_factory=list)
    inner2_iters: List[int] = field(default_factory=list)
    elapsed_s: List[float] = field(default_factory=list)
    x: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    z_first: Optional[np.ndarray] = None
    reason: str = ""
    certificate_attached: bool = False

    @property
    def outer_iters(self):
        return len(self.costs) - 1

    def record(self, cost, it1, it2, t):
        self.costs.append(float(cost))
        self.inner1_iters.append(int(it1))
        self.inner2_iters.append(int(it2))
        self.elapsed_s.append(float(t))

    def rows(self):
        return [(k, self.costs[k], self.inner1_iters[k], self.inner2_iters[k],
                 self.elapsed_s[k]) for k in range(len(self.costs))]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "cost", "inner1_iters", "inner2_iters", "elapsed_s"])
            for k, c, i1, i2, t in self.rows():
                w.writerow([k, fmt_float(c), i1, i2, fmt_float(t)])

    def to_dict(self):
        return {
            "costs": self.costs,
            "inner1_iters": self.inner1_iters,
            "inner2_iters": self.inner2_iters,
            "elapsed_s": self.elapsed_s,
            "x": None if self.x is None else np.asarray(self.x).tolist(),
            "z": None if self.z is None else np.asarray(self.z).tolist(),
            "reason": self.reason,
            "certificate_attached": self.certificate_attached,
        }

    def to_json(self, path):
        write_json(path, self.to_dict())


class Step1Result(NamedTuple):
    z: np.ndarray
    u: np.ndarray
    envelope: float
    iters: int


def dca_step1(problem, x_k, z_init=None, cfg=None):
    """Envelope step: ``z_k`` minimizing ``F2(z) + Phi(Xi x_k - z)``.

    The minimization decouples over the regularizer blocks. Blocks whose
    smoother is zero contribute nothing to ``u``; their ``z`` is only
    computed (as a minimizer of ``F2``) so that the envelope value, needed
    for the cost, stays exact.

    Returns
    -------
    Step1Result
        ``(z, u, envelope, iters)`` with ``u = Xi^T grad Phi(Xi x_k - z)``
        and ``envelope = (F2 [] Phi)(Xi x_k)``.
    """
    cfg = cfg or DcConfig()
    inner = cfg.inner1()
    x_k = np.asarray(x_k, dtype=float)
    s = problem.Xi @ x_k
    if z_init is None:
        z_init = np.zeros_like(s)
    z_blocks, g_blocks = [], []
    env, iters = 0.0, 0
    for f2, phi, s_i, z0_i in zip(problem.f2_blocks, problem.phi_blocks,
                                  problem.split(s), problem.split(z_init)):
        value, z_i, it = solve_envelope(f2, phi, s_i, inner, z0_i)
        env += value
        iters += it
        z_blocks.append(z_i)
        g_blocks.append(np.zeros_like(s_i) if phi.is_zero else phi.gradient(s_i - z_i))
    z = np.concatenate(z_blocks, axis=0)
    u = problem.Xi.T @ np.concatenate(g_blocks, axis=0)
    return Step1Result(z, u, env, iters)


def _linear_shift(smooth, u):
    """``x -> smooth(x) - <u, x>``."""
    if smooth.is_zero:
        return SmoothAtom(value=lambda x: -float(np.sum(u * x)),
                          gradient=lambda x: -u, grad_lipschitz=0.0,
                          shape=smooth.shape, name="linear")
    return SmoothAtom(value=lambda x: smooth.value(x) - float(np.sum(u * x)),
                      gradient=lambda x: smooth.gradient(x) - u,
                      grad_lipschitz=smooth.grad_lipschitz, shape=smooth.shape,
                      lower=smooth.lower, upper=smooth.upper,
                      bounded_below=False, name=smooth.name + "-lin")


def dca_step2(problem, u_k, x_init, cfg=None):
    """Majorant step: minimize ``F1(x) - <u_k, x>``.

    The linear term is folded into the smooth part of ``F1``. Fidelities
    with an open domain use the backtracking solver; otherwise the constant
    step ``step_factor / L`` is used. Returns ``(x, iters)``.
    """
    cfg = cfg or DcConfig()
    u_k = np.asarray(u_k, dtype=float)
    if not np.all(np.isfinite(u_k)):
        raise ConfigurationError("u_k must be finite")
    smooth = _linear_shift(problem.f1_smooth, u_k)
    common = dict(eps=cfg.eps2, delta=cfg.delta2, max_iters=cfg.inner_max_iters,
                  on_fail=cfg.inner_on_fail, max_norm=DIVERGENCE_NORM)
    if smooth.has_open_domain:
        return prox_gradient_backtracking(smooth, problem.f1_prox, x_init,
                                          step0=cfg.step0, **common)
    lip = smooth.grad_lipschitz
    step = cfg.step_factor / lip if lip > 0 else 1.0
    return prox_gradient(smooth, problem.f1_prox, x_init, step, **common)


def dca_solve(problem, x0, z0=None, cfg=None):
    """Run the DC algorithm from ``(x0, z0)``.

    The solver does not check overall convexity; it records whether a
    certificate was attached to ``problem``. When the smoother vanishes
    the algorithm reduces to one step-2 solve (a plain convex problem).

    Parameters
    ----------
    problem : NrcCompactProblem
    x0 : ndarray
        Starting point, inside the domain of ``F1`` for open-domain fidelities.
    z0 : ndarray, optional
        Starting point of the first envelope solve (zeros by default).
    cfg : DcConfig, optional

    Returns
    -------
    x : ndarray
    trace : SolveTrace
        ``trace.costs[k]`` is ``J(x_k)`` evaluated with the step-1 envelope
        at ``x_k``.
    """
    cfg = cfg or DcConfig()
    t0 = time.perf_counter()
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("x0 must be finite")
    z_start = np.zeros((problem.Xi.shape[0],) + x.shape[1:]) if z0 is None \
        else np.array(z0, dtype=float)
    trace = SolveTrace(certificate_attached=problem.certificate is not None)

    st = dca_step1(problem, x, z_start, cfg)
    trace.z_first = st.z
    trace.record(problem.F1(x) - st.envelope, st.iters, 0, time.perf_counter() - t0)

    if problem.phi_is_zero:
        x, it2 = dca_step2(problem, st.u, x, cfg)
        st = dca_step1(problem, x, st.z, cfg)
        trace.record(problem.F1(x) - st.envelope, st.iters, it2, time.perf_counter() - t0)
        trace.x, trace.z, trace.reason = x, st.z, "zero_smoother"
        return x, trace

    reason = "max_outer_iters"
    for _ in range(cfg.outer_max_iters):
        x_init = x if cfg.warm_start else np.array(x0, dtype=float)
        x, it2 = dca_step2(problem, st.u, x_init, cfg)
        z_init = st.z if cfg.warm_start else np.zeros_like(st.z)
        st = dca_step1(problem, x, z_init, cfg)
        j_prev, j_new = trace.costs[-1], problem.F1(x) - st.envelope
        trace.record(j_new, st.iters, it2, time.perf_counter() - t0)
        if cfg.enforce_descent and j_new > j_prev + cfg.descent_tol * (1.0 + abs(j_prev)):
            trace.x, trace.z, trace.reason = x, st.z, "descent_violation"
            raise InvariantViolation(
                "cost increased from %.17g to %.17g at outer iteration %d"
                % (j_prev, j_new, trace.outer_iters))
        if np.isfinite(j_prev) and abs(j_new - j_prev) <= cfg.outer_tol * (1.0 + abs(j_prev)):
            reason = "stagnation"
            break
    trace.x, trace.z, trace.reason = x, st.z, reason
    return x, trace


def ista(A, y, lam, x0=None, eps=1e-3, delta=1e-10, max_iters=100000,
         on_fail="raise", step_factor=1.99):
    """Lasso ``0.5||y - Ax||^2 + lam ||x||_1`` by ISTA with step ``1.99/||A^T A||``.

    Returns ``(x, iters)``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not lam > 0:
        raise ConfigurationError("lambda must be positive")
    smooth = quadratic_fidelity(A, y)
    prox = scale_prox(l1_norm(), lam)
    x0 = np.zeros(A.shape[1]) if x0 is None else x0
    step = step_factor / smooth.grad_lipschitz if smooth.grad_lipschitz > 0 else 1.0
    return prox_gradient(smooth, prox, x0, step, eps=eps, delta=delta,
                         max_iters=max_iters, on_fail=on_fail)
