"""First-order inner solvers shared by the envelope evaluation and the DC steps."""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (ConfigurationError, ConvergenceError, DivergenceError, DomainError,
                     NumericalError)


@dataclass(frozen=True)
class InnerConfig:
    """Stopping rule and step policy of a proximal-gradient inner loop.

    The loop stops at the first iterate with
    ``||x_{j+1} - x_j|| <= eps * (||x_j|| + delta)``.
    """

    eps: float = 1e-3
    delta: float = 1e-10
    max_iters: int = 100000
    step_factor: float = 1.99
    on_fail: str = "raise"

    def __post_init__(self):
        if not self.eps > 0 or self.delta < 0:
            raise ConfigurationError("need eps > 0 and delta >= 0")
        if self.max_iters < 0:
            raise ConfigurationError("max_iters must be nonnegative")
        if not 0 < self.step_factor < 2:
            raise ConfigurationError("step_factor must lie in (0, 2)")
        if self.on_fail not in ("raise", "warn"):
            raise ConfigurationError("on_fail must be 'raise' or 'warn'")


def _stopped(x_new, x, eps, delta):
    return np.linalg.norm(x_new - x) <= eps * (np.linalg.norm(x) + delta)


def _fail(msg, x, iters, on_fail):
    if on_fail == "warn":
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        return x, iters
    raise ConvergenceError(msg, last_iterate=x, iterations=iters)


def _guard(x, max_norm):
    if max_norm is not None and np.linalg.norm(x) > max_norm:
        raise DivergenceError("iterate norm exceeded %g; subproblem looks unbounded"
                              % max_norm)


def prox_gradient(smooth, prox, x0, step, eps=1e-3, delta=1e-10,
                  max_iters=100000, on_fail="raise", max_norm=None):
    """Forward-backward iteration ``x+ = prox(x - step * grad(x), step)``.

    Parameters
    ----------
    smooth : SmoothAtom
        Differentiable part.
    prox : ProxAtom
        Proximable part.
    x0 : ndarray
        Starting point.
    step : float
        Constant step size, at most ``1.99 / smooth.grad_lipschitz``.
    eps, delta : float
        Relative and absolute parts of the stopping rule.
    max_iters : int
        Iteration cap. With ``max_iters == 0`` the start point is returned.
    on_fail : {"raise", "warn"}
        What to do when the cap is hit before the stopping rule holds.
    max_norm : float, optional
        Raise :class:`DivergenceError` once an iterate is longer than this.

    Returns
    -------
    x : ndarray
    iters : int
    """
    lip = smooth.grad_lipschitz
    if not step > 0:
        raise ConfigurationError("step must be positive")
    if lip > 0 and step > 1.99 / lip * (1 + 1e-12):
        raise ConfigurationError(
            "step %.6g exceeds the safe bound 1.99/L = %.6g" % (step, 1.99 / lip))
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("x0 must be finite")
    for it in range(1, max_iters + 1):
        x_new = prox.prox(x - step * smooth.gradient(x), step)
        _guard(x_new, max_norm)
        if _stopped(x_new, x, eps, delta):
            return x_new, it
        x = x_new
    if max_iters == 0:
        return x, 0
    return _fail("proximal gradient hit max_iters=%d" % max_iters, x, max_iters, on_fail)


def prox_gradient_backtracking(smooth, prox, x0, eps=1e-3, delta=1e-10,
                               max_iters=100000, step0=1.0, on_fail="raise",
                               min_step=1e-18, max_norm=None):
    """Proximal gradient with step halving for smooth parts on an open domain.

    Each trial point must lie inside ``smooth``'s domain and satisfy the
    sufficient-decrease inequality

    ``f(x+) <= f(x) + <grad f(x), x+ - x> + ||x+ - x||^2 / (2 t)``,

    otherwise ``t`` is halved. The next iteration starts from ``2 t``
    (capped at ``step0``). The prox is expected to keep iterates inside the
    domain (e.g. a box whose lower edge is lifted above zero).
    """
    x = np.array(x0, dtype=float)
    if not smooth.in_domain(x):
        raise DomainError("x0 is not inside the smooth part's domain")
    t = step0
    fx = smooth.value(x)
    for it in range(1, max_iters + 1):
        g = smooth.gradient(x)
        while True:
            x_new = prox.prox(x - t * g, t)
            if smooth.in_domain(x_new):
                d = x_new - x
                f_new = smooth.value(x_new)
                # slack absorbs rounding in f once steps become tiny
                slack = 1e-14 * (1.0 + abs(fx))
                if f_new <= fx + np.sum(g * d) + np.sum(d * d) / (2.0 * t) + slack:
                    break
            t *= 0.5
            if t < min_step:
                raise NumericalError("backtracking step underflow (t < %g)" % min_step)
        _guard(x_new, max_norm)
        if _stopped(x_new, x, eps, delta):
            return x_new, it
        x, fx = x_new, f_new
        t = min(2.0 * t, step0)
    if max_iters == 0:
        return x, 0
    return _fail("backtracking proximal gradient hit max_iters=%d" % max_iters,
                 x, max_iters, on_fail)
