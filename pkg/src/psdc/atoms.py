"""Convex building blocks: proximable atoms and smooth atoms.

Every function appearing in the models is wrapped in one of two immutable
bundles:

* :class:`ProxAtom` -- a proper lsc convex function with a cheap (or at least
  computable) scaled proximity operator ``prox(x, gamma)``.
* :class:`SmoothAtom` -- a differentiable convex function with a gradient and
  an upper bound on the Lipschitz constant of that gradient.

Atoms act on numpy arrays of any fixed shape; matrix-valued variables (such
as the 128 x 4 signal block of the Poisson experiment) are handled without
flattening.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, DomainError, InvalidInputError
from .linalg import spectral_norm_sq

__all__ = [
    "ProxAtom", "SmoothAtom",
    "prox_l1", "prox_l21_rows", "project_box", "prox_capped_l1",
    "capped_l1_value", "l1_norm", "l21_rows", "box_indicator",
    "capped_l1_subtrahend", "indicator_point_prox", "squared_norm",
    "zero_prox", "analysis_group_norm", "scale_prox", "prox_sum",
    "quad_smoother", "log_smoother", "column_quad_smoother",
    "poisson_fidelity", "quadratic_fidelity", "zero_smooth", "scale_smooth",
    "numeric_gradient",
]


def _finite(x, what="input"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("non-finite components in %s" % what)
    return x


def _check_gamma(gamma):
    if not gamma > 0:
        raise InvalidInputError("prox scale must be positive, got %r" % gamma)


@dataclass(frozen=True)
class ProxAtom:
    """Proper lsc convex function with its scaled proximity operator.

    ``prox(x, gamma)`` returns ``argmin_z gamma*value(z) + 0.5*||z - x||^2``.
    ``shape`` may be ``None`` for atoms that accept any input shape.
    ``absorb`` optionally merges another atom into this one and returns an
    atom for the sum whose prox is computed jointly (or ``None``).
    """

    value: Callable
    prox: Callable
    shape: Optional[tuple] = None
    subgradient: Optional[Callable] = None
    bounded_below: bool = True
    is_zero: bool = False
    name: str = ""
    absorb: Optional[Callable] = None
    box_bounds: Optional[tuple] = None

    @property
    def dimension(self):
        return None if self.shape is None else int(np.prod(self.shape))


@dataclass(frozen=True)
class SmoothAtom:
    """Differentiable convex function with Lipschitz gradient bound.

    ``lower``/``upper`` describe the componentwise domain on which ``value``
    and ``gradient`` may be queried; ``None`` means unbounded.
    """

    value: Callable
    gradient: Callable
    grad_lipschitz: float
    shape: Optional[tuple] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    bounded_below: bool = True
    is_zero: bool = False
    name: str = ""

    @property
    def dimension(self):
        return None if self.shape is None else int(np.prod(self.shape))

    @property
    def has_open_domain(self):
        return self.lower is not None or self.upper is not None

    def in_domain(self, x):
        x = np.asarray(x)
        if self.lower is not None and np.any(x < self.lower):
            return False
        if self.upper is not None and np.any(x > self.upper):
            return False
        return True


# ---------------------------------------------------------------------------
# raw proximity operators

def prox_l1(x, gamma):
    """Soft thresholding, the prox of ``gamma * ||.||_1``."""
    _check_gamma(gamma)
    x = _finite(x)
    return np.sign(x) * np.maximum(np.abs(x) - gamma, 0.0)


def prox_l21_rows(Z, gamma):
    """Row-wise group shrinkage, the prox of ``gamma * sum_j ||Z[j, :]||_2``.

    A 1-D input is treated as a single row.
    """
    _check_gamma(gamma)
    Z = _finite(Z)
    Z2 = Z.reshape(1, -1) if Z.ndim == 1 else Z
    norms = np.linalg.norm(Z2, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > gamma, 1.0 - gamma / norms, 0.0)
    return (scale * Z2).reshape(Z.shape)


def project_box(X, lo, hi):
    """Componentwise clamp onto ``[lo, hi]``."""
    if not lo < hi:
        raise ConfigurationError("box needs lo < hi, got [%r, %r]" % (lo, hi))
    return np.clip(np.asarray(X, dtype=float), lo, hi)


def capped_l1_value(x):
    """``sum_i max(|x_i| - 1, 0)``."""
    return float(np.sum(np.maximum(np.abs(np.asarray(x, dtype=float)) - 1.0, 0.0)))


def prox_capped_l1(x, gamma):
    """Prox of ``gamma * sum_i max(|x_i| - 1, 0)``.

    Points inside ``[-1, 1]`` are fixed; outside, the magnitude shrinks by
    ``gamma`` but never below 1.
    """
    _check_gamma(gamma)
    x = _finite(x)
    ax = np.abs(x)
    return np.where(ax <= 1.0, x, np.sign(x) * np.maximum(ax - gamma, 1.0))


def _group_norm_rows(Z):
    """Row norms; a 1-D input is a single row, as in :func:`prox_l21_rows`."""
    Z2 = Z.reshape(Z.shape[0], -1) if Z.ndim > 1 else Z.reshape(1, -1)
    return np.linalg.norm(Z2, axis=1)


# ---------------------------------------------------------------------------
# ProxAtom constructors

def zero_prox(shape=None):
    return ProxAtom(value=lambda x: 0.0, prox=lambda x, g: np.array(x, dtype=float),
                    shape=shape, subgradient=lambda x: np.zeros_like(x, dtype=float),
                    is_zero=True, name="zero")


def l1_norm(shape=None):
    def subgradient(x):
        # sign(0) = 0 picks the least-norm element of [-1, 1]
        return np.sign(np.asarray(x, dtype=float))

    return ProxAtom(value=lambda x: float(np.sum(np.abs(x))), prox=prox_l1,
                    shape=shape, subgradient=subgradient, name="l1")


def l21_rows(shape=None):
    """``||Z^T||_{2,1}``: sum of Euclidean norms of the rows of ``Z``."""
    return ProxAtom(value=lambda Z: float(np.sum(_group_norm_rows(np.asarray(Z, dtype=float)))),
                    prox=prox_l21_rows, shape=shape, name="l21_rows")


def box_indicator(lo, hi, shape=None):
    if not lo < hi:
        raise ConfigurationError("box needs lo < hi, got [%r, %r]" % (lo, hi))

    def value(x):
        x = np.asarray(x)
        return 0.0 if np.all((x >= lo) & (x <= hi)) else np.inf

    return ProxAtom(value=value, prox=lambda x, g: project_box(x, lo, hi),
                    shape=shape, name="box[%g,%g]" % (lo, hi), box_bounds=(lo, hi))


def capped_l1_subtrahend(shape=None):
    return ProxAtom(value=capped_l1_value, prox=prox_capped_l1, shape=shape,
                    name="capped_l1_subtrahend")


def indicator_point_prox(c, shape=None, atol=1e-12):
    """Indicator of the single point whose components all equal ``c``."""

    def value(x):
        x = np.asarray(x, dtype=float)
        return 0.0 if np.all(np.abs(x - c) <= atol) else np.inf

    return ProxAtom(value=value,
                    prox=lambda x, g: np.full(np.shape(x), float(c)),
                    shape=shape, name="point[%g]" % c)


def squared_norm(weight=1.0, shape=None):
    """``weight * ||z||_2^2`` as a proximable atom."""
    if weight < 0:
        raise ConfigurationError("weight must be nonnegative")
    return ProxAtom(value=lambda z: weight * float(np.sum(np.square(z))),
                    prox=lambda x, g: np.asarray(x, dtype=float) / (1.0 + 2.0 * weight * g),
                    shape=shape, subgradient=lambda z: 2.0 * weight * np.asarray(z, dtype=float),
                    is_zero=weight == 0, name="sqnorm")


def scale_prox(atom, c):
    """The atom ``c * f`` for ``c > 0``."""
    if not c > 0:
        raise ConfigurationError("scale must be positive, got %r" % c)
    if c == 1.0 or atom.box_bounds is not None:
        return atom
    sub = None if atom.subgradient is None else (lambda x: c * atom.subgradient(x))
    absorb = None
    if atom.absorb is not None:
        def absorb(other):
            # c*f + box: the box prox ignores the scale, so the merged
            # atom's prox evaluated at scale c*gamma is the joint prox
            merged = atom.absorb(other) if other.box_bounds is not None else None
            if merged is None:
                return None
            return ProxAtom(value=lambda x: c * merged.value(x),
                            prox=lambda x, g: merged.prox(x, c * g),
                            shape=merged.shape, bounded_below=merged.bounded_below,
                            name="%g*%s" % (c, merged.name))
    return ProxAtom(value=lambda x: c * atom.value(x),
                    prox=lambda x, g: atom.prox(x, c * g), shape=atom.shape,
                    subgradient=sub, bounded_below=atom.bounded_below,
                    is_zero=atom.is_zero, name="%g*%s" % (c, atom.name),
                    absorb=absorb)


def analysis_group_norm(L, weights=None, box=None, shape=None, tol=1e-10,
                        max_iters=20000, check_every=10):
    """``sum_j w_j ||(L X)[j, :]||_2`` (+ optional box indicator).

    For vector inputs this is the weighted analysis l1 norm
    ``sum_j w_j |(L x)_j|``; for matrices it is the group (row-wise)
    l2,1 norm of ``L X``, i.e. group total variation when ``L`` is a
    difference operator.

    The prox has no closed form; it is computed by accelerated projected
    gradient on the dual (each dual row constrained to a ball of radius
    ``gamma * w_j``), with the primal recovered as
    ``clip(V - L^T P, lo, hi)``. The loop stops once the primal estimate
    moves by less than ``tol`` (relative) over ``check_every`` iterations.
    """
    L = np.asarray(L, dtype=float)
    q = L.shape[0]
    w = np.ones(q) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (q,) or np.any(w < 0):
        raise ConfigurationError("weights must be a nonnegative vector of length %d" % q)
    lip = spectral_norm_sq(L)
    lo, hi = (-np.inf, np.inf) if box is None else box
    if box is not None and not lo < hi:
        raise ConfigurationError("box needs lo < hi")

    def value(X):
        X = np.asarray(X, dtype=float)
        if box is not None and not np.all((X >= lo) & (X <= hi)):
            return np.inf
        LX = L @ X
        return float(np.sum(w * np.linalg.norm(LX.reshape(q, -1), axis=1)))

    def prox(V, gamma):
        _check_gamma(gamma)
        V = _finite(V)
        V2 = V.reshape(V.shape[0], -1)
        if lip == 0.0:
            return np.clip(V2, lo, hi).reshape(V.shape)
        radius = (gamma * w)[:, None]
        step = 1.0 / lip
        P = np.zeros((q, V2.shape[1]))
        Q = P
        t = 1.0
        X = np.clip(V2, lo, hi)
        for it in range(1, max_iters + 1):
            G = Q + step * (L @ np.clip(V2 - L.T @ Q, lo, hi))
            nrm = np.sqrt(np.einsum("ij,ij->i", G, G))[:, None]
            P_new = G * (radius / np.maximum(nrm, np.maximum(radius, 1e-300)))
            # gradient-based restart keeps the momentum from oscillating
            if np.vdot(Q - P_new, P_new - P) > 0:
                t = 1.0
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            Q = P_new + ((t - 1.0) / t_new) * (P_new - P)
            P, t = P_new, t_new
            if it % check_every == 0:
                X_new = np.clip(V2 - L.T @ P, lo, hi)
                done = np.linalg.norm(X_new - X) <= tol * (np.linalg.norm(X) + 1e-12)
                X = X_new
                if done:
                    break
        return np.clip(V2 - L.T @ P, lo, hi).reshape(V.shape)

    def absorb(other):
        if box is None and other.box_bounds is not None:
            return analysis_group_norm(L, w, box=other.box_bounds, shape=shape,
                                       tol=tol, max_iters=max_iters,
                                       check_every=check_every)
        return None

    name = "analysis_l21" if box is None else "analysis_l21+box"
    return ProxAtom(value=value, prox=prox, shape=shape, name=name,
                    absorb=absorb)


def prox_sum(atoms, tol=1e-10, max_iters=10000):
    """Atom for the sum of several prox atoms.

    Zero atoms are dropped and pairs that know how to merge (``absorb``)
    are merged. Remaining pairs are combined with the Dykstra-like proximal
    iteration, which converges to the prox of the sum.
    """
    atoms = [a for a in atoms if not a.is_zero]
    if not atoms:
        return zero_prox()
    merged = True
    while merged and len(atoms) > 1:
        merged = False
        for i in range(len(atoms)):
            for j in range(len(atoms)):
                if i != j and atoms[i].absorb is not None:
                    m = atoms[i].absorb(atoms[j])
                    if m is not None:
                        atoms = [a for k, a in enumerate(atoms) if k not in (i, j)] + [m]
                        merged = True
                        break
            if merged:
                break
    out = atoms[0]
    for a in atoms[1:]:
        out = _dykstra_pair(out, a, tol, max_iters)
    return out


def _dykstra_pair(f, g, tol, max_iters):
    def prox(r, gamma):
        x = np.array(r, dtype=float)
        p = np.zeros_like(x)
        q = np.zeros_like(x)
        for _ in range(max_iters):
            y = g.prox(x + p, gamma)
            p = x + p - y
            x_new = f.prox(y + q, gamma)
            q = y + q - x_new
            if np.linalg.norm(x_new - x) <= tol * (np.linalg.norm(x) + 1e-12):
                return x_new
            x = x_new
        return x

    return ProxAtom(value=lambda x: f.value(x) + g.value(x), prox=prox,
                    shape=f.shape if f.shape is not None else g.shape,
                    bounded_below=f.bounded_below and g.bounded_below,
                    name="%s+%s" % (f.name, g.name))


# ---------------------------------------------------------------------------
# SmoothAtom constructors

def zero_smooth(shape=None):
    return SmoothAtom(value=lambda z: 0.0, gradient=lambda z: np.zeros_like(z, dtype=float),
                      grad_lipschitz=0.0, shape=shape, is_zero=True, name="zero")


def quad_smoother(B):
    """``0.5 * ||B z||_2^2`` with gradient ``B^T B z``."""
    B = _finite(np.atleast_2d(B), "steering matrix")
    lip = spectral_norm_sq(B)

    def value(z):
        r = B @ z
        return 0.5 * float(np.sum(r * r))

    return SmoothAtom(value=value, gradient=lambda z: B.T @ (B @ z),
                      grad_lipschitz=lip, shape=(B.shape[1],),
                      is_zero=not np.any(B), name="quad")


def _eta(t):
    a = np.abs(t)
    return a - np.log1p(a)


def _eta_prime(t):
    a = np.abs(t)
    return np.sign(t) * a / (1.0 + a)


def log_smoother(B):
    """``sum_j eta(b_j^T z)`` with ``eta(t) = |t| - log(1 + |t|)``.

    ``eta'' <= 1`` so the gradient is ``||B||_2^2``-Lipschitz.
    """
    B = _finite(np.atleast_2d(B), "steering matrix")
    lip = spectral_norm_sq(B)
    return SmoothAtom(value=lambda z: float(np.sum(_eta(B @ z))),
                      gradient=lambda z: B.T @ _eta_prime(B @ z),
                      grad_lipschitz=lip, shape=(B.shape[1],),
                      is_zero=not np.any(B), name="log")


def column_quad_smoother(Bs):
    """``sum_i 0.5 * ||B_i Z[:, i]||^2`` for a matrix variable ``Z``."""
    Bs = [_finite(np.atleast_2d(B), "steering matrix") for B in Bs]
    q = Bs[0].shape[1]
    if any(B.shape[1] != q for B in Bs):
        raise ConfigurationError("all column steering matrices need %d columns" % q)
    lip = max(spectral_norm_sq(B) for B in Bs)

    def value(Z):
        return 0.5 * sum(float(np.sum((B @ Z[:, i]) ** 2)) for i, B in enumerate(Bs))

    def gradient(Z):
        G = np.empty_like(Z, dtype=float)
        for i, B in enumerate(Bs):
            G[:, i] = B.T @ (B @ Z[:, i])
        return G

    return SmoothAtom(value=value, gradient=gradient, grad_lipschitz=lip,
                      shape=(q, len(Bs)), is_zero=not any(np.any(B) for B in Bs),
                      name="column_quad")


def quadratic_fidelity(A, y):
    """``0.5 * ||y - A x||_2^2``."""
    A = _finite(np.atleast_2d(A), "A")
    y = _finite(y, "y")
    lip = spectral_norm_sq(A)

    def value(x):
        r = A @ x - y
        return 0.5 * float(np.sum(r * r))

    return SmoothAtom(value=value, gradient=lambda x: A.T @ (A @ x - y),
                      grad_lipschitz=lip, shape=(A.shape[1],) + y.shape[1:],
                      name="quad_fidelity")


def poisson_fidelity(Y, eps_dom=1e-8):
    """Poisson negative log-likelihood ``sum (x - y log x)`` (constants dropped).

    Only defined for ``x >= eps_dom > 0``; querying below the floor raises
    :class:`DomainError`. The reported Lipschitz bound ``max(y) / eps_dom**2``
    holds on that region.
    """
    Y = np.asarray(Y)
    if np.any(Y < 0) or np.any(Y != np.round(Y)):
        raise InvalidInputError("Poisson observations must be nonnegative integers")
    if not eps_dom > 0:
        raise ConfigurationError("eps_dom must be positive")
    Y = Y.astype(float)

    def _check(X):
        X = np.asarray(X, dtype=float)
        if X.shape != Y.shape:
            raise ConfigurationError("shape %s does not match observations %s"
                                     % (X.shape, Y.shape))
        if np.any(~(X >= eps_dom)):
            raise DomainError("Poisson fidelity evaluated below eps_dom=%g" % eps_dom)
        return X

    def value(X):
        X = _check(X)
        return float(np.sum(X - Y * np.log(X)))

    def gradient(X):
        X = _check(X)
        return 1.0 - Y / X

    return SmoothAtom(value=value, gradient=gradient,
                      grad_lipschitz=float(Y.max(initial=0.0)) / eps_dom ** 2,
                      shape=Y.shape, lower=eps_dom, bounded_below=True,
                      name="poisson")


def scale_smooth(atom, c):
    if c < 0:
        raise ConfigurationError("scale must be nonnegative")
    if c == 1.0:
        return atom
    return replace(atom, value=lambda x: c * atom.value(x),
                   gradient=lambda x: c * atom.gradient(x),
                   grad_lipschitz=c * atom.grad_lipschitz,
                   is_zero=atom.is_zero or c == 0, name="%g*%s" % (c, atom.name))


def numeric_gradient(f, x, h=None):
    """Central finite differences with step ``1e-6 * (1 + ||x||_inf)``."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-6 * (1.0 + np.max(np.abs(x), initial=0.0))
    g = np.empty_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        gf[i] = (f((flat + e).reshape(x.shape)) - f((flat - e).reshape(x.shape))) / (2 * h)
    return g
