"""Small dense linear-algebra helpers: spectral bounds, PSD tests, roots."""

import numpy as np

from .errors import ConfigurationError

#: multiplicative safety margin applied to power-iteration estimates
SPECTRAL_INFLATION = 1.001


def power_iteration(apply, dim, max_iters=200, rtol=1e-10, seed=0):
    """Largest eigenvalue of a symmetric PSD operator given as a callable.

    Parameters
    ----------
    apply : callable
        ``apply(v)`` returns the operator applied to the vector ``v``.
    dim : int
        Length of the vectors ``apply`` acts on.
    max_iters : int
        Iteration cap.
    rtol : float
        Stop once the eigenvalue estimate changes by less than ``rtol``
        relative to its current value.
    seed : int
        Seed of the (fixed) random start vector.

    Returns
    -------
    float
        The Rayleigh-quotient estimate (a lower bound of the true value).
    """
    v = np.random.default_rng(seed).standard_normal(dim)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iters):
        w = apply(v)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(nrm - est) <= rtol * nrm:
            est = nrm
            break
        est = nrm
    return float(est)


def spectral_norm_sq(B, inflate=True):
    """Upper estimate of ``||B||_2**2`` (= ``||B^T B||_2``) by power iteration.

    The estimate is inflated by :data:`SPECTRAL_INFLATION` so that step sizes
    derived from it stay on the safe side of the true Lipschitz constant.
    """
    B = np.asarray(B, dtype=float)
    if B.size == 0 or not np.any(B):
        return 0.0
    # iterate on the smaller Gram matrix; both share the nonzero spectrum
    if B.shape[0] < B.shape[1]:
        est = power_iteration(lambda v: B @ (B.T @ v), B.shape[0])
    else:
        est = power_iteration(lambda v: B.T @ (B @ v), B.shape[1])
    return est * SPECTRAL_INFLATION if inflate else est


def default_eig_tol(S):
    """Scale-relative tolerance ``1e-9 * (1 + ||S||_F)`` for PSD verdicts."""
    return 1e-9 * (1.0 + np.linalg.norm(S, "fro"))


def min_eigenvalue(S):
    return float(np.linalg.eigvalsh(S)[0])


def psd_sqrt(V, tol=None):
    """Symmetric square root of a matrix that is PSD up to rounding.

    Eigenvalues in ``[-tol, 0)`` are clipped to zero; anything more negative
    is a configuration error.
    """
    V = np.asarray(V, dtype=float)
    V = 0.5 * (V + V.T)
    if tol is None:
        tol = default_eig_tol(V)
    w, Q = np.linalg.eigh(V)
    if w[0] < -tol:
        raise ConfigurationError(
            "matrix is not positive semidefinite (min eigenvalue %.3e < -%.3e)"
            % (w[0], tol))
    w = np.clip(w, 0.0, None)
    return (Q * np.sqrt(w)) @ Q.T
