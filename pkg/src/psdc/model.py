"""pSDC regularizers, the compact NRC problem and overall-convexity certificates.

A pSDC regularizer is ``psi1(x) - (psi2 [] phi)(M x)`` where ``[]`` is the
infimal convolution. Several of them, a data fidelity ``F0`` and a convex
constraint are gathered into the compact cost

    J(x) = F1(x) - (F2 [] Phi)(Xi x)

with ``F1 = F0 + sum_i lam_i psi1_i + indicator(C0)``,
``F2(z) = sum_i lam_i psi2_i(z_i)``, ``Phi(z) = sum_i lam_i phi_i(z_i)`` and
``Xi`` the vertical stack of the analysis matrices ``M_i``.
"""

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .atoms import ProxAtom, SmoothAtom, prox_sum, scale_prox, scale_smooth, zero_smooth
from .errors import ConfigurationError, DesignFailure, DomainError, InternalError
from .inner import InnerConfig, prox_gradient
from .linalg import default_eig_tol, psd_sqrt

__all__ = [
    "PsdcRegularizer", "NrcCompactProblem", "ConvexityCertificate",
    "assemble_compact", "envelope_value", "solve_envelope",
    "regularizer_value", "cost_value", "check_convexity_quadratic",
    "certify_matrix", "sparse_convexity_certificate", "steering_matrix_sparse",
    "design_steering_matrix",
]


@dataclass(frozen=True)
class PsdcRegularizer:
    """``psi1(x) - (psi2 [] phi)(M x)``."""

    psi1: ProxAtom
    psi2: ProxAtom
    phi: SmoothAtom
    M: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        object.__setattr__(self, "M", M)
        q = M.shape[0]
        for atom in (self.psi2, self.phi):
            if atom.shape is not None and atom.shape[0] != q:
                raise ConfigurationError(
                    "%s expects leading dimension %d but M has %d rows"
                    % (atom.name or "atom", atom.shape[0], q))
        if self.psi1.shape is not None and self.psi1.shape[0] != M.shape[1]:
            raise ConfigurationError("psi1 lives on R^%d but M has %d columns"
                                     % (self.psi1.shape[0], M.shape[1]))

    @property
    def q(self):
        return self.M.shape[0]

    @property
    def n(self):
        return self.M.shape[1]


@dataclass(frozen=True)
class ConvexityCertificate:
    min_eigenvalue: float
    tolerance: float
    verdict: str
    effective_theta: Optional[float] = None

    @property
    def certified(self):
        return self.verdict == "certified"


@dataclass(frozen=True)
class NrcCompactProblem:
    """Compact form of an NRC model; build it with :func:`assemble_compact`."""

    F0: object
    reg_list: tuple
    constraint: Optional[ProxAtom]
    f1_smooth: SmoothAtom
    f1_prox: ProxAtom
    f2_blocks: tuple
    phi_blocks: tuple
    Xi: np.ndarray
    block_layout: tuple
    x_shape: tuple
    certificate: Optional[ConvexityCertificate] = field(default=None, compare=False)

    @property
    def phi_is_zero(self):
        return all(p.is_zero for p in self.phi_blocks)

    def split(self, z):
        """Split a stacked ``z`` into per-regularizer blocks (along axis 0)."""
        cuts = np.cumsum(self.block_layout)[:-1]
        return np.split(np.asarray(z, dtype=float), cuts, axis=0)

    def F1(self, x):
        x = np.asarray(x, dtype=float)
        try:
            v = self.f1_smooth.value(x) if not self.f1_smooth.is_zero else 0.0
        except DomainError:
            return np.inf
        return v + self.f1_prox.value(x)

    def F2(self, z):
        return sum(f.value(zi) for f, zi in zip(self.f2_blocks, self.split(z)))

    def Phi(self, z):
        return sum(p.value(zi) for p, zi in zip(self.phi_blocks, self.split(z)))

    def Phi_gradient(self, z):
        return np.concatenate([p.gradient(zi) for p, zi in zip(self.phi_blocks, self.split(z))],
                              axis=0)

    def with_certificate(self, cert):
        return replace(self, certificate=cert)


def assemble_compact(F0, reg_list, constraint=None):
    """Gather a fidelity, weighted pSDC regularizers and a constraint.

    Parameters
    ----------
    F0 : SmoothAtom or ProxAtom
        Convex data fidelity.
    reg_list : sequence of (float, PsdcRegularizer)
        Positive weights and their regularizers.
    constraint : ProxAtom, optional
        Indicator of the feasible set ``C0``.

    Returns
    -------
    NrcCompactProblem
    """
    reg_list = tuple((float(lam), reg) for lam, reg in reg_list)
    if not reg_list:
        raise ConfigurationError("at least one regularizer is required")
    for lam, _ in reg_list:
        if not lam > 0:
            raise ConfigurationError("regularization weights must be positive, got %r" % lam)
    n = reg_list[0][1].n
    for _, reg in reg_list:
        if reg.n != n:
            raise ConfigurationError("analysis matrices disagree on the signal dimension")
    if F0 is not None and F0.shape is not None:
        if F0.shape[0] != n:
            raise ConfigurationError("F0 lives on leading dimension %d, regularizers on %d"
                                     % (F0.shape[0], n))
        x_shape = tuple(F0.shape)
    else:
        x_shape = (n,)

    prox_parts = [scale_prox(reg.psi1, lam) for lam, reg in reg_list]
    if isinstance(F0, SmoothAtom):
        f1_smooth = F0
    else:
        f1_smooth = zero_smooth(x_shape)
        if F0 is not None:
            prox_parts.insert(0, F0)
    if constraint is not None:
        prox_parts.append(constraint)
    f1_prox = prox_sum(prox_parts)

    f2_blocks = tuple(scale_prox(reg.psi2, lam) if not reg.psi2.is_zero else reg.psi2
                      for lam, reg in reg_list)
    phi_blocks = tuple(scale_smooth(reg.phi, lam) for lam, reg in reg_list)
    Xi = np.vstack([reg.M for _, reg in reg_list])
    layout = tuple(reg.q for _, reg in reg_list)
    return NrcCompactProblem(F0=F0, reg_list=reg_list, constraint=constraint,
                             f1_smooth=f1_smooth, f1_prox=f1_prox,
                             f2_blocks=f2_blocks, phi_blocks=phi_blocks, Xi=Xi,
                             block_layout=layout, x_shape=x_shape)


# ---------------------------------------------------------------------------
# infimal convolution

def _shifted(phi, s):
    """``z -> phi(s - z)`` as a smooth atom."""
    return SmoothAtom(value=lambda z: phi.value(s - z),
                      gradient=lambda z: -phi.gradient(s - z),
                      grad_lipschitz=phi.grad_lipschitz, shape=phi.shape,
                      is_zero=phi.is_zero)


def solve_envelope(psi2, phi, s, inner_cfg=None, z_init=None):
    """Minimize ``psi2(z) + phi(s - z)`` by proximal gradient.

    Returns ``(value, z, iterations)``. The step is
    ``step_factor / grad_lipschitz(phi)``; a zero smoother turns the loop
    into a proximal-point iteration with unit step.
    """
    cfg = inner_cfg or InnerConfig()
    s = np.asarray(s, dtype=float)
    if not (psi2.bounded_below and phi.bounded_below):
        warnings.warn("envelope finiteness is not guaranteed: an atom is not "
                      "flagged bounded below", RuntimeWarning, stacklevel=2)
    if psi2.is_zero and phi.is_zero:
        return 0.0, np.zeros_like(s), 0
    z0 = np.zeros_like(s) if z_init is None else np.asarray(z_init, dtype=float)
    lip = phi.grad_lipschitz
    step = cfg.step_factor / lip if lip > 0 else 1.0
    z, iters = prox_gradient(_shifted(phi, s), psi2, z0, step, eps=cfg.eps,
                             delta=cfg.delta, max_iters=cfg.max_iters,
                             on_fail=cfg.on_fail)
    return psi2.value(z) + phi.value(s - z), z, iters


def envelope_value(psi2, phi, s, inner_cfg=None, z_init=None):
    """``(psi2 [] phi)(s)`` and a point ``z_s`` attaining it (to tolerance)."""
    value, z, _ = solve_envelope(psi2, phi, s, inner_cfg, z_init)
    return value, z


def regularizer_value(reg, x, inner_cfg=None):
    x = np.asarray(x, dtype=float)
    value, _ = envelope_value(reg.psi2, reg.phi, reg.M @ x, inner_cfg)
    return reg.psi1.value(x) - value


def cost_value(problem, x, inner_cfg=None):
    """``J(x) = F1(x) - (F2 [] Phi)(Xi x)``; ``+inf`` outside the domain."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("x must be finite")
    f1 = problem.F1(x)
    if np.isinf(f1):
        return np.inf
    env = 0.0
    for f2, phi, s in zip(problem.f2_blocks, problem.phi_blocks,
                          problem.split(problem.Xi @ x)):
        env += envelope_value(f2, phi, s, inner_cfg)[0]
    return f1 - env


# ---------------------------------------------------------------------------
# overall-convexity certificates

def certify_matrix(S, tol=None, effective_theta=None):
    """Certificate for ``S >= 0`` from the smallest eigenvalue of ``S``."""
    S = np.asarray(S, dtype=float)
    asym = np.linalg.norm(S - S.T)
    if asym > 1e-10 * max(np.linalg.norm(S), 1e-300):
        raise InternalError("curvature matrix is not symmetric (defect %.3e)" % asym)
    S = 0.5 * (S + S.T)
    if tol is None:
        tol = default_eig_tol(S)
    lam_min = float(np.linalg.eigvalsh(S)[0]) if S.size else 0.0
    verdict = "certified" if lam_min >= -tol else "refuted"
    return ConvexityCertificate(lam_min, float(tol), verdict, effective_theta)


def check_convexity_quadratic(A, gamma, Xi, B, kappa, tol=None):
    """Matrix test ``A^T diag(gamma) A - Xi^T B^T diag(kappa) B Xi >= 0``.

    ``gamma`` lower-bounds the curvatures of the smooth part of ``F1`` along
    the rows of ``A``; ``kappa`` upper-bounds the curvatures of the smoother
    ``Phi`` along the rows of ``B``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Xi = np.atleast_2d(np.asarray(Xi, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    m, n = A.shape
    p, q = B.shape
    if gamma.shape != (m,) or kappa.shape != (p,) or Xi.shape != (q, n):
        raise ConfigurationError(
            "inconsistent dimensions: A %s, gamma %s, Xi %s, B %s, kappa %s"
            % (A.shape, gamma.shape, Xi.shape, B.shape, kappa.shape))
    if np.any(gamma < 0) or np.any(kappa < 0):
        raise ConfigurationError("curvature bounds gamma and kappa must be nonnegative")
    BXi = B @ Xi
    P = A.T @ (gamma[:, None] * A)
    Q = BXi.T @ (kappa[:, None] * BXi)
    # symmetrize the terms: their difference may cancel down to roundoff
    S = 0.5 * (P + P.T) - 0.5 * (Q + Q.T)
    return certify_matrix(S, tol)


def steering_matrix_sparse(A, lam, rho):
    """``B = sqrt(rho / lam) * A`` for the sparse-recovery model."""
    if not lam > 0:
        raise ConfigurationError("lambda must be positive")
    if not 0.0 <= rho <= 1.0:
        raise ConfigurationError("rho must lie in [0, 1], got %r" % rho)
    return np.sqrt(rho / lam) * np.asarray(A, dtype=float)


def sparse_convexity_certificate(A, lam, rho, tol=None):
    """Certify ``0.5||y - Ax||^2 + lam * Psi`` with ``B = sqrt(rho/lam) A``.

    Both the quadratic and the log smoother have unit curvature bound, so
    after scaling by ``lam`` the curvature bounds are ``kappa = lam``.
    Unlike :func:`steering_matrix_sparse` this accepts any ``rho >= 0`` so
    that out-of-range choices can be refuted.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not lam > 0 or rho < 0:
        raise ConfigurationError("need lambda > 0 and rho >= 0")
    B = np.sqrt(rho / lam) * A
    m, n = A.shape
    return check_convexity_quadratic(A, np.ones(m), np.eye(n), B, np.full(m, lam), tol)


def _nullspace(Xi, rtol=1e-12):
    _, sv, Vt = np.linalg.svd(Xi)
    rank = int(np.sum(sv > rtol * (sv[0] if sv.size else 0.0)))
    return Vt[rank:].T


def design_steering_matrix(V, Xi, lam, theta, tol=None, reduce_nullspace=True,
                           max_halvings=50):
    """Steering matrix ``B`` with ``V - lam Xi^T B^T B Xi >= 0``.

    ``B = sqrt(theta_eff / lam) * W^{1/2} pinv(Xi)``, where ``W`` is ``V``
    (or, with ``reduce_nullspace``, the Schur complement of ``V`` that
    annihilates the null space of ``Xi``, the largest PSD matrix below ``V``
    vanishing there). ``theta_eff`` starts at ``theta`` and is halved until
    the certificate holds.

    Returns
    -------
    B : ndarray, shape (n, q)
    certificate : ConvexityCertificate
    """
    V = np.asarray(V, dtype=float)
    Xi = np.atleast_2d(np.asarray(Xi, dtype=float))
    if not lam > 0:
        raise ConfigurationError("lambda must be positive")
    if not 0.0 <= theta <= 1.0:
        raise ConfigurationError("theta must lie in [0, 1], got %r" % theta)
    n = V.shape[0]
    if V.shape != (n, n) or Xi.shape[1] != n:
        raise ConfigurationError("V must be n x n and Xi must have n columns")
    if np.linalg.norm(V - V.T) > 1e-10 * max(np.linalg.norm(V), 1e-300):
        raise ConfigurationError("V must be symmetric")
    V = 0.5 * (V + V.T)
    R_full = psd_sqrt(V)  # raises ConfigurationError when V is not PSD

    W = V
    if reduce_nullspace:
        N = _nullspace(Xi)
        if N.shape[1]:
            VN = V @ N
            W = V - VN @ np.linalg.pinv(N.T @ VN) @ VN.T
            W = 0.5 * (W + W.T)
    R = psd_sqrt(W, tol=default_eig_tol(V)) if reduce_nullspace else R_full
    base = R @ np.linalg.pinv(Xi)

    def certificate(th):
        B = np.sqrt(th / lam) * base
        BXi = B @ Xi
        S = V - lam * (BXi.T @ BXi)
        return B, certify_matrix(S, tol, effective_theta=th)

    th = float(theta)
    for _ in range(max_halvings + 1):
        B, cert = certificate(th)
        if cert.certified:
            return B, cert
        th *= 0.5
    raise DesignFailure("no certified steering matrix (min eigenvalue %.3e)"
                        % cert.min_eigenvalue)
