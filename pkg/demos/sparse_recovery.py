"""
Sparse recovery with a GMC-type penalty
=======================================

One compressed-sensing trial solved three ways: the lasso by ISTA, and the
DC algorithm with the quadratic and the logarithmic smoother. The DC runs
start from zero, so their first iterate is the lasso solution and the
remaining iterations remove the l1 shrinkage bias.
"""

import numpy as np

from psdc import DcConfig, dca_solve, ista
from psdc.bench import gen_sparse_trial, sparse_problem

trial = gen_sparse_trial(n=1000, m=200, S=20, snr_db=20.0, seed=0, index=0)
A, y, x_star = trial.A, trial.y, trial.x_star

# weights near the tuned values of the 50-trial sweep
lam_l1, lam_dc = 8.4, 16.3

x_l1, iters = ista(A, y, lam_l1)
print("lasso      SE %.4f  (%d ISTA iterations)" % (np.sum((x_l1 - x_star) ** 2), iters))

cfg = DcConfig(eps1=1e-6, eps2=1e-6)
for smoother in ("quad", "log"):
    prob = sparse_problem(A, y, lam_dc, rho=0.5, smoother=smoother)
    x, trace = dca_solve(prob, np.zeros(1000), cfg=cfg)
    J = np.array(trace.costs)
    print("%-5s      SE %.4f  (%d outer iterations, certificate %s)"
          % (smoother, np.sum((x - x_star) ** 2), trace.outer_iters,
             prob.certificate.verdict))
    # most of the decrease happens in the first two iterations
    print("           J_1 - J_final = %.4f, J_2 - J_final = %.4f"
          % (J[1] - J[-1], J[2] - J[-1]))

# support recovery: count entries above a small threshold
print("nonzeros: truth %d, lasso %d, dc %d"
      % (np.count_nonzero(x_star), np.sum(np.abs(x_l1) > 1e-3), np.sum(np.abs(x) > 1e-3)))
