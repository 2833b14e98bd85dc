"""
Checking overall convexity
==========================

A pSDC penalty is nonconvex, but the total cost can still be convex. The
checker reduces this to one matrix inequality and reports its smallest
eigenvalue together with a verdict.
"""

from psdc import check_convexity_quadratic, sparse_convexity_certificate
from psdc.bench import gen_sparse_trial

# sparse recovery with B = sqrt(rho / lam) A: the test matrix is (1 - rho) A^T A,
# whose smallest eigenvalue is 0 for m < n until rho passes 1
A = gen_sparse_trial(n=200, m=50, S=5, seed=0).A
for rho in (0.0, 0.5, 1.0, 1.01):
    c = sparse_convexity_certificate(A, lam=1.0, rho=rho)
    print("rho=%-5g min eig % .3e  tol %.1e  %s"
          % (rho, c.min_eigenvalue, c.tolerance, c.verdict))

# the condition is sufficient, not necessary: x^2/2 - (z^2 [] z^2)(x) is
# identically zero, hence convex, yet the checker refutes it
c = check_convexity_quadratic(A=[[1.0]], gamma=[1.0], Xi=[[1.0]], B=[[1.0]], kappa=[2.0])
print("1-D example:", c.verdict, "min eig", c.min_eigenvalue)
