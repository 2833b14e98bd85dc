"""Acceptance criteria 1-9.

Each test prints one ``criterion N: PASS|FAIL`` line; the lines are also
repeated in the terminal summary.
"""

import time

import numpy as np
import pytest

from psdc import (DcConfig, InnerConfig, PsdcRegularizer, assemble_compact,
                  check_convexity_quadratic, cost_value, dca_solve, envelope_value, ista,
                  sparse_convexity_certificate)
from psdc.atoms import (SmoothAtom, analysis_group_norm, box_indicator, capped_l1_subtrahend,
                        indicator_point_prox, l1_norm, l21_rows, log_smoother,
                        poisson_fidelity, quad_smoother, quadratic_fidelity, squared_norm,
                        zero_prox)
from psdc.bench import (PoissonConfig, SparseSweepConfig, gen_sparse_trial,
                        run_poisson_experiment, run_sparse_sweep, sparse_problem)

from conftest import central_grad, gmc_instance, group_shrink_oracle, record, rel_err, \
    scalar_argmin

pytestmark = pytest.mark.acceptance

TIGHT = InnerConfig(eps=1e-13, delta=1e-14, max_iters=10**6)
# Descent and optimality are statements about exact inner solves. The
# default eps = 1e-3 leaves visible inner error, so criteria 3, 4
# and 6 run at 1e-6 and report the default-tolerance figure alongside.
ACCURATE = DcConfig(eps1=1e-6, eps2=1e-6)


def _verdict(capsys, n, ok, detail):
    line = "criterion %d: %s  %s" % (n, "PASS" if ok else "FAIL", detail)
    record(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def _lasso(A, y, lam, x):
    return 0.5 * float(np.sum((y - A @ x) ** 2)) + lam * float(np.sum(np.abs(x)))


# --- 1 ------------------------------------------------------------------------------

def test_criterion_1_certification(capsys):
    t0 = time.perf_counter()
    A = gen_sparse_trial(n=200, m=50, S=5, seed=0).A
    lam = 0.7
    dense = np.linalg.eigvalsh(A.T @ A)[0]
    ok, worst = True, 0.0
    for rho in (0.0, 0.25, 0.5, 0.75, 1.0):
        c = sparse_convexity_certificate(A, lam, rho)
        ref = (1 - rho) * dense if rho < 1 else 0.0
        worst = max(worst, abs(c.min_eigenvalue - ref))
        ok &= c.certified and abs(c.min_eigenvalue - ref) <= 1e-8
    bad = sparse_convexity_certificate(A, lam, 1.01)
    ok &= not bad.certified
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 5
    _verdict(capsys, 1, ok, "max eig error %.2e, rho=1.01 %s, %.2f s"
             % (worst, bad.verdict, elapsed))


# --- 2 ------------------------------------------------------------------------------

def test_criterion_2_sufficiency_not_necessity(capsys, rng):
    cert = check_convexity_quadratic([[1.0]], [1.0], [[1.0]], [[1.0]], [2.0])
    F0 = quadratic_fidelity(np.eye(1), np.zeros(1))
    phi = SmoothAtom(value=lambda z: float(z @ z), gradient=lambda z: 2 * z,
                     grad_lipschitz=2.0, shape=(1,))
    reg = PsdcRegularizer(zero_prox(), squared_norm(1.0, (1,)), phi, np.eye(1))
    prob = assemble_compact(F0, [(1.0, reg)])
    pts = rng.uniform(-5, 5, 10)
    worst = max(abs(cost_value(prob, np.array([x]), TIGHT)) for x in pts)
    _verdict(capsys, 2, (not cert.certified) and worst <= 1e-8,
             "checker %s (min eig %.3g), max |J| on 10 points %.1e"
             % (cert.verdict, cert.min_eigenvalue, worst))


# --- 3 ------------------------------------------------------------------------------

def _descent_failures(cfg):
    runs, bad = 0, []
    for seed in range(50):
        t = gen_sparse_trial(n=200, m=60, S=6, seed=seed)
        lam = 0.1 * float(np.max(np.abs(t.A.T @ t.y)))
        smoother = "quad" if seed % 2 == 0 else "log"
        rho = (0.5, 0.75, 1.0)[seed % 3]
        prob = sparse_problem(t.A, t.y, lam, rho, smoother)
        assert prob.certificate.certified
        _, tr = dca_solve(prob, np.zeros(200), cfg=cfg)
        runs += 1
        J = tr.costs
        for k in range(1, len(J) - 1):
            if J[k + 1] > J[k] + 1e-9 * (1 + abs(J[k])):
                bad.append((seed, k, J[k + 1] - J[k]))
    return runs, bad


def test_criterion_3_monotone_descent(capsys):
    runs, bad = _descent_failures(ACCURATE)
    _, loose = _descent_failures(DcConfig())
    _verdict(capsys, 3, runs >= 50 and not bad,
             "%d certified runs at inner eps 1e-6, %d increases %s; at eps 1e-3: %d increases"
             % (runs, len(bad), bad[:3], len(loose)))


# --- 4 ------------------------------------------------------------------------------

def _soft(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _convex_oracle(instances, iters=100000):
    """Batched proximal gradient on ``J = f + lam||.||_1``, all instances at once.

    The smooth part ``0.5||y - Ax||^2 - lam * env_B(x)`` is convex for a
    certified instance and its gradient is
    ``A^T(Ax - y) - lam B^T B (x - v(x))`` with ``v(x)`` the minimizer of
    ``||v||_1 + 0.5||B(x - v)||^2``, found by warm-started ISTA.
    """
    A = np.stack([a for a, _, _, _ in instances])
    y = np.stack([b for _, b, _, _ in instances])
    lam = np.array([l for _, _, l, _ in instances])[:, None]
    rho = np.array([r for _, _, _, r in instances])[:, None, None]
    AtA = np.einsum("kmi,kmj->kij", A, A)
    Aty = np.einsum("kmi,km->ki", A, y)
    BtB = AtA * rho / lam[:, :, None]
    step = 1.0 / np.linalg.eigvalsh(AtA)[:, -1:]
    tin = 1.0 / np.linalg.eigvalsh(BtB)[:, -1:]
    x = np.zeros_like(Aty)
    v = np.zeros_like(Aty)
    mv = lambda M, z: np.einsum("kij,kj->ki", M, z)
    for _ in range(iters):
        for _ in range(100000):
            v_new = _soft(v - tin * mv(BtB, v - x), tin)
            done = np.max(np.abs(v_new - v)) <= 1e-15 * (1 + np.max(np.abs(v)))
            v = v_new
            if done:
                break
        grad = mv(AtA, x) - Aty - lam * mv(BtB, x - v)
        x = _soft(x - step * grad, step * lam)
    return x


def test_criterion_4_global_optimality(capsys):
    instances = [gmc_instance(seed) for seed in range(20)]
    t0 = time.perf_counter()
    ours = {"1e-6": [], "1e-3": []}
    for A, y, lam, rho in instances:
        prob = sparse_problem(A, y, lam, rho)
        assert prob.certificate.certified
        for key, cfg in (("1e-6", ACCURATE), ("1e-3", DcConfig())):
            x, _ = dca_solve(prob, np.zeros(A.shape[1]), cfg=cfg)
            ours[key].append((prob, x))
    elapsed = time.perf_counter() - t0
    X = _convex_oracle(instances)
    worst = {}
    for key, runs in ours.items():
        gaps = []
        for (prob, x), xo in zip(runs, X):
            jo, j = cost_value(prob, xo, TIGHT), cost_value(prob, x, TIGHT)
            gaps.append((j - jo) / abs(jo))
        worst[key] = max(gaps)
    _verdict(capsys, 4, worst["1e-6"] <= 1e-4 and elapsed < 120,
             "worst relative gap %.2e at inner eps 1e-6 (%.2e at 1e-3) over 20 instances, "
             "dca time %.1f s" % (worst["1e-6"], worst["1e-3"], elapsed))


# --- 5 ------------------------------------------------------------------------------

def test_criterion_5_baseline_collapse(capsys):
    worst = 0.0
    for seed in range(10):
        t = gen_sparse_trial(n=200, m=60, S=6, seed=100 + seed)
        lam = 0.1 * float(np.max(np.abs(t.A.T @ t.y)))
        _, tr = dca_solve(sparse_problem(t.A, t.y, lam, 0.0), np.zeros(200))
        ref, _ = ista(t.A, t.y, lam)
        jr = _lasso(t.A, t.y, lam, ref)
        worst = max(worst, abs(tr.costs[-1] - jr) / abs(jr))
    _verdict(capsys, 5, worst <= 1e-6, "worst relative difference %.2e" % worst)


# --- shared sparse sweep (criteria 6 and 7) -----------------------------------------

@pytest.fixture(scope="module")
def sparse_sweep():
    t0 = time.perf_counter()
    res = run_sparse_sweep(SparseSweepConfig(n=1000, m=200, S=20, snr_db=20.0, trials=50,
                                             smoothers=("quad", "log"), rhos=(0.5,), seed=0))
    return res, time.perf_counter() - t0


def test_criterion_6_two_iterations(capsys, sparse_sweep):
    res, _ = sparse_sweep
    lam = res.best("quad", 0.5)["lambda"]
    worst, z_zero, gaps = 0.0, True, []
    for i in range(50):
        t = gen_sparse_trial(seed=0, index=i)
        prob = sparse_problem(t.A, t.y, lam, 0.5)
        _, tr = dca_solve(prob, np.zeros(1000), cfg=ACCURATE)
        z_zero &= bool(np.all(tr.z_first == 0))
        gaps.append((tr.costs[2] - tr.costs[-1]) / abs(tr.costs[-1]))
        if i < 5:
            # the first iterate is the lasso solution
            x1, _ = dca_solve(prob, np.zeros(1000), cfg=DcConfig(outer_max_iters=1))
            ref, _ = ista(t.A, t.y, lam, eps=1e-10, delta=1e-14)
            jr = _lasso(t.A, t.y, lam, ref)
            worst = max(worst, (_lasso(t.A, t.y, lam, x1) - jr) / abs(jr))
    within = int(np.sum(np.array(gaps) <= 0.01))
    loose = [g["gap"] for g in res.extras["two_iteration"]["gaps"]
             if g["smoother"] == "quad" and g["lambda"] == lam]
    ok = z_zero and worst <= 1e-3 and within >= 45
    _verdict(capsys, 6, ok,
             "z0=0 %s, J_1 vs l1 optimum %.1e, within 1%% after two iterations: %d/50 at "
             "inner eps 1e-6 (%d/%d at 1e-3), lambda %.4g"
             % (z_zero, worst, within, sum(g <= 0.01 for g in loose), len(loose), lam))


# --- 7 ------------------------------------------------------------------------------

def test_criterion_7_mse_gain(capsys, sparse_sweep):
    res, elapsed = sparse_sweep
    l1 = res.best("l1")["mse_db"]
    quad = res.best("quad", 0.5)["mse_db"]
    log = res.best("log", 0.5)["mse_db"]
    ok = l1 - quad >= 2 and l1 - log >= 2 and elapsed < 1800
    _verdict(capsys, 7, ok, "gain quad %.2f dB, log %.2f dB over l1, sweep %.0f s"
             % (l1 - quad, l1 - log, elapsed))


# --- 8 ------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def poisson_run():
    t0 = time.perf_counter()
    res = run_poisson_experiment(PoissonConfig(seed=0))
    return res, time.perf_counter() - t0


def test_criterion_8_poisson(capsys, poisson_run):
    res, elapsed = poisson_run
    details = res.extras["cells"]
    min_eig = min(d["min_eigenvalue"] for d in details if d["theta"] in (0.25, 0.5, 0.75))
    designed = {d["theta"] for d in details}
    tv = res.best("group_tv")
    ps = res.best("psdc_quad")
    ok = (designed >= {0.25, 0.5, 0.75} and min_eig >= -1e-8
          and ps["mse"] <= tv["mse"] and elapsed < 600)
    _verdict(capsys, 8, ok,
             "min eig %.2e, SE pSDC %.1f (theta %g, lambda %g) vs group TV %.1f "
             "(lambda %g), %.0f s" % (min_eig, ps["mse"], ps["rho_or_theta"], ps["lambda"],
                                      tv["mse"], tv["lambda"], elapsed))


def test_poisson_fewer_change_points(poisson_run):
    res, _ = poisson_run
    cps = {(d["theta"], d["lambda"]): d["change_points"] for d in res.extras["cells"]}
    tv = res.best("group_tv")
    ps = res.best("psdc_quad")
    assert cps[(ps["rho_or_theta"], ps["lambda"])] <= cps[(0.0, tv["lambda"])]


# --- 9 ------------------------------------------------------------------------------

def _prox_errors(rng):
    """Worst deviation of every prox from a brute-force 1-D or row-wise oracle."""
    errs = {}
    gamma = 0.7
    x = rng.standard_normal(6) * 2
    scalar = {
        "l1": (l1_norm(), lambda z: np.abs(z)),
        "capped_l1": (capped_l1_subtrahend(), lambda z: np.maximum(np.abs(z) - 1, 0)),
        "squared_norm": (squared_norm(0.8), lambda z: 0.8 * z**2),
        "box": (box_indicator(-1.0, 1.5), lambda z: np.where((z >= -1) & (z <= 1.5), 0, 1e300)),
    }
    for name, (atom, f) in scalar.items():
        out = atom.prox(x, gamma)
        ref = [scalar_argmin(lambda z, v=v: gamma * f(z) + 0.5 * (z - v) ** 2, -8, 8)
               for v in x]
        errs[name] = float(np.max(np.abs(out - ref)))
    point = indicator_point_prox(0.5).prox(x, gamma)
    errs["point"] = float(np.max(np.abs(point - 0.5)))
    Z = rng.standard_normal((5, 3)) * 2
    out = l21_rows().prox(Z, gamma)
    ref = np.array([group_shrink_oracle(r, gamma) for r in Z])
    errs["l21_rows"] = float(np.max(np.abs(out - ref)))
    # analysis norm with L = I reduces to the row-wise oracle
    out = analysis_group_norm(np.eye(5), shape=(5, 3), tol=1e-14).prox(Z, gamma)
    errs["analysis_group_norm"] = float(np.max(np.abs(out - ref)))
    return errs


def _grad_errors(rng):
    B = rng.standard_normal((6, 4))
    A = rng.standard_normal((5, 4))
    Y = rng.poisson(6.0, size=(6, 2))
    cases = {
        "quad_smoother": (quad_smoother(B), rng.standard_normal(4)),
        "log_smoother": (log_smoother(B), rng.standard_normal(4) * 2),
        "quadratic_fidelity": (quadratic_fidelity(A, rng.standard_normal(5)),
                               rng.standard_normal(4)),
        "poisson_fidelity": (poisson_fidelity(Y), rng.uniform(1, 20, size=(6, 2))),
    }
    return {k: rel_err(f.gradient(x), central_grad(f.value, x)) for k, (f, x) in cases.items()}


def _envelope_errors(rng):
    errs = {}
    # BI row: point indicator at c with alpha ||.||^2 gives alpha ||s - c||^2
    alpha, c = 0.8, 0.5
    phi = SmoothAtom(value=lambda z: alpha * float(z @ z), gradient=lambda z: 2 * alpha * z,
                     grad_lipschitz=2 * alpha)
    s = rng.standard_normal(3)
    v, _ = envelope_value(indicator_point_prox(c), phi, s)
    errs["bi_identity"] = abs(v - alpha * np.sum((s - c) ** 2))
    # 1-D: |.| and capped l1 against a grid
    zs = np.arange(-6, 6 + 1e-12, 1e-4)
    worst = 0.0
    for s1 in (-2.3, 0.4, 1.7):
        for atom, f in ((l1_norm(), np.abs), (capped_l1_subtrahend(),
                                               lambda z: np.maximum(np.abs(z) - 1, 0))):
            for phi in (quad_smoother(np.array([[1.5]])), log_smoother(np.array([[1.5]]))):
                v, _ = envelope_value(atom, phi, np.array([s1]), TIGHT)
                vals = f(zs) + _phi_1d(phi, s1 - zs)
                worst = max(worst, abs(v - vals.min()))
    errs["grid_1d"] = worst
    # 2-D: GMC envelope against a two-level grid
    B = rng.standard_normal((2, 2))
    worst = 0.0
    for _ in range(3):
        s2 = rng.standard_normal(2) * 2
        v, _ = envelope_value(l1_norm(), quad_smoother(B), s2, TIGHT)
        worst = max(worst, abs(v - _grid_2d(B, s2)))
    errs["grid_2d"] = worst
    return errs


def _phi_1d(phi, r):
    # both smoothers act elementwise for a 1x1 steering matrix
    return np.array([phi.value(np.array([t])) for t in r])


def _grid_2d(B, s):
    def vals(z1, z2):
        R1, R2 = s[0] - z1, s[1] - z2
        Q1 = B[0, 0] * R1 + B[0, 1] * R2
        Q2 = B[1, 0] * R1 + B[1, 1] * R2
        return np.abs(z1) + np.abs(z2) + 0.5 * (Q1**2 + Q2**2)
    zs = np.arange(-5, 5, 2e-3)
    Z1, Z2 = np.meshgrid(zs, zs, indexing="ij")
    V = vals(Z1, Z2)
    i = np.unravel_index(np.argmin(V), V.shape)
    fine = np.linspace(-4e-3, 4e-3, 801)
    F1, F2 = np.meshgrid(zs[i[0]] + fine, zs[i[1]] + fine, indexing="ij")
    return vals(F1, F2).min()


def test_criterion_9_primitives(capsys, rng):
    prox = _prox_errors(rng)
    grad = _grad_errors(rng)
    env = _envelope_errors(rng)
    ok = (max(prox.values()) <= 1e-6 and max(grad.values()) <= 1e-5
          and max(env.values()) <= 1e-4)
    _verdict(capsys, 9, ok, "prox %.1e, gradient %.1e, envelope %.1e (worst cases)"
             % (max(prox.values()), max(grad.values()), max(env.values())))
