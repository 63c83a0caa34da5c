import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from conftest import random_affine, random_stable
from lpvred.benchmarks import NonlinearModel, build_benchmark, design_inputs
from lpvred.errors import DimensionError, UndefinedMetricError
from lpvred.model import AffineLpvSs
from lpvred.simulation import MetricReport, SelfScheduled, Trajectory, local_errors, nrmse, simulate, summarize


def lti_as_nonlinear(g) -> NonlinearModel:
    return NonlinearModel(g.n, g.n_u, g.n_y, lambda x, u: g.A @ x + g.B @ u, lambda x, u: g.C @ x + g.D @ u)


def test_scalar_decay():
    sys = NonlinearModel(1, 1, 1, lambda x, u: -x, lambda x, u: x)
    tr = simulate(sys, np.zeros((101, 1)), x0=[1.0])
    assert tr.x[-1, 0] == pytest.approx(np.exp(-1), abs=1e-8)


def test_lti_against_exact_discretization(rng):
    g = random_stable(rng, 4, 2, 1)
    t_s, n = 0.01, 1001
    u = rng.uniform(-1, 1, (n, 2))
    tr = simulate(lti_as_nonlinear(g), u)
    # exact zero-order-hold discretization via the augmented exponential
    M = expm(t_s * np.block([[g.A, g.B], [np.zeros((2, 6))]]))
    Ad, Bd = M[:4, :4], M[:4, 4:]
    x = np.zeros(4)
    err = 0.0
    for k in range(n):
        err = max(err, np.max(np.abs(tr.x[k] - x)))
        x = Ad @ x + Bd @ u[k]
    assert err < 1e-7


def test_rk4_convergence_order():
    b = build_benchmark("msd1")
    u_fine = np.full((401, 1), 2.0)
    sols = []
    for h, step in ((0.04, 4), (0.02, 2), (0.01, 1)):
        tr = simulate(b.nl, u_fine[::step], x0=0.5 * np.ones(10), t_s=h)
        sols.append(tr.x[-1])
    e1 = np.linalg.norm(sols[0] - sols[1])
    e2 = np.linalg.norm(sols[1] - sols[2])
    assert np.log2(e1 / e2) >= 3.5


def test_divergence_is_flagged():
    sys = NonlinearModel(1, 1, 1, lambda x, u: 5 * x, lambda x, u: x)
    tr = simulate(sys, np.zeros((1000, 1)), x0=[1.0])
    assert tr.diverged
    assert np.isinf(tr.y[-1, 0]) and np.isfinite(tr.y[0, 0])


def test_nonfinite_initial_dynamics():
    sys = NonlinearModel(1, 1, 1, lambda x, u: 1 / x, lambda x, u: x)
    with np.errstate(divide="ignore"), pytest.raises(DimensionError):
        simulate(sys, np.zeros((5, 1)), x0=[0.0])


def test_msd_lpv_matches_nonlinear():
    b = build_benchmark("msd1")
    u = design_inputs(b, 0)["u_train"]
    nl = simulate(b.nl, u)
    lpv = simulate(SelfScheduled(b.lpv, b.eta), u)
    assert np.max(np.abs(nl.y - lpv.y)) < 1e-6


# --- NRMSE ---------------------------------------------------------------------------


def test_nrmse_values():
    y = np.sin(np.arange(1000) / 10)
    assert nrmse(y, y) == 0
    assert nrmse(y, np.full_like(y, y.mean())) == pytest.approx(100)
    assert nrmse(y, 0.9 * y) == pytest.approx(10.0, abs=0.1)
    bad = y.copy()
    bad[-1] = np.inf
    assert nrmse(y, bad) == np.inf


@given(st.floats(0.01, 100))
def test_nrmse_scales_with_error(alpha):
    rng = np.random.default_rng(0)
    y = rng.standard_normal((200, 2))
    d = rng.standard_normal((200, 2))
    assert nrmse(y, y + alpha * d) == pytest.approx(alpha * nrmse(y, y + d), rel=1e-10)


def test_nrmse_undefined_for_constant_reference():
    with pytest.raises(UndefinedMetricError):
        nrmse(np.ones(10), np.zeros(10))
    with pytest.raises(DimensionError):
        nrmse(np.ones(10), np.ones(9))


# --- local errors ------------------------------------------------------------------


def test_identity_reduction_has_zero_error(rng):
    m = random_affine(rng, 4, 2, n_u=2, n_y=2)
    rep = local_errors(m, m, rng.uniform(-1, 1, (6, 2)))
    assert np.all(rep.stable)
    np.testing.assert_array_equal(rep.lambdainf, 0)
    np.testing.assert_array_equal(rep.lambda2, 0)


def test_unstable_reduced_point_is_flagged(rng):
    m = random_affine(rng, 2, 1)
    L0 = m.basis[0].copy()
    L0[:2, :2] = np.diag([-1.0, -2.0])
    L1 = np.zeros_like(L0)
    L1[0, 0] = 1.1
    reduced = AffineLpvSs(np.array([L0, L1]), 2, 1, m.bounds)
    # at p = 1 the reduced A is diag(0.1, -2)
    rep = local_errors(m, reduced, np.array([[-1.0], [1.0], [0.0]]))
    assert list(rep.stable) == [True, False, True]
    s = rep.summary
    assert s["n_unstable"] == 1
    assert s["lambda2_mean"] == np.mean(rep.lambda2[[0, 2]])


def test_feedthrough_mismatch_is_reported(rng):
    m = random_affine(rng, 2, 1)
    basis = m.basis.copy()
    basis[0, -1, -1] += 0.5
    rep = local_errors(m, AffineLpvSs(basis, 2, 1, m.bounds), [[0.0]])
    assert rep.feedthrough[0] and rep.lambda2[0] == np.inf and np.isfinite(rep.lambdainf[0])


def test_summary_recomputed_from_csv(tmp_path, rng):
    m = random_affine(rng, 3, 2)
    r = random_affine(rng, 3, 2)
    rep = local_errors(m, r, rng.uniform(-1, 1, (8, 2)))
    rep.to_csv(tmp_path / "pts.csv")
    back = MetricReport.from_csv(tmp_path / "pts.csv")
    assert back.summary == rep.summary
    st_ = rep.stable
    ref = summarize(rep.lambda2, rep.lambdainf, st_)
    assert ref["lambda2_mean"] == np.mean(rep.lambda2[st_])


@given(st.lists(st.booleans(), min_size=1, max_size=30))
def test_unstable_ratio_in_range(flags):
    stable = np.array(flags)
    s = summarize(np.ones(stable.size), np.ones(stable.size), stable)
    assert 0 <= s["unstable_ratio"] <= 100


def test_trajectory_csv_round_trip(tmp_path):
    b = build_benchmark("msd1")
    tr = simulate(b.nl, design_inputs(b, 0)["u_train"][:50], eta=b.eta)
    tr.to_csv(tmp_path / "t.csv")
    back = Trajectory.from_csv(tmp_path / "t.csv")
    for f in ("u", "x", "y", "p"):
        np.testing.assert_array_equal(getattr(back, f), getattr(tr, f))
    assert back.t_s == tr.t_s
    header = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert header.startswith("t,u1,x1,") and header.endswith(",p9")
