import numpy as np
import pytest

from lpvred.errors import DimensionError, GramianInfeasibleError
from lpvred.lmi import INFEASIBLE, OPTIMAL, LmiProgram, solve_lmi, static_gramians
from lpvred.model import AffineLpvSs
from lpvred.numerics import solve_lyapunov

from conftest import random_affine


def test_scalar_lyapunov_inequality():
    prog = LmiProgram()
    v = prog.variable(1)
    prog.constrain(lambda X: -X[v])
    prog.constrain(lambda X: -2 * X[v] + 2)
    prog.minimize(v, [[1.0]])
    sol = solve_lmi(prog)
    assert sol.status == OPTIMAL
    assert sol.variables[0][0, 0] >= 1.0
    assert sol.variables[0][0, 0] == pytest.approx(1.0, abs=1e-4)


def test_infeasible_program():
    prog = LmiProgram()
    v = prog.variable(2)
    prog.constrain(lambda X: X[v])
    prog.constrain(lambda X: np.eye(2) - X[v])
    assert solve_lmi(prog).status == INFEASIBLE


def test_asymmetric_constraint_is_rejected():
    prog = LmiProgram()
    v = prog.variable(2)
    prog.constrain(lambda X: np.array([[0.0, 1.0], [0.0, 0.0]]) + X[v])
    with pytest.raises(DimensionError):
        solve_lmi(prog)


def test_lti_gramian_lmi_is_close_to_lyapunov(rng):
    A = np.array([[-1.0, 2.0], [0.0, -3.0]])
    B = np.array([[1.0], [1.0]])
    prog = LmiProgram()
    v = prog.variable(2)
    prog.constrain(lambda X: A @ X[v] + X[v] @ A.T + B @ B.T)
    prog.constrain(lambda X: -X[v])
    prog.minimize(v, np.eye(2))
    sol = solve_lmi(prog)
    exact = np.trace(solve_lyapunov(A, B @ B.T))
    assert sol.status == OPTIMAL
    assert sol.objective >= exact * (1 - 1e-9)
    assert (sol.objective - exact) / exact < 1e-3


def _margins(model, grid, P, Q):
    worst = -np.inf
    for p in grid:
        m = model.eval(p)
        worst = max(worst, np.linalg.eigvalsh(m.A @ P + P @ m.A.T + m.B @ m.B.T).max(),
                    np.linalg.eigvalsh(m.A.T @ Q + Q @ m.A + m.C.T @ m.C).max())
    return worst


def test_static_gramians_lti_single_point(rng):
    m = random_affine(rng, 3, 0)
    g = static_gramians(m, np.zeros((1, 0)))
    lti = m.eval(np.zeros(0))
    P = solve_lyapunov(lti.A, lti.B @ lti.B.T)
    assert abs(np.trace(g.P) - np.trace(P)) / np.trace(P) < 0.1
    assert _margins(m, np.zeros((1, 0)), g.P, g.Q) < 0
    assert np.linalg.eigvalsh(g.P).min() > 0 and np.linalg.eigvalsh(g.Q).min() > 0


def test_static_gramians_grid_independent_for_constant_model(rng):
    m = random_affine(rng, 3, 2, scale=0.0)
    g1 = static_gramians(m, np.zeros((1, 2)))
    g2 = static_gramians(m, rng.uniform(-1, 1, (4, 2)))
    np.testing.assert_allclose(g1.P, g2.P, atol=1e-6 * np.abs(g1.P).max())
    np.testing.assert_allclose(g1.Q, g2.Q, atol=1e-6 * np.abs(g1.Q).max())


def test_static_gramians_satisfy_all_lmis(rng):
    m = random_affine(rng, 4, 2, scale=0.1)
    grid = rng.uniform(-1, 1, (5, 2))
    g = static_gramians(m, grid)
    assert _margins(m, grid, g.P, g.Q) < 0
    assert all(b <= a * (1 + 1e-9) for a, b in zip(g.history, g.history[1:]))


def test_static_gramians_monotone_in_grid(rng):
    m = random_affine(rng, 3, 2, scale=0.15)
    grid = rng.uniform(-1, 1, (6, 2))
    small = static_gramians(m, grid[:2])
    large = static_gramians(m, grid)
    # every feasible pair for the larger grid is feasible for the smaller one
    assert large.history[0] >= small.history[0] * (1 - 1e-6)


def test_static_gramians_report_unstable_point():
    basis = np.zeros((2, 2, 2))
    basis[0] = [[-1.0, 1.0], [1.0, 0.0]]
    basis[1, 0, 0] = 1.0
    m = AffineLpvSs(basis, 1, 1)
    with pytest.raises(GramianInfeasibleError) as exc:
        static_gramians(m, np.array([[0.0], [2.0]]))
    assert exc.value.p is not None and exc.value.p[0] == 2.0
