import itertools

import numpy as np
import pytest
from scipy import integrate, optimize
from hypothesis import HealthCheck, settings

from lpvred.model import AffineLpvSs, LtiSs

settings.register_profile("lpvred", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("lpvred")


def random_stable(rng, n, n_u=1, n_y=1, margin=0.1, d=False) -> LtiSs:
    """Random Hurwitz system with spectral abscissa at most ``-margin``."""
    A = rng.standard_normal((n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + margin + rng.uniform(0, 1)) * np.eye(n)
    D = rng.standard_normal((n_y, n_u)) if d else np.zeros((n_y, n_u))
    return LtiSs(A, rng.standard_normal((n, n_u)), rng.standard_normal((n_y, n)), D)


def random_affine(rng, n_x, n_p, n_u=1, n_y=1, scale=0.2, bound=1.0) -> AffineLpvSs:
    """Affine model whose constant part is stable; scheduling parts are small."""
    g = random_stable(rng, n_x, n_u, n_y, margin=0.5)
    L0 = np.block([[g.A, g.B], [g.C, g.D]])
    basis = [L0] + [scale * rng.standard_normal(L0.shape) for _ in range(n_p)]
    bounds = np.tile([-bound, bound], (n_p, 1)) if n_p else None
    return AffineLpvSs(np.array(basis), n_x, n_u, bounds)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list = []


def brute_markov(model, N):
    """Every ``C_j A_{i_k} ... A_{i_1} B_{i_0}`` with ``k <= N - 1``, by explicit products."""
    n = model.n_x
    A = [L[:n, :n] for L in model.basis]
    B = [L[:n, n:] for L in model.basis]
    C = [L[n:, :n] for L in model.basis]
    letters = range(model.n_p + 1)
    out = {}
    for k in range(N):
        for word in itertools.product(letters, repeat=k):
            for i0 in letters:
                X = B[i0]
                for i in reversed(word):
                    X = A[i] @ X
                for j in letters:
                    out[(j,) + word + (i0,)] = C[j] @ X
    return out


def h2_quadrature(m):
    """H2 norm from the frequency-response integral."""
    def f(w):
        return np.linalg.norm(m.freqresp(w)[0], "fro") ** 2
    val, _ = integrate.quad(f, 0, np.inf, limit=500, epsabs=0, epsrel=1e-10)
    return np.sqrt(2 * val / (2 * np.pi))


def hinf_grid(m):
    """Peak gain on a dense log grid, polished by a bounded scalar search."""
    w = np.concatenate([[0.0], np.logspace(-4, 4, 20000)])
    M = 1j * w[:, None, None] * np.eye(m.n) - m.A
    G = m.C @ np.linalg.solve(M, np.broadcast_to(m.B, (w.size,) + m.B.shape)) + m.D
    s = np.linalg.norm(G, 2, axis=(1, 2))
    k = int(np.argmax(s))
    lo, hi = w[max(k - 1, 0)], w[min(k + 1, w.size - 1)]
    res = optimize.minimize_scalar(lambda x: -np.linalg.norm(m.freqresp(x)[0], 2), bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-12})
    return max(s.max(), -res.fun)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
