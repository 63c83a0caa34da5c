"""Small dense LMI engine (log-det barrier) and static LPV gramians.

Problems have symmetric matrix variables ``X_1..X_k`` and constraints
``F_j(X) < 0`` where each ``F_j`` is affine and symmetric-valued. They are
compiled to the standard form ``F_j0 + sum_k x_k F_jk`` over the stacked
upper-triangular coordinates ``x`` of all variables.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, GramianInfeasibleError, ResourceError
from .model import AffineLpvSs
from .numerics import GramianPair, is_hurwitz

log = logging.getLogger(__name__)

OPTIMAL, FEASIBLE, INFEASIBLE, MAX_ITER = "optimal", "feasible", "infeasible", "max-iter"

# dense Hessian assembly holds m * n^2 doubles per constraint block
MAX_WORK = 4e7


def _sym_basis(n: int) -> np.ndarray:
    idx = np.triu_indices(n)
    E = np.zeros((idx[0].size, n, n))
    k = np.arange(idx[0].size)
    E[k, idx[0], idx[1]] = 1.0
    E[k, idx[1], idx[0]] = 1.0
    return E


@dataclass
class LmiProgram:
    """Symmetric matrix variables, affine constraints ``F(X) < 0`` and a linear objective.

    Constraints are callables receiving the list of variable matrices; the
    objective is ``sum_v trace(C_v X_v)``.
    """

    sizes: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    names: list = field(default_factory=list)
    weights: dict = field(default_factory=dict)

    def variable(self, n: int) -> int:
        self.sizes.append(int(n))
        return len(self.sizes) - 1

    def constrain(self, fn: Callable[[Sequence[np.ndarray]], np.ndarray], name=None):
        """Require ``fn(X) < 0``."""
        self.constraints.append(fn)
        self.names.append(name if name is not None else f"c{len(self.constraints) - 1}")

    def minimize(self, var: int, weight) -> None:
        """Add ``trace(weight @ X_var)`` to the objective."""
        self.weights[var] = np.atleast_2d(np.asarray(weight, dtype=float))

    # --- compilation -------------------------------------------------------

    @property
    def n_vars(self) -> int:
        return sum(n * (n + 1) // 2 for n in self.sizes)

    def unpack(self, x) -> list:
        out, k = [], 0
        for n in self.sizes:
            m = n * (n + 1) // 2
            X = np.zeros((n, n))
            iu = np.triu_indices(n)
            X[iu] = x[k:k + m]
            X = X + np.triu(X, 1).T
            out.append(X)
            k += m
        return out

    def pack(self, mats) -> np.ndarray:
        return np.concatenate([np.asarray(X)[np.triu_indices(n)] for X, n in zip(mats, self.sizes)]) \
            if self.sizes else np.zeros(0)

    def compile(self):
        """Return ``(c, blocks)`` with ``blocks[j] = (F0, Fk)``, ``Fk`` of shape ``(m, n_j, n_j)``."""
        zeros = [np.zeros((n, n)) for n in self.sizes]
        m = self.n_vars
        bases = [_sym_basis(n) for n in self.sizes]
        offsets = np.cumsum([0] + [b.shape[0] for b in bases])
        blocks = []
        for fn, name in zip(self.constraints, self.names):
            F0 = np.atleast_2d(np.asarray(fn(zeros), dtype=float))
            nj = F0.shape[0]
            if m * nj * nj > MAX_WORK:
                raise ResourceError(f"LMI too large for the dense barrier engine ({m} variables, block {nj})")
            Fk = np.empty((m, nj, nj))
            for v, E in enumerate(bases):
                for i in range(E.shape[0]):
                    X = list(zeros)
                    X[v] = E[i]
                    Fk[offsets[v] + i] = np.asarray(fn(X), dtype=float) - F0
            if not np.allclose(F0, F0.T, atol=1e-12 * (1 + np.abs(F0).max())) or \
                    not np.allclose(Fk, Fk.transpose(0, 2, 1), atol=1e-12 * (1 + np.abs(Fk).max(initial=0))):
                raise DimensionError(f"constraint {name!r} is not symmetric")
            blocks.append((0.5 * (F0 + F0.T), 0.5 * (Fk + Fk.transpose(0, 2, 1))))
        c = np.zeros(m)
        for v, C in self.weights.items():
            E = bases[v]
            c[offsets[v]:offsets[v + 1]] = np.einsum("ij,kji->k", C, E)
        return c, blocks


@dataclass
class LmiSolution:
    status: str
    variables: list
    objective: float
    iterations: int
    margin: float  # largest eigenvalue over all constraint blocks (negative when feasible)


@dataclass
class BarrierOptions:
    margin: float = 1e-9
    gap_tol: float = 1e-6
    mu: float = 10.0
    radius: float = 1e6
    max_newton: int = 60
    max_outer: int = 60


class _Barrier:
    """``t c^T x + sum_j -log det(-F_j(x) - eps I) - log(R^2 - |x|^2)``."""

    def __init__(self, c, blocks, eps, radius):
        self.c, self.blocks, self.eps, self.R2 = c, blocks, eps, radius**2
        self.theta = sum(F0.shape[0] for F0, _ in blocks) + 1

    def slacks(self, x, shift=0.0):
        out = []
        for F0, Fk in self.blocks:
            S = -(F0 + np.tensordot(x, Fk, axes=1)) - self.eps * np.eye(F0.shape[0]) + shift * np.eye(F0.shape[0])
            try:
                out.append(np.linalg.cholesky(S))
            except np.linalg.LinAlgError:
                return None
        return out

    def value(self, x, t, chol, lin):
        r = self.R2 - x @ x
        if r <= 0 or chol is None:
            return np.inf
        return t * lin - 2.0 * sum(np.log(np.diag(L)).sum() for L in chol) - np.log(r)

    def derivatives(self, x, chol, extra=None):
        """Gradient and Hessian of the barrier part. ``extra`` holds the phase-I
        column ``dS/ds = I`` so the shift variable is handled like any other."""
        m = x.size + (1 if extra is not None else 0)
        g = np.zeros(m)
        H = np.zeros((m, m))
        for (F0, Fk), L in zip(self.blocks, chol):
            Li = np.linalg.inv(L)
            G = Li @ Fk @ Li.T
            if extra is not None:
                G = np.concatenate([G, -(Li @ Li.T)[None]])
            flat = G.reshape(m, -1)
            g += np.einsum("kii->k", G)
            H += flat @ flat.T
        r = self.R2 - x @ x
        g[: x.size] += 2 * x / r
        H[: x.size, : x.size] += 2 * np.eye(x.size) / r + 4 * np.outer(x, x) / r**2
        return g, H


def _newton_solve(H, g):
    try:
        L = np.linalg.cholesky(H)
        y = np.linalg.solve(L, -g)
        return np.linalg.solve(L.T, y)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(H, -g, rcond=None)[0]


def _phase_one(bar: _Barrier, x0, opts: BarrierOptions):
    """Find ``x`` with every slack positive definite, or certify infeasibility."""
    x = x0.copy()
    least = min(np.linalg.eigvalsh(-(F0 + np.tensordot(x, Fk, axes=1)) - bar.eps * np.eye(F0.shape[0])).min()
                for F0, Fk in bar.blocks)
    if least > 0 and bar.slacks(x) is not None:
        return x, 0
    s = max(-least, 0.0) + 1.0
    t = 1.0
    it = 0

    def state(x, s):
        return bar.slacks(x, shift=s)

    for _ in range(opts.max_outer):
        for _ in range(opts.max_newton):
            it += 1
            chol = state(x, s)
            g, H = bar.derivatives(x, chol, extra=True)
            g[-1] += t
            d = _newton_solve(H, g)
            dec = -g @ d
            if dec < 1e-10:
                break
            f0 = bar.value(x, t, chol, s)
            step = 1.0
            while step > 1e-12:
                xn, sn = x + step * d[:-1], s + step * d[-1]
                fn = bar.value(xn, t, state(xn, sn), sn)
                if fn <= f0 - 0.01 * step * dec:
                    break
                step *= 0.5
            else:
                break
            x, s = xn, sn
            if s < 0 and bar.slacks(x) is not None:
                return x, it
        if bar.theta / t < 1e-10:
            break
        t *= opts.mu
    return None, it


def solve_lmi(prog: LmiProgram, opts: BarrierOptions | None = None, x0=None) -> LmiSolution:
    """Minimize the objective subject to ``F_j(X) <= -margin * I``.

    Returns status ``optimal`` when the barrier duality-gap bound
    ``theta / t`` drops below ``gap_tol * max(1, |objective|)``, ``max-iter``
    if the outer loop runs out first and ``infeasible`` when phase I cannot
    push the maximum eigenvalue below ``-margin``.
    """
    opts = opts or BarrierOptions()
    c, blocks = prog.compile()
    bar = _Barrier(c, blocks, opts.margin, opts.radius)
    x = np.zeros(prog.n_vars) if x0 is None else prog.pack(x0)
    x, it = _phase_one(bar, x, opts)
    if x is None:
        return LmiSolution(INFEASIBLE, [], np.nan, it, np.nan)
    if not c.any():
        return LmiSolution(FEASIBLE, prog.unpack(x), 0.0, it, _worst(blocks, x))

    scale = max(1.0, abs(c @ x))
    t = bar.theta / scale
    status = MAX_ITER
    for _ in range(opts.max_outer):
        for _ in range(opts.max_newton):
            it += 1
            chol = bar.slacks(x)
            g, H = bar.derivatives(x, chol)
            g += t * c
            d = _newton_solve(H, g)
            dec = -g @ d
            if dec < 1e-9:
                break
            f0 = bar.value(x, t, chol, c @ x)
            step = 1.0
            while step > 1e-14:
                xn = x + step * d
                fn = bar.value(xn, t, bar.slacks(xn), c @ xn)
                if fn <= f0 - 0.01 * step * dec:
                    break
                step *= 0.5
            else:
                break
            x = xn
        if bar.theta / t < opts.gap_tol * max(1.0, abs(c @ x)):
            status = OPTIMAL
            break
        t *= opts.mu
    return LmiSolution(status, prog.unpack(x), float(c @ x), it, _worst(blocks, x))


def _worst(blocks, x) -> float:
    return float(max((np.linalg.eigvalsh(F0 + np.tensordot(x, Fk, axes=1)).max() for F0, Fk in blocks),
                     default=-np.inf))


# --- static gramians ------------------------------------------------------------


def _gramian_program(mats, transpose: bool, eps: float, weight) -> LmiProgram:
    """``A X + X A^T + B B^T < -eps I`` (or the dual) at every frozen point, and ``X > 0``."""
    prog = LmiProgram()
    n = mats[0][0].shape[0]
    v = prog.variable(n)
    for k, (A, B, C) in enumerate(mats):
        if transpose:
            A, W = A.T, C.T @ C
        else:
            W = B @ B.T
        prog.constrain(lambda X, A=A, W=W: A @ X[v] + X[v] @ A.T + W + eps * np.eye(n), name=k)
    prog.constrain(lambda X: -X[v], name="pd")
    prog.minimize(v, weight)
    return prog


def _frozen_mats(model: AffineLpvSs, grid):
    """Frozen ``(A, B, C)`` per grid point and the grid rows giving distinct constraints.

    Repeated frozen models would only re-weight the barrier, so they are
    dropped; the result then does not depend on duplicated grid points.
    """
    mats, keep, seen = [], [], set()
    for k, p in enumerate(grid):
        m = model.eval(p)
        key = (m.A.tobytes(), m.B.tobytes(), m.C.tobytes())
        if key in seen:
            continue
        seen.add(key)
        mats.append((m.A, m.B, m.C))
        keep.append(k)
    return mats, grid[keep]


def _solve_side(mats, transpose, eps, weight, x0, opts, grid):
    sol = solve_lmi(_gramian_program(mats, transpose, eps, weight), opts, x0=x0)
    if sol.status == INFEASIBLE:
        name = "observability" if transpose else "controllability"
        # locate an offending grid point for the error message
        for p, (A, _, _) in zip(grid, mats):
            if not is_hurwitz(A)[0]:
                raise GramianInfeasibleError(
                    f"{name} LMI infeasible: A(p) not Hurwitz at p={np.asarray(p).tolist()}", p)
        raise GramianInfeasibleError(f"{name} LMI jointly infeasible on the grid (no common gramian)")
    return sol.variables[0]


@dataclass(frozen=True)
class StaticGramians(GramianPair):
    history: tuple = ()


def static_gramians(model: AffineLpvSs, grid, iterations: int = 20, rel_tol: float = 1e-4,
                    opts: BarrierOptions | None = None) -> StaticGramians:
    """Parameter-independent gramians ``P, Q`` valid on every grid point.

    Starts from ``min trace(P) + trace(Q)`` and then alternates
    ``P <- argmin trace(P Q_k)``, ``Q <- argmin trace(P_{k+1} Q)`` (a
    linearization of ``trace(PQ)``), stopping once the relative decrease of
    ``trace(PQ)`` falls below ``rel_tol``.
    """
    opts = opts or BarrierOptions()
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if model.n_p == 0:
        grid = np.zeros((1, 0))
    mats, grid = _frozen_mats(model, grid)
    for p, (A, _, _) in zip(grid, mats):
        if not is_hurwitz(A)[0]:
            raise GramianInfeasibleError(f"A(p) not Hurwitz at p={np.asarray(p).tolist()}", p)
    eps = 1e-8 * max(np.linalg.norm(A, 2) for A, _, _ in mats)
    n = model.n_x
    eye = np.eye(n)
    P = _solve_side(mats, False, eps, eye, None, opts, grid)
    Q = _solve_side(mats, True, eps, eye, None, opts, grid)
    history = [float(np.trace(P @ Q))]
    for _ in range(iterations):
        P = _solve_side(mats, False, eps, Q, [P], opts, grid)
        Q = _solve_side(mats, True, eps, P, [Q], opts, grid)
        history.append(float(np.trace(P @ Q)))
        if history[-2] - history[-1] < rel_tol * abs(history[-2]):
            break
    log.debug("static gramians: trace(PQ) history %s", history)
    return StaticGramians(0.5 * (P + P.T), 0.5 * (Q + Q.T), tuple(history))
