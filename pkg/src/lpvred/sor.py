"""State-order reduction of affine LPV models.

All methods return a :class:`SorResult` whose reduced model keeps the
original scheduling variables; only the state dimension shrinks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NotApplicableError, StabilityError
from .lmi import BarrierOptions, LmiProgram, OPTIMAL, FEASIBLE, static_gramians, solve_lmi
from .model import AffineLpvSs, LtiSs
from .numerics import balance, gramians, is_hurwitz
from .simulation import SelfScheduled

MM_RTOL = 1e-10
PBH_TOL = 1e-8


@dataclass(frozen=True)
class SorResult:
    """Reduced model ``W^T L_i V`` (state block) with its projection pair."""

    reduced: AffineLpvSs
    V: np.ndarray
    W: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def r_x(self) -> int:
        return self.reduced.n_x

    def frozen(self, p) -> LtiSs:
        return self.reduced.eval(p)

    def self_scheduled(self, eta) -> SelfScheduled:
        """Reduced model scheduled by ``eta(V x_hat, u)``."""
        V = self.V
        return SelfScheduled(self.reduced, lambda xr, u: eta(V @ xr, u))

    def to_dict(self) -> dict:
        return {"kind": "sor", "method": self.method, "model": self.reduced.to_dict(),
                "V": self.V.tolist(), "W": self.W.tolist(), "diagnostics": _jsonable(self.diagnostics)}

    @classmethod
    def from_dict(cls, d: dict) -> "SorResult":
        n_x = len(d["V"])
        r = d["model"]["n_x"]
        return cls(AffineLpvSs.from_dict(d["model"]), np.array(d["V"], dtype=float).reshape(n_x, r),
                   np.array(d["W"], dtype=float).reshape(n_x, r), d["method"], d.get("diagnostics", {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _check_order(model: AffineLpvSs, r_x: int) -> int:
    r_x = int(r_x)
    if not 0 <= r_x <= model.n_x:
        raise DimensionError(f"r_x must lie in [0, {model.n_x}], got {r_x}")
    return r_x


def _balanced_projection(P, Q, r_x: int, n: int):
    """Truncated balancing projection; full order with singular gramians keeps the identity."""
    bt = balance(P, Q)
    if r_x == n and bt.deficient:
        return np.eye(n), np.eye(n), bt
    if r_x > n - bt.deficient:
        raise DimensionError(f"only {n - bt.deficient} balanceable directions, r_x={r_x} requested")
    V, W = bt.truncation(r_x)
    return V, W, bt


def _finish(model: AffineLpvSs, V, W, method: str, **diag) -> SorResult:
    return SorResult(model.project(W, V), V, W, method, diag)


def ltibr(model: AffineLpvSs, r_x: int) -> SorResult:
    """Balanced truncation of the LTI core with the latent channels as extra I/O."""
    r_x = _check_order(model, r_x)
    lfr = model.to_lfr()
    ext = LtiSs(lfr.A, np.hstack([lfr.Bu, lfr.Bd]), np.vstack([lfr.Cy, lfr.Cd]),
                np.zeros((model.n_y + lfr.n_w, model.n_u + lfr.n_w)))
    stable, alpha = is_hurwitz(ext.A)
    if not stable:
        raise StabilityError(f"LTI core A_0 is not Hurwitz (spectral abscissa {alpha:.3g})")
    g = gramians(ext)
    V, W, bt = _balanced_projection(g.P, g.Q, r_x, model.n_x)
    return _finish(model, V, W, "ltibr", hsv=bt.hsv)


def lpvbr(model: AffineLpvSs, r_x: int, grid, opts: BarrierOptions | None = None) -> SorResult:
    """Balanced truncation with parameter-independent gramians from the grid LMIs."""
    r_x = _check_order(model, r_x)
    g = static_gramians(model, grid, opts=opts)
    V, W, bt = _balanced_projection(g.P, g.Q, r_x, model.n_x)
    return _finish(model, V, W, "lpvbr", hsv=bt.hsv, trace_pq=list(g.history))


# --- moment matching ------------------------------------------------------------


def _letters(model: AffineLpvSs, scaled: bool):
    """``(A_i, B_i, C_i)`` for the constant block and each scheduling direction."""
    n = model.n_x
    s = np.ones(model.n_p + 1)
    if scaled and model.n_p:
        mag = np.abs(model.bounds).max(axis=1)
        s[1:] = np.where(np.isfinite(mag) & (mag > 0), mag, 1.0)
    A = [si * L[:n, :n] for si, L in zip(s, model.basis)]
    B = np.hstack([si * L[:n, n:] for si, L in zip(s, model.basis)])
    C = np.vstack([si * L[n:, :n] for si, L in zip(s, model.basis)])
    return A, B, C


def _orth_new(basis: np.ndarray, cand: np.ndarray, scale: float) -> np.ndarray:
    """Orthonormal directions of ``cand`` not already spanned by ``basis``."""
    if cand.size == 0 or scale == 0:
        return np.zeros((cand.shape[0], 0))
    for _ in range(2):
        cand = cand - basis @ (basis.T @ cand)
    U, s, _ = np.linalg.svd(cand, full_matrices=False)
    k = int(np.sum(s > MM_RTOL * scale))
    return U[:, :k]


def reachable_space(A_letters, B, depth: int) -> np.ndarray:
    """Orthonormal basis of ``span{A_w B : |w| <= depth}``, built breadth-first with deflation."""
    n = B.shape[0]
    if n == 0 or B.size == 0:
        return np.zeros((n, 0))
    scale = max(np.linalg.norm(B, 2), 1e-300)
    basis = _orth_new(np.zeros((n, 0)), B, scale)
    front = basis
    for _ in range(depth):
        if front.shape[1] == 0 or basis.shape[1] == n:
            break
        cand = np.hstack([Ai @ front for Ai in A_letters])
        norm = max(scale, max(np.linalg.norm(Ai, 2) for Ai in A_letters))
        front = _orth_new(basis, cand, norm)
        basis = np.hstack([basis, front])
    return basis


def _word_gramian(A_letters, B, depth: int) -> np.ndarray:
    """``sum_{|w| <= depth} (A_w B)(A_w B)^T`` via the recursion ``X_{k+1} = sum_i A_i X_k A_i^T``."""
    X = B @ B.T
    total = X.copy()
    for _ in range(depth):
        X = sum(Ai @ X @ Ai.T for Ai in A_letters)
        total += X
    return total


def moment_match(model: AffineLpvSs, N: int | None = None, r_x: int | None = None,
                 scaled: bool = True) -> SorResult:
    """Generalized moment matching over the ``n_p + 1`` letter alphabet.

    The reduced model reproduces every generalized Markov parameter
    ``C_j A_{i_k} ... A_{i_1} B_{i_0}`` with ``k <= N - 1`` (``N`` letters
    counting the ``B`` letter). The exact model is obtained by a Galerkin
    projection onto the ``N``-partial reachability space followed by one onto
    the ``N``-partial observability space of the result. When ``N`` is omitted
    it is the smallest horizon whose matched space has at least ``r_x``
    directions (``n_x`` directions, i.e. saturation, without ``r_x``).

    When ``r_x`` is below the exact order, the exact model is balanced with
    the ``N``-step word gramians and truncated; matching then holds only
    approximately. Scheduling letters are scaled by the magnitude of the
    scheduling box (``scaled=True``) so that the word gramians weigh moments
    by their size over the operating range.
    """
    n = model.n_x
    A, B, C = _letters(model, scaled)

    def matched(N):
        V1 = reachable_space(A, B, N - 1)
        A1 = [V1.T @ Ai @ V1 for Ai in A]
        return V1 @ reachable_space([Ai.T for Ai in A1], (C @ V1).T, N - 1)

    if N is None:
        # smallest horizon whose matched space can hold r_x states
        target = n if r_x is None else int(r_x)
        N, V = 1, matched(1)
        while V.shape[1] < target and N < n:
            N += 1
            V = matched(N)
    else:
        N = int(N)
        if N < 1:
            raise DimensionError("moment-matching horizon N must be at least 1")
        V = matched(N)
    exact = V.shape[1]
    diag = {"N": N, "exact_order": exact}
    if r_x is None or int(r_x) >= exact:
        return _finish(model, V, V.copy(), "mm", **diag)
    r_x = _check_order(model, r_x)
    Ar = [V.T @ Ai @ V for Ai in A]
    P = _word_gramian(Ar, V.T @ B, N - 1)
    Q = _word_gramian([Ai.T for Ai in Ar], (C @ V).T, N - 1)
    Vr, Wr, bt = _balanced_projection(P, Q, r_x, exact)
    diag["hsv"] = bt.hsv
    return _finish(model, V @ Vr, V @ Wr, "mm", **diag)


def markov_parameters(model: AffineLpvSs, N: int) -> dict:
    """Brute-force generalized Markov parameters keyed by the letter word ``(j, i_k, ..., i_1, i_0)``."""
    n = model.n_x
    A = [L[:n, :n] for L in model.basis]
    B = [L[:n, n:] for L in model.basis]
    C = [L[n:, :n] for L in model.basis]
    out = {}
    level = {(i,): B[i] for i in range(len(B))}
    for _ in range(N):
        for w, X in level.items():
            for j, Cj in enumerate(C):
                out[(j,) + w] = Cj @ X
        level = {(i,) + w: A[i] @ X for w, X in level.items() for i in range(len(A))}
    return out


# --- parameter-varying oblique projection -----------------------------------------


def pvop(model: AffineLpvSs, r_x: int, grid, ref: int | None = None) -> SorResult:
    """Local balanced truncation on the grid, aligned and interpolated affinely in ``p``.

    Local projections ``(V_i, W_i)`` are brought to common reduced coordinates
    by ``S_i = W_ref^T V_i`` (``V_i S_i^{-1}``, ``W_i S_i^T``) so that the local
    reduced bases all satisfy ``W_ref^T V_i = I``. The aligned local reduced
    matrices are then fitted entrywise by least squares on ``[1, p]``.
    """
    r_x = _check_order(model, r_x)
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if model.n_p == 0:
        grid = np.zeros((1, 0))
    bad = [p.tolist() for p in grid if not is_hurwitz(model.eval(p).A)[0]]
    if bad:
        raise StabilityError(f"frozen models not Hurwitz at grid points {bad}")
    if ref is None:
        ref = int(np.argmin(np.linalg.norm(grid - grid.mean(0), axis=1)))
    n, ny, nu = model.n_x, model.n_y, model.n_u
    local = []
    for p in grid:
        g = gramians(model.eval(p))
        V, W, _ = _balanced_projection(g.P, g.Q, r_x, n)
        local.append((V, W))
    W_ref = local[ref][1]
    reduced = []
    conds = []
    for (V, W), p in zip(local, grid):
        S = W_ref.T @ V
        conds.append(float(np.linalg.cond(S)) if r_x else 1.0)
        Sinv = np.linalg.inv(S) if r_x else S
        Va, Wa = V @ Sinv, W @ S.T
        L = model.joined(p)
        left = np.zeros((r_x + ny, n + ny))
        left[:r_x, :n] = Wa.T
        left[r_x:, n:] = np.eye(ny)
        right = np.zeros((n + nu, r_x + nu))
        right[:n, :r_x] = Va
        right[n:, r_x:] = np.eye(nu)
        reduced.append((left @ L @ right).ravel())
    X = np.column_stack([np.ones(len(grid)), grid])
    coef, *_ = np.linalg.lstsq(X, np.array(reduced), rcond=None)
    basis = coef.reshape(model.n_p + 1, r_x + ny, r_x + nu)
    V, W = local[ref]
    red = AffineLpvSs(basis, r_x, nu, model.bounds)
    return SorResult(red, V, W, "pvop", {"reference": ref, "alignment_cond": conds})


# --- LFR balanced truncation ------------------------------------------------------


def _normalized(model: AffineLpvSs) -> AffineLpvSs:
    """Reparametrize ``p = c + r * delta`` so the scheduling box becomes ``[-1, 1]^n_p``."""
    lo, hi = model.bounds[:, 0], model.bounds[:, 1]
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise NotApplicableError("LFR balancing needs a bounded scheduling box")
    c, r = 0.5 * (lo + hi), 0.5 * (hi - lo)
    basis = model.basis.copy()
    basis[0] = basis[0] + np.tensordot(c, basis[1:], axes=1)
    basis[1:] = basis[1:] * r[:, None, None]
    return AffineLpvSs(basis, model.n_x, model.n_u, np.tile([-1.0, 1.0], (model.n_p, 1)))


def _pbh_margin(A, B) -> float:
    """Smallest ``sigma_min([A - lambda I, B])`` over the eigenvalues of ``A``, relative to ``||[A B]||``."""
    n = A.shape[0]
    if n == 0:
        return np.inf
    scale = max(np.linalg.norm(np.hstack([A, B]), 2), 1e-300)
    return min(np.linalg.svd(np.hstack([A - lam * np.eye(n), B]), compute_uv=False)[-1]
               for lam in np.linalg.eigvals(A)) / scale


def lfrbr(model: AffineLpvSs, r_x: int, opts: BarrierOptions | None = None) -> SorResult:
    """Balanced truncation of the LFR with block-diagonal structured gramians.

    With the scheduling normalized to ``|delta_i| <= 1``, the extended block
    ``[[A, B_d], [C_d, D_dd]]`` must be controllable from ``[B_u; D_du]`` and
    observable from ``[C_y, D_yd]``; otherwise :class:`NotApplicableError` is
    raised. Structured gramians ``blkdiag(P, S)`` and ``blkdiag(Q, R)`` solve

    ``[[A P + P A^T + B_d S B_d^T, P C_d^T + B_d S D_dd^T], [., D_dd S D_dd^T - S]] + B~ B~^T < 0``

    and its dual; the state blocks ``P, Q`` are balanced and truncated while
    the latent channels are kept.
    """
    r_x = _check_order(model, r_x)
    norm = _normalized(model)
    lfr = norm.to_lfr()
    n, nw = lfr.n_x, lfr.n_w
    At = np.block([[lfr.A, lfr.Bd], [lfr.Cd, lfr.Ddd]])
    Bt = np.vstack([lfr.Bu, lfr.Ddu])
    Ct = np.hstack([lfr.Cy, lfr.Dyd])
    ctrb, obsv = _pbh_margin(At, Bt), _pbh_margin(At.T, Ct.T)
    if ctrb < PBH_TOL or obsv < PBH_TOL:
        which = "controllable" if ctrb < PBH_TOL else "observable"
        raise NotApplicableError(f"extended LFR block is not {which} (PBH margin "
                                 f"{min(ctrb, obsv):.2e} < {PBH_TOL:g})")
    if not is_hurwitz(lfr.A)[0]:
        raise NotApplicableError("LTI core of the LFR is not Hurwitz")
    eps = 1e-8 * max(np.linalg.norm(At, 2), 1.0)

    def structured(A, Bd, Cd, Ddd, BB):
        prog = LmiProgram()
        vp = prog.variable(n)
        vs = prog.variable(nw) if nw else None

        def lmi(X):
            P = X[vp]
            S = X[vs] if nw else np.zeros((0, 0))
            top = A @ P + P @ A.T + Bd @ S @ Bd.T
            off = Cd @ P + Ddd @ S @ Bd.T
            bot = Ddd @ S @ Ddd.T - S
            return np.block([[top, off.T], [off, bot]]) + BB + eps * np.eye(n + nw)

        prog.constrain(lmi, name="structured")
        prog.constrain(lambda X: -X[vp], name="P")
        prog.minimize(vp, np.eye(n))
        if nw:
            prog.constrain(lambda X: -X[vs], name="S")
            prog.minimize(vs, np.eye(nw))
        sol = solve_lmi(prog, opts)
        if sol.status not in (OPTIMAL, FEASIBLE):
            raise NotApplicableError(f"structured gramian LMI returned status {sol.status}")
        return sol.variables[0], (sol.variables[1] if nw else np.zeros((0, 0)))

    P, S = structured(lfr.A, lfr.Bd, lfr.Cd, lfr.Ddd, Bt @ Bt.T)
    Q, R = structured(lfr.A.T, lfr.Cd.T, lfr.Bd.T, lfr.Ddd.T, Ct.T @ Ct)
    V, W, bt = _balanced_projection(P, Q, r_x, n)
    return _finish(model, V, W, "lfrbr", hsv=bt.hsv, P=P, Q=Q, S=S, R=R)


SOR_METHODS = {"ltibr": ltibr, "lpvbr": lpvbr, "mm": moment_match, "pvop": pvop, "lfrbr": lfrbr}
