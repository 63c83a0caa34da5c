"""LPV state-space representations: affine form, LFR form and frozen LTI models.

The affine model stores the joined matrices

    L(p) = [[A(p), B(p)], [C(p), D(p)]] = L_0 + sum_i p_i L_i

as a single ``(n_p + 1, n_x + n_y, n_x + n_u)`` array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AlgebraicLoopError, DimensionError

RANK_RTOL = 1e-10


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LtiSs:
    """Continuous-time LTI model ``dx = Ax + Bu, y = Cx + Du``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float)
        C = np.asarray(self.C, dtype=float)
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if n == 0:
            A = np.zeros((0, 0))
            B = np.zeros((0, D.shape[1]))
            C = np.zeros((D.shape[0], 0))
        elif B.size % n or C.size % n:
            raise DimensionError(f"B ({B.shape}) or C ({C.shape}) does not fit n_x={n}")
        else:
            B, C = B.reshape(n, -1), C.reshape(-1, n)
        if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n:
            raise DimensionError(f"inconsistent state dimensions {A.shape}, {B.shape}, {C.shape}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(f"D has shape {D.shape}, expected {(C.shape[0], B.shape[1])}")
        for name, val in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, _frozen(val))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def freqresp(self, omega) -> np.ndarray:
        """Frequency response ``G(j w)`` stacked along the first axis."""
        omega = np.atleast_1d(omega)
        out = np.empty((omega.size, self.n_y, self.n_u), dtype=complex)
        eye = np.eye(self.n)
        for k, w in enumerate(omega):
            if self.n:
                out[k] = self.C @ np.linalg.solve(1j * w * eye - self.A, self.B) + self.D
            else:
                out[k] = self.D
        return out

    def __sub__(self, other: "LtiSs") -> "LtiSs":
        """Error system ``G - H`` as a parallel interconnection."""
        n1, n2 = self.n, other.n
        A = np.zeros((n1 + n2, n1 + n2))
        A[:n1, :n1] = self.A
        A[n1:, n1:] = other.A
        return LtiSs(A, np.vstack([self.B, other.B]), np.hstack([self.C, -other.C]), self.D - other.D)


@dataclass(frozen=True)
class SchedulingMap:
    """Scheduling map ``p = eta(x, u)``."""

    eta: Callable[[np.ndarray, np.ndarray], np.ndarray]
    n_p: int

    def __call__(self, x, u) -> np.ndarray:
        p = np.asarray(self.eta(np.asarray(x, dtype=float), np.asarray(u, dtype=float)), dtype=float)
        if p.shape != (self.n_p,):
            raise DimensionError(f"scheduling map returned shape {p.shape}, expected ({self.n_p},)")
        return p


@dataclass(frozen=True)
class AffineLpvSs:
    """Affine LPV state-space model in joined-matrix form.

    Parameters
    ----------
    basis : array_like, shape (n_p + 1, n_x + n_y, n_x + n_u)
        ``L_0, ..., L_{n_p}``.
    n_x : int
        State dimension; ``n_u`` and ``n_y`` follow from it and the basis shape
        once one of them is given.
    n_u : int
    bounds : array_like, shape (n_p, 2), optional
        Scheduling box, unbounded when omitted.
    """

    basis: np.ndarray
    n_x: int
    n_u: int
    bounds: np.ndarray = field(default=None)

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim == 2:
            basis = basis[None]
        if basis.ndim != 3:
            raise DimensionError("basis must be a stack of matrices")
        if basis.shape[2] < self.n_x or basis.shape[1] < self.n_x:
            raise DimensionError(f"basis shape {basis.shape} too small for n_x={self.n_x}")
        if basis.shape[2] != self.n_x + self.n_u:
            raise DimensionError(f"basis has {basis.shape[2]} columns, expected n_x + n_u = {self.n_x + self.n_u}")
        n_p = basis.shape[0] - 1
        if self.bounds is None:
            bounds = np.column_stack([np.full(n_p, -np.inf), np.full(n_p, np.inf)])
        else:
            bounds = np.asarray(self.bounds, dtype=float).reshape(n_p, 2)
        if np.any(bounds[:, 0] > bounds[:, 1]):
            raise DimensionError("scheduling bounds must satisfy lo <= hi")
        object.__setattr__(self, "basis", _frozen(basis))
        object.__setattr__(self, "bounds", _frozen(bounds))
        object.__setattr__(self, "n_x", int(self.n_x))
        object.__setattr__(self, "n_u", int(self.n_u))

    @property
    def n_y(self) -> int:
        return self.basis.shape[1] - self.n_x

    @property
    def n_p(self) -> int:
        return self.basis.shape[0] - 1

    def joined(self, p) -> np.ndarray:
        """``L(p)``; also accepts a ``(N, n_p)`` batch, returning ``(N, ., .)``."""
        p = np.asarray(p, dtype=float)
        if p.shape[-1:] != (self.n_p,) and not (self.n_p == 0 and p.size == 0):
            raise DimensionError(f"scheduling vector has length {p.shape[-1:]}, model has n_p={self.n_p}")
        if p.ndim == 1:
            return self.basis[0] + np.tensordot(p, self.basis[1:], axes=1)
        p = p.reshape(-1, self.n_p)
        return self.basis[0] + np.tensordot(p, self.basis[1:], axes=(1, 0))

    def eval(self, p) -> LtiSs:
        """Frozen LTI model at scheduling value ``p``."""
        L = self.joined(p)
        n = self.n_x
        return LtiSs(L[:n, :n], L[:n, n:], L[n:, :n], L[n:, n:])

    def in_bounds(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.bounds[:, 0] - tol) and np.all(p <= self.bounds[:, 1] + tol))

    def project(self, W: np.ndarray, V: np.ndarray) -> "AffineLpvSs":
        """Petrov-Galerkin state projection ``blkdiag(W^T, I) L_i blkdiag(V, I)``."""
        n = self.n_x
        r = V.shape[1]
        left = np.zeros((r + self.n_y, n + self.n_y))
        left[:r, :n] = W.T
        left[r:, n:] = np.eye(self.n_y)
        right = np.zeros((n + self.n_u, r + self.n_u))
        right[:n, :r] = V
        right[n:, r:] = np.eye(self.n_u)
        basis = np.einsum("ij,kjl,lm->kim", left, self.basis, right)
        return AffineLpvSs(basis, r, self.n_u, self.bounds)

    def to_lfr(self, rtol: float = RANK_RTOL) -> "LfrModel":
        """Pull the scheduling dependence out into a diagonal ``Delta`` block.

        Each ``L_i`` is factored as ``F_i G_i`` by a truncated SVD (singular
        values below ``rtol * sigma_max`` dropped) with the singular values
        split evenly between the two factors.
        """
        n, nu, ny = self.n_x, self.n_u, self.n_y
        lefts, rights, structure = [], [], []
        for i in range(1, self.n_p + 1):
            U, s, Vt = np.linalg.svd(self.basis[i], full_matrices=False)
            m = int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
            structure.append((i - 1, m))
            if m:
                root = np.sqrt(s[:m])
                lefts.append(U[:, :m] * root)
                rights.append(root[:, None] * Vt[:m])
        F = np.hstack(lefts) if lefts else np.zeros((n + ny, 0))
        G = np.vstack(rights) if rights else np.zeros((0, n + nu))
        L0 = self.basis[0]
        nw = F.shape[1]
        return LfrModel(
            A=L0[:n, :n], Bd=F[:n], Bu=L0[:n, n:],
            Cd=G[:, :n], Ddd=np.zeros((nw, nw)), Ddu=G[:, n:],
            Cy=L0[n:, :n], Dyd=F[n:], Dyu=L0[n:, n:],
            structure=tuple(structure), n_p=self.n_p,
        )

    def to_dict(self) -> dict:
        return {
            "n_x": self.n_x, "n_u": self.n_u, "n_y": self.n_y, "n_p": self.n_p,
            "basis": [m.tolist() for m in self.basis],
            "bounds": self.bounds.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AffineLpvSs":
        basis = np.array(d["basis"], dtype=float).reshape(d["n_p"] + 1, d["n_x"] + d["n_y"], d["n_x"] + d["n_u"])
        bounds = np.array(d["bounds"], dtype=float).reshape(d["n_p"], 2) if d["n_p"] else None
        return cls(basis, d["n_x"], d["n_u"], bounds)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "AffineLpvSs":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_lti(cls, A, B, C, D) -> "AffineLpvSs":
        m = LtiSs(A, B, C, D)
        L0 = np.block([[m.A, m.B], [m.C, m.D]])
        return cls(L0[None], m.n, m.n_u)


@dataclass(frozen=True)
class LfrModel:
    """LTI core in feedback with ``Delta(p) = diag(p_i I_{m_i})``.

    ``structure`` lists ``(scheduling index, multiplicity)`` pairs in channel
    order; zero multiplicities are kept so the mapping to ``p`` stays explicit.
    """

    A: np.ndarray
    Bd: np.ndarray
    Bu: np.ndarray
    Cd: np.ndarray
    Ddd: np.ndarray
    Ddu: np.ndarray
    Cy: np.ndarray
    Dyd: np.ndarray
    Dyu: np.ndarray
    structure: tuple
    n_p: int

    def __post_init__(self):
        for name in ("A", "Bd", "Bu", "Cd", "Ddd", "Ddu", "Cy", "Dyd", "Dyu"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        nw = sum(m for _, m in self.structure)
        if self.Bd.shape[1] != nw or self.Cd.shape[0] != nw or self.Ddd.shape != (nw, nw):
            raise DimensionError("latent channel dimensions do not match the Delta structure")

    @property
    def n_w(self) -> int:
        return self.Bd.shape[1]

    n_z = n_w

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    def channel_index(self) -> np.ndarray:
        """Scheduling index driving each latent channel."""
        return np.array([i for i, m in self.structure for _ in range(m)], dtype=int)

    def delta(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.n_p,):
            raise DimensionError(f"scheduling vector has shape {p.shape}, expected ({self.n_p},)")
        return np.diag(p[self.channel_index()]) if self.n_w else np.zeros((0, 0))

    def close(self, p) -> LtiSs:
        """Close ``w = Delta(p) z``; raises :class:`AlgebraicLoopError` if ill-posed."""
        Delta = self.delta(p)
        n = self.n_x
        M11 = np.block([[self.A, self.Bu], [self.Cy, self.Dyu]])
        if self.n_w:
            M12 = np.vstack([self.Bd, self.Dyd])
            M21 = np.hstack([self.Cd, self.Ddu])
            loop = np.eye(self.n_w) - self.Ddd @ Delta
            if np.linalg.cond(loop) > 1e12:
                raise AlgebraicLoopError("I - D_dd Delta(p) is singular")
            M11 = M11 + M12 @ Delta @ np.linalg.solve(loop, M21)
        return LtiSs(M11[:n, :n], M11[:n, n:], M11[n:, :n], M11[n:, n:])


def eval_model(model: AffineLpvSs, p) -> LtiSs:
    return model.eval(p)


def to_lfr(model: AffineLpvSs, rtol: float = RANK_RTOL) -> LfrModel:
    return model.to_lfr(rtol)


def close_lfr(lfr: LfrModel, p) -> LtiSs:
    return lfr.close(p)

