"""Dense linear-algebra kernels: Lyapunov equations, balancing, system norms."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .errors import StabilityError
from .model import LtiSs


H2_FLOOR_FACTOR = 1e3


@dataclass(frozen=True)
class GramianPair:
    P: np.ndarray
    Q: np.ndarray


@dataclass(frozen=True)
class BalancingTransform:
    """Balancing transform restricted to the regular subspace.

    ``T`` is ``k x n`` and ``T_inv`` is ``n x k`` with ``T @ T_inv = I_k``;
    ``k = n - deficient``. For full-rank gramians both are square inverses.
    """

    T: np.ndarray
    T_inv: np.ndarray
    hsv: np.ndarray
    deficient: int = 0

    def truncation(self, r: int):
        """Right and left projection ``(V, W)`` onto the ``r`` leading states."""
        return self.T_inv[:, :r], self.T[:r].T


def is_hurwitz(A) -> tuple[bool, float]:
    """Return ``(max Re lambda(A) < 0, spectral abscissa)``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return True, -np.inf
    alpha = float(np.max(np.linalg.eigvals(A).real))
    return alpha < 0, alpha


def solve_lyapunov(A, W) -> np.ndarray:
    """Solve ``A P + P A^T + W = 0`` for Hurwitz ``A`` (Bartels-Stewart)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if A.size == 0:
        return np.zeros((0, 0))
    stable, alpha = is_hurwitz(A)
    if not stable:
        raise StabilityError(f"A is not Hurwitz (spectral abscissa {alpha:.3g})")
    P = linalg.solve_continuous_lyapunov(A, -W)
    return 0.5 * (P + P.T)


def gramians(m: LtiSs) -> GramianPair:
    return GramianPair(solve_lyapunov(m.A, m.B @ m.B.T), solve_lyapunov(m.A.T, m.C.T @ m.C))


def _psd_factor(X, rtol=1e-13):
    """``R`` with ``R R^T = X``; Cholesky when it succeeds, else a clipped eigen-factor."""
    X = 0.5 * (X + X.T)
    try:
        return np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        d, Z = np.linalg.eigh(X)
        keep = d > rtol * max(d.max(initial=0.0), np.finfo(float).tiny)
        return Z[:, keep] * np.sqrt(d[keep])


def balance(P, Q, rtol: float = 1e-12) -> BalancingTransform:
    """Square-root balancing of the gramian pair ``(P, Q)``.

    With ``P = R R^T``, ``Q = L L^T`` and ``L^T R = U S Z^T`` the transform is
    ``T = S^{-1/2} U^T L^T``, ``T^{-1} = R Z S^{-1/2}``, so that
    ``T P T^T = T^{-T} Q T^{-1} = S``. Directions with ``s <= rtol * s_max``
    are dropped and counted in ``deficient``.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = P.shape[0]
    R = _psd_factor(P)
    L = _psd_factor(Q)
    U, s, Zt = np.linalg.svd(L.T @ R, full_matrices=False)
    k = int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
    root = 1.0 / np.sqrt(s[:k])
    T = root[:, None] * (U[:, :k].T @ L.T)
    T_inv = (R @ Zt[:k].T) * root
    hsv = np.zeros(n)
    hsv[: s.size] = s
    return BalancingTransform(T, T_inv, hsv, n - k)


def hsv(m: LtiSs) -> np.ndarray:
    g = gramians(m)
    return balance(g.P, g.Q).hsv


def balanced_truncation(m: LtiSs, r: int):
    """Classical balanced truncation; returns ``(reduced, V, W, hsv)``."""
    g = gramians(m)
    bt = balance(g.P, g.Q)
    V, W = bt.truncation(r)
    red = LtiSs(W.T @ m.A @ V, W.T @ m.B, m.C @ V, m.D)
    return red, V, W, bt.hsv


def h2_norm(m: LtiSs) -> float:
    """H2 norm; ``inf`` for nonzero feed-through or non-Hurwitz ``A``."""
    if np.any(m.D != 0):
        return np.inf
    if m.n == 0:
        return 0.0
    if not is_hurwitz(m.A)[0]:
        return np.inf
    P = solve_lyapunov(m.A, m.B @ m.B.T)
    h2sq = float(np.trace(m.C @ P @ m.C.T))
    # The trace carries an absolute error of order eps * |C|^2 |P|, so near-zero
    # norms (error systems of exact reductions) come out near sqrt(eps). Below
    # that floor the integral of |G(jw)|_F^2 is evaluated directly instead.
    floor = H2_FLOOR_FACTOR * np.finfo(float).eps * np.linalg.norm(m.C) ** 2 * np.linalg.norm(P, 2)
    if h2sq > floor:
        return float(np.sqrt(h2sq))
    return _h2_by_quadrature(m)


def _h2_by_quadrature(m: LtiSs) -> float:
    """``(1/pi) * integral_0^inf |G(jw)|_F^2 dw`` with ``w = tan(theta)``."""
    def integrand(theta):
        w = np.tan(theta)
        return float(np.sum(np.abs(m.freqresp(w)[0]) ** 2)) * (1.0 + w * w)

    with warnings.catch_warnings():
        # an integrand at round-off level need not converge to a relative tolerance
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(integrand, 0.0, 0.5 * np.pi, epsabs=0.0, epsrel=1e-6, limit=200)
    return float(np.sqrt(max(val, 0.0) / np.pi))


def _sigma_max(m: LtiSs, omega) -> np.ndarray:
    return np.array([np.linalg.norm(G, 2) for G in m.freqresp(omega)])


def _imaginary_crossings(m: LtiSs, gamma: float) -> np.ndarray:
    """Frequencies where ``sigma_max(G(jw)) = gamma`` (Hamiltonian eigenvalues on jR)."""
    A, B, C, D = m.A, m.B, m.C, m.D
    R = gamma**2 * np.eye(m.n_u) - D.T @ D
    Rinv = np.linalg.inv(R)
    Ah = A + B @ Rinv @ D.T @ C
    H = np.block([
        [Ah, B @ Rinv @ B.T],
        [-C.T @ (np.eye(m.n_y) + D @ Rinv @ D.T) @ C, -Ah.T],
    ])
    lam = np.linalg.eigvals(H)
    scale = max(1.0, np.linalg.norm(H, 1))
    on_axis = np.abs(lam.real) < 1e-7 * scale
    w = np.abs(lam.imag[on_axis])
    return np.unique(np.round(w, 12))


def _certified_peak(m: LtiSs, gamma: float):
    """Largest ``sigma_max`` near the crossings at level ``gamma``, or ``None``.

    Crossings whose frequency response stays below ``gamma`` are artifacts of
    an ill-conditioned Hamiltonian and are discarded.
    """
    w = _imaginary_crossings(m, gamma)
    if w.size == 0:
        return None
    # midpoints between crossings hold the local peaks
    cand = np.concatenate([w, 0.5 * (w[1:] + w[:-1])])
    peak = float(_sigma_max(m, cand).max())
    return peak if peak >= gamma * (1 - 1e-9) else None


def hinf_norm(m: LtiSs, tol: float = 1e-6) -> float:
    """H-infinity norm by bisection on the Hamiltonian imaginary-eigenvalue test.

    The bracket starts from ``sigma_max`` on a log grid over ``[1e-3, 1e3]``
    rad/s. Each tested level either produces crossing frequencies, whose
    ``sigma_max`` values become a certified lower bound, or none, which makes
    it an upper bound.
    """
    sig_d = float(np.linalg.norm(m.D, 2)) if m.D.size else 0.0
    if m.n == 0:
        return sig_d
    if not is_hurwitz(m.A)[0]:
        return np.inf
    grid = np.concatenate([[0.0], np.logspace(-3, 3, 200)])
    lo = max(sig_d, float(_sigma_max(m, grid).max()))
    if lo == 0.0:
        return 0.0
    hi = 2.0 * lo
    while (peak := _certified_peak(m, hi)) is not None:
        lo = max(lo, peak)
        hi = 2.0 * max(hi, peak)
    while hi - lo > tol * lo:
        gamma = 0.5 * (lo + hi)
        peak = _certified_peak(m, gamma)
        if peak is None:
            hi = gamma
        else:
            # a certified crossing at gamma proves the norm reaches gamma; taking at
            # least gamma keeps the bracket shrinking when peak is within the slack
            lo = min(max(peak, gamma), hi)
    return 0.5 * (lo + hi)
