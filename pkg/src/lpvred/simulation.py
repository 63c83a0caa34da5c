"""Fixed-step simulation of nonlinear and self-scheduled LPV models, and error metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .benchmarks import T_S
from .errors import DimensionError, UndefinedMetricError
from .model import AffineLpvSs, LtiSs
from .numerics import h2_norm, hinf_norm, is_hurwitz

DIVERGENCE_BOUND = 1e9
FEEDTHROUGH_RTOL = 1e-12


@dataclass(frozen=True)
class Trajectory:
    """Sampled signals, one row per instant ``k * t_s``.

    Samples after a detected divergence are ``inf``.
    """

    t_s: float
    u: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray = field(default=None)
    diverged: bool = False

    def __post_init__(self):
        n = len(self.u)
        p = np.zeros((n, 0)) if self.p is None else np.asarray(self.p, dtype=float).reshape(n, -1)
        object.__setattr__(self, "p", p)
        for name in ("x", "y"):
            if len(getattr(self, name)) != n:
                raise DimensionError(f"trajectory field {name} has {len(getattr(self, name))} samples, expected {n}")

    @property
    def n_samples(self) -> int:
        return len(self.u)

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.t_s

    def to_csv(self, path) -> None:
        cols = [("u", self.u), ("x", self.x), ("y", self.y), ("p", self.p)]
        header = ["t"] + [f"{name}{i + 1}" for name, a in cols for i in range(a.shape[1])]
        data = np.column_stack([self.t] + [a for _, a in cols])
        write_csv(path, header, data)

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        header, data = read_csv(path)
        idx = {k: [i for i, h in enumerate(header) if h.rstrip("0123456789") == k] for k in "uxyp"}
        t = data[:, 0]
        t_s = float(t[1] - t[0]) if len(t) > 1 else T_S
        x = data[:, idx["x"]]
        return cls(t_s, data[:, idx["u"]], x, data[:, idx["y"]], data[:, idx["p"]],
                   diverged=bool(np.any(~np.isfinite(x))))


def write_csv(path, header, rows) -> None:
    """Write numeric rows with shortest round-trip float formatting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.atleast_2d(rows):
            w.writerow([repr(float(v)) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


class SelfScheduled:
    """Affine LPV model closed over its own scheduling signal ``p = schedule(x, u)``.

    The right-hand side uses the low-rank factors of :meth:`AffineLpvSs.to_lfr`,
    ``L(p) = L_0 + F diag(p[idx]) G``, which is much cheaper than summing the
    basis when ``n_p`` is large.
    """

    def __init__(self, model: AffineLpvSs, schedule: Callable[[np.ndarray, np.ndarray], np.ndarray]):
        self.model = model
        self.schedule = schedule
        lfr = model.to_lfr()
        n = model.n_x
        self._L0 = model.basis[0]
        self._F = np.vstack([lfr.Bd, lfr.Dyd])
        self._G = np.hstack([lfr.Cd, lfr.Ddu])
        self._idx = lfr.channel_index()
        self.n_x, self.n_u, self.n_y = n, model.n_u, model.n_y

    def _joined_times(self, x, u):
        p = np.asarray(self.schedule(x, u), dtype=float)
        xu = np.concatenate([x, u])
        out = self._L0 @ xu
        if self._idx.size:
            out = out + self._F @ (p[self._idx] * (self._G @ xu))
        return out, p

    def f(self, x, u):
        return self._joined_times(x, u)[0][: self.n_x]

    def h(self, x, u):
        return self._joined_times(x, u)[0][self.n_x:]


def simulate(system, u, x0=None, t_s: float = T_S, horizon: float | None = None,
             eta: Callable | None = None) -> Trajectory:
    """Integrate ``system`` with classical RK4 and zero-order-hold input.

    Parameters
    ----------
    system : NonlinearModel or SelfScheduled
    u : array_like, shape (N, n_u)
        Input samples; ``u[k]`` is held on ``[k t_s, (k + 1) t_s)``.
    x0 : array_like, optional
        Initial state, zero by default.
    horizon : float, optional
        Truncates ``u`` to ``round(horizon / t_s)`` samples.
    eta : callable, optional
        Scheduling map recorded in ``Trajectory.p``; defaults to
        ``system.schedule`` for self-scheduled models.
    """
    if t_s <= 0:
        raise DimensionError("t_s must be positive")
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if horizon is not None:
        u = u[: int(round(horizon / t_s))]
    n_steps, n_x = len(u), system.n_x
    if u.shape[1] != system.n_u:
        raise DimensionError(f"input has {u.shape[1]} channels, system expects {system.n_u}")
    x = np.zeros(n_x) if x0 is None else np.asarray(x0, dtype=float).copy()
    eta = eta or getattr(system, "schedule", None)
    f, h = system.f, system.h
    if n_steps and not np.all(np.isfinite(f(x, u[0]))):
        raise DimensionError("dynamics are not finite at the initial state")

    X = np.full((n_steps, n_x), np.inf)
    Y = np.full((n_steps, system.n_y), np.inf)
    n_p = len(eta(x, u[0])) if (eta is not None and n_steps) else 0
    P = np.full((n_steps, n_p), np.inf)
    diverged = False
    half = 0.5 * t_s
    for k in range(n_steps):
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_BOUND:
            diverged = True
            break
        uk = u[k]
        X[k] = x
        Y[k] = h(x, uk)
        if n_p:
            P[k] = eta(x, uk)
        if k == n_steps - 1:
            break
        k1 = f(x, uk)
        k2 = f(x + half * k1, uk)
        k3 = f(x + half * k2, uk)
        k4 = f(x + t_s * k3, uk)
        with np.errstate(over="ignore", invalid="ignore"):
            x = x + (t_s / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return Trajectory(t_s, u, X, Y, P, diverged)


def nrmse(y_ref, y_test) -> float:
    """Normalized RMS output error in percent, stacked over all channels.

    ``100 * ||y_ref - y_test||_F / ||y_ref - mean(y_ref)||_F`` with the mean
    taken per channel; ``inf`` if ``y_test`` is not finite.
    """
    y_ref = np.asarray(y_ref, dtype=float)
    y_test = np.asarray(y_test, dtype=float)
    if y_ref.shape != y_test.shape:
        raise DimensionError(f"signal shapes differ: {y_ref.shape} vs {y_test.shape}")
    if y_ref.ndim == 1:
        y_ref, y_test = y_ref[:, None], y_test[:, None]
    den = np.linalg.norm(y_ref - y_ref.mean(axis=0))
    if den == 0:
        raise UndefinedMetricError("reference output is constant")
    if not np.all(np.isfinite(y_test)):
        return np.inf
    return float(100.0 * np.linalg.norm(y_ref - y_test) / den)


# --- local frequency-domain errors ------------------------------------------------

POINT_HEADER = ("lambda2", "lambdainf", "stable", "feedthrough")


@dataclass(frozen=True)
class MetricReport:
    """Per-point local errors plus the summary over stable points.

    ``stable[i]`` is false when either frozen model is not Hurwitz; such points
    are excluded from every summary statistic. ``feedthrough[i]`` marks stable
    points whose error system has a direct term, where ``lambda2`` is ``inf``.
    """

    points: np.ndarray
    lambda2: np.ndarray
    lambdainf: np.ndarray
    stable: np.ndarray
    feedthrough: np.ndarray
    nrmse: float | None = None

    @property
    def summary(self) -> dict:
        out = summarize(self.lambda2, self.lambdainf, self.stable)
        if self.nrmse is not None:
            out = {"nrmse": self.nrmse, **out}
        return out

    def to_csv(self, path) -> None:
        n_p = self.points.shape[1]
        header = ["index"] + [f"p{i + 1}" for i in range(n_p)] + list(POINT_HEADER)
        rows = np.column_stack([np.arange(len(self.stable)), self.points, self.lambda2, self.lambdainf,
                                self.stable.astype(float), self.feedthrough.astype(float)])
        write_csv(path, header, rows)

    @classmethod
    def from_csv(cls, path, nrmse: float | None = None) -> "MetricReport":
        header, data = read_csv(path)
        pcols = [i for i, h in enumerate(header) if h.startswith("p")]
        col = {h: i for i, h in enumerate(header)}
        return cls(data[:, pcols], data[:, col["lambda2"]], data[:, col["lambdainf"]],
                   data[:, col["stable"]] > 0, data[:, col["feedthrough"]] > 0, nrmse)


def _stats(v: np.ndarray) -> tuple:
    if v.size == 0:
        return np.nan, np.nan, np.nan
    std = float(np.std(v, ddof=1)) if v.size > 1 and np.all(np.isfinite(v)) else (0.0 if v.size == 1 else np.inf)
    return float(np.mean(v)), float(np.max(v)), std


def summarize(lambda2, lambdainf, stable) -> dict:
    """Mean, max and sample standard deviation over the stable points."""
    stable = np.asarray(stable, dtype=bool)
    l2 = np.asarray(lambda2, dtype=float)[stable]
    li = np.asarray(lambdainf, dtype=float)[stable]
    m2, x2, s2 = _stats(l2)
    mi, xi, si = _stats(li)
    n = stable.size
    return {
        "lambda2_mean": m2, "lambda2_max": x2, "lambda2_std": s2,
        "lambdainf_mean": mi, "lambdainf_max": xi, "lambdainf_std": si,
        "n_points": n, "n_unstable": int(n - stable.sum()),
        "unstable_ratio": 100.0 * (n - stable.sum()) / n if n else 0.0,
    }


def _frozen_reduced(reduced, p) -> LtiSs:
    if hasattr(reduced, "frozen"):
        return reduced.frozen(p)
    return reduced.eval(p)


def local_errors(full: AffineLpvSs, reduced, grid, hinf_tol: float = 1e-6) -> MetricReport:
    """Local H2 / H-infinity norms of ``G_p - G_hat_p`` over ``grid``.

    ``reduced`` is an :class:`AffineLpvSs` sharing the scheduling of ``full``
    or any object with a ``frozen(p) -> LtiSs`` method (reduction results).
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] == 0:
        raise DimensionError("grid is empty")
    n = grid.shape[0]
    l2, li = np.full(n, np.inf), np.full(n, np.inf)
    stable = np.zeros(n, dtype=bool)
    feed = np.zeros(n, dtype=bool)
    for i, p in enumerate(grid):
        G = full.eval(p)
        Gr = _frozen_reduced(reduced, p)
        if not (is_hurwitz(G.A)[0] and is_hurwitz(Gr.A)[0]):
            continue
        stable[i] = True
        if all(np.array_equal(a, b) for a, b in zip((G.A, G.B, G.C, G.D), (Gr.A, Gr.B, Gr.C, Gr.D))):
            l2[i] = li[i] = 0.0
            continue
        E = G - Gr
        # a direct term at round-off level is a zero feedthrough, not an infinite H2 error
        tol = FEEDTHROUGH_RTOL * max(1.0, float(np.max(np.abs(G.D), initial=0.0)))
        E = LtiSs(E.A, E.B, E.C, np.where(np.abs(E.D) <= tol, 0.0, E.D))
        feed[i] = bool(np.any(E.D != 0))
        l2[i] = h2_norm(E)
        li[i] = hinf_norm(E, hinf_tol)
    return MetricReport(grid, l2, li, stable, feed)
