"""Benchmark systems: interconnected mass-spring-dampers and a 2-DOF manipulator.

Each generator returns a :class:`BenchmarkBundle` holding the nonlinear
simulator, its affine LPV embedding and the scheduling map that makes the
embedding exact along trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import DimensionError
from .model import AffineLpvSs, SchedulingMap

T_S = 0.01
HORIZON = 60.0
PERIOD = 20.0


@dataclass(frozen=True)
class NonlinearModel:
    n_x: int
    n_u: int
    n_y: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    h: Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BenchmarkBundle:
    name: str
    nl: NonlinearModel
    lpv: AffineLpvSs
    eta: SchedulingMap
    config: dict = field(default_factory=dict)

    @property
    def nominal(self) -> np.ndarray:
        """Scheduling value at the origin (zero state, zero input)."""
        return self.eta(np.zeros(self.nl.n_x), np.zeros(self.nl.n_u))

    def metadata(self) -> dict:
        return {"name": self.name, "config": self.config, "n_x": self.lpv.n_x, "n_u": self.lpv.n_u,
                "n_y": self.lpv.n_y, "n_p": self.lpv.n_p}


# --- mass-spring-damper chains ---------------------------------------------------

MSD_PARAMS = {"m": 1.0, "k1": 0.5, "k2": 1.0, "b1": 1.0}


def msd_springs(n_masses: int) -> list:
    """Spring list in block order: block ``i`` owns its wall spring and, for
    ``i > 0``, the coupling to mass ``i - 1``. Entries are ``(i, j)`` with
    ``j = None`` for a wall connection."""
    springs = []
    for i in range(n_masses):
        springs.append((i, None))
        if i > 0:
            springs.append((i, i - 1))
    return springs


MSD_CONFIGS = {
    "msd1": {"n_masses": 5, "nonlinear": "all", "deflection": 1.5, "amplitudes": [8 / 3, 16 / 3, 8.0]},
    "msd2": {"n_masses": 50, "nonlinear": "last3", "deflection": 1.5, "amplitudes": [8 / 3, 16 / 3, 8.0]},
    "msd3": {"n_masses": 50, "nonlinear": "all", "deflection": 1.5, "amplitudes": [8 / 3, 16 / 3, 8.0]},
}


def _msd_mask(n_masses: int, nonlinear) -> np.ndarray:
    n_springs = 2 * n_masses - 1
    if isinstance(nonlinear, str):
        if nonlinear == "all":
            return np.ones(n_springs, dtype=bool)
        if nonlinear == "none":
            return np.zeros(n_springs, dtype=bool)
        if nonlinear.startswith("last"):
            k = int(nonlinear[4:])
            springs = msd_springs(n_masses)
            return np.array([j is None and i >= n_masses - k for i, j in springs])
        raise DimensionError(f"unknown nonlinear-spring selector {nonlinear!r}")
    mask = np.asarray(nonlinear, dtype=bool)
    if mask.shape != (n_springs,):
        raise DimensionError(f"spring mask must have length 2*N_m - 1 = {n_springs}, got {mask.size}")
    return mask


def build_msd(n_masses: int = 5, nonlinear="all", deflection: float = 1.0, name: str = "msd",
              params: dict | None = None, amplitudes=(1.0, 2.0, 3.0)) -> BenchmarkBundle:
    """Chain of ``n_masses`` blocks, force on the last mass, output its position.

    ``nonlinear`` selects the cubic springs: ``"all"``, ``"none"``,
    ``"lastK"`` (wall springs of the last K blocks) or an explicit boolean mask
    over :func:`msd_springs`. Each cubic spring contributes the scheduling
    variable ``p_j = (relative displacement)^2`` so that
    ``k1 d + k2 d^3 = (k1 + k2 p_j) d`` is affine in ``p``. The scheduling box
    is ``[0, deflection^2]`` per coordinate.
    """
    if n_masses < 1:
        raise DimensionError("need at least one mass")
    prm = dict(MSD_PARAMS, **(params or {}))
    m, k1, k2, b1 = prm["m"], prm["k1"], prm["k2"], prm["b1"]
    springs = msd_springs(n_masses)
    mask = _msd_mask(n_masses, nonlinear)
    n = 2 * n_masses
    # displacement selector d_j and force incidence g_j (velocity rows) per spring
    D = np.zeros((len(springs), n))
    G = np.zeros((n, len(springs)))
    for s, (i, j) in enumerate(springs):
        D[s, 2 * i] = 1.0
        G[2 * i + 1, s] = -1.0 / m
        if j is not None:
            D[s, 2 * j] = -1.0
            G[2 * j + 1, s] = 1.0 / m
    Dv = np.zeros_like(D)
    Dv[:, 1::2] = D[:, 0::2]
    A0 = G @ (k1 * D + b1 * Dv)
    A0[0::2, 1::2] += np.eye(n_masses)
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0 / m
    C = np.zeros((1, n))
    C[0, -2] = 1.0
    nl_idx = np.flatnonzero(mask)
    basis = np.zeros((nl_idx.size + 1, n + 1, n + 1))
    basis[0, :n, :n] = A0
    basis[0, :n, n:] = B
    basis[0, n:, :n] = C
    for q, s in enumerate(nl_idx):
        basis[q + 1, :n, :n] = k2 * np.outer(G[:, s], D[s])
    bounds = np.tile([0.0, deflection**2], (nl_idx.size, 1))
    lpv = AffineLpvSs(basis, n, 1, bounds)

    Dnl = D[nl_idx]
    k2vec = np.where(mask, k2, 0.0)

    def f(x, u):
        d = D @ x
        return A0 @ x + G @ (k2vec * d**3) + B[:, 0] * u[0]

    def h(x, u):
        return C @ x

    def eta(x, u):
        return (Dnl @ x) ** 2

    config = {"n_masses": n_masses, "nonlinear": nonlinear if isinstance(nonlinear, str) else mask.tolist(),
              "deflection": deflection, "params": prm, "amplitudes": list(amplitudes)}
    return BenchmarkBundle(name, NonlinearModel(n, 1, 1, f, h), lpv, SchedulingMap(eta, nl_idx.size), config)


# --- robot manipulator ----------------------------------------------------------

RM_PARAMS = {"a": 5.6794, "b": 1.473, "c": 1.7985, "d": 0.4, "e": 0.4, "f": 2.0, "n": 1.0}


def _sinc(q):
    return np.sinc(q / np.pi)


def build_robot_manipulator(q_max: float = 2 * np.pi, qd_max: float = 3.0,
                            amplitudes=(0.5, 1.0, 1.5)) -> BenchmarkBundle:
    """Two-link manipulator, ``x = (q1, q2, dq1, dq2)``, torque inputs, angle outputs.

    The LPV form has ten scheduling variables ``rho`` entering ``A`` and ``B``
    affinely; the scheduling box is the hull of ``eta`` over
    ``|q_i| <= q_max``, ``|dq_i| <= qd_max``.
    """
    a, b, c, d, e, f, n = (RM_PARAMS[k] for k in "abcdefn")

    def eta(x, u=None):
        q1, q2, dq1, dq2 = x
        cd, sd = np.cos(q1 - q2), np.sin(q1 - q2)
        h = a * c - b**2 * cd**2
        return np.array([
            np.ones_like(cd),
            cd,
            _sinc(q1),
            cd * _sinc(q2),
            -(b**2 * sd * cd * dq1 + (c + b * cd) * f),
            cd * f - c * sd * dq2,
            cd * _sinc(q1),
            _sinc(q2),
            a * b * sd * dq1 + f * (a + b * cd),
            b**2 * sd * cd * dq2 - a * f,
        ]) / h

    def fdyn(x, u):
        q1, q2, dq1, dq2 = x
        cd, sd = np.cos(q1 - q2), np.sin(q1 - q2)
        M = np.array([[a, b * cd], [b * cd, c]])
        cor = np.array([b * sd * dq2**2 + f * dq1, -b * sd * dq1**2 + f * (dq2 - dq1)])
        grav = np.array([-d * np.sin(q1), -e * np.sin(q2)])
        # gravity enters with a minus sign so that the printed A(rho) is an exact embedding
        ddq = np.linalg.solve(M, n * np.asarray(u) - cor - grav)
        return np.array([dq1, dq2, ddq[0], ddq[1]])

    def hout(x, u):
        return x[:2].copy()

    basis = np.zeros((11, 6, 6))
    basis[0, 0, 2] = basis[0, 1, 3] = 1.0
    basis[0, 4, 0] = basis[0, 5, 1] = 1.0
    # B(rho): columns 4, 5 of the joined matrix
    basis[1, 2, 4] = c * n
    basis[1, 3, 5] = a * n
    basis[2, 2, 5] = -b * n
    basis[2, 3, 4] = -b * n
    basis[3, 2, 0] = c * d
    basis[4, 2, 1] = -b * e
    basis[5, 2, 2] = 1.0
    basis[6, 2, 3] = b
    basis[7, 3, 0] = -b * d
    basis[8, 3, 1] = a * e
    basis[9, 3, 2] = 1.0
    basis[10, 3, 3] = 1.0

    axes = [np.linspace(-q_max, q_max, 49)] * 2 + [np.linspace(-qd_max, qd_max, 9)] * 2
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 4)
    rho = eta(pts.T).T
    bounds = np.column_stack([rho.min(0), rho.max(0)])
    lpv = AffineLpvSs(basis, 4, 2, bounds)
    config = {"q_max": q_max, "qd_max": qd_max, "params": RM_PARAMS, "amplitudes": list(amplitudes)}
    return BenchmarkBundle("rm", NonlinearModel(4, 2, 2, fdyn, hout), lpv, SchedulingMap(eta, 10), config)


def build_benchmark(name: str, **overrides) -> BenchmarkBundle:
    """Registered benchmarks: ``msd1``, ``msd2``, ``msd3``, ``rm``."""
    if name in MSD_CONFIGS:
        cfg = dict(MSD_CONFIGS[name], **overrides)
        return build_msd(cfg["n_masses"], cfg["nonlinear"], cfg["deflection"], name=name,
                         params=cfg.get("params"), amplitudes=cfg["amplitudes"])
    if name == "rm":
        return build_robot_manipulator(**overrides)
    raise KeyError(name)


BENCHMARKS = tuple(MSD_CONFIGS) + ("rm",)


# --- signals and grids ------------------------------------------------------------


def multisine(rng: np.random.Generator, n_samples: int, t_s: float = T_S, n_harmonics: int = 25,
              period: float = PERIOD) -> np.ndarray:
    """Random-phase multisine over the first ``n_harmonics`` harmonics of ``1 / period``, scaled to ``max|s| = 1``."""
    t = np.arange(n_samples) * t_s
    k = np.arange(1, n_harmonics + 1)
    phase = rng.uniform(0, 2 * np.pi, n_harmonics)
    s = np.cos(2 * np.pi * np.outer(t, k) / period + phase).sum(1)
    return s / np.abs(s).max()


def design_inputs(bundle: BenchmarkBundle, seed: int, t_s: float = T_S, horizon: float = HORIZON) -> dict:
    """Training and validation inputs with disjoint amplitude ranges.

    With amplitude levels ``a1 < a2 < a3``: ``u_train`` takes values in
    ``[-a1, a1]``, ``u_in`` has magnitude in ``[a1 + (a2 - a1)/20, a2]`` with
    the sign of the underlying multisine, and ``u_out`` lies in ``[-a3, a3]``,
    which covers values outside both other ranges.
    """
    a1, a2, a3 = bundle.config["amplitudes"]
    rng = np.random.default_rng(seed)
    n = int(round(horizon / t_s))
    n_u = bundle.lpv.n_u
    gap = (a2 - a1) / 20
    out = {}
    for key in ("u_train", "u_in", "u_out"):
        s = np.column_stack([multisine(rng, n, t_s) for _ in range(n_u)])
        if key == "u_train":
            out[key] = a1 * s
        elif key == "u_in":
            out[key] = np.where(s < 0, -1.0, 1.0) * (a1 + gap + (a2 - a1 - gap) * np.abs(s))
        else:
            out[key] = a3 * s
    return out


def design_grids(bundle: BenchmarkBundle, seed: int, train_fraction: float = 0.5,
                 n_train: int = 12, n_val: int = 21) -> dict:
    """Scattered scheduling grids from a scrambled Halton sequence.

    ``P_train`` and ``P_in`` are consecutive, hence disjoint, points inside the
    training box, which is the scheduling box shrunk towards the nominal
    scheduling value by ``train_fraction``. ``P_out`` spreads over the whole
    box; at least one of its points is forced outside the training box.
    """
    lpv = bundle.lpv
    lo, hi = lpv.bounds[:, 0], lpv.bounds[:, 1]
    nom = np.clip(bundle.nominal, lo, hi)
    tlo = nom + train_fraction * (lo - nom)
    thi = nom + train_fraction * (hi - nom)
    if lpv.n_p == 0:
        return {"train": np.zeros((n_train, 0)), "in": np.zeros((n_val, 0)), "out": np.zeros((n_val, 0))}
    h = qmc.Halton(d=lpv.n_p, scramble=True, seed=seed).random(n_train + n_val)
    train = tlo + h[:n_train] * (thi - tlo)
    inner = tlo + h[n_train:] * (thi - tlo)
    o = qmc.Halton(d=lpv.n_p, scramble=True, seed=seed + 1).random(n_val)
    outer = lo + o * (hi - lo)
    outside = np.any((outer < tlo - 1e-12) | (outer > thi + 1e-12), axis=1)
    if not outside.any():
        outer[-1] = hi
    return {"train": train, "in": inner, "out": outer}
