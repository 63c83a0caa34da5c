"""Scheduling-dimension reduction: replace ``p`` by a lower-dimensional ``phi = mu(p)``.

Every method returns an :class:`SdrResult` whose reduced model is affine in
``phi`` and whose encoder maps full scheduling vectors to ``phi``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .errors import DimensionError, InsufficientDataError, NotApplicableError, ResourceError
from .mlp import Mlp, TrainOptions, train_mlp
from .model import AffineLpvSs, LtiSs
from .numerics import _psd_factor, balance, gramians, is_hurwitz
from .simulation import SelfScheduled, Trajectory

KPCA_MAX_SAMPLES = 4000
SDRBR_SHIFT = 1e-3


# --- data ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SchedulingData:
    """Scheduling samples along a trajectory with their normalizations.

    ``gamma = (p - offset) / scale`` column-wise (``n_p x N``); ``gamma_m``
    holds the varying entries ``m_index`` of ``vec L(p(k))``, centered and
    divided by the single factor ``m_scale``.
    """

    p: np.ndarray
    offset: np.ndarray
    scale: np.ndarray
    gamma: np.ndarray
    gamma_m: np.ndarray
    m_offset: np.ndarray
    m_scale: float
    m_index: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.p.shape[0]

    def normalize(self, p) -> np.ndarray:
        return (np.asarray(p, dtype=float) - self.offset) / self.scale

    def denormalize(self, g) -> np.ndarray:
        return self.offset + np.asarray(g, dtype=float) * self.scale


def _drop_roundoff(centered: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Zero columns whose spread is at round-off level of the raw values ``ref``."""
    tol = 64 * np.finfo(float).eps * np.max(np.abs(ref), axis=0, initial=0.0)
    keep = np.max(np.abs(centered), axis=0, initial=0.0) > tol
    return centered * keep


def _max_abs_scale(X: np.ndarray, axis=None):
    s = np.max(np.abs(X), axis=axis) if X.size else np.zeros(X.shape[1 - axis] if axis is not None else ())
    return np.where(s > 0, s, 1.0)


def _vec_basis(model: AffineLpvSs):
    """``vec L(p) = l0 + Lam p`` (row-major vectorization)."""
    flat = model.basis.reshape(model.n_p + 1, -1)
    return flat[0], flat[1:].T


def collect_scheduling(traj: Trajectory | np.ndarray, model: AffineLpvSs) -> SchedulingData:
    """Centered and scaled scheduling data ``Gamma`` and matrix data ``Gamma_m``."""
    p = traj.p if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    p = np.atleast_2d(p)
    if p.shape[1] != model.n_p:
        raise DimensionError(f"scheduling samples have {p.shape[1]} channels, model has n_p={model.n_p}")
    if p.shape[0] < 2:
        raise InsufficientDataError("need at least two scheduling samples")
    if not np.all(np.isfinite(p)):
        raise InsufficientDataError("scheduling samples contain non-finite values (diverged trajectory)")
    offset = p.mean(axis=0)
    centered = _drop_roundoff(p - offset, p)
    scale = _max_abs_scale(centered, axis=0)
    l0, lam = _vec_basis(model)
    active = np.flatnonzero(np.any(lam != 0, axis=1))
    m_offset = l0[active] + lam[active] @ offset
    dm = _drop_roundoff(centered @ lam[active].T, l0[active] + p @ lam[active].T)
    m_scale = float(_max_abs_scale(dm))
    return SchedulingData(p, offset, scale, (centered / scale).T, (dm / m_scale).T, m_offset, m_scale, active)


# --- encoders ----------------------------------------------------------------------


class AffineEncoder:
    """``phi = M (p - offset)``."""

    def __init__(self, matrix, offset):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.offset = np.asarray(offset, dtype=float).ravel()

    @property
    def n_out(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, p):
        return (np.asarray(p, dtype=float) - self.offset) @ self.matrix.T

    def to_dict(self):
        return {"type": "affine", "matrix": self.matrix.tolist(), "offset": self.offset.tolist()}


class AffineDecoder:
    """``p_bar = offset + M phi``."""

    def __init__(self, matrix, offset):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.offset = np.asarray(offset, dtype=float).ravel()

    def __call__(self, phi):
        return self.offset + np.asarray(phi, dtype=float) @ self.matrix.T

    def to_dict(self):
        return {"type": "affine-decoder", "matrix": self.matrix.tolist(), "offset": self.offset.tolist()}


def _poly_kernel(A, B, degree):
    return (A @ B.T + 1.0) ** degree


class KernelEncoder:
    """Nystrom projection onto kernel principal components of the training samples."""

    def __init__(self, samples, offset, scale, degree, alphas, row_mean, total_mean):
        self.samples = np.asarray(samples, dtype=float)
        self.offset = np.asarray(offset, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.degree = int(degree)
        self.alphas = np.asarray(alphas, dtype=float).reshape(len(self.samples), -1)
        self.row_mean = np.asarray(row_mean, dtype=float)
        self.total_mean = float(total_mean)

    @property
    def n_out(self) -> int:
        return self.alphas.shape[1]

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        single = p.ndim == 1
        g = (np.atleast_2d(p) - self.offset) / self.scale
        # far outside the training data the kernel overflows; inf then marks divergence
        with np.errstate(over="ignore", invalid="ignore"):
            k = _poly_kernel(g, self.samples, self.degree)
            kc = k - self.row_mean - k.mean(axis=1, keepdims=True) + self.total_mean
            out = kc @ self.alphas
        return out[0] if single else out

    def to_dict(self):
        return {"type": "kernel", "samples": self.samples.tolist(), "offset": self.offset.tolist(),
                "scale": self.scale.tolist(), "degree": self.degree, "alphas": self.alphas.tolist(),
                "row_mean": self.row_mean.tolist(), "total_mean": self.total_mean}


class MlpEncoder:
    """``phi = net((p - offset) / scale)``."""

    def __init__(self, net: Mlp, offset, scale):
        self.net = net
        self.offset = np.asarray(offset, dtype=float)
        self.scale = np.asarray(scale, dtype=float)

    @property
    def n_out(self) -> int:
        return self.net.widths[-1]

    def __call__(self, p):
        return self.net((np.asarray(p, dtype=float) - self.offset) / self.scale)

    def to_dict(self):
        return {"type": "mlp", "net": self.net.to_dict(), "offset": self.offset.tolist(), "scale": self.scale.tolist()}


class MlpDecoder(MlpEncoder):
    """``p_bar = offset + scale * net(phi)``."""

    def __call__(self, phi):
        return self.offset + self.scale * self.net(np.asarray(phi, dtype=float))

    def to_dict(self):
        return dict(super().to_dict(), type="mlp-decoder")


def encoder_from_dict(d: dict | None):
    if d is None:
        return None
    kind = d["type"]
    if kind == "affine":
        return AffineEncoder(d["matrix"], d["offset"])
    if kind == "affine-decoder":
        return AffineDecoder(d["matrix"], d["offset"])
    if kind == "kernel":
        return KernelEncoder(d["samples"], d["offset"], d["scale"], d["degree"], d["alphas"],
                             d["row_mean"], d["total_mean"])
    if kind in ("mlp", "mlp-decoder"):
        cls = MlpEncoder if kind == "mlp" else MlpDecoder
        return cls(Mlp.from_dict(d["net"]), d["offset"], d["scale"])
    raise DimensionError(f"unknown encoder type {kind!r}")


# --- results ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SdrResult:
    reduced: AffineLpvSs
    mu: object
    mu_inv: object | None
    method: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_phi(self) -> int:
        return self.reduced.n_p

    def frozen(self, p) -> LtiSs:
        return self.reduced.eval(self.mu(p))

    def self_scheduled(self, eta) -> SelfScheduled:
        """Reduced model scheduled by ``mu(eta(x, u))``."""
        mu = self.mu
        return SelfScheduled(self.reduced, lambda x, u: mu(eta(x, u)))

    def to_dict(self) -> dict:
        from .sor import _jsonable

        return {"kind": "sdr", "method": self.method, "model": self.reduced.to_dict(),
                "mu": self.mu.to_dict(), "mu_inv": None if self.mu_inv is None else self.mu_inv.to_dict(),
                "diagnostics": _jsonable(self.diagnostics)}

    @classmethod
    def from_dict(cls, d: dict) -> "SdrResult":
        return cls(AffineLpvSs.from_dict(d["model"]), encoder_from_dict(d["mu"]), encoder_from_dict(d.get("mu_inv")),
                   d["method"], d.get("diagnostics", {}))


def _phi_bounds(phi: np.ndarray) -> np.ndarray:
    return np.column_stack([phi.min(axis=0), phi.max(axis=0)]) if phi.size else np.zeros((phi.shape[1], 2))


def _substitute(model: AffineLpvSs, offset, decode, bounds=None) -> AffineLpvSs:
    """Model in ``phi`` obtained from ``p = offset + decode @ phi`` (exactly affine)."""
    b = model.basis
    basis = np.empty((decode.shape[1] + 1,) + b.shape[1:])
    basis[0] = b[0] + np.tensordot(offset, b[1:], axes=1)
    basis[1:] = np.tensordot(decode.T, b[1:], axes=1)
    return AffineLpvSs(basis, model.n_x, model.n_u, bounds)


def _check_dim(model: AffineLpvSs, n_phi: int) -> int:
    n_phi = int(n_phi)
    if n_phi < 0:
        raise DimensionError("n_phi must be nonnegative")
    return n_phi


def _identity(model: AffineLpvSs, method: str, **diag) -> SdrResult:
    n = model.n_p
    return SdrResult(model, AffineEncoder(np.eye(n), np.zeros(n)), AffineDecoder(np.eye(n), np.zeros(n)),
                     method, dict(diag, identity=True))


# --- methods ---------------------------------------------------------------------------


def fit_reduced_matrices(model: AffineLpvSs, phi, p, bounds=None) -> AffineLpvSs:
    """Least-squares affine matrices ``M_0 + sum_j phi_j M_j`` matching ``L(p(k))``.

    Because ``L`` is affine in ``p``, the fit reduces to regressing ``[1, p]``
    on ``[1, phi]``; the pseudo-inverse gives the minimum-norm solution when
    the regressor is rank deficient (a warning is issued).
    """
    phi = np.asarray(phi, dtype=float).reshape(len(p), -1)
    p = np.asarray(p, dtype=float).reshape(len(phi), model.n_p)
    X = np.column_stack([np.ones(len(phi)), phi])
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        warnings.warn(f"rank-deficient regressor in matrix fit (rank {rank} < {X.shape[1]}), "
                      "returning the minimum-norm solution", RuntimeWarning, stacklevel=2)
    theta = np.linalg.pinv(X) @ np.column_stack([np.ones(len(p)), p])
    basis = np.tensordot(theta, model.basis, axes=1)
    return AffineLpvSs(basis, model.n_x, model.n_u, bounds if bounds is not None else _phi_bounds(phi))


def pca_reduce(data: SchedulingData, model: AffineLpvSs, n_phi: int) -> SdrResult:
    """Project the normalized scheduling data onto its ``n_phi`` leading principal directions."""
    n_phi = _check_dim(model, n_phi)
    n_phi = min(n_phi, model.n_p)
    U, s, _ = np.linalg.svd(data.gamma, full_matrices=False)
    if U.shape[1] < model.n_p:
        U = np.linalg.qr(np.hstack([U, np.eye(model.n_p)]))[0][:, : model.n_p]
    Us = U[:, :n_phi]
    enc = AffineEncoder(Us.T / data.scale, data.offset)
    dec_matrix = data.scale[:, None] * Us
    phi = enc(data.p)
    reduced = _substitute(model, data.offset, dec_matrix, _phi_bounds(phi))
    sv = np.zeros(model.n_p)
    sv[: s.size] = s
    return SdrResult(reduced, enc, AffineDecoder(dec_matrix, data.offset), "pca",
                     {"singular_values": sv, "discarded_energy": float(np.sum(sv[n_phi:] ** 2))})


def tpca_reduce(data: SchedulingData, model: AffineLpvSs, n_phi: int) -> SdrResult:
    """Principal directions of the matrix variation ``Gamma_m`` with equal entry weighting."""
    n_phi = _check_dim(model, n_phi)
    if data.gamma_m.shape[0] == 0:
        # no matrix entry varies: the constant fit is exact
        reduced = fit_reduced_matrices(model, np.zeros((data.n_samples, 0)), data.p)
        return SdrResult(reduced, AffineEncoder(np.zeros((0, model.n_p)), data.offset), None, "tpca")
    U, s, _ = np.linalg.svd(data.gamma_m, full_matrices=False)
    n_phi = min(n_phi, U.shape[1])
    Ut = U[:, :n_phi]
    _, lam = _vec_basis(model)
    enc = AffineEncoder(Ut.T @ lam[data.m_index] / data.m_scale, data.offset)
    basis = np.zeros((n_phi + 1, model.basis[0].size))
    basis[0] = model.joined(data.offset).ravel()
    basis[1:, data.m_index] = data.m_scale * Ut.T
    phi = enc(data.p)
    reduced = AffineLpvSs(basis.reshape((n_phi + 1,) + model.basis.shape[1:]), model.n_x, model.n_u, _phi_bounds(phi))
    return SdrResult(reduced, enc, None, "tpca", {"singular_values": s})


def kpca_reduce(data: SchedulingData, model: AffineLpvSs, n_phi: int, degree: int = 8,
                max_samples: int = KPCA_MAX_SAMPLES, stride: int = 1) -> SdrResult:
    """Kernel PCA with ``k(a, b) = (a^T b + 1)^degree`` on normalized samples.

    Uses every ``stride``-th sample; more than ``max_samples`` retained samples
    raises :class:`ResourceError` since the dense Gram matrix is ``N x N``.
    """
    n_phi = _check_dim(model, n_phi)
    if n_phi >= model.n_p:
        return _identity(model, "kpca")
    G = data.gamma.T[::max(int(stride), 1)]
    N = G.shape[0]
    if N > max_samples:
        raise ResourceError(f"kernel PCA on {N} samples exceeds the limit of {max_samples}; increase the stride")
    K = _poly_kernel(G, G, degree)
    row_mean = K.mean(axis=0)
    total = float(K.mean())
    Kc = K - row_mean[None, :] - row_mean[:, None] + total
    w, E = np.linalg.eigh(0.5 * (Kc + Kc.T))
    order = np.argsort(w)[::-1]
    w, E = w[order], E[:, order]
    lead = np.maximum(w[:n_phi], np.finfo(float).tiny)
    alphas = E[:, :n_phi] / np.sqrt(lead)
    enc = KernelEncoder(G, data.offset, data.scale, degree, alphas, row_mean, total)
    phi = enc(data.p)
    reduced = fit_reduced_matrices(model, phi, data.p)
    return SdrResult(reduced, enc, None, "kpca", {"eigenvalues": w[: max(n_phi, 10)], "n_samples": N})


def sdrbr_reduce(model: AffineLpvSs, n_phi: int, shift: float = SDRBR_SHIFT,
                 weighting: str = "gramian") -> SdrResult:
    """Balanced truncation of the latent channels (the roles of state and Delta swapped).

    The swapped system has ``D_dd`` as its state matrix, ``[C_d, D_du]`` as
    input and ``[B_d; D_yd]`` as output matrix. Affine models give
    ``D_dd = 0``, which is replaced by ``-shift * I`` before balancing. With
    projections ``V, W`` onto ``n_phi`` channels, the reduced block is
    ``diag(phi)`` with ``phi_j = [W^T Delta(p) V]_jj``, linear in ``p``.

    Parameters
    ----------
    weighting : {"gramian", "none"}
        ``"gramian"`` weights the swapped input ``[x; u]`` with
        ``blkdiag(P, I)`` and the swapped output ``[dx; y]`` with
        ``blkdiag(Q, I)``, where ``P, Q`` are the gramians of the nominal
        LTI core from ``[u; w]`` to ``[y; z]``. Channels are then ranked by
        how strongly the dynamics excite them and how much they reach the
        output, instead of by static gains alone (which tie for identical
        channels). Falls back to ``"none"`` with a warning if the nominal
        core is not Hurwitz.
    """
    n_phi = _check_dim(model, n_phi)
    if weighting not in ("gramian", "none"):
        raise DimensionError(f"unknown weighting {weighting!r}")
    lfr = model.to_lfr()
    nw = lfr.n_w
    if n_phi >= nw:
        return _identity(model, "sdrbr", shift=shift)
    Bs = np.hstack([lfr.Cd, lfr.Ddu])
    Cs = np.vstack([lfr.Bd, lfr.Dyd])
    if weighting == "gramian":
        if is_hurwitz(lfr.A)[0]:
            core = LtiSs(lfr.A, np.hstack([lfr.Bu, lfr.Bd]), np.vstack([lfr.Cy, lfr.Cd]),
                         np.zeros((model.n_y + nw, model.n_u + nw)))
            gc = gramians(core)
            Bs = Bs @ block_diag(_psd_factor(gc.P), np.eye(model.n_u))
            Cs = block_diag(_psd_factor(gc.Q).T, np.eye(model.n_y)) @ Cs
        else:
            warnings.warn("nominal core is not Hurwitz, using unweighted channel balancing")
            weighting = "none"
    Ds = lfr.Ddd if np.any(lfr.Ddd != 0) else -shift * np.eye(nw)
    swapped = LtiSs(Ds, Bs, Cs, np.zeros((Cs.shape[0], Bs.shape[1])))
    try:
        g = gramians(swapped)
    except Exception as exc:
        raise NotApplicableError(f"swapped latent-channel system is not stable: {exc}") from exc
    bt = balance(g.P, g.Q)
    if n_phi > nw - bt.deficient:
        raise NotApplicableError(f"swapped system has only {nw - bt.deficient} minimal channels, "
                                 f"cannot keep {n_phi}")
    V, W = bt.truncation(n_phi)
    idx = lfr.channel_index()
    E = np.zeros((n_phi, model.n_p))
    for k, i in enumerate(idx):
        E[:, i] += W[k] * V[k]
    F = np.vstack([lfr.Bd, lfr.Dyd]) @ V
    Gm = W.T @ np.hstack([lfr.Cd, lfr.Ddu])
    basis = np.empty((n_phi + 1,) + model.basis.shape[1:])
    basis[0] = model.basis[0]
    for j in range(n_phi):
        basis[j + 1] = np.outer(F[:, j], Gm[j])
    lo, hi = model.bounds[:, 0], model.bounds[:, 1]
    # interval image of the scheduling box under the linear encoder
    bounds = np.column_stack([np.minimum(E * lo, E * hi).sum(1), np.maximum(E * lo, E * hi).sum(1)])
    bounds = np.where(np.isfinite(bounds), bounds, np.nan)
    if np.isnan(bounds).any():
        bounds = None
    reduced = AffineLpvSs(basis, model.n_x, model.n_u, bounds)
    return SdrResult(reduced, AffineEncoder(E, np.zeros(model.n_p)), None, "sdrbr",
                     {"shift": shift, "weighting": weighting, "hsv": bt.hsv})


def _train_options(options) -> TrainOptions:
    if options is None:
        return TrainOptions()
    if isinstance(options, dict):
        return TrainOptions(**options)
    return options


def ae_reduce(data: SchedulingData, model: AffineLpvSs, n_phi: int, hidden: int | None = None,
              options=None, activation: str = "tanh") -> SdrResult:
    """Autoencoder ``n_p -> h -> n_phi -> h -> n_p`` trained to reconstruct ``Gamma``."""
    n_phi = _check_dim(model, n_phi)
    if n_phi >= model.n_p:
        return _identity(model, "ae")
    opt = _train_options(options)
    h = hidden or 2 * model.n_p
    X = data.gamma.T
    net = Mlp([model.n_p, h, n_phi, h, model.n_p], [activation, "linear", activation, "linear"], seed=opt.seed)
    res = train_mlp(net, X, X, opt)
    enc = MlpEncoder(res.net.sub(0, 2), data.offset, data.scale)
    dec = MlpDecoder(res.net.sub(2, 4), data.offset, data.scale)
    phi = enc(data.p)
    reduced = fit_reduced_matrices(model, phi, data.p)
    return SdrResult(reduced, enc, dec, "ae", {"loss": res.losses[-1], "epochs": len(res.losses) - 1})


def dnn_reduce(data: SchedulingData, model: AffineLpvSs, n_phi: int, hidden: int | None = None,
               options=None, activation: str = "tanh") -> SdrResult:
    """Encoder network followed by a trainable affine matrix decoder, fitted to ``Gamma_m``.

    The last layer's weights are the reduced matrices (in the normalized
    ``Gamma_m`` coordinates); they are warm-started by least squares on the
    initial encoder output.
    """
    n_phi = _check_dim(model, n_phi)
    if n_phi >= model.n_p:
        return _identity(model, "dnn")
    opt = _train_options(options)
    h = hidden or 2 * model.n_p
    X = data.gamma.T
    Y = data.gamma_m.T
    n_out = Y.shape[1]
    net = Mlp([model.n_p, h, n_phi, n_out], [activation, "linear", "linear"], seed=opt.seed)
    phi0 = net.sub(0, 2)(X)
    Xr = np.column_stack([np.ones(len(phi0)), phi0])
    theta, *_ = np.linalg.lstsq(Xr, Y, rcond=None)
    net.biases[2] = theta[0].copy()
    net.weights[2] = theta[1:].copy()
    res = train_mlp(net, X, Y, opt)
    enc = MlpEncoder(res.net.sub(0, 2), data.offset, data.scale)
    W, b = res.net.weights[2], res.net.biases[2]
    basis = np.zeros((n_phi + 1, model.basis[0].size))
    basis[0] = model.joined(data.offset).ravel()
    basis[0, data.m_index] = data.m_offset + data.m_scale * b
    basis[1:, data.m_index] = data.m_scale * W
    phi = enc(data.p)
    reduced = AffineLpvSs(basis.reshape((n_phi + 1,) + model.basis.shape[1:]), model.n_x, model.n_u,
                          _phi_bounds(phi))
    return SdrResult(reduced, enc, None, "dnn", {"loss": res.losses[-1], "epochs": len(res.losses) - 1})


SDR_METHODS = {"pca": pca_reduce, "tpca": tpca_reduce, "kpca": kpca_reduce, "sdrbr": sdrbr_reduce,
               "ae": ae_reduce, "dnn": dnn_reduce}
