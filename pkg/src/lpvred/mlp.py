"""Minimal fully connected network with full-batch Adam training."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, TrainingDivergedError

ACTIVATIONS = {
    "tanh": (np.tanh, lambda y: 1.0 - y**2),
    "linear": (lambda z: z, lambda y: np.ones_like(y)),
}


class Mlp:
    """Dense layers ``a_{k+1} = act_k(a_k W_k + b_k)`` acting on row-sample matrices.

    Parameters
    ----------
    widths : sequence of int
        Layer widths including input and output.
    activations : sequence of str
        One of ``"tanh"`` or ``"linear"`` per weight layer.
    weights, biases : list of ndarray, optional
        Initial parameters; Glorot-uniform weights and zero biases otherwise.
    seed : int
        Seed for the default initialization.
    """

    def __init__(self, widths, activations, weights=None, biases=None, seed: int = 0):
        self.widths = [int(w) for w in widths]
        self.activations = list(activations)
        if len(self.activations) != len(self.widths) - 1:
            raise DimensionError("need one activation per weight layer")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise DimensionError(f"unknown activation {a!r}")
        if weights is None:
            rng = np.random.default_rng(seed)
            weights = []
            for n_in, n_out in zip(self.widths[:-1], self.widths[1:]):
                lim = np.sqrt(6.0 / (n_in + n_out)) if n_in + n_out else 0.0
                weights.append(rng.uniform(-lim, lim, (n_in, n_out)))
        if biases is None:
            biases = [np.zeros(w) for w in self.widths[1:]]
        self.weights = [np.array(w, dtype=float).reshape(a, b)
                        for w, a, b in zip(weights, self.widths[:-1], self.widths[1:])]
        self.biases = [np.array(b, dtype=float).reshape(n) for b, n in zip(biases, self.widths[1:])]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "Mlp":
        return Mlp(self.widths, self.activations, [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases])

    def _forward(self, X):
        acts = [X]
        for W, b, a in zip(self.weights, self.biases, self.activations):
            acts.append(ACTIVATIONS[a][0](acts[-1] @ W + b))
        return acts

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        out = self._forward(np.atleast_2d(X))[-1]
        return out[0] if single else out

    def gradients(self, X, Y):
        """Mean-squared-error loss and its gradients with respect to all parameters."""
        acts = self._forward(X)
        err = acts[-1] - Y
        loss = float(np.mean(err**2))
        delta = 2.0 * err / err.size
        gW, gb = [None] * self.n_layers, [None] * self.n_layers
        for k in reversed(range(self.n_layers)):
            delta = delta * ACTIVATIONS[self.activations[k]][1](acts[k + 1])
            gW[k] = acts[k].T @ delta
            gb[k] = delta.sum(axis=0)
            delta = delta @ self.weights[k].T
        return loss, gW, gb

    def sub(self, start: int, stop: int) -> "Mlp":
        """Network made of weight layers ``start:stop``."""
        return Mlp(self.widths[start:stop + 1], self.activations[start:stop],
                   [w.copy() for w in self.weights[start:stop]], [b.copy() for b in self.biases[start:stop]])

    def to_dict(self) -> dict:
        return {"widths": self.widths, "activations": self.activations,
                "weights": [w.tolist() for w in self.weights], "biases": [b.tolist() for b in self.biases]}

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        return cls(d["widths"], d["activations"], d["weights"], d["biases"])


@dataclass(frozen=True)
class TrainOptions:
    epochs: int = 5000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    plateau_window: int = 200
    plateau_tol: float = 1e-7
    seed: int = 0


@dataclass
class TrainResult:
    net: Mlp
    losses: list = field(default_factory=list)


def train_mlp(net: Mlp, inputs, targets, options: TrainOptions | None = None, trainable=None) -> TrainResult:
    """Full-batch Adam on the mean squared error.

    Training stops after ``options.epochs`` epochs or once the loss decreased
    by less than ``plateau_tol`` (relative) over ``plateau_window`` epochs.
    ``trainable`` optionally restricts updates to the listed layer indices.
    The input network is not modified.
    """
    opt = options or TrainOptions()
    X = np.asarray(inputs, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if X.shape[0] != Y.shape[0]:
        raise DimensionError("inputs and targets need the same number of samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise DimensionError("training data must be finite")
    net = net.copy()
    layers = range(net.n_layers) if trainable is None else list(trainable)
    mW = [np.zeros_like(w) for w in net.weights]
    vW = [np.zeros_like(w) for w in net.weights]
    mb = [np.zeros_like(b) for b in net.biases]
    vb = [np.zeros_like(b) for b in net.biases]
    losses = []
    b1, b2, eps = opt.beta1, opt.beta2, 1e-8
    for epoch in range(1, opt.epochs + 1):
        loss, gW, gb = net.gradients(X, Y)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"loss became non-finite at epoch {epoch}")
        losses.append(loss)
        c1, c2 = 1 - b1**epoch, 1 - b2**epoch
        for k in layers:
            for p, g, m, v in ((net.weights[k], gW[k], mW[k], vW[k]), (net.biases[k], gb[k], mb[k], vb[k])):
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g**2
                p -= opt.lr * (m / c1) / (np.sqrt(v / c2) + eps)
        w = opt.plateau_window
        if len(losses) > w and losses[-w - 1] - losses[-1] < opt.plateau_tol * losses[-w - 1]:
            break
    if opt.epochs > 0:
        final = float(np.mean((net(X) - Y) ** 2))
        if not np.isfinite(final):
            raise TrainingDivergedError("final loss is not finite")
        losses.append(final)
    return TrainResult(net, losses)
