"""Adversarial training with a norm-capped, penalized inner maximization.

Each outer step draws samples, finds an approximate maximizer of

    loss(net, x + delta) - lam * norm(delta)^2   subject to norm(delta) <= epsilon

by projected gradient ascent (norms taken in the transport weighting), and
descends the network parameters at the perturbed input.  ``epsilon`` caps the
conditional mean drift of the implied coupling; every perturbation used in
training therefore stays inside the epsilon-ball, which the trace records.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_matrix
from .core import Dataset
from .errors import DimensionMismatch
from .mnorm import WeightMatrix

CHECKPOINT_VERSION = 1


def _elu(z):
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def _elu_grad(z):
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))


class Mlp:
    """Small fully connected network, ELU hidden activations, softmax output.

    All derivatives are written out by hand so the input gradient needed by
    the inner maximization is exact.  Forward and backward passes are batched
    over rows.
    """

    def __init__(self, layer_sizes, seed=0, weights=None, biases=None):
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"need at least input and output sizes >= 1, got {sizes}")
        self.layer_sizes = sizes
        if weights is None:
            rng = np.random.default_rng(seed)
            self.weights = [
                rng.normal(0.0, math.sqrt(2.0 / sizes[i]), size=(sizes[i + 1], sizes[i]))
                for i in range(len(sizes) - 1)
            ]
            self.biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
        else:
            self.weights = [np.array(w, dtype=float) for w in weights]
            self.biases = [np.array(b, dtype=float) for b in biases]
            shapes = [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]
            if [w.shape for w in self.weights] != shapes:
                raise DimensionMismatch("weight shapes do not match layer_sizes")

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    @property
    def n_classes(self):
        return self.layer_sizes[-1]

    def _forward(self, x):
        """Return (logits, pre-activations per layer, activations per layer)."""
        a = x
        pre, acts = [], [a]
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            pre.append(z)
            a = z if l == last else _elu(z)
            acts.append(a)
        return a, pre, acts

    def logits(self, x):
        x = as_matrix(np.atleast_2d(x), "x")
        if x.shape[1] != self.n_inputs:
            raise DimensionMismatch(f"expected {self.n_inputs} inputs, got {x.shape[1]}")
        return self._forward(x)[0]

    def predict(self, x):
        return np.argmax(self.logits(x), axis=1)

    def losses_and_input_grads(self, x, labels):
        """Per-sample cross-entropy losses and gradients w.r.t. each input row."""
        losses, d_logits, pre, _ = self._ce_forward(x, labels)
        grad = d_logits
        for l in range(len(self.weights) - 1, 0, -1):
            grad = (grad @ self.weights[l]) * _elu_grad(pre[l - 1])
        return losses, grad @ self.weights[0]

    def forward_backward(self, x, labels):
        """Mean loss, parameter gradients, and per-sample input gradients."""
        losses, d_logits, pre, acts = self._ce_forward(x, labels)
        n = x.shape[0] if np.ndim(x) == 2 else 1
        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.weights)
        grad = d_logits / n
        for l in range(len(self.weights) - 1, -1, -1):
            grad_w[l] = grad.T @ acts[l]
            grad_b[l] = grad.sum(axis=0)
            if l > 0:
                grad = (grad @ self.weights[l]) * _elu_grad(pre[l - 1])
        grad_x = grad @ self.weights[0] * n  # undo the mean: per-sample input grads
        return float(losses.mean()), grad_w, grad_b, grad_x

    def _ce_forward(self, x, labels):
        x = as_matrix(np.atleast_2d(x), "x")
        labels = np.atleast_1d(np.asarray(labels, dtype=int))
        if x.shape[1] != self.n_inputs:
            raise DimensionMismatch(f"expected {self.n_inputs} inputs, got {x.shape[1]}")
        if labels.shape[0] != x.shape[0]:
            raise DimensionMismatch("labels must match the number of rows")
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise ValueError("label out of range")
        logits, pre, acts = self._forward(x)
        shifted = logits - logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
        losses = lse - logits[np.arange(x.shape[0]), labels]
        probs = np.exp(logits - lse[:, None])
        d_logits = probs.copy()
        d_logits[np.arange(x.shape[0]), labels] -= 1.0
        return losses, d_logits, pre, acts

    # -- checkpointing -------------------------------------------------------

    def to_checkpoint(self) -> dict:
        """JSON-serializable snapshot: version, layer sizes, row-major arrays."""
        return {
            "format_version": CHECKPOINT_VERSION,
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_checkpoint(cls, payload: dict) -> "Mlp":
        if payload.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {payload.get('format_version')}")
        return cls(payload["layer_sizes"], weights=payload["weights"], biases=payload["biases"])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_checkpoint(), fh)

    @classmethod
    def load(cls, path) -> "Mlp":
        with open(path) as fh:
            return cls.from_checkpoint(json.load(fh))


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for the adversarial training loop."""

    epsilon: float = 1.0
    lam: float = 2.0
    inner_steps: int = 15
    inner_lr: float = 0.5
    epochs: int = 50
    step0: float = 0.1
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.epochs < 1 or self.inner_steps < 0 or self.batch_size < 1:
            raise ValueError("epochs >= 1, inner_steps >= 0, batch_size >= 1 required")


@dataclass
class TrainTrace:
    epoch_robust_loss: list = field(default_factory=list)
    delta_norms: list = field(default_factory=list)  # one entry per training sample use
    classes: np.ndarray = None


def inner_maximize(net: Mlp, x, labels, weight: WeightMatrix, cfg: TrainConfig):
    """Projected ascent on ``loss - lam*norm(delta)^2`` inside the epsilon-ball.

    Steps are preconditioned by the inverse weighting (steepest ascent in the
    transport geometry) and normalized, with an ``epsilon * inner_lr /
    sqrt(step)`` decay; every iterate is projected, and the best iterate
    (including the feasible start ``delta = 0``) is returned per row, so the
    result never falls below the unperturbed objective.
    """
    x = as_matrix(np.atleast_2d(x), "x")
    labels = np.atleast_1d(np.asarray(labels, dtype=int))
    n = x.shape[0]
    trans = weight.transportable

    delta = np.zeros_like(x)
    losses, grads = net.losses_and_input_grads(x, labels)
    best_delta = delta.copy()
    best_val = losses.copy()  # penalty is zero at delta = 0

    for step in range(cfg.inner_steps):
        ascent = np.zeros_like(x)
        ascent[:, trans] = grads[:, trans] @ weight.q_inv
        ascent -= 2.0 * cfg.lam * delta
        norms = weight.norms(ascent)
        scale = cfg.epsilon * cfg.inner_lr / math.sqrt(step + 1.0)
        delta = delta + ascent * (scale / np.maximum(norms, 1e-300))[:, None]
        dnorm = weight.norms(delta)
        over = dnorm > cfg.epsilon
        if np.any(over):
            delta[over] *= (cfg.epsilon / dnorm[over])[:, None]
        losses, grads = net.losses_and_input_grads(x + delta, labels)
        vals = losses - cfg.lam * weight.norms(delta) ** 2
        improved = vals > best_val
        best_val[improved] = vals[improved]
        best_delta[improved] = delta[improved]
    return best_delta, best_val


def _curvature_probe(net, x, labels, delta, weight, lam):
    """Second difference of the loss along delta, vs. the concavity margin."""
    norms = weight.norms(delta)
    mask = norms > 1e-8
    if not np.any(mask):
        return
    x, labels, delta, norms = x[mask], labels[mask], delta[mask], norms[mask]
    l0, _ = net.losses_and_input_grads(x, labels)
    lp, _ = net.losses_and_input_grads(x + delta, labels)
    lm, _ = net.losses_and_input_grads(x - delta, labels)
    curvature = (lp - 2.0 * l0 + lm) / norms**2
    bound = 2.0 * lam * weight.min_eigenvalue
    if np.any(curvature > bound):
        warnings.warn(
            "inner objective may not be concave: empirical loss curvature "
            f"{float(curvature.max()):.3g} exceeds 2*lam*min_eig(M) = {bound:.3g}",
            RuntimeWarning,
            stacklevel=3,
        )


def train(net: Mlp, data: Dataset, weight: WeightMatrix, cfg: TrainConfig):
    """Adversarial SGD over the sample; deterministic under ``cfg.seed``.

    Sample order is reshuffled each epoch from a stream keyed by
    ``(seed, epoch)``; the inner maximization itself is deterministic.  The
    trace records the robust loss averaged over each epoch and the weighted
    norm of every perturbation used.
    """
    if data.targets is None:
        raise ValueError("training data needs targets")
    classes, labels = np.unique(data.targets, return_inverse=True)
    if classes.shape[0] != net.n_classes:
        raise DimensionMismatch(
            f"net has {net.n_classes} outputs but data has {classes.shape[0]} classes"
        )
    trace = TrainTrace(classes=classes)
    x_all = data.features
    n = data.n_samples
    global_step = 0
    probed = False
    for epoch in range(cfg.epochs):
        order = np.random.default_rng((cfg.seed, epoch)).permutation(n)
        epoch_vals = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb, yb = x_all[idx], labels[idx]
            delta, vals = inner_maximize(net, xb, yb, weight, cfg)
            if not probed:
                _curvature_probe(net, xb, yb, delta, weight, cfg.lam)
                probed = True
            trace.delta_norms.extend(weight.norms(delta).tolist())
            epoch_vals.extend(vals.tolist())
            _, grad_w, grad_b, _ = net.forward_backward(xb + delta, yb)
            t_k = cfg.step0 / math.sqrt(global_step + 1.0)
            for l in range(len(net.weights)):
                net.weights[l] -= t_k * grad_w[l]
                net.biases[l] -= t_k * grad_b[l]
            global_step += 1
        trace.epoch_robust_loss.append(float(np.mean(epoch_vals)))
    return net, trace
