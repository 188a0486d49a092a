"""Losses, the ADAM optimizer and the training loop."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import container
from .errors import ConsistencyError, ShapeError, TrainingError


@dataclass(frozen=True)
class LossConfig:
    """``kind`` is ``"mse"`` or ``"mse_plus_symmetry"`` (ISTA-nets)."""

    kind: str = "mse"
    gamma: float = 0.01
    n_p: int = 10

    def __post_init__(self):
        if self.kind not in ("mse", "mse_plus_symmetry"):
            raise ValueError(f"unknown loss kind {self.kind!r}")

    @classmethod
    def for_network(cls, net, **kwargs):
        return cls("mse_plus_symmetry" if net.family == "ista" else "mse", **kwargs)


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 4
    clip_norm: float | None = 10.0


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, cfg):
        return cls(cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)


def mse_loss(output, reference):
    """Batch mean of per-sample squared L2 error; unbatched input counts as one sample."""
    output = ad.as_tensor(output)
    reference = ad.as_tensor(reference)
    if output.shape != reference.shape:
        raise ShapeError(f"mse_loss: output {output.shape} vs reference {reference.shape}")
    n = output.shape[0] if output.ndim == 4 else 1
    return ad.sum_squares(output - reference) / float(n)


def symmetry_loss(net, m_hat, n_p=None):
    """Batch mean of ``sum_k ||G_tilde_k(G_k(m_hat)) - m_hat||^2`` over the first ``n_p`` stages."""
    if getattr(net, "family", None) != "ista":
        raise ValueError("symmetry_loss applies to ISTA-nets only")
    m_hat = ad.as_tensor(m_hat)
    n = m_hat.shape[0] if m_hat.ndim == 4 else 1
    total = None
    for res in net.symmetry_residuals(m_hat, n_p):
        term = ad.sum_squares(res)
        total = term if total is None else total + term
    if total is None:
        return ad.Tensor(np.array(0.0))
    return total / float(n)


def total_loss(net, output, reference, cfg):
    """Training objective and its MSE part, as graph tensors."""
    mse = mse_loss(output, reference)
    if cfg.kind == "mse_plus_symmetry":
        return mse + cfg.gamma * symmetry_loss(net, output, cfg.n_p), mse
    return mse, mse


def clip_gradients(store, max_norm):
    """Scale all gradients so their global norm is at most ``max_norm``; returns the pre-clip norm."""
    norm = store.grad_norm()
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for _, t in store.items():
            if t.grad is not None:
                t.grad = t.grad * scale
    return norm


def adam_step(store, state):
    """Bias-corrected ADAM update of every parameter, then clear gradients."""
    missing = [name for name, t in store.items() if t.grad is None]
    if missing:
        raise ConsistencyError(f"no gradient for {len(missing)} parameter(s), e.g. {missing[0]!r}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, t in store.items():
        g = t.grad
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - b1) * g if m is None else b1 * m + (1 - b1) * g
        v = (1 - b2) * g * g if v is None else b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        t.data = t.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    store.zero_grad()


@dataclass
class TrainResult:
    checkpoint: dict
    best_epoch: int
    best_val: float
    curve: list  # rows (epoch, train_loss, train_mse, val_loss)
    final_state: dict

    def curve_rows(self):
        return [{"epoch": e, "train_loss": tl, "val_loss": vl} for e, tl, _, vl in self.curve]


CURVE_HEADER = ("epoch", "train_loss", "val_loss")


def loss_and_grad(net, A, f, ref, loss_cfg):
    """Forward, loss and backward on one batch; gradients are zero-filled first."""
    net.params.zero_grad(set_to_none=False)
    loss, mse = total_loss(net, net(A, f), ref, loss_cfg)
    loss.backward()
    return float(loss.data), float(mse.data)


def evaluate_loss(net, dataset, batch_size=4):
    """Mean per-sample MSE of the network over a dataset (no graph is built)."""
    if len(dataset) == 0:
        return float("nan")
    total = 0.0
    with ad.no_grad():
        for lo in range(0, len(dataset), batch_size):
            idx = np.arange(lo, min(lo + batch_size, len(dataset)))
            A, f, ref = dataset.batch(idx)
            out = net(A, f)
            total += float(np.sum((out.data - ref) ** 2))
    return total / len(dataset)


def train(net, train_set, val_set=None, loss_cfg=None, adam_cfg=None, epochs=10, seed=0,
          callback=None):
    """Minibatch ADAM training with best-validation checkpointing.

    Each epoch visits the training set in a seeded random order. Training
    loss is the mean batch objective; validation loss is mean per-sample
    MSE (training MSE when no validation set is given). A non-finite loss
    raises :class:`TrainingError` carrying the best checkpoint so far.
    """
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    loss_cfg = loss_cfg or LossConfig.for_network(net)
    adam_cfg = adam_cfg or AdamConfig()
    state = AdamState.from_config(adam_cfg)
    rng = np.random.default_rng(seed)
    best = net.params.state_dict()
    best_epoch, best_val = 0, float("inf")
    curve = []
    n = len(train_set)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        losses, mses, weights = [], [], []
        for lo in range(0, n, adam_cfg.batch_size):
            idx = np.sort(order[lo:lo + adam_cfg.batch_size])
            A, f, ref = train_set.batch(idx)
            loss, mse = loss_and_grad(net, A, f, ref, loss_cfg)
            if not np.isfinite(loss) or not np.isfinite(net.params.grad_norm()):
                net.params.zero_grad()
                raise TrainingError(f"non-finite loss at epoch {epoch}", checkpoint=best, curve=curve)
            clip_gradients(net.params, adam_cfg.clip_norm)
            adam_step(net.params, state)
            losses.append(loss)
            mses.append(mse)
            weights.append(len(idx))
        train_loss = float(np.average(losses, weights=weights))
        train_mse = float(np.average(mses, weights=weights))
        val = evaluate_loss(net, val_set if val_set is not None and len(val_set) else train_set,
                            adam_cfg.batch_size)
        if not np.isfinite(val):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}", checkpoint=best, curve=curve)
        curve.append((epoch, train_loss, train_mse, val))
        if val < best_val:
            best, best_epoch, best_val = net.params.state_dict(), epoch, val
        if callback is not None:
            callback(epoch, train_loss, val)
    return TrainResult(best, best_epoch, best_val, curve, net.params.state_dict())


def save_checkpoint(path, net, state=None, attrs=None):
    """Store parameters (float64) and the network manifest in a container file."""
    params = net.params.state_dict() if state is None else state
    meta = {"network": net.manifest(), **(attrs or {})}
    container.write(path, dict(params), meta)


def load_checkpoint(path):
    """Return ``(state_dict, attrs)`` from a checkpoint file."""
    return container.read(path)
