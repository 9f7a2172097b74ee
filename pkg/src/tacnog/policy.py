"""Feedforward policy N: Z_T -> R and its time-to-go wrapper.

The network is trained on fixed-horizon data (horizon T).  Any other
time-to-go t_g is served through the scaling identity

    u*(t_g, x, y, theta) = (T / t_g) * N(T x / t_g, T y / t_g, theta).
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .frames import wrap_angle

ARCH = (3, 20, 20, 1)


class ExpiredHorizon(ValueError):
    pass


class TrainConfigError(ValueError):
    pass


class WeightsFormatError(ValueError):
    pass


@dataclass(eq=False)
class PolicyNetwork:
    layers: list[tuple[np.ndarray, np.ndarray]]
    T: float
    in_shift: np.ndarray
    in_scale: np.ndarray
    out_shift: float = 0.0
    out_scale: float = 1.0
    activation: str = "tanh"

    @property
    def arch(self) -> list[int]:
        return [self.layers[0][0].shape[1]] + [W.shape[0] for W, _ in self.layers]

    @classmethod
    def init(cls, T: float, arch=ARCH, seed: int = 0) -> "PolicyNetwork":
        """Glorot-uniform weights, zero biases, identity normalisation."""
        rng = np.random.default_rng(seed)
        layers = []
        for n_in, n_out in zip(arch[:-1], arch[1:]):
            lim = math.sqrt(6.0 / (n_in + n_out))
            layers.append((rng.uniform(-lim, lim, (n_out, n_in)), np.zeros(n_out)))
        return cls(layers, float(T), np.zeros(arch[0]), np.ones(arch[0]))

    def copy(self) -> "PolicyNetwork":
        return PolicyNetwork(
            [(W.copy(), b.copy()) for W, b in self.layers],
            self.T, self.in_shift.copy(), self.in_scale.copy(),
            self.out_shift, self.out_scale, self.activation,
        )

    def normalize_inputs(self, Z) -> np.ndarray:
        Z = np.array(Z, dtype=float, ndmin=2)
        Z[:, 2] = wrap_angle(Z[:, 2])
        return (Z - self.in_shift) / self.in_scale

    def raw_forward(self, A: np.ndarray) -> np.ndarray:
        """Normalised inputs (n, 3) -> normalised outputs (n,)."""
        for W, b in self.layers[:-1]:
            A = np.tanh(A @ W.T + b)
        W, b = self.layers[-1]
        return (A @ W.T + b)[:, 0]

    def __call__(self, Z) -> np.ndarray:
        return self.raw_forward(self.normalize_inputs(Z)) * self.out_scale + self.out_shift


def net_forward(net: PolicyNetwork, z) -> float:
    return float(net(np.asarray(z, dtype=float)[None, :])[0])


def feedback_control(net: PolicyNetwork, t_g: float, z_c) -> float:
    """Control at time-to-go t_g from canonical state z_c = (x, y, theta)."""
    if not t_g > 0:
        raise ExpiredHorizon(f"time-to-go must be positive, got {t_g}")
    lam = net.T / t_g
    z = np.asarray(z_c, dtype=float)
    return lam * net_forward(net, (lam * z[0], lam * z[1], z[2]))


# --- training -------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 256
    lr: float = 0.05
    momentum: float = 0.9
    lr_decay: float = 0.5
    decay_every: int = 100
    val_fraction: float = 0.1
    seed: int = 0
    optimizer: str = "momentum"

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainConfigError("epochs must be >= 1")
        if not 0 < self.val_fraction < 1:
            raise TrainConfigError("validation fraction must lie in (0, 1)")
        if self.optimizer not in ("momentum", "adam"):
            raise TrainConfigError(f"unknown optimizer {self.optimizer!r}")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** (epoch // self.decay_every)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    # RMSE of U in physical (denormalised) units on the held-out split
    val_rmse: float = math.nan
    val_control_std: float = math.nan
    n_train: int = 0
    n_val: int = 0


def loss_and_grads(net: PolicyNetwork, A: np.ndarray, y: np.ndarray):
    """Mean squared error in normalised output units and its gradient with
    respect to every (W, b)."""
    acts = [A]
    for W, b in net.layers[:-1]:
        acts.append(np.tanh(acts[-1] @ W.T + b))
    W, b = net.layers[-1]
    out = (acts[-1] @ W.T + b)[:, 0]
    err = out - y
    n = len(y)
    loss = float(np.mean(err**2))
    g = (2.0 / n) * err[:, None]
    grads = []
    for k in range(len(net.layers) - 1, -1, -1):
        W, _ = net.layers[k]
        grads.append((g.T @ acts[k], g.sum(axis=0)))
        if k:
            g = (g @ W) * (1.0 - acts[k] ** 2)
    return loss, grads[::-1]


def split_mask(Q: np.ndarray, val_fraction: float) -> np.ndarray:
    """Validation membership from a hash of each record's q, so the split
    does not depend on record order."""
    cut = int(round(val_fraction * 2**32))
    out = np.empty(len(Q), dtype=bool)
    for i, q in enumerate(Q):
        d = hashlib.blake2b(struct.pack("<3d", *q), digest_size=4).digest()
        out[i] = int.from_bytes(d, "little") < cut
    return out


def train(Z, U, Q, cfg: TrainConfig = TrainConfig(), T: float = 1.5, log=None):
    """Fit N on (state, control) pairs; returns (best network, history)."""
    Z = np.asarray(Z, dtype=float)
    U = np.asarray(U, dtype=float)
    if len(U) == 0:
        raise TrainConfigError("empty dataset")
    val = split_mask(np.asarray(Q, dtype=float), cfg.val_fraction)
    if val.all() or not val.any():
        # tiny datasets: fall back to a seeded split so both sides are non-empty
        rng = np.random.default_rng(cfg.seed)
        val = np.zeros(len(U), dtype=bool)
        if len(U) > 1:
            val[rng.permutation(len(U))[: max(1, int(round(cfg.val_fraction * len(U))))]] = True
    tr = ~val if val.any() else np.ones(len(U), dtype=bool)
    if tr.sum() < cfg.batch_size:
        raise TrainConfigError(
            f"training split has {int(tr.sum())} records, fewer than batch size {cfg.batch_size}"
        )
    net = PolicyNetwork.init(T, seed=cfg.seed)
    Zt = Z[tr].copy()
    Zt[:, 2] = wrap_angle(Zt[:, 2])
    net.in_shift = Zt.mean(axis=0)
    net.in_scale = np.where(Zt.std(axis=0) > 0, Zt.std(axis=0), 1.0)
    net.out_shift = float(U[tr].mean())
    net.out_scale = float(U[tr].std()) or 1.0

    A_tr = net.normalize_inputs(Z[tr])
    y_tr = (U[tr] - net.out_shift) / net.out_scale
    A_va = net.normalize_inputs(Z[val]) if val.any() else A_tr
    y_va = (U[val] - net.out_shift) / net.out_scale if val.any() else y_tr

    rng = np.random.default_rng(cfg.seed + 1)
    hist = TrainHistory(n_train=int(tr.sum()), n_val=int(val.sum()))
    vel = [(np.zeros_like(W), np.zeros_like(b)) for W, b in net.layers]
    sq = [(np.zeros_like(W), np.zeros_like(b)) for W, b in net.layers]
    step = 0
    best = (math.inf, net.copy())
    n = len(y_tr)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        perm = rng.permutation(n)
        tot = 0.0
        for s in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            idx = perm[s : s + cfg.batch_size]
            loss, grads = loss_and_grads(net, A_tr[idx], y_tr[idx])
            tot += loss * len(idx)
            step += 1
            new_layers = []
            for k, ((W, b), (gW, gb)) in enumerate(zip(net.layers, grads)):
                if cfg.optimizer == "momentum":
                    vW = cfg.momentum * vel[k][0] - lr * gW
                    vb = cfg.momentum * vel[k][1] - lr * gb
                    vel[k] = (vW, vb)
                    new_layers.append((W + vW, b + vb))
                else:
                    b1, b2, eps = 0.9, 0.999, 1e-8
                    mW = b1 * vel[k][0] + (1 - b1) * gW
                    mb = b1 * vel[k][1] + (1 - b1) * gb
                    sW = b2 * sq[k][0] + (1 - b2) * gW**2
                    sb = b2 * sq[k][1] + (1 - b2) * gb**2
                    vel[k], sq[k] = (mW, mb), (sW, sb)
                    c1, c2 = 1 - b1**step, 1 - b2**step
                    new_layers.append(
                        (
                            W - lr * (mW / c1) / (np.sqrt(sW / c2) + eps),
                            b - lr * (mb / c1) / (np.sqrt(sb / c2) + eps),
                        )
                    )
            net.layers = new_layers
        n_used = (n // cfg.batch_size) * cfg.batch_size
        hist.train_loss.append(tot / n_used)
        v = float(np.mean((net.raw_forward(A_va) - y_va) ** 2))
        hist.val_loss.append(v)
        if v < best[0]:
            best = (v, net.copy())
            hist.best_epoch = epoch
        hist.best_val_loss.append(best[0])
        if log is not None:
            log(epoch, hist.train_loss[-1], v)
    net = best[1]
    U_va = U[val] if val.any() else U[tr]
    hist.val_rmse = float(np.sqrt(best[0])) * net.out_scale
    hist.val_control_std = float(np.std(U_va))
    return net, hist


# --- persistence ----------------------------------------------------------


def to_dict(net: PolicyNetwork) -> dict:
    return {
        "arch": net.arch,
        "activation": net.activation,
        "T": net.T,
        "input_norm": {"shift": net.in_shift.tolist(), "scale": net.in_scale.tolist()},
        "output_norm": {"shift": net.out_shift, "scale": net.out_scale},
        "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in net.layers],
    }


def from_dict(d: dict) -> PolicyNetwork:
    try:
        arch = [int(a) for a in d["arch"]]
        if d["activation"] != "tanh":
            raise WeightsFormatError(f"unsupported activation {d['activation']!r}")
        layers = [(np.array(L["W"], dtype=float), np.array(L["b"], dtype=float)) for L in d["layers"]]
        net = PolicyNetwork(
            layers,
            float(d["T"]),
            np.array(d["input_norm"]["shift"], dtype=float),
            np.array(d["input_norm"]["scale"], dtype=float),
            float(d["output_norm"]["shift"]),
            float(d["output_norm"]["scale"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, WeightsFormatError):
            raise
        raise WeightsFormatError(f"malformed weights file: {e!r}") from None
    if len(layers) != len(arch) - 1:
        raise WeightsFormatError(f"arch {arch} needs {len(arch) - 1} layers, file has {len(layers)}")
    for k, (W, b) in enumerate(layers):
        if W.shape != (arch[k + 1], arch[k]) or b.shape != (arch[k + 1],):
            raise WeightsFormatError(
                f"layer {k}: W{W.shape} b{b.shape} do not match arch {arch}"
            )
    if net.in_shift.shape != (arch[0],) or net.in_scale.shape != (arch[0],):
        raise WeightsFormatError("input normalisation does not match the input width")
    return net


def save_weights(net: PolicyNetwork, path) -> None:
    # json writes floats with repr, which round-trips bit-exactly
    with open(Path(path), "w") as f:
        json.dump(to_dict(net), f)


def load_weights(path) -> PolicyNetwork:
    with open(Path(path)) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise WeightsFormatError(f"not JSON: {e}") from None
    return from_dict(d)
