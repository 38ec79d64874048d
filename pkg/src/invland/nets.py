"""Minimal fully connected networks: forward pass, manual backprop,
flattened parameter views, an Adam optimizer, and a deterministic binary
checkpoint format.

Hidden layers use ReLU (subgradient 0 at 0); the final layer is linear.
Squashing heads live with the policies that need them.
"""

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"NETS0001"


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Block:
    """One contiguous slice of the flat parameter vector."""

    layer: int
    kind: str  # "weight" | "bias"
    offset: int
    length: int


@dataclass
class ParamVector:
    """Flat parameter values plus the layer-boundary layout."""

    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)

    def block(self, blk: Block) -> np.ndarray:
        return self.values[blk.offset : blk.offset + blk.length]


def _layout_for(sizes):
    blocks = []
    off = 0
    for layer, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        blocks.append(Block(layer, "weight", off, n_in * n_out))
        off += n_in * n_out
        blocks.append(Block(layer, "bias", off, n_out))
        off += n_out
    return tuple(blocks), off


class MLP:
    """Fully connected ReLU network with a linear output layer."""

    def __init__(self, sizes, rng=None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ShapeError(f"need >= 2 positive layer sizes, got {sizes}")
        self.sizes = sizes
        self.weights = []
        self.biases = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(n_in)
            if rng is None:
                w = np.zeros((n_in, n_out))
                b = np.zeros(n_out)
            else:
                w = rng.uniform(-bound, bound, size=(n_in, n_out))
                b = rng.uniform(-bound, bound, size=n_out)
            self.weights.append(w)
            self.biases.append(b)
        self.layout, self.num_params = _layout_for(sizes)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        if h.shape[1] != self.sizes[0]:
            raise ShapeError(f"input width {h.shape[1]} != first layer size {self.sizes[0]}")
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if l != last:
                h = np.maximum(h, 0.0)
        return h[0] if squeeze else h

    def forward_cached(self, x):
        """Forward pass keeping pre/post activations for backward()."""
        h = np.asarray(x, dtype=float)
        if h.ndim != 2 or h.shape[1] != self.sizes[0]:
            raise ShapeError(f"expected batch of width {self.sizes[0]}, got {h.shape}")
        acts = [h]  # post-activation inputs to each layer
        pre = []
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0) if l != last else z
            acts.append(h)
        return h, (acts, pre)

    def backward(self, cache, grad_out, need_input_grad=False):
        """Exact reverse-mode gradient; grad_out is dLoss/d(output), summed
        over the batch as given (scale it by 1/B upstream for a mean loss)."""
        acts, pre = cache
        g = np.asarray(grad_out, dtype=float)
        if g.shape != pre[-1].shape:
            raise ShapeError(f"grad_out shape {g.shape} != output shape {pre[-1].shape}")
        grad = np.zeros(self.num_params)
        pv = ParamVector(grad, self.layout)
        grad_x = None
        for l in range(len(self.weights) - 1, -1, -1):
            dw = acts[l].T @ g
            db = g.sum(axis=0)
            wblk, bblk = self.layout[2 * l], self.layout[2 * l + 1]
            grad[wblk.offset : wblk.offset + wblk.length] = dw.ravel()
            grad[bblk.offset : bblk.offset + bblk.length] = db
            if l > 0:
                g = (g @ self.weights[l].T) * (pre[l - 1] > 0)
            elif need_input_grad:
                grad_x = g @ self.weights[0].T
        return pv, grad_x

    def get_params(self) -> ParamVector:
        flat = np.empty(self.num_params)
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            wblk, bblk = self.layout[2 * l], self.layout[2 * l + 1]
            flat[wblk.offset : wblk.offset + wblk.length] = w.ravel()
            flat[bblk.offset : bblk.offset + bblk.length] = b
        return ParamVector(flat, self.layout)

    def set_params(self, vec: ParamVector):
        values = np.asarray(vec.values if isinstance(vec, ParamVector) else vec, dtype=float)
        if values.size != self.num_params:
            raise ShapeError(f"expected {self.num_params} params, got {values.size}")
        for l in range(len(self.weights)):
            wblk, bblk = self.layout[2 * l], self.layout[2 * l + 1]
            self.weights[l] = values[wblk.offset : wblk.offset + wblk.length].reshape(
                self.weights[l].shape
            ).copy()
            self.biases[l] = values[bblk.offset : bblk.offset + bblk.length].copy()

    def copy(self) -> "MLP":
        clone = MLP(self.sizes)
        clone.set_params(self.get_params())
        return clone


class Adam:
    """Adaptive-moment gradient descent on a flat parameter vector."""

    def __init__(self, n_params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def apply_gradient(net: MLP, opt: Adam, grad: ParamVector) -> None:
    net.set_params(ParamVector(opt.step(net.get_params().values, grad.values), net.layout))


def save_checkpoint(path, nets: dict) -> None:
    """Write named networks to a deterministic binary file.

    Layout: magic, count, then per net: name, layer sizes, float64 params.
    Round trip is bit-exact.
    """
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(nets)))
        for name, net in nets.items():
            encoded = name.encode()
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", len(net.sizes)))
            fh.write(struct.pack(f"<{len(net.sizes)}q", *net.sizes))
            fh.write(net.get_params().values.astype("<f8").tobytes())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a network checkpoint")
        (count,) = struct.unpack("<I", fh.read(4))
        nets = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode()
            (n_sizes,) = struct.unpack("<I", fh.read(4))
            sizes = struct.unpack(f"<{n_sizes}q", fh.read(8 * n_sizes))
            net = MLP(sizes)
            raw = fh.read(8 * net.num_params)
            net.set_params(ParamVector(np.frombuffer(raw, dtype="<f8").copy(), net.layout))
            nets[name] = net
    return nets
