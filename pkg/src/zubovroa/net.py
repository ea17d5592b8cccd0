"""Small tanh MLP W_N(x; theta), its physics-informed loss and training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SystemDef, step
from .zubov import AlphaSpec, Dataset, SafetySpec, xi

log = logging.getLogger(__name__)

FORMAT_TAG = "mlp"
FORMAT_VERSION = "v1"


class MlpNetwork:
    """Fully connected network with tanh hidden layers and an affine head."""

    activation = "tanh"

    def __init__(self, weights, biases):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias vector per weight matrix")
        self.weights = [np.array(W, dtype=float) for W in weights]
        self.biases = [np.array(b, dtype=float).reshape(-1) for b in biases]
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or W.shape[0] != b.size:
                raise ValueError(f"layer {i}: weight {W.shape} and bias {b.shape} disagree")
            if i and W.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input size does not match previous layer")
        if self.weights[-1].shape[0] != 1:
            raise ValueError("output layer must have a single unit")

    @classmethod
    def init(cls, layer_sizes, seed: int = 0) -> "MlpNetwork":
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        Ws, bs = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            Ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            bs.append(np.zeros(fan_out))
        return cls(Ws, bs)

    @classmethod
    def zeros(cls, layer_sizes) -> "MlpNetwork":
        return cls([np.zeros((o, i)) for i, o in zip(layer_sizes[:-1], layer_sizes[1:])],
                   [np.zeros(o) for o in layer_sizes[1:]])

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def get_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    def with_params(self, theta) -> "MlpNetwork":
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise ValueError("parameter vector has the wrong length")
        Ws, bs, k = [], [], 0
        for W, b in zip(self.weights, self.biases):
            Ws.append(theta[k:k + W.size].reshape(W.shape))
            k += W.size
            bs.append(theta[k:k + b.size].copy())
            k += b.size
        return MlpNetwork(Ws, bs)

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(self.weights, self.biases)

    def _forward(self, X):
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W.T + b
            h = z if i == last else np.tanh(z)
            acts.append(h)
        return acts

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected {self.n_in} inputs, got {x.shape[-1]}")
        out = self._forward(x.reshape(-1, self.n_in))[-1][:, 0]
        return float(out[0]) if x.ndim == 1 else out.reshape(x.shape[:-1])

    def backward(self, acts, upstream):
        """Parameter gradient (flat) given d(loss)/d(output) per row."""
        grads = []
        delta = upstream.reshape(-1, 1)
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            if i != last:
                delta = delta * (1.0 - acts[i + 1] ** 2)
            gW = delta.T @ acts[i]
            gb = delta.sum(axis=0)
            grads.append((gW, gb))
            if i:
                delta = delta @ self.weights[i]
        grads.reverse()
        return np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])

    def input_gradient(self, x):
        """dW_N/dx for a batch of points, shape (N, n)."""
        acts = self._forward(np.atleast_2d(np.asarray(x, dtype=float)))
        delta = np.ones((len(acts[0]), 1))
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            if i != last:
                delta = delta * (1.0 - acts[i + 1] ** 2)
            delta = delta @ self.weights[i]
        return delta


# ---------------------------------------------------------------------------
# loss

@dataclass(frozen=True)
class TrainConfig:
    n_collocation: int = 20000
    n_data: int = 5000
    lambda_d: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 5000
    batch_size: int = 256
    seed: int = 0
    hidden: tuple = (30, 30)

    def __post_init__(self):
        if not self.lambda_d > 0:
            raise ValueError("lambda_d must be positive")
        if self.n_collocation < 1 or self.n_data < 1:
            raise ValueError("need at least one collocation and one data point")


@dataclass
class LossTerms:
    residual: float
    data: float
    lambda_d: float

    @property
    def total(self) -> float:
        return self.residual + self.lambda_d * self.data


@dataclass(frozen=True)
class Collocation:
    """Collocation points with their precomputed images and xi weights."""

    x: np.ndarray
    fx: np.ndarray
    xi: np.ndarray

    @classmethod
    def build(cls, sys: SystemDef, safety: SafetySpec, aspec: AlphaSpec, x) -> "Collocation":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return cls(x, step(sys, x), np.asarray(xi(safety, aspec, x), dtype=float).reshape(-1))

    def subset(self, idx) -> "Collocation":
        return Collocation(self.x[idx], self.fx[idx], self.xi[idx])

    def __len__(self):
        return len(self.x)


def _loss_and_grad(net: MlpNetwork, col: Collocation, zx, zw, lambda_d, want_grad=True):
    acts_x = net._forward(col.x)
    acts_f = net._forward(col.fx)
    wx, wf = acts_x[-1][:, 0], acts_f[-1][:, 0]
    r = wx - wf - col.xi * (1.0 - wf)
    nc = len(col)
    res = float(np.mean(r * r))
    acts_z = net._forward(zx)
    e = acts_z[-1][:, 0] - zw
    nd = len(zx)
    dat = float(np.mean(e * e)) if nd else 0.0
    terms = LossTerms(res, dat, lambda_d)
    if not want_grad:
        return terms, None
    g = net.backward(acts_x, 2.0 * r / nc)
    g += net.backward(acts_f, -2.0 * r * (1.0 - col.xi) / nc)
    if nd:
        g += net.backward(acts_z, 2.0 * lambda_d * e / nd)
    return terms, g


def loss(net: MlpNetwork, sys: SystemDef, safety: SafetySpec, aspec: AlphaSpec, collocation,
         data: Dataset, cfg: TrainConfig) -> LossTerms:
    """Mean squared Zubov residual plus lambda_d times the data mean squared error.

    Only f(x_i) enters as data; no derivative flows through the dynamics.
    """
    col = collocation if isinstance(collocation, Collocation) else Collocation.build(
        sys, safety, aspec, collocation)
    m = data.trainable
    return _loss_and_grad(net, col, data.x[m], data.w_hat[m], cfg.lambda_d, want_grad=False)[0]


def gradient(net: MlpNetwork, sys: SystemDef, safety: SafetySpec, aspec: AlphaSpec, collocation,
             data: Dataset, cfg: TrainConfig) -> np.ndarray:
    col = collocation if isinstance(collocation, Collocation) else Collocation.build(
        sys, safety, aspec, collocation)
    m = data.trainable
    return _loss_and_grad(net, col, data.x[m], data.w_hat[m], cfg.lambda_d)[1]


# ---------------------------------------------------------------------------
# training

class TrainingError(RuntimeError):
    def __init__(self, message, epoch):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


@dataclass
class TrainResult:
    net: MlpNetwork
    history: list = field(default_factory=list)   # LossTerms per epoch, index 0 = init
    best_epoch: int = 0


class Adam:
    def __init__(self, size, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta, g):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mh = self.m / (1 - self.b1 ** self.t)
        vh = self.v / (1 - self.b2 ** self.t)
        return theta - self.lr * mh / (np.sqrt(vh) + self.eps)


def train(sys: SystemDef, safety: SafetySpec, aspec: AlphaSpec, dataset: Dataset,
          cfg: TrainConfig, net: MlpNetwork | None = None, collocation=None,
          callback=None) -> TrainResult:
    """Minibatch Adam on the Zubov loss; returns the best parameters seen.

    Collocation points are drawn uniformly from the domain box with
    ``cfg.seed`` unless given. Each epoch splits the collocation and data sets
    into the same number of minibatches.
    """
    rng = np.random.default_rng(cfg.seed)
    if net is None:
        net = MlpNetwork.init([sys.n, *cfg.hidden, 1], seed=cfg.seed)
    if collocation is None:
        collocation = sys.domain.sample(rng, cfg.n_collocation)
    col = collocation if isinstance(collocation, Collocation) else Collocation.build(
        sys, safety, aspec, collocation)
    m = dataset.trainable
    zx, zw = dataset.x[m], dataset.w_hat[m]

    theta = net.get_params()
    opt = Adam(theta.size, lr=cfg.learning_rate)
    terms, _ = _loss_and_grad(net, col, zx, zw, cfg.lambda_d, want_grad=False)
    history = [terms]
    best_theta, best_loss, best_epoch = theta.copy(), terms.total, 0
    if not np.isfinite(terms.total):
        raise TrainingError("non-finite loss", 0)

    n_batches = max(1, int(np.ceil(len(col) / cfg.batch_size)))
    for epoch in range(1, cfg.epochs + 1):
        cperm = rng.permutation(len(col))
        dperm = rng.permutation(len(zx))
        cparts = np.array_split(cperm, n_batches)
        dparts = np.array_split(dperm, n_batches)
        for ci, di in zip(cparts, dparts):
            cur = net.with_params(theta)
            _, g = _loss_and_grad(cur, col.subset(ci), zx[di], zw[di], cfg.lambda_d)
            if cfg.learning_rate:
                theta = opt.step(theta, g)
        net = net.with_params(theta)
        terms, _ = _loss_and_grad(net, col, zx, zw, cfg.lambda_d, want_grad=False)
        if not np.isfinite(terms.total):
            raise TrainingError("non-finite loss", epoch)
        history.append(terms)
        if terms.total < best_loss:
            best_theta, best_loss, best_epoch = theta.copy(), terms.total, epoch
        if callback is not None:
            callback(epoch, terms)
        if epoch % 100 == 0:
            log.info("epoch %d residual %.3e data %.3e", epoch, terms.residual, terms.data)
    return TrainResult(net.with_params(best_theta), history, best_epoch)


# ---------------------------------------------------------------------------
# weight files
#
#   mlp v1 <number of sizes> <size_0> ... <size_L> tanh
#   <one row of W_1 per line, 17 significant digits>
#   <b_1 on one line>
#   <blank line>
#   ... next layer

class NetParseError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


def dumps(net: MlpNetwork) -> str:
    sizes = net.layer_sizes
    out = [f"{FORMAT_TAG} {FORMAT_VERSION} {len(sizes)} " + " ".join(map(str, sizes))
           + f" {net.activation}"]
    for W, b in zip(net.weights, net.biases):
        for row in W:
            out.append(" ".join(f"{v:.17g}" for v in row))
        out.append(" ".join(f"{v:.17g}" for v in b))
        out.append("")
    return "\n".join(out) + "\n"


def loads(text: str) -> MlpNetwork:
    data = text.encode() if isinstance(text, str) else bytes(text)
    if not data.endswith(b"\n"):
        # every record is newline terminated; anything else was cut short
        raise NetParseError("file does not end with a newline", len(data))
    lines = []
    pos = 0
    for raw in data.split(b"\n"):
        lines.append((pos, raw.decode()))
        pos += len(raw) + 1
    idx = 0

    def next_line():
        nonlocal idx
        while idx < len(lines) and not lines[idx][1].strip():
            idx += 1
        if idx >= len(lines):
            raise NetParseError("unexpected end of file", len(data))
        off, s = lines[idx]
        idx += 1
        return off, s.split()

    off, head = next_line()
    if len(head) < 3 or head[0] != FORMAT_TAG or head[1] != FORMAT_VERSION:
        raise NetParseError(f"expected header '{FORMAT_TAG} {FORMAT_VERSION}'", off)
    try:
        k = int(head[2])
        sizes = [int(v) for v in head[3:3 + k]]
    except ValueError:
        raise NetParseError("malformed layer sizes", off) from None
    if k < 2 or len(sizes) != k or len(head) != 4 + k or any(s < 1 for s in sizes):
        raise NetParseError("malformed header", off)
    if head[3 + k] != MlpNetwork.activation:
        raise NetParseError(f"unsupported activation {head[3 + k]!r}", off)

    def row(expected):
        off, toks = next_line()
        if len(toks) != expected:
            raise NetParseError(f"expected {expected} values, found {len(toks)}", off)
        try:
            return [float(t) for t in toks]
        except ValueError:
            raise NetParseError("malformed number", off) from None

    Ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        Ws.append(np.array([row(fan_in) for _ in range(fan_out)]))
        bs.append(np.array(row(fan_out)))
    while idx < len(lines):
        if lines[idx][1].strip():
            raise NetParseError("trailing data", lines[idx][0])
        idx += 1
    return MlpNetwork(Ws, bs)


def save(net: MlpNetwork, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps(net))


def load(path) -> MlpNetwork:
    with open(path, "rb") as fh:
        return loads(fh.read().decode())
