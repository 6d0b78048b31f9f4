"""Small trainable v-prediction MLP with hand-rolled reverse-mode gradients.

Architecture: input = sample vector concatenated with 8 sinusoidal time
features, 3 hidden layers of width 128 with SiLU activation, linear output
of the sample dimension. Trained with momentum SGD on the v-reconstruction
loss; no autodiff framework involved, so gradients are checkable against
finite differences.

Weights serialize to a flat binary file: a 16-byte header (magic,
format version, layer count, reserved word), a layer shape table of
little-endian uint32 (in, out) pairs, then all parameters as little-endian
float64 in layer order (W row-major, then b).
"""

from __future__ import annotations

import struct

import numpy as np

WEIGHTS_MAGIC = b"GWML"
WEIGHTS_VERSION = 1

_TIME_FREQS = np.array([1.0, 2.0, 4.0, 8.0])


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at training step {step}")
        self.step = step


def time_features(t) -> np.ndarray:
    """8 sinusoidal features per time value: sin/cos at 4 frequencies."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    ang = 2.0 * np.pi * t[:, None] * _TIME_FREQS[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _silu(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return z * s, s * (1.0 + z * (1.0 - s))


class MlpDenoiser:
    """v-prediction MLP over (x_t, time features)."""

    N_HIDDEN = 3
    WIDTH = 128

    def __init__(self, dim: int, rng: np.random.Generator | None = None,
                 width: int = WIDTH):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        dims = [dim + 8] + [width] * self.N_HIDDEN + [dim]
        self.dim = dim
        self.width = width
        self.weights = [
            rng.standard_normal((a, b)) * np.sqrt(2.0 / (a + b))
            for a, b in zip(dims[:-1], dims[1:])
        ]
        self.biases = [np.zeros(b) for b in dims[1:]]
        # momentum SGD state, managed by train_toy
        self.momentum_w = [np.zeros_like(w) for w in self.weights]
        self.momentum_b = [np.zeros_like(b) for b in self.biases]
        self.step_count = 0

    # ---- forward / backward ------------------------------------------------

    def _forward(self, x, t):
        x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
        tf = time_features(np.broadcast_to(np.asarray(t, dtype=np.float64),
                                           (x2.shape[0],)))
        h = np.concatenate([x2, tf], axis=1)
        acts, ders = [h], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < len(self.weights) - 1:
                h, d = _silu(z)
                ders.append(d)
            else:
                h = z
            acts.append(h)
        return h, acts, ders

    def predict_v(self, x_t: np.ndarray, t) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.float64)
        out, _, _ = self._forward(x_t, t)
        return out[0] if x_t.ndim == 1 else out

    def vjp(self, x_t: np.ndarray, t: float, cotangent: np.ndarray) -> np.ndarray:
        """cotangent^T d(predict_v)/d(x_t) for a single sample."""
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.ndim != 1:
            raise ValueError("vjp expects a single sample")
        _, acts, ders = self._forward(x_t, t)
        delta = np.asarray(cotangent, dtype=np.float64)[None, :]
        for i in reversed(range(len(self.weights))):
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * ders[i - 1]
        return delta[0, :self.dim]  # drop the time-feature columns

    def loss_and_grads(self, x0_batch, t_batch, eps_batch):
        """v-loss and parameter gradients for explicit (t, eps) draws."""
        x0 = _as_batch(x0_batch)
        t = np.asarray(t_batch, dtype=np.float64)
        eps = _as_batch(eps_batch)
        a = np.cos(np.pi * t / 2)[:, None]
        s = np.sin(np.pi * t / 2)[:, None]
        x_t = a * x0 + s * eps
        target = a * eps - s * x0
        out, acts, ders = self._forward(x_t, t)
        diff = out - target
        loss = float(np.mean(np.sum(diff * diff, axis=1)))
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        delta = 2.0 * diff / x0.shape[0]
        for i in reversed(range(len(self.weights))):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * ders[i - 1]
        return loss, grads_w, grads_b

    # ---- serialization -----------------------------------------------------

    def save(self, path):
        shapes = [(w.shape[0], w.shape[1]) for w in self.weights]
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sIII", WEIGHTS_MAGIC, WEIGHTS_VERSION,
                                 len(shapes), 0))
            for a, b in shapes:
                fh.write(struct.pack("<II", a, b))
            for w, b in zip(self.weights, self.biases):
                fh.write(w.astype("<f8").tobytes())
                fh.write(b.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "MlpDenoiser":
        with open(path, "rb") as fh:
            head = fh.read(16)
            if len(head) != 16:
                raise ValueError("truncated weight file header")
            magic, version, n_layers, _ = struct.unpack("<4sIII", head)
            if magic != WEIGHTS_MAGIC:
                raise ValueError(f"bad magic {magic!r}")
            if version != WEIGHTS_VERSION:
                raise ValueError(f"unsupported weight format version {version}")
            shapes = [struct.unpack("<II", fh.read(8)) for _ in range(n_layers)]
            dim = shapes[-1][1]
            width = shapes[0][1]
            if shapes[0][0] != dim + 8 or len(shapes) != cls.N_HIDDEN + 1:
                raise ValueError(f"unexpected layer shape table {shapes}")
            model = cls(dim, rng=np.random.default_rng(0), width=width)
            for i, (a, b) in enumerate(shapes):
                w = np.frombuffer(fh.read(a * b * 8), dtype="<f8").reshape(a, b)
                bias = np.frombuffer(fh.read(b * 8), dtype="<f8")
                if w.size != a * b or bias.size != b:
                    raise ValueError("truncated weight file payload")
                model.weights[i] = np.ascontiguousarray(w)
                model.biases[i] = np.ascontiguousarray(bias)
        for w in model.weights:
            if not np.all(np.isfinite(w)):
                raise ValueError("non-finite parameters in weight file")
        return model


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"batch must have shape (count, dim), got {x.shape}")
    return x


def v_loss_at(denoiser, batch, t_batch, eps_batch) -> float:
    """v-reconstruction loss for explicit (t, eps) draws; deterministic.

    Works with any predictor whose predict_v accepts a (B, dim) batch and a
    (B,) time vector. Per item the loss is the squared L2 norm of the
    prediction error; the batch is averaged.
    """
    x0 = _as_batch(batch)
    t = np.asarray(t_batch, dtype=np.float64)
    eps = _as_batch(eps_batch)
    a = np.cos(np.pi * t / 2)[:, None]
    s = np.sin(np.pi * t / 2)[:, None]
    x_t = a * x0 + s * eps
    target = a * eps - s * x0
    diff = denoiser.predict_v(x_t, t) - target
    return float(np.mean(np.sum(diff * diff, axis=1)))


def v_loss(denoiser, batch, rng: np.random.Generator) -> float:
    """Monte-Carlo v-loss: t ~ U(0,1) and eps ~ N(0,I) per batch item."""
    batch = _as_batch(batch)
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    t = rng.uniform(0.0, 1.0, batch.shape[0])
    eps = rng.standard_normal(batch.shape)
    return v_loss_at(denoiser, batch, t, eps)


def train_toy(denoiser: MlpDenoiser, dataset, steps: int, lr: float,
              rng: np.random.Generator, batch_size: int = 128,
              momentum: float = 0.9) -> list[float]:
    """Momentum-SGD training loop; returns the per-step loss log.

    Mutates the denoiser (single-writer); aborts with TrainingDiverged,
    carrying the step index, on NaN/inf loss.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    data = _as_batch(dataset)
    if data.shape[0] == 0:
        raise ValueError("empty dataset")
    log = []
    for _ in range(steps):
        idx = rng.integers(0, data.shape[0], batch_size)
        t = rng.uniform(0.0, 1.0, batch_size)
        eps = rng.standard_normal((batch_size, data.shape[1]))
        loss, grads_w, grads_b = denoiser.loss_and_grads(data[idx], t, eps)
        if not np.isfinite(loss):
            raise TrainingDiverged(denoiser.step_count, loss)
        log.append(loss)
        for i in range(len(denoiser.weights)):
            denoiser.momentum_w[i] = momentum * denoiser.momentum_w[i] - lr * grads_w[i]
            denoiser.momentum_b[i] = momentum * denoiser.momentum_b[i] - lr * grads_b[i]
            denoiser.weights[i] += denoiser.momentum_w[i]
            denoiser.biases[i] += denoiser.momentum_b[i]
        denoiser.step_count += 1
    return log
