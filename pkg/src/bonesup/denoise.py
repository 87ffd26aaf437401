"""Noise estimators: an analytic oracle and a small trainable conv net.

The oracle inverts the forward noising map for a known target latent and
is used to verify the sampler exactly. The toy network is a stack of 3x3
convolutions with tanh between layers, a learned scalar bias per timestep
on the first layer, and conditioning by channel concatenation of the
sample, the condition latent, and a constant kind-flag plane. Gradients
are computed in-repo (im2col backprop) and checked against central finite
differences.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .sampling import forward_noise
from .schedule import Schedule

KIND_FLAGS = {"global": 0.0, "local": 1.0}

CHECKPOINT_MAGIC = b"BSUPTOYD"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Condition:
    """Conditioning latent plus which path it guides."""

    latent: np.ndarray
    kind: str = "global"

    def __post_init__(self):
        if self.kind not in KIND_FLAGS:
            raise ValueError(
                f"condition kind must be one of {sorted(KIND_FLAGS)}, "
                f"got {self.kind!r}"
            )

    @property
    def flag(self) -> float:
        return KIND_FLAGS[self.kind]


class OracleDenoiser:
    """Exact noise predictor for a known clean latent.

    Inverts the forward map: eps = (z_t - sqrt(abar_t) * target)
    / sqrt(1 - abar_t). Ignores the condition; has no parameters.
    """

    def __init__(self, target: np.ndarray, schedule: Schedule):
        self.target = np.asarray(target, dtype=np.float64)
        self.schedule = schedule

    def predict(self, z_t: np.ndarray, t: int, cond=None) -> np.ndarray:
        if z_t.shape != self.target.shape:
            raise ValueError(
                f"sample shape {z_t.shape} != target {self.target.shape}"
            )
        ab = self.schedule.alpha_bar_at(t)
        if t < 1:
            raise ValueError(f"timestep {t} out of range")
        return (z_t - math.sqrt(ab) * self.target) / math.sqrt(1.0 - ab)


@dataclass(frozen=True)
class ToyArch:
    """Layer plan for the toy conv net.

    ``in_channels`` counts the full concatenated input (sample channels +
    condition channels + 1 flag plane); ``hidden`` may be empty, giving a
    purely linear single-layer model.
    """

    in_channels: int
    out_channels: int
    hidden: tuple[int, ...] = (8, 8)
    kernel: int = 3
    timesteps: int = 50

    @property
    def channels(self) -> tuple[int, ...]:
        return (self.in_channels, *self.hidden, self.out_channels)

    def param_count(self) -> int:
        chans = self.channels
        k2 = self.kernel * self.kernel
        count = sum(
            chans[i + 1] * chans[i] * k2 + chans[i + 1]
            for i in range(len(chans) - 1)
        )
        return count + self.timesteps

    @classmethod
    def for_latent(cls, latent_channels: int, hidden=(8, 8), kernel=3,
                   timesteps=50) -> "ToyArch":
        return cls(
            in_channels=2 * latent_channels + 1,
            out_channels=latent_channels,
            hidden=tuple(hidden),
            kernel=kernel,
            timesteps=timesteps,
        )


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(C, H, W) -> (C*k*k, H*W) patch matrix, zero-padded 'same'."""
    c, h, w = x.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    return np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(
        c * k * k, h * w
    )


def _col2im(cols: np.ndarray, c: int, h: int, w: int, k: int) -> np.ndarray:
    """Adjoint of :func:`_im2col` (scatter-add patches back)."""
    pad = k // 2
    out = np.zeros((c, h + 2 * pad, w + 2 * pad))
    cols = cols.reshape(c, k, k, h, w)
    for i in range(k):
        for j in range(k):
            out[:, i : i + h, j : j + w] += cols[:, i, j]
    return out[:, pad : pad + h, pad : pad + w]


def _conv_same(x: np.ndarray, weight_mat: np.ndarray, k: int) -> np.ndarray:
    """Same-padded convolution by shifted GEMM accumulation.

    Equivalent to ``weight_mat @ _im2col(x, k)`` without materializing the
    patch matrix; used on the inference path where no cache is needed.
    """
    c, h, w = x.shape
    c_out = weight_mat.shape[0]
    weights = weight_mat.reshape(c_out, c, k, k)
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((c_out, h * w))
    flat = np.empty((c, h * w))
    for i in range(k):
        for j in range(k):
            for ch in range(c):
                flat[ch] = xp[ch, i : i + h, j : j + w].ravel()
            out += weights[:, :, i, j] @ flat
    return out


def _layer_views(arch: ToyArch, flat: np.ndarray):
    """(weight_matrix, bias) views into a flat vector with this layout."""
    chans = arch.channels
    k2 = arch.kernel * arch.kernel
    offset = 0
    views = []
    for i in range(len(chans) - 1):
        c_in, c_out = chans[i], chans[i + 1]
        n_w = c_out * c_in * k2
        weight = flat[offset : offset + n_w].reshape(c_out, c_in * k2)
        offset += n_w
        bias = flat[offset : offset + c_out]
        offset += c_out
        views.append((weight, bias))
    return views


def _tbias_view(arch: ToyArch, flat: np.ndarray) -> np.ndarray:
    return flat[-arch.timesteps :]


class ToyDenoiser:
    """Trainable noise estimator with in-repo backprop.

    Parameters live in one flat float64 vector; layers view into it.
    Inference is pure; training mutates ``params`` (single writer).
    """

    def __init__(self, arch: ToyArch, params: np.ndarray):
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (arch.param_count(),):
            raise ValueError(
                f"parameter vector has {params.shape}, arch needs "
                f"({arch.param_count()},)"
            )
        if not np.all(np.isfinite(params)):
            raise ValueError("parameters must be finite")
        self.arch = arch
        self.params = params

    @classmethod
    def seeded(cls, arch: ToyArch, seed: int, scale: float = 1.0) -> "ToyDenoiser":
        """Fan-in scaled Gaussian weights, zero biases."""
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        params = np.zeros(arch.param_count())
        for weight, _ in _layer_views(arch, params):
            fan_in = weight.shape[1]
            weight[:] = rng.standard_normal(weight.shape) * (
                scale / math.sqrt(fan_in)
            )
        return cls(arch, params)

    @classmethod
    def zeros(cls, arch: ToyArch) -> "ToyDenoiser":
        return cls(arch, np.zeros(arch.param_count()))

    def _layers(self):
        return _layer_views(self.arch, self.params)

    def _tbias(self) -> np.ndarray:
        return _tbias_view(self.arch, self.params)

    def _stack_input(self, z_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        if not 1 <= t <= self.arch.timesteps:
            raise ValueError(
                f"timestep {t} out of range [1, {self.arch.timesteps}]"
            )
        if z_t.shape != cond.latent.shape:
            raise ValueError(
                f"sample {z_t.shape} vs condition {cond.latent.shape} mismatch"
            )
        if z_t.shape[0] != self.arch.out_channels:
            raise ValueError(
                f"sample has {z_t.shape[0]} channels, model predicts "
                f"{self.arch.out_channels}"
            )
        flag = np.full((1,) + z_t.shape[1:], cond.flag)
        x = np.concatenate([z_t, cond.latent, flag], axis=0)
        if x.shape[0] != self.arch.in_channels:
            raise ValueError(
                f"stacked input has {x.shape[0]} channels, arch expects "
                f"{self.arch.in_channels}"
            )
        return x

    def _forward(self, x: np.ndarray, t: int, keep_cache: bool):
        k = self.arch.kernel
        layers = self._layers()
        cache = []
        h = x
        for i, (weight, bias) in enumerate(layers):
            if keep_cache:
                cols = _im2col(h, k)
                pre = weight @ cols + bias[:, None]
            else:
                pre = _conv_same(h, weight, k) + bias[:, None]
            if i == 0:
                pre += self._tbias()[t - 1]
            last = i == len(layers) - 1
            act = pre if last else np.tanh(pre)
            if keep_cache:
                cache.append((cols, act if not last else None))
            c_out = weight.shape[0]
            h = act.reshape(c_out, *x.shape[1:])
        return h, cache

    def predict(self, z_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        out, _ = self._forward(self._stack_input(z_t, t, cond), t, False)
        return out

    def loss_and_grad(self, z_t: np.ndarray, t: int, cond: Condition,
                      eps_target: np.ndarray):
        """Squared-error loss (per-element mean) and its parameter gradient."""
        x = self._stack_input(z_t, t, cond)
        out, cache = self._forward(x, t, True)
        diff = out - eps_target
        n_el = diff.size
        loss = float(np.mean(diff * diff))

        grad = np.zeros_like(self.params)
        layers = self._layers()
        grad_layers = _layer_views(self.arch, grad)
        spatial = z_t.shape[1:]

        g = (2.0 / n_el) * diff.reshape(out.shape[0], -1)
        for i in range(len(layers) - 1, -1, -1):
            weight, _ = layers[i]
            g_weight, g_bias = grad_layers[i]
            cols, _ = cache[i]
            g_weight += g @ cols.T
            g_bias += g.sum(axis=1)
            if i == 0:
                _tbias_view(self.arch, grad)[t - 1] += g.sum()
                break
            c_in = weight.shape[1] // (self.arch.kernel**2)
            d_prev = _col2im(weight.T @ g, c_in, *spatial, self.arch.kernel)
            prev_act = cache[i - 1][1].reshape(c_in, -1)
            g = d_prev.reshape(c_in, -1) * (1.0 - prev_act * prev_act)
        return loss, grad

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ToyDenoiser)
            and self.arch == other.arch
            and np.array_equal(self.params, other.params)
        )


def train_step(model, batch, schedule: Schedule, rng: np.random.Generator,
               lr: float = 1e-2) -> float:
    """One SGD step on the noise-prediction loss; returns pre-update loss.

    Each batch item draws (t, eps), noises the clean latent to z_t, and
    contributes mean((predicted - eps)^2). Models without parameters are
    evaluated but not updated.
    """
    if not batch:
        raise ValueError("empty training batch")
    n = len(batch)
    trainable = hasattr(model, "loss_and_grad")
    grad = np.zeros_like(model.params) if trainable else None
    total = 0.0
    for i, (z0, cond) in enumerate(batch):
        t = int(rng.integers(1, schedule.timesteps + 1))
        eps = rng.standard_normal(z0.shape)
        z_t = forward_noise(z0, t, eps, schedule)
        if trainable:
            loss_i, grad_i = model.loss_and_grad(z_t, t, cond, eps)
            grad += grad_i / n
        else:
            diff = model.predict(z_t, t, cond) - eps
            loss_i = float(np.mean(diff * diff))
        if not math.isfinite(loss_i):
            raise NumericError(
                f"non-finite training loss {loss_i} at batch item {i} (t={t})"
            )
        total += loss_i / n
    if trainable:
        model.params -= lr * grad
    return total


def fit(model, examples, schedule: Schedule, rng: np.random.Generator,
        n_steps: int, batch_size: int = 8, lr: float = 1e-2) -> list[float]:
    """Minibatch SGD over (z0, condition) examples; returns per-step losses.

    Examples are reshuffled (seeded) each pass; the final partial batch of
    a pass is dropped so every step sees batch_size items.
    """
    if not examples:
        raise ValueError("no training examples")
    batch_size = min(batch_size, len(examples))
    losses = []
    order: list[int] = []
    pos = 0
    for _ in range(n_steps):
        if pos + batch_size > len(order):
            order = [int(i) for i in rng.permutation(len(examples))]
            pos = 0
        batch = [examples[i] for i in order[pos : pos + batch_size]]
        pos += batch_size
        losses.append(train_step(model, batch, schedule, rng, lr))
    return losses


def evaluate_loss(model, batch, schedule: Schedule,
                  rng: np.random.Generator) -> float:
    """Noise-prediction loss on a batch without updating parameters."""
    if not batch:
        raise ValueError("empty batch")
    total = 0.0
    for z0, cond in batch:
        t = int(rng.integers(1, schedule.timesteps + 1))
        eps = rng.standard_normal(z0.shape)
        z_t = forward_noise(z0, t, eps, schedule)
        diff = model.predict(z_t, t, cond) - eps
        total += float(np.mean(diff * diff)) / len(batch)
    if not math.isfinite(total):
        raise NumericError(f"non-finite evaluation loss {total}")
    return total


def gradient_check(model, z_t: np.ndarray, t: int, cond: Condition,
                   eps_target: np.ndarray, step: float = 1e-4) -> float:
    """Max relative error between backprop and central finite differences."""
    if not hasattr(model, "loss_and_grad"):
        return 0.0

    def loss_at() -> float:
        diff = model.predict(z_t, t, cond) - eps_target
        return float(np.mean(diff * diff))

    _, analytic = model.loss_and_grad(z_t, t, cond, eps_target)
    numeric = np.zeros_like(analytic)
    params = model.params
    for i in range(params.size):
        original = params[i]
        params[i] = original + step
        plus = loss_at()
        params[i] = original - step
        minus = loss_at()
        params[i] = original
        numeric[i] = (plus - minus) / (2.0 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def save_checkpoint(model: ToyDenoiser, path) -> None:
    """Versioned little-endian binary: magic, descriptor, float32 params."""
    arch = model.arch
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(
            struct.pack(
                "<IIIII",
                arch.in_channels,
                arch.out_channels,
                arch.kernel,
                arch.timesteps,
                len(arch.hidden),
            )
        )
        for h in arch.hidden:
            f.write(struct.pack("<I", h))
        f.write(struct.pack("<Q", model.params.size))
        f.write(model.params.astype("<f4").tobytes())


def load_checkpoint(path) -> ToyDenoiser:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a toy-denoiser checkpoint")
        (version,) = struct.unpack("<I", f.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        in_ch, out_ch, kernel, timesteps, n_hidden = struct.unpack(
            "<IIIII", f.read(20)
        )
        hidden = tuple(
            struct.unpack("<I", f.read(4))[0] for _ in range(n_hidden)
        )
        (count,) = struct.unpack("<Q", f.read(8))
        arch = ToyArch(
            in_channels=in_ch,
            out_channels=out_ch,
            hidden=hidden,
            kernel=kernel,
            timesteps=timesteps,
        )
        if count != arch.param_count():
            raise ValueError(
                f"{path}: parameter count {count} does not match descriptor "
                f"({arch.param_count()})"
            )
        params = np.frombuffer(f.read(), dtype="<f4", count=count)
    if params.size != count:
        raise ValueError(f"{path}: truncated parameter data")
    return ToyDenoiser(arch, params.astype(np.float64))
