"""mpNet: matching pursuit unfolded into ``K`` tied-weight layers.

Each layer correlates the residual with the learnable matrix ``W``, keeps the
entry of largest modulus (hard thresholding to one atom) and subtracts that
atom's contribution. Training minimizes ``0.5 * ||r_K||^2`` on normalized
noisy observations only.

Complex parameters are optimized through their real representation:
``W.view(float64)`` interleaves real and imaginary parts, and a gradient entry
``G = dL/dRe(W) + 1j * dL/dIm(W)`` shares that layout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .array_geometry import Dictionary
from .channel_sim import ChannelSample, stack_observations

BASE_LR = 1e-3
DECAY_FACTOR = 0.9
DECAY_INTERVAL = 200


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    base_lr: float = BASE_LR
    decay_factor: float = DECAY_FACTOR
    decay_interval_steps: int = DECAY_INTERVAL

    @classmethod
    def zeros(cls, shape, **kwargs) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape), **kwargs)

    def learning_rate(self, step_count: int) -> float:
        """Learning rate applied by the optimizer step taken at ``step_count``."""
        return self.base_lr * self.decay_factor ** (step_count // self.decay_interval_steps)


@dataclass
class MpNetModel:
    weights: np.ndarray
    depth: int
    step_count: int = 0
    optimizer: AdamState = None
    # bumped on every weight update; traces remember the version they were computed on
    version: int = field(default=0, repr=False)

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.complex128)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be a matrix, got shape {self.weights.shape}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.optimizer is None:
            self.optimizer = AdamState.zeros(self.weights.view(np.float64).shape)

    @property
    def n_antennas(self) -> int:
        return self.weights.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.weights.shape[1]

    @property
    def n_parameters(self) -> int:
        return self.weights.view(np.float64).size


@dataclass
class ForwardTrace:
    """Everything the backward pass needs, for a batch of ``B`` inputs.

    ``residuals`` has shape ``(K+1, N, B)``; ``indices`` and ``coefficients``
    have shape ``(K, B)``; ``atoms`` keeps the selected weight columns
    ``W[:, s_k]`` as ``(K, N, B)``; ``input_scale`` holds the norm of every raw input.
    """

    residuals: np.ndarray
    indices: np.ndarray
    coefficients: np.ndarray
    atoms: np.ndarray
    input_scale: np.ndarray
    model_version: int

    @property
    def batch_size(self) -> int:
        return self.residuals.shape[2]

    def loss(self) -> np.ndarray:
        """Per-sample ``0.5 * ||r_K||^2``."""
        r = self.residuals[-1]
        return 0.5 * np.sum(r.real**2 + r.imag**2, axis=0)


@dataclass
class SparseGradient:
    """Gradient restricted to the columns ``columns`` of ``W``; ``values`` is ``(N, len(columns))``."""

    columns: np.ndarray
    values: np.ndarray

    def to_dense(self, n_atoms: int) -> np.ndarray:
        dense = np.zeros((self.values.shape[0], n_atoms), dtype=np.complex128)
        dense[:, self.columns] = self.values
        return dense


def init_from_dictionary(dictionary: Dictionary, depth: int) -> MpNetModel:
    """Network whose weights are a copy of a normalized (nominal) dictionary."""
    if not dictionary.normalized:
        raise ValueError("mpNet must be initialized from a normalized dictionary")
    return MpNetModel(np.array(dictionary.atoms), depth)


def init_random(n_antennas: int, n_atoms: int, depth: int, rng: np.random.Generator) -> MpNetModel:
    """Gaussian initialization: CN(0, 1/N) entries, columns scaled to unit norm."""
    w = (rng.standard_normal((n_antennas, n_atoms)) + 1j * rng.standard_normal((n_antennas, n_atoms)))
    w *= np.sqrt(0.5 / n_antennas)
    w /= np.linalg.norm(w, axis=0, keepdims=True)
    return MpNetModel(w, depth)


def ht1(v: np.ndarray) -> tuple[int, complex]:
    """Hard thresholding to one entry: index and value of the largest modulus (lowest index on ties)."""
    v = np.asarray(v)
    if v.size == 0:
        raise ValueError("ht1 of an empty vector")
    idx = int(np.argmax(np.abs(v)))
    return idx, complex(v[idx])


def forward_batch(model: MpNetModel, x: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    """Run the network on the columns of ``x`` (shape ``(N, B)``).

    Every input is normalized to unit norm before the first layer and the
    estimate is scaled back, so ``h_hat = ||x|| (x/||x|| - r_K)``.
    """
    x = np.asarray(x, dtype=np.complex128)
    scale = np.linalg.norm(x, axis=0)
    if np.any(scale == 0):
        raise ValueError("mpNet input must be nonzero")
    w = model.weights
    w_h = w.conj().T
    k, (n, b) = model.depth, x.shape
    cols = np.arange(b)
    residuals = np.empty((k + 1, n, b), dtype=np.complex128)
    indices = np.empty((k, b), dtype=np.int64)
    coefficients = np.empty((k, b), dtype=np.complex128)
    atoms = np.empty((k, n, b), dtype=np.complex128)
    r = x / scale
    residuals[0] = r
    for layer in range(k):
        corr = w_h @ r
        s = np.argmax(np.abs(corr), axis=0)
        c = corr[s, cols]
        ws = w[:, s]
        r = r - ws * c
        atoms[layer] = ws
        residuals[layer + 1] = r
        indices[layer] = s
        coefficients[layer] = c
    h_hat = scale * (residuals[0] - r)
    return h_hat, ForwardTrace(residuals, indices, coefficients, atoms, scale, model.version)


def forward(model: MpNetModel, x: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    """Single-observation forward pass; the trace has batch size one."""
    h_hat, trace = forward_batch(model, np.asarray(x)[:, None])
    return h_hat[:, 0], trace


def estimate(model: MpNetModel, x: np.ndarray) -> np.ndarray:
    return forward_batch(model, x)[0]


def backward(model: MpNetModel, trace: ForwardTrace) -> SparseGradient:
    """Gradient of the batch-mean of ``0.5 * ||r_K||^2`` with respect to ``W``.

    The selected support is held fixed, which makes every layer linear in the
    residual: ``r_k = (I - w w^H) r_{k-1}`` with ``w = W[:, s_k]``. The adjoint
    ``d_k`` of ``r_k`` is propagated back from ``d_K = r_K`` and each layer adds
    ``-d_k conj(c_k) - r_{k-1} conj(w^H d_k)`` to column ``s_k``. Only columns
    that were selected are touched and ``W`` itself is never read (the trace
    holds the selected columns), ``O(K N)`` work per sample.
    """
    if trace.model_version != model.version:
        raise ValueError("stale trace: the weights changed since the forward pass")
    k, b = trace.indices.shape[0], trace.batch_size
    columns, inverse = np.unique(trace.indices, return_inverse=True)
    inverse = inverse.reshape(trace.indices.shape)
    values = np.zeros((trace.residuals.shape[1], columns.size), dtype=np.complex128)
    delta = trace.residuals[k].copy()
    for layer in range(k - 1, -1, -1):
        ws = trace.atoms[layer]
        wd = np.sum(ws.conj() * delta, axis=0)
        contrib = -delta * trace.coefficients[layer].conj() - trace.residuals[layer] * wd.conj()
        # ordered scatter-add: deterministic reduction across the batch
        np.add.at(values.T, inverse[layer], contrib.T)
        delta = delta - ws * wd
    values /= b
    return SparseGradient(columns, values)


def adam_step(model: MpNetModel, grad: SparseGradient) -> MpNetModel:
    """One bias-corrected Adam update on the real representation of ``W``.

    Moments are dense, so columns outside the gradient support still move by
    their momentum, exactly as reference Adam on the zero-padded gradient.
    """
    opt = model.optimizer
    if grad.values.shape[0] != model.n_antennas or (grad.columns.size and grad.columns.max() >= model.n_atoms):
        raise ValueError("gradient does not match the model weights")
    g = grad.to_dense(model.n_atoms).view(np.float64)
    lr = opt.learning_rate(model.step_count)
    t = model.step_count + 1
    opt.first_moment *= opt.beta1
    opt.first_moment += (1 - opt.beta1) * g
    opt.second_moment *= opt.beta2
    opt.second_moment += (1 - opt.beta2) * (g * g)
    m_hat = opt.first_moment / (1 - opt.beta1**t)
    v_hat = opt.second_moment / (1 - opt.beta2**t)
    params = model.weights.view(np.float64)
    params -= lr * m_hat / (np.sqrt(v_hat) + opt.epsilon)
    model.step_count = t
    model.version += 1
    return model


def train_on_batch(model: MpNetModel, batch: Sequence[ChannelSample]) -> float:
    """One online step on a minibatch of observations; returns the mean loss before the update.

    Only ``x_observed`` is read from the samples.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    x = stack_observations(batch)
    return train_on_observations(model, x)


def train_on_observations(model: MpNetModel, x: np.ndarray) -> float:
    _, trace = forward_batch(model, x)
    loss = float(np.mean(trace.loss()))
    adam_step(model, backward(model, trace))
    return loss


# Checkpoint layout, all little-endian:
#   8 bytes  magic b"MPNETCK\x00"
#   u32 format version (1), u32 N, u32 A, u32 K, u64 step_count, u64 decay_interval_steps
#   f64 base_lr, decay_factor, beta1, beta2, epsilon
#   f64[N*2A] W, row-major, real and imaginary parts interleaved
#   f64[N*2A] Adam first moment, f64[N*2A] Adam second moment (same layout)
_MAGIC = b"MPNETCK\x00"
_HEADER = struct.Struct("<IIIIQQddddd")
CHECKPOINT_VERSION = 1


def save_checkpoint(model: MpNetModel, path) -> None:
    opt = model.optimizer
    header = _HEADER.pack(
        CHECKPOINT_VERSION,
        model.n_antennas,
        model.n_atoms,
        model.depth,
        model.step_count,
        opt.decay_interval_steps,
        opt.base_lr,
        opt.decay_factor,
        opt.beta1,
        opt.beta2,
        opt.epsilon,
    )
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(header)
        for arr in (model.weights.view(np.float64), opt.first_moment, opt.second_moment):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> MpNetModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path}: not an mpNet checkpoint")
    offset = len(_MAGIC)
    (version, n, a, k, step, interval, lr, decay, b1, b2, eps) = _HEADER.unpack_from(data, offset)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset += _HEADER.size
    size = n * 2 * a
    expected = offset + 3 * size * 8
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    arrays = [
        np.frombuffer(data, dtype="<f8", count=size, offset=offset + i * size * 8).astype(np.float64).reshape(n, 2 * a)
        for i in range(3)
    ]
    opt = AdamState(arrays[1], arrays[2], b1, b2, eps, lr, decay, interval)
    return MpNetModel(arrays[0].view(np.complex128), k, step, opt)
