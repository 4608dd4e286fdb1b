"""Sparse multipath channels, calibrated noise and a deterministic observation stream."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .array_geometry import AntennaArray, steering_matrix, steering_vector


@dataclass(frozen=True)
class PathSpec:
    azimuth: float
    gain: complex


@dataclass
class ChannelSample:
    h_true: np.ndarray
    x_observed: np.ndarray
    noise_var: float
    paths: list[PathSpec] = field(default_factory=list)


@dataclass(frozen=True)
class PathCountLaw:
    """Distribution of the number of paths: ``uniform`` on ``{1..n}`` or ``constant`` ``n``."""

    kind: str = "uniform"
    n: int = 5

    def __post_init__(self):
        if self.kind not in ("uniform", "constant"):
            raise ValueError(f"unknown path count law {self.kind!r}")
        if self.n < 1:
            raise ValueError(f"path count must be >= 1, got {self.n}")

    @classmethod
    def parse(cls, text: str) -> "PathCountLaw":
        """Parse ``"uniform:5"`` or ``"constant:1"``."""
        kind, _, n = text.partition(":")
        return cls(kind.strip(), int(n) if n else 5)

    def draw(self, rng: np.random.Generator) -> int:
        if self.kind == "constant":
            return self.n
        return int(rng.integers(1, self.n + 1))

    def __str__(self):
        return f"{self.kind}:{self.n}"


@dataclass(frozen=True)
class ChannelStreamConfig:
    true_array: AntennaArray
    snr_in_db: float
    path_count_law: PathCountLaw = PathCountLaw()
    rng_seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.snr_in_db):
            raise ValueError(f"snr_in_db must be finite, got {self.snr_in_db}")


def make_single_path(array: AntennaArray, azimuth: float) -> np.ndarray:
    """Unit-gain single path channel ``h = e(u)``."""
    return steering_vector(array, azimuth)


def make_multipath(array: AntennaArray, paths: Sequence[PathSpec]) -> np.ndarray:
    """``h = sum_p beta_p e(u_p)``."""
    if len(paths) == 0:
        raise ValueError("at least one path is required")
    h = np.zeros(array.n_antennas, dtype=np.complex128)
    for p in paths:
        h += p.gain * steering_vector(array, p.azimuth)
    return h


def add_noise(h: np.ndarray, snr_in_db: float, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Add CN(0, sigma^2 I) noise with ``sigma^2 = ||h||^2 / (N 10^(snr/10))``.

    The variance is set from the realized channel norm, so the input SNR is
    exact per observation. Returns ``(x, sigma^2)``.
    """
    h = np.asarray(h, dtype=np.complex128)
    energy = float(np.vdot(h, h).real)
    if energy <= 0:
        raise ValueError("cannot calibrate noise on a zero channel")
    n = h.shape[0]
    noise_var = energy / (n * 10 ** (snr_in_db / 10))
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(noise_var / 2)
    return h + noise, noise_var


def draw_paths(rng: np.random.Generator, law: PathCountLaw) -> list[PathSpec]:
    """Random sparse path set: uniform azimuths on ``[0, pi)``, gains with CN(0,1) amplitudes and uniform phases."""
    n_paths = law.draw(rng)
    azimuths = rng.uniform(0.0, np.pi, n_paths)
    amplitudes = np.abs(rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / np.sqrt(2)
    amplitudes = np.sort(amplitudes)[::-1]
    phases = rng.uniform(0.0, 2 * np.pi, n_paths)
    gains = amplitudes * np.exp(1j * phases)
    return [PathSpec(float(a), complex(g)) for a, g in zip(azimuths, gains)]


def sample_at(cfg: ChannelStreamConfig, index: int) -> ChannelSample:
    """The ``index``-th sample of the stream; depends only on ``(cfg.rng_seed, index)``."""
    rng = np.random.default_rng([cfg.rng_seed, index])
    paths = draw_paths(rng, cfg.path_count_law)
    gains = np.array([p.gain for p in paths])
    h = steering_matrix(cfg.true_array, [p.azimuth for p in paths]) @ gains
    x, noise_var = add_noise(h, cfg.snr_in_db, rng)
    return ChannelSample(h, x, noise_var, paths)


class ChannelStream:
    """Infinite stream of noisy observations on a fixed true array.

    >>> from mpnet_online.array_geometry import nominal_ula
    >>> stream = ChannelStream(ChannelStreamConfig(nominal_ula(4), 10.0, rng_seed=3))
    >>> len(stream.next_batch(5)), stream.position
    (5, 5)
    """

    def __init__(self, cfg: ChannelStreamConfig):
        self.cfg = cfg
        self.position = 0

    def next_batch(self, batch_size: int) -> list[ChannelSample]:
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        start = self.position
        self.position += batch_size
        return [sample_at(self.cfg, i) for i in range(start, start + batch_size)]


def next_batch(stream: ChannelStream, batch_size: int) -> list[ChannelSample]:
    return stream.next_batch(batch_size)


def stack_observations(batch: Iterable[ChannelSample]) -> np.ndarray:
    """Observations of a batch as the columns of an ``(N, B)`` matrix."""
    return np.stack([s.x_observed for s in batch], axis=1)


def stack_channels(batch: Iterable[ChannelSample]) -> np.ndarray:
    return np.stack([s.h_true for s in batch], axis=1)


def dump_samples_csv(path, batch: Sequence[ChannelSample], snr_db: float, first_index: int = 0) -> None:
    """Write one row per sample: ``sample_index,N,snr_db,P`` then ``h_re_i,h_im_i`` and ``x_re_i,x_im_i`` pairs."""
    n = batch[0].h_true.shape[0]
    header = ["sample_index", "N", "snr_db", "P"]
    header += [f"h_{part}_{i}" for i in range(n) for part in ("re", "im")]
    header += [f"x_{part}_{i}" for i in range(n) for part in ("re", "im")]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k, s in enumerate(batch):
            row = [first_index + k, n, repr(float(snr_db)), len(s.paths)]
            row += [repr(float(v)) for v in s.h_true.view(np.float64)]
            row += [repr(float(v)) for v in s.x_observed.view(np.float64)]
            writer.writerow(row)
