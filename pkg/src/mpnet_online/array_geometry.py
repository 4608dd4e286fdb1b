"""Antenna arrays, steering vectors and steering-vector dictionaries.

Positions are stored in units of the wavelength, so the phase of antenna ``i``
for a plane wave of direction ``u`` is simply ``-2*pi*(a_i . u)``. Directions
are azimuth-only: ``u = (cos(theta), sin(theta), 0)``, broadside is ``pi/2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AntennaArray:
    """Per-antenna complex gains and 3-D positions (wavelength units)."""

    gains: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        gains = np.array(self.gains, dtype=np.complex128).reshape(-1)
        positions = np.array(self.positions, dtype=np.float64)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ValueError(f"positions must have shape (N, 3), got {positions.shape}")
        if gains.shape[0] != positions.shape[0] or gains.shape[0] < 1:
            raise ValueError(
                f"gains and positions must share a length N >= 1, got {gains.shape[0]} and {positions.shape[0]}"
            )
        gains.flags.writeable = False
        positions.flags.writeable = False
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "positions", positions)

    @property
    def n_antennas(self) -> int:
        return self.gains.shape[0]


@dataclass(frozen=True)
class PerturbationSpec:
    """Gain uncertainty ``sigma_g`` and x-position uncertainty ``sigma_p`` (in wavelengths)."""

    sigma_g: float
    sigma_p: float
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.sigma_g >= 0 and self.sigma_p >= 0):
            raise ValueError(f"uncertainties must be non-negative, got sigma_g={self.sigma_g}, sigma_p={self.sigma_p}")


@dataclass(frozen=True)
class Dictionary:
    """``N x A`` matrix of steering vectors together with the azimuth grid."""

    atoms: np.ndarray
    azimuths: np.ndarray
    normalized: bool

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=np.complex128)
        azimuths = np.array(self.azimuths, dtype=np.float64).reshape(-1)
        if atoms.ndim != 2 or atoms.shape[1] != azimuths.shape[0]:
            raise ValueError(f"atoms {atoms.shape} do not match {azimuths.shape[0]} azimuths")
        atoms.flags.writeable = False
        azimuths.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "azimuths", azimuths)

    @property
    def n_antennas(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]


def nominal_ula(n_antennas: int, spacing: float = 0.5) -> AntennaArray:
    """Unit-gain uniform linear array along the x-axis, centred on the origin."""
    if n_antennas < 1:
        raise ValueError(f"n_antennas must be >= 1, got {n_antennas}")
    idx = np.arange(1, n_antennas + 1)
    positions = np.zeros((n_antennas, 3))
    positions[:, 0] = (idx - (n_antennas + 1) / 2) * spacing
    return AntennaArray(np.ones(n_antennas, dtype=np.complex128), positions)


def _directions(azimuths) -> np.ndarray:
    az = np.asarray(azimuths, dtype=np.float64)
    return np.stack([np.cos(az), np.sin(az), np.zeros_like(az)], axis=-1)


def steering_matrix(array: AntennaArray, azimuths) -> np.ndarray:
    """Unnormalized steering vectors, one column per azimuth, shape ``(N, len(azimuths))``."""
    u = _directions(np.atleast_1d(azimuths))
    phase = -2 * np.pi * (array.positions @ u.T)
    return array.gains[:, None] * np.exp(1j * phase)


def steering_vector(array: AntennaArray, azimuth: float) -> np.ndarray:
    """Response ``g_i exp(-j 2 pi a_i.u)`` of every antenna to a plane wave from ``azimuth``."""
    return steering_matrix(array, [azimuth])[:, 0]


def perturb_array(nominal: AntennaArray, spec: PerturbationSpec) -> AntennaArray:
    """Draw a "true" array around ``nominal``.

    Gains receive additive CN(0, sigma_g^2) noise and positions are shifted along
    the x-axis by N(0, sigma_p^2) wavelengths. The draw depends only on
    ``spec.rng_seed``.
    """
    rng = np.random.default_rng(spec.rng_seed)
    n = nominal.n_antennas
    gain_noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * (spec.sigma_g / np.sqrt(2))
    shift = rng.standard_normal(n) * spec.sigma_p
    positions = np.array(nominal.positions)
    positions[:, 0] += shift
    return AntennaArray(nominal.gains + gain_noise, positions)


def azimuth_grid(n_atoms: int) -> np.ndarray:
    """``n_atoms`` evenly spaced azimuths on the half circle ``[0, pi)``."""
    if n_atoms < 1:
        raise ValueError(f"n_atoms must be >= 1, got {n_atoms}")
    return np.arange(n_atoms) * (np.pi / n_atoms)


def build_dictionary(array: AntennaArray, n_atoms: int, normalize: bool = True) -> Dictionary:
    """Steering-vector dictionary on the half-circle azimuth grid.

    A linear array cannot tell ``theta`` from ``-theta``, so the grid covers
    ``[0, pi)`` only. With ``normalize`` every column is scaled to unit norm.
    """
    azimuths = azimuth_grid(n_atoms)
    atoms = steering_matrix(array, azimuths)
    if normalize:
        atoms = atoms / np.linalg.norm(atoms, axis=0, keepdims=True)
    return Dictionary(atoms, azimuths, normalize)
