"""Baseline channel estimators over a steering-vector dictionary.

All argmax selections break ties towards the lowest atom index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .array_geometry import Dictionary

# relative norm below which an orthogonalized atom counts as linearly dependent
RANK_TOL = 1e-10


@dataclass
class EstimateResult:
    h_hat: np.ndarray
    selected_indices: list[int]
    coefficients: list[complex]
    residual_norm: float
    dropped_indices: list[int] = field(default_factory=list)


def _atoms(dictionary: Dictionary) -> np.ndarray:
    if not dictionary.normalized:
        raise ValueError("estimators require a dictionary with unit-norm columns")
    return dictionary.atoms


def ls_estimate(x: np.ndarray) -> np.ndarray:
    """The observation itself is the least squares (unbiased) estimate."""
    return np.array(x, dtype=np.complex128)


def single_atom_estimate(x: np.ndarray, dictionary: Dictionary) -> EstimateResult:
    """Project ``x`` on the atom most correlated with it."""
    atoms = _atoms(dictionary)
    x = np.asarray(x, dtype=np.complex128)
    corr = atoms.conj().T @ x
    v = int(np.argmax(np.abs(corr)))
    c = corr[v]
    h_hat = atoms[:, v] * c
    return EstimateResult(h_hat, [v], [complex(c)], float(np.linalg.norm(x - h_hat)))


def mp_estimate(x: np.ndarray, dictionary: Dictionary, k: int) -> EstimateResult:
    """Plain matching pursuit with ``k`` iterations (atoms may be re-selected)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    atoms = _atoms(dictionary)
    x = np.asarray(x, dtype=np.complex128)
    residual = x.copy()
    indices, coefs = [], []
    for _ in range(k):
        corr = atoms.conj().T @ residual
        s = int(np.argmax(np.abs(corr)))
        c = corr[s]
        residual = residual - atoms[:, s] * c
        indices.append(s)
        coefs.append(complex(c))
    return EstimateResult(x - residual, indices, coefs, float(np.linalg.norm(residual)))


def _orthogonalize(v: np.ndarray, basis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # two passes of Gram-Schmidt keep the basis orthonormal to machine precision
    coords = np.zeros(basis.shape[1], dtype=np.complex128)
    for _ in range(2):
        p = basis.conj().T @ v
        v = v - basis @ p
        coords += p
    return v, coords


def omp_estimate(x: np.ndarray, dictionary: Dictionary, k: int) -> EstimateResult:
    """Orthogonal matching pursuit with ``k`` selection steps.

    Coefficients on the selected atoms are refit by least squares after each
    step through an incrementally built QR factorization. An atom whose
    orthogonal complement vanishes is dropped and reported in
    ``dropped_indices``; it can not be selected again.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    atoms = _atoms(dictionary)
    x = np.asarray(x, dtype=np.complex128)
    n, a = atoms.shape
    q = np.zeros((n, 0), dtype=np.complex128)
    r_cols: list[np.ndarray] = []
    indices: list[int] = []
    dropped: list[int] = []
    available = np.ones(a, dtype=bool)
    residual = x.copy()
    for _ in range(k):
        if not available.any():
            break
        corr = np.abs(atoms.conj().T @ residual)
        corr[~available] = -1.0
        s = int(np.argmax(corr))
        available[s] = False
        atom = atoms[:, s]
        v, coords = _orthogonalize(atom, q)
        norm_v = np.linalg.norm(v)
        if norm_v < RANK_TOL * np.linalg.norm(atom):
            dropped.append(s)
            continue
        r_cols.append(np.append(coords, norm_v))
        qn = v / norm_v
        q = np.column_stack([q, qn])
        indices.append(s)
        residual = residual - qn * np.vdot(qn, residual)
    if indices:
        m = len(indices)
        r = np.zeros((m, m), dtype=np.complex128)
        for j, col in enumerate(r_cols):
            r[: j + 1, j] = col
        coefs = np.linalg.solve(r, q.conj().T @ x)
        h_hat = atoms[:, indices] @ coefs
    else:
        coefs = np.zeros(0, dtype=np.complex128)
        h_hat = np.zeros_like(x)
    residual = x - h_hat
    return EstimateResult(
        h_hat, indices, [complex(c) for c in coefs], float(np.linalg.norm(residual)), dropped
    )


def omp_batch(x: np.ndarray, atoms: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """OMP on the columns of ``x`` (shape ``(N, B)``) at once.

    Returns ``(h_hat, indices)`` with ``indices`` of shape ``(k, B)``; dropped
    (linearly dependent) selections are marked ``-1``. The estimate is the
    orthogonal projection of each observation on the span of its selected atoms.
    """
    x = np.asarray(x, dtype=np.complex128)
    n, a = atoms.shape
    b = x.shape[1]
    cols = np.arange(b)
    q = np.zeros((b, n, k), dtype=np.complex128)
    residual = x.T.copy()
    taken = np.zeros((b, a), dtype=bool)
    indices = np.full((k, b), -1, dtype=np.int64)
    atoms_h = atoms.conj().T
    atom_norms = np.linalg.norm(atoms, axis=0)
    for it in range(k):
        corr = np.abs(residual @ atoms_h.T)
        corr[taken] = -1.0
        s = np.argmax(corr, axis=1)
        taken[cols, s] = True
        v = atoms.T[s]
        basis = q[:, :, :it]
        for _ in range(2):
            v = v - np.einsum("bnk,bk->bn", basis, np.einsum("bnk,bn->bk", basis.conj(), v))
        norm_v = np.linalg.norm(v, axis=1)
        keep = norm_v >= RANK_TOL * atom_norms[s]
        qn = np.where(keep[:, None], v / np.where(keep, norm_v, 1.0)[:, None], 0.0)
        q[:, :, it] = qn
        indices[it] = np.where(keep, s, -1)
        residual = residual - qn * np.einsum("bn,bn->b", qn.conj(), residual)[:, None]
    h_hat = x - residual.T
    return h_hat, indices


def single_atom_batch(x: np.ndarray, atoms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-atom projection applied to every column of ``x``; returns ``(h_hat, indices)``."""
    corr = atoms.conj().T @ x
    v = np.argmax(np.abs(corr), axis=0)
    c = corr[v, np.arange(x.shape[1])]
    return atoms[:, v] * c, v
