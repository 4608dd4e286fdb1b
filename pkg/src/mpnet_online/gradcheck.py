"""Central finite-difference verification of the mpNet backward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mpnet import MpNetModel, backward, forward, init_random


@dataclass
class GradcheckReport:
    n_instances: int
    n_rejected: int
    max_rel_error: float
    n_coordinates: int


def selection_margin(model: MpNetModel, x: np.ndarray) -> float:
    """Smallest gap between the two largest correlation moduli over all layers."""
    _, trace = forward(model, x)
    w_h = model.weights.conj().T
    gaps = []
    for layer in range(model.depth):
        mags = np.sort(np.abs(w_h @ trace.residuals[layer, :, 0]))
        gaps.append(mags[-1] - mags[-2])
    return float(min(gaps))


def _loss(model: MpNetModel, x: np.ndarray) -> float:
    return float(forward(model, x)[1].loss()[0])


def check_instance(model: MpNetModel, x: np.ndarray, step: float = 1e-6) -> tuple[float, int]:
    """Max relative error between analytic and central-difference gradients on touched coordinates.

    Coordinates are those of the real representation of every selected column;
    a coordinate where both gradients are exactly zero counts as error 0.
    """
    _, trace = forward(model, x)
    grad = backward(model, trace)
    analytic = grad.values.view(np.float64)
    params = model.weights.view(np.float64)
    numeric = np.empty_like(analytic)
    for j, col in enumerate(grad.columns):
        for part in range(2):
            coord = 2 * col + part
            saved = params[:, coord].copy()
            for i in range(params.shape[0]):
                params[i, coord] = saved[i] + step
                up = _loss(model, x)
                params[i, coord] = saved[i] - step
                down = _loss(model, x)
                params[i, coord] = saved[i]
                numeric[i, 2 * j + part] = (up - down) / (2 * step)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    diff = np.abs(analytic - numeric)
    rel = np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 0)
    return float(rel.max()) if rel.size else 0.0, analytic.size


def run_gradcheck(
    n_instances: int = 100,
    n_antennas: int = 8,
    n_atoms: int = 12,
    depth: int = 3,
    seed: int = 0,
    step: float = 1e-6,
    min_margin: float = 1e-4,
) -> GradcheckReport:
    """Check ``n_instances`` random instances, redrawing any whose selection is too close to a tie."""
    rng = np.random.default_rng(seed)
    worst, rejected, coords, done = 0.0, 0, 0, 0
    while done < n_instances:
        model = init_random(n_antennas, n_atoms, depth, rng)
        x = rng.standard_normal(n_antennas) + 1j * rng.standard_normal(n_antennas)
        if selection_margin(model, x) < min_margin:
            rejected += 1
            continue
        err, n = check_instance(model, x, step)
        worst = max(worst, err)
        coords += n
        done += 1
    return GradcheckReport(done, rejected, worst, coords)
