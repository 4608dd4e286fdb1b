"""Experiment drivers: the imperfect-array SNR-loss sweep and the online learning run."""

from __future__ import annotations

import ast
import csv
import io
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import mpnet
from .array_geometry import PerturbationSpec, build_dictionary, nominal_ula, perturb_array, steering_matrix
from .channel_sim import ChannelStream, ChannelStreamConfig, PathCountLaw, add_noise, stack_channels, stack_observations
from .estimators import omp_batch, single_atom_batch

SCHEMA_VERSION = 1
ONLINE_COLUMNS = ["method", "channels_seen", "rmse", "rmse_db", "wall_time_s"]
SWEEP_COLUMNS = ["sigma_g", "sigma_p", "snr_loss_db", "n_samples"]
METHODS = ("mpnet_nominal", "mpnet_random", "ls", "omp_nominal", "omp_ideal")


def sub_seed(seed: int, *tags: int) -> int:
    """Deterministic 32-bit seed for the component identified by ``tags``."""
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1)[0])


def rmse(h_hat: np.ndarray, h_true: np.ndarray) -> float | np.ndarray:
    """Relative squared error ``||h_hat - h||^2 / ||h||^2``, per column for matrices."""
    h_true = np.asarray(h_true)
    energy = np.sum(np.abs(h_true) ** 2, axis=0)
    if np.any(energy == 0):
        raise ValueError("rMSE is undefined for a zero channel")
    err = np.sum(np.abs(np.asarray(h_hat) - h_true) ** 2, axis=0)
    return err / energy


def snr_loss(h_hat_nominal: np.ndarray, h_hat_ideal: np.ndarray, h_true: np.ndarray) -> float:
    """SNR loss in dB of the nominal estimate relative to the ideal one.

    Errors are summed over every channel (columns) before taking the ratio,
    i.e. the ratio of mean squared errors.
    """
    err_nom = np.sum(np.abs(np.asarray(h_hat_nominal) - h_true) ** 2)
    err_ideal = np.sum(np.abs(np.asarray(h_hat_ideal) - h_true) ** 2)
    if err_ideal == 0:
        if err_nom == 0:
            return 0.0
        raise ValueError("ideal estimation error is zero, SNR loss undefined")
    return float(10 * np.log10(err_nom / err_ideal))


@dataclass
class SweepConfig:
    n_antennas: int = 64
    atoms_factor: int = 32
    snr_db: float = 10.0
    sigma_g_grid: list = field(default_factory=lambda: [0.0, 0.03, 0.06, 0.09, 0.12, 0.15])
    sigma_p_grid: list = field(default_factory=lambda: [0.0, 0.01, 0.02, 0.03, 0.04, 0.05])
    n_arrays: int = 10
    n_channels_per_array: int = 1000
    seed: int = 0

    def validate(self):
        if not self.sigma_g_grid or not self.sigma_p_grid:
            raise ValueError("sweep grids must be non-empty")
        if min(self.n_antennas, self.atoms_factor, self.n_arrays, self.n_channels_per_array) < 1:
            raise ValueError("sweep counts must be >= 1")
        if min(self.sigma_g_grid) < 0 or min(self.sigma_p_grid) < 0:
            raise ValueError("uncertainties must be non-negative")


@dataclass
class OnlineConfig:
    n_antennas: int = 64
    atoms_factor: int = 8
    depth: int = 8
    snr_db: float = 10.0
    sigma_g: float = 0.3
    sigma_p: float = 0.1
    batch_size: int = 200
    n_batches: int = 500
    methods: list = field(default_factory=lambda: list(METHODS))
    path_count_law: str = "uniform:5"
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.methods, str):
            self.methods = [m.strip() for m in self.methods.split(",") if m.strip()]

    def validate(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not self.methods:
            raise ValueError("methods must be non-empty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {list(METHODS)}")
        if min(self.n_antennas, self.atoms_factor, self.batch_size, self.n_batches) < 1:
            raise ValueError("online counts must be >= 1")
        PathCountLaw.parse(self.path_count_law)


@dataclass
class ExperimentRecord:
    method: str
    channels_seen: int
    rmse: float
    rmse_db: float
    wall_time_s: float = 0.0


def sweep_cell(cfg: SweepConfig, sigma_g: float, sigma_p: float) -> tuple[float, int]:
    """SNR loss of one grid cell; array ``r`` reuses the same random draws in every cell."""
    nominal = nominal_ula(cfg.n_antennas)
    n_atoms = cfg.atoms_factor * cfg.n_antennas
    nominal_atoms = build_dictionary(nominal, n_atoms).atoms
    err_nom = err_ideal = 0.0
    for r in range(cfg.n_arrays):
        true = perturb_array(nominal, PerturbationSpec(sigma_g, sigma_p, sub_seed(cfg.seed, 0, r)))
        ideal_atoms = build_dictionary(true, n_atoms).atoms
        rng = np.random.default_rng(sub_seed(cfg.seed, 1, r))
        azimuths = rng.uniform(0.0, np.pi, cfg.n_channels_per_array)
        h = steering_matrix(true, azimuths)
        x = np.empty_like(h)
        for j in range(h.shape[1]):
            x[:, j] = add_noise(h[:, j], cfg.snr_db, rng)[0]
        err_nom += np.sum(np.abs(single_atom_batch(x, nominal_atoms)[0] - h) ** 2)
        err_ideal += np.sum(np.abs(single_atom_batch(x, ideal_atoms)[0] - h) ** 2)
    n = cfg.n_arrays * cfg.n_channels_per_array
    if err_nom == err_ideal:
        return 0.0, n
    return float(10 * np.log10(err_nom / err_ideal)), n


def run_sweep(cfg: SweepConfig) -> list[dict]:
    cfg.validate()
    rows = []
    for sg in cfg.sigma_g_grid:
        for sp in cfg.sigma_p_grid:
            loss, n = sweep_cell(cfg, float(sg), float(sp))
            rows.append({"sigma_g": float(sg), "sigma_p": float(sp), "snr_loss_db": loss, "n_samples": n})
    return rows


@dataclass
class OnlineResult:
    records: list[ExperimentRecord]
    models: dict[str, mpnet.MpNetModel]


def _to_db(value: float) -> float:
    return float(10 * np.log10(value)) if value > 0 else float("-inf")


def run_online(cfg: OnlineConfig, timing: bool = False, corrupt_truth: bool = False) -> OnlineResult:
    """Stream minibatches on one fixed perturbed array and score every method on the same samples.

    mpNet variants are scored on a batch before they train on it. With
    ``timing`` the per-method estimation time is recorded, otherwise
    ``wall_time_s`` is 0 so that outputs are reproducible byte for byte.
    ``corrupt_truth`` replaces the ground-truth channels handed to the trainer
    with noise; it exists to demonstrate that training never reads them.
    """
    cfg.validate()
    n, a, k = cfg.n_antennas, cfg.atoms_factor * cfg.n_antennas, cfg.depth
    nominal = nominal_ula(n)
    true = perturb_array(nominal, PerturbationSpec(cfg.sigma_g, cfg.sigma_p, sub_seed(cfg.seed, 0)))
    nominal_dict = build_dictionary(nominal, a)
    ideal_dict = build_dictionary(true, a)
    stream = ChannelStream(
        ChannelStreamConfig(true, cfg.snr_db, PathCountLaw.parse(cfg.path_count_law), sub_seed(cfg.seed, 1))
    )
    models = {}
    if "mpnet_nominal" in cfg.methods:
        models["mpnet_nominal"] = mpnet.init_from_dictionary(nominal_dict, k)
    if "mpnet_random" in cfg.methods:
        models["mpnet_random"] = mpnet.init_random(n, a, k, np.random.default_rng(sub_seed(cfg.seed, 2)))
    methods = [m for m in METHODS if m in cfg.methods]
    garbage = np.random.default_rng(sub_seed(cfg.seed, 3))

    records = []
    for b in range(cfg.n_batches):
        batch = stream.next_batch(cfg.batch_size)
        if corrupt_truth:
            for s in batch:
                s.h_true = garbage.standard_normal(n) + 1j * garbage.standard_normal(n)
        h = stack_channels(batch)
        x = stack_observations(batch)
        seen = (b + 1) * cfg.batch_size
        for method in methods:
            t0 = time.perf_counter()
            if method == "ls":
                h_hat = x
            elif method == "omp_nominal":
                h_hat = omp_batch(x, nominal_dict.atoms, k)[0]
            elif method == "omp_ideal":
                h_hat = omp_batch(x, ideal_dict.atoms, k)[0]
            else:
                h_hat, trace = mpnet.forward_batch(models[method], x)
            elapsed = time.perf_counter() - t0 if timing else 0.0
            if method in models:
                mpnet.adam_step(models[method], mpnet.backward(models[method], trace))
            value = float(np.mean(rmse(h_hat, h)))
            records.append(ExperimentRecord(method, seen, value, _to_db(value), elapsed))
    return OnlineResult(records, models)


def smoothed(records: list[ExperimentRecord], method: str, window: int) -> np.ndarray:
    """Trailing moving average of a method's rMSE curve (shorter window at the start)."""
    curve = np.array([r.rmse for r in records if r.method == method])
    csum = np.concatenate([[0.0], np.cumsum(curve)])
    idx = np.arange(1, curve.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, columns: list[str], rows: list[dict]) -> None:
    """CSV with a leading ``# schema_version=N`` comment line; floats are written with ``repr``."""
    buf = io.StringIO()
    buf.write(f"# schema_version={SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def records_as_rows(records: list[ExperimentRecord]) -> list[dict]:
    return [vars(r) for r in records]


def parse_config_text(text: str, cls, source: str = "<config>"):
    """Build ``cls`` from ``key = value`` lines; values are Python literals, ``#`` starts a comment."""
    known = {f.name for f in fields(cls)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        if key not in known:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = parse_value(value.strip(), f"{source}:{lineno}")
    return cls(**values)


def parse_value(text: str, where: str = "value"):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        # bare words such as method names or "uniform:5"
        if text and all(ch.isalnum() or ch in "_:.-" for ch in text):
            return text
        raise ValueError(f"{where}: cannot parse {text!r}") from None


def apply_overrides(cfg, overrides: dict):
    known = {f.name for f in fields(cfg)}
    for key, value in overrides.items():
        if key not in known:
            raise ValueError(f"unknown key {key!r}")
        setattr(cfg, key, value)
    if hasattr(cfg, "__post_init__"):
        cfg.__post_init__()
    return cfg
