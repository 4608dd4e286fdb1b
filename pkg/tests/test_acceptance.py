"""Exit criteria of the build; each test prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the report lines are shown
even without ``-s``.
"""

import time

import numpy as np
import pytest

from mpnet_online import experiments as ex
from mpnet_online import mpnet
from mpnet_online.array_geometry import build_dictionary, nominal_ula
from mpnet_online.channel_sim import ChannelStream, ChannelStreamConfig, stack_channels, stack_observations
from mpnet_online.cli import main
from mpnet_online.estimators import mp_estimate
from mpnet_online.gradcheck import run_gradcheck


@pytest.fixture
def report(capsys):
    def emit(tag, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {tag}: {detail}")
        assert ok, detail

    return emit


def test_ac1_mp_equivalence(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    d = build_dictionary(nominal_ula(64), 512)
    model = mpnet.init_from_dictionary(d, 8)
    x = rng.standard_normal((64, 1000)) + 1j * rng.standard_normal((64, 1000))
    h_hat, trace = mpnet.forward_batch(model, x)
    mismatched, worst = 0, 0.0
    for b in range(1000):
        scale = np.linalg.norm(x[:, b])
        ref = mp_estimate(x[:, b] / scale, d, 8)
        mismatched += list(trace.indices[:, b]) != ref.selected_indices
        expected = scale * ref.h_hat
        worst = max(worst, np.linalg.norm(h_hat[:, b] - expected) / np.linalg.norm(expected))
    elapsed = time.perf_counter() - t0
    ok = mismatched == 0 and worst <= 1e-12 and elapsed < 10
    report("AC1 MP-equivalence", ok, f"index mismatches {mismatched}/1000, max rel err {worst:.2e}, {elapsed:.1f}s")


def test_ac2_gradient_correctness(report):
    t0 = time.perf_counter()
    rep = run_gradcheck(n_instances=100, n_antennas=8, n_atoms=12, depth=3, seed=2024)
    elapsed = time.perf_counter() - t0
    ok = rep.max_rel_error < 1e-5 and elapsed < 30
    report(
        "AC2 gradient correctness",
        ok,
        f"max rel err {rep.max_rel_error:.2e} over {rep.n_instances} instances ({rep.n_rejected} rejected), {elapsed:.1f}s",
    )


def test_ac3_ls_anchor(report):
    stream = ChannelStream(ChannelStreamConfig(nominal_ula(64), 10.0, rng_seed=11))
    batch = stream.next_batch(10_000)
    value = float(np.mean(ex.rmse(stack_observations(batch), stack_channels(batch))))
    report("AC3 LS rMSE at 10 dB", abs(value / 0.1 - 1) <= 0.03, f"{value:.5f} vs 0.1 (tol 3%)")


def test_ac4_sweep_desk_scale(report):
    t0 = time.perf_counter()
    cfg = ex.SweepConfig(sigma_g_grid=[0.09], sigma_p_grid=[0.03], n_arrays=3, n_channels_per_array=200, seed=0)
    loss = ex.run_sweep(cfg)[0]["snr_loss_db"]
    elapsed = time.perf_counter() - t0
    report("AC4 SNR loss desk scale (3x200)", loss >= 7 and elapsed < 120, f"{loss:.2f} dB (>= 7), {elapsed:.1f}s")


def test_ac4_sweep_paper_scale(report):
    cfg = ex.SweepConfig(sigma_g_grid=[0.09], sigma_p_grid=[0.03], n_arrays=10, n_channels_per_array=1000, seed=0)
    loss = ex.run_sweep(cfg)[0]["snr_loss_db"]
    report("AC4 SNR loss paper scale (10x1000)", loss >= 10, f"{loss:.2f} dB (>= 10)")


def test_ac4_paper_scale_replicates(report):
    """Supplementary: mean over independent paper-scale replicates, seeds fixed in advance."""
    losses = []
    for seed in range(8):
        cfg = ex.SweepConfig(sigma_g_grid=[0.09], sigma_p_grid=[0.03], n_arrays=10, n_channels_per_array=1000, seed=seed)
        losses.append(ex.run_sweep(cfg)[0]["snr_loss_db"])
    spread = ", ".join(f"{v:.2f}" for v in losses)
    report("AC4 (supplementary) replicate mean, 8 x (10x1000)", np.mean(losses) >= 10, f"mean {np.mean(losses):.2f} dB [{spread}]")


def test_ac5_zero_perturbation(report):
    cfg = ex.SweepConfig(sigma_g_grid=[0.0], sigma_p_grid=[0.0], n_arrays=3, n_channels_per_array=200, seed=0)
    loss = ex.run_sweep(cfg)[0]["snr_loss_db"]
    report("AC5 zero-perturbation control", abs(loss) <= 1e-9, f"{loss!r} dB")


SMOOTH = 25  # minibatches in the trailing average


@pytest.fixture(scope="module")
def online_run():
    cfg = ex.OnlineConfig(
        n_antennas=64, atoms_factor=8, depth=8, snr_db=10.0, sigma_g=0.3, sigma_p=0.1, batch_size=200,
        n_batches=500, seed=0,
    )
    t0 = time.perf_counter()
    result = ex.run_online(cfg)
    return cfg, result, time.perf_counter() - t0


def test_ac6a_mpnet_beats_ls(report, online_run):
    cfg, result, elapsed = online_run
    final = ex.smoothed(result.records, "mpnet_nominal", SMOOTH)[-1]
    ok = final < 0.1 and elapsed < 900
    report("AC6a mpNet beats LS level", ok, f"final smoothed rMSE {10 * np.log10(final):.2f} dB vs -10 dB, run {elapsed:.0f}s")


def test_ac6b_mpnet_reaches_ideal(report, online_run):
    _, result, _ = online_run
    mp = 10 * np.log10(ex.smoothed(result.records, "mpnet_nominal", SMOOTH)[-1])
    ideal = 10 * np.log10(ex.smoothed(result.records, "omp_ideal", SMOOTH)[-1])
    nominal = 10 * np.log10(ex.smoothed(result.records, "omp_nominal", SMOOTH)[-1])
    report(
        "AC6b mpNet within 1 dB of OMP-ideal",
        mp - ideal <= 1.0,
        f"mpnet {mp:.2f} dB, omp_ideal {ideal:.2f} dB, gap {mp - ideal:.2f} dB (omp_nominal {nominal:.2f} dB)",
    )


def test_ac6c_random_init_slower(report, online_run):
    cfg, result, _ = online_run
    at = cfg.n_batches // 4 - 1
    nominal = ex.smoothed(result.records, "mpnet_nominal", SMOOTH)[at]
    rand = ex.smoothed(result.records, "mpnet_random", SMOOTH)[at]
    report(
        "AC6c random init converges slower",
        rand > nominal,
        f"at {(at + 1) * cfg.batch_size} channels: random {10 * np.log10(rand):.2f} dB, nominal {10 * np.log10(nominal):.2f} dB",
    )


def _mean_time(fn, reps):
    ts = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return float(np.mean(ts))


def test_ac7_gradient_sparsity(report):
    n, a, k = 64, 512, 8
    stream = ChannelStream(ChannelStreamConfig(nominal_ula(n), 10.0, rng_seed=3))
    model = mpnet.init_from_dictionary(build_dictionary(nominal_ula(n), a), k)
    worst, count = 0, 0
    for _ in range(50):
        x = stack_observations(stream.next_batch(200))
        for b in range(x.shape[1]):
            _, tr = mpnet.forward(model, x[:, b])
            g = mpnet.backward(model, tr)
            assert set(g.columns) <= set(tr.indices[:, 0])
            worst = max(worst, g.columns.size)
            count += 1
        mpnet.train_on_observations(model, x)
    report("AC7 per-sample gradient support", worst <= k, f"max {worst} columns (K={k}) over {count} samples")


def test_ac7_backward_cost_independent_of_atoms(report):
    n, k, b = 64, 8, 200
    rng = np.random.default_rng(0)
    x = rng.standard_normal((n, b)) + 1j * rng.standard_normal((n, b))
    setups = {}
    for a in (128, 1024):
        model = mpnet.init_random(n, a, k, rng)
        _, trace = mpnet.forward_batch(model, x)
        setups[a] = (model, trace)
    fwd, bwd = {a: [] for a in setups}, {a: [] for a in setups}
    for _ in range(3):  # warm-up
        for model, trace in setups.values():
            mpnet.forward_batch(model, x)
            mpnet.backward(model, trace)
    for _ in range(40):
        for a, (model, trace) in setups.items():
            fwd[a].append(_mean_time(lambda: mpnet.forward_batch(model, x), 1))
            bwd[a].append(_mean_time(lambda: mpnet.backward(model, trace), 1))
    fwd_ratio = np.mean(fwd[1024]) / np.mean(fwd[128])
    bwd_ratio = np.mean(bwd[1024]) / np.mean(bwd[128])
    report(
        "AC7 complexity (A 128 -> 1024)",
        bwd_ratio < 2 and fwd_ratio >= 6,
        f"backward x{bwd_ratio:.2f} (< 2), forward x{fwd_ratio:.2f} (>= 6), minibatch of {b}",
    )


def test_ac8_cli_determinism(report, tmp_path, monkeypatch):
    monkeypatch.setenv("MPNET_OUTPUT_DIR", str(tmp_path))
    online_cfg = tmp_path / "online.cfg"
    online_cfg.write_text("n_antennas = 32\ndepth = 4\nbatch_size = 50\nn_batches = 10\n")
    sweep_cfg = tmp_path / "sweep.cfg"
    sweep_cfg.write_text("sigma_g_grid = [0.0, 0.09]\nsigma_p_grid = [0.03]\nn_arrays = 2\nn_channels_per_array = 50\n")
    files = []
    for run in ("a", "b"):
        assert main(["online", "--config", str(online_cfg), "--seed", "1", "--out", f"online_{run}.csv", "--checkpoint-dir", f"ckpt_{run}"]) == 0
        assert main(["sweep", "--config", str(sweep_cfg), "--seed", "1", "--out", f"sweep_{run}.csv"]) == 0
        assert main(["dump-dict", "--sigma-g", "0.1", "--sigma-p", "0.05", "--seed", "1", "--out", f"dict_{run}.csv"]) == 0
        files.append(
            [
                (tmp_path / f"online_{run}.csv").read_bytes(),
                (tmp_path / f"sweep_{run}.csv").read_bytes(),
                (tmp_path / f"dict_{run}.csv").read_bytes(),
                (tmp_path / f"ckpt_{run}" / "mpnet_nominal.ckpt").read_bytes(),
                (tmp_path / f"ckpt_{run}" / "mpnet_random.ckpt").read_bytes(),
            ]
        )
    same = [x == y for x, y in zip(*files)]
    report("AC8 determinism", all(same), f"{sum(same)}/{len(same)} outputs byte-identical")


def test_ac9_unsupervised_purity(report):
    cfg = ex.OnlineConfig(depth=8, n_batches=20, seed=4)
    clean = ex.run_online(cfg)
    dirty = ex.run_online(cfg, corrupt_truth=True)
    same = all(clean.models[m].weights.tobytes() == dirty.models[m].weights.tobytes() for m in clean.models)
    metrics_changed = [r.rmse for r in clean.records] != [r.rmse for r in dirty.records]
    report(
        "AC9 unsupervised purity",
        same and metrics_changed,
        f"weights identical: {same}, metric rows changed: {metrics_changed}",
    )
