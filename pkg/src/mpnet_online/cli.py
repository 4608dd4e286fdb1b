"""Command line entry point: ``mpnet-online {sweep,online,gradcheck,dump-dict}``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .array_geometry import PerturbationSpec, build_dictionary, nominal_ula, perturb_array
from .gradcheck import run_gradcheck
from .mpnet import save_checkpoint

OUTPUT_DIR_ENV = "MPNET_OUTPUT_DIR"
GRADCHECK_TOL = 1e-5

log = logging.getLogger("mpnet_online")


def _output_path(name: str) -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / name


def _parse_set(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = ex.parse_value(value.strip(), f"--set {key.strip()}")
    return out


def _load_config(args, cls):
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        cfg = ex.parse_config_text(path.read_text(), cls, str(path))
    else:
        cfg = cls()
    overrides = _parse_set(args.set)
    overrides["seed"] = args.seed
    return ex.apply_overrides(cfg, overrides)


def cmd_sweep(args) -> int:
    cfg = _load_config(args, ex.SweepConfig)
    rows = ex.run_sweep(cfg)
    out = _output_path(args.out)
    ex.write_csv(out, ex.SWEEP_COLUMNS, rows)
    for row in rows:
        log.info("sigma_g=%g sigma_p=%g loss=%.2f dB", row["sigma_g"], row["sigma_p"], row["snr_loss_db"])
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_online(args) -> int:
    cfg = _load_config(args, ex.OnlineConfig)
    result = ex.run_online(cfg, timing=args.timing)
    out = _output_path(args.out)
    ex.write_csv(out, ex.ONLINE_COLUMNS, ex.records_as_rows(result.records))
    print(f"wrote {len(result.records)} rows to {out}")
    if args.checkpoint_dir is not None:
        ckpt_dir = _output_path(args.checkpoint_dir)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        for name, model in result.models.items():
            save_checkpoint(model, ckpt_dir / f"{name}.ckpt")
        print(f"wrote {len(result.models)} checkpoints to {ckpt_dir}")
    for method in cfg.methods:
        curve = [r.rmse for r in result.records if r.method == method]
        print(f"{method:>14s}: final rMSE {10 * np.log10(curve[-1]):.2f} dB")
    return 0


def cmd_gradcheck(args) -> int:
    report = run_gradcheck(n_instances=args.instances, seed=args.seed)
    status = "PASS" if report.max_rel_error < GRADCHECK_TOL else "FAIL"
    print(
        f"max relative error {report.max_rel_error:.3e} over {report.n_instances} instances "
        f"({report.n_coordinates} coordinates, {report.n_rejected} near-tie draws rejected): {status}"
    )
    return 0 if status == "PASS" else 1


def cmd_dump_dict(args) -> int:
    array = nominal_ula(args.n_antennas)
    if args.sigma_g > 0 or args.sigma_p > 0:
        array = perturb_array(array, PerturbationSpec(args.sigma_g, args.sigma_p, args.seed))
    d = build_dictionary(array, args.atoms_factor * args.n_antennas, normalize=not args.unnormalized)
    out = _output_path(args.out)
    with open(out, "w", newline="") as fh:
        fh.write(f"# schema_version={ex.SCHEMA_VERSION} normalized={d.normalized}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["atom", "azimuth"] + [f"{p}_{i}" for i in range(d.n_antennas) for p in ("re", "im")])
        for j in range(d.n_atoms):
            col = np.ascontiguousarray(d.atoms[:, j]).view(np.float64)
            writer.writerow([j, repr(float(d.azimuths[j]))] + [repr(float(v)) for v in col])
    print(f"wrote {d.n_antennas}x{d.n_atoms} dictionary to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpnet-online", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_options(p, default_out):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", default=default_out, help=f"output CSV (relative to ${OUTPUT_DIR_ENV})")

    p = sub.add_parser("sweep", help="SNR loss of the nominal dictionary over an uncertainty grid")
    add_run_options(p, "sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("online", help="online mpNet training against the baselines")
    add_run_options(p, "online.csv")
    p.add_argument("--checkpoint-dir", help="write trained mpNet checkpoints here")
    p.add_argument("--timing", action="store_true", help="record wall times (breaks byte reproducibility)")
    p.set_defaults(func=cmd_online)

    p = sub.add_parser("gradcheck", help="finite-difference check of the mpNet gradient")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("dump-dict", help="write a steering-vector dictionary to CSV")
    p.add_argument("--n-antennas", type=int, default=64)
    p.add_argument("--atoms-factor", type=int, default=8)
    p.add_argument("--sigma-g", type=float, default=0.0)
    p.add_argument("--sigma-p", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unnormalized", action="store_true")
    p.add_argument("--out", default="dictionary.csv")
    p.set_defaults(func=cmd_dump_dict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
