"""Batch command line: ``onebit-ml {ser,fer,undertrained,train-snr}``."""

from __future__ import annotations

import argparse
import sys
import time

from onebit_ml.harness import (
    SimConfig,
    emit_csv,
    load_config,
    run_fer_sweep,
    run_ser_sweep,
    run_undertrained_sweep,
)
from onebit_ml.numerics import ConfigError, rng_stream
from onebit_ml.snr_estimator import build_snr_dataset, train_snr_estimator

# Stream id for estimator training, away from the per-SNR sweep streams.
_TRAIN_STREAM = 1_000_003


def _snr_model(text: str):
    if text == "perfect":
        return {"snr_mode": "perfect"}
    if text.startswith("estimated:") and len(text) > len("estimated:"):
        return {"snr_mode": "estimated", "snr_model": text.split(":", 1)[1]}
    raise argparse.ArgumentTypeError("expected 'perfect' or 'estimated:<weights path>'")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="onebit-ml", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, what in [
        ("ser", "uncoded symbol error rate sweep"),
        ("fer", "coded frame error rate sweep"),
        ("undertrained", "under-trained likelihood count sweep"),
        ("train-snr", "train the SNR estimator and write its weights"),
    ]:
        s = sub.add_parser(name, help=what)
        s.add_argument("--config", help="flat key = value file")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", required=True, help="CSV (sweeps) or weight file (train-snr)")
        s.add_argument("--threads", type=int)
        if name != "train-snr":
            s.add_argument("--snr-model", type=_snr_model, default=None)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    overrides = {"seed": args.seed, "threads": args.threads}
    overrides.update(getattr(args, "snr_model", None) or {})
    try:
        if args.command == "fer":
            overrides.setdefault("coding", True)
        cfg = load_config(args.config, **overrides) if args.config else SimConfig(**{
            k: v for k, v in overrides.items() if v is not None
        })
        start = time.perf_counter()
        if args.command == "train-snr":
            rng = rng_stream(cfg.seed, _TRAIN_STREAM)
            data = build_snr_dataset(
                cfg.nu, cfg.nr, cfg.m, cfg.est_grid_db, cfg.est_samples, rng,
                window=cfg.est_window, sigma2=cfg.sigma2_init, rho=cfg.rho, pool=cfg.est_pool,
            )
            train, val = data.split(0.1, rng)
            model, hist = train_snr_estimator(train, rng, epochs=cfg.est_epochs, val_data=val)
            model.save(args.out)
            print(f"validation RMSE {hist.val_rmse[-1]:.3f} dB (label std {val.labels.std():.3f})")
        else:
            run = {"ser": run_ser_sweep, "fer": run_fer_sweep,
                   "undertrained": run_undertrained_sweep}[args.command]
            emit_csv(run(cfg), args.out)
        print(f"{args.command}: wrote {args.out} in {time.perf_counter() - start:.1f} s")
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
