"""Uncoded SER: naive, ADL (perfect and estimated SNR), CSI references.

Four users, 32 antennas, 45 pilots, 4-QAM.  Without ``--snr-model`` a fresh
estimator is trained first and stored next to the CSV.
"""

from _common import ensure_dir, parser, print_table

from onebit_ml.harness import SimConfig, emit_csv, run_ser_sweep, snr_at_rate
from onebit_ml.numerics import rng_stream
from onebit_ml.snr_estimator import build_snr_dataset, train_snr_estimator


def train_model(cfg: SimConfig, path, seed: int):
    rng = rng_stream(seed, 1_000_003)
    data = build_snr_dataset(
        cfg.nu, cfg.nr, cfg.m, cfg.est_grid_db, cfg.est_samples, rng,
        window=cfg.est_window, sigma2=cfg.sigma2_init, rho=cfg.rho, pool=cfg.est_pool,
    )
    train, val = data.split(0.1, rng)
    model, hist = train_snr_estimator(train, rng, epochs=cfg.est_epochs, val_data=val)
    model.save(path)
    print(f"SNR estimator (window features): validation RMSE {hist.val_rmse[-1]:.2f} dB")
    # Raw one-bit vectors as inputs, for comparison only.
    raw = build_snr_dataset(
        cfg.nu, cfg.nr, cfg.m, cfg.est_grid_db, cfg.est_samples, rng, feature="raw", rho=cfg.rho
    )
    raw_train, raw_val = raw.split(0.1, rng)
    _, raw_hist = train_snr_estimator(raw_train, rng, epochs=cfg.est_epochs, val_data=raw_val)
    print(
        f"SNR estimator (raw signs): validation RMSE {raw_hist.val_rmse[-1]:.2f} dB "
        f"(label std {raw_val.labels.std():.2f} dB)"
    )


def main():
    p = parser(__doc__, "results/fig5_ser.csv")
    p.add_argument("--snr-model", default="")
    args = p.parse_args()
    out = ensure_dir(args.out)
    model_path = args.snr_model or str(out.with_suffix(".snr_model.txt"))
    grid = (-5.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 15.0, 20.0)
    cfg = SimConfig(
        snr_db=grid if not args.quick else (0.0, 4.0, 10.0, 20.0),
        detectors=(
            "naive", "adl-ns1", "adl-ns3", "adl-ns3-est", "ml-csi", "zf-csi", "ml-unq-nr10",
        ),
        min_errors=50 if args.quick else 200,
        max_trials=20_000 if args.quick else 1_000_000,
        n_data=500, snr_model=model_path, seed=args.seed, threads=args.threads,
    )
    if not args.snr_model:
        train_model(cfg, model_path, args.seed)
    res = run_ser_sweep(cfg)
    emit_csv(res, out)
    print_table(res, "SER")
    for det in cfg.detectors:
        print(f"{det:>14s}: SER 1e-3 at {snr_at_rate(*res.series(det, 'SER'), 1e-3):.2f} dB")


if __name__ == "__main__":
    main()
