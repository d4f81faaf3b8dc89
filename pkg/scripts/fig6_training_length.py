"""ADL with 45 and 90 pilots, one and three sub-blocks, against CSI ML."""

from _common import ensure_dir, parser, print_table

from onebit_ml.harness import SimConfig, emit_csv, run_ser_sweep, snr_at_rate


def main():
    args = parser(__doc__, "results/fig6_training_length.csv").parse_args()
    cfg = SimConfig(
        snr_db=(0.0, 4.0, 8.0) if args.quick else (-5.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0),
        detectors=("adl-ns1", "adl-ns3", "adl-ns1-ntr90", "adl-ns3-ntr90", "ml-csi"),
        min_errors=50 if args.quick else 200,
        max_trials=20_000 if args.quick else 1_000_000,
        n_data=500, seed=args.seed, threads=args.threads,
    )
    res = run_ser_sweep(cfg)
    emit_csv(res, ensure_dir(args.out))
    print_table(res, "SER")
    for det in cfg.detectors:
        print(f"{det:>14s}: SER 1e-3 at {snr_at_rate(*res.series(det, 'SER'), 1e-3):.2f} dB")


if __name__ == "__main__":
    main()
