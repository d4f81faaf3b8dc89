"""Uncoded SER with three users, 64 antennas and 16-QAM (4096 candidates)."""

from _common import ensure_dir, parser, print_table

from onebit_ml.harness import SimConfig, emit_csv, run_ser_sweep


def main():
    args = parser(__doc__, "results/fig7_16qam.csv").parse_args()
    cfg = SimConfig(
        nu=3, nr=64, m=16,
        snr_db=(0.0, 10.0, 20.0) if args.quick else tuple(float(s) for s in range(-5, 26, 5)),
        detectors=("naive", "adl-ns1", "adl-ns3", "ml-csi", "zf-csi"),
        min_errors=50 if args.quick else 200,
        max_trials=5_000 if args.quick else 200_000,
        n_data=500, batch_blocks=4, seed=args.seed, threads=args.threads,
    )
    res = run_ser_sweep(cfg)
    emit_csv(res, ensure_dir(args.out))
    print_table(res, "SER")


if __name__ == "__main__":
    main()
