"""SER of naive likelihood learning for several training lengths.

Three users, 32 antennas, 4-QAM; one-bit ML with perfect CSI as reference.
"""

from _common import ensure_dir, parser, print_table

from onebit_ml.harness import SimConfig, emit_csv, run_ser_sweep


def main():
    args = parser(__doc__, "results/fig1_naive_ser.csv").parse_args()
    grid = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0) if args.quick else tuple(
        float(s) for s in range(-10, 31, 5)
    )
    cfg = SimConfig(
        nu=3, nr=32, m=4, snr_db=grid,
        detectors=("naive-ntr10", "naive-ntr100", "naive-ntr1000", "ml-csi"),
        min_errors=50 if args.quick else 200,
        max_trials=20_000 if args.quick else 1_000_000,
        n_data=200, seed=args.seed, threads=args.threads,
    )
    res = run_ser_sweep(cfg)
    emit_csv(res, ensure_dir(args.out))
    print_table(res, "SER")


if __name__ == "__main__":
    main()
