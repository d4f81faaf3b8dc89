"""Mean number of under-trained likelihood functions per candidate vs SNR.

Four users, 32 antennas, 4-QAM, 45 pilots per candidate.
"""

from _common import ensure_dir, parser, print_table

from onebit_ml.harness import SimConfig, emit_csv, run_undertrained_sweep


def main():
    args = parser(__doc__, "results/fig4_undertrained.csv").parse_args()
    cfg = SimConfig(
        snr_db=tuple(float(s) for s in range(-10, 31, 10 if args.quick else 5)),
        n_tr=45, detectors=("naive", "adl-ns1", "adl-ns3", "adl-ns5"),
        n_channels=20 if args.quick else 200, seed=args.seed, threads=args.threads,
    )
    res = run_undertrained_sweep(cfg)
    emit_csv(res, ensure_dir(args.out))
    print_table(res, "undertrained_mean")


if __name__ == "__main__":
    main()
