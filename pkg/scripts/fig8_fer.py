"""Coded FER with a rate-1/2 polar code of length 128 and SCL-8 decoding."""

from _common import ensure_dir, parser, print_table

from onebit_ml.harness import SimConfig, emit_csv, run_fer_sweep


def main():
    args = parser(__doc__, "results/fig8_fer.csv").parse_args()
    cfg = SimConfig(
        # Coherence blocks carry 32 frames so pilot cost is shared as in a long block.
        snr_db=(-8.0, -4.0, 0.0) if args.quick else tuple(float(s) for s in range(-12, 1, 2)),
        detectors=("naive", "adl-ns1", "adl-ns3", "ml-csi"),
        coding=True, kappa=64, eta=128, list_size=8, frames_per_block=32,
        min_errors=30 if args.quick else 100,
        max_trials=2_000 if args.quick else 20_000,
        batch_blocks=4, seed=args.seed, threads=args.threads,
    )
    res = run_fer_sweep(cfg)
    emit_csv(res, ensure_dir(args.out))
    print_table(res, "FER")


if __name__ == "__main__":
    main()
