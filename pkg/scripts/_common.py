"""Shared argument handling for the experiment scripts."""

import argparse
from pathlib import Path

from onebit_ml.harness import SweepResult


def parser(doc: str, out: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=doc)
    p.add_argument("--out", default=out)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--quick", action="store_true", help="coarse grid, fewer trials")
    return p


def ensure_dir(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def print_table(result: SweepResult, metric: str) -> None:
    rows = [r for r in result.sorted_rows() if r.metric == metric]
    dets = sorted({r.detector for r in rows})
    snrs = sorted({r.snr_db for r in rows})
    print(f"{metric:>8s} " + " ".join(f"{d:>14s}" for d in dets))
    for s in snrs:
        vals = {r.detector: r.value for r in rows if r.snr_db == s}
        print(f"{s:8.1f} " + " ".join(f"{vals.get(d, float('nan')):14.3e}" for d in dets))
