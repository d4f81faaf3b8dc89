"""Monte Carlo sweeps, configuration and CSV output.

Every coherence block draws from its own RNG streams keyed by
``(seed, snr index, block, purpose[, learner])``, so block results do not
depend on which worker ran them.  Blocks are processed in fixed-size
chunks; the stopping rule is evaluated only at chunk boundaries, which
makes serial and threaded runs identical.

Detector tokens
---------------
``naive``            counting learner, zero entries kept (a contradicted
                     candidate scores -inf)
``naive-floor``      counting learner with the zero floor applied
``adl``              adaptive dither-and-learning with the config's N_s
``adl-ns<N>``        ... with N sub-blocks
``...-ntr<N>``       override the pilot count of a learner
``...-est``          denoise with the SNR estimate instead of the true N0
``ml-csi``           one-bit ML with the true channel
``zf-csi``           zero forcing on the one-bit outputs, true channel
``ml-unq``           unquantized ML on the same channel
``ml-unq-nr<N>``     unquantized ML on an independent N-antenna channel
"""

from __future__ import annotations

import csv
import math
import re
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from onebit_ml.detectors import (
    ml_detect_csi,
    ml_detect_learned,
    ml_detect_unquantized,
    zf_detect,
)
from onebit_ml.learning import (
    PilotSource,
    TrainConfig,
    adl_collect,
    adl_denoise,
    count_undertrained,
    exact_table,
    finalize_floor,
    naive_train,
)
from onebit_ml.numerics import ConfigError, rng_stream
from onebit_ml.polar import PolarCode, polar_construct, scl_decode
from onebit_ml.signal_model import (
    LinkParams,
    build_symbol_table,
    gen_rayleigh_channel,
    lift_channel,
    one_bit_quantize,
    transmit,
)
from onebit_ml.snr_estimator import MlpModel, estimate_snr
from onebit_ml.soft_output import (
    assemble_frame,
    build_bit_subsets,
    compute_llr,
    llrs_to_codeword_order,
    zero_product_scores,
)

CSV_HEADER = ("snr_db", "detector", "metric", "value", "num", "den", "seed")

# RNG purposes within a block.
_CHANNEL, _PILOTS, _DATA, _AUX = 0, 1, 2, 3


@dataclass(frozen=True)
class SimConfig:
    nu: int = 4
    nr: int = 32
    m: int = 4
    rho: float = 1.0
    snr_db: tuple = (0.0, 5.0, 10.0)
    n_tr: int = 45
    n_s: int = 3
    sigma2_init: float = 0.5
    delta: float = 1.0 / 3.0
    detectors: tuple = ("naive", "adl", "ml-csi")
    # Stopping rule: per (SNR, detector) stop once min_errors events are seen
    # or max_trials trials are spent, checked every batch_blocks blocks.
    min_errors: int = 200
    max_trials: int = 1_000_000
    max_blocks: int = 100_000
    batch_blocks: int = 16
    n_data: int = 100
    # Undertrained sweeps run exactly this many channel draws.
    n_channels: int = 100
    coding: bool = False
    kappa: int = 64
    eta: int = 128
    list_size: int = 8
    design_snr_db: float = 0.0
    frames_per_block: int = 4
    snr_mode: str = "perfect"
    snr_model: str = ""
    # SNR-estimator training (train-snr).
    est_grid_db: tuple = tuple(float(s) for s in range(-10, 31))
    est_samples: int = 200
    est_epochs: int = 300
    est_window: int = 15
    est_pool: int = 32
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        positive = (
            "nu", "nr", "m", "n_tr", "n_s", "min_errors", "max_trials", "max_blocks",
            "batch_blocks", "n_data", "n_channels", "kappa", "eta", "list_size",
            "frames_per_block", "est_samples", "est_epochs", "est_window", "est_pool",
            "threads",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.rho <= 0 or self.sigma2_init < 0 or self.delta < 0:
            raise ConfigError("rho must be positive, dither settings nonnegative")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if not self.snr_db:
            raise ConfigError("empty SNR grid")
        if not self.detectors:
            raise ConfigError("no detectors selected")
        if self.snr_mode not in ("perfect", "estimated"):
            raise ConfigError(f"snr_mode must be perfect or estimated, got {self.snr_mode!r}")
        q = int(round(math.log2(self.m)))
        if self.coding:
            if self.eta & (self.eta - 1):
                raise ConfigError(f"eta={self.eta} is not a power of two")
            if self.eta % q:
                raise ConfigError(f"eta={self.eta} is not a multiple of q={q}")
            if self.kappa > self.eta:
                raise ConfigError("kappa exceeds eta")
        specs = [parse_detector(tok, self) for tok in self.detectors]
        if len({s.token for s in specs}) != len(specs):
            raise ConfigError("duplicate detector token")
        if any(s.estimated for s in specs) and not self.snr_model:
            raise ConfigError("estimated-SNR detectors need snr_model")

    @property
    def q(self) -> int:
        return int(round(math.log2(self.m)))


@dataclass(frozen=True)
class DetectorSpec:
    token: str
    kind: str  # naive, naive-floor, adl, ml-csi, zf-csi, ml-unq
    n_tr: int = 0
    n_s: int = 1
    estimated: bool = False
    nr: int = 0

    @property
    def learner(self):
        """Key of the training run this detector consumes, or None."""
        if self.kind in ("naive", "naive-floor"):
            return ("naive", self.n_tr)
        if self.kind == "adl":
            return ("adl", self.n_s, self.n_tr)
        return None


_TOKEN = re.compile(
    r"^(?P<kind>naive-floor|naive|adl|ml-csi|zf-csi|ml-unq)"
    r"(?:-ns(?P<ns>\d+))?(?:-ntr(?P<ntr>\d+))?(?:-nr(?P<nr>\d+))?(?P<est>-est)?$"
)


def parse_detector(token: str, cfg: SimConfig) -> DetectorSpec:
    mt = _TOKEN.match(token)
    if mt is None:
        raise ConfigError(f"unknown detector token {token!r}")
    kind = mt["kind"]
    learned = kind in ("naive", "naive-floor", "adl")
    if (mt["ntr"] and not learned) or (mt["ns"] and kind != "adl"):
        raise ConfigError(f"{token!r}: pilot settings only apply to learned detectors")
    if mt["nr"] and kind != "ml-unq":
        raise ConfigError(f"{token!r}: an antenna override only applies to ml-unq")
    if mt["est"] and kind != "adl":
        raise ConfigError(f"{token!r}: only adl detectors use an SNR estimate")
    n_tr = int(mt["ntr"]) if mt["ntr"] else cfg.n_tr
    n_s = int(mt["ns"]) if mt["ns"] else (cfg.n_s if kind == "adl" else 1)
    if learned and (n_tr < 1 or n_s < 1 or n_tr % n_s):
        raise ConfigError(f"{token!r}: N_s={n_s} must divide N_tr={n_tr}")
    nr = int(mt["nr"]) if mt["nr"] else cfg.nr
    if nr < 1:
        raise ConfigError(f"{token!r}: antenna count must be positive")
    estimated = kind == "adl" and (bool(mt["est"]) or cfg.snr_mode == "estimated")
    return DetectorSpec(token, kind, n_tr if learned else 0, n_s, estimated, nr)


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    detector: str
    metric: str
    value: float
    num: int
    den: int
    seed: int


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=lambda r: (r.snr_db, r.detector, r.metric))

    def series(self, detector: str, metric: str):
        """``(snr_db, value)`` arrays of one detector/metric, SNR ascending."""
        rows = [r for r in self.sorted_rows() if r.detector == detector and r.metric == metric]
        return np.array([r.snr_db for r in rows]), np.array([r.value for r in rows])

    def row(self, snr_db: float, detector: str, metric: str) -> SweepRow:
        for r in self.rows:
            if r.snr_db == snr_db and r.detector == detector and r.metric == metric:
                return r
        raise KeyError((snr_db, detector, metric))


def _rate_row(snr_db, detector, metric, num, den, seed) -> SweepRow:
    return SweepRow(float(snr_db), detector, metric, num / den if den else 0.0, int(num), int(den), seed)


# ---------------------------------------------------------------- per block


class _Block:
    """Channel and training state of one coherence block."""

    def __init__(self, cfg: SimConfig, snr_idx: int, block: int, symbols, model):
        self.cfg = cfg
        self.key = (cfg.seed, snr_idx, block)
        self.symbols = symbols
        self.model = model
        self.params = LinkParams.from_snr_db(cfg.snr_db[snr_idx], cfg.rho)
        self.h = lift_channel(gen_rayleigh_channel(cfg.nu, cfg.nr, self.rng(_CHANNEL)))
        self._pilots = {}
        self._tables = {}
        self._aux = {}

    def rng(self, *purpose) -> np.random.Generator:
        return rng_stream(*self.key, *purpose)

    def _learner_stream(self, key) -> np.random.Generator:
        return self.rng(_PILOTS, zlib.crc32(repr(key).encode()))

    def pilots(self, key):
        """Raw training output of a learner, run once per block."""
        if key not in self._pilots:
            source = PilotSource(self.h, self.symbols, self.params, self._learner_stream(key))
            if key[0] == "naive":
                self._pilots[key] = naive_train(source, key[1])
            else:
                _, n_s, n_tr = key
                cfg = TrainConfig(n_tr, n_s, self.cfg.sigma2_init, self.cfg.delta)
                self._pilots[key] = adl_collect(source, cfg)
        return self._pilots[key]

    def table(self, spec: DetectorSpec):
        if spec.token in self._tables:
            return self._tables[spec.token]
        if spec.kind == "ml-csi":
            table = exact_table(self.h, self.symbols, self.params)
        elif spec.kind == "naive":
            table = self.pilots(spec.learner)
        elif spec.kind == "naive-floor":
            table = finalize_floor(self.pilots(spec.learner))
        elif spec.kind == "adl":
            pilots = self.pilots(spec.learner)
            n0 = self.params.n0
            if spec.estimated:
                gamma_db = estimate_snr(pilots.head, self.model)
                n0 = self.cfg.rho / 10.0 ** (gamma_db / 10.0)
            table, _ = adl_denoise(pilots, n0)
        else:
            raise ConfigError(f"{spec.token} has no likelihood table")
        self._tables[spec.token] = table
        return table

    def aux_channel(self, nr: int) -> np.ndarray:
        if nr not in self._aux:
            rng = self.rng(_AUX, nr)
            self._aux[nr] = (lift_channel(gen_rayleigh_channel(self.cfg.nu, nr, rng)), rng)
        return self._aux[nr]


def _detect(block: _Block, spec: DetectorSpec, y, r, k_true) -> np.ndarray:
    symbols, params = block.symbols, block.params
    if spec.kind == "naive":
        scores = zero_product_scores(y, block.table(spec))
        return np.argmax(scores, axis=1)
    if spec.kind in ("naive-floor", "adl"):
        return ml_detect_learned(y, block.table(spec), symbols).k_star
    if spec.kind == "ml-csi":
        return ml_detect_csi(y, block.h, params, symbols).k_star
    if spec.kind == "zf-csi":
        return zf_detect(y, block.h, params, symbols).k_star
    if spec.nr == block.cfg.nr:
        return ml_detect_unquantized(r, block.h, params, symbols).k_star
    h_aux, rng = block.aux_channel(spec.nr)
    r_aux = transmit(h_aux, symbols.real_vectors[k_true], params, rng)
    return ml_detect_unquantized(r_aux, h_aux, params, symbols).k_star


def _ser_block(cfg, snr_idx, block, specs, symbols, model):
    """Per detector ``(vector errors, user errors, trials)`` of one block."""
    blk = _Block(cfg, snr_idx, block, symbols, model)
    rng = blk.rng(_DATA)
    k_true = rng.integers(0, symbols.k, cfg.n_data)
    r = transmit(blk.h, symbols.real_vectors[k_true], blk.params, rng)
    y = one_bit_quantize(r)
    out = {}
    for spec in specs:
        k_hat = _detect(blk, spec, y, r, k_true)
        ok = k_hat >= 0
        user_err = np.where(
            ok[:, None], symbols.indices[np.where(ok, k_hat, 0)] != symbols.indices[k_true], True
        )
        out[spec.token] = (int(np.sum(k_hat != k_true)), int(user_err.sum()), cfg.n_data)
    return out


def _fer_block(cfg, snr_idx, block, specs, symbols, model, code, subsets):
    """Per detector ``(frame errors, frames)`` of one block."""
    blk = _Block(cfg, snr_idx, block, symbols, model)
    rng = blk.rng(_DATA)
    d = cfg.frames_per_block
    msgs = rng.integers(0, 2, (d, cfg.nu, cfg.kappa)).astype(np.int8)
    k_slots, _ = assemble_frame(msgs, code, symbols)  # (d, eta/q)
    r = transmit(blk.h, symbols.real_vectors[k_slots.ravel()], blk.params, rng)
    y = one_bit_quantize(r)
    out = {}
    for spec in specs:
        llr = compute_llr(y, blk.table(spec), subsets)  # (d*eta/q, nu, q)
        cw = llrs_to_codeword_order(llr.reshape(d, -1, cfg.nu, cfg.q))  # (d, nu, eta)
        dec = scl_decode(cw.reshape(-1, cfg.eta), code).reshape(msgs.shape)
        out[spec.token] = (int(np.sum(np.any(dec != msgs, axis=(1, 2)))), d)
    return out


def _undertrained_block(cfg, snr_idx, block, specs, symbols):
    blk = _Block(cfg, snr_idx, block, symbols, None)
    out = {}
    for spec in specs:
        got = blk.pilots(spec.learner)
        counts = count_undertrained(got) if spec.kind == "naive" else got.trace.undertrained
        out[spec.token] = (int(np.sum(counts)), symbols.k)
    return out


# ------------------------------------------------------------------ drivers


def _load_model(cfg: SimConfig, specs) -> MlpModel | None:
    if not any(s.estimated for s in specs):
        return None
    model = MlpModel.load(cfg.snr_model)
    if model.input_width != 2 * cfg.nr:
        raise ConfigError(f"SNR model expects {model.input_width // 2} antennas, config has {cfg.nr}")
    for s in specs:
        if s.estimated and s.n_tr // s.n_s < model.window:
            raise ConfigError(f"{s.token}: sub-block of {s.n_tr // s.n_s} pilots < model window")
    return model


def _run_until(cfg, run_block, specs, err_index: int, trials_index: int, snr_idx: int):
    """Accumulate block results under the chunked stopping rule."""
    totals = {s.token: None for s in specs}
    active = list(specs)
    block = 0
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        while active and block < cfg.max_blocks:
            ids = range(block, min(block + cfg.batch_blocks, cfg.max_blocks))
            if pool is None:
                results = [run_block(snr_idx, b, active) for b in ids]
            else:
                results = list(pool.map(lambda b, a=tuple(active): run_block(snr_idx, b, a), ids))
            for res in results:
                for tok, counts in res.items():
                    prev = totals[tok]
                    totals[tok] = counts if prev is None else tuple(p + c for p, c in zip(prev, counts))
            block = ids[-1] + 1
            active = [
                s for s in active
                if totals[s.token][err_index] < cfg.min_errors
                and totals[s.token][trials_index] < cfg.max_trials
            ]
    finally:
        if pool is not None:
            pool.shutdown()
    return totals


def run_ser_sweep(cfg: SimConfig) -> SweepResult:
    """Uncoded symbol-vector error rates (plus per-user SER as ``SER_user``)."""
    if cfg.coding:
        raise ConfigError("SER sweeps run uncoded; set coding = false")
    specs = [parse_detector(t, cfg) for t in cfg.detectors]
    symbols = build_symbol_table(cfg.m, cfg.nu)
    model = _load_model(cfg, specs)
    result = SweepResult()
    for j, snr in enumerate(cfg.snr_db):
        totals = _run_until(
            cfg, lambda sj, b, a: _ser_block(cfg, sj, b, a, symbols, model), specs, 0, 2, j
        )
        for tok, (vec, usr, n) in totals.items():
            result.rows.append(_rate_row(snr, tok, "SER", vec, n, cfg.seed))
            result.rows.append(_rate_row(snr, tok, "SER_user", usr, n * cfg.nu, cfg.seed))
    return result


def make_code(cfg: SimConfig) -> PolarCode:
    return polar_construct(cfg.eta, cfg.kappa, cfg.design_snr_db, cfg.list_size)


def run_fer_sweep(cfg: SimConfig) -> SweepResult:
    """Coded frame error rates; a frame fails if any user's message is wrong."""
    if not cfg.coding:
        raise ConfigError("FER sweeps need coding = true")
    specs = [parse_detector(t, cfg) for t in cfg.detectors]
    for s in specs:
        if s.kind in ("zf-csi", "ml-unq"):
            raise ConfigError(f"{s.token} produces no soft output")
    symbols = build_symbol_table(cfg.m, cfg.nu)
    model = _load_model(cfg, specs)
    code = make_code(cfg)
    subsets = build_bit_subsets(symbols)
    result = SweepResult()
    for j, snr in enumerate(cfg.snr_db):
        totals = _run_until(
            cfg,
            lambda sj, b, a: _fer_block(cfg, sj, b, a, symbols, model, code, subsets),
            specs, 0, 1, j,
        )
        for tok, (err, n) in totals.items():
            result.rows.append(_rate_row(snr, tok, "FER", err, n, cfg.seed))
    return result


def run_undertrained_sweep(cfg: SimConfig) -> SweepResult:
    """Mean under-trained antennas per candidate over ``n_channels`` draws.

    ``num`` is the total count over channels and candidates, ``den`` the
    number of (channel, candidate) pairs.
    """
    specs = [parse_detector(t, cfg) for t in cfg.detectors]
    for s in specs:
        if s.kind not in ("naive", "adl"):
            raise ConfigError(f"{s.token} is not a learner")
    symbols = build_symbol_table(cfg.m, cfg.nu)
    result = SweepResult()
    one_pass = replace(
        cfg, min_errors=2**62, max_trials=2**62, max_blocks=cfg.n_channels,
        batch_blocks=min(cfg.batch_blocks, cfg.n_channels),
    )
    for j, snr in enumerate(cfg.snr_db):
        totals = _run_until(
            one_pass, lambda sj, b, a: _undertrained_block(cfg, sj, b, a, symbols), specs, 0, 1, j
        )
        for tok, (cnt, n) in totals.items():
            result.rows.append(
                SweepRow(float(snr), tok, "undertrained_mean", cnt / n, int(cnt), int(n), cfg.seed)
            )
    return result


# ----------------------------------------------------------------- analysis


def snr_at_rate(snr_db, rate, target: float) -> float:
    """First SNR where the rate curve crosses ``target``.

    Interpolates log10(rate) linearly between the bracketing grid points;
    returns NaN when the curve never reaches the target.  A zero rate
    counts as below any positive target.
    """
    snr_db = np.asarray(snr_db, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if rate.size and rate[0] <= target:
        return float(snr_db[0])
    for a in range(len(rate) - 1):
        r0, r1 = rate[a], rate[a + 1]
        if r0 > target >= r1:
            if r1 <= 0:
                return float(snr_db[a + 1])
            t = (math.log10(r0) - math.log10(target)) / (math.log10(r0) - math.log10(r1))
            return float(snr_db[a] + t * (snr_db[a + 1] - snr_db[a]))
    return float("nan")


def wilson_interval(num: int, den: int, z: float = 1.96):
    """Wilson score interval of a binomial proportion."""
    if den <= 0:
        return 0.0, 1.0
    p = num / den
    centre = (p + z * z / (2 * den)) / (1 + z * z / den)
    half = z * math.sqrt(p * (1 - p) / den + z * z / (4 * den * den)) / (1 + z * z / den)
    # Clamp so rounding never pushes the bounds past the point estimate.
    return max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half))


# ---------------------------------------------------------------------- I/O


def emit_csv(result: SweepResult, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in result.sorted_rows():
                w.writerow(
                    [repr(r.snr_db), r.detector, r.metric, repr(r.value), r.num, r.den, r.seed]
                )
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_csv(path) -> SweepResult:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ConfigError(f"{path}: unexpected header {header}")
        rows = [
            SweepRow(float(s), d, m, float(v), int(n), int(dn), int(sd))
            for s, d, m, v, n, dn, sd in reader
        ]
    return SweepResult(rows)


def _parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(raw)
    if isinstance(default, tuple):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if default and isinstance(default[0], str):
            return tuple(parts)
        return tuple(float(p) for p in parts)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config(text: str, **overrides) -> SimConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment; lists are comma separated.

    ``snr_db`` also accepts ``start:stop:step`` (stop inclusive).
    """
    defaults = SimConfig()
    known = {f.name: getattr(defaults, f.name) for f in fields(SimConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            if key in ("snr_db", "est_grid_db") and ":" in raw:
                start, stop, step = (float(v) for v in raw.split(":"))
                n = int(math.floor((stop - start) / step + 1e-9)) + 1
                values[key] = tuple(float(start + i * step) for i in range(n))
            else:
                values[key] = _parse_value(raw, known[key])
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {raw!r} for {key}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SimConfig(**values)


def load_config(path, **overrides) -> SimConfig:
    return parse_config(Path(path).read_text(), **overrides)
