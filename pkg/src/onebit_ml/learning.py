"""Likelihood tables learned from one-bit pilots.

Three learners share the pilot schedule (candidate ``k`` sent for ``n_tr``
consecutive slots, ``k`` in index order):

* naive counting of +1 occurrences;
* dither-and-learning, which perturbs the quantizer input with Gaussian
  dither of known variance and removes it again analytically;
* the adaptive variant, which splits each pilot block into ``n_s``
  sub-blocks and raises an antenna's dither variance by ``delta`` after any
  sub-block without a sign change.  With ``n_s == 1`` it is the fixed
  dither-and-learning method.

The dither feedback only looks at sign patterns, so collection
(:func:`adl_collect`) and denoising (:func:`adl_denoise`) are separate
steps; the latter can run with a true or an estimated noise power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from onebit_ml.numerics import (
    ConfigError,
    DomainError,
    std_normal_cdf_inv,
    std_normal_logcdf,
)
from onebit_ml.signal_model import LinkParams, SymbolTable, dithered_observation

FLOOR_RULE = "min(nz/10,1/(10*ntr))"
TABLE_MAGIC = "onebit-ml likelihood-table v1"

# Candidates processed together when drawing pilots; bounds peak memory.
_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True)
class LikelihoodTable:
    """Per-candidate, per-antenna sign probabilities.

    ``p_plus[k, i]`` is P(y_i = +1 | s_k) and ``p_minus`` its complement.
    Both are stored because ``1 - p_plus`` loses the lower tail of
    ``p_minus`` once ``p_plus`` rounds to 1.
    """

    p_plus: np.ndarray
    p_minus: np.ndarray
    n_tr: int = 0
    floor_rule: str = "none"

    @classmethod
    def from_p_plus(cls, p_plus, n_tr: int = 0, floor_rule: str = "none") -> "LikelihoodTable":
        p_plus = np.asarray(p_plus, dtype=float)
        return cls(p_plus, 1.0 - p_plus, n_tr, floor_rule)

    @property
    def k(self) -> int:
        return self.p_plus.shape[0]

    @property
    def n_ant(self) -> int:
        return self.p_plus.shape[1]

    @property
    def finalized(self) -> bool:
        return bool(np.all(self.p_plus > 0) and np.all(self.p_minus > 0))

    @cached_property
    def log_p_plus(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.p_plus)

    @cached_property
    def log_p_minus(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.p_minus)

    def log_likelihood(self, y: np.ndarray) -> np.ndarray:
        """Per-candidate log-likelihood of observations ``y`` (``(..., 2nr)``).

        Returns shape ``(..., K)``.
        """
        plus = (np.asarray(y) > 0).astype(float)
        return plus @ self.log_p_plus.T + (1.0 - plus) @ self.log_p_minus.T

    def save(self, path) -> None:
        """Text matrix file: magic line, header, then row-major p_plus/p_minus.

        Values are written as exact float64 hex so a reload is bit-identical.
        """
        path = Path(path)
        lines = [
            TABLE_MAGIC,
            f"K={self.k} n_ant={self.n_ant} n_tr={self.n_tr} floor_rule={self.floor_rule}",
        ]
        for name, mat in (("p_plus", self.p_plus), ("p_minus", self.p_minus)):
            lines.append(name)
            lines.extend(" ".join(float(v).hex() for v in row) for row in mat)
        path.write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "LikelihoodTable":
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0] != TABLE_MAGIC:
            raise ConfigError(f"{path}: not a likelihood table file")
        header = dict(tok.split("=", 1) for tok in lines[1].split())
        k, n_ant = int(header["K"]), int(header["n_ant"])

        def block(start):
            rows = [[float.fromhex(v) for v in ln.split()] for ln in lines[start : start + k]]
            mat = np.array(rows, dtype=float).reshape(k, n_ant)
            return mat

        p_plus = block(3)
        p_minus = block(4 + k)
        return cls(p_plus, p_minus, int(header["n_tr"]), header["floor_rule"])


@dataclass(frozen=True)
class TrainConfig:
    n_tr: int
    n_s: int = 1
    sigma2_init: float = 0.5
    delta: float = 1.0 / 3.0

    def __post_init__(self):
        if self.n_tr < 1 or self.n_s < 1:
            raise ConfigError("n_tr and n_s must be positive")
        if self.n_tr % self.n_s:
            raise ConfigError(f"n_s={self.n_s} does not divide n_tr={self.n_tr}")
        if self.sigma2_init < 0 or self.delta < 0:
            raise ConfigError("dither variance and increment must be nonnegative")

    @property
    def n_tr_sub(self) -> int:
        return self.n_tr // self.n_s


class PilotSource:
    """Channel-in-the-loop pilot generator for one coherence block."""

    def __init__(self, h: np.ndarray, table: SymbolTable, params: LinkParams, rng):
        if h.shape[0] != table.real_vectors.shape[1]:
            raise ConfigError(
                f"channel has {h.shape[0] // 2} users, symbol table {table.nu}"
            )
        self.h = h
        self.table = table
        self.params = params
        self.rng = rng

    @property
    def k(self) -> int:
        return self.table.k

    @property
    def n_ant(self) -> int:
        return self.h.shape[1]

    def observe(self, ks: np.ndarray, sigma2: np.ndarray, n_slots: int) -> np.ndarray:
        """``n_slots`` dithered observations of each candidate in ``ks``.

        ``sigma2`` is ``(len(ks), 2nr)`` or broadcastable; the result has
        shape ``(len(ks), n_slots, 2nr)`` with entries in {-1, +1}.
        """
        s = self.table.real_vectors[np.asarray(ks)]
        sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (len(s), self.n_ant))
        return dithered_observation(self.h, s, self.params, sigma2, self.rng, n=n_slots)

    def chunks(self, per_k: int):
        """Contiguous candidate ranges sized to keep pilot arrays small."""
        step = max(1, _CHUNK_ELEMS // max(1, per_k * self.n_ant))
        for start in range(0, self.k, step):
            yield np.arange(start, min(self.k, start + step))


def empirical_sign_prob(signs, axis=None):
    """Fraction of entries equal to +1."""
    signs = np.asarray(signs)
    if signs.size == 0 or (axis is not None and signs.shape[axis] == 0):
        raise DomainError("empty sign sequence")
    return np.mean(signs > 0, axis=axis)


def naive_learn(observations: np.ndarray, n_tr: int | None = None) -> LikelihoodTable:
    """Count +1's per (k, antenna) in pilots grouped as ``(K, n_tr, 2nr)``."""
    observations = np.asarray(observations)
    if observations.ndim != 3:
        raise ConfigError("observations must be grouped as (K, n_tr, 2nr)")
    if n_tr is not None and observations.shape[1] != n_tr:
        raise ConfigError("group length differs from n_tr")
    p = empirical_sign_prob(observations, axis=1)
    return LikelihoodTable.from_p_plus(p, n_tr=observations.shape[1])


def naive_train(source: PilotSource, n_tr: int, expected_k: int | None = None) -> LikelihoodTable:
    """Undithered pilots through ``source`` followed by :func:`naive_learn`."""
    if expected_k is not None and expected_k != source.k:
        raise ConfigError(f"expected {expected_k} pilot groups, source has {source.k}")
    p = np.empty((source.k, source.n_ant))
    for ks in source.chunks(n_tr):
        p[ks] = empirical_sign_prob(source.observe(ks, 0.0, n_tr), axis=1)
    return LikelihoodTable.from_p_plus(p, n_tr=n_tr)


def clamp_probability(p, n: int):
    """Half-count continuity correction: clamp to [1/(2n), 1 - 1/(2n)]."""
    lo = 1.0 / (2 * n)
    return np.clip(p, lo, 1.0 - lo)


def denoise(p_dithered, sigma2, n0: float):
    """Effective output sqrt(1 + sigma2/n0) * Phi^-1(p) of a dithered probability.

    Raises :class:`SaturationError` for p in {0, 1}; callers clamp first.
    """
    if n0 <= 0:
        raise DomainError("noise power must be positive")
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 < 0):
        raise DomainError("negative dither variance")
    out = np.sqrt(1.0 + sigma2 / n0) * std_normal_cdf_inv(p_dithered)
    return out.item() if np.ndim(out) == 0 else out


@dataclass
class DitherTrace:
    """What the adaptive loop did for every candidate.

    ``sigma2[k, n, i]`` is the dither variance used in sub-block ``n``;
    ``undertrained[k]`` counts antennas whose whole pilot block showed no
    sign change (the entries an unclamped learner leaves at exactly 0/1).
    """

    sigma2: np.ndarray
    saturated: np.ndarray
    undertrained: np.ndarray
    fallback_rows: list = field(default_factory=list)


@dataclass
class AdlPilots:
    """Sign statistics gathered by the adaptive pilot loop."""

    cfg: TrainConfig
    p_hat: np.ndarray  # (K, n_s, 2nr) sub-block fraction of +1
    trace: DitherTrace
    head: np.ndarray  # (K, n_tr_sub, 2nr) first sub-block signs, dither = sigma2_init


def adl_collect(source: PilotSource, cfg: TrainConfig) -> AdlPilots:
    """Run the pilot phase with feedback-driven dither variances."""
    k, n_ant, n_s, n_sub = source.k, source.n_ant, cfg.n_s, cfg.n_tr_sub
    p_hat = np.empty((k, n_s, n_ant))
    sig = np.empty((k, n_s, n_ant))
    sat = np.zeros((k, n_s, n_ant), dtype=bool)
    first_sign = np.zeros((k, n_s, n_ant), dtype=np.int8)
    head = np.empty((k, n_sub, n_ant), dtype=np.int8)
    for ks in source.chunks(n_sub):
        sigma2 = np.full((len(ks), n_ant), float(cfg.sigma2_init))
        for n in range(n_s):
            obs = source.observe(ks, sigma2, n_sub)
            if n == 0:
                head[ks] = obs
            sig[ks, n] = sigma2
            frac = obs.mean(axis=1, dtype=float)
            p_hat[ks, n] = (frac + 1.0) / 2.0
            all_same = np.abs(frac) == 1.0
            sat[ks, n] = all_same
            first_sign[ks, n] = obs[:, 0, :]
            sigma2 = sigma2 + cfg.delta * all_same
    # No sign change over the whole block: every sub-block saturated alike.
    same_dir = np.all(first_sign == first_sign[:, :1, :], axis=1)
    undertrained = np.sum(np.all(sat, axis=1) & same_dir, axis=1)
    trace = DitherTrace(sigma2=sig, saturated=sat, undertrained=undertrained)
    return AdlPilots(cfg=cfg, p_hat=p_hat, trace=trace, head=head)


def adl_denoise(pilots: AdlPilots, n0: float, finalize: bool = True):
    """Denoise collected sub-blocks and average into a likelihood table.

    Returns ``(table, psi_hat)`` where ``psi_hat`` is the mean denoised
    effective output over sub-blocks.
    """
    cfg = pilots.cfg
    p = clamp_probability(pilots.p_hat, cfg.n_tr_sub)
    psi = denoise(p, pilots.trace.sigma2, n0)
    # Phi(psi) and Phi(-psi) through logs so both tails survive.
    p_plus = np.exp(std_normal_logcdf(psi)).mean(axis=1)
    p_minus = np.exp(std_normal_logcdf(-psi)).mean(axis=1)
    table = LikelihoodTable(p_plus, p_minus, n_tr=cfg.n_tr)
    if finalize:
        table, fallback = finalize_floor(table, with_rows=True)
        pilots.trace.fallback_rows = fallback
    return table, psi.mean(axis=1)


def adl_train(source: PilotSource, cfg: TrainConfig, n0: float, finalize: bool = True):
    """Adaptive dither-and-learning for one channel realization.

    Returns ``(table, psi_hat, trace)``.
    """
    pilots = adl_collect(source, cfg)
    table, psi = adl_denoise(pilots, n0, finalize=finalize)
    return table, psi, pilots.trace


def _floor_view(p: np.ndarray, n_tr: int) -> list[int]:
    """Floor the zeros of one probability view in place; returns fallback rows."""
    fallback_p = 1.0 / (10 * max(n_tr, 1))
    zero = p == 0.0
    rows = []
    for k in np.flatnonzero(zero.any(axis=1)):
        nz = p[k][~zero[k]]
        if nz.size == 0:
            p[k] = fallback_p
            rows.append(int(k))
        else:
            p[k][zero[k]] = min(nz.min() / 10.0, fallback_p)
    return rows


def finalize_floor(table: LikelihoodTable, with_rows: bool = False):
    """Replace zero probabilities by a per-(k, beta) floor.

    The floor for candidate ``k`` and sign ``beta`` is
    ``min(smallest nonzero / 10, 1 / (10 n_tr))``.  A view with no nonzero
    entry at all gets the fallback ``1 / (10 n_tr)`` everywhere and its row
    index is reported.  Subnormal entries count as zero so every floor stays
    a normal float with a finite log.  Entries that rounded up to exactly 1
    are capped at the largest double below 1; their complement keeps its
    separately stored value.
    """
    tiny = np.finfo(float).tiny
    p_plus = np.where(table.p_plus < tiny, 0.0, table.p_plus)
    p_minus = np.where(table.p_minus < tiny, 0.0, table.p_minus)
    zero_plus, zero_minus = p_plus == 0.0, p_minus == 0.0
    rows = _floor_view(p_plus, table.n_tr) + _floor_view(p_minus, table.n_tr)
    p_minus[zero_plus & ~zero_minus] = 1.0 - p_plus[zero_plus & ~zero_minus]
    p_plus[zero_minus & ~zero_plus] = 1.0 - p_minus[zero_minus & ~zero_plus]
    below_one = np.nextafter(1.0, 0.0)
    np.minimum(p_plus, below_one, out=p_plus)
    np.minimum(p_minus, below_one, out=p_minus)
    out = LikelihoodTable(p_plus, p_minus, n_tr=table.n_tr, floor_rule=FLOOR_RULE)
    return (out, sorted(set(rows))) if with_rows else out


def count_undertrained(table: LikelihoodTable) -> np.ndarray:
    """Antennas per candidate whose learned probability is exactly 0 or 1."""
    return np.sum((table.p_plus == 0) | (table.p_minus == 0), axis=1)


def exact_table(h: np.ndarray, symbols: SymbolTable, params: LinkParams) -> LikelihoodTable:
    """Likelihoods Phi(+-psi) with psi = sqrt(2 rho / n0) h_i^T s_k."""
    psi = effective_outputs(h, symbols, params)
    lp, lm = std_normal_logcdf(psi), std_normal_logcdf(-psi)
    table = LikelihoodTable(np.exp(lp), np.exp(lm), floor_rule="exact")
    # Cache the accurate logs; exp() may have underflowed.
    table.__dict__["log_p_plus"] = lp
    table.__dict__["log_p_minus"] = lm
    return table


def effective_outputs(h: np.ndarray, symbols: SymbolTable, params: LinkParams) -> np.ndarray:
    """psi[k, i] = sqrt(2 rho / n0) h_i^T s_k."""
    return math.sqrt(2.0 * params.rho / params.n0) * (symbols.real_vectors @ h)
