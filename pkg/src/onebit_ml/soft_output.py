"""Bit-wise soft outputs from likelihood tables and the coded frame layout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from onebit_ml.learning import LikelihoodTable
from onebit_ml.numerics import ConfigError
from onebit_ml.polar import PolarCode, polar_encode
from onebit_ml.signal_model import SymbolTable

# LLR magnitude handed to the decoder when one bit hypothesis has zero likelihood.
LLR_CLIP = 50.0


@dataclass(frozen=True)
class BitSubsets:
    """``ones[u, l, k]`` is True iff bit ``l`` of user ``u``'s label in s_k is 1."""

    ones: np.ndarray

    def members(self, u: int, l: int, b: int) -> np.ndarray:
        mask = self.ones[u, l] if b else ~self.ones[u, l]
        return np.flatnonzero(mask)


def build_bit_subsets(symbols: SymbolTable) -> BitSubsets:
    labels = symbols.bit_labels[symbols.indices]  # (K, nu, q)
    return BitSubsets(np.transpose(labels, (1, 2, 0)).astype(bool))


def compute_llr(
    y: np.ndarray,
    table: LikelihoodTable,
    subsets: BitSubsets,
    clip: float | None = LLR_CLIP,
) -> np.ndarray:
    """LLRs ``log P(b=0 | y) / P(b=1 | y)`` for every slot, user and bit.

    ``y`` is ``(T, 2nr)``; returns ``(T, nu, q)``.  Sums over candidates run
    through log-sum-exp on per-candidate log-likelihoods.  Tables with zero
    entries give -inf candidate scores; a bit whose hypotheses both vanish
    gets LLR 0 and infinite values are clipped to ``+-clip``.  Magnitudes
    beyond about 700 saturate to infinity before clipping.
    """
    y = np.atleast_2d(y)
    scores = _scores(y, table)
    nu, q, k = subsets.ones.shape
    ones = np.ascontiguousarray(subsets.ones.reshape(nu * q, k).T, dtype=float)  # (K, nu*q)
    # log-sum-exp over each subset: one shared shift and exp, then sums as
    # a matrix product against the subset indicators.
    with np.errstate(invalid="ignore", divide="ignore"):
        top = np.max(scores, axis=1, keepdims=True)
        w = np.exp(scores - top)
        den = np.log(w @ ones)
        num = np.log(w @ (1.0 - ones))
        out = (num - den).reshape(len(y), nu, q)
    out[np.isnan(out)] = 0.0
    if clip is not None:
        np.clip(out, -clip, clip, out=out)
    return out


def _scores(y: np.ndarray, table: LikelihoodTable) -> np.ndarray:
    lp, lm = table.log_p_plus, table.log_p_minus
    plus = (y > 0).astype(float)
    if np.all(np.isfinite(lp)) and np.all(np.isfinite(lm)):
        return plus @ lp.T + (1.0 - plus) @ lm.T
    return zero_product_scores(y, table)


def zero_product_scores(y: np.ndarray, table: LikelihoodTable) -> np.ndarray:
    """Log-likelihoods where any zero factor sends the candidate to -inf."""
    plus = (np.asarray(y) > 0).astype(float)
    zp, zm = ~np.isfinite(table.log_p_plus), ~np.isfinite(table.log_p_minus)
    lp = np.where(zp, 0.0, table.log_p_plus)
    lm = np.where(zm, 0.0, table.log_p_minus)
    hits = plus @ zp.T.astype(float) + (1.0 - plus) @ zm.T.astype(float)
    finite = plus @ lp.T + (1.0 - plus) @ lm.T
    return np.where(hits > 0, -np.inf, finite)


@dataclass(frozen=True)
class FrameConfig:
    """Coherence block layout: ``n_t`` pilot slots then ``d`` coded subframes."""

    n_t: int
    d: int
    eta: int
    q: int

    def __post_init__(self):
        if self.eta % self.q:
            raise ConfigError(f"eta={self.eta} not divisible by q={self.q}")

    @property
    def n_d_sub(self) -> int:
        return self.eta // self.q

    @property
    def n_d(self) -> int:
        return self.d * self.n_d_sub

    @property
    def n_c(self) -> int:
        return self.n_t + self.n_d


def assemble_frame(messages: np.ndarray, code: PolarCode, symbols: SymbolTable):
    """Encode each user's message and map q-bit groups to candidate indices.

    ``messages`` is ``(nu, kappa)`` or ``(B, nu, kappa)``.  Returns
    ``(k_slots, codewords)`` with ``k_slots`` of shape ``(..., eta/q)``.
    """
    q = symbols.q
    if code.eta % q:
        raise ConfigError(f"eta={code.eta} not divisible by q={q}")
    codewords = polar_encode(messages, code)  # (..., nu, eta)
    groups = codewords.reshape(codewords.shape[:-1] + (code.eta // q, q))
    user_idx = symbols.map_bits(groups)  # (..., nu, eta/q)
    k_slots = symbols.index_of(np.swapaxes(user_idx, -1, -2))
    return k_slots, codewords


def llrs_to_codeword_order(llr: np.ndarray) -> np.ndarray:
    """``(..., T, nu, q)`` slot LLRs to per-user ``(..., nu, T*q)`` streams."""
    llr = np.moveaxis(llr, -2, -3)  # (..., nu, T, q)
    return llr.reshape(llr.shape[:-2] + (-1,))
