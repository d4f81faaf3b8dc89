"""Hard-decision multiuser detectors.

All detectors take a batch of observations shaped ``(T, 2nr)`` (a single
vector is promoted) and scan the K candidates exhaustively.  Ties go to the
lowest candidate index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from onebit_ml.learning import LikelihoodTable, exact_table
from onebit_ml.numerics import ConfigError
from onebit_ml.signal_model import LinkParams, SymbolTable, to_complex

# Observations scored per block; keeps the (T, K) score matrix bounded.
_BLOCK = 2048


@dataclass(frozen=True)
class DetectionResult:
    k_star: np.ndarray
    log_likelihood: np.ndarray
    symbols: np.ndarray

    @property
    def failed(self) -> np.ndarray:
        return self.k_star < 0


def _as_batch(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    return y[None, :] if y.ndim == 1 else y


def _argmax_blocks(score_fn, y: np.ndarray, symbols: SymbolTable) -> DetectionResult:
    ks, best = [], []
    for start in range(0, len(y), _BLOCK):
        scores = score_fn(y[start : start + _BLOCK])
        k = np.argmax(scores, axis=1)
        ks.append(k)
        best.append(scores[np.arange(len(k)), k])
    k = np.concatenate(ks) if ks else np.zeros(0, dtype=np.int64)
    ll = np.concatenate(best) if best else np.zeros(0)
    return DetectionResult(k, ll, symbols.symbols[k])


def ml_detect_learned(
    y: np.ndarray, table: LikelihoodTable, symbols: SymbolTable
) -> DetectionResult:
    """argmax_k sum_i log P_k,i^(y_i) over a finalized likelihood table."""
    if not np.all(np.isfinite(table.log_p_plus)) or not np.all(np.isfinite(table.log_p_minus)):
        raise ConfigError("likelihood table has zero entries; finalize it first")
    if table.k != symbols.k:
        raise ConfigError("table and symbol set disagree on K")
    return _argmax_blocks(table.log_likelihood, _as_batch(y), symbols)


def ml_detect_csi(
    y: np.ndarray, h: np.ndarray, params: LinkParams, symbols: SymbolTable
) -> DetectionResult:
    """One-bit ML with perfect channel knowledge, scored as sum log Phi(y_i psi_k,i)."""
    return _argmax_blocks(exact_table(h, symbols, params).log_likelihood, _as_batch(y), symbols)


def ml_detect_unquantized(
    r: np.ndarray, h: np.ndarray, params: LinkParams, symbols: SymbolTable
) -> DetectionResult:
    """argmin_k ||r - sqrt(rho) H^T s_k||^2 on unquantized outputs."""
    means = math.sqrt(params.rho) * (symbols.real_vectors @ h)  # (K, 2nr)
    energy = np.sum(means**2, axis=1)

    def score(block):
        # -||r - m||^2 up to the candidate-independent ||r||^2
        return 2.0 * block @ means.T - energy

    res = _argmax_blocks(score, _as_batch(r).astype(float), symbols)
    # Reported objective is the negative squared distance.
    rr = np.sum(_as_batch(r) ** 2, axis=1)
    return DetectionResult(res.k_star, res.log_likelihood - rr, res.symbols)


def zf_detect(
    y: np.ndarray, h: np.ndarray, params: LinkParams, symbols: SymbolTable
) -> DetectionResult:
    """Pseudo-inverse of sqrt(rho) H^T applied to y, then per-user slicing.

    A rank-deficient channel yields ``k_star == -1`` for every observation.
    """
    y = _as_batch(y).astype(float)
    ht = math.sqrt(params.rho) * h.T
    if np.linalg.matrix_rank(ht) < ht.shape[1]:
        k = np.full(len(y), -1, dtype=np.int64)
        return DetectionResult(k, np.full(len(y), np.nan), np.full((len(y), symbols.nu), np.nan))
    x = y @ np.linalg.pinv(ht).T
    user_idx = symbols.slice_symbols(to_complex(x))
    k = symbols.index_of(user_idx)
    return DetectionResult(k, np.full(len(y), np.nan), symbols.symbols[k])
