"""Polar codes: construction, encoding, SC and SC-list decoding.

Index convention: ``x = u F^{(x)n}`` with ``F = [[1, 0], [1, 1]]`` and no
bit reversal, so ``encode([u0, u1]) == [u0 ^ u1, u1]``.  Bit ``j`` of a
leaf index (MSB first) picks the check (0) or variable (1) branch at depth
``j + 1`` of the decoding tree.  LLRs are ``log P(0) / P(1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy.optimize import brentq

from onebit_ml.numerics import ConfigError, DomainError


@dataclass(frozen=True)
class PolarCode:
    eta: int
    kappa: int
    frozen: np.ndarray
    list_size: int = 8

    def __post_init__(self):
        if self.eta < 1 or self.eta & (self.eta - 1):
            raise ConfigError(f"block length {self.eta} is not a power of two")
        if not 0 <= self.kappa <= self.eta:
            raise ConfigError("message length must lie in [0, eta]")
        frozen = np.asarray(self.frozen)
        if len(np.unique(frozen)) != len(frozen) or len(frozen) != self.eta - self.kappa:
            raise ConfigError("frozen set must hold eta - kappa distinct indices")
        if len(frozen) and (frozen.min() < 0 or frozen.max() >= self.eta):
            raise ConfigError("frozen index out of range")
        if self.list_size < 1:
            raise ConfigError("list size must be positive")

    @property
    def frozen_mask(self) -> np.ndarray:
        mask = np.zeros(self.eta, dtype=bool)
        mask[np.asarray(self.frozen, dtype=np.int64)] = True
        return mask

    @property
    def info(self) -> np.ndarray:
        return np.flatnonzero(~self.frozen_mask)

    def with_list_size(self, list_size: int) -> "PolarCode":
        return PolarCode(self.eta, self.kappa, self.frozen, list_size)

    def save_frozen(self, path) -> None:
        text = f"# polar frozen set\neta={self.eta} kappa={self.kappa}\n"
        text += "\n".join(str(int(i)) for i in sorted(self.frozen)) + "\n"
        Path(path).write_text(text)

    @classmethod
    def load_frozen(cls, path, list_size: int = 8) -> "PolarCode":
        lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
        header = dict(tok.split("=") for tok in lines[0].split())
        frozen = np.array([int(ln) for ln in lines[1:] if ln.strip()], dtype=np.int64)
        return cls(int(header["eta"]), int(header["kappa"]), frozen, list_size)


def _ga_phi(x: float) -> float:
    """Chung's approximation of the GA phi-function."""
    if x <= 0:
        return 1.0
    if x < 10:
        return math.exp(-0.4527 * x**0.86 + 0.0218)
    return math.sqrt(math.pi / x) * math.exp(-x / 4.0) * (1.0 - 10.0 / (7.0 * x))


def _ga_phi_inv(y: float) -> float:
    if y >= 1.0:
        return 0.0
    hi = 1.0
    while _ga_phi(hi) > y:
        hi *= 2.0
    return brentq(lambda x: _ga_phi(x) - y, 0.0, hi, xtol=1e-12, rtol=1e-12)


def ga_reliability(eta: int, design_snr_db: float) -> np.ndarray:
    """Mean LLR of every synthetic channel under Gaussian approximation.

    The physical channel is BPSK over AWGN at ``design_snr_db`` (Es/N0),
    whose LLR mean is ``4 Es/N0``.
    """
    n = int(round(math.log2(eta)))
    m = np.array([4.0 * 10.0 ** (design_snr_db / 10.0)])
    for _ in range(n):
        check = np.array([_ga_phi_inv(1.0 - (1.0 - _ga_phi(v)) ** 2) for v in m])
        m = np.stack([check, 2.0 * m], axis=1).ravel()
    return m


def bhattacharyya(eta: int, z0: float) -> np.ndarray:
    """Bhattacharyya parameters on a BEC with erasure probability ``z0``."""
    z = np.array([z0])
    for _ in range(int(round(math.log2(eta)))):
        z = np.stack([2 * z - z * z, z * z], axis=1).ravel()
    return z


def polar_construct(
    eta: int, kappa: int, design_snr_db: float = 0.0, list_size: int = 8
) -> PolarCode:
    """Freeze the ``eta - kappa`` least reliable channels."""
    if eta < 1 or eta & (eta - 1):
        raise ConfigError(f"block length {eta} is not a power of two")
    if not 0 <= kappa <= eta:
        raise ConfigError("message length must lie in [0, eta]")
    rel = ga_reliability(eta, design_snr_db)
    order = np.argsort(rel, kind="stable")
    return PolarCode(eta, kappa, np.sort(order[: eta - kappa]), list_size)


def polar_transform(u: np.ndarray) -> np.ndarray:
    """x = u F^{(x)n} over GF(2), on the last axis."""
    x = np.array(u, dtype=np.int8, copy=True)
    n = x.shape[-1]
    step = 1
    while step < n:
        for start in range(0, n, 2 * step):
            x[..., start : start + step] ^= x[..., start + step : start + 2 * step]
        step *= 2
    return x


def polar_encode(msg: np.ndarray, code: PolarCode) -> np.ndarray:
    """Codeword(s) for message bits on the last axis."""
    msg = np.asarray(msg)
    if msg.shape[-1] != code.kappa:
        raise DomainError(f"message length {msg.shape[-1]} != kappa {code.kappa}")
    u = np.zeros(msg.shape[:-1] + (code.eta,), dtype=np.int8)
    u[..., code.info] = msg
    return polar_transform(u)


def _boxplus(a, b):
    return np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b)) + np.log1p(
        np.exp(-np.abs(a + b))
    ) - np.log1p(np.exp(-np.abs(a - b)))


def sc_decode(llr: np.ndarray, code: PolarCode) -> np.ndarray:
    """Plain recursive successive-cancellation decoder (single codeword)."""
    llr = np.asarray(llr, dtype=float)
    if llr.shape != (code.eta,):
        raise DomainError("llr length must equal eta")
    frozen = code.frozen_mask

    def rec(lam, fz):
        if len(lam) == 1:
            u = np.array([0 if fz[0] or lam[0] >= 0 else 1], dtype=np.int8)
            return u, u.copy()
        half = len(lam) // 2
        a, b = lam[:half], lam[half:]
        u_a, x_a = rec(_boxplus(a, b), fz[:half])
        u_b, x_b = rec(b + (1 - 2 * x_a) * a, fz[half:])
        return np.concatenate([u_a, u_b]), np.concatenate([x_a ^ x_b, x_b])

    u, _ = rec(llr, frozen)
    return u[code.info]


@numba.njit(cache=True, inline="always")
def _f(a, b):
    s = 1.0 if (a >= 0) == (b >= 0) else -1.0
    return s * min(abs(a), abs(b)) + math.log1p(math.exp(-abs(a + b))) - math.log1p(
        math.exp(-abs(a - b))
    )


@numba.njit(cache=True, inline="always")
def _penalty(lam, bit):
    # -log P(bit | lam) = log(1 + exp(-(1 - 2 bit) lam))
    x = lam if bit == 0 else -lam
    if x >= 0:
        return math.log1p(math.exp(-x))
    return -x + math.log1p(math.exp(x))


@numba.njit(cache=True, nogil=True)
def _scl_one(llr, frozen, list_size, out_u):
    n_len = llr.shape[0]
    n = 0
    while (1 << n) < n_len:
        n += 1
    cap = list_size
    alpha = np.zeros((cap, n + 1, n_len))
    xl = np.zeros((cap, n + 1, n_len), dtype=np.int8)
    u = np.zeros((cap, n_len), dtype=np.int8)
    pm = np.zeros(cap)
    active = np.zeros(cap, dtype=np.bool_)
    kids = np.zeros(cap, dtype=np.int64)
    cand = np.zeros(2 * cap)
    cand_src = np.zeros(2 * cap, dtype=np.int64)
    lam = np.zeros(cap)
    buf = np.empty(n_len, dtype=np.int8)
    alpha[0, 0, :] = llr
    active[0] = True
    for i in range(n_len):
        start = 1 if i == 0 else n - _trailing_zeros(i)
        for p in range(cap):
            if not active[p]:
                continue
            for d in range(start, n + 1):
                ln = n_len >> d
                bit = (i >> (n - d)) & 1
                if bit == 0:
                    for j in range(ln):
                        alpha[p, d, j] = _f(alpha[p, d - 1, j], alpha[p, d - 1, j + ln])
                else:
                    for j in range(ln):
                        sgn = 1.0 - 2.0 * xl[p, d, j]
                        alpha[p, d, j] = alpha[p, d - 1, j + ln] + sgn * alpha[p, d - 1, j]
            lam[p] = alpha[p, n, 0]
        if frozen[i]:
            for p in range(cap):
                if active[p]:
                    pm[p] += _penalty(lam[p], 0)
                    u[p, i] = 0
        else:
            n_cand = 0
            for p in range(cap):
                if active[p]:
                    cand[n_cand] = pm[p] + _penalty(lam[p], 0)
                    cand[n_cand + 1] = pm[p] + _penalty(lam[p], 1)
                    cand_src[n_cand] = p
                    cand_src[n_cand + 1] = p
                    n_cand += 2
            order = np.argsort(cand[:n_cand], kind="mergesort")
            n_keep = min(cap, n_cand)
            kids[:] = 0
            for q in range(n_keep):
                kids[cand_src[order[q]]] += 1
            # Paths with no surviving child free their slot.
            for p in range(cap):
                if active[p] and kids[p] == 0:
                    active[p] = False
            placed = np.zeros(cap, dtype=np.bool_)
            for q in range(n_keep):
                c = order[q]
                src = cand_src[c]
                bit = c - 2 * (c // 2)
                if not placed[src]:
                    placed[src] = True
                    u[src, i] = bit
                    pm[src] = cand[c]
                    continue
                # Second child of src: fork into a free slot.
                dst = 0
                while active[dst]:
                    dst += 1
                alpha[dst] = alpha[src]
                xl[dst] = xl[src]
                u[dst] = u[src]
                u[dst, i] = bit
                pm[dst] = cand[c]
                active[dst] = True
                placed[dst] = True
        # propagate partial sums of the decided leaf
        for p in range(cap):
            if not active[p]:
                continue
            d = n
            ln = 1
            buf[0] = u[p, i]
            while d > 0:
                bit = (i >> (n - d)) & 1
                if bit == 0:
                    for j in range(ln):
                        xl[p, d, j] = buf[j]
                    break
                for j in range(ln):
                    buf[ln + j] = buf[j]
                    buf[j] = xl[p, d, j] ^ buf[ln + j]
                ln *= 2
                d -= 1
    best = -1
    for p in range(cap):
        if active[p] and (best < 0 or pm[p] < pm[best]):
            best = p
    out_u[:] = u[best]
    return pm[best]


@numba.njit(cache=True, inline="always")
def _trailing_zeros(i):
    c = 0
    while (i & 1) == 0:
        i >>= 1
        c += 1
    return c


@numba.njit(cache=True, nogil=True)
def _scl_batch(llrs, frozen, list_size, out_u, out_pm):
    for b in range(llrs.shape[0]):
        out_pm[b] = _scl_one(llrs[b], frozen, list_size, out_u[b])


def scl_decode(llrs: np.ndarray, code: PolarCode, return_metric: bool = False):
    """Successive-cancellation list decoding without CRC.

    ``llrs`` is ``(eta,)`` or ``(B, eta)``; returns message bits of the
    surviving path with the smallest path metric.
    """
    llrs = np.asarray(llrs, dtype=float)
    single = llrs.ndim == 1
    batch = np.ascontiguousarray(llrs[None] if single else llrs)
    if batch.shape[-1] != code.eta:
        raise DomainError("llr length must equal eta")
    if not np.all(np.isfinite(batch)):
        raise DomainError("llrs must be finite")
    u = np.zeros(batch.shape, dtype=np.int8)
    pm = np.zeros(len(batch))
    _scl_batch(batch, code.frozen_mask, int(code.list_size), u, pm)
    msg = u[:, code.info]
    if single:
        msg, pm = msg[0], pm[0]
    return (msg, pm) if return_metric else msg
