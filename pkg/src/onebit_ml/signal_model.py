"""Channels, QAM symbol tables, received signals and one-bit observations.

Real-valued conventions
-----------------------
A complex channel ``hbar`` has shape ``(nu, nr)``.  Its lifting ``h`` has
shape ``(2nu, 2nr)`` and satisfies::

    h.T == [[Re hbar.T, -Im hbar.T],
            [Im hbar.T,  Re hbar.T]]

so ``h.T @ [Re x; Im x] == [Re(hbar.T @ x); Im(hbar.T @ x)]``.  Column ``i``
of ``h`` is the real-valued antenna vector ``h_i``; real antenna ``i < nr``
is the in-phase port of physical antenna ``i`` and ``i >= nr`` the
quadrature port.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from onebit_ml.numerics import ConfigError, DomainError

SUPPORTED_ORDERS = (4, 16, 64)


@dataclass(frozen=True)
class LinkParams:
    """Transmit power ``rho`` and noise power ``n0``; SNR is rho / n0."""

    n0: float
    rho: float = 1.0

    def __post_init__(self):
        if not (self.rho > 0 and self.n0 > 0):
            raise DomainError("rho and n0 must be positive")

    @classmethod
    def from_snr_db(cls, snr_db: float, rho: float = 1.0) -> "LinkParams":
        return cls(n0=rho / 10.0 ** (snr_db / 10.0), rho=rho)

    @property
    def snr(self) -> float:
        return self.rho / self.n0

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.snr)


def gen_rayleigh_channel(nu: int, nr: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0, 1) channel matrix of shape ``(nu, nr)``."""
    if nu < 1 or nr < 1:
        raise DomainError("channel dimensions must be positive")
    scale = math.sqrt(0.5)
    return scale * (rng.standard_normal((nu, nr)) + 1j * rng.standard_normal((nu, nr)))


def lift_channel(hbar: np.ndarray) -> np.ndarray:
    """Real-valued ``(2nu, 2nr)`` representation of a complex channel."""
    re, im = hbar.real, hbar.imag
    return np.block([[re, im], [-im, re]])


def to_real(x: np.ndarray) -> np.ndarray:
    """Stack real and imaginary parts along the last axis."""
    x = np.asarray(x)
    return np.concatenate([x.real, x.imag], axis=-1)


def to_complex(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_real`."""
    x = np.asarray(x, dtype=float)
    half = x.shape[-1] // 2
    return x[..., :half] + 1j * x[..., half:]


def _gray(n: int) -> int:
    return n ^ (n >> 1)


def qam_constellation(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Gray-labelled square M-QAM with unit average energy.

    Returns ``(points, labels)``: ``points[j]`` is the symbol whose q-bit
    label (MSB first) is ``labels[j]``, with ``points`` indexed by the label
    integer.  The first q/2 bits select the in-phase level, the rest the
    quadrature level.
    """
    if m not in SUPPORTED_ORDERS:
        raise ConfigError(f"unsupported constellation order {m}")
    q = int(math.log2(m))
    half = q // 2
    side = 1 << half
    levels = 2 * np.arange(side) - (side - 1)
    # PAM level carrying Gray label g sits at position gray^-1(g).
    pam = np.empty(side)
    for pos in range(side):
        pam[_gray(pos)] = levels[pos]
    labels = (np.arange(m)[:, None] >> np.arange(q - 1, -1, -1)[None, :]) & 1
    i_idx = np.arange(m) >> half
    q_idx = np.arange(m) & (side - 1)
    points = pam[i_idx] + 1j * pam[q_idx]
    points = points / math.sqrt(2.0 * (m - 1) / 3.0)
    return points, labels.astype(np.int8)


@dataclass(frozen=True)
class SymbolTable:
    """All ``K = M**nu`` candidate symbol vectors.

    Candidate ``k`` carries per-user constellation indices ``indices[k]``
    (user 0 most significant base-M digit), complex symbols ``symbols[k]``
    and real-valued vector ``real_vectors[k] = [Re; Im]``.
    """

    m: int
    nu: int
    constellation: np.ndarray
    bit_labels: np.ndarray
    indices: np.ndarray = field(repr=False)
    symbols: np.ndarray = field(repr=False)
    real_vectors: np.ndarray = field(repr=False)

    @property
    def k(self) -> int:
        return self.m**self.nu

    @property
    def q(self) -> int:
        return int(math.log2(self.m))

    def index_of(self, user_indices: np.ndarray) -> np.ndarray:
        """Candidate index from per-user constellation indices (last axis)."""
        user_indices = np.asarray(user_indices)
        weights = self.m ** np.arange(self.nu - 1, -1, -1)
        return user_indices @ weights

    def map_bits(self, bits: np.ndarray) -> np.ndarray:
        """f_M: q-bit groups (last axis, MSB first) to constellation indices."""
        bits = np.asarray(bits)
        return bits @ (1 << np.arange(self.q - 1, -1, -1))

    def slice_symbols(self, z: np.ndarray) -> np.ndarray:
        """Nearest constellation index for each complex sample."""
        z = np.asarray(z)
        return np.argmin(np.abs(z[..., None] - self.constellation), axis=-1)


def build_symbol_table(m: int, nu: int) -> SymbolTable:
    if nu < 1:
        raise ConfigError("need at least one user")
    points, labels = qam_constellation(m)
    idx = np.array(list(itertools.product(range(m), repeat=nu)), dtype=np.int64)
    symbols = points[idx]
    return SymbolTable(
        m=m,
        nu=nu,
        constellation=points,
        bit_labels=labels,
        indices=idx,
        symbols=symbols,
        real_vectors=to_real(symbols),
    )


def noiseless_outputs(h: np.ndarray, x: np.ndarray, rho: float = 1.0) -> np.ndarray:
    """sqrt(rho) H^T x for ``x`` of shape ``(..., 2nu)``."""
    return math.sqrt(rho) * (np.asarray(x) @ h)


def transmit(
    h: np.ndarray, x: np.ndarray, params: LinkParams, rng: np.random.Generator
) -> np.ndarray:
    """Received real vector(s) r = sqrt(rho) H^T x + z, z ~ N(0, n0/2)."""
    clean = noiseless_outputs(h, x, params.rho)
    return clean + math.sqrt(params.n0 / 2.0) * rng.standard_normal(clean.shape)


def one_bit_quantize(r: np.ndarray) -> np.ndarray:
    """Elementwise sign with the boundary ``0 -> -1``."""
    r = np.asarray(r)
    if not np.all(np.isfinite(r)):
        raise DomainError("quantizer input must be finite")
    return np.where(r > 0, 1, -1).astype(np.int8)


def dithered_observation(
    h: np.ndarray,
    s: np.ndarray,
    params: LinkParams,
    sigma2: np.ndarray,
    rng: np.random.Generator,
    n: int | None = None,
) -> np.ndarray:
    """One-bit observation(s) of ``s`` with per-antenna dither.

    The dither at real antenna ``i`` has variance ``sigma2[i] / 2``.  Noise
    and dither are independent zero-mean Gaussians, so they are drawn as one
    Gaussian of variance ``(n0 + sigma2) / 2``.  ``sigma2`` may also be
    shaped ``(..., 2nr)`` to broadcast against a stack of symbol vectors
    ``s`` of shape ``(..., 2nu)``; ``n`` adds a slot axis before the antenna
    axis.
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 < 0):
        raise DomainError("negative dither variance")
    clean = noiseless_outputs(h, s, params.rho)
    std = np.sqrt((params.n0 + sigma2) / 2.0)
    if n is None:
        shape = np.broadcast(clean, std).shape
        return one_bit_quantize(clean + std * rng.standard_normal(shape))
    clean = clean[..., None, :]
    std = std[..., None, :] if std.ndim else std
    shape = np.broadcast(clean, std).shape[:-2] + (n, clean.shape[-1])
    return one_bit_quantize(clean + std * rng.standard_normal(shape))
