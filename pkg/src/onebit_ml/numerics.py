"""Gaussian special functions and seeded random streams."""

from __future__ import annotations

import numpy as np
from scipy import special


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class SaturationError(DomainError):
    """Probability of exactly 0 or 1 handed to an inverse CDF."""


class ConfigError(ValueError):
    """Inconsistent configuration or mismatched dimensions."""


def std_normal_cdf(x):
    """Standard Gaussian CDF, elementwise."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("std_normal_cdf requires finite input")
    out = special.ndtr(x)
    return out.item() if out.ndim == 0 else out


def std_normal_logcdf(x):
    """log Phi(x), accurate deep in the lower tail."""
    out = special.log_ndtr(np.asarray(x, dtype=float))
    return out.item() if np.ndim(out) == 0 else out


def std_normal_cdf_inv(p):
    """Inverse standard Gaussian CDF for p strictly inside (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(np.isnan(p)) or np.any(p < 0) or np.any(p > 1):
        raise DomainError("probability outside [0, 1]")
    if np.any((p == 0) | (p == 1)):
        raise SaturationError("inverse CDF of 0 or 1 is unbounded; clamp first")
    out = special.ndtri(p)
    return out.item() if out.ndim == 0 else out


def rng_stream(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator keyed by ``(seed, *stream)``.

    Equal keys give bit-identical sequences; distinct keys are spawned
    children of one ``SeedSequence`` and therefore independent.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


def sample_gaussian(mean, variance, rng: np.random.Generator, size=None):
    """Draw from N(mean, variance); zero variance returns ``mean`` exactly."""
    variance = np.asarray(variance, dtype=float)
    if np.any(variance < 0):
        raise DomainError("negative variance")
    if size is None and np.ndim(mean) == 0 and variance.ndim == 0:
        if variance == 0:
            return float(mean)
        return float(mean + np.sqrt(variance) * rng.standard_normal())
    shape = size if size is not None else np.broadcast(np.asarray(mean), variance).shape
    return mean + np.sqrt(variance) * rng.standard_normal(shape)
