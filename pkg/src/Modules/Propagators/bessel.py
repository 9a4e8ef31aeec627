"""
Scaled modified Bessel functions e^{-z} I_k(z)

Recorrência regressiva de Miller com normalização pela identidade
I_0(z) + 2 Σ_k I_k(z) = e^z, vetorizada sobre vários argumentos z.
"""

import math

import numpy as np

from src.Modules.errors import InputError

_RESCALE_ABOVE = 1e250


def recurrence_start(max_order: int, z_max: float) -> int:
    """Starting order for the backward recurrence.

    Equals max(order, ceil(z)) + 40 for z up to 100; beyond that the terms
    past ~9 sqrt(z) are below double precision, so the depth grows as 10 sqrt(z).
    """
    return max_order + 40 + int(math.ceil(min(z_max, 10.0 * math.sqrt(z_max))))


def scaled_bessel_table(max_order: int, z) -> np.ndarray:
    """Array of shape (len(z), max_order + 1) with e^{-z} I_k(z), k = 0..max_order."""
    if max_order < 0:
        raise InputError("order must be non-negative")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z < 0):
        raise InputError("argument z must be non-negative")
    out = np.zeros((z.size, max_order + 1))
    zero = z == 0.0
    out[zero, 0] = 1.0
    zz = z[~zero]
    if zz.size == 0:
        return out

    start = recurrence_start(max_order, float(zz.max()))
    stored = np.zeros((zz.size, max_order + 1))
    upper = np.zeros_like(zz)
    current = np.full_like(zz, 1e-30)
    norm = np.zeros_like(zz)
    for k in range(start, 0, -1):
        if k <= max_order:
            stored[:, k] = current
        norm += 2.0 * current
        lower = upper + (2.0 * k / zz) * current
        upper, current = current, lower
        big = np.abs(current) > _RESCALE_ABOVE
        if big.any():
            scale = np.where(big, 1.0 / _RESCALE_ABOVE, 1.0)
            current *= scale
            upper *= scale
            norm *= scale
            stored *= scale[:, None]
    stored[:, 0] = current
    norm += current
    out[~zero] = stored / norm[:, None]
    return out


def scaled_bessel(order: int, z: float) -> float:
    """e^{-z} I_order(z)."""
    return float(scaled_bessel_table(order, [z])[0, order])
