"""Exact Fourier transforms on the finite groups (Z/q)^d used by the lab.

Conventions (u = spatial point, xi = frequency, both encoded in [0, q)):

    synth(F)[u]   = sum_xi F[xi] * character(u . xi)
    analyze(g)[xi] = q^{-d} sum_u g[u] * conj(character(u . xi))

so analyze(synth(F)) == F.  The pairing u . xi is the ring product.

For INT_MOD the character is exp(2 pi i x / q), so the transforms are plain
numpy FFTs.  For POLY_MOD the character only sees the top coefficient of the
product, which is sum_i u_i xi_{n-1-i} mod p: the transform factors into n
independent length-p DFTs per dimension, followed by a digit reversal.
"""
from __future__ import annotations

import numpy as np

from .localfield import Kind, LocalRing


def _digit_axes(shape_prefix: tuple, ring: LocalRing, ndim: int) -> tuple:
    return shape_prefix + (ring.p,) * (ring.n * ndim)


def _poly_transform(arr: np.ndarray, ring: LocalRing, ndim: int, inverse: bool) -> np.ndarray:
    """Apply the carryless transform on the last `ndim` axes of `arr`."""
    lead = arr.shape[: arr.ndim - ndim]
    n = ring.n
    x = arr.reshape(_digit_axes(lead, ring, ndim))
    base = len(lead)
    axes = tuple(range(base, base + n * ndim))
    if inverse:
        x = np.fft.ifftn(x, axes=axes) * float(ring.p) ** (n * ndim)
    else:
        x = np.fft.fftn(x, axes=axes)
    # axis j of each dimension block holds digit j of u; C order wants digit n-1-j
    perm = list(range(base))
    for d in range(ndim):
        start = base + d * n
        perm.extend(reversed(range(start, start + n)))
    x = np.transpose(x, perm)
    return np.ascontiguousarray(x).reshape(arr.shape)


def synth(F, ring: LocalRing, ndim: int = 2) -> np.ndarray:
    """Spatial values sum_xi F[xi] character(u . xi) over the last `ndim` axes."""
    F = np.asarray(F, dtype=complex)
    if ring.kind is Kind.INT_MOD:
        axes = tuple(range(F.ndim - ndim, F.ndim))
        return np.fft.ifftn(F, axes=axes) * float(ring.q) ** ndim
    return _poly_transform(F, ring, ndim, inverse=True)


def analyze(g, ring: LocalRing, ndim: int = 2) -> np.ndarray:
    """Coefficients F with synth(F) == g."""
    g = np.asarray(g, dtype=complex)
    if ring.kind is Kind.INT_MOD:
        axes = tuple(range(g.ndim - ndim, g.ndim))
        return np.fft.fftn(g, axes=axes) / float(ring.q) ** ndim
    return _poly_transform(g, ring, ndim, inverse=False) / float(ring.q) ** ndim


def synth_naive(F, ring: LocalRing) -> np.ndarray:
    """O(q^4) reference synthesis in two dimensions, built from ring arithmetic only."""
    F = np.asarray(F, dtype=complex)
    q = ring.q
    xs = ring.elements()
    # table of character(x * y) for all x, y
    chi = ring.character(ring.mul(xs[:, None], xs[None, :]))
    out = np.zeros((q, q), dtype=complex)
    for x1 in range(q):
        for x2 in range(q):
            if F[x1, x2] != 0:
                out += F[x1, x2] * np.outer(chi[:, x1], chi[:, x2])
    return out


def analyze_naive(g, ring: LocalRing) -> np.ndarray:
    g = np.asarray(g, dtype=complex)
    q = ring.q
    xs = ring.elements()
    chi = ring.character(ring.mul(xs[:, None], xs[None, :]))
    # analyze[xi1, xi2] = q^-2 sum_u g[u1,u2] conj(chi[u1,xi1] chi[u2,xi2])
    return np.conj(chi).T @ g @ np.conj(chi) / q**2
