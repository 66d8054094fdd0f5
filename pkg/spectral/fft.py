"""
spectral/fft.py - discrete Fourier transforms with fixed conventions.

Conventions (all transforms act along the last axis):
    forward  X_k = sum_j x_j exp(-2*pi*i*j*k/n)      (unnormalized)
    inverse  x_t = (1/n) sum_k X_k exp(+2*pi*i*k*t/n)

* dft_naive          - O(n^2) definition, the oracle everything is tested against
* fft                - radix-2 for powers of two, Bluestein chirp-z otherwise
* rfft / irfft       - real signal <-> one-sided half spectrum
* hfft / ihfft       - Hermitian half spectrum <-> real signal
* spectral_backward  - transpose of the real linear maps hfft / irfft

hfft and irfft take an output length n and trim or zero-pad their input to
m = n//2 + 1 coefficients first; that length adjustment is part of the map
and its transpose (pad / trim) is part of spectral_backward.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from utils.errors import ContractError, ShapeError

DIRECTIONS = ("hfft", "ihfft", "rfft", "irfft")
REALNESS_TOL = 1e-9


def half_length(n: int) -> int:
    return n // 2 + 1


@dataclass(frozen=True)
class SpectralPlan:
    """Pure description of one transform: output length n and direction."""

    n: int
    direction: str

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ShapeError(f"spectral plan needs n >= 2, got {self.n}")
        if self.direction not in DIRECTIONS:
            raise ContractError(f"unknown spectral direction {self.direction!r}")

    @property
    def m(self) -> int:
        return half_length(self.n)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.direction == "hfft":
            return hfft(x, self.n)
        if self.direction == "ihfft":
            return ihfft(x, self.n)
        if self.direction == "irfft":
            return irfft(x, self.n)
        x = np.asarray(x)
        if x.shape[-1] != self.n:
            raise ShapeError(f"rfft plan for n={self.n} got length {x.shape[-1]}")
        return rfft(x)

    def adjoint(self, grad_out: np.ndarray, in_len: int) -> np.ndarray:
        return spectral_backward(self.direction, grad_out, self.n, in_len)


# ---------------------------------------------------------------------
# Complex transforms
# ---------------------------------------------------------------------


def dft_naive(x: np.ndarray, sign: int = -1) -> np.ndarray:
    """X_k = sum_j x_j exp(sign*2*pi*i*j*k/n), straight from the definition."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n < 1:
        raise ShapeError("dft_naive needs n >= 1")
    j = np.arange(n)
    phase = np.outer(j, j) % n
    w = np.exp(np.sign(sign) * 2j * np.pi * phase / n)
    return x @ w


@lru_cache(maxsize=64)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    rev.setflags(write=False)
    return rev


def _radix2(x: np.ndarray, sign: int) -> np.ndarray:
    n = x.shape[-1]
    lead = x.shape[:-1]
    y = x[..., _bit_reverse(n)]
    size = 2
    while size <= n:
        half = size // 2
        w = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = y.reshape(*lead, n // size, size)
        a = blocks[..., :half]
        b = blocks[..., half:] * w
        y = np.concatenate([a + b, a - b], axis=-1).reshape(*lead, n)
        size *= 2
    return y


def _bluestein(x: np.ndarray, sign: int) -> np.ndarray:
    n = x.shape[-1]
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp phase small for large n
    chirp = np.exp(sign * 1j * np.pi * ((k * k) % (2 * n)) / n)
    size = 1 << (2 * n - 2).bit_length()

    a = np.zeros(x.shape[:-1] + (size,), dtype=np.complex128)
    a[..., :n] = x * chirp
    b = np.zeros(size, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[size - n + 1:] = np.conj(chirp[1:])[::-1]

    conv = _radix2(_radix2(a, -1) * _radix2(b, -1), 1) / size
    return chirp * conv[..., :n]


def fft(x: np.ndarray, sign: int = -1) -> np.ndarray:
    """Fast transform along the last axis; equals dft_naive(x, sign)."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n < 1:
        raise ShapeError("fft needs n >= 1")
    s = -1 if sign < 0 else 1
    if n == 1:
        return x.copy()
    if n & (n - 1) == 0:
        return _radix2(x, s)
    return _bluestein(x, s)


# ---------------------------------------------------------------------
# Real / Hermitian transforms
# ---------------------------------------------------------------------


def _fit_length(y: np.ndarray, m: int) -> np.ndarray:
    """Trim or zero-pad the last axis to exactly m entries."""
    length = y.shape[-1]
    if length == m:
        return y
    if length > m:
        return y[..., :m]
    pad = np.zeros(y.shape[:-1] + (m - length,), dtype=y.dtype)
    return np.concatenate([y, pad], axis=-1)


def _hermitian_extension(y: np.ndarray, n: int) -> np.ndarray:
    """
    Full spectrum of length n from m half-spectrum coefficients:
    Y[k] = y[k] for k < m, Y[n-k] = conj(y[k]) for 1 <= k <= n-m.
    DC and (even n) Nyquist are taken as real.
    """
    m = half_length(n)
    ext = np.zeros(y.shape[:-1] + (n,), dtype=np.complex128)
    ext[..., :m] = y
    ext[..., 0] = ext[..., 0].real
    if n % 2 == 0:
        ext[..., m - 1] = ext[..., m - 1].real
    if n - m > 0:
        ext[..., m:] = np.conj(y[..., 1:n - m + 1])[..., ::-1]
    return ext


def _checked_real(out: np.ndarray, source: np.ndarray, op: str) -> np.ndarray:
    residue = np.max(np.abs(out.imag), axis=-1)
    bound = REALNESS_TOL * np.linalg.norm(source, axis=-1)
    if np.any(residue > bound):
        worst = float(np.max(residue - bound))
        raise ContractError(f"{op}: imaginary residue exceeds tolerance by {worst:.3e}")
    return np.ascontiguousarray(out.real)


def rfft(x: np.ndarray) -> np.ndarray:
    """First n//2+1 bins of the forward transform of a real signal."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 1:
        raise ShapeError("rfft needs n >= 1")
    return fft(x, -1)[..., :half_length(n)]


def irfft(y: np.ndarray, n: int) -> np.ndarray:
    """Real signal of length n whose one-sided spectrum is y (trimmed/padded to n//2+1)."""
    if n < 2:
        raise ShapeError(f"irfft needs n >= 2, got {n}")
    adj = _fit_length(np.asarray(y, dtype=np.complex128), half_length(n))
    out = fft(_hermitian_extension(adj, n), 1) / n
    return _checked_real(out, adj, "irfft")


def hfft(y: np.ndarray, n: int) -> np.ndarray:
    """Forward transform of the Hermitian extension of y; real output of length n."""
    if n < 2:
        raise ShapeError(f"hfft needs n >= 2, got {n}")
    y = np.asarray(y)
    adj = _fit_length(y.astype(np.complex128 if np.iscomplexobj(y) else np.float64), half_length(n))
    out = fft(_hermitian_extension(adj, n), -1)
    return _checked_real(out, adj, "hfft")


def ihfft(z: np.ndarray, n: int) -> np.ndarray:
    """
    y_k = (1/n) sum_t z_t exp(+2*pi*i*k*t/n), k < n//2+1.

    Complex in general; real (to rounding) when z came out of hfft.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != n:
        raise ShapeError(f"ihfft expected length {n}, got {z.shape[-1]}")
    return np.conj(rfft(z)) / n


def _half_weights(n: int) -> np.ndarray:
    m = half_length(n)
    w = np.full(m, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[m - 1] = 1.0
    return w


def spectral_backward(op: str, grad_out: np.ndarray, n: int, in_len: int) -> np.ndarray:
    """
    A^T @ grad_out for the real linear map of hfft or irfft (real inputs of
    length in_len, output length n). With y real, hfft is
    out_t = sum_k w_k y_k cos(2*pi*k*t/n), so A^T g = w * Re(rfft(g));
    irfft is the same map divided by n.
    """
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape[-1] != n:
        raise ShapeError(f"{op} backward: gradient length {g.shape[-1]} != n={n}")
    if op == "hfft":
        proj = rfft(g).real * _half_weights(n)
    elif op == "irfft":
        proj = rfft(g).real * _half_weights(n) / n
    else:
        raise ContractError(f"no backward rule for spectral op {op!r}")
    m = half_length(n)
    if in_len >= m:
        return _fit_length(proj, in_len)
    return np.ascontiguousarray(proj[..., :in_len])
