# spectral/ops.py
#
# Tape-recorded Hermitian transforms along the last axis of a Tensor.
# Forward values come from spectral.fft; backward is the transpose of the
# real linear map (spectral_backward), including the trim/pad step.

from __future__ import annotations

from autodiff.tensor import Tensor, as_tensor, record
from spectral import fft as sfft


def hfft_lastaxis(x: Tensor, n: int) -> Tensor:
    x = as_tensor(x)
    in_len = x.shape[-1]
    out = sfft.hfft(x.data, n).astype(x.dtype)

    def _backward(g):
        return (sfft.spectral_backward("hfft", g, n, in_len),)

    return record("hfft", (x,), out, _backward)


def irfft_lastaxis(x: Tensor, n: int) -> Tensor:
    x = as_tensor(x)
    in_len = x.shape[-1]
    out = sfft.irfft(x.data, n).astype(x.dtype)

    def _backward(g):
        return (sfft.spectral_backward("irfft", g, n, in_len),)

    return record("irfft", (x,), out, _backward)
