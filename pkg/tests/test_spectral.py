from __future__ import annotations

import numpy as np
import pytest

from autodiff.gradcheck import check_gradients
from autodiff.tensor import Tensor, weighted_sum
from diagnostics import oracles
from spectral import fft as sfft
from spectral.fft import SpectralPlan, dft_naive, fft, hfft, ihfft, irfft, rfft
from spectral.ops import hfft_lastaxis, irfft_lastaxis
from utils.errors import ContractError, ShapeError

SIZES = list(range(2, 65)) + [385, 600, 768]


def _hermitian_batch(rng, rows, n):
    m = n // 2 + 1
    y = rng.standard_normal((rows, m)) + 1j * rng.standard_normal((rows, m))
    y[:, 0] = y[:, 0].real
    if n % 2 == 0:
        y[:, -1] = y[:, -1].real
    return y


def _extended(y, n):
    return np.stack([oracles.hermitian_extension_loop(row, n) for row in y])


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 12, 17, 64, 100, 128, 385])
def test_fft_matches_naive_dft(rng, n):
    x = rng.standard_normal((3, n)) + 1j * rng.standard_normal((3, n))
    for sign in (-1, 1):
        np.testing.assert_allclose(fft(x, sign), dft_naive(x, sign), rtol=0, atol=1e-9)


@pytest.mark.parametrize("n", SIZES)
def test_real_transforms_match_naive_constructions(n):
    rng = np.random.default_rng(n)
    x = rng.standard_normal((100, n))
    y = _hermitian_batch(rng, 100, n)
    ext = _extended(y, n)

    np.testing.assert_allclose(rfft(x), dft_naive(x, -1)[:, : n // 2 + 1], rtol=0, atol=1e-9)
    np.testing.assert_allclose(irfft(y, n), (dft_naive(ext, 1) / n).real, rtol=0, atol=1e-9)
    np.testing.assert_allclose(hfft(y, n), dft_naive(ext, -1).real, rtol=0, atol=1e-9)
    np.testing.assert_allclose(ihfft(x, n), dft_naive(x, 1)[:, : n // 2 + 1] / n, rtol=0, atol=1e-9)


def test_round_trips_are_identities():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(2, 130))
        x = rng.standard_normal(n)
        y = rng.standard_normal(n // 2 + 1)
        np.testing.assert_allclose(irfft(rfft(x), n), x, rtol=0, atol=1e-9)
        np.testing.assert_allclose(ihfft(hfft(y, n), n), y, rtol=0, atol=1e-9)


def test_hfft_of_unit_impulse_is_flat():
    np.testing.assert_allclose(hfft(np.array([1.0, 0.0, 0.0]), 4), np.ones(4), atol=1e-15)


def test_hfft_output_is_real_for_hermitian_input(rng):
    y = _hermitian_batch(rng, 4, 9)
    out = hfft(y, 9)
    assert out.dtype == np.float64
    assert out.shape == (4, 9)


def test_ihfft_is_complex_but_real_on_hfft_output(rng):
    y = rng.standard_normal(5)
    back = ihfft(hfft(y, 8), 8)
    assert np.iscomplexobj(back)
    assert np.max(np.abs(back.imag)) < 1e-12


def test_half_spectrum_is_trimmed_or_zero_padded():
    rng = np.random.default_rng(3)
    y = rng.standard_normal(9)
    np.testing.assert_array_equal(hfft(y, 8), hfft(y[:5], 8))
    short = rng.standard_normal(3)
    np.testing.assert_array_equal(irfft(short, 8), irfft(np.concatenate([short, np.zeros(2)]), 8))


def test_lengths_below_two_are_rejected():
    with pytest.raises(ShapeError):
        hfft(np.ones(1), 1)
    with pytest.raises(ShapeError):
        irfft(np.ones(1), 1)
    with pytest.raises(ShapeError):
        ihfft(np.ones(4), 5)


def test_plan_adjoint_is_the_transpose(rng):
    for direction in ("hfft", "irfft"):
        for n, in_len in ((8, 5), (9, 5), (8, 3), (8, 7)):
            plan = SpectralPlan(n, direction)
            x = rng.standard_normal(in_len)
            g = rng.standard_normal(n)
            lhs = float(np.dot(plan.apply(x), g))
            rhs = float(np.dot(x, plan.adjoint(g, in_len)))
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_plan_rejects_unknown_direction():
    with pytest.raises(ContractError):
        SpectralPlan(8, "dct")
    with pytest.raises(ShapeError):
        SpectralPlan(1, "hfft")


@pytest.mark.parametrize("n, in_len", [(8, 5), (8, 3), (8, 7), (7, 4), (16, 16)])
def test_recorded_transforms_pass_gradcheck(rng, n, in_len):
    w = rng.standard_normal((2, 3, n))
    x0 = rng.standard_normal((2, 3, in_len))
    errors = check_gradients(lambda t: weighted_sum(hfft_lastaxis(t["x"], n), w), {"x": x0})
    assert errors["x"] <= 1e-6
    errors = check_gradients(lambda t: weighted_sum(irfft_lastaxis(t["x"], n), w), {"x": x0})
    assert errors["x"] <= 1e-6


def test_transforms_resolve_through_the_module(monkeypatch):
    monkeypatch.setattr(sfft, "hfft", lambda y, n: np.zeros(n))
    out = hfft_lastaxis(Tensor(np.ones(5), dtype=np.float64), 8)
    np.testing.assert_array_equal(out.data, np.zeros(8))
