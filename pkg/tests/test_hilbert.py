import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apdnegf.scattering import hilbert_transform, kk_completion


def pv_oracle(e, f, at):
    """(1/pi) PV int f(x)/(E - x) dx of the piecewise-linear interpolant of
    ``f`` (zero one step beyond each end), summed segment by segment in
    mpmath. Singular logarithms at a knot cancel between the two adjacent
    segments and are dropped."""
    mp.mp.dps = 30
    de = e[1] - e[0]
    x = [mp.mpf(v) for v in np.concatenate([[e[0] - de], e, [e[-1] + de]])]
    y = [mp.mpf(0)] + [mp.mpf(v) for v in f] + [mp.mpf(0)]
    E = mp.mpf(at)
    total = mp.mpf(0)
    for x0, x1, y0, y1 in zip(x[:-1], x[1:], y[:-1], y[1:]):
        beta = (y1 - y0) / (x1 - x0)
        alpha = y0 - beta * x0
        total += beta * (x1 - x0)
        c = alpha + beta * E
        for xe, sgn in ((x1, 1), (x0, -1)):
            if xe != E:
                total += sgn * c * mp.log(abs(xe - E))
    # int f/(x - E) computed; flip the sign for 1/(E - x)
    return float(-total / mp.pi)


def test_matches_pv_quadrature_oracle(rng):
    e = np.linspace(-2, 2, 41)
    f = rng.normal(size=41)
    h = hilbert_transform(f)
    for i in (0, 7, 20, 33, 40):
        assert h[i] == pytest.approx(pv_oracle(e, f, e[i]), abs=1e-12)


def test_linearity(rng):
    f, g = rng.normal(size=(2, 64))
    a, b = 1.7, -0.3
    assert np.max(np.abs(hilbert_transform(a * f + b * g) - a * hilbert_transform(f) - b * hilbert_transform(g))) < 1e-12


@pytest.mark.parametrize("ratio", [10, 20, 40])
def test_lorentzian_pair(ratio):
    e = np.linspace(-40, 40, 4001)
    de = e[1] - e[0]
    w = ratio * de
    h = hilbert_transform(w / (e**2 + w**2))
    exact = e / (e**2 + w**2)
    core = np.abs(e) < 10 * w
    assert np.max(np.abs(h - exact)[core]) < 0.01 * np.max(np.abs(exact))


def test_constant_vanishes_at_centre():
    h = hilbert_transform(np.full(2001, 3.0))
    assert abs(h[1000]) < 1e-3 * 3.0


def test_kk_zero_and_anti_hermitian_part(rng):
    assert not np.any(kk_completion(np.zeros((16, 2, 2))))
    x = rng.normal(size=(32, 3, 3)) + 1j * rng.normal(size=(32, 3, 3))
    gamma = x @ np.conj(np.swapaxes(x, -1, -2))
    for conv in ("full", "half"):
        sigma = kk_completion(gamma, convention=conv)
        back = 1j * (sigma - np.conj(np.swapaxes(sigma, -1, -2)))
        assert np.max(np.abs(back - gamma)) < 1e-10
        assert np.allclose(sigma.imag[:, [0, 1, 2], [0, 1, 2]], -0.5 * gamma.real[:, [0, 1, 2], [0, 1, 2]])


@pytest.mark.parametrize("conv,scale", [("full", 1.0), ("half", 0.5)])
def test_kk_lorentzian_real_part(conv, scale):
    e = np.linspace(-40, 40, 4001)
    w = 20 * (e[1] - e[0])
    sigma = kk_completion(w / (e**2 + w**2), convention=conv)
    exact = scale * e / (e**2 + w**2)
    core = np.abs(e) < 10 * w
    assert np.max(np.abs(sigma.real - exact)[core]) < 0.01 * np.max(np.abs(exact))


def test_unknown_convention():
    with pytest.raises(ValueError):
        kk_completion(np.zeros(4), convention="other")


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=40))
def test_odd_symmetry(values):
    f = np.array(values)
    # an even input gives an odd transform
    sym = np.concatenate([f[::-1], f[1:]])
    h = hilbert_transform(sym)
    assert np.allclose(h, -h[::-1], atol=1e-10 * (1 + np.abs(sym).max()))
