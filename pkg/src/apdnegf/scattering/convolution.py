"""FFT evaluation of the energy-conserving triple convolution."""

from __future__ import annotations

import numpy as np
from scipy import fft as sfft

from ..errors import ValidationError


def triple_convolution(a, b, c, de: float | None = None, axis: int = 0, energies=None) -> np.ndarray:
    """[A * BC](E_i) = (dE/2pi)^2 sum_{j,k} A(E_j + E_k - E_i) B(E_j) C(E_k).

    All inputs share one uniform grid along ``axis``; remaining axes are
    combined element-wise. Values of A outside the grid count as zero. The
    inner convolution of B and C and the correlation with A are done with
    one zero-padded FFT of length >= 3N - 2, so nothing wraps around.
    Pass either the spacing ``de`` or the grid itself as ``energies``.
    """
    if energies is not None:
        de = check_grid(energies)
        if np.shape(a)[axis] != len(energies):
            raise ValidationError("operands are not sampled on the given grid")
    if de is None or not de > 0:
        raise ValidationError("a positive grid spacing is required")
    a, b, c = (np.moveaxis(np.asarray(x), axis, 0) for x in (a, b, c))
    if not (a.shape == b.shape == c.shape):
        raise ValidationError(f"convolution operands differ in shape: {a.shape}, {b.shape}, {c.shape}")
    n = a.shape[0]
    size = sfft.next_fast_len(3 * n - 2)
    fa = sfft.fft(a[::-1], size, axis=0)
    fb = sfft.fft(b, size, axis=0)
    fc = sfft.fft(c, size, axis=0)
    full = sfft.ifft(fa * fb * fc, axis=0)[n - 1:2 * n - 1]
    out = full * (de / (2.0 * np.pi)) ** 2
    if not (np.iscomplexobj(a) or np.iscomplexobj(b) or np.iscomplexobj(c)):
        out = out.real
    return np.moveaxis(out, 0, axis)


def check_grid(energies) -> float:
    """Spacing of a uniform grid; raises ValidationError otherwise."""
    e = np.asarray(energies, dtype=float)
    d = np.diff(e)
    if e.ndim != 1 or e.size < 2 or d[0] <= 0 or np.any(np.abs(d - d[0]) > 1e-9 * d[0]):
        raise ValidationError("triple convolution requires a uniform, increasing energy grid")
    return float(d[0])
