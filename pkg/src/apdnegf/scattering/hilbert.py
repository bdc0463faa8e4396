"""Principal-value Hilbert transform on a uniform grid and Kramers-Kronig
completion of retarded scattering self-energies."""

from __future__ import annotations

import numpy as np
from scipy import fft as sfft

KK_CONVENTIONS = ("full", "half")


def _kernel(n: int) -> np.ndarray:
    """PV weights F(m) = int (1 - |s|) / (m - s) ds over the hat function,
    for offsets m = -(n-1) .. n-1; F(m) = g(m+1) - 2 g(m) + g(m-1), g = x ln|x|."""
    m = np.arange(-(n - 1), n, dtype=float)

    def g(x):
        out = np.zeros_like(x)
        nz = x != 0
        out[nz] = x[nz] * np.log(np.abs(x[nz]))
        return out

    return g(m + 1) - 2 * g(m) + g(m - 1)


def hilbert_transform(f, axis: int = 0) -> np.ndarray:
    """H[f](E) = (1/pi) PV int f(E') / (E - E') dE' along ``axis``.

    ``f`` is sampled on a uniform grid and interpolated linearly, falling to
    zero one step beyond each end. The grid spacing cancels, so only the
    sample values are needed. Complex input is transformed entrywise.
    """
    f = np.moveaxis(np.asarray(f), axis, 0)
    n = f.shape[0]
    ker = _kernel(n) / np.pi
    size = sfft.next_fast_len(3 * n - 2)
    fk = sfft.fft(ker, size)
    ff = sfft.fft(f, size, axis=0)
    conv = sfft.ifft(ff * fk.reshape((-1,) + (1,) * (f.ndim - 1)), axis=0)[n - 1:2 * n - 1]
    if not np.iscomplexobj(f):
        conv = conv.real
    return np.moveaxis(conv, 0, axis)


def kk_completion(gamma, axis: int = 0, convention: str = "full") -> np.ndarray:
    """Retarded self-energy from a Hermitian broadening Gamma(E).

    Sigma = -(i/2) Gamma + c H[Gamma], with c = 1 in the ``full`` form (the default) and
    c = 1/2 in the ``half`` form (Re Sigma = H[Gamma / 2]). The matrix
    axes, if any, must be the last two.
    """
    if convention not in KK_CONVENTIONS:
        raise ValueError(f"convention must be one of {KK_CONVENTIONS}")
    gamma = np.asarray(gamma)
    scale = 1.0 if convention == "full" else 0.5
    real_part = scale * hilbert_transform(gamma, axis=axis)
    if gamma.ndim >= 2 and gamma.shape[-1] == gamma.shape[-2]:
        real_part = 0.5 * (real_part + np.swapaxes(real_part.conj(), -1, -2))
    return real_part - 0.5j * gamma
