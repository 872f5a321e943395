"""Fourier tools on periodic grids of [0, 2pi)^d.

Grid samples are stored with axis ``i`` holding the ``i``-th coordinate, so a
2-D field ``f`` has ``f[i, j] = f(x_i, y_j)`` and a 2-D vector field has shape
``(2, n, n)``.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi

# rows of a (points x modes) evaluation matrix per chunk
_CHUNK = 1 << 21


def grid(n: int) -> np.ndarray:
    """Equispaced nodes ``2 pi j / n``."""
    return TWO_PI * np.arange(n) / n


def grid2(n: int) -> np.ndarray:
    """Nodes of the ``n x n`` torus grid as an array of shape ``(n, n, 2)``."""
    x = grid(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return np.stack([X, Y], axis=-1)


def wavenumbers(n: int) -> np.ndarray:
    """Integer wavenumbers in FFT order."""
    return np.fft.fftfreq(n, 1.0 / n)


def _rk(n: int, order: int) -> np.ndarray:
    k = np.arange(n // 2 + 1, dtype=float)
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[-1] = 0.0
    return mult


def derivative(f: np.ndarray, axis: int = -1, order: int = 1) -> np.ndarray:
    """Spectral derivative of real periodic samples along ``axis``.

    Odd derivatives drop the Nyquist mode, which keeps the discrete operator
    skew-symmetric.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[axis]
    fh = np.fft.rfft(f, axis=axis)
    shape = [1] * f.ndim
    shape[axis] = n // 2 + 1
    fh = fh * _rk(n, order).reshape(shape)
    return np.fft.irfft(fh, n=n, axis=axis)


def gradient2(f: np.ndarray) -> np.ndarray:
    """Gradient of a scalar field on the 2-D grid, shape ``(2, n, n)``."""
    return np.stack([derivative(f, axis=0), derivative(f, axis=1)])


def divergence2(A: np.ndarray) -> np.ndarray:
    """Divergence of a vector field of shape ``(2, n, n)``."""
    return derivative(A[0], axis=0) + derivative(A[1], axis=1)


def gradient(f: np.ndarray) -> np.ndarray:
    """Gradient in 1-D (returns an array like ``f``) or 2-D (stacked)."""
    return derivative(f) if f.ndim == 1 else gradient2(f)


def divergence(A: np.ndarray) -> np.ndarray:
    """Divergence in 1-D (plain derivative) or 2-D."""
    return derivative(A) if A.ndim == 1 else divergence2(A)


def laplacian(f: np.ndarray) -> np.ndarray:
    if f.ndim == 1:
        return derivative(f, order=2)
    return derivative(f, axis=0, order=2) + derivative(f, axis=1, order=2)


def _ksq(shape) -> np.ndarray:
    if len(shape) == 1:
        return wavenumbers(shape[0]) ** 2
    kx = wavenumbers(shape[0])[:, None]
    ky = wavenumbers(shape[1])[None, :]
    return kx**2 + ky**2


def inverse_laplacian(f: np.ndarray) -> np.ndarray:
    """Mean-zero solution ``u`` of ``laplacian(u) = f - mean(f)``."""
    f = np.asarray(f, dtype=float)
    fh = np.fft.fftn(f)
    ksq = _ksq(f.shape)
    ksq.flat[0] = 1.0
    uh = -fh / ksq
    uh.flat[0] = 0.0
    return np.real(np.fft.ifftn(uh))


def antiderivative(f: np.ndarray) -> np.ndarray:
    """Mean-zero periodic antiderivative of the mean-free part of ``f`` (1-D)."""
    n = f.shape[-1]
    fh = np.fft.rfft(f, axis=-1)
    k = np.arange(n // 2 + 1, dtype=float)
    k[0] = 1.0
    gh = fh / (1j * k)
    gh[..., 0] = 0.0
    if n % 2 == 0:
        gh[..., -1] = 0.0
    return np.fft.irfft(gh, n=n, axis=-1)


def low_pass(f: np.ndarray, fraction: float = 2.0 / 3.0) -> np.ndarray:
    """Zero every Fourier mode with ``|k| > fraction * n / 2`` (each axis)."""
    fh = np.fft.fftn(f)
    for ax, n in enumerate(f.shape):
        k = np.abs(wavenumbers(n))
        mask = (k <= fraction * n / 2).astype(float)
        shape = [1] * f.ndim
        shape[ax] = n
        fh = fh * mask.reshape(shape)
    return np.real(np.fft.ifftn(fh))


def _coefficients_1d(values: np.ndarray):
    n = values.shape[-1]
    c = np.fft.rfft(values, axis=-1) / n
    k = np.arange(n // 2 + 1, dtype=float)
    weight = np.full(n // 2 + 1, 2.0)
    weight[0] = 1.0
    if n % 2 == 0:
        weight[-1] = 1.0
    return c * weight, k


def trig_interpolate(values: np.ndarray, points, order: int = 0) -> np.ndarray:
    """Evaluate the trigonometric interpolant of 1-D periodic samples.

    Parameters
    ----------
    values : ndarray, shape (n,)
        Samples on :func:`grid`.
    points : array_like
        Evaluation abscissae (any real numbers).
    order : int
        Derivative order of the interpolant to evaluate.

    Returns
    -------
    ndarray
        Interpolant values with the shape of ``points``.
    """
    points = np.asarray(points, dtype=float)
    flat = points.ravel()
    c, k = _coefficients_1d(np.asarray(values, dtype=float))
    c = c * (1j * k) ** order
    out = np.empty(flat.shape)
    step = max(1, _CHUNK // len(k))
    for s in range(0, flat.size, step):
        ph = np.exp(1j * np.outer(flat[s : s + step], k))
        out[s : s + step] = np.real(ph @ c)
    return out.reshape(points.shape)


def _split_nyquist(axis_freq: np.ndarray, C: np.ndarray, axis: int):
    """Return frequencies and coefficients with the Nyquist mode split in two."""
    n = C.shape[axis]
    if n % 2:
        return axis_freq, C
    idx = n // 2
    nyq = np.take(C, [idx], axis=axis) * 0.5
    C = C.copy()
    sl = [slice(None)] * C.ndim
    sl[axis] = idx
    C[tuple(sl)] = nyq.squeeze(axis)
    C = np.concatenate([C, nyq], axis=axis)
    freq = np.concatenate([axis_freq, [float(n // 2)]])
    return freq, C


def trig_interpolate2(values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant of 2-D samples at ``points`` (P, 2)."""
    n0, n1 = values.shape
    C = np.fft.fft2(values) / (n0 * n1)
    f0, C = _split_nyquist(wavenumbers(n0), C, 0)
    f1, C = _split_nyquist(wavenumbers(n1), C, 1)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.empty(len(points))
    step = max(1, _CHUNK // (len(f0) + len(f1)) // 4)
    for s in range(0, len(points), step):
        p = points[s : s + step]
        E0 = np.exp(1j * np.outer(p[:, 0], f0))
        E1 = np.exp(1j * np.outer(p[:, 1], f1))
        out[s : s + step] = np.real(np.sum((E0 @ C) * E1, axis=1))
    return out


def resample(values: np.ndarray, m: int) -> np.ndarray:
    """Spectral resampling of 1-D periodic samples onto a grid of ``m`` nodes."""
    n = values.shape[-1]
    if m == n:
        return np.array(values, dtype=float)
    fh = np.fft.rfft(values) / n
    out = np.zeros(m // 2 + 1, dtype=complex)
    keep = min(len(fh), len(out))
    out[:keep] = fh[:keep]
    if n % 2 == 0 and keep == n // 2 + 1 and m > n:
        out[n // 2] *= 0.5
    if m % 2 == 0 and m < n:
        out[-1] = 2.0 * out[-1].real
    return np.fft.irfft(out * m, n=m)


def invert_monotone(lifted: np.ndarray, targets, tol: float = 1e-14, max_iter: int = 50) -> np.ndarray:
    """Solve ``phi(x) = y`` for a monotone circle map given on the grid.

    ``lifted`` holds ``phi(x_j)`` with ``phi(x + 2 pi) = phi(x) + 2 pi``; the map
    is represented by the trigonometric interpolant of its displacement.
    """
    lifted = np.asarray(lifted, dtype=float)
    n = lifted.size
    x = grid(n)
    disp = lifted - x
    y = np.asarray(targets, dtype=float)
    # periodic linear interpolation for the starting guess
    xs = np.concatenate([x - TWO_PI, x, x + TWO_PI])
    ys = np.concatenate([lifted - TWO_PI, lifted, lifted + TWO_PI])
    shift = np.floor((y - lifted[0]) / TWO_PI)
    yr = y - shift * TWO_PI
    guess = np.interp(yr, ys, xs)
    c, k = _coefficients_1d(disp)
    ck = c * (1j * k)
    z = guess.ravel().copy()
    yt = yr.ravel()
    step = max(1, _CHUNK // len(k))
    for s in range(0, z.size, step):
        zs, ys_ = z[s : s + step], yt[s : s + step]
        for _ in range(max_iter):
            ph = np.exp(1j * np.outer(zs, k))
            res = zs + np.real(ph @ c) - ys_
            dz = res / (1.0 + np.real(ph @ ck))
            zs -= dz
            # stop on small steps, or on residuals at rounding level where phi' is tiny
            if np.all((np.abs(dz) < tol) | (np.abs(res) < 16 * np.finfo(float).eps * (TWO_PI + np.abs(ys_)))):
                break
        z[s : s + step] = zs
    return (z + (shift.ravel() * TWO_PI)).reshape(y.shape)
