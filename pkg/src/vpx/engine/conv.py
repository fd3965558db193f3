"""N-d convolution (cross-correlation, no kernel flip) with exact gradients.

Two interchangeable routes implement the same contract:

* ``direct``: im2col + GEMM, any stride and padding.
* ``fft``: zero-padded real FFTs with per-frequency channel mixing; stride 1
  only. Used automatically for large kernels (the 5x5x5 / 7x7x7 V-Net layers),
  where it needs a fraction of the direct route's arithmetic.

Both routes are deterministic; they agree to float32 rounding, not bitwise.
"""
from __future__ import annotations

from contextlib import contextmanager
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .. import _threads
from . import backend
from .spec import LayerSpec, ShapeError

FFT_MIN_TAPS = 25
_method = "auto"


def set_method(method: str) -> None:
    global _method
    if method not in ("auto", "direct", "fft"):
        raise ValueError(f"unknown conv method {method!r}")
    _method = method


@contextmanager
def method(name: str):
    previous = _method
    set_method(name)
    try:
        yield
    finally:
        set_method(previous)


def output_extent(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _check(x, spec: LayerSpec, weights, bias=None) -> tuple[int, ...]:
    r = spec.rank
    if x.ndim != r + 2:
        raise ShapeError(f"conv input must have rank {r + 2} (N, C, spatial...), got shape {x.shape}")
    if x.shape[0] < 1:
        raise ShapeError("conv input axis 0 (batch) is empty")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"conv input axis 1 (channels) has {x.shape[1]}, expected {spec.in_channels}")
    want = (spec.out_channels, spec.in_channels) + spec.kernel
    if weights.shape != want:
        for axis, (got, exp) in enumerate(zip(weights.shape, want)):
            if got != exp:
                raise ShapeError(f"conv weights axis {axis} has {got}, expected {exp} (weights shape {weights.shape})")
        raise ShapeError(f"conv weights have shape {weights.shape}, expected {want}")
    if bias is not None and bias.shape != (spec.out_channels,):
        raise ShapeError(f"conv bias axis 0 has {bias.shape}, expected ({spec.out_channels},)")
    out = []
    for i in range(r):
        o = output_extent(x.shape[2 + i], spec.kernel[i], spec.stride[i], spec.padding[i])
        if o < 1:
            raise ShapeError(
                f"conv input axis {2 + i} (extent {x.shape[2 + i]}) too small for kernel {spec.kernel[i]} "
                f"with padding {spec.padding[i]}"
            )
        out.append(o)
    return tuple(out)


def _route(spec: LayerSpec) -> str:
    if _method == "direct" or any(s != 1 for s in spec.stride):
        return "direct"
    if _method == "fft":
        return "fft"
    return "fft" if int(np.prod(spec.kernel)) >= FFT_MIN_TAPS else "direct"


def conv_forward(x: np.ndarray, spec: LayerSpec, weights: np.ndarray, bias: np.ndarray | None,
                 cache: dict | None = None) -> np.ndarray:
    """Cross-correlate ``x`` (N, C_in, *S) with ``weights`` (C_out, C_in, *k).

    Output extent per axis is ``floor((S + 2*pad - k) / stride) + 1``.
    Pass a dict as ``cache`` to keep intermediates for :func:`conv_backward`.
    """
    out = _check(x, spec, weights, bias)
    if _route(spec) == "fft":
        y = _fft_forward(x, spec, weights, out, cache)
    else:
        y = _direct_forward(x, spec, weights, out, cache)
    if bias is not None:
        y += bias.reshape((1, -1) + (1,) * spec.rank)
    return y


def conv_backward(grad_out: np.ndarray, cached_input: np.ndarray, spec: LayerSpec, weights: np.ndarray,
                  cache: dict | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients ``(grad_input, grad_weights, grad_bias)`` of :func:`conv_forward`."""
    out = _check(cached_input, spec, weights)
    want = (cached_input.shape[0], spec.out_channels) + out
    if grad_out.shape != want:
        axis = next((i for i, (a, b) in enumerate(zip(grad_out.shape, want)) if a != b), len(want))
        raise ShapeError(f"conv grad_out axis {axis} mismatch: got shape {grad_out.shape}, expected {want}")
    cache = {} if cache is None else cache
    gb = grad_out.sum(axis=(0,) + tuple(range(2, 2 + spec.rank)))
    if cache.get("route", _route(spec)) == "fft":
        gx, gw = _fft_backward(grad_out, cached_input, spec, weights, out, cache)
    else:
        gx, gw = _direct_backward(grad_out, cached_input, spec, weights, out, cache)
    return gx, gw, gb.astype(weights.dtype, copy=False)


# -- direct route ---------------------------------------------------------

def _lift(t: tuple[int, ...], fill: int) -> tuple[int, ...]:
    return (fill,) * (3 - len(t)) + tuple(t)


def _as5(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[:2] + (1,) * (5 - x.ndim) + x.shape[2:])


def _padded(x: np.ndarray, spec: LayerSpec) -> np.ndarray:
    pad = [(0, 0), (0, 0)] + [(p, p) for p in spec.padding]
    xp = np.pad(x, pad) if any(spec.padding) else x
    return np.ascontiguousarray(_as5(xp))


def _direct_forward(x, spec, weights, out, cache):
    N, C = x.shape[:2]
    xp = _padded(x, spec)
    k5, s5, o5 = _lift(spec.kernel, 1), _lift(spec.stride, 1), _lift(out, 1)
    V = int(np.prod(out))
    cols = np.empty((N * V, C * int(np.prod(spec.kernel))), dtype=x.dtype)
    backend.kernels.im2col(xp, k5, s5, o5, cols)
    y = cols @ weights.reshape(spec.out_channels, -1).T
    y = np.ascontiguousarray(np.moveaxis(y.reshape((N,) + out + (spec.out_channels,)), -1, 1))
    if cache is not None:
        cache["route"] = "direct"
        cache["cols"] = cols
    return y


def _direct_backward(grad_out, x, spec, weights, out, cache):
    N, C = x.shape[:2]
    Co = spec.out_channels
    k5, s5, o5 = _lift(spec.kernel, 1), _lift(spec.stride, 1), _lift(out, 1)
    cols = cache.get("cols")
    if cols is None:
        cols = np.empty((N * int(np.prod(out)), C * int(np.prod(spec.kernel))), dtype=x.dtype)
        backend.kernels.im2col(_padded(x, spec), k5, s5, o5, cols)
    gm = np.ascontiguousarray(np.moveaxis(grad_out, 1, -1)).reshape(-1, Co)
    gw = (gm.T @ cols).reshape(weights.shape)
    gcols = gm @ weights.reshape(Co, -1)
    padded_shape = tuple(s + 2 * p for s, p in zip(x.shape[2:], spec.padding))
    gxp = np.zeros((N, C) + _lift(padded_shape, 1), dtype=x.dtype)
    backend.kernels.col2im(gcols, k5, s5, o5, gxp)
    gxp = gxp.reshape((N, C) + padded_shape)
    inner = tuple(slice(p, p + s) for p, s in zip(spec.padding, x.shape[2:]))
    gx = np.ascontiguousarray(gxp[(slice(None), slice(None)) + inner])
    return gx, gw


# -- FFT route ------------------------------------------------------------
#
# With per-axis transform length L >= S + pad, circular correlation of the
# unpadded input with the zero-extended kernel equals the padded linear
# correlation at offsets (o - pad) mod L; no wrap-around reaches valid output.
# Spectra are kept channels-last, (freq..., batch, channel), so the channel
# mixing is one contiguous batched matmul over frequencies.

def _lengths(x_shape, spec, out):
    return tuple(
        sfft.next_fast_len(max(s + p, k, o), real=True)
        for s, p, k, o in zip(x_shape[2:], spec.padding, spec.kernel, out)
    )


def _channels_last(a: np.ndarray) -> np.ndarray:
    """(A, B, *S) -> contiguous (*S, A, B)."""
    r = a.ndim - 2
    return np.ascontiguousarray(a.transpose(tuple(range(2, 2 + r)) + (0, 1)))


def _channels_first(a: np.ndarray) -> np.ndarray:
    """(*S, A, B) -> contiguous (A, B, *S)."""
    r = a.ndim - 2
    return np.ascontiguousarray(a.transpose((r, r + 1) + tuple(range(r))))


def _spectrum(a: np.ndarray, L: tuple[int, ...]) -> np.ndarray:
    """Zero-extended real FFT over the leading spatial axes of ``(*S, A, B)``.

    Axes are transformed last-first so rows that are still all zero are never
    touched. Returns ``(prod(F), A, B)``.
    """
    r = len(L)
    workers = _threads.num_threads()
    t = sfft.rfft(a, n=L[-1], axis=r - 1, workers=workers)
    for i in range(r - 2, -1, -1):
        t = sfft.fft(t, n=L[i], axis=i, workers=workers)
    return t.reshape((-1,) + a.shape[r:])


def _inverse(t: np.ndarray, L: tuple[int, ...], keep: tuple[int, ...]) -> np.ndarray:
    """``irfftn`` over the leading axes of ``(prod(F), A, B)``, truncated to ``keep``."""
    r = len(L)
    workers = _threads.num_threads()
    t = t.reshape(tuple(L[:-1]) + (L[-1] // 2 + 1,) + t.shape[1:])
    for i in range(r - 1):
        t = sfft.ifft(t, n=L[i], axis=i, workers=workers)
        t = t[(slice(None),) * i + (slice(0, keep[i]),)]
    return sfft.irfft(t, n=L[-1], axis=r - 1, workers=workers)[(slice(None),) * (r - 1) + (slice(0, keep[-1]),)]


def _offsets(out, pad, L):
    return [(np.arange(o) - p) % l for o, p, l in zip(out, pad, L)]


@lru_cache(maxsize=64)
def _dft_matrix(n: int, length: int, inverse: bool = False, half: bool = False,
                dtype=np.complex64) -> np.ndarray:
    """Dense DFT rows for a length-``n`` signal zero-extended to ``length``.

    Forward: ``(F, n)``. Inverse (``inverse=True``): ``(n, F)`` mapping a
    spectrum back to its first ``n`` samples, scaled by ``1/length``.
    ``half`` keeps the non-negative frequencies of a real transform.
    """
    F = length // 2 + 1 if half else length
    f = np.arange(F)[:, None]
    t = np.arange(n)[None, :]
    m = np.exp(-2j * np.pi * f * t / length)
    if inverse:
        m = np.conj(m).T / length
        if half:
            # Hermitian weights: interior frequencies stand for their mirror
            w = np.full(F, 2.0)
            w[0] = 1.0
            if length % 2 == 0:
                w[-1] = 1.0
            m = m * w
    return m.astype(dtype)


def _complex(dtype) -> type:
    return np.complex128 if np.dtype(dtype) == np.float64 else np.complex64


def _small_spectrum(a: np.ndarray, L: tuple[int, ...], conj: bool = False) -> np.ndarray:
    """Same as :func:`_spectrum` for short signals, via dense DFT matrices (GEMMs).

    ``conj=True`` returns the complex conjugate (``a`` is real).
    """
    sign = -1.0 if conj else 1.0
    r = len(L)
    S = a.shape[:r]
    C = int(np.prod(a.shape[r:]))
    cdt = _complex(a.dtype)
    m = _dft_matrix(S[-1], L[-1], half=True, dtype=cdt)
    t = a.reshape(-1, S[-1], C)
    t = np.matmul(m.real, t) + (1j * sign) * np.matmul(m.imag, t)
    t = t.astype(cdt, copy=False)
    shape = list(S[:-1]) + [m.shape[0]]
    for i in range(r - 2, -1, -1):
        pre = int(np.prod(shape[:i]))
        m = _dft_matrix(S[i], L[i], dtype=cdt)
        t = np.matmul(np.conj(m) if conj else m, t.reshape(pre, S[i], -1))
        shape[i] = L[i]
    return t.reshape((-1,) + a.shape[r:])


def _small_inverse(t: np.ndarray, L: tuple[int, ...], keep: tuple[int, ...]) -> np.ndarray:
    """Same as :func:`_inverse` when ``keep`` is short, via dense DFT matrices."""
    r = len(L)
    rest = t.shape[1:]
    cdt = np.complex128 if t.dtype == np.complex128 else np.complex64
    shape = list(L[:-1]) + [L[-1] // 2 + 1]
    for i in range(r - 1):
        pre = int(np.prod(shape[:i]))
        t = np.matmul(_dft_matrix(keep[i], L[i], inverse=True, dtype=cdt), t.reshape(pre, L[i], -1))
        shape[i] = keep[i]
    m = _dft_matrix(keep[-1], L[-1], inverse=True, half=True, dtype=cdt)
    t = t.reshape(-1, shape[-1], int(np.prod(rest)))
    out = np.matmul(m.real, np.ascontiguousarray(t.real)) - np.matmul(m.imag, np.ascontiguousarray(t.imag))
    return out.reshape(tuple(keep) + rest)


def _weight_spectrum(weights, L):
    # (Co, Ci, *k) -> conj spectrum laid out (F, Ci, Co)
    w = _channels_last(weights.transpose((1, 0) + tuple(range(2, weights.ndim))))
    return _small_spectrum(w, L, conj=True)


def _fft_forward(x, spec, weights, out, cache):
    L = _lengths(x.shape, spec, out)
    X = _spectrum(_channels_last(x), L)                 # (F, N, Ci)
    Wc = _weight_spectrum(weights, L)                   # (F, Ci, Co)
    Y = np.matmul(X, Wc)                                # (F, N, Co)
    full = _inverse(Y, L, L)
    idx = _offsets(out, spec.padding, L)
    y = _channels_first(full[np.ix_(*idx)])
    if cache is not None:
        cache["route"] = "fft"
        cache["X"] = X
        cache["W"] = Wc
    return y.astype(x.dtype, copy=False)


def _fft_backward(grad_out, x, spec, weights, out, cache):
    L = _lengths(x.shape, spec, out)
    X = cache.get("X")
    if X is None:
        X = _spectrum(_channels_last(x), L)
    Wc = cache.get("W")
    if Wc is None:
        Wc = _weight_spectrum(weights, L)
    idx = _offsets(out, spec.padding, L)
    ge = np.zeros(L + grad_out.shape[:2], dtype=grad_out.dtype)
    ge[np.ix_(*idx)] = _channels_last(grad_out)
    G = _spectrum(ge, L)                                # (F, N, Co)
    GX = np.matmul(G, np.conj(Wc).transpose(0, 2, 1))   # (F, N, Ci)
    gx = _channels_first(_inverse(GX, L, x.shape[2:]))
    GW = np.matmul(X.transpose(0, 2, 1), np.conj(G))    # (F, Ci, Co)
    gw = _small_inverse(GW, L, spec.kernel)             # (*k, Ci, Co)
    r = spec.rank
    gw = np.ascontiguousarray(gw.transpose((r + 1, r) + tuple(range(r))))
    return gx.astype(x.dtype, copy=False), gw.astype(weights.dtype, copy=False)
