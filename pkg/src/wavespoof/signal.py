"""Low-level signal operations used by every front-end.

All functions are pure and operate in float64.
"""

import math

import numpy as np
from scipy.fft import dct, idct

from ._validation import (
    ValidationError,
    check_features,
    check_int,
    check_positive,
    check_signal,
    is_power_of_two,
)

LOG_FLOOR = 1e-10


def preemphasize(x, alpha=0.97):
    """First-order high-pass ``y[t] = x[t] - alpha * x[t-1]`` with ``y[0] = x[0]``."""
    x = check_signal(x)
    if not (0.0 <= alpha < 1.0):
        raise ValidationError(f"alpha must lie in [0, 1), got {alpha!r}")
    y = x.copy()
    y[1:] -= alpha * x[:-1]
    return y


def frame_params(sample_rate, frame_ms, hop_ms):
    """Frame length and hop in samples (round half up)."""
    sample_rate = check_int(sample_rate, "sample_rate", minimum=1)
    frame_ms = check_positive(frame_ms, "frame_ms")
    hop_ms = check_positive(hop_ms, "hop_ms")
    frame_len = int(math.floor(frame_ms * sample_rate / 1000.0 + 0.5))
    hop = int(math.floor(hop_ms * sample_rate / 1000.0 + 0.5))
    if frame_len < 1 or hop < 1:
        raise ValidationError(
            f"frame_ms={frame_ms}, hop_ms={hop_ms} give less than one sample at {sample_rate} Hz"
        )
    return frame_len, hop


def n_frames_for(n_samples, frame_len, hop):
    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // hop + 1


def frame(x, sample_rate, frame_ms=25.0, hop_ms=10.0):
    """Split ``x`` into overlapping frames, dropping the trailing partial frame.

    Returns
    -------
    frames : ndarray of shape (n_frames, frame_len)
        ``n_frames = (len(x) - frame_len) // hop + 1``.
    """
    x = check_signal(x)
    frame_len, hop = frame_params(sample_rate, frame_ms, hop_ms)
    n = n_frames_for(x.size, frame_len, hop)
    if n == 0:
        raise ValidationError(
            f"signal of {x.size} samples is shorter than one frame ({frame_len} samples)"
        )
    windows = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop]
    return np.array(windows[:n])


def hamming(length):
    """Symmetric Hamming window ``0.54 - 0.46 cos(2 pi n / (L - 1))``."""
    length = check_int(length, "length")
    if length < 2:
        raise ValidationError(f"window length must be >= 2, got {length}")
    n = np.arange(length)
    w = 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (length - 1))
    # mirror the first half so the window is symmetric to the last bit
    w[length - length // 2:] = w[: length // 2][::-1]
    return w


def power_spectrum(frames, nfft=512):
    """One-sided power spectrum ``|DFT_nfft(frame)|**2 / nfft`` along the last axis.

    ``frames`` may be a single frame or a (n_frames, frame_len) matrix; the
    frame is zero-padded to ``nfft`` points. Output has ``nfft // 2 + 1``
    bins.
    """
    frames = np.asarray(frames, dtype=np.float64)
    nfft = check_int(nfft, "nfft", minimum=1)
    if not is_power_of_two(nfft):
        raise ValidationError(f"nfft must be a power of two, got {nfft}")
    if frames.shape[-1] > nfft:
        raise ValidationError(
            f"frame length {frames.shape[-1]} exceeds nfft={nfft}"
        )
    spec = np.fft.rfft(frames, n=nfft, axis=-1)
    return (spec.real ** 2 + spec.imag ** 2) / nfft


def dct2(v, n_out=None):
    """Orthonormal type-II DCT along the last axis, truncated to ``n_out`` coefficients."""
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[-1]
    if n_out is None:
        n_out = n
    n_out = check_int(n_out, "n_out")
    if not 1 <= n_out <= n:
        raise ValidationError(f"n_out must lie in [1, {n}], got {n_out}")
    return dct(v, type=2, norm="ortho", axis=-1)[..., :n_out]


def idct2(c):
    """Inverse of :func:`dct2` for full-length coefficient vectors."""
    return idct(np.asarray(c, dtype=np.float64), type=2, norm="ortho", axis=-1)


def delta(features):
    """First difference along time; the first frame's delta is zero.

    Apply twice for acceleration (double-delta) coefficients.
    """
    F = check_features(features)
    D = np.zeros_like(F)
    D[1:] = F[1:] - F[:-1]
    return D


def cmvn(features):
    """Per-dimension mean/variance normalisation over the utterance.

    Uses the population variance; constant dimensions map to zeros.
    """
    F = check_features(features)
    if F.shape[0] < 2:
        raise ValidationError("cmvn needs at least 2 frames")
    mu = F.mean(axis=0)
    centered = F - mu
    std = np.sqrt(np.mean(centered ** 2, axis=0))
    out = np.zeros_like(F)
    nz = (np.ptp(F, axis=0) > 0) & (std > 0)  # rounding in the mean must not rescale a constant column
    out[:, nz] = centered[:, nz] / std[nz]
    return out


def frame_log_energy(frames):
    frames = np.asarray(frames, dtype=np.float64)
    return np.log(np.sum(frames ** 2, axis=-1) + LOG_FLOOR)


def energy_vad(frames, threshold_db=40.0):
    """Boolean keep-mask from a max-relative log-energy gate.

    A frame is kept when its natural-log energy is within
    ``threshold_db / 10 * ln(10)`` of the loudest frame. The loudest frame is
    always kept.
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    threshold_db = check_positive(threshold_db, "threshold_db", strict=False)
    log_e = frame_log_energy(frames)
    gate = log_e.max() - threshold_db / 10.0 * np.log(10.0)
    return log_e >= gate


def tke(frame):
    """Teager-Kaiser energy ``s[t]**2 - s[t-1] s[t+1]`` along the last axis.

    The two endpoints copy their nearest interior value so the length is
    unchanged.
    """
    s = np.asarray(frame, dtype=np.float64)
    if s.shape[-1] < 3:
        raise ValidationError(f"TKE needs frames of at least 3 samples, got {s.shape[-1]}")
    out = np.empty_like(s)
    out[..., 1:-1] = s[..., 1:-1] ** 2 - s[..., :-2] * s[..., 2:]
    out[..., 0] = out[..., 1]
    out[..., -1] = out[..., -2]
    return out
