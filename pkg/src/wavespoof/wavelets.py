"""Mexican-hat CWT filterbank and the two-level log wavelet scattering transform."""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import (
    ValidationError,
    check_int,
    check_positive,
    check_signal,
    check_waveforms,
)

_MEXH_NORM = 2.0 / (math.pi ** 0.25 * math.sqrt(3.0))

# Peak of |response| for the 1/sqrt(s)-normalised kernel psi(t/s)/sqrt(s):
# maximise sqrt(w) (1/2 + w^2/4) exp(-w^2/4)  =>  w^4 - 3 w^2 - 2 = 0.
MEXH_CENTER_FREQ = math.sqrt((3.0 + math.sqrt(17.0)) / 2.0) / (2.0 * math.pi)


def mexican_hat(t, sigma=1.0):
    """``2 / (pi**(1/4) sqrt(3 sigma)) (t**2/sigma**2 - 1) exp(-t**2/sigma**2)``.

    The central lobe is negative and the Gaussian uses ``t**2 / sigma**2``
    without the usual factor 1/2, exactly as the layer's gradient formulas
    assume.
    """
    sigma = check_positive(sigma, "sigma")
    t = np.asarray(t, dtype=np.float64)
    u2 = (t / sigma) ** 2
    out = 2.0 / (math.pi ** 0.25 * math.sqrt(3.0 * sigma)) * (u2 - 1.0) * np.exp(-u2)
    return out.item() if out.ndim == 0 else out


def scale_to_freq(s, fc=MEXH_CENTER_FREQ, sample_rate=1.0):
    """Pseudo-frequency in Hz of scale ``s`` for a wavelet with centre frequency ``fc`` (cycles/sample)."""
    s = np.asarray(s, dtype=np.float64)
    if np.any(s <= 0):
        raise ValidationError("scale must be > 0")
    f = fc * sample_rate / s
    return f.item() if f.ndim == 0 else f


def freq_to_scale(f, fc=MEXH_CENTER_FREQ, sample_rate=1.0):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f <= 0):
        raise ValidationError("frequency must be > 0")
    s = fc * sample_rate / f
    return s.item() if s.ndim == 0 else s


@dataclass(frozen=True)
class ScaleGrid:
    s0: float
    dj: float
    n_step: float
    n_samples: int
    scales: np.ndarray

    def __len__(self):
        return self.scales.size


def scale_grid(s0=2.0, dj=0.125, n_samples=3200, n_step=0.1):
    """Dyadic scale ladder ``s_j = s0 * 2**(j * dj)`` for ``j = 0 .. floor(J)``.

    ``J = log2(n_samples * n_step / s0) / dj`` sets the largest scale.
    """
    s0 = check_positive(s0, "s0")
    dj = check_positive(dj, "dj")
    n_step = check_positive(n_step, "n_step")
    n_samples = check_int(n_samples, "n_samples", minimum=2)
    ratio = n_samples * n_step / s0
    if ratio <= 1.0:
        raise ValidationError(
            f"n_samples * n_step = {n_samples * n_step} must exceed s0 = {s0}"
        )
    J = math.log2(ratio) / dj
    n_scales = int(math.floor(J + 1e-9)) + 1
    scales = s0 * 2.0 ** (np.arange(n_scales) * dj)
    scales.setflags(write=False)
    return ScaleGrid(s0, dj, n_step, n_samples, scales)


def cwt_kernel(s, truncation=5.0):
    """Sampled ``psi(t / s) / sqrt(s)`` on ``t = -ceil(truncation*s) .. ceil(truncation*s)``."""
    s = check_positive(s, "scale")
    half = int(math.ceil(truncation * s))
    t = np.arange(-half, half + 1, dtype=np.float64)
    k = mexican_hat(t / s) / math.sqrt(s)
    if not np.any(np.abs(k) > 0):
        raise ValidationError(f"kernel for scale {s} is identically zero")
    return k


def _same_correlate(x, kernel):
    # out[m] = sum_t kernel[h + t] x[m + t], zero outside the signal
    h = (kernel.size - 1) // 2
    return np.convolve(x, kernel[::-1], mode="full")[h:h + x.size]


def cwt(x, scales, truncation=5.0):
    """Discretised CWT, one row per scale, same length as ``x`` (zero-padded edges).

    Row ``j`` is ``sum_n psi((n - m) / s_j) x[n] / sqrt(s_j)`` for every
    output position ``m``.

    Parameters
    ----------
    x : array-like of shape (n_samples,)
    scales : ScaleGrid or array-like of positive scales
    truncation : float
        Kernel half-support in units of the scale.
    """
    if isinstance(scales, ScaleGrid):
        scales = scales.scales
    scales = np.atleast_1d(np.asarray(scales, dtype=np.float64))
    if scales.size == 0 or np.any(scales <= 0):
        raise ValidationError("scales must be a non-empty vector of positive values")
    kernels = [cwt_kernel(s, truncation) for s in scales]
    x = check_signal(x, min_length=min(k.size for k in kernels))
    return np.stack([_same_correlate(x, k) for k in kernels])


def cwt_features(x, scales, frame_len=400, hop=160, truncation=5.0, eps=1e-10):
    """Frame-level log mean modulus of the scalogram, shape (n_frames, n_scales)."""
    coeffs = np.abs(cwt(x, scales, truncation))
    n = (coeffs.shape[1] - frame_len) // hop + 1
    if n < 1:
        raise ValidationError(f"signal shorter than one frame of {frame_len} samples")
    windows = np.lib.stride_tricks.sliding_window_view(coeffs, frame_len, axis=1)[:, ::hop][:, :n]
    return np.log(windows.mean(axis=-1).T + eps)


# ---------------------------------------------------------------------------
# Scattering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScatteringConfig:
    n1: int = 12
    n2: int = 1
    q1: int = 8
    q2: int = 8
    avg_len: int = 256
    eps: float = 1e-6
    xi_max: float = 0.35

    @property
    def n_paths(self):
        return self.n1 + self.n1 * self.n2


@lru_cache(maxsize=32)
def _gabor_bank(n, n_filters, q, xi_max):
    """Analytic Gaussian band-pass filters on the ``n``-point DFT grid.

    Filter ``j`` is the mother dilated by ``2**(j/q)``: centre
    ``xi_max * 2**(-j/q)`` cycles/sample and bandwidth shrinking in the same
    ratio, so neighbouring filters cross at half height.
    """
    f = np.fft.fftfreq(n)
    fwhm_ratio = 1.0 - 2.0 ** (-1.0 / q)
    bank = np.zeros((n_filters, n))
    for j in range(n_filters):
        xi = xi_max * 2.0 ** (-j / q)
        sigma = xi * fwhm_ratio / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        bank[j] = np.where(f >= 0, np.exp(-0.5 * ((f - xi) / sigma) ** 2), 0.0)
    bank.setflags(write=False)
    return bank


def _modulus_bank(x, bank):
    # circular convolution of every row of x (..., n) with every filter -> (..., n_filters, n)
    X = np.fft.fft(x, axis=-1)
    return np.abs(np.fft.ifft(X[..., None, :] * bank, axis=-1))


def _frame_average(p, m):
    n_frames = p.shape[-1] // m
    return p[..., :n_frames * m].reshape(p.shape[:-1] + (n_frames, m)).mean(axis=-1)


def scattering(x, cfg=None):
    """Two-level log scattering coefficients, shape (n1 + n1*n2, n_frames).

    Level-1 scalograms ``|psi_j * x|`` and level-2 scalograms
    ``|psi_k * |psi_j * x||`` are averaged over non-overlapping windows of
    ``avg_len`` samples; the zeroth-order (low-pass) path is dropped and
    ``log(S + eps)`` is returned. Convolutions are circular.
    """
    cfg = cfg or ScatteringConfig()
    for name in ("n1", "n2", "q1", "q2", "avg_len"):
        check_int(getattr(cfg, name), name, minimum=1)
    check_positive(cfg.eps, "eps")
    x = check_signal(x)
    if cfg.avg_len > x.size:
        raise ValidationError(
            f"avg_len={cfg.avg_len} exceeds signal length {x.size}"
        )
    n = x.size
    p1 = _modulus_bank(x, _gabor_bank(n, cfg.n1, cfg.q1, cfg.xi_max))
    p2 = _modulus_bank(p1, _gabor_bank(n, cfg.n2, cfg.q2, cfg.xi_max))
    s1 = _frame_average(p1, cfg.avg_len)
    s2 = _frame_average(p2, cfg.avg_len).reshape(cfg.n1 * cfg.n2, -1)
    return np.log(np.vstack([s1, s2]) + cfg.eps)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

class CWTFeatures(TransformerMixin, BaseEstimator):
    """Frame-level log CWT magnitudes on a fixed dyadic scale grid.

    The grid is built from ``s0``, ``dj`` and ``n_step`` for signals of
    ``grid_samples`` samples; it is fixed at ``fit`` time.
    """

    def __init__(self, s0=2.0, dj=0.125, n_step=0.1, grid_samples=3200,
                 frame_len=400, hop=160, truncation=5.0):
        self.s0 = s0
        self.dj = dj
        self.n_step = n_step
        self.grid_samples = grid_samples
        self.frame_len = frame_len
        self.hop = hop
        self.truncation = truncation

    def fit(self, X=None, y=None):
        self.grid_ = scale_grid(self.s0, self.dj, self.grid_samples, self.n_step)
        return self

    def transform(self, X):
        grid = getattr(self, "grid_", None) or scale_grid(
            self.s0, self.dj, self.grid_samples, self.n_step)
        return [cwt_features(x, grid, self.frame_len, self.hop, self.truncation)
                for x in check_waveforms(X)]


class Scattering(TransformerMixin, BaseEstimator):
    """Log scattering features transposed to (n_frames, n_paths) per utterance."""

    def __init__(self, n1=12, n2=1, q1=8, q2=8, avg_len=256, eps=1e-6, xi_max=0.35):
        self.n1 = n1
        self.n2 = n2
        self.q1 = q1
        self.q2 = q2
        self.avg_len = avg_len
        self.eps = eps
        self.xi_max = xi_max

    def fit(self, X=None, y=None):
        self.n_features_out_ = ScatteringConfig(self.n1, self.n2).n_paths
        return self

    def transform(self, X):
        cfg = ScatteringConfig(self.n1, self.n2, self.q1, self.q2, self.avg_len,
                               self.eps, self.xi_max)
        return [scattering(x, cfg).T for x in check_waveforms(X)]
