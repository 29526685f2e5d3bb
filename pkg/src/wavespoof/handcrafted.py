"""Cepstral (MFCC) and wavelet-packet (MWPC) feature pipelines."""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import signal as sig
from ._validation import (
    ValidationError,
    check_features,
    check_int,
    check_signal,
    check_waveforms,
    is_power_of_two,
)

# Daubechies-4 decomposition low-pass filter (8 taps, orthonormal), from the
# minimum-phase spectral factorisation evaluated at 40 digits.
DB4_DEC_LO = np.array([
    -0.010597401785069032105,
    0.032883011666885199735,
    0.030841381835560763627,
    -0.18703481171909308408,
    -0.027983769416859854211,
    0.63088076792985890788,
    0.71484657055291564709,
    0.23037781330889650086,
])

_WAVELETS = {"db4": DB4_DEC_LO}


def wavelet_filters(name):
    """Return the (low-pass, high-pass) orthonormal analysis pair for ``name``."""
    try:
        h = _WAVELETS[name]
    except KeyError:
        raise ValidationError(
            f"unknown wavelet {name!r}; available: {sorted(_WAVELETS)}"
        ) from None
    L = h.size
    g = ((-1.0) ** np.arange(L)) * h[::-1]
    return h.copy(), g


# ---------------------------------------------------------------------------
# Mel scale
# ---------------------------------------------------------------------------

def hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValidationError("frequency must be >= 0 Hz")
    m = 2595.0 * np.log10(1.0 + f / 700.0)
    return m.item() if m.ndim == 0 else m


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ValidationError("mel value must be >= 0")
    f = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return f.item() if f.ndim == 0 else f


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray
    bins: np.ndarray
    n_filt: int
    sample_rate: int
    nfft: int


def mel_filterbank(n_filt=20, nfft=512, sample_rate=16000):
    """Triangular mel filterbank over the ``nfft // 2 + 1`` DFT bins.

    ``n_filt + 2`` points equally spaced in mel between 0 and the Nyquist
    frequency are mapped to bins ``floor((nfft + 1) * f / fs)``; filter ``m``
    rises linearly from bin ``f(m-1)`` to a peak of 1 at ``f(m)`` and falls
    back to 0 at ``f(m+1)``.
    """
    n_filt = check_int(n_filt, "n_filt", minimum=1)
    nfft = check_int(nfft, "nfft", minimum=2)
    sample_rate = check_int(sample_rate, "sample_rate", minimum=1)
    if not is_power_of_two(nfft):
        raise ValidationError(f"nfft must be a power of two, got {nfft}")
    mel_pts = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_filt + 2)
    bins = np.floor((nfft + 1) * mel_to_hz(mel_pts) / sample_rate).astype(int)
    if np.any(np.diff(bins) <= 0):
        raise ValidationError(
            f"n_filt={n_filt} is too large for nfft={nfft} at {sample_rate} Hz "
            "(duplicate filter bin centres)"
        )
    k = np.arange(nfft // 2 + 1, dtype=np.float64)
    weights = np.zeros((n_filt, k.size))
    for m in range(1, n_filt + 1):
        lo, c, hi = bins[m - 1], bins[m], bins[m + 1]
        rise = (k - lo) / (c - lo)
        fall = (hi - k) / (hi - c)
        weights[m - 1] = np.clip(np.minimum(rise, fall), 0.0, None)
    weights.setflags(write=False)
    bins.setflags(write=False)
    return MelFilterbank(weights, bins, n_filt, sample_rate, nfft)


# ---------------------------------------------------------------------------
# MFCC
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MfccConfig:
    alpha: float = 0.97
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    nfft: int = 512
    n_filt: int = 20
    n_ceps: int = 20
    use_vad: bool = True
    vad_threshold_db: float = 40.0
    use_cmvn: bool = True
    dynamic_only: bool = True

    @property
    def dim(self):
        return 2 * self.n_ceps if self.dynamic_only else 3 * self.n_ceps


def mfcc(x, sample_rate=16000, cfg=None):
    """MFCC + delta + double-delta features for one utterance.

    Static coefficient 0 is replaced by the log frame energy. With
    ``cfg.dynamic_only`` only the delta and double-delta blocks are returned.
    """
    cfg = cfg or MfccConfig()
    if cfg.n_ceps > cfg.n_filt:
        raise ValidationError(f"n_ceps={cfg.n_ceps} exceeds n_filt={cfg.n_filt}")
    fb = mel_filterbank(cfg.n_filt, cfg.nfft, sample_rate)

    y = sig.preemphasize(x, cfg.alpha)
    frames = sig.frame(y, sample_rate, cfg.frame_ms, cfg.hop_ms)
    if cfg.use_vad:
        frames = frames[sig.energy_vad(frames, cfg.vad_threshold_db)]
    frames = frames * sig.hamming(frames.shape[1])
    pspec = sig.power_spectrum(frames, cfg.nfft)

    fbank = np.log(pspec @ fb.weights.T + sig.LOG_FLOOR)
    static = sig.dct2(fbank, cfg.n_ceps)
    static[:, 0] = np.log(pspec.sum(axis=1) + sig.LOG_FLOOR)

    d1 = sig.delta(static)
    d2 = sig.delta(d1)
    blocks = (d1, d2) if cfg.dynamic_only else (static, d1, d2)
    feats = np.hstack(blocks)
    if cfg.use_cmvn:
        feats = sig.cmvn(feats)
    return feats


# ---------------------------------------------------------------------------
# Wavelet packet transform
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WptTree:
    leaf_coeffs: list
    level: int
    wavelet_name: str

    @property
    def n_leaves(self):
        return len(self.leaf_coeffs)


def _analysis_step(x, h, g):
    # periodic extension, downsample by 2; x is (..., N) with N even
    n = x.shape[-1]
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(h.size)[None, :]) % n
    windows = x[..., idx]
    return windows @ h, windows @ g


def _wpt_leaves(x, h, g, level):
    """Natural-frequency-ordered leaves for a batch ``x`` of shape (..., N)."""
    nodes = [x]
    for _ in range(level):
        children = []
        for pos, node in enumerate(nodes):
            lo, hi = _analysis_step(node, h, g)
            # the high branch comes out spectrally mirrored after decimation
            children.extend((lo, hi) if pos % 2 == 0 else (hi, lo))
        nodes = children
    return nodes


def _pad_to_multiple(x, multiple):
    n = x.shape[-1]
    extra = (-n) % multiple
    if extra:
        pad = [(0, 0)] * (x.ndim - 1) + [(0, extra)]
        x = np.pad(x, pad)
    return x


def wpt(frame, wavelet="db4", level=4):
    """Full wavelet packet decomposition of one frame.

    The frame is zero-padded to a multiple of ``2**level``. Both branches
    are split at every node, so ``2**level`` leaves are returned, ordered
    from lowest to highest frequency band.
    """
    x = check_signal(frame, name="frame")
    level = check_int(level, "level", minimum=1)
    h, g = wavelet_filters(wavelet)
    if x.size < h.size:
        raise ValidationError(
            f"frame of {x.size} samples is shorter than the {wavelet} filter ({h.size} taps)"
        )
    x = _pad_to_multiple(x, 2 ** level)
    return WptTree(_wpt_leaves(x, h, g, level), level, wavelet)


def _band_overlap_weights(n_bands, n_filt, sample_rate):
    """Share of each mel triangle's area that falls inside each uniform band.

    Returns an (n_filt, n_bands) matrix whose rows sum to 1.
    """
    nyq = sample_rate / 2.0
    hz = mel_to_hz(np.linspace(0.0, hz_to_mel(nyq), n_filt + 2))
    edges = np.linspace(0.0, nyq, n_bands + 1)

    def tri_cdf(f, a, b, c):
        f = np.clip(f, a, c)
        rising = (np.minimum(f, b) - a) ** 2 / (2.0 * (b - a))
        falling = ((c - b) ** 2 - (c - np.maximum(f, b)) ** 2) / (2.0 * (c - b))
        return rising + falling

    W = np.empty((n_filt, n_bands))
    for m in range(n_filt):
        a, b, c = hz[m], hz[m + 1], hz[m + 2]
        cdf = tri_cdf(edges, a, b, c)
        W[m] = np.diff(cdf) / ((c - a) / 2.0)
    return W


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    projection: np.ndarray
    explained_variance: np.ndarray = field(default=None)

    @property
    def k(self):
        return self.projection.shape[0]

    @property
    def input_dim(self):
        return self.projection.shape[1]


def pca_fit(X, k):
    """Top-``k`` principal axes of ``X`` (population covariance, eigenvalue-descending).

    Each axis is sign-normalised so that its largest-magnitude entry is
    positive, which makes the fit deterministic.
    """
    X = check_features(X, name="X")
    k = check_int(k, "k", minimum=1)
    n, dim = X.shape
    if k > dim:
        raise ValidationError(f"k={k} exceeds input dimension {dim}")
    if n <= k:
        raise ValidationError(f"need more than k={k} frames to fit PCA, got {n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:k]
    P = evecs[:, order].T
    flip = np.sign(P[np.arange(k), np.argmax(np.abs(P), axis=1)])
    P = P * flip[:, None]
    return PcaModel(mean=mean, projection=P, explained_variance=np.clip(evals[order], 0.0, None))


def pca_apply(pca, X):
    X = check_features(X, name="X")
    if X.shape[1] != pca.input_dim:
        raise ValidationError(
            f"feature dimension {X.shape[1]} does not match PCA input dimension {pca.input_dim}"
        )
    return (X - pca.mean) @ pca.projection.T


# ---------------------------------------------------------------------------
# MWPC
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MwpcConfig:
    alpha: float = 0.97
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    wavelet: str = "db4"
    level: int = 4
    n_filt: int = 20
    n_components: int = 12


def mwpc_mel_energies(x, sample_rate=16000, cfg=None):
    """Mel-projected wavelet-packet log energies (frames x n_filt), before PCA."""
    cfg = cfg or MwpcConfig()
    h, g = wavelet_filters(cfg.wavelet)
    y = sig.preemphasize(x, cfg.alpha)
    frames = sig.frame(y, sample_rate, cfg.frame_ms, cfg.hop_ms)
    if frames.shape[1] < h.size:
        raise ValidationError(
            f"frame of {frames.shape[1]} samples is shorter than the {cfg.wavelet} filter"
        )
    frames = sig.tke(frames * sig.hamming(frames.shape[1]))
    frames = _pad_to_multiple(frames, 2 ** cfg.level)
    leaves = _wpt_leaves(frames, h, g, cfg.level)
    log_e = np.stack([np.log(np.sum(leaf ** 2, axis=-1) + sig.LOG_FLOOR) for leaf in leaves], axis=1)
    W = _band_overlap_weights(len(leaves), cfg.n_filt, sample_rate)
    return log_e @ W.T


def mwpc(x, pca, sample_rate=16000, cfg=None):
    """MWPC features: mel-projected WPT log energies reduced by a fitted PCA."""
    cfg = cfg or MwpcConfig()
    if pca.input_dim != cfg.n_filt:
        raise ValidationError(
            f"PCA expects {pca.input_dim}-dim input but n_filt={cfg.n_filt}"
        )
    return pca_apply(pca, mwpc_mel_energies(x, sample_rate, cfg))


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

class MFCC(TransformerMixin, BaseEstimator):
    """Stateless MFCC extractor; ``transform`` maps utterances to feature matrices.

    Parameters
    ----------
    sample_rate : int
        Sampling rate of every input waveform, in Hz.
    dynamic_only : bool
        Keep only delta and double-delta blocks (40 dims with defaults).
    use_vad, use_cmvn : bool
        Energy gate before the filterbank / per-utterance normalisation after.

    The remaining parameters mirror :class:`MfccConfig`.
    """

    def __init__(self, sample_rate=16000, alpha=0.97, frame_ms=25.0, hop_ms=10.0,
                 nfft=512, n_filt=20, n_ceps=20, use_vad=True, vad_threshold_db=40.0,
                 use_cmvn=True, dynamic_only=True):
        self.sample_rate = sample_rate
        self.alpha = alpha
        self.frame_ms = frame_ms
        self.hop_ms = hop_ms
        self.nfft = nfft
        self.n_filt = n_filt
        self.n_ceps = n_ceps
        self.use_vad = use_vad
        self.vad_threshold_db = vad_threshold_db
        self.use_cmvn = use_cmvn
        self.dynamic_only = dynamic_only

    def _config(self):
        return MfccConfig(self.alpha, self.frame_ms, self.hop_ms, self.nfft, self.n_filt,
                          self.n_ceps, self.use_vad, self.vad_threshold_db, self.use_cmvn,
                          self.dynamic_only)

    def fit(self, X=None, y=None):
        cfg = self._config()
        mel_filterbank(cfg.n_filt, cfg.nfft, self.sample_rate)
        self.n_features_out_ = cfg.dim
        return self

    def transform(self, X):
        """Return one (n_frames, dim) matrix per utterance in ``X``."""
        cfg = self._config()
        return [mfcc(x, self.sample_rate, cfg) for x in check_waveforms(X)]


class MWPC(TransformerMixin, BaseEstimator):
    """Mel wavelet-packet coefficients with a PCA fitted on training frames."""

    def __init__(self, sample_rate=16000, alpha=0.97, frame_ms=25.0, hop_ms=10.0,
                 wavelet="db4", level=4, n_filt=20, n_components=12):
        self.sample_rate = sample_rate
        self.alpha = alpha
        self.frame_ms = frame_ms
        self.hop_ms = hop_ms
        self.wavelet = wavelet
        self.level = level
        self.n_filt = n_filt
        self.n_components = n_components

    def _config(self):
        return MwpcConfig(self.alpha, self.frame_ms, self.hop_ms, self.wavelet,
                          self.level, self.n_filt, self.n_components)

    def fit(self, X, y=None):
        cfg = self._config()
        mel = np.vstack([mwpc_mel_energies(x, self.sample_rate, cfg)
                         for x in check_waveforms(X)])
        self.pca_ = pca_fit(mel, cfg.n_components)
        return self

    def transform(self, X):
        check_is_fitted(self, "pca_")
        cfg = self._config()
        return [mwpc(x, self.pca_, self.sample_rate, cfg) for x in check_waveforms(X)]
