"""Wavelet Deconvolution (WD) layer with learnable scales.

The layer convolves the input with Mexican-hat kernels whose scales are
trained by gradient descent using closed-form derivatives of the kernel
with respect to the scale. A small dense head (pooling, one hidden
leaky-ReLU layer, log-softmax) sits on top so the whole model can be trained
end to end with negative log-likelihood.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    DataError,
    ValidationError,
    check_int,
    check_positive,
    check_signal,
    check_waveforms,
)

logger = logging.getLogger(__name__)

S_MIN = 0.05
S_MAX = 512.0
KERNEL_SIZE = 251
_PI4 = math.pi ** 0.25


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged (non-finite loss) at epoch {epoch}")


def _check_kernel_size(K):
    K = check_int(K, "kernel_size", minimum=3)
    if K % 2 == 0:
        raise ValidationError(f"kernel_size must be odd, got {K}")
    return K


def _check_scales(scales):
    s = np.atleast_1d(np.asarray(scales, dtype=np.float64))
    if s.ndim != 1 or s.size == 0:
        raise ValidationError("scales must be a non-empty vector")
    if not np.all(np.isfinite(s)) or np.any(s <= 0):
        raise ValidationError("scales must be finite and > 0")
    return s


def t_grid(K):
    half = (K - 1) // 2
    return np.arange(-half, half + 1, dtype=np.float64)


def wd_kernel(s, K=KERNEL_SIZE):
    """Mexican-hat kernel at scale ``s`` sampled on ``t = -(K-1)/2 .. (K-1)/2``."""
    s = check_positive(s, "scale")
    return wd_kernel_bank([s], K)[0]


def wd_kernel_bank(scales, K=KERNEL_SIZE):
    """(M, K) matrix of kernels, one row per scale."""
    K = _check_kernel_size(K)
    s = _check_scales(scales)[:, None]
    u2 = t_grid(K)[None, :] ** 2 / s ** 2
    return 2.0 / (_PI4 * np.sqrt(3.0 * s)) * (u2 - 1.0) * np.exp(-u2)


def wd_kernel_grad_parts(scales, K=KERNEL_SIZE):
    """d(kernel)/ds assembled from the amplitude/polynomial/Gaussian factors.

    With ``A = 2/(pi^(1/4) sqrt(3s))``, ``P = t^2/s^2 - 1`` and
    ``G = exp(-t^2/s^2)`` the derivative is ``A (P G' + G P') + P G A'``.
    """
    K = _check_kernel_size(K)
    s = _check_scales(scales)[:, None]
    t2 = t_grid(K)[None, :] ** 2
    A = 2.0 / (_PI4 * np.sqrt(3.0 * s))
    dA = -(3.0 / _PI4) * (3.0 * s) ** -1.5
    P = t2 / s ** 2 - 1.0
    dP = -2.0 * t2 / s ** 3
    G = np.exp(-t2 / s ** 2)
    dG = 2.0 * t2 / s ** 3 * G
    return A * (P * dG + G * dP) + P * G * dA


def wd_kernel_grad(scales, K=KERNEL_SIZE):
    """Closed form ``(4u^2 - 9u + 1) exp(-u) / (pi^(1/4) sqrt(3 s^3))`` with ``u = t^2/s^2``."""
    K = _check_kernel_size(K)
    s = _check_scales(scales)[:, None]
    u = t_grid(K)[None, :] ** 2 / s ** 2
    return (4.0 * u ** 2 - 9.0 * u + 1.0) * np.exp(-u) / (_PI4 * np.sqrt(3.0 * s ** 3))


def _correlate_same(x, kernel):
    # out[j] = sum_k kernel[k] x[j + t_k], zero outside the signal
    half = (kernel.size - 1) // 2
    return np.convolve(x, kernel[::-1], mode="full")[half:half + x.size]


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return check_signal(x)[None, :], True
    if x.ndim != 2 or x.shape[1] == 0:
        raise ValidationError(f"signal batch must be 2-D (batch, samples), got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("signal contains non-finite values")
    return x, False


def wd_forward(x, scales, K=KERNEL_SIZE):
    """WD activations ``z[i, j] = sum_k psi_{s_i}[k] x[j + t_k]``.

    ``x`` may be one signal (N,) giving (M, N), or a batch (B, N) giving
    (B, M, N). Edges are zero-padded so the output length equals N.
    """
    kernels = wd_kernel_bank(scales, K)
    xb, single = _as_batch(x)
    z = np.empty((xb.shape[0], kernels.shape[0], xb.shape[1]))
    for b, xi in enumerate(xb):
        for i, kern in enumerate(kernels):
            z[b, i] = _correlate_same(xi, kern)
    return z[0] if single else z


def wd_backward(x, scales, dE_dz, K=KERNEL_SIZE):
    """Gradient of the loss with respect to each scale.

    Chains ``dE/dpsi[i, k] = sum_j dE/dz[i, j] x[j + t_k]`` with the
    closed-form ``dpsi/ds`` and sums over kernel taps (and batch items).
    """
    s = _check_scales(scales)
    xb, single = _as_batch(x)
    g = np.asarray(dE_dz, dtype=np.float64)
    if single and g.ndim == 2:
        g = g[None]
    expected = (xb.shape[0], s.size, xb.shape[1])
    if g.shape != expected:
        raise ValidationError(f"dE_dz has shape {g.shape}, expected {expected}")
    K = _check_kernel_size(K)
    half = (K - 1) // 2
    dE_dpsi = np.zeros((s.size, K))
    for b, xi in enumerate(xb):
        xpad = np.pad(xi, half)
        for i in range(s.size):
            dE_dpsi[i] += np.correlate(xpad, g[b, i], mode="valid")
    return np.sum(dE_dpsi * wd_kernel_grad(s, K), axis=1)


def update_scales(scales, grads, gamma, s_min=S_MIN, s_max=S_MAX):
    """One projected gradient step ``clip(s - gamma * g, s_min, s_max)``."""
    s = _check_scales(scales)
    gamma = check_positive(gamma, "gamma", strict=False)
    if not 0 < s_min <= s_max:
        raise ValidationError(f"invalid scale bounds [{s_min}, {s_max}]")
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != s.shape:
        raise ValidationError(f"grads has shape {grads.shape}, expected {s.shape}")
    return np.clip(s - gamma * grads, s_min, s_max)


def didactic_init(M=8):
    """Geometric scales from 1 to 128; ``M=8`` gives exactly 1, 2, 4, ..., 128."""
    M = check_int(M, "M", minimum=1)
    if M == 1:
        return np.ones(1)
    return 2.0 ** (7.0 * np.arange(M) / (M - 1))


# ---------------------------------------------------------------------------
# Dense head
# ---------------------------------------------------------------------------

@dataclass
class ToyNet:
    """Pooling -> dense -> leaky ReLU -> dense -> log-softmax over 2 classes.

    Pooling maps WD activations (B, M, N) to per-scale ``mean |z|`` and
    ``max |z|`` over time, giving 2M inputs.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    slope: float = 0.01

    @classmethod
    def init(cls, n_in, n_hidden=16, n_out=2, slope=0.01, rng=None):
        rng = np.random.default_rng(rng)
        W1 = rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_hidden, n_in))
        W2 = rng.normal(0.0, math.sqrt(1.0 / n_hidden), size=(n_out, n_hidden))
        return cls(W1, np.zeros(n_hidden), W2, np.zeros(n_out), slope)

    @property
    def n_in(self):
        return self.W1.shape[1]

    def params(self):
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def copy(self):
        return ToyNet(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy(), self.slope)


def _check_finite(name, a):
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"non-finite values in layer '{name}'")


def pool(z):
    """(B, M, N) activations -> (B, 2M) features [mean |z| ..., max |z| ...]."""
    a = np.abs(z)
    return np.concatenate([a.mean(axis=-1), a.max(axis=-1)], axis=-1)


def net_forward(net, z):
    """Log-probabilities (B, 2) and a cache for :func:`net_backward`."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 2:
        z = z[None]
    if 2 * z.shape[1] != net.n_in:
        raise ValidationError(
            f"net expects {net.n_in} pooled inputs, activations give {2 * z.shape[1]}"
        )
    _check_finite("wd", z)
    feats = pool(z)
    _check_finite("pool", feats)
    h_pre = feats @ net.W1.T + net.b1
    _check_finite("dense1", h_pre)
    h = np.where(h_pre > 0, h_pre, net.slope * h_pre)
    logits = h @ net.W2.T + net.b2
    _check_finite("dense2", logits)
    shift = logits.max(axis=1, keepdims=True)
    logp = logits - shift - np.log(np.sum(np.exp(logits - shift), axis=1, keepdims=True))
    _check_finite("log_softmax", logp)
    return logp, {"z": z, "feats": feats, "h_pre": h_pre, "h": h, "logp": logp}


def nll_loss(logp, y):
    y = np.asarray(y, dtype=int)
    return float(-np.mean(logp[np.arange(y.size), y]))


def net_backward(net, cache, y):
    """Exact gradients of the mean NLL.

    Returns ``(grads, dE_dz)`` where ``grads`` maps parameter names to arrays
    and ``dE_dz`` has the shape of the WD activations.
    """
    y = np.asarray(y, dtype=int)
    z, feats, h_pre, h, logp = (cache[k] for k in ("z", "feats", "h_pre", "h", "logp"))
    B, M, N = z.shape
    d_logits = np.exp(logp)
    d_logits[np.arange(B), y] -= 1.0
    d_logits /= B
    grads = {"W2": d_logits.T @ h, "b2": d_logits.sum(axis=0)}
    d_h = d_logits @ net.W2
    d_hpre = d_h * np.where(h_pre > 0, 1.0, net.slope)
    grads["W1"] = d_hpre.T @ feats
    grads["b1"] = d_hpre.sum(axis=0)
    d_feats = d_hpre @ net.W1

    sign = np.sign(z)
    dE_dz = sign * (d_feats[:, :M, None] / N)
    arg = np.argmax(np.abs(z), axis=-1)
    bi, mi = np.meshgrid(np.arange(B), np.arange(M), indexing="ij")
    dE_dz[bi, mi, arg] += sign[bi, mi, arg] * d_feats[:, M:]
    return grads, dE_dz


# ---------------------------------------------------------------------------
# Data feeding and training
# ---------------------------------------------------------------------------

BONAFIDE, SPOOF = 1, 0


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    speaker: str
    label: int
    samples: np.ndarray


@dataclass(frozen=True)
class BatchSpec:
    utterances_per_batch: int = 256
    chunk_ms: float = 200.0
    balanced: bool = True
    speaker_paired: bool = True

    def chunk_len(self, sample_rate):
        return int(round(self.chunk_ms * sample_rate / 1000.0))


def _crop(x, n, rng):
    if x.size <= n:
        return np.pad(x, (0, n - x.size))
    start = int(rng.integers(0, x.size - n + 1))
    return x[start:start + n]


def sample_batch(dataset, spec=None, rng=None, sample_rate=16000):
    """Draw a mini-batch of random fixed-length chunks.

    With ``balanced`` the batch holds equal numbers of bonafide and spoof
    chunks; with ``speaker_paired`` each spoof chunk comes with a bonafide
    chunk of the same speaker. Utterances shorter than a chunk are
    zero-padded.

    Returns
    -------
    X : ndarray (B, chunk_len)
    y : ndarray (B,) of int, 1 = bonafide, 0 = spoof
    """
    spec = spec or BatchSpec()
    rng = np.random.default_rng(rng)
    B = check_int(spec.utterances_per_batch, "utterances_per_batch", minimum=2)
    n = spec.chunk_len(sample_rate)
    bona = [u for u in dataset if u.label == BONAFIDE]
    spoof = [u for u in dataset if u.label == SPOOF]

    if not spec.balanced:
        if not dataset:
            raise DataError("empty dataset")
        idx = rng.choice(len(dataset), B, replace=len(dataset) < B)
        X = np.stack([_crop(dataset[i].samples, n, rng) for i in idx])
        return X, np.array([dataset[i].label for i in idx])

    if B % 2:
        raise ValidationError("balanced batches need an even utterances_per_batch")
    if not bona or not spoof:
        raise DataError("balanced batches need both bonafide and spoof utterances")
    by_speaker = {}
    for u in bona:
        by_speaker.setdefault(u.speaker, []).append(u)
    if spec.speaker_paired:
        for u in spoof:
            if u.speaker not in by_speaker:
                raise DataError(f"speaker {u.speaker!r} has spoof utterances but no bonafide utterance")

    half = B // 2
    chosen = rng.choice(len(spoof), half, replace=len(spoof) < half)
    chunks, labels = [], []
    for i in chosen:
        sp = spoof[i]
        pool_ = by_speaker[sp.speaker] if spec.speaker_paired else bona
        bf = pool_[int(rng.integers(len(pool_)))]
        chunks += [_crop(bf.samples, n, rng), _crop(sp.samples, n, rng)]
        labels += [BONAFIDE, SPOOF]
    return np.stack(chunks), np.array(labels)


def utterance_chunks(x, chunk_len):
    """Non-overlapping chunks of ``chunk_len`` (at least one, zero-padded)."""
    x = check_signal(x)
    n = max(1, x.size // chunk_len)
    if x.size < chunk_len:
        x = np.pad(x, (0, chunk_len - x.size))
    return x[:n * chunk_len].reshape(n, chunk_len)


def score_utterance(x, scales, net, K=KERNEL_SIZE, chunk_len=3200):
    """Mean over chunks of ``log p(bonafide) - log p(spoof)``."""
    logp, _ = net_forward(net, wd_forward(utterance_chunks(x, chunk_len), scales, K))
    return float(np.mean(logp[:, BONAFIDE] - logp[:, SPOOF]))


@dataclass
class TrainConfig:
    n_scales: int = 8
    kernel_size: int = KERNEL_SIZE
    epochs: int = 50
    steps_per_epoch: int = 4
    batch: BatchSpec = field(default_factory=BatchSpec)
    lr_scales: float = 1.0
    lr_net: float = 0.05
    n_hidden: int = 16
    leaky_slope: float = 0.01
    s_min: float = S_MIN
    s_max: float = S_MAX
    sample_rate: int = 16000
    seed: int = 0
    init_scales: np.ndarray = None

    def validate(self):
        check_int(self.n_scales, "n_scales", minimum=1)
        _check_kernel_size(self.kernel_size)
        check_int(self.epochs, "epochs", minimum=0)
        check_int(self.steps_per_epoch, "steps_per_epoch", minimum=1)
        check_int(self.n_hidden, "n_hidden", minimum=1)
        check_positive(self.lr_scales, "lr_scales", strict=False)
        check_positive(self.lr_net, "lr_net", strict=False)
        check_positive(self.s_min, "s_min")
        check_positive(self.s_max, "s_max")
        if self.s_min > self.s_max:
            raise ValidationError("s_min must not exceed s_max")
        if self.init_scales is not None and len(self.init_scales) != self.n_scales:
            raise ValidationError("init_scales length must equal n_scales")
        return self


@dataclass
class TrainResult:
    scales: np.ndarray
    net: ToyNet
    trajectory: np.ndarray
    losses: list
    dev_eers: list
    best_epoch: int


def _evaluate(dataset, scales, net, cfg):
    from .metrics import ScoreSet, eer

    chunk_len = cfg.batch.chunk_len(cfg.sample_rate)
    scores, nll = [], []
    for u in dataset:
        logp, _ = net_forward(net, wd_forward(utterance_chunks(u.samples, chunk_len),
                                              scales, cfg.kernel_size))
        scores.append(float(np.mean(logp[:, BONAFIDE] - logp[:, SPOOF])))
        nll.append(nll_loss(logp, np.full(logp.shape[0], u.label)))
    keys = ["bonafide" if u.label == BONAFIDE else "spoof" for u in dataset]
    ss = ScoreSet([u.utt_id for u in dataset], keys, scores)
    return eer(ss), float(np.mean(nll))


def train(dataset, cfg=None, dev=None):
    """Jointly train WD scales and the dense head with plain gradient descent.

    Each epoch runs ``steps_per_epoch`` mini-batches. Row 0 of the returned
    trajectory holds the initial scales and row ``e`` the scales after epoch
    ``e``. When ``dev`` is given, the returned model is the epoch with the
    lowest held-out EER (ties broken by held-out NLL, then earliest epoch);
    otherwise the final one.
    """
    cfg = (cfg or TrainConfig()).validate()
    rng = np.random.default_rng(cfg.seed)
    scales = (didactic_init(cfg.n_scales) if cfg.init_scales is None
              else _check_scales(cfg.init_scales).copy())
    scales = np.clip(scales, cfg.s_min, cfg.s_max)
    net = ToyNet.init(2 * cfg.n_scales, cfg.n_hidden, slope=cfg.leaky_slope, rng=rng)

    trajectory = [scales.copy()]
    losses, dev_eers = [], []
    best = (scales.copy(), net.copy())
    best_key, best_epoch = None, 0
    for epoch in range(1, cfg.epochs + 1):
        epoch_loss = 0.0
        for _ in range(cfg.steps_per_epoch):
            X, y = sample_batch(dataset, cfg.batch, rng, cfg.sample_rate)
            z = wd_forward(X, scales, cfg.kernel_size)
            try:
                logp, cache = net_forward(net, z)
            except FloatingPointError as exc:
                raise TrainingDivergedError(epoch, f"epoch {epoch}: {exc}") from exc
            loss = nll_loss(logp, y)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            grads, dE_dz = net_backward(net, cache, y)
            g_s = wd_backward(X, scales, dE_dz, cfg.kernel_size)
            if not np.all(np.isfinite(g_s)):
                raise TrainingDivergedError(epoch)
            for name, p in net.params().items():
                p -= cfg.lr_net * grads[name]
            scales = update_scales(scales, g_s, cfg.lr_scales, cfg.s_min, cfg.s_max)
            epoch_loss += loss
        losses.append(epoch_loss / cfg.steps_per_epoch)
        trajectory.append(scales.copy())

        if dev:
            dev_eer, dev_nll = _evaluate(dev, scales, net, cfg)
            dev_eers.append(dev_eer)
            key = (dev_eer, dev_nll)
            if best_key is None or key < best_key:
                best_key, best_epoch = key, epoch
                best = (scales.copy(), net.copy())
            logger.info("epoch %d loss %.4f dev EER %.4f", epoch, losses[-1], dev_eer)
        else:
            best_epoch, best = epoch, (scales.copy(), net.copy())
            logger.info("epoch %d loss %.4f", epoch, losses[-1])

    return TrainResult(best[0], best[1], np.array(trajectory), losses, dev_eers, best_epoch)


def write_trajectory_csv(path, trajectory):
    """Write ``epoch,scale_0,...`` with one row per epoch (row 0 = initial scales)."""
    trajectory = np.atleast_2d(trajectory)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = ["epoch"] + [f"scale_{i}" for i in range(trajectory.shape[1])]
        fh.write(",".join(header) + "\n")
        for epoch, row in enumerate(trajectory):
            fh.write(",".join([str(epoch)] + [repr(float(v)) for v in row]) + "\n")


def read_trajectory_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "epoch":
            raise DataError(f"{path}: not a scale trajectory file")
        rows = [[float(v) for v in line.strip().split(",")[1:]] for line in fh if line.strip()]
    return np.array(rows)


# ---------------------------------------------------------------------------
# Estimator
# ---------------------------------------------------------------------------

class WaveletDeconvClassifier(ClassifierMixin, BaseEstimator):
    """End-to-end spoof classifier on raw waveforms with a learnable WD front layer.

    ``fit`` takes a list of waveforms, labels (1 = bonafide, 0 = spoof) and
    optionally speaker ids for speaker-paired batching. ``decision_function``
    returns the chunk-averaged log-probability ratio per utterance.
    """

    def __init__(self, n_scales=8, kernel_size=KERNEL_SIZE, epochs=50, steps_per_epoch=4,
                 utterances_per_batch=256, chunk_ms=200.0, lr_scales=1.0, lr_net=0.05,
                 n_hidden=16, leaky_slope=0.01, s_min=S_MIN, s_max=S_MAX,
                 sample_rate=16000, random_state=0):
        self.n_scales = n_scales
        self.kernel_size = kernel_size
        self.epochs = epochs
        self.steps_per_epoch = steps_per_epoch
        self.utterances_per_batch = utterances_per_batch
        self.chunk_ms = chunk_ms
        self.lr_scales = lr_scales
        self.lr_net = lr_net
        self.n_hidden = n_hidden
        self.leaky_slope = leaky_slope
        self.s_min = s_min
        self.s_max = s_max
        self.sample_rate = sample_rate
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(
            n_scales=self.n_scales, kernel_size=self.kernel_size, epochs=self.epochs,
            steps_per_epoch=self.steps_per_epoch,
            batch=BatchSpec(self.utterances_per_batch, self.chunk_ms,
                            speaker_paired=True),
            lr_scales=self.lr_scales, lr_net=self.lr_net, n_hidden=self.n_hidden,
            leaky_slope=self.leaky_slope, s_min=self.s_min, s_max=self.s_max,
            sample_rate=self.sample_rate, seed=self.random_state)

    @staticmethod
    def _dataset(X, y, speakers, prefix):
        X = check_waveforms(X)
        y = np.asarray(y, dtype=int)
        if y.shape != (len(X),):
            raise ValidationError("y must have one label per waveform")
        if not set(np.unique(y)) <= {BONAFIDE, SPOOF}:
            raise ValidationError("labels must be 1 (bonafide) or 0 (spoof)")
        if speakers is None:
            speakers = ["spk"] * len(X)
        return [Utterance(f"{prefix}{i}", str(spk), int(lab), x)
                for i, (x, lab, spk) in enumerate(zip(X, y, speakers))]

    def fit(self, X, y, speakers=None, X_dev=None, y_dev=None, speakers_dev=None):
        data = self._dataset(X, y, speakers, "train")
        dev = self._dataset(X_dev, y_dev, speakers_dev, "dev") if X_dev is not None else None
        result = train(data, self._train_config(), dev)
        self.scales_ = result.scales
        self.net_ = result.net
        self.trajectory_ = result.trajectory
        self.loss_curve_ = result.losses
        self.dev_eers_ = result.dev_eers
        self.best_epoch_ = result.best_epoch
        self.classes_ = np.array([SPOOF, BONAFIDE])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "net_")
        chunk_len = BatchSpec(chunk_ms=self.chunk_ms).chunk_len(self.sample_rate)
        return np.array([score_utterance(x, self.scales_, self.net_, self.kernel_size, chunk_len)
                         for x in check_waveforms(X)])

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(int)

    def activations(self, X):
        """Per-utterance mean ``|z|`` for each WD row, shape (n_utterances, n_scales)."""
        check_is_fitted(self, "scales_")
        return np.stack([np.abs(wd_forward(x, self.scales_, self.kernel_size)).mean(axis=1)
                         for x in check_waveforms(X)])
