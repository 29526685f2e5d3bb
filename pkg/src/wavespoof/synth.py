"""Synthetic bonafide/spoof corpus used in place of real recordings.

Bonafide utterances hold low-band energy (200-400 Hz by default); the two
spoof attack types put tones (``S1``) or filtered noise (``S2``) in a high
band (2-4 kHz). All signals get a slow amplitude envelope and a faint
broadband floor.
"""

import os

import numpy as np

from .io import ManifestEntry, write_manifest, write_wav
from .wavedeconv import BONAFIDE, SPOOF, Utterance

LOW_BAND = (200.0, 400.0)
HIGH_BAND = (2000.0, 4000.0)


def band_noise(rng, n, sample_rate, band):
    """Unit-RMS Gaussian noise with its spectrum masked to ``band`` (Hz)."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spec[(f < band[0]) | (f > band[1])] = 0.0
    x = np.fft.irfft(spec, n)
    return x / np.sqrt(np.mean(x ** 2))


def band_tones(rng, n, sample_rate, band, n_tones=3):
    """Unit-RMS sum of tones with random frequencies inside ``band``."""
    t = np.arange(n) / sample_rate
    x = np.zeros(n)
    for f in rng.uniform(band[0], band[1], size=n_tones):
        x += np.sin(2.0 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return x / np.sqrt(np.mean(x ** 2))


def _envelope(rng, n, sample_rate):
    t = np.arange(n) / sample_rate
    rate = rng.uniform(2.0, 5.0)
    return 0.6 + 0.4 * np.sin(2.0 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))


def make_signal(rng, kind, n, sample_rate=16000, low_band=LOW_BAND, high_band=HIGH_BAND,
                rms=0.1, floor_db=-40.0):
    """One synthetic signal of ``n`` samples.

    ``kind`` is ``"bonafide"`` (low-band tones + noise), ``"S1"`` (high-band
    tones) or ``"S2"`` (high-band noise).
    """
    if kind == "bonafide":
        core = 0.7 * band_tones(rng, n, sample_rate, low_band) + 0.3 * band_noise(rng, n, sample_rate, low_band)
    elif kind == "S1":
        core = band_tones(rng, n, sample_rate, high_band)
    elif kind == "S2":
        core = band_noise(rng, n, sample_rate, high_band)
    else:
        raise ValueError(f"unknown signal kind {kind!r}")
    x = core * _envelope(rng, n, sample_rate)
    x = rms * x / np.sqrt(np.mean(x ** 2))
    return x + rms * 10.0 ** (floor_db / 20.0) * rng.standard_normal(n)


def synth_dataset(n_speakers=4, n_per_class=6, duration=1.0, sample_rate=16000, seed=0,
                  prefix="utt", **signal_kw):
    """Speaker-paired list of :class:`~wavespoof.wavedeconv.Utterance`.

    Every speaker gets ``n_per_class`` bonafide and ``n_per_class`` spoof
    utterances; spoof utterances alternate between the two attack types.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    out = []
    for s in range(n_speakers):
        spk = f"spk{s:02d}"
        for i in range(n_per_class):
            x = make_signal(rng, "bonafide", n, sample_rate, **signal_kw)
            out.append(Utterance(f"{prefix}_{spk}_b{i:03d}", spk, BONAFIDE, x))
        for i in range(n_per_class):
            attack = "S1" if i % 2 == 0 else "S2"
            x = make_signal(rng, attack, n, sample_rate, **signal_kw)
            out.append(Utterance(f"{prefix}_{spk}_{attack.lower()}_{i:03d}", spk, SPOOF, x))
    return out


def write_synth_corpus(out_dir, seed=0, n_speakers=4, n_train=6, n_dev=4, duration=1.0,
                       sample_rate=16000):
    """Write WAVs plus ``train.lst`` and ``dev.lst`` manifests under ``out_dir``."""
    wav_dir = os.path.join(out_dir, "wav")
    os.makedirs(wav_dir, exist_ok=True)
    paths = {}
    for split, n_per_class, split_seed in (("train", n_train, seed), ("dev", n_dev, seed + 1)):
        utts = synth_dataset(n_speakers, n_per_class, duration, sample_rate, split_seed,
                             prefix=split)
        entries = []
        for u in utts:
            wav = os.path.join(wav_dir, f"{u.utt_id}.wav")
            write_wav(wav, u.samples, sample_rate)
            key = "bonafide" if u.label == BONAFIDE else "spoof"
            entries.append(ManifestEntry(u.utt_id, u.speaker, key, wav))
        paths[split] = os.path.join(out_dir, f"{split}.lst")
        write_manifest(paths[split], entries)
    return paths
