"""File formats: WAV ingestion, feature files, model archives, manifests and configs.

Feature file layout (little-endian)::

    bytes 0-3    magic b"WSPF"
    bytes 4-7    uint32 format version (1)
    bytes 8-15   uint64 n_frames
    bytes 16-23  uint64 dim
    then         n_frames * dim float64 values, row-major

Model archives are line-oriented text::

    wavespoof-archive
    format_version 1
    kind gmm
    meta <key> <value>
    param <name> <comma-separated shape, or "scalar">
    <space-separated values, shortest round-trip decimal>
"""

import os
import struct
import wave
from dataclasses import dataclass

import numpy as np

from ._validation import DataError, ValidationError

FEATURE_MAGIC = b"WSPF"
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<4sIQQ")
ARCHIVE_VERSION = 1
ARCHIVE_KINDS = ("gmm", "pca", "wd", "toynet")


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------

def read_wav(path):
    """Read 16-bit PCM mono WAV, returning (samples in [-1, 1), sample_rate)."""
    try:
        with wave.open(os.fspath(path), "rb") as wf:
            if wf.getcomptype() != "NONE":
                raise DataError(f"{path}: compressed WAV is not supported")
            if wf.getnchannels() != 1:
                raise DataError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
            if wf.getsampwidth() != 2:
                raise DataError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
            fs = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise DataError(f"{path}: unreadable WAV ({exc})") from None
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0, fs


def write_wav(path, samples, sample_rate):
    pcm = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32768.0), -32768, 32767)
    with wave.open(os.fspath(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(sample_rate))
        wf.writeframes(pcm.astype("<i2").tobytes())


# ---------------------------------------------------------------------------
# Feature files
# ---------------------------------------------------------------------------

def write_features(path, features):
    F = np.ascontiguousarray(np.asarray(features, dtype="<f8"))
    if F.ndim != 2:
        raise ValidationError(f"features must be 2-D, got shape {F.shape}")
    with open(path, "wb") as fh:
        fh.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, F.shape[0], F.shape[1]))
        fh.write(F.tobytes())


def read_features(path):
    with open(path, "rb") as fh:
        header = fh.read(_FEATURE_HEADER.size)
        if len(header) != _FEATURE_HEADER.size:
            raise DataError(f"{path}: truncated feature header")
        magic, version, n, dim = _FEATURE_HEADER.unpack(header)
        if magic != FEATURE_MAGIC:
            raise DataError(f"{path}: not a feature file")
        if version != FEATURE_VERSION:
            raise DataError(f"{path}: unsupported feature file version {version}")
        data = fh.read()
    if len(data) != 8 * n * dim:
        raise DataError(f"{path}: expected {n}x{dim} values, file holds {len(data) // 8}")
    return np.frombuffer(data, dtype="<f8").reshape(n, dim).astype(np.float64)


# ---------------------------------------------------------------------------
# Model archives
# ---------------------------------------------------------------------------

def write_archive(path, kind, params, meta=None):
    if kind not in ARCHIVE_KINDS:
        raise ValidationError(f"unknown archive kind {kind!r}")
    lines = ["wavespoof-archive", f"format_version {ARCHIVE_VERSION}", f"kind {kind}"]
    for key, value in (meta or {}).items():
        value = str(value)
        if any(c.isspace() for c in key) or "\n" in value:
            raise ValidationError(f"invalid archive metadata entry {key!r}")
        lines.append(f"meta {key} {value}")
    for name, value in params.items():
        a = np.asarray(value, dtype=np.float64)
        shape = ",".join(str(d) for d in a.shape) if a.ndim else "scalar"
        lines.append(f"param {name} {shape}")
        lines.append(" ".join(repr(float(v)) for v in a.reshape(-1)))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_archive(path, expected_kind=None):
    """Return ``(kind, params, meta)`` from a model archive."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 3 or lines[0] != "wavespoof-archive":
        raise DataError(f"{path}: not a model archive")
    try:
        version = int(lines[1].split()[1])
    except (IndexError, ValueError):
        raise DataError(f"{path}: malformed format_version line") from None
    if version != ARCHIVE_VERSION:
        raise DataError(f"{path}: unsupported archive version {version}")
    kind = lines[2].split()[1] if lines[2].startswith("kind ") else None
    if kind not in ARCHIVE_KINDS:
        raise DataError(f"{path}: unknown archive kind {kind!r}")
    if expected_kind and kind != expected_kind:
        raise DataError(f"{path}: expected a {expected_kind} archive, found {kind}")
    meta, params = {}, {}
    i = 3
    while i < len(lines):
        line = lines[i]
        if line.startswith("meta "):
            _, key, *rest = line.split(" ", 2)
            meta[key] = rest[0] if rest else ""
        elif line.startswith("param "):
            _, name, shape = line.split()
            shape = () if shape == "scalar" else tuple(int(d) for d in shape.split(","))
            if i + 1 >= len(lines):
                raise DataError(f"{path}: missing values for parameter {name!r}")
            text = lines[i + 1].split()
            values = np.array([float(v) for v in text], dtype=np.float64)
            if values.size != int(np.prod(shape)):
                raise DataError(f"{path}: parameter {name!r} has {values.size} values, shape {shape}")
            params[name] = values.reshape(shape)
            i += 1
        elif line.strip():
            raise DataError(f"{path}: unexpected line {i + 1}: {line[:40]!r}")
        i += 1
    return kind, params, meta


def save_gmm(path, model, meta=None):
    write_archive(path, "gmm", {"weights": model.weights, "means": model.means,
                                "variances": model.variances}, meta)


def load_gmm(path):
    from .gmm import GmmModel

    _, p, meta = read_archive(path, "gmm")
    try:
        return GmmModel(p["weights"], p["means"], p["variances"]), meta
    except (KeyError, ValidationError) as exc:
        raise DataError(f"{path}: invalid GMM archive ({exc})") from None


def save_pca(path, pca, meta=None):
    params = {"mean": pca.mean, "projection": pca.projection}
    if pca.explained_variance is not None:
        params["explained_variance"] = pca.explained_variance
    write_archive(path, "pca", params, meta)


def load_pca(path):
    from .handcrafted import PcaModel

    _, p, meta = read_archive(path, "pca")
    return PcaModel(p["mean"], p["projection"], p.get("explained_variance")), meta


def save_wd(path, scales, net, meta=None):
    params = {"scales": scales, "slope": net.slope}
    params.update(net.params())
    write_archive(path, "wd", params, meta)


def load_wd(path):
    from .wavedeconv import ToyNet

    _, p, meta = read_archive(path, "wd")
    try:
        net = ToyNet(p["W1"], p["b1"], p["W2"], p["b2"], float(p["slope"]))
        return p["scales"], net, meta
    except KeyError as exc:
        raise DataError(f"{path}: WD archive lacks parameter {exc}") from None


# ---------------------------------------------------------------------------
# Manifests and configs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    speaker: str
    key: str
    wav_path: str

    @property
    def label(self):
        return 1 if self.key == "bonafide" else 0


def read_manifest(path, check_files=True):
    """Parse ``<utt_id> <speaker_id> <bonafide|spoof> <wav_path>`` lines.

    Relative WAV paths are resolved against the manifest's directory.
    """
    base = os.path.dirname(os.path.abspath(path))
    entries, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 3)
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields")
            utt, spk, key, wav = parts
            if key not in ("bonafide", "spoof"):
                raise DataError(f"{path}:{lineno}: key must be bonafide or spoof, got {key!r}")
            if utt in seen:
                raise DataError(f"{path}:{lineno}: duplicate utterance id {utt!r}")
            seen.add(utt)
            wav = wav if os.path.isabs(wav) else os.path.join(base, wav)
            if check_files and not os.path.isfile(wav):
                raise DataError(f"{path}:{lineno}: missing audio file {wav}")
            entries.append(ManifestEntry(utt, spk, key, wav))
    return entries


def write_manifest(path, entries):
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            wav = os.path.relpath(e.wav_path, base)
            fh.write(f"{e.utt_id} {e.speaker} {e.key} {wav}\n")


def read_config(path):
    """Parse ``key = value`` lines into a dict of strings; ``#`` starts a comment."""
    cfg = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ValidationError(f"{path}:{lineno}: empty key")
            cfg[key] = value
    return cfg
