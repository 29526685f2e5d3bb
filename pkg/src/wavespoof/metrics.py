"""Detection metrics, score fusion and score-file handling.

Convention: a higher score means "more bonafide" and an utterance is
accepted as bonafide iff ``score >= threshold``.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import DataError, ValidationError

KEYS = ("bonafide", "spoof")
FUSION_1 = (0.75, 0.125, 0.125)


@dataclass(frozen=True)
class ScoreSet:
    """Per-utterance ``(utt_id, key, score)`` triples."""

    utt_ids: tuple
    keys: tuple
    scores: np.ndarray

    def __init__(self, utt_ids, keys, scores):
        utt_ids = tuple(str(u) for u in utt_ids)
        keys = tuple(str(k) for k in keys)
        scores = np.asarray(scores, dtype=np.float64).reshape(-1)
        if not (len(utt_ids) == len(keys) == scores.size):
            raise ValidationError("utt_ids, keys and scores must have equal length")
        bad = [k for k in keys if k not in KEYS]
        if bad:
            raise ValidationError(f"unknown key {bad[0]!r}; expected 'bonafide' or 'spoof'")
        if len(set(utt_ids)) != len(utt_ids):
            seen = set()
            dup = next(u for u in utt_ids if u in seen or seen.add(u))
            raise ValidationError(f"duplicate utterance id {dup!r}")
        if not np.all(np.isfinite(scores)):
            raise ValidationError("scores must be finite")
        object.__setattr__(self, "utt_ids", utt_ids)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "scores", scores)

    @classmethod
    def from_arrays(cls, bonafide, spoof, prefix="utt"):
        bonafide = np.asarray(bonafide, dtype=np.float64).reshape(-1)
        spoof = np.asarray(spoof, dtype=np.float64).reshape(-1)
        n = bonafide.size + spoof.size
        ids = [f"{prefix}{i:06d}" for i in range(n)]
        keys = ["bonafide"] * bonafide.size + ["spoof"] * spoof.size
        return cls(ids, keys, np.concatenate([bonafide, spoof]))

    def __len__(self):
        return len(self.utt_ids)

    @property
    def bonafide(self):
        mask = np.array([k == "bonafide" for k in self.keys], dtype=bool)
        return self.scores[mask]

    @property
    def spoof(self):
        mask = np.array([k == "spoof" for k in self.keys], dtype=bool)
        return self.scores[mask]


@dataclass(frozen=True)
class DetSweep:
    thresholds: np.ndarray
    p_miss: np.ndarray
    p_fa: np.ndarray


def _split(scores):
    if isinstance(scores, ScoreSet):
        bona, spoof = scores.bonafide, scores.spoof
    else:
        bona, spoof = (np.asarray(s, dtype=np.float64).reshape(-1) for s in scores)
    if bona.size == 0 or spoof.size == 0:
        raise ValidationError("both bonafide and spoof scores are required")
    return bona, spoof


def det_sweep(scores):
    """Miss / false-alarm rates at every distinct score plus -inf and +inf.

    ``scores`` is a :class:`ScoreSet` or a ``(bonafide, spoof)`` pair.
    ``p_miss`` is the fraction of bonafide scores below the threshold and
    ``p_fa`` the fraction of spoof scores at or above it.
    """
    bona, spoof = _split(scores)
    bona, spoof = np.sort(bona), np.sort(spoof)
    thresholds = np.concatenate([[-np.inf], np.unique(np.concatenate([bona, spoof])), [np.inf]])
    p_miss = np.searchsorted(bona, thresholds, side="left") / bona.size
    p_fa = (spoof.size - np.searchsorted(spoof, thresholds, side="left")) / spoof.size
    return DetSweep(thresholds, p_miss, p_fa)


def eer(scores):
    """Equal error rate, as a fraction in [0, 1].

    Found on the first sweep point where ``p_miss - p_fa`` becomes
    non-negative, interpolating linearly from the previous point when the
    crossing falls strictly between them.
    """
    det = det_sweep(scores)
    d = det.p_miss - det.p_fa
    i = int(np.argmax(d >= 0))
    if d[i] == 0 or i == 0:
        return float(det.p_miss[i])
    alpha = -d[i - 1] / (d[i] - d[i - 1])
    return float(det.p_miss[i - 1] + alpha * (det.p_miss[i] - det.p_miss[i - 1]))


def min_tdcf(scores, beta=1.0):
    """Minimum normalised tandem detection cost ``min (beta*Pmiss + Pfa) / min(beta, 1)``."""
    if not np.isfinite(beta) or beta <= 0:
        raise ValidationError(f"beta must be > 0, got {beta!r}")
    det = det_sweep(scores)
    return float(np.min(beta * det.p_miss + det.p_fa) / min(beta, 1.0))


def check_fusion_weights(weights, n_systems=None):
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValidationError("fusion weights must be non-negative and finite")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValidationError(f"fusion weights must sum to 1, got {w.sum()!r}")
    if n_systems is not None and w.size != n_systems:
        raise ValidationError(f"got {w.size} weights for {n_systems} score sets")
    return w


def fuse(score_sets, weights):
    """Weighted sum of per-utterance scores across systems.

    Utterances are aligned by id; the output follows the first set's order.
    """
    score_sets = list(score_sets)
    if not score_sets:
        raise ValidationError("no score sets to fuse")
    w = check_fusion_weights(weights, len(score_sets))
    ref = score_sets[0]
    fused = w[0] * ref.scores
    ref_index = {u: i for i, u in enumerate(ref.utt_ids)}
    for n, other in enumerate(score_sets[1:], start=1):
        other_index = {u: i for i, u in enumerate(other.utt_ids)}
        for u in ref.utt_ids:
            if u not in other_index:
                raise DataError(f"utterance {u!r} missing from score set {n}")
        for u in other.utt_ids:
            if u not in ref_index:
                raise DataError(f"utterance {u!r} in score set {n} missing from score set 0")
        order = np.array([other_index[u] for u in ref.utt_ids], dtype=int)
        for u, k in zip(ref.utt_ids, ref.keys):
            if other.keys[other_index[u]] != k:
                raise DataError(f"utterance {u!r} has conflicting keys across score sets")
        fused = fused + w[n] * other.scores[order]
    return ScoreSet(ref.utt_ids, ref.keys, fused)


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def read_scores(path):
    """Parse ``<utt_id> <bonafide|spoof> <score>`` lines; ``#`` starts a comment."""
    ids, keys, scores = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            try:
                score = float(parts[2])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad score {parts[2]!r}") from None
            ids.append(parts[0])
            keys.append(parts[1])
            scores.append(score)
    try:
        return ScoreSet(ids, keys, scores)
    except ValidationError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_scores(path, score_set):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, k, s in zip(score_set.utt_ids, score_set.keys, score_set.scores):
            fh.write(f"{u} {k} {float(s)!r}\n")


def write_det_csv(path, det):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("threshold,p_miss,p_fa\n")
        for t, m, f in zip(det.thresholds, det.p_miss, det.p_fa):
            fh.write(f"{float(t)!r},{float(m)!r},{float(f)!r}\n")
