import numpy as np
import pytest

import oracles
from wavespoof import metrics
from wavespoof._validation import DataError, ValidationError
from wavespoof.metrics import ScoreSet


def test_det_sweep_examples():
    det = metrics.det_sweep(([2.0, 3.0], [0.0, 1.0]))
    i = np.searchsorted(det.thresholds, 2.0)
    assert (det.p_miss[i], det.p_fa[i]) == (0.0, 0.0)
    assert (det.p_miss[0], det.p_fa[0]) == (0.0, 1.0)
    assert (det.p_miss[-1], det.p_fa[-1]) == (1.0, 0.0)


def test_det_sweep_matches_counting_oracle(rng):
    bona, spoof = rng.normal(1, 1, 50), rng.normal(0, 1, 50)
    det = metrics.det_sweep((bona, spoof))
    ref = oracles.det_points(bona, spoof)
    assert len(ref) == det.thresholds.size
    for (t, pm, pf), t2, pm2, pf2 in zip(ref, det.thresholds, det.p_miss, det.p_fa):
        assert (t, pm, pf) == (t2, pm2, pf2)
    assert np.all(np.diff(det.p_miss) >= 0) and np.all(np.diff(det.p_fa) <= 0)


def test_eer_examples(rng):
    assert metrics.eer(([2, 3], [0, 1])) == 0.0
    assert metrics.eer(([0, 1], [2, 3])) == 1.0
    scores = rng.permutation(np.arange(20.0))
    bona, spoof = scores[:10] + 0.3, scores[10:]
    assert metrics.eer((bona, spoof)) == pytest.approx(oracles.eer_bruteforce(bona, spoof), abs=1e-12)


def test_min_tdcf_examples(rng):
    for beta in (0.3, 1.0, 5.0):
        assert metrics.min_tdcf(([2, 3], [0, 1]), beta) == 0.0
    assert metrics.min_tdcf(([0, 1], [2, 3]), 1.0) == 1.0
    bona, spoof = rng.normal(1, 1, 40), rng.normal(0, 1, 30)
    for beta in (0.5, 1.0, 2.0):
        assert metrics.min_tdcf((bona, spoof), beta) == pytest.approx(
            oracles.min_tdcf_bruteforce(bona, spoof, beta), abs=1e-12)
    with pytest.raises(ValidationError):
        metrics.min_tdcf((bona, spoof), 0.0)


def test_single_class_rejected():
    with pytest.raises(ValidationError):
        metrics.eer(ScoreSet.from_arrays([1.0, 2.0], []))


def test_score_set_validation():
    with pytest.raises(ValidationError):
        ScoreSet(["a", "a"], ["bonafide", "spoof"], [1, 2])
    with pytest.raises(ValidationError):
        ScoreSet(["a"], ["genuine"], [1])
    with pytest.raises(ValidationError):
        ScoreSet(["a"], ["spoof"], [np.nan])


def test_fusion_examples():
    s = ScoreSet(["a", "b"], ["bonafide", "spoof"], [2.0, -1.0])
    np.testing.assert_array_equal(metrics.fuse([s], [1.0]).scores, s.scores)
    assert metrics.FUSION_1 == (0.75, 0.125, 0.125)
    t = ScoreSet(["b", "a"], ["spoof", "bonafide"], [5.0, 4.0])
    fused = metrics.fuse([s, t], [0.5, 0.5])
    assert fused.scores[0] == 3.0
    assert fused.keys == s.keys


def test_fusion_errors():
    s = ScoreSet(["a", "b"], ["bonafide", "spoof"], [2.0, -1.0])
    other = ScoreSet(["a", "c"], ["bonafide", "spoof"], [1.0, 1.0])
    with pytest.raises(DataError, match="'b'"):
        metrics.fuse([s, other], [0.5, 0.5])
    with pytest.raises(ValidationError):
        metrics.fuse([s, s], [0.6, 0.6])
    with pytest.raises(ValidationError):
        metrics.fuse([s, s], [1.0])
    flipped = ScoreSet(["a", "b"], ["spoof", "spoof"], [1.0, 1.0])
    with pytest.raises(DataError):
        metrics.fuse([s, flipped], [0.5, 0.5])


def test_score_file_round_trip(tmp_path, rng):
    s = ScoreSet.from_arrays(rng.standard_normal(5), rng.standard_normal(7) * 1e-300)
    path = tmp_path / "scores.txt"
    metrics.write_scores(path, s)
    back = metrics.read_scores(path)
    assert back.utt_ids == s.utt_ids and back.keys == s.keys
    np.testing.assert_array_equal(back.scores, s.scores)


def test_score_file_errors(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("a bonafide 1.0\nb spoof\n")
    with pytest.raises(DataError, match=":2"):
        metrics.read_scores(path)
    path.write_text("a bonafide x\n")
    with pytest.raises(DataError):
        metrics.read_scores(path)


def test_det_csv(tmp_path):
    det = metrics.det_sweep(([1.0], [0.0]))
    metrics.write_det_csv(tmp_path / "det.csv", det)
    lines = (tmp_path / "det.csv").read_text().splitlines()
    assert lines[0] == "threshold,p_miss,p_fa" and len(lines) == 5
