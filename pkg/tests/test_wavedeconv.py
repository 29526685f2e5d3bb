import math

import numpy as np
import pytest

import oracles
from wavespoof import wavedeconv as wd
from wavespoof._validation import DataError, ValidationError
from wavespoof.synth import synth_dataset
from wavespoof.wavelets import MEXH_CENTER_FREQ, cwt, freq_to_scale, scale_grid


def test_kernel_examples():
    k = wd.wd_kernel(3.0, 33)
    np.testing.assert_array_equal(k, k[::-1])
    assert k[16 + 3] == pytest.approx(0.0, abs=1e-15)
    assert wd.wd_kernel(1.0, 5)[2] == pytest.approx(-0.8673, abs=1e-4)
    with pytest.raises(ValidationError):
        wd.wd_kernel(1.0, 4)
    with pytest.raises(ValidationError):
        wd.wd_kernel_bank([1.0, -2.0], 5)


def test_kernel_gradient_forms_agree():
    s = np.array([0.3, 1.0, 7.5, 100.0])
    np.testing.assert_allclose(wd.wd_kernel_grad(s, 65), wd.wd_kernel_grad_parts(s, 65),
                               rtol=1e-12, atol=1e-16)


def test_forward_examples(rng):
    assert not np.any(wd.wd_forward(np.zeros(50), [1, 2], 9))
    x = rng.standard_normal(128)
    s = [1.0, 2.0, 4.0, 8.0]
    np.testing.assert_allclose(wd.wd_forward(x, s, 33), oracles.wd_double_loop(x, s, 33), atol=1e-12)
    assert wd.wd_forward(np.ones(3200), [1.0], 251).shape == (1, 3200)
    batch = rng.standard_normal((3, 100))
    z = wd.wd_forward(batch, s, 33)
    assert z.shape == (3, 4, 100)
    np.testing.assert_array_equal(z[1], wd.wd_forward(batch[1], s, 33))


def test_forward_matches_cwt_up_to_constant_ratio(rng):
    grid = scale_grid(2.0, 0.5, 320, 0.1)
    x = rng.standard_normal(400)
    for s in grid.scales:
        K = 2 * int(math.ceil(5 * s)) + 1  # same support as the CWT kernel
        z = wd.wd_forward(x, [s], K)[0]
        W = cwt(x, [s], truncation=5.0)[0]
        mask = np.abs(W) > 1e-6 * np.abs(W).max()
        ratio = z[mask] / W[mask]
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-10)


def test_backward_zero_upstream(rng):
    x = rng.standard_normal(64)
    assert not np.any(wd.wd_backward(x, [1.0, 3.0], np.zeros((2, 64)), 17))


def test_backward_matches_central_differences_sum_of_squares(rng):
    x = rng.standard_normal(256)
    s = np.array([0.8, 3.0, 11.0, 40.0])
    K = 65
    z = wd.wd_forward(x, s, K)
    g = wd.wd_backward(x, s, 2 * z, K)
    for i in range(s.size):
        def energy(v):
            sc = s.copy()
            sc[i] = v
            return np.sum(wd.wd_forward(x, sc, K) ** 2)
        fd = oracles.fd2(energy, s[i], 1e-4 * s[i])
        assert abs(fd - g[i]) / abs(g[i]) <= 1e-5


def test_backward_additive_over_batch(rng):
    X = rng.standard_normal((3, 80))
    G = rng.standard_normal((3, 2, 80))
    s = [1.5, 6.0]
    total = wd.wd_backward(X, s, G, 21)
    parts = sum(wd.wd_backward(X[b], s, G[b], 21) for b in range(3))
    np.testing.assert_allclose(total, parts, rtol=1e-12)


def test_update_scales_examples():
    np.testing.assert_array_equal(wd.update_scales([2.0, 5.0], [0.0, 0.0], 1.0), [2.0, 5.0])
    assert wd.update_scales([1.0], [10.0], 1.0, s_min=0.05)[0] == 0.05
    assert wd.update_scales([4.0], [1.0], 0.5)[0] == 3.5
    assert wd.update_scales([500.0], [-100.0], 1.0)[0] == wd.S_MAX
    with pytest.raises(ValidationError):
        wd.update_scales([1.0], [1.0, 2.0], 1.0)


def test_didactic_init():
    np.testing.assert_array_equal(wd.didactic_init(8), [1, 2, 4, 8, 16, 32, 64, 128])
    np.testing.assert_array_equal(wd.didactic_init(1), [1.0])
    s = wd.didactic_init(20)
    np.testing.assert_allclose(s[1:] / s[:-1], 128 ** (1 / 19), rtol=1e-12)


def test_tone_activates_nearest_scale():
    scales = wd.didactic_init(8)
    for k in range(1, 8):
        f0 = MEXH_CENTER_FREQ * 16000 / scales[k] * 1.1
        x = np.sin(2 * np.pi * f0 * np.arange(8000) / 16000)
        act = np.abs(wd.wd_forward(x, scales, 251)).mean(axis=1)
        nearest = np.argmin(np.abs(np.log(scales / freq_to_scale(f0, sample_rate=16000))))
        assert int(np.argmax(act)) == nearest


def _tiny_net(rng):
    return wd.ToyNet(rng.standard_normal((3, 4)), rng.standard_normal(3),
                     rng.standard_normal((2, 3)), rng.standard_normal(2), 0.01)


def test_net_forward_examples(rng):
    z = rng.standard_normal((5, 2, 30))
    net = _tiny_net(rng)
    logp, _ = net_forward_checked(net, z)
    np.testing.assert_allclose(np.exp(logp).sum(axis=1), 1.0, atol=1e-10)
    zero = wd.ToyNet(np.zeros((3, 4)), np.zeros(3), np.zeros((2, 3)), np.zeros(2))
    np.testing.assert_allclose(wd.net_forward(zero, z)[0], math.log(0.5))


def net_forward_checked(net, z):
    logp, cache = wd.net_forward(net, z)
    assert logp.shape == (z.shape[0], 2)
    return logp, cache


def test_net_backward_matches_finite_differences(rng):
    net = _tiny_net(rng)
    z = rng.standard_normal((6, 2, 25))
    y = np.array([0, 1, 1, 0, 1, 0])
    _, cache = wd.net_forward(net, z)
    grads, dE_dz = wd.net_backward(net, cache, y)
    h = 1e-6
    for name, p in net.params().items():
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = wd.nll_loss(wd.net_forward(net, z)[0], y)
            p[idx] = old - h
            down = wd.nll_loss(wd.net_forward(net, z)[0], y)
            p[idx] = old
            fd = (up - down) / (2 * h)
            assert abs(fd - grads[name][idx]) <= 1e-5 * max(abs(fd), 1e-3)
    for idx in [(0, 0, 3), (2, 1, 7), (5, 0, 24)]:
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        fd = (wd.nll_loss(wd.net_forward(net, zp)[0], y)
              - wd.nll_loss(wd.net_forward(net, zm)[0], y)) / (2 * h)
        assert abs(fd - dE_dz[idx]) <= 1e-5 * max(abs(fd), 1e-3)


def test_net_forward_names_failing_layer(rng):
    net = _tiny_net(rng)
    net.W1[0, 0] = np.inf
    with pytest.raises(FloatingPointError, match="dense1"):
        wd.net_forward(net, rng.standard_normal((1, 2, 10)))


def test_batch_sampling():
    data = synth_dataset(n_speakers=2, n_per_class=3, duration=0.5, seed=1)
    X, y = wd.sample_batch(data, rng=np.random.default_rng(0))
    assert X.shape == (256, 3200)
    assert (y == 1).sum() == 128 and (y == 0).sum() == 128
    X2, y2 = wd.sample_batch(data, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(X, X2)
    assert wd.BatchSpec().chunk_len(16000) == 3200


def test_batch_sampling_requires_paired_speaker():
    data = synth_dataset(n_speakers=2, n_per_class=2, duration=0.3, seed=1)
    data = [u for u in data if not (u.speaker == "spk01" and u.label == 1)]
    with pytest.raises(DataError, match="spk01"):
        wd.sample_batch(data, rng=0)


def test_chunked_scoring_averages_five_chunks(rng):
    net = wd.ToyNet.init(4, 3, rng=0)
    x = rng.standard_normal(16000) * 0.1
    scales = [2.0, 8.0]
    chunks = wd.utterance_chunks(x, 3200)
    assert chunks.shape == (5, 3200)
    per_chunk = [wd.score_utterance(c, scales, net, 33, 3200) for c in chunks]
    assert wd.score_utterance(x, scales, net, 33, 3200) == pytest.approx(np.mean(per_chunk), abs=1e-12)


def _small_training(**kw):
    data = synth_dataset(n_speakers=2, n_per_class=2, duration=0.4, seed=3)
    cfg = wd.TrainConfig(n_scales=4, kernel_size=33, epochs=3, steps_per_epoch=1,
                         batch=wd.BatchSpec(8), **kw)
    return wd.train(data, cfg)


def test_training_zero_learning_rate_keeps_scales():
    res = _small_training(lr_scales=0.0)
    assert res.trajectory.shape == (4, 4)
    assert np.all(res.trajectory == res.trajectory[0])


def test_training_is_reproducible():
    a, b = _small_training(), _small_training()
    np.testing.assert_array_equal(a.trajectory, b.trajectory)
    np.testing.assert_array_equal(a.net.W1, b.net.W1)
    assert a.losses == b.losses


def test_trajectory_csv_round_trip(tmp_path):
    traj = _small_training().trajectory
    path = tmp_path / "traj.csv"
    wd.write_trajectory_csv(path, traj)
    assert path.read_text().splitlines()[0] == "epoch,scale_0,scale_1,scale_2,scale_3"
    np.testing.assert_array_equal(wd.read_trajectory_csv(path), traj)


def test_train_config_validation():
    with pytest.raises(ValidationError):
        wd.TrainConfig(kernel_size=250).validate()
    with pytest.raises(ValidationError):
        wd.TrainConfig(s_min=10, s_max=1).validate()
