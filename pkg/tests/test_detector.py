import numpy as np
import pytest

from spoofbench.detector import (
    ModelParams,
    forward,
    init_params,
    load_checkpoint,
    loss_and_grad,
    save_checkpoint,
    score,
    score_features,
)
from spoofbench.features import MelConfig, MelSpectrogram
from spoofbench.optim import adam_init, adam_step


def flat(arrays):
    return np.concatenate([a.ravel() for a in arrays])


def with_vector(p, vec):
    q = p.copy()
    at = 0
    for a in q.arrays():
        a[...] = vec[at : at + a.size].reshape(a.shape)
        at += a.size
    return q


def fd_gradient(p, x, y, weights, h=1e-4):
    theta = flat(p.arrays())
    g = np.zeros_like(theta)
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        lu, _ = loss_and_grad(with_vector(p, up), x, y, weights)
        ld, _ = loss_and_grad(with_vector(p, dn), x, y, weights)
        g[i] = (lu - ld) / (2 * h)
    return g


class TestInit:
    def test_deterministic(self):
        a, b = init_params(5), init_params(5)
        for x, y in zip(a.arrays(), b.arrays()):
            np.testing.assert_array_equal(x, y)

    def test_zero_biases_and_bounds(self):
        p = init_params(0, (16, 8, 2))
        assert not any(b.any() for b in p.biases)
        for w, (fi, fo) in zip(p.weights, [(16, 8), (8, 2)]):
            assert np.abs(w).max() <= np.sqrt(6 / (fi + fo))

    def test_arch_must_end_in_two(self):
        with pytest.raises(ValueError):
            init_params(0, (16, 3))


class TestForward:
    def test_zero_params_zero_logits(self):
        p = init_params(0, (4, 3, 2))
        for a in p.arrays():
            a[...] = 0.0
        out = forward(p, np.random.default_rng(0).normal(size=(5, 4)))
        assert not out.any()

    def test_rows_independent(self):
        p = init_params(1, (6, 4, 2))
        row = np.random.default_rng(2).normal(size=6)
        out = forward(p, np.stack([row, row, row]))
        np.testing.assert_array_equal(out[0], out[1])
        np.testing.assert_array_equal(out[1], out[2])

    def test_hand_computed_toy(self):
        # one hidden layer, identity then collapse: input (1,0) -> logits (1,0)
        p = ModelParams(
            weights=[np.eye(2), np.array([[1.0, 0.0], [1.0, 0.0]])],
            biases=[np.zeros(2), np.zeros(2)],
            arch=(2, 2, 2),
            seed=0,
        )
        np.testing.assert_allclose(forward(p, [[1.0, 0.0]]), [[1.0, 0.0]])

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            forward(init_params(0, (4, 2)), np.zeros((1, 3)))


class TestLossAndGrad:
    def test_uniform_softmax_loss(self):
        p = init_params(0, (3, 2))
        for a in p.arrays():
            a[...] = 0.0
        loss, _ = loss_and_grad(p, np.ones((4, 3)), [0, 0, 0, 0], (1.0, 1.0))
        assert loss == pytest.approx(np.log(2))

    def test_class_weighting_scales_real(self):
        p = init_params(3, (3, 2))
        x = np.random.default_rng(1).normal(size=(1, 3))
        l1, _ = loss_and_grad(p, x, [0], (1.0, 1.0))
        l10, _ = loss_and_grad(p, x, [0], (10.0, 1.0))
        assert l10 == pytest.approx(10 * l1)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(42)
        worst = 0.0
        for trial in range(10):
            dims = (int(rng.integers(2, 8)), int(rng.integers(2, 8)), 2)
            p = init_params(trial, dims)
            x = rng.normal(size=(int(rng.integers(1, 6)), dims[0]))
            y = rng.integers(0, 2, size=x.shape[0])
            _, g = loss_and_grad(p, x, y, (10.0, 1.0))
            ga = flat(g.arrays())
            gn = fd_gradient(p, x, y, (10.0, 1.0))
            worst = max(worst, np.linalg.norm(ga - gn) / np.linalg.norm(gn))
        assert worst < 1e-4

    def test_permutation_equivariance(self):
        p = init_params(9, (5, 4, 2))
        rng = np.random.default_rng(5)
        x = rng.normal(size=(6, 5))
        y = rng.integers(0, 2, 6)
        perm = rng.permutation(6)
        l1, _ = loss_and_grad(p, x, y, (10.0, 1.0))
        l2, _ = loss_and_grad(p, x[perm], y[perm], (10.0, 1.0))
        assert l2 == pytest.approx(l1, rel=1e-12)
        np.testing.assert_allclose(
            forward(p, x)[perm], forward(p, x[perm]), atol=1e-12
        )

    def test_loss_nonnegative_and_zero_only_at_certainty(self):
        p = init_params(2, (3, 2))
        rng = np.random.default_rng(8)
        for _ in range(20):
            x = rng.normal(size=(3, 3))
            y = rng.integers(0, 2, 3)
            loss, _ = loss_and_grad(p, x, y, (1.0, 1.0))
            assert loss > 0.0

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            loss_and_grad(init_params(0, (3, 2)), np.zeros((0, 3)), [], (1, 1))


class TestScore:
    def test_zero_params_score_half(self):
        p = init_params(0, (160, 8, 2))
        for a in p.arrays():
            a[...] = 0.0
        m = MelSpectrogram(np.random.default_rng(0).normal(size=(80, 5)), MelConfig())
        assert score(p, m) == pytest.approx(0.5)

    def test_range_and_monotonicity(self):
        p = init_params(4, (6, 4, 2))
        x = np.random.default_rng(0).normal(size=(50, 6))
        s = score_features(p, x)
        assert ((0 <= s) & (s <= 1)).all()
        logits = forward(p, x)
        gaps = logits[:, 0] - logits[:, 1]
        order = np.argsort(gaps)
        assert (np.diff(s[order]) >= -1e-15).all()


class TestCheckpoints:
    def test_round_trip_after_quantization(self, tmp_path):
        p = init_params(12, (6, 5, 2))
        state = adam_init(p)
        p2, state2 = adam_step(state, p, _fake_grads(p), 1e-3)
        a = tmp_path / "a.ckpt"
        save_checkpoint(p2, state2, a, epoch=4, dev_metric=0.25)
        lp, ls, meta = load_checkpoint(a)
        # weights pass through float32 once; a second round trip is identity
        b = tmp_path / "b.ckpt"
        save_checkpoint(lp, ls, b, epoch=4, dev_metric=0.25)
        lp2, ls2, _ = load_checkpoint(b)
        for x, y in zip(lp.arrays(), lp2.arrays()):
            np.testing.assert_array_equal(x, y)
        for x, y in zip(ls.m + ls.v, ls2.m + ls2.v):
            np.testing.assert_array_equal(x, y)  # moments stored float64
        for x, y in zip(lp.arrays(), p2.arrays()):
            np.testing.assert_allclose(x, y, atol=1e-6)
        assert ls2.t == state2.t
        assert meta["epoch"] == "4"

    def test_metadata_schema(self, tmp_path):
        p = init_params(7, (4, 3, 2))
        path = tmp_path / "m.ckpt"
        save_checkpoint(p, None, path, epoch=2, dev_metric=0.125)
        _, state, meta = load_checkpoint(path)
        assert state is None
        assert meta["arch"] == "4,3,2"
        assert meta["seed"] == "7"
        assert float(meta["dev_metric"]) == 0.125

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "old.ckpt"
        path.write_bytes(b"SBCKPT v0\narch=4,2\nseed=0\nend\n")
        with pytest.raises(ValueError, match="v0"):
            load_checkpoint(path)


def _fake_grads(p):
    from spoofbench.detector import Grads

    rng = np.random.default_rng(0)
    return Grads(
        [rng.normal(size=w.shape) for w in p.weights],
        [rng.normal(size=b.shape) for b in p.biases],
    )
