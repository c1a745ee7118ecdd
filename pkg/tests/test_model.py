import numpy as np
import pytest

from fcal import autodiff as ad
from fcal import model as M
from fcal.distmath import Rng
from fcal.errors import ConfigError, ContractError, DataFormatError, TrainingError
from fcal.losses import LossSpec, nll_loss


def small_model(seed=0, sizes=(3, 8, 4)):
    return M.init(seed, list(sizes))


class TestInit:
    def test_deterministic(self):
        assert np.array_equal(small_model(5).params, small_model(5).params)
        assert not np.array_equal(small_model(5).params, small_model(6).params)

    def test_parameter_count(self):
        assert M.param_count([4, 8, 4]) == 76
        assert M.init(0, [4, 8, 4]).n_params == 76

    def test_fan_in_bounds(self):
        m = M.init(1, [10, 50, 2])
        w1 = m.params[:500]
        assert np.all(np.abs(w1) <= np.sqrt(6 / 10))
        assert np.all(m.params[500:550] == 0.0)

    @pytest.mark.parametrize("head", [(0, 0, 0.15), (5, 1, 0.15), (0, 50, 0), (-1, 50, 0.15)])
    def test_invalid_sigma_head(self, head):
        with pytest.raises(ConfigError):
            M.init(0, [2, 4, 2], sigma_head=head)

    @pytest.mark.parametrize("sizes", [[], [3], [3, 0, 2], [3, 5, 3]])
    def test_invalid_sizes(self, sizes):
        with pytest.raises(ConfigError):
            M.init(0, sizes)


class TestForward:
    def test_zero_weights(self):
        m = small_model().with_params(np.zeros(M.param_count([3, 8, 4])))
        p = m.predict(np.ones((5, 3)))
        assert np.all(p.mu == 0.0)
        assert np.all(p.sigma == 25.0)

    def test_sigma_floor(self):
        m = M.init(0, [1, 2])
        params = np.array([0.0, -1e6, 0.0, 0.0])  # sigma pre-activation weight huge negative
        p = m.with_params(params).predict(np.array([[1.0]]))
        assert p.sigma[0, 0] == pytest.approx(m.sigma_min)
        assert m.sigma_min == pytest.approx(1e-3)

    def test_deterministic_and_finite(self):
        m = small_model(2)
        x = np.random.default_rng(0).normal(size=(20, 3))
        a, b = m.predict(x), m.predict(x)
        assert np.array_equal(a.mu, b.mu) and np.array_equal(a.sigma, b.sigma)
        assert np.all(np.isfinite(a.mu)) and np.all(a.sigma > 0)

    def test_tape_matches_numpy(self):
        m = small_model(3)
        x = np.random.default_rng(1).normal(size=(7, 3))
        t = ad.Tape()
        p = M.forward(m, x, t)
        ref = m.predict(x)
        assert np.allclose(p.mu.value, ref.mu, rtol=1e-13, atol=1e-13)
        assert np.allclose(p.sigma.value, ref.sigma, rtol=1e-13)

    def test_single_sample(self):
        m = small_model(3)
        t = ad.Tape()
        p = M.forward(m, np.zeros(3), t)
        assert p.mu.shape == (2,)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            M.forward(small_model(), np.zeros((2, 4)), ad.Tape())


class TestTraining:
    def test_loss_decreases_on_toy_bowl(self):
        g = np.random.default_rng(0)
        x = g.normal(size=(64, 2))
        y = x @ np.array([[1.5], [-0.5]]) + 0.3
        m = M.init(0, [2, 2])
        opt = M.SGDMomentum(lr=1e-2, momentum=0.9)
        losses = []
        for i in range(11):
            m, loss = M.train_step(m, (x, y), LossSpec(), opt, Rng(i), batch_index=i)
            losses.append(loss)
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_zero_lr_keeps_params(self):
        m = small_model()
        x = np.random.default_rng(0).normal(size=(8, 3))
        y = np.random.default_rng(1).normal(size=(8, 2))
        m2, _ = M.train_step(m, (x, y), LossSpec(), M.SGDMomentum(lr=0.0), Rng(0))
        assert np.array_equal(m.params, m2.params)

    def test_applied_gradient_is_autodiff_gradient(self):
        m = small_model(4)
        g = np.random.default_rng(2)
        x, y = g.normal(size=(40, 3)), g.normal(size=(40, 2))
        spec = LossSpec(lam=0.3, K=16, H=8)

        def f(t, p):
            pred = M.forward(m, x, t, p)
            from fcal.losses import objective
            return objective(pred, y, spec, Rng(9))[0]

        assert ad.grad_check(f, m.params) < 1e-4
        _, grad, _ = M.loss_and_grad(m, x, y, spec, Rng(9))
        m2, _ = M.train_step(m, (x, y), spec, M.SGDMomentum(lr=0.1, momentum=0.0), Rng(9))
        assert np.allclose(m.params - m2.params, 0.1 * grad, rtol=1e-12, atol=1e-15)

    def test_batch_smaller_than_k(self):
        m = small_model()
        x, y = np.zeros((10, 3)), np.zeros((10, 2))
        with pytest.raises(ContractError):
            M.train_step(m, (x, y), LossSpec(lam=0.5, K=64), M.SGDMomentum(), Rng(0))

    def test_non_finite_loss_reports_batch(self):
        m = small_model()
        x = np.zeros((4, 3))
        y = np.full((4, 2), 1e200)
        with pytest.raises(TrainingError) as info:
            M.train_step(m, (x, y), LossSpec(), M.SGDMomentum(), Rng(0), batch_index=17)
        assert info.value.batch_index == 17

    def test_fit_logs_every_epoch_and_is_deterministic(self):
        g = np.random.default_rng(0)
        x = g.normal(size=(300, 3))
        y = x[:, :2] + 0.5 * g.normal(size=(300, 2))
        m0 = M.init_for_data(0, x, y, hidden=(8,))
        cfg = M.TrainConfig(epochs=3, batch_size=64, lr=1e-2, seed=1)
        spec = LossSpec(lam=0.2, K=32, H=16)
        a, ha = M.fit(m0, x, y, spec, cfg)
        b, hb = M.fit(m0, x, y, spec, cfg)
        assert [r.epoch for r in ha] == [0, 1, 2, 3]
        assert np.array_equal(a.params, b.params)
        assert ha == hb

    def test_normalizers_from_data(self):
        g = np.random.default_rng(0)
        x = g.normal(5.0, 3.0, size=(200, 4))
        y = g.normal(-2.0, 7.0, size=(200, 2))
        m = M.init_for_data(0, x, y)
        assert m.layer_sizes == [4, 32, 32, 4]
        assert np.allclose(m.x_shift, x.mean(0)) and np.allclose(m.y_shift, y.mean(0))
        assert np.all(m.y_scale == 1.0)
        assert np.allclose(M.init_for_data(0, x, y, scale_labels=True).y_scale, y.std(0))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        g = np.random.default_rng(0)
        m = M.init(3, [3, 5, 4], x_shift=g.normal(size=3), y_scale=[2.0, 3.0])
        M.save_checkpoint(m, tmp_path / "ckpt.json")
        r = M.load_checkpoint(tmp_path / "ckpt.json")
        assert np.array_equal(r.params, m.params)
        assert np.array_equal(r.x_shift, m.x_shift) and np.array_equal(r.y_scale, m.y_scale)
        assert r.layer_sizes == m.layer_sizes and r.sigma_head == m.sigma_head

    def test_version_mismatch(self, tmp_path):
        m = M.init(3, [3, 4])
        p = tmp_path / "c.json"
        M.save_checkpoint(m, p)
        p.write_text(p.read_text().replace('"format_version": 1', '"format_version": 99'))
        with pytest.raises(DataFormatError):
            M.load_checkpoint(p)

    def test_malformed(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(DataFormatError):
            M.load_checkpoint(p)
        with pytest.raises(DataFormatError):
            M.load_checkpoint(tmp_path / "missing.json")


def test_nll_of_prediction_matches_loss():
    m = small_model(7)
    x = np.random.default_rng(3).normal(size=(10, 3))
    y = np.random.default_rng(4).normal(size=(10, 2))
    t = ad.Tape()
    val = nll_loss(M.forward(m, x, t), y)
    assert float(val.value) == pytest.approx(nll_loss(m.predict(x), y), rel=1e-13)
