import io
import math

import numpy as np
import pytest

from croce import flow as fl
from croce import numerics as nm
from croce.data import make_moons
from croce.flow import ConditionalFlow, FlowConfig, fit, threshold_tau
from croce.numerics import Tensor

SMALL = FlowConfig(n_layers=3, hidden=32, epochs=80, patience=30, cond_embed_gain=0.0, seed=0)


@pytest.fixture(scope="module")
def moons_xy():
    ds = make_moons(600, noise=0.08, seed=2)
    lo, rng_ = ds.X.min(axis=0), np.ptp(ds.X, axis=0)
    X = (ds.X - lo) / rng_
    return X, ds.y.astype(np.float64)


@pytest.fixture(scope="module")
def trained(moons_xy):
    X, y = moons_xy
    return fit(X, y, SMALL)


class TestIdentityInit:
    def test_untrained_flow_is_standard_normal(self):
        flow = ConditionalFlow(3, FlowConfig(seed=1))
        X = np.random.default_rng(0).normal(size=(50, 3))
        expect = -0.5 * (X**2).sum(axis=1) - 1.5 * math.log(2 * math.pi)
        np.testing.assert_allclose(flow.log_prob(X, np.full(50, 0.5)), expect, atol=1e-12)

    def test_untrained_transform_is_identity(self):
        flow = ConditionalFlow(2, FlowConfig(seed=1))
        X = np.random.default_rng(1).normal(size=(20, 2))
        u, logdet = flow.transform_to_noise(X, np.zeros(20))
        np.testing.assert_array_equal(u, X)
        np.testing.assert_array_equal(logdet, np.zeros(20))


class TestInvertibility:
    def test_round_trip(self, trained, moons_xy):
        X, y = moons_xy
        u, _ = trained.transform_to_noise(X, y)
        back = trained.transform_to_data(u, y)
        assert np.max(np.abs(back - X)) < 1e-8

    def test_noise_is_roughly_standard_normal(self, trained, moons_xy):
        X, y = moons_xy
        u, _ = trained.transform_to_noise(X, y)
        assert abs(u.mean()) < 0.2
        assert abs(u.std() - 1.0) < 0.25


def test_log_prob_matches_transform_decomposition(trained, moons_xy):
    # two independent code paths: autodiff graph vs the numpy fast path
    X, y = moons_xy
    u, logdet = trained.transform_to_noise(X[:64], y[:64])
    by_hand = -0.5 * (u**2).sum(axis=1) - trained.d / 2 * math.log(2 * math.pi) - logdet
    np.testing.assert_allclose(trained.log_prob(X[:64], y[:64]), by_hand, atol=1e-10)


class TestGradients:
    def test_x_gradient_matches_finite_differences(self, trained):
        rng = np.random.default_rng(3)
        X = rng.uniform(0.2, 0.8, size=(10, 2))
        s = rng.uniform(size=10)
        xt, st = Tensor(X, requires_grad=True), Tensor(s[:, None])
        nm.backward(nm.mean(trained.log_prob_nodes(xt, st)))
        g = xt.grad * len(X)  # undo the mean
        eps = 1e-6
        for i in range(len(X)):
            for j in range(2):
                hi, lo_ = X.copy(), X.copy()
                hi[i, j] += eps
                lo_[i, j] -= eps
                fd = (trained.log_prob(hi, s)[i] - trained.log_prob(lo_, s)[i]) / (2 * eps)
                assert abs(g[i, j] - fd) < 1e-4

    def test_s_gradient_matches_finite_differences(self, trained):
        rng = np.random.default_rng(4)
        X = rng.uniform(0.2, 0.8, size=(8, 2))
        s = rng.uniform(0.1, 0.9, size=8)
        xt, st = Tensor(X), Tensor(s[:, None], requires_grad=True)
        nm.backward(nm.mean(trained.log_prob_nodes(xt, st)))
        g = st.grad * len(X)
        eps = 1e-6
        for i in range(len(X)):
            fd = (trained.log_prob(X, s + eps * (np.arange(8) == i))[i]
                  - trained.log_prob(X, s - eps * (np.arange(8) == i))[i]) / (2 * eps)
            assert abs(g[i, 0] - fd) < 1e-4


class TestAutoregressiveMasks:
    def test_mu_never_sees_forbidden_inputs(self):
        # gradient of output j w.r.t. input i must be exactly zero when
        # order[i] >= order[j]; anything else is a mask leak
        d = 4
        rng = np.random.default_rng(5)
        layer = fl.MadeLayer(d, 16, np.arange(1, d + 1), cap=5.0, rng=rng)
        for p in layer.params:  # break the zero output heads so leaks would show
            p.data = rng.normal(0.0, 0.5, size=p.data.shape)
        x_val = rng.normal(size=(1, d))
        s = Tensor(np.array([[0.3]]))
        for j in range(d):
            for head in (0, 1):
                x = Tensor(x_val, requires_grad=True)  # fresh graph per backward
                out = layer.mu_logsig(x, s)[head]
                pick = np.zeros((1, d))
                pick[0, j] = 1.0
                nm.backward(nm.row_sum(nm.mul(out, Tensor(pick))))
                g = x.grad[0]
                for i in range(d):
                    if layer.order[i] >= layer.order[j]:
                        assert g[i] == 0.0

    def test_full_flow_jacobian_is_triangular_in_order(self):
        flow = ConditionalFlow(3, FlowConfig(n_layers=1, hidden=16, seed=6))
        rng = np.random.default_rng(7)
        for p in flow.params:
            p.data = rng.normal(0.0, 0.3, size=p.data.shape)
        x0 = rng.normal(size=(1, 3))
        u0, _ = flow.transform_to_noise(x0, np.array([0.5]))
        eps = 1e-7
        for i in range(3):
            xp = x0.copy()
            xp[0, i] += eps
            du = (flow.transform_to_noise(xp, np.array([0.5]))[0] - u0)[0] / eps
            for j in range(3):
                if flow.layers[0].order[j] < flow.layers[0].order[i]:
                    assert abs(du[j]) < 1e-6


class TestNormalization:
    @pytest.mark.parametrize("s_level", [0.1, 0.5, 0.9])
    def test_density_integrates_to_one(self, trained, s_level):
        ticks = np.linspace(-3.0, 4.0, 241)
        gx, gy = np.meshgrid(ticks, ticks)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        dens = np.empty(len(pts))
        for start in range(0, len(pts), 8192):
            chunk = pts[start : start + 8192]
            u, logdet = trained.transform_to_noise(chunk, np.full(len(chunk), s_level))
            dens[start : start + 8192] = np.exp(
                -0.5 * (u**2).sum(axis=1) - math.log(2 * math.pi) - logdet
            )
        mass = np.trapezoid(np.trapezoid(dens.reshape(gx.shape), ticks, axis=1), ticks)
        assert abs(mass - 1.0) < 0.03


class TestUnivariateClosedForm:
    def test_d1_flow_is_a_conditional_gaussian(self):
        # with d=1 every mask is zero, so the transform collapses to
        # x = mu(s) + sigma(s) * z and the density has a closed form
        rng = np.random.default_rng(8)
        s = rng.integers(0, 2, size=400).astype(np.float64)
        x = np.where(s > 0.5, 1.5, -1.5) + 0.3 * rng.standard_normal(400)
        flow = fit(x[:, None], s, FlowConfig(n_layers=2, hidden=16, epochs=120, patience=40,
                                             cond_embed_gain=0.0, seed=3))
        for sv in (0.0, 1.0):
            zero = np.zeros((1, 1))
            mu_tot, sig_tot = 0.0, 1.0
            for layer in reversed(flow.layers):
                mu, logsig = layer.np_mu_logsig(zero, np.array([[sv]]))
                mu_tot = mu[0, 0] + math.exp(logsig[0, 0]) * mu_tot
                sig_tot *= math.exp(logsig[0, 0])
            want = 1.5 if sv > 0.5 else -1.5
            assert abs(mu_tot - want) < 0.15
            assert abs(sig_tot - 0.3) < 0.1
            grid = np.linspace(mu_tot - 2, mu_tot + 2, 50)[:, None]
            closed = -0.5 * ((grid[:, 0] - mu_tot) / sig_tot) ** 2 - math.log(
                sig_tot * math.sqrt(2 * math.pi)
            )
            np.testing.assert_allclose(flow.log_prob(grid, np.full(50, sv)), closed, atol=1e-8)


class TestConditioning:
    def test_samples_follow_the_conditioner(self, trained, moons_xy):
        X, y = moons_xy
        for label in (0.0, 1.0):
            xs = trained.sample(300, np.full(300, label), seed=9)
            own = X[y == label]
            other = X[y != label]
            d_own = np.abs(xs[:, None, :] - own[None]).sum(axis=2).min(axis=1).mean()
            d_other = np.abs(xs[:, None, :] - other[None]).sum(axis=2).min(axis=1).mean()
            assert d_own < d_other

    def test_sample_seed_determinism(self, trained):
        a = trained.sample(20, 0.5, seed=11)
        b = trained.sample(20, 0.5, seed=11)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, trained.sample(20, 0.5, seed=12))

    def test_embed_is_monotone_and_saturating(self):
        flow = ConditionalFlow(2, FlowConfig(cond_embed_gain=12.0))
        s = np.linspace(0, 1, 21)[:, None]
        e = flow._embed(s)
        assert np.all(np.diff(e[:, 0]) > 0)
        assert e[0, 0] < 0.01 and e[-1, 0] > 0.99
        raw = ConditionalFlow(2, FlowConfig(cond_embed_gain=0.0))
        np.testing.assert_array_equal(raw._embed(s), s)


class TestThreshold:
    def test_tau_is_the_median_conditional_log_likelihood(self, trained, moons_xy):
        X, y = moons_xy
        assert threshold_tau(trained, X, y) == np.median(trained.log_prob(X, y))

    def test_tau_rejects_empty(self, trained):
        with pytest.raises(ValueError):
            threshold_tau(trained, np.empty((0, 2)), np.empty(0))


class TestFitBehaviour:
    def test_training_improves_on_identity_init(self, trained, moons_xy):
        X, y = moons_xy
        init = ConditionalFlow(2, SMALL)
        assert trained.log_prob(X, y).mean() > init.log_prob(X, y).mean() + 1.0

    def test_fit_is_deterministic(self, moons_xy):
        X, y = moons_xy
        cfg = FlowConfig(n_layers=1, hidden=16, epochs=5, cond_embed_gain=0.0, seed=5)
        a, b = fit(X, y, cfg), fit(X, y, cfg)
        for pa, pb in zip(a.params, b.params):
            np.testing.assert_array_equal(pa.data, pb.data)
        assert a.tau == b.tau

    def test_too_few_rows_rejected(self):
        with pytest.raises(ValueError, match="rows"):
            fit(np.ones((10, 2)), np.ones(10), FlowConfig(batch_size=128))

    def test_conditioner_shape_mismatch_rejected(self, trained):
        with pytest.raises(ValueError, match="conditioner"):
            trained.log_prob(np.ones((4, 2)), np.ones(3))


class TestSerialization:
    def test_round_trip_is_bit_exact(self, trained, moons_xy, tmp_path):
        X, y = moons_xy
        path = tmp_path / "flow.npz"
        trained.save(path)
        loaded = ConditionalFlow.load(path)
        assert loaded.tau == trained.tau
        assert loaded.config == trained.config
        np.testing.assert_array_equal(loaded.log_prob(X[:32], y[:32]), trained.log_prob(X[:32], y[:32]))
        np.testing.assert_array_equal(loaded.sample(8, 0.7, seed=1), trained.sample(8, 0.7, seed=1))

    def test_version_guard(self, trained):
        blob = trained.to_bytes()
        with np.load(io.BytesIO(blob)) as z:
            arrays = dict(z)
        meta = bytes(arrays.pop("meta")).decode().replace('"version": 1', '"version": 99')
        buf = io.BytesIO()
        np.savez(buf, meta=np.frombuffer(meta.encode(), dtype=np.uint8), **arrays)
        buf.seek(0)
        with pytest.raises(ValueError, match="version"):
            ConditionalFlow.load(buf)
