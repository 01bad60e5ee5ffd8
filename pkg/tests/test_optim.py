import numpy as np
import pytest

from gspace.errors import DegeneratePathError, DegenerateUpdateError, DomainError, StepRejected
from gspace.network import Architecture, Loss, batch_gradient, batch_loss
from gspace.optim import (
    TrainConfig,
    basis_values,
    gsgd_step,
    icr_gradients,
    init_weights,
    initial_weights,
    sgd_step,
    train,
    unbalanced_scaling,
    weight_allocation,
)
from gspace.scaling import apply_scaling, random_scaling
from gspace.skeleton import build_skeleton
from gspace.verify import icr_finite_difference

from conftest import FIG1_W


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300))


@pytest.fixture
def net342(rng):
    a = Architecture([3, 4, 2])
    plan = build_skeleton(a)
    X = rng.standard_normal((8, 3))
    y = rng.integers(0, 2, 8)
    return a, plan, X, y


class TestBasisValues:
    def test_fig1(self, fig1):
        assert basis_values(FIG1_W, build_skeleton(fig1)).tolist() == [1.0, 6.0, -0.5]

    def test_skeleton_init_carriers(self, rng):
        a = Architecture([4, 6, 3, 2])
        plan = build_skeleton(a)
        w = init_weights(a, rng, plan)
        v = basis_values(w, plan)
        n_all = len(plan.all_basis_paths)
        np.testing.assert_array_equal(v[:n_all], w[plan.pivots[:n_all]])

    def test_scaling_invariance(self, rng):
        a = Architecture([3, 4, 3, 2])
        plan = build_skeleton(a)
        w = rng.standard_normal(a.m)
        v2 = basis_values(apply_scaling(a, w, random_scaling(a, rng)), plan)
        assert rel(v2, basis_values(w, plan)) <= 1e-12

    def test_zero_weight(self, fig1):
        with pytest.raises(DomainError):
            basis_values([0.0, 1.0, 1.0, 1.0], build_skeleton(fig1))


class TestICR:
    def test_zero_gradient(self, net342, rng):
        a, plan, _, _ = net342
        w = rng.standard_normal(a.m)
        assert np.all(icr_gradients(np.zeros(a.m), w, basis_values(w, plan), plan) == 0)

    def test_fig1_mse_finite_difference(self, fig1):
        plan = build_skeleton(fig1)
        X, T = np.array([[1.0, 1.0]]), np.zeros((1, 2))
        assert icr_finite_difference(fig1, plan, FIG1_W, X, T, Loss.MSE).max() <= 1e-5

    def test_fig1_closed_form(self, fig1):
        # l = (o1^2 + o2^2)/2 with o = (v1 + v3, v2 + v2 v3 / v1) at x = (1, 1)
        plan = build_skeleton(fig1)
        v1, v2, v3 = basis_values(FIG1_W, plan)
        o1, o2 = v1 + v3, v2 + v2 * v3 / v1
        expected = [o1 - o2 * v2 * v3 / v1 ** 2, o2 * (1 + v3 / v1), o1 + o2 * v2 / v1]
        grad_w = batch_gradient(fig1, FIG1_W, [[1.0, 1.0]], np.zeros((1, 2)), Loss.MSE)
        got = icr_gradients(grad_w, FIG1_W, basis_values(FIG1_W, plan), plan)
        np.testing.assert_allclose(got, expected, rtol=1e-13)

    @pytest.mark.parametrize("widths", [[3, 4, 2], [2, 3, 2, 2], [3, 5, 4, 2], [4, 2, 3]])
    def test_representative_independence(self, widths, rng):
        a = Architecture(widths)
        plan = build_skeleton(a)
        X, y = rng.standard_normal((5, a.d)), rng.integers(0, a.K, 5)
        w = rng.standard_normal(a.m)
        w2 = apply_scaling(a, w, random_scaling(a, rng))
        g1 = icr_gradients(batch_gradient(a, w, X, y), w, basis_values(w, plan), plan)
        g2 = icr_gradients(batch_gradient(a, w2, X, y), w2, basis_values(w2, plan), plan)
        np.testing.assert_allclose(g2, g1, rtol=1e-9, atol=1e-12 * np.abs(g1).max())

    @pytest.mark.parametrize("widths", [[3, 4, 2], [2, 3, 2, 2], [3, 3, 3, 3], [5, 8, 4, 3]])
    def test_free_column_consistency(self, widths, rng):
        a = Architecture(widths)
        plan = build_skeleton(a)
        for _ in range(20):
            w = rng.standard_normal(a.m)
            X, y = rng.standard_normal((4, a.d)), rng.integers(0, a.K, 4)
            _, residual = icr_gradients(batch_gradient(a, w, X, y), w, basis_values(w, plan), plan,
                                        return_residual=True)
            assert residual.max(initial=0) <= 1e-8

    def test_zero_basis_value(self, fig1):
        plan = build_skeleton(fig1)
        with pytest.raises(DegeneratePathError):
            icr_gradients(np.ones(4), FIG1_W, np.array([1.0, 0.0, 1.0]), plan)


class TestWeightAllocation:
    def test_identity(self, net342, rng):
        a, plan, _, _ = net342
        assert np.all(weight_allocation(np.ones(plan.dim), rng.standard_normal(a.m), plan) == 1.0)

    def test_fig1_closed_form(self, fig1):
        plan = build_skeleton(fig1)
        R = np.array([2.0, 3.0, 5.0])
        r = weight_allocation(R, FIG1_W, plan)
        assert r.tolist() == [2.0, 5.0, 1.0, 1.5]  # (R1, R3, 1, R2/R1)
        assert r[1] * r[3] == R[1] * R[2] / R[0]

    def test_random_round_trip(self, net342, rng):
        a, plan, _, _ = net342
        free = list(plan.free_skeleton_edges)
        for _ in range(100):
            w = rng.standard_normal(a.m)
            R = rng.uniform(0.2, 3.0, plan.dim) * rng.choice([-1, 1], plan.dim)
            r = weight_allocation(R, w, plan)
            assert np.all(r[free] == 1.0)
            assert rel(basis_values(w * r, plan), basis_values(w, plan) * R) <= 1e-12

    def test_zero_ratio(self, fig1):
        with pytest.raises(DegenerateUpdateError):
            weight_allocation(np.array([1.0, 0.0, 1.0]), FIG1_W, build_skeleton(fig1))


class TestSteps:
    def test_zero_lr(self, net342, rng):
        a, plan, X, y = net342
        w = rng.standard_normal(a.m)
        assert np.array_equal(gsgd_step(a, w, X, y, 0.0, plan), w)
        assert np.array_equal(sgd_step(a, w, X, y, 0.0), w)

    def test_fig1_reconstruction(self, fig1):
        plan = build_skeleton(fig1)
        X, y = np.array([[1.0, 1.0]]), np.array([1])
        v = basis_values(FIG1_W, plan)
        dv = icr_gradients(batch_gradient(fig1, FIG1_W, X, y), FIG1_W, v, plan)
        w2 = gsgd_step(fig1, FIG1_W, X, y, 0.05, plan)
        assert rel(basis_values(w2, plan), v - 0.05 * dv) <= 1e-12
        assert w2[2] == FIG1_W[2]

    @pytest.mark.parametrize("widths", [[3, 4, 2], [2, 3, 2, 2], [3, 5, 4, 2]])
    def test_equivalence_preserved(self, widths, rng):
        a = Architecture(widths)
        plan = build_skeleton(a)
        X, y = rng.standard_normal((6, a.d)), rng.integers(0, a.K, 6)
        w = rng.standard_normal(a.m)
        w2 = apply_scaling(a, w, random_scaling(a, rng))
        s1 = basis_values(gsgd_step(a, w, X, y, 0.1, plan), plan)
        s2 = basis_values(gsgd_step(a, w2, X, y, 0.1, plan), plan)
        assert rel(s1, s2) <= 1e-9

    def test_free_skeleton_bitwise(self, net342, rng):
        a, plan, X, y = net342
        w = rng.standard_normal(a.m)
        free = list(plan.free_skeleton_edges)
        w2 = gsgd_step(a, w, X, y, 0.3, plan, check_icr=1e-8)
        assert np.array_equal(w2[free], w[free])

    def test_rejects_overflow(self, net342, rng):
        a, plan, X, y = net342
        with pytest.raises(StepRejected):
            gsgd_step(a, rng.standard_normal(a.m), X, y, 1e308, plan)

    def test_rejects_zero_weight(self, net342):
        a, plan, X, y = net342
        with pytest.raises(DomainError):
            gsgd_step(a, np.zeros(a.m), X, y, 0.1, plan)

    def test_sgd_hand_linear_case(self):
        a = Architecture([2, 1])
        w = np.array([0.5, -1.0])
        x, t = np.array([2.0, 1.0]), np.array([[1.0]])
        # out = 0, loss (out - t)^2, gradient 2 (out - t) x
        np.testing.assert_allclose(sgd_step(a, w, x[None], t, 0.1, Loss.MSE), w - 0.1 * (-2.0) * x, rtol=1e-15)

    def test_sgd_not_invariant(self, net342, rng):
        a, plan, X, y = net342
        w = rng.standard_normal(a.m)
        g = np.ones(a.H)
        g[0] = 10.0
        w2 = apply_scaling(a, w, g)
        s1 = basis_values(sgd_step(a, w, X, y, 0.1), plan)
        s2 = basis_values(sgd_step(a, w2, X, y, 0.1), plan)
        assert rel(s1, s2) >= 1e-3


class TestInit:
    def test_skeleton_ones(self, rng):
        a = Architecture([4, 6, 3, 2])
        plan = build_skeleton(a)
        w = init_weights(a, rng, plan)
        assert np.all(w[sorted(plan.skeleton_edges)] == 1.0)

    def test_he_scale(self):
        a = Architecture([400, 300, 2])
        w = init_weights(a, np.random.default_rng(0))
        assert np.std(w[:a.offsets[1]]) == pytest.approx(np.sqrt(2 / 400), rel=0.02)

    def test_unbalanced_scaling(self):
        g = unbalanced_scaling(Architecture([3, 4, 2, 2]), 100.0)
        assert g.tolist() == [100.0] * 4 + [1.0, 1.0]


class TestTrain:
    def data(self, rng, a, n=40):
        return rng.standard_normal((n, a.d)), rng.integers(0, a.K, n)

    def test_zero_epochs(self, rng):
        a = Architecture([3, 4, 2])
        res = train(a, TrainConfig(epochs=0), self.data(rng, a))
        assert len(res.metrics.records) == 1 and res.metrics.records[0].epoch == 0
        assert np.array_equal(res.weights, res.initial_weights) and res.steps == 0

    @pytest.mark.parametrize("opt", ["sgd", "gsgd"])
    def test_deterministic(self, opt):
        a = Architecture([3, 4, 2])
        d = self.data(np.random.default_rng(0), a)
        cfg = TrainConfig(optimizer=opt, epochs=3, batch_size=8, seed=7)
        r1, r2 = train(a, cfg, d, d), train(a, cfg, d, d)
        strip = lambda m: [r.values(with_time=False) for r in m.records]  # noqa: E731
        assert strip(r1.metrics) == strip(r2.metrics)
        assert np.array_equal(r1.weights, r2.weights)
        assert np.array_equal(r1.initial_weights, initial_weights(a, 7, build_skeleton(a)))

    def test_loss_decreases(self, rng):
        a = Architecture([3, 6, 2])
        X = rng.standard_normal((64, 3))
        y = (X[:, 0] > 0).astype(int)
        res = train(a, TrainConfig(epochs=10, batch_size=16), (X, y))
        assert res.metrics.final.train_loss < res.metrics.records[0].train_loss

    def test_rejection_context(self, rng):
        a = Architecture([3, 4, 2])
        cfg = TrainConfig(learning_rate=1e308, epochs=1, max_halvings=0)
        with pytest.raises(StepRejected, match="epoch 1, step 0"):
            train(a, cfg, self.data(rng, a))

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_halving_recovers(self, rng):
        a = Architecture([3, 4, 2])
        cfg = TrainConfig(learning_rate=1e308, epochs=1, max_halvings=2000)
        res = train(a, cfg, self.data(rng, a))
        assert np.all(np.isfinite(res.weights))

    def test_lr_schedule(self):
        cfg = TrainConfig(learning_rate=0.1, lr_schedule=((5, 0.5), (10, 0.1)))
        assert [cfg.lr_at(e) for e in (1, 5, 9, 10)] == pytest.approx([0.1, 0.05, 0.05, 0.01])

    def test_on_step_and_free_constancy(self, rng):
        a = Architecture([3, 4, 3, 2])
        seen = []
        res = train(a, TrainConfig(epochs=2, batch_size=10), self.data(rng, a),
                    on_step=lambda k, w: seen.append(k))
        assert seen == list(range(1, res.steps + 1)) and res.steps == 8
        free = list(res.plan.free_skeleton_edges)
        assert np.array_equal(res.weights[free], res.initial_weights[free])

    @pytest.mark.parametrize("kwargs", [dict(optimizer="adam"), dict(learning_rate=0), dict(batch_size=0),
                                        dict(epochs=-1), dict(loss="hinge")])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    def test_mse_training(self, rng):
        a = Architecture([3, 4, 2])
        res = train(a, TrainConfig(epochs=2, loss="mse"), self.data(rng, a))
        assert np.isfinite(res.metrics.final.train_loss)
        assert batch_loss(a, res.weights, *self.data(np.random.default_rng(1), a), Loss.MSE) >= 0
