"""Label generation, losses and the training loop.

The energy-loss oracle never calls the integrator: because the restricted
step holds acceleration constant, the exact outcome is the constant
acceleration closed form, with the frozen acceleration recomputed here
from scratch with explicit rotation matrices.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from tiltmpc.dynamics import (
    V,
    State,
    hover_input,
    hover_state,
    state_deriv_vec,
)
from tiltmpc.errors import ConfigError, GapError
from tiltmpc.integrator import rk4_step_vec
from tiltmpc.logs import TrajectoryLog
from tiltmpc.network import forward, init_params, xi_from_state_input, backward
from tiltmpc.params import PhysicalParams
from tiltmpc.plant import DisturbanceConfig, PlantState, identity_disturbance, plant_step
from tiltmpc.training import (
    Dataset,
    TrainConfig,
    energy_loss,
    energy_loss_grad,
    l2_loss,
    make_labels,
    split_dataset,
    total_loss,
    train,
)

from conftest import random_input_vec, random_state_vec, random_unit_quat


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def _rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def _quat_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def accel_oracle(xi, params):
    """Frozen-state linear acceleration, rebuilt rotor by rotor."""
    q = xi[4:8]
    alpha = xi[8:12]
    f = xi[12:16]
    force_b = np.zeros(3)
    for r in range(4):
        arm = np.arctan2(params.rotor_pos_body[r, 1], params.rotor_pos_body[r, 0])
        force_b = force_b + _rot_z(arm) @ _rot_x(alpha[r]) @ np.array([0.0, 0.0, f[r]])
    acc = _quat_matrix(q) @ force_b / params.mass_kg
    return acc - np.array([0.0, 0.0, params.gravity])


def energy_oracle(xi, a_tilde, params, dt):
    """Constant-acceleration closed form of the restricted-step energy gap."""
    v_a = xi[1:4] + accel_oracle(xi, params) * dt
    v_n = v_a + np.asarray(a_tilde) * dt
    m = params.mass_kg
    kinetic = 0.5 * m * (v_n @ v_n - v_a @ v_a)
    potential = m * params.gravity * 0.5 * a_tilde[2] * dt * dt
    return kinetic + potential


def energy_grad_oracle(xi, a_tilde, params, dt):
    v_n = xi[1:4] + (accel_oracle(xi, params) + np.asarray(a_tilde)) * dt
    m = params.mass_kg
    return m * v_n * dt + np.array([0.0, 0.0, m * params.gravity * 0.5 * dt * dt])


def random_xi(rng, params, n=None):
    x = random_state_vec(rng, params, n)
    u = random_input_vec(rng, params, n)
    return xi_from_state_input(x, u), x, u


def hover_xi(params):
    x = hover_state(params).as_vector()
    u = hover_input(params).as_vector()
    return xi_from_state_input(x, u)


def make_log(t, states, inputs):
    n = len(t)
    return TrajectoryLog(
        t=np.asarray(t, dtype=float),
        states=np.asarray(states, dtype=float),
        inputs=np.asarray(inputs, dtype=float),
        accel_model=np.zeros((n, 3)),
        ref_pos=np.zeros((n, 3)),
    )


class TestMakeLabels:
    def test_exact_residual_arithmetic(self, params):
        # measured next velocity differs from the model by exactly 0.1*dt
        # in x, so the label must come out as [0.1, 0, 0]
        x0 = hover_state(params).as_vector()
        u0 = hover_input(params).as_vector()
        deriv = lambda xv, uv: state_deriv_vec(xv, uv, params)
        x1 = rk4_step_vec(deriv, x0.copy(), u0, 0.1)
        x1[V] = x1[V] + np.array([0.1, 0.0, 0.0]) * 0.1
        log = make_log([0.0, 0.1], [x0, x1], [u0, u0])

        ds = make_labels(log, params)
        assert len(ds) == 1
        assert_allclose(ds.labels[0], [0.1, 0.0, 0.0], atol=1e-13)
        assert_allclose(ds.dt, [0.1])
        assert_allclose(ds.v_next_measured[0], x1[V])
        # the xi row is the measured state/input pair at the left endpoint
        assert_array_equal(ds.xi[0], xi_from_state_input(x0, u0))

    def test_gap_error(self, params):
        x = hover_state(params).as_vector()
        u = hover_input(params).as_vector()
        log = make_log([0.0, 0.1, 0.25], [x, x, x], [u, u, u])
        with pytest.raises(GapError):
            make_labels(log, params)

    def test_too_short(self, params):
        x = hover_state(params).as_vector()
        u = hover_input(params).as_vector()
        log = make_log([0.0], [x], [u])
        with pytest.raises(ConfigError):
            make_labels(log, params)

    def test_disturbance_free_labels_vanish(self, params):
        # no plant mismatch: labels are limited only by the truncation gap
        # between the one-step and ten-substep integrators
        dist = identity_disturbance()
        x0 = hover_state(params).as_vector()
        x0[3:6] = [0.05, -0.03, 0.02]
        x0[10:13] = [0.02, 0.01, -0.015]
        u = hover_input(params).as_vector()
        ps = PlantState(State.from_vector(x0))
        times, states = [0.0], [x0]
        for _ in range(10):
            ps = plant_step(ps, u, 0.1, dist, params)
            times.append(ps.time)
            states.append(ps.state.as_vector())
        log = make_log(times, states, [u] * 11)
        ds = make_labels(log, params)
        assert np.max(np.abs(ds.labels)) < 1e-6

    def test_thrust_gain_hover_label(self, params):
        # 5% thrust deficit, no other mismatch: constant-acceleration fall,
        # so every label is exactly -0.05 g on z
        dist = DisturbanceConfig(thrust_gain_error=0.95)
        u = hover_input(params).as_vector()
        ps = PlantState(hover_state(params, p=(0.0, 0.0, 5.0)))
        times, states = [0.0], [ps.state.as_vector()]
        for _ in range(5):
            ps = plant_step(ps, u, 0.1, dist, params)
            times.append(ps.time)
            states.append(ps.state.as_vector())
        ds = make_labels(make_log(times, states, [u] * 6), params)
        expect = np.array([0.0, 0.0, -0.05 * params.gravity])
        assert_allclose(ds.labels, np.tile(expect, (5, 1)), atol=1e-9)

    def test_custom_step_length(self, params):
        x = hover_state(params).as_vector()
        u = hover_input(params).as_vector()
        log = make_log([0.0, 0.05, 0.10], [x, x, x], [u, u, u])
        ds = make_labels(log, params, t_step=0.05)
        assert len(ds) == 2


class TestL2Loss:
    def test_zero_for_equal(self):
        v = np.array([0.3, -1.2, 0.8])
        assert l2_loss(v, v) == 0.0

    def test_unit_example(self):
        assert l2_loss(np.array([1.0, 0, 0]), np.zeros(3)) == 1.0

    def test_matches_loop(self, rng):
        a = rng.normal(size=(40, 3))
        b = rng.normal(size=(40, 3))
        naive = sum((a[i, j] - b[i, j]) ** 2 for i in range(40) for j in range(3))
        assert_allclose(l2_loss(a, b), naive, rtol=1e-15)


class TestEnergyLoss:
    def test_zero_residual_is_exactly_zero(self, params, rng):
        xi, _, _ = random_xi(rng, params, 200)
        e = energy_loss(xi, np.zeros((200, 3)), params, 0.1)
        assert_array_equal(e, np.zeros(200))

    def test_matches_closed_form(self, params, rng):
        xi, _, _ = random_xi(rng, params, 300)
        a_tilde = rng.normal(scale=2.0, size=(300, 3))
        for dt in (0.1, 0.05, 0.025):
            e = energy_loss(xi, a_tilde, params, dt)
            expect = [energy_oracle(xi[i], a_tilde[i], params, dt) for i in range(300)]
            assert_allclose(e, expect, atol=1e-12)

    def test_hover_positive_example(self, params):
        e = energy_loss(hover_xi(params), np.array([0.0, 0.0, 1.0]), params, 0.1)
        assert e == pytest.approx(0.1081, abs=1e-12)

    def test_hover_negative_example(self, params):
        # signed loss: pushing down sheds potential energy faster than the
        # kinetic term grows, so the value goes negative
        e = energy_loss(hover_xi(params), np.array([0.0, 0.0, -1.0]), params, 0.1)
        assert e == pytest.approx(-0.0881, abs=1e-12)

    def test_abs_and_relu_variants(self, params, rng):
        xi, _, _ = random_xi(rng, params, 100)
        a_tilde = rng.normal(size=(100, 3))
        signed = energy_loss(xi, a_tilde, params, 0.1, variant="signed")
        assert np.any(signed < 0)
        assert_array_equal(energy_loss(xi, a_tilde, params, 0.1, variant="abs"),
                           np.abs(signed))
        assert_array_equal(energy_loss(xi, a_tilde, params, 0.1, variant="relu"),
                           np.maximum(signed, 0.0))

    def test_unknown_variant_rejected(self, params):
        with pytest.raises(ConfigError):
            energy_loss(hover_xi(params), np.zeros(3), params, 0.1, variant="huber")

    def test_per_sample_dt_array(self, params, rng):
        xi, _, _ = random_xi(rng, params, 6)
        a_tilde = rng.normal(size=(6, 3))
        dts = np.array([0.1, 0.1, 0.05, 0.1, 0.025, 0.05])
        e = energy_loss(xi, a_tilde, params, dts)
        loop = [energy_loss(xi[i], a_tilde[i], params, dts[i]) for i in range(6)]
        assert_allclose(e, loop, rtol=1e-15)


class TestEnergyLossGrad:
    def test_matches_closed_form(self, params, rng):
        xi, _, _ = random_xi(rng, params, 200)
        a_tilde = rng.normal(scale=2.0, size=(200, 3))
        g = energy_loss_grad(xi, a_tilde, params, 0.1)
        expect = [energy_grad_oracle(xi[i], a_tilde[i], params, 0.1) for i in range(200)]
        assert_allclose(g, expect, atol=1e-12)

    def test_hover_example(self, params):
        g = energy_loss_grad(hover_xi(params), np.zeros(3), params, 0.1)
        assert_allclose(g, [0.0, 0.0, 0.0981], atol=1e-12)

    def test_finite_differences(self, params, rng):
        xi, _, _ = random_xi(rng, params, 100)
        a_tilde = rng.normal(size=(100, 3))
        g = energy_loss_grad(xi, a_tilde, params, 0.1)
        h = 1e-6
        for k in range(3):
            dp = np.zeros(3)
            dp[k] = h
            ep = energy_loss(xi, a_tilde + dp, params, 0.1)
            em = energy_loss(xi, a_tilde - dp, params, 0.1)
            assert_allclose(g[:, k], (ep - em) / (2 * h), atol=1e-7)

    def test_variant_grads_away_from_kink(self, params, rng):
        xi, _, _ = random_xi(rng, params, 150)
        a_tilde = rng.normal(scale=2.0, size=(150, 3))
        signed = energy_loss(xi, a_tilde, params, 0.1)
        keep = np.abs(signed) > 1e-3
        xi, a_tilde = xi[keep], a_tilde[keep]
        h = 1e-7
        for variant in ("abs", "relu"):
            g = energy_loss_grad(xi, a_tilde, params, 0.1, variant=variant)
            for k in range(3):
                dp = np.zeros(3)
                dp[k] = h
                ep = energy_loss(xi, a_tilde + dp, params, 0.1, variant=variant)
                em = energy_loss(xi, a_tilde - dp, params, 0.1, variant=variant)
                assert_allclose(g[:, k], (ep - em) / (2 * h), atol=1e-6)

    def test_per_sample_dt_array(self, params, rng):
        xi, _, _ = random_xi(rng, params, 6)
        a_tilde = rng.normal(size=(6, 3))
        dts = np.array([0.1, 0.05, 0.1, 0.025, 0.05, 0.1])
        g = energy_loss_grad(xi, a_tilde, params, dts)
        loop = [energy_loss_grad(xi[i], a_tilde[i], params, dts[i]) for i in range(6)]
        assert_allclose(g, loop, rtol=1e-15)


class TestTotalLoss:
    def test_identity_is_exact(self, params, rng):
        xi, _, _ = random_xi(rng, params, 50)
        labels = rng.normal(size=(50, 3))
        preds = rng.normal(size=(50, 3))
        for lam in (0.0, 1.0, 1e3):
            bd = total_loss(xi, labels, preds, params, 0.1, lam)
            assert bd.total == bd.l2 + bd.lambda_e * bd.energy
            assert bd.lambda_e == lam

    def test_lambda_zero_reduces_to_l2(self, params, rng):
        xi, _, _ = random_xi(rng, params, 20)
        labels = rng.normal(size=(20, 3))
        preds = rng.normal(size=(20, 3))
        bd = total_loss(xi, labels, preds, params, 0.1, 0.0)
        assert bd.total == bd.l2 == l2_loss(labels, preds)

    def test_zero_everything(self, params):
        xi = hover_xi(params)[None, :]
        z = np.zeros((1, 3))
        bd = total_loss(xi, z, z, params, 0.1, 1e3)
        assert bd.total == 0.0

    def test_hover_composition_example(self, params):
        xi = hover_xi(params)[None, :]
        labels = np.zeros((1, 3))
        preds = np.array([[0.0, 0.0, 1.0]])
        bd = total_loss(xi, labels, preds, params, 0.1, 1e3)
        assert bd.l2 == pytest.approx(1.0, abs=1e-15)
        assert bd.energy == pytest.approx(0.1081, abs=1e-12)
        assert bd.total == pytest.approx(109.1, abs=1e-9)


def _objective(net, ds, params, lam, variant="signed"):
    preds = forward(net, ds.xi)
    return total_loss(ds.xi, ds.labels, preds, params, ds.dt, lam, variant).total


def _param_grads(net, ds, params, lam, variant="signed"):
    preds = forward(net, ds.xi)
    grad_pred = 2.0 * (preds - ds.labels) / net.output_scale**2
    if lam != 0.0:
        grad_pred = grad_pred + lam * energy_loss_grad(ds.xi, preds, params, ds.dt, variant)
    return backward(net, ds.xi, grad_pred)


class TestObjectiveParameterGradients:
    @pytest.mark.parametrize("lam", [0.0, 1e3])
    def test_all_parameters_match_fd(self, params, rng, lam):
        xi, _, _ = random_xi(rng, params, 100)
        ds = Dataset(xi, rng.normal(size=(100, 3)), np.full(100, 0.1))
        net = init_params(seed=3)
        net.input_shift = ds.xi.mean(axis=0)
        net.input_scale = ds.xi.std(axis=0) + 0.1
        grads = _param_grads(net, ds, params, lam)
        h = 1e-6
        for name in ("w1", "b1", "w2", "b2"):
            arr = getattr(net, name)
            g = getattr(grads, name)
            fd = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                keep = arr[idx]
                arr[idx] = keep + h
                up = _objective(net, ds, params, lam)
                arr[idx] = keep - h
                down = _objective(net, ds, params, lam)
                arr[idx] = keep
                fd[idx] = (up - down) / (2 * h)
            denom = np.maximum(np.abs(fd), 1e-8)
            assert np.max(np.abs(g - fd) / denom) < 1e-5, name


class TestSplit:
    def test_partition_and_contiguity(self):
        train_idx, val_idx = split_dataset(100, 0.1, seed=5)
        assert len(val_idx) == 10
        assert_array_equal(np.diff(val_idx), np.ones(9, dtype=int))
        merged = np.sort(np.concatenate([train_idx, val_idx]))
        assert_array_equal(merged, np.arange(100))

    def test_deterministic_and_seed_sensitive(self):
        a1 = split_dataset(200, 0.1, seed=7)
        a2 = split_dataset(200, 0.1, seed=7)
        assert_array_equal(a1[0], a2[0])
        assert_array_equal(a1[1], a2[1])
        starts = {split_dataset(200, 0.1, seed=s)[1][0] for s in range(20)}
        assert len(starts) > 1

    def test_zero_fraction(self):
        train_idx, val_idx = split_dataset(50, 0.0, seed=0)
        assert len(train_idx) == 50 and len(val_idx) == 0


class TestTrainConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)
        with pytest.raises(ConfigError):
            TrainConfig(energy_variant="soft")
        with pytest.raises(ConfigError):
            TrainConfig(val_fraction=1.0)
        with pytest.raises(ConfigError):
            TrainConfig(lambda_e=-1.0)


def _synthetic_dataset(rng, params, n, labels=None):
    xi, _, _ = random_xi(rng, params, n)
    if labels is None:
        labels = rng.normal(scale=0.3, size=(n, 3))
    return Dataset(xi, labels, np.full(n, 0.1))


class TestTrain:
    def test_deterministic(self, params, rng):
        ds = _synthetic_dataset(rng, params, 96)
        cfg = TrainConfig(lambda_e=0.0, epochs=3, batch_size=32, seed=11)
        r1 = train(ds, cfg, params)
        r2 = train(ds, cfg, params)
        for name in ("w1", "b1", "w2", "b2", "input_shift", "input_scale"):
            assert_array_equal(getattr(r1.net, name), getattr(r2.net, name))
        assert [b.total for b in r1.curve] == [b.total for b in r2.curve]
        assert_array_equal(r1.val_idx, r2.val_idx)

    def test_curve_entries_keep_identity(self, params, rng):
        ds = _synthetic_dataset(rng, params, 64)
        cfg = TrainConfig(lambda_e=1e3, epochs=2, batch_size=32, seed=0,
                          energy_variant="relu")
        res = train(ds, cfg, params)
        assert len(res.curve) == 2
        for bd in res.curve:
            assert bd.total == bd.l2 + bd.lambda_e * bd.energy

    def test_fits_constant_label(self, params, rng):
        # capacity sanity: a constant function must be learnable to small
        # error within the stock schedule; the bound reflects the residual
        # per-sample variation left after 130 epochs, the bias is ~1e-4
        target = np.array([0.3, -0.2, 0.5])
        n = 2048
        ds = _synthetic_dataset(rng, params, n, labels=np.tile(target, (n, 1)))
        cfg = TrainConfig(lambda_e=0.0, epochs=130, batch_size=64, seed=1,
                          val_fraction=0.0)
        res = train(ds, cfg, params)
        preds = forward(res.net, ds.xi)
        mse = float(np.mean(np.sum((preds - target) ** 2, axis=1)))
        assert mse < 5e-4
        assert np.all(np.abs(preds.mean(axis=0) - target) < 5e-3)
        assert res.curve[-1].total < res.curve[0].total

    def test_normalization_from_train_split(self, params, rng):
        ds = _synthetic_dataset(rng, params, 120)
        cfg = TrainConfig(lambda_e=0.0, epochs=1, batch_size=64, seed=4)
        res = train(ds, cfg, params)
        stats_src = ds.xi[res.train_idx]
        expect_shift = stats_src.mean(axis=0)
        expect_scale = stats_src.std(axis=0)
        expect_shift[4:8] = 0.0
        expect_scale[4:8] = 1.0
        assert_array_equal(res.net.input_shift, expect_shift)
        assert_array_equal(res.net.input_scale, expect_scale)

    def test_energy_term_shrinks_energetic_outputs(self, params, rng):
        # labels pump energy in on every sample; the regularized run must
        # not produce larger residual norms than the plain-l2 run
        xi0 = hover_xi(params)
        xi = np.tile(xi0, (128, 1))
        xi[:, 1:4] += rng.normal(scale=0.05, size=(128, 3))
        labels = np.tile([0.0, 0.0, 8.0], (128, 1))
        ds = Dataset(xi, labels, np.full(128, 0.1))
        base = TrainConfig(lambda_e=0.0, epochs=60, batch_size=64, seed=2,
                           val_fraction=0.0)
        reg = TrainConfig(lambda_e=1e3, epochs=60, batch_size=64, seed=2,
                          val_fraction=0.0)
        norm_base = np.linalg.norm(forward(train(ds, base, params).net, xi), axis=1).mean()
        norm_reg = np.linalg.norm(forward(train(ds, reg, params).net, xi), axis=1).mean()
        assert norm_reg <= norm_base

    def test_relu_variant_shrinks_small_energetic_labels(self, params, rng):
        # with the clamped variant the regularizer can only shrink outputs
        # toward zero energy, never reward braking, so the inequality holds
        # even for labels of modest size
        xi0 = hover_xi(params)
        xi = np.tile(xi0, (128, 1))
        xi[:, 1:4] += rng.normal(scale=0.05, size=(128, 3))
        labels = np.tile([0.0, 0.0, 0.5], (128, 1))
        ds = Dataset(xi, labels, np.full(128, 0.1))
        base = TrainConfig(lambda_e=0.0, epochs=60, batch_size=64, seed=2,
                           val_fraction=0.0)
        reg = TrainConfig(lambda_e=1e3, epochs=60, batch_size=64, seed=2,
                          val_fraction=0.0, energy_variant="relu")
        norm_base = np.linalg.norm(forward(train(ds, base, params).net, xi), axis=1).mean()
        norm_reg = np.linalg.norm(forward(train(ds, reg, params).net, xi), axis=1).mean()
        assert norm_reg <= norm_base

    def test_rejects_tiny_dataset(self, params, rng):
        ds = _synthetic_dataset(rng, params, 1)
        with pytest.raises(ConfigError):
            train(ds, TrainConfig(), params)


class TestDataset:
    def test_shape_validation(self, rng):
        with pytest.raises(ConfigError):
            Dataset(np.zeros((4, 16)), np.zeros((3, 3)), np.full(4, 0.1))
        with pytest.raises(ConfigError):
            Dataset(np.zeros((4, 15)), np.zeros((4, 3)), np.full(4, 0.1))

    def test_subset_keeps_audit_fields(self, params, rng):
        xi, _, _ = random_xi(rng, params, 10)
        ds = Dataset(xi, np.zeros((10, 3)), np.full(10, 0.1),
                     v_next_measured=rng.normal(size=(10, 3)),
                     v_next_model=rng.normal(size=(10, 3)))
        sub = ds.subset(np.array([1, 4, 7]))
        assert len(sub) == 3
        assert_array_equal(sub.v_next_measured, ds.v_next_measured[[1, 4, 7]])
