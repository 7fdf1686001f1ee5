import numpy as np
import pytest

from clrecover import models as md
from clrecover import transforms as tr


def linear_pred(theta, d_x, d_y):
    return md.Predictor(md.ModelSpec("linear", d_x, d_y), np.asarray(theta, float))


class TestEvaluate:
    def test_linear_identity_matrix(self):
        pred = linear_pred(np.eye(2).ravel(), 2, 2)
        np.testing.assert_array_equal(md.evaluate(pred, np.array([3.0, -1.0])),
                                      [3.0, -1.0])

    def test_linear_zero(self):
        pred = linear_pred(np.zeros(6), 3, 2)
        np.testing.assert_array_equal(md.evaluate(pred, np.ones(3)), np.zeros(2))

    def test_one_hidden_layer_hand_forward(self):
        spec = md.ModelSpec("one-hidden-layer", d_x=2, d_y=2, hidden=2)
        w1 = np.array([[0.5, -0.25], [1.0, 0.75]])
        w2 = np.array([[2.0, 0.0], [-1.0, 0.5]])
        pred = md.Predictor(spec, np.concatenate([w1.ravel(), w2.ravel()]))
        x = np.array([1.0, 0.0])
        # independent forward pass by hand
        hidden = np.tanh(np.array([0.5 * 1.0, 1.0 * 1.0]))
        expect = np.array([2.0 * hidden[0], -1.0 * hidden[0] + 0.5 * hidden[1]])
        np.testing.assert_allclose(md.evaluate(pred, x), expect, atol=1e-15)

    def test_dimension_mismatch(self):
        pred = linear_pred(np.zeros(6), 3, 2)
        with pytest.raises(ValueError):
            md.evaluate(pred, np.zeros(4))

    def test_theta_shape_checked(self):
        with pytest.raises(ValueError):
            linear_pred(np.zeros(5), 3, 2)


class TestDirectDifferenceMap:
    def setup_method(self):
        self.rng = np.random.default_rng(7)
        self.chain = tr.chain_of([tr.identity(), tr.scaling(3.0)])
        self.f_star = linear_pred(self.rng.standard_normal(6), 3, 2)

    def test_equal_predictors_give_zero(self):
        dmap = md.DirectDifferenceMap(self.f_star, self.f_star, self.chain, 2)
        for _ in range(5):
            x = self.rng.standard_normal(3)
            np.testing.assert_array_equal(md.eval_G(dmap, x), np.zeros(2))

    def test_identity_chain_is_plain_difference(self):
        chain = tr.chain_of([tr.identity(), tr.identity()])
        f = linear_pred(self.rng.standard_normal(6), 3, 2)
        dmap = md.DirectDifferenceMap(f, self.f_star, chain, 2)
        x = self.rng.standard_normal(3)
        np.testing.assert_allclose(
            md.eval_G(dmap, x),
            md.evaluate(f, x) - md.evaluate(self.f_star, x), atol=1e-15)

    def test_compositional_oracle_scaling(self):
        f = linear_pred(self.rng.standard_normal(6), 3, 2)
        dmap = md.DirectDifferenceMap(f, self.f_star, self.chain, 2)
        x = self.rng.standard_normal(3)
        delta = (f.theta - self.f_star.theta).reshape(2, 3)
        np.testing.assert_allclose(md.eval_G(dmap, x), delta @ (3.0 * x),
                                   rtol=1e-12)

    def test_linearity_in_theta_superposition(self):
        # for the linear family the difference map is affine in the parameters
        space = md.ParameterSpace(p=6, radius=10.0)
        for _ in range(20):
            ta = self.rng.standard_normal(6)
            tb = self.rng.standard_normal(6)
            lam = float(self.rng.random())
            mix = lam * ta + (1 - lam) * tb
            x = self.rng.standard_normal(3)
            ga = md.eval_G(md.DirectDifferenceMap(
                linear_pred(ta, 3, 2), self.f_star, self.chain, 2), x)
            gb = md.eval_G(md.DirectDifferenceMap(
                linear_pred(tb, 3, 2), self.f_star, self.chain, 2), x)
            gm = md.eval_G(md.DirectDifferenceMap(
                linear_pred(mix, 3, 2), self.f_star, self.chain, 2), x)
            np.testing.assert_allclose(gm, lam * ga + (1 - lam) * gb, atol=1e-12)
        assert space.diameter == 20.0


class TestProjection:
    def setup_method(self):
        self.space = md.ParameterSpace(p=8, radius=2.0)
        self.rng = np.random.default_rng(11)

    def test_inside_returned_unchanged(self):
        theta = self.rng.standard_normal(8)
        theta *= 0.5 * self.space.radius / np.linalg.norm(theta)
        assert md.project(self.space, theta) is theta

    def test_axis_point_projected_radially(self):
        theta = np.zeros(8)
        theta[0] = 2 * self.space.radius
        out = md.project(self.space, theta)
        expect = np.zeros(8)
        expect[0] = self.space.radius
        np.testing.assert_allclose(out, expect, atol=1e-15)

    def test_norm_after_projection(self):
        for _ in range(20):
            theta = self.rng.standard_normal(8)
            theta *= 3 * self.space.radius / np.linalg.norm(theta)
            out = md.project(self.space, theta)
            assert abs(np.linalg.norm(out) - self.space.radius) < 1e-12

    def test_idempotent_and_nonexpansive(self):
        for _ in range(50):
            a = self.rng.standard_normal(8) * 3
            b = self.rng.standard_normal(8) * 3
            pa, pb = md.project(self.space, a), md.project(self.space, b)
            np.testing.assert_allclose(md.project(self.space, pa), pa, atol=1e-15)
            assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12


class TestLipschitzConstantsOfFamilies:
    def test_parameter_lipschitz_linear(self):
        rng = np.random.default_rng(13)
        spec = md.ModelSpec("linear", 4, 3)
        space = md.ParameterSpace(p=spec.p, radius=1.5)
        r_eval = 2.0
        l_f = md.parameter_lipschitz(spec, space, r_eval)
        for _ in range(1000):
            ta = md.project(space, rng.standard_normal(spec.p) * 2)
            tb = md.project(space, rng.standard_normal(spec.p) * 2)
            x = rng.standard_normal(4)
            x *= r_eval * rng.random() / np.linalg.norm(x)
            gap = np.linalg.norm(
                md.evaluate(md.Predictor(spec, ta), x)
                - md.evaluate(md.Predictor(spec, tb), x))
            assert gap <= l_f * np.linalg.norm(ta - tb) + 1e-9

    def test_parameter_lipschitz_mlp(self):
        rng = np.random.default_rng(17)
        spec = md.ModelSpec("one-hidden-layer", 3, 2, hidden=4)
        space = md.ParameterSpace(p=spec.p, radius=1.0)
        r_eval = 1.5
        l_f = md.parameter_lipschitz(spec, space, r_eval)
        for _ in range(1000):
            ta = md.project(space, rng.standard_normal(spec.p))
            tb = md.project(space, rng.standard_normal(spec.p))
            x = rng.standard_normal(3)
            x *= r_eval * rng.random() / np.linalg.norm(x)
            gap = np.linalg.norm(
                md.evaluate(md.Predictor(spec, ta), x)
                - md.evaluate(md.Predictor(spec, tb), x))
            assert gap <= l_f * np.linalg.norm(ta - tb) + 1e-9

    def test_family_constant_covers_both_roles(self):
        spec = md.ModelSpec("linear", 4, 3)
        space = md.ParameterSpace(p=spec.p, radius=1.5)
        assert md.family_lipschitz(spec, space, 2.0) >= md.input_lipschitz(spec, space)
        assert md.family_lipschitz(spec, space, 2.0) >= md.parameter_lipschitz(
            spec, space, 2.0)


def test_theta_csv_round_trip(tmp_path):
    rng = np.random.default_rng(19)
    thetas = rng.standard_normal((3, 5))
    path = tmp_path / "thetas.csv"
    md.save_thetas_csv(path, thetas)
    back = md.load_thetas_csv(path)
    np.testing.assert_array_equal(back, thetas)
