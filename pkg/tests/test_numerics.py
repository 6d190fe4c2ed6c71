import numpy as np
import pytest

from fedgls.errors import EvaluationError, ParameterError, ShapeError
from fedgls.numerics import (
    activation_deriv,
    apply_activation,
    check_gradient,
    cosine_sim_backward_both,
    cosine_sim_backward_left,
    cosine_sim_matrix,
    finite_diff_grad,
    matmul,
    pack_arrays,
    row_softmax,
    unpack_arrays,
)


class TestMatmul:
    def test_identity(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(np.eye(2), m), m)

    def test_hand_product(self):
        out = matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))
        assert out.shape == (1, 1)
        assert out[0, 0] == 11.0

    def test_zero_annihilates(self):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((3, 4))
        assert np.all(matmul(np.zeros((2, 3)), m) == 0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_associativity(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            a, b, c = (rng.standard_normal((5, 5)) for _ in range(3))
            left = matmul(matmul(a, b), c)
            right = matmul(a, matmul(b, c))
            denom = max(np.abs(left).max(), 1.0)
            assert np.abs(left - right).max() / denom < 1e-9


class TestActivations:
    def test_relu_sign_split(self):
        assert np.array_equal(apply_activation(np.array([[-1.0, 2.0]]), "relu"), [[0.0, 2.0]])

    def test_elu_fixed_point(self):
        assert apply_activation(np.array([[0.0]]), "elu")[0, 0] == 0.0

    def test_elu_negative_branch(self):
        out = apply_activation(np.array([[-1.5]]), "elu")[0, 0]
        assert out == pytest.approx(np.expm1(-1.5), abs=1e-15)

    def test_tanh_odd(self):
        assert apply_activation(np.array([[0.0]]), "tanh")[0, 0] == 0.0

    def test_identity(self):
        m = np.array([[-2.0, 3.0]])
        assert np.array_equal(apply_activation(m, "identity"), m)

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            apply_activation(np.zeros((1, 1)), "gelu")

    @pytest.mark.parametrize("kind", ["relu", "elu", "tanh", "identity"])
    def test_deriv_matches_finite_differences(self, kind):
        rng = np.random.default_rng(3)
        # stay away from the relu kink at 0
        pts = rng.uniform(0.2, 2.0, size=8) * rng.choice([-1.0, 1.0], size=8)
        for p in pts:
            num = finite_diff_grad(lambda v: float(apply_activation(v.reshape(1, 1), kind)[0, 0]), [p])
            ana = activation_deriv(np.array([[p]]), kind)[0, 0]
            assert num[0] == pytest.approx(ana, abs=1e-7)


class TestRowSoftmax:
    def test_uniform(self):
        out = row_softmax(np.zeros((1, 3)))
        assert np.allclose(out, 1.0 / 3.0, atol=1e-15)

    def test_closed_form(self):
        out = row_softmax(np.array([[np.log(2.0), 0.0]]))
        assert out[0, 0] == pytest.approx(2.0 / 3.0, abs=1e-15)
        assert out[0, 1] == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_no_overflow(self):
        out = row_softmax(np.array([[1000.0, 0.0]]))
        assert np.all(np.isfinite(out))
        assert out[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            m = rng.standard_normal((6, 5)) * rng.choice([1.0, 100.0, 1e4])
            sums = row_softmax(m).sum(axis=1)
            assert np.abs(sums - 1.0).max() < 1e-12


class TestCosineSim:
    def test_self_similarity(self):
        assert cosine_sim_matrix(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]))[0, 0] == 1.0

    def test_orthogonal(self):
        out = cosine_sim_matrix(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
        assert out[0, 0] == 0.0

    def test_hand_value(self):
        out = cosine_sim_matrix(np.array([[1.0, 1.0]]), np.array([[1.0, 0.0]]))
        assert out[0, 0] == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-15)

    def test_zero_norm_convention(self):
        out = cosine_sim_matrix(np.zeros((1, 3)), np.ones((2, 3)))
        assert np.all(out == 0.0)

    def test_range(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            u = rng.standard_normal((7, 4))
            v = rng.standard_normal((6, 4))
            out = cosine_sim_matrix(u, v)
            assert out.max() <= 1.0 + 1e-12
            assert out.min() >= -1.0 - 1e-12

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            cosine_sim_matrix(np.ones((2, 3)), np.ones((2, 4)))


class TestCosineBackward:
    def test_left_matches_finite_differences(self):
        rng = np.random.default_rng(21)
        u0 = rng.standard_normal((4, 3))
        v = rng.standard_normal((5, 3))
        w = rng.standard_normal((4, 5))

        def f(vec):
            return float((w * cosine_sim_matrix(vec.reshape(4, 3), v)).sum())

        ana = cosine_sim_backward_left(w, u0, v)
        report = check_gradient(f, u0.ravel(), ana.ravel())
        assert report.max_rel_error < 1e-6

    def test_both_matches_finite_differences(self):
        rng = np.random.default_rng(22)
        u0 = rng.standard_normal((5, 3))
        w = rng.standard_normal((5, 5))

        def f(vec):
            u = vec.reshape(5, 3)
            return float((w * cosine_sim_matrix(u, u)).sum())

        ana = cosine_sim_backward_both(w, u0)
        report = check_gradient(f, u0.ravel(), ana.ravel())
        assert report.max_rel_error < 1e-6


class TestFiniteDiff:
    def test_quadratic(self):
        grad = finite_diff_grad(lambda v: float(v[0] ** 2), [3.0], eps=1e-5)
        assert grad[0] == pytest.approx(6.0, abs=1e-8)

    def test_constant(self):
        grad = finite_diff_grad(lambda v: 4.2, np.ones(5))
        assert np.all(grad == 0.0)

    def test_nonfinite_objective(self):
        with pytest.raises(EvaluationError):
            finite_diff_grad(lambda v: float("inf"), [1.0])

    def test_bad_eps(self):
        with pytest.raises(ParameterError):
            finite_diff_grad(lambda v: 0.0, [1.0], eps=0.0)


class TestCheckGradient:
    def test_report_fields(self):
        report = check_gradient(lambda v: float(v @ v), np.array([1.0, -2.0]), np.array([2.0, -4.0]))
        assert report.max_rel_error >= 0.0
        assert report.num_params_checked == 2
        assert report.failing_indices == []

    def test_detects_wrong_gradient(self):
        report = check_gradient(lambda v: float(v @ v), np.array([1.0, -2.0]), np.array([2.0, 4.0]))
        assert report.failing_indices == [1]
        assert report.max_rel_error > 1e-2


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(9)
    arrays = [rng.standard_normal((2, 3)), rng.standard_normal(4), rng.standard_normal((1, 1))]
    vec = pack_arrays(arrays)
    back = unpack_arrays(vec, arrays)
    for a, b in zip(arrays, back):
        assert np.array_equal(a, b)
