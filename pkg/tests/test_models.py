import numpy as np
import pytest

from fedgls.errors import ParameterError, ShapeError
from fedgls.graph_core import Graph, normalize_adjacency
from fedgls.models import (
    EncoderParams,
    GcnParams,
    LearnerConfig,
    LearnerParams,
    MlpParams,
    adjacency_process,
    adjacency_process_backward,
    classifier_head,
    feature_encoder_backward,
    feature_encoder_forward,
    gcn_backward,
    gcn_forward,
    generate_structure,
    graph_generator_backward,
    graph_generator_forward,
    init_encoder_params,
    init_gcn_params,
    init_learner_params,
    mlp_backward,
    mlp_forward,
    normalization_backward,
    topk_margin,
    topk_mask,
    zeros_like_params,
)
from fedgls.numerics import (
    apply_activation,
    check_gradient,
    cosine_sim_matrix,
    matmul,
    pack_arrays,
    row_softmax,
    unpack_arrays,
)


def gcn_params_from_vector(vec, template):
    arrays = unpack_arrays(vec, template.arrays())
    return GcnParams(*arrays)


class TestGcnForward:
    def test_identity_stack(self):
        rng = np.random.default_rng(0)
        x = np.abs(rng.standard_normal((3, 16)))
        p = GcnParams(w1=np.eye(16), w2=np.eye(16), wc=np.zeros((16, 2)), bc=np.zeros(2))
        cache = gcn_forward(x, np.eye(3), p)
        assert np.allclose(cache.z, x, atol=1e-15)

    def test_averaging_symmetry(self):
        rng = np.random.default_rng(1)
        row = rng.standard_normal(4)
        x = np.stack([row, row])
        p = init_gcn_params(4, 6, 3, rng)
        s = np.full((2, 2), 0.5)
        cache = gcn_forward(x, s, p)
        assert np.allclose(cache.z[0], cache.z[1], atol=1e-14)

    def test_path_fixture_matches_straight_line_oracle(self):
        # independent oracle: explicit per-node propagation loops
        rng = np.random.default_rng(2)
        g = Graph(x=rng.standard_normal((3, 2)),
                  edges=np.array([[0, 1], [1, 2]]), labels=np.zeros(3, dtype=np.int64))
        s = normalize_adjacency(g, add_self_loops=True)
        p = init_gcn_params(2, 4, 2, rng)
        cache = gcn_forward(g.x, s, p)

        def propagate(mat):
            out = np.zeros_like(mat)
            for i in range(3):
                for j in range(3):
                    out[i] += s[i, j] * mat[j]
            return out

        first = propagate(g.x @ p.w1)
        first = np.where(first > 0, first, 0.0)
        z_oracle = propagate(first @ p.w2)
        assert np.allclose(cache.z, z_oracle, atol=1e-13)
        assert np.allclose(cache.logits, z_oracle @ p.wc + p.bc, atol=1e-13)

    def test_degenerate_structure_is_mlp(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((4, 5))
        empty = Graph(x=x, edges=np.zeros((0, 2), dtype=np.int64), labels=np.zeros(4, dtype=np.int64))
        s = normalize_adjacency(empty, add_self_loops=True)
        p = init_gcn_params(5, 4, 2, rng)
        cache = gcn_forward(x, s, p)
        mlp_path = np.maximum(x @ p.w1, 0.0) @ p.w2
        assert np.allclose(cache.z, mlp_path, atol=1e-14)

    def test_shape_errors(self):
        p = init_gcn_params(3, 4, 2, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            gcn_forward(np.zeros((2, 3)), np.zeros((3, 3)), p)
        with pytest.raises(ShapeError):
            gcn_forward(np.zeros((2, 4)), np.zeros((2, 2)), p)


class TestFeatureEncoder:
    def test_zero_weights_broadcast_bias(self):
        p = EncoderParams(w1=np.zeros((3, 4)), b1=np.zeros(4), w2=np.zeros((4, 4)), b2=np.arange(4.0))
        cache = feature_encoder_forward(np.ones((5, 3)), p)
        assert np.array_equal(cache.h, np.tile(np.arange(4.0), (5, 1)))

    def test_row_permutation_equivariance(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((6, 3))
        p = init_encoder_params(3, 4, rng)
        perm = rng.permutation(6)
        direct = feature_encoder_forward(x[perm], p).h
        permuted = feature_encoder_forward(x, p).h[perm]
        assert np.array_equal(direct, permuted)

    def test_hand_computed_two_by_two(self):
        p = EncoderParams(
            w1=np.array([[1.0, 0.0], [0.0, -1.0]]),
            b1=np.array([0.5, 0.0]),
            w2=np.array([[2.0, 0.0], [0.0, 2.0]]),
            b2=np.array([0.0, 1.0]),
        )
        x = np.array([[1.0, 2.0]])
        # a1 = [1.5, -2]; relu -> [1.5, 0]; h = [3.0, 1.0]
        cache = feature_encoder_forward(x, p)
        assert np.allclose(cache.h, [[3.0, 1.0]], atol=1e-15)

    def test_width_equals_gcn_embedding_width(self):
        rng = np.random.default_rng(5)
        theta = init_gcn_params(7, 16, 3, rng)
        phi = init_encoder_params(7, 16, rng)
        x = rng.standard_normal((4, 7))
        z = gcn_forward(x, np.eye(4), theta).z
        h = feature_encoder_forward(x, phi).h
        assert z.shape == h.shape


class TestClassifierHead:
    def test_zero_head_uniform(self):
        probs = classifier_head(np.ones((3, 16)), np.zeros((16, 4)), np.zeros(4))
        assert np.allclose(probs, 0.25, atol=1e-15)

    def test_shift_invariance(self):
        rng = np.random.default_rng(6)
        e = rng.standard_normal((2, 3))
        wc = rng.standard_normal((3, 4))
        base = classifier_head(e, wc, np.zeros(4))
        shifted = classifier_head(e, wc, np.full(4, 7.3))
        assert np.allclose(base, shifted, atol=1e-12)

    def test_hand_softmax(self):
        probs = classifier_head(np.array([[np.log(2.0), 0.0]]), np.eye(2), np.zeros(2))
        assert probs[0, 0] == pytest.approx(2.0 / 3.0, abs=1e-15)


class TestGenerator:
    def test_attentive_ones_is_feature_cosine(self):
        rng = np.random.default_rng(7)
        x = np.abs(rng.standard_normal((5, 3)))
        omega = LearnerParams("attentive", [np.ones(3), np.ones(3)])
        cache = graph_generator_forward(x, omega, activation="relu")
        assert np.allclose(cache.s_tilde, cosine_sim_matrix(x, x), atol=1e-14)

    def test_identical_rows_similarity_one(self):
        x = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 1.0]])
        omega = init_learner_params(2, "attentive", np.random.default_rng(0))
        cache = graph_generator_forward(x, omega)
        assert cache.s_tilde[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_mlp_variant_compositional_oracle(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((3, 2))
        omega = init_learner_params(2, "mlp", rng)
        cache = graph_generator_forward(x, omega, activation="elu")
        r = x
        for w in omega.layers:
            r = apply_activation(matmul(r, w), "elu")
        assert np.allclose(cache.s_tilde, cosine_sim_matrix(r, r), atol=1e-14)

    def test_symmetric_unit_diagonal(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((6, 4))
        omega = init_learner_params(4, "mlp", rng)
        cache = graph_generator_forward(x, omega)
        assert np.abs(cache.s_tilde - cache.s_tilde.T).max() < 1e-12
        # unit diagonal up to the zero-norm convention: relu can kill a row
        diag = np.diag(cache.s_tilde)
        live = cache.norms > 0
        assert np.allclose(diag[live], 1.0, atol=1e-12)
        assert np.all(diag[~live] == 0.0)

    def test_unknown_variant(self):
        with pytest.raises(ParameterError):
            init_learner_params(3, "transformer", np.random.default_rng(0))


class TestAdjacencyProcess:
    def test_topk_row_example(self):
        s_tilde = np.array([
            [0.9, 0.1, 0.5],
            [0.2, 0.8, 0.3],
            [0.4, 0.6, 0.7],
        ])
        _, cache = adjacency_process(s_tilde, LearnerConfig(k=2, sym_activation="identity"))
        assert np.allclose(cache.s_sp[0], [0.9, 0.0, 0.5], atol=1e-15)

    def test_symmetrize_example(self):
        s_tilde = np.array([[0.0, 1.0], [0.0, 0.0]])
        _, cache = adjacency_process(s_tilde, LearnerConfig(k=1, sym_activation="identity"))
        assert np.allclose(cache.s_sym, [[0.0, 0.5], [0.5, 0.0]], atol=1e-15)

    def test_normalize_example(self):
        # same fixture: s_sym = [[0, .5], [.5, 0]] -> degrees .5 -> [[0, 1], [1, 0]]
        s_tilde = np.array([[0.0, 1.0], [0.0, 0.0]])
        s, _ = adjacency_process(s_tilde, LearnerConfig(k=1, sym_activation="identity"))
        assert np.allclose(s, [[0.0, 1.0], [1.0, 0.0]], atol=1e-15)

    def test_output_invariants(self):
        # sparsity bound: k kept per row, so the union with the transpose
        # support caps the TOTAL nonzeros at 2kn (a hub column can push a
        # single row past 2k, so no per-row-max bound exists)
        rng = np.random.default_rng(10)
        for trial in range(200):
            n = int(rng.integers(4, 13))
            k = int(rng.integers(1, n))
            s_tilde = rng.uniform(-1.0, 1.0, size=(n, n))
            s, _ = adjacency_process(s_tilde, LearnerConfig(k=k))
            assert np.abs(s - s.T).max() <= 1e-12
            assert s.min() >= 0.0
            assert int((np.abs(s) > 0).sum()) <= 2 * k * n

    def test_zero_degree_row_maps_to_zero(self):
        s_tilde = np.array([
            [-1.0, -2.0, -3.0],
            [-2.0, -1.0, -3.0],
            [-3.0, -2.0, -1.0],
        ])
        s, _ = adjacency_process(s_tilde, LearnerConfig(k=1))
        assert np.all(s == 0.0)

    def test_k_out_of_range(self):
        with pytest.raises(ParameterError):
            adjacency_process(np.zeros((3, 3)), LearnerConfig(k=3))

    def test_topk_ties_stable(self):
        row = np.array([[0.5, 0.5, 0.5, 0.1]])
        mask = topk_mask(np.tile(row, (4, 1)), 2)
        assert mask[0].tolist() == [True, True, False, False]

    def test_topk_margin(self):
        s = np.array([[0.9, 0.5, 0.1], [0.8, 0.7, 0.6], [1.0, 0.2, 0.0]])
        assert topk_margin(s, 1) == pytest.approx(0.1)
        assert topk_margin(s, 3) == np.inf


class TestBackwardPasses:
    def test_zero_upstream_zero_grads(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((4, 3))
        theta = init_gcn_params(3, 5, 2, rng)
        cache = gcn_forward(x, np.eye(4), theta)
        grads, ds = gcn_backward(cache, theta, dlogits=np.zeros_like(cache.logits), need_ds=True)
        assert all(np.all(a == 0.0) for a in grads.arrays())
        assert np.all(ds == 0.0)

        phi = init_encoder_params(3, 5, rng)
        ec = feature_encoder_forward(x, phi)
        eg = feature_encoder_backward(ec, phi, np.zeros_like(ec.h))
        assert all(np.all(a == 0.0) for a in eg.arrays())

        omega = init_learner_params(3, "mlp", rng)
        gc = graph_generator_forward(x, omega)
        og = graph_generator_backward(gc, omega, np.zeros((4, 4)))
        assert all(np.all(a == 0.0) for a in og.arrays())

    def test_gcn_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((5, 3))
        s = normalize_adjacency(
            Graph(x=x, edges=np.array([[0, 1], [1, 2], [2, 3], [3, 4]]), labels=np.zeros(5, dtype=np.int64)),
            add_self_loops=True,
        )
        theta = init_gcn_params(3, 4, 2, rng)
        w_logits = rng.standard_normal((5, 2))
        w_z = rng.standard_normal((5, 4))
        vec0 = pack_arrays(theta.arrays())

        def f(vec):
            p = gcn_params_from_vector(vec, theta)
            c = gcn_forward(x, s, p)
            return float((w_logits * c.logits).sum() + (w_z * c.z).sum())

        cache = gcn_forward(x, s, theta)
        grads, _ = gcn_backward(cache, theta, dlogits=w_logits, dz=w_z)
        report = check_gradient(f, vec0, pack_arrays(grads.arrays()))
        assert report.max_rel_error < 1e-6

    def test_gcn_structure_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((4, 3))
        s0 = np.abs(rng.standard_normal((4, 4))) + 0.1
        theta = init_gcn_params(3, 4, 2, rng)
        w = rng.standard_normal((4, 4))

        def f(vec):
            c = gcn_forward(x, vec.reshape(4, 4), theta)
            return float((w * c.z).sum())

        cache = gcn_forward(x, s0, theta)
        _, ds = gcn_backward(cache, theta, dz=w, need_ds=True)
        report = check_gradient(f, s0.ravel(), ds.ravel())
        assert report.max_rel_error < 1e-6

    def test_encoder_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(14)
        x = rng.standard_normal((4, 3))
        phi = init_encoder_params(3, 4, rng)
        w = rng.standard_normal((4, 4))
        vec0 = pack_arrays(phi.arrays())

        def f(vec):
            p = EncoderParams(*unpack_arrays(vec, phi.arrays()))
            return float((w * feature_encoder_forward(x, p).h).sum())

        ec = feature_encoder_forward(x, phi)
        grads = feature_encoder_backward(ec, phi, w)
        report = check_gradient(f, vec0, pack_arrays(grads.arrays()))
        assert report.max_rel_error < 1e-6

    @pytest.mark.parametrize("variant", ["mlp", "attentive"])
    @pytest.mark.parametrize("activation", ["relu", "elu", "tanh"])
    def test_generator_gradient_matches_finite_differences(self, variant, activation):
        rng = np.random.default_rng(15)
        x = rng.standard_normal((4, 3)) + 0.5
        omega = init_learner_params(3, variant, rng)
        if variant == "attentive":
            # move off the all-ones init so the fixture is generic
            omega.layers = [w + 0.3 * rng.standard_normal(w.shape) for w in omega.layers]
        w = rng.standard_normal((4, 4))
        vec0 = pack_arrays(omega.arrays())

        def f(vec):
            p = LearnerParams(variant, unpack_arrays(vec, omega.arrays()))
            return float((w * graph_generator_forward(x, p, activation).s_tilde).sum())

        gc = graph_generator_forward(x, omega, activation)
        grads = graph_generator_backward(gc, omega, w)
        report = check_gradient(f, vec0, pack_arrays(grads.arrays()))
        assert report.max_rel_error < 1e-5

    def test_processor_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(16)
        cfg = LearnerConfig(k=2)
        for _ in range(5):
            s_tilde = rng.uniform(0.05, 1.0, size=(5, 5))
            s_tilde = 0.5 * (s_tilde + s_tilde.T)
            if topk_margin(s_tilde, cfg.k) < 1e-3:
                continue
            w = rng.standard_normal((5, 5))

            def f(vec):
                s, _ = adjacency_process(vec.reshape(5, 5), cfg)
                return float((w * s).sum())

            _, cache = adjacency_process(s_tilde, cfg)
            ds_tilde = adjacency_process_backward(w, cache)
            report = check_gradient(f, s_tilde.ravel(), ds_tilde.ravel())
            assert report.max_rel_error < 1e-5

    def test_norm_stage_gradient_matches_symbolic_oracle(self):
        sympy = pytest.importorskip("sympy")
        entries = sympy.symbols("a b c d", positive=True)
        a, b, c, d = entries
        s = sympy.Matrix([[a, b], [c, d]])
        deg = [a + b, c + d]
        norm = sympy.Matrix(
            [[s[i, j] / sympy.sqrt(deg[i] * deg[j]) for j in range(2)] for i in range(2)]
        )
        w_syms = sympy.symbols("w0 w1 w2 w3")
        f = sum(w_syms[2 * i + j] * norm[i, j] for i in range(2) for j in range(2))

        rng = np.random.default_rng(17)
        s_val = rng.uniform(0.2, 1.0, size=(2, 2))
        s_val = 0.5 * (s_val + s_val.T)
        w_val = rng.standard_normal((2, 2))
        subs = {a: s_val[0, 0], b: s_val[0, 1], c: s_val[1, 0], d: s_val[1, 1]}
        subs.update({w_syms[2 * i + j]: w_val[i, j] for i in range(2) for j in range(2)})
        expected = np.array(
            [[float(sympy.diff(f, e).evalf(subs=subs)) for e in (a, b)],
             [float(sympy.diff(f, e).evalf(subs=subs)) for e in (c, d)]]
        )
        got = normalization_backward(w_val, s_val)
        assert np.allclose(got, expected, atol=1e-10)

    def test_mlp_classifier_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(18)
        x = rng.standard_normal((4, 3))
        p = MlpParams(*[a for a in init_encoder_params(3, 4, rng).arrays()],
                      wc=rng.standard_normal((4, 2)), bc=np.zeros(2))
        w = rng.standard_normal((4, 2))
        vec0 = pack_arrays(p.arrays())

        def f(vec):
            q = MlpParams(*unpack_arrays(vec, p.arrays()))
            return float((w * mlp_forward(x, q).logits).sum())

        cache = mlp_forward(x, p)
        grads = mlp_backward(cache, p, w)
        report = check_gradient(f, vec0, pack_arrays(grads.arrays()))
        assert report.max_rel_error < 1e-6


class TestGenerateStructure:
    def test_composition(self):
        rng = np.random.default_rng(19)
        x = rng.standard_normal((5, 3))
        omega = init_learner_params(3, "attentive", rng)
        cfg = LearnerConfig(k=2)
        s, gen, proc = generate_structure(x, omega, cfg)
        s2, _ = adjacency_process(graph_generator_forward(x, omega, cfg.activation).s_tilde, cfg)
        assert np.array_equal(s, s2)
        assert np.array_equal(proc.s, s)

    def test_zeros_like_params(self):
        p = init_gcn_params(3, 4, 2, np.random.default_rng(0))
        z = zeros_like_params(p)
        assert all(np.all(a == 0.0) for a in z.arrays())
        assert all(a.shape == b.shape for a, b in zip(z.arrays(), p.arrays()))
