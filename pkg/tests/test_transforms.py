import numpy as np
import pytest

from clrecover import transforms as tr


class TestApply:
    def test_identity_chain_single_task(self):
        chain = tr.chain_of([tr.identity()])
        x = np.array([1.0, 2.0])
        assert np.array_equal(tr.apply(chain, 1, x), x)

    def test_huge_scaling(self):
        chain = tr.chain_of([tr.identity(), tr.scaling(1e10)])
        x = np.array([1.0, -2.0, 0.5])
        np.testing.assert_array_equal(tr.apply(chain, 2, x), 1e10 * x)

    def test_rotation_quarter_turn(self):
        chain = tr.chain_of([tr.identity(),
                             tr.rotation_from_planes(2, [(0, 1, np.pi / 2)])])
        out = tr.apply(chain, 2, np.array([1.0, 0.0]))
        # oracle: direct multiply by the hand-written rotation matrix
        q = np.array([[0.0, -1.0], [1.0, 0.0]])
        np.testing.assert_allclose(out, q @ np.array([1.0, 0.0]), atol=1e-12)
        np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-12)

    def test_task_index_out_of_range(self):
        chain = tr.chain_of([tr.identity(), tr.scaling(2.0)])
        with pytest.raises(IndexError):
            tr.apply(chain, 3, np.zeros(2))
        with pytest.raises(IndexError):
            tr.apply(chain, 0, np.zeros(2))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((3, 3))
        chain = tr.chain_of([tr.identity(), tr.affine(a), tr.permutation([2, 0, 1])])
        xs = rng.standard_normal((5, 3))
        batch = tr.apply(chain, 3, xs)
        for i in range(5):
            # batched and single-vector matmuls may take different BLAS paths
            np.testing.assert_allclose(batch[i], tr.apply(chain, 3, xs[i]),
                                       rtol=1e-13, atol=0)


class TestLipschitzConstants:
    def test_all_identity(self):
        chain = tr.chain_of([tr.identity(), tr.identity()])
        l_g, k_g, alpha = tr.lipschitz_constants(chain, lf=1.0)
        assert l_g == 2.0
        assert alpha == 1.0
        assert k_g == 2 * l_g + 1.0  # origin-preserving chain, no offset term

    def test_scaling_five(self):
        chain = tr.chain_of([tr.identity(), tr.scaling(5.0)])
        l_g, _, _ = tr.lipschitz_constants(chain, lf=1.0)
        assert l_g == 2.0 * 1.0 * 5.0

    def test_rotation_with_lf_three(self):
        chain = tr.chain_of([tr.identity(),
                             tr.rotation_from_planes(3, [(0, 2, 1.1)])])
        l_g, _, _ = tr.lipschitz_constants(chain, lf=3.0)
        assert l_g == pytest.approx(6.0)

    def test_nonpositive_lf_rejected(self):
        chain = tr.chain_of([tr.identity()])
        with pytest.raises(ValueError):
            tr.lipschitz_constants(chain, lf=0.0)

    def test_decreasing_then_increasing_uses_max_prefix(self):
        chain = tr.chain_of([tr.identity(), tr.scaling(4.0), tr.scaling(0.25)])
        l_g, _, _ = tr.lipschitz_constants(chain, lf=1.0)
        assert l_g == 8.0  # max over prefixes is at t=2


class TestInvariants:
    def test_norm_preservation_rotation_permutation(self):
        rng = np.random.default_rng(1)
        q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        chain = tr.chain_of([tr.identity(), tr.rotation(q),
                             tr.permutation(rng.permutation(6))])
        for _ in range(50):
            x = rng.standard_normal(6)
            for t in (2, 3):
                assert abs(np.linalg.norm(tr.apply(chain, t, x))
                           - np.linalg.norm(x)) < 1e-10

    def test_lipschitz_soundness_randomized(self):
        rng = np.random.default_rng(2)
        parts = [
            tr.scaling(3.7),
            tr.affine(rng.standard_normal((4, 4)), rng.standard_normal(4)),
            tr.rotation(np.linalg.qr(rng.standard_normal((4, 4)))[0]),
            tr.permutation([1, 3, 0, 2]),
            tr.compose([tr.scaling(0.5),
                        tr.affine(rng.standard_normal((4, 4)))]),
        ]
        for g in parts:
            z = rng.standard_normal((1000, 4))
            zp = rng.standard_normal((1000, 4))
            lhs = np.linalg.norm(g(z) - g(zp), axis=1)
            rhs = g.lipschitz * np.linalg.norm(z - zp, axis=1)
            assert np.all(lhs <= rhs + 1e-9)

    def test_composition_associativity(self):
        rng = np.random.default_rng(3)
        a = tr.affine(rng.standard_normal((3, 3)))
        b = tr.scaling(2.5)
        c = tr.permutation([2, 1, 0])
        x = rng.standard_normal((10, 3))
        composed = tr.compose([a, b, c])(x)
        sequential = c(b(a(x)))
        np.testing.assert_array_equal(composed, sequential)
        nested = tr.compose([tr.compose([a, b]), c])(x)
        np.testing.assert_array_equal(nested, sequential)

    def test_cumulative_lipschitz_finite_positive(self):
        chain = tr.chain_of([tr.identity(), tr.scaling(2.0), tr.scaling(0.1)])
        vals = [chain.cumulative_lipschitz(t) for t in (1, 2, 3)]
        assert vals == [1.0, 2.0, pytest.approx(0.2)]


class TestValidationAndRecords:
    def test_rotation_must_be_orthogonal(self):
        with pytest.raises(ValueError):
            tr.rotation(np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_permutation_must_be_bijection(self):
        with pytest.raises(ValueError):
            tr.permutation([0, 0, 1])

    def test_scaling_must_be_positive(self):
        with pytest.raises(ValueError):
            tr.scaling(0.0)

    def test_record_round_trip(self):
        rng = np.random.default_rng(4)
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        maps = [
            tr.identity(),
            tr.scaling(100.0),
            tr.rotation(q),
            tr.permutation([2, 0, 1]),
            tr.affine(rng.standard_normal((3, 3)), rng.standard_normal(3)),
            tr.compose([tr.scaling(2.0), tr.permutation([1, 0, 2])]),
        ]
        x = rng.standard_normal(3)
        for g in maps:
            g2 = tr.from_record(g.to_record())
            assert g2.kind == g.kind
            assert g2.lipschitz == pytest.approx(g.lipschitz)
            np.testing.assert_allclose(g2(x), g(x), atol=1e-12)

    def test_scaling_record_shape(self):
        assert tr.scaling(100.0).to_record() == {"kind": "scaling", "s": 100.0}
