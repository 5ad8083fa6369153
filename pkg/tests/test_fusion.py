import numpy as np
import pytest

from reidfuse.distances import (
    DistanceMatrix,
    Metric,
    cosine_distance_matrix,
    l2_normalize,
)
from reidfuse.errors import NormalizationError, ParameterError, ShapeError
from reidfuse.fusion import (
    FusionSpec,
    fuse_average,
    fuse_concat,
    fuse_conditional_percentile,
    fuse_dual_channel,
)
from reidfuse.vectors import EmbeddingSet

from oracles import (
    scalar_average_fusion,
    scalar_concat_fusion,
    scalar_conditional_rows,
)


def make_set(rows, ids=None, normalized=False):
    rows = np.asarray(rows, dtype=np.float32)
    if ids is None:
        ids = [f"i{k}" for k in range(rows.shape[0])]
    return EmbeddingSet(data=rows, item_order=ids, normalized=normalized)


def random_aligned_sets(rng, m, count, dim):
    ids = [f"i{k}" for k in range(count)]
    return [
        l2_normalize(make_set(rng.standard_normal((count, dim)), ids))
        for _ in range(m)
    ]


class TestFusionSpec:
    def test_weighted_requires_weights(self):
        with pytest.raises(ParameterError, match="requires weights"):
            FusionSpec(method="weighted_average", sources=["base", "refinement_A"])

    def test_weight_length_checked(self):
        with pytest.raises(ParameterError):
            FusionSpec(
                method="weighted_concat",
                sources=["base", "refinement_A"],
                weights=[1.0],
            )

    def test_conditional_defaults_percentile(self):
        spec = FusionSpec(method="conditional_percentile", sources=["base"])
        assert spec.percentile == 20.0

    def test_unknown_method(self):
        with pytest.raises(ParameterError, match="unknown fusion method"):
            FusionSpec(method="magic")

    def test_negative_weights_rejected(self):
        with pytest.raises(ParameterError):
            FusionSpec(method="weighted_average", sources=["a"], weights=[-1.0])


class TestFuseAverage:
    def test_two_axis_symmetry(self):
        out = fuse_average([make_set([[1.0, 0.0]]), make_set([[0.0, 1.0]])])
        assert np.allclose(out.data, [[0.7071068, 0.7071068]], atol=1e-6)
        assert out.normalized

    def test_single_source_identity_direction(self):
        rng = np.random.default_rng(0)
        src = random_aligned_sets(rng, 1, 6, 5)[0]
        out = fuse_average([src], weights=[2.5])
        cos = np.sum(out.data.astype(np.float64) * src.data, axis=1)
        assert np.allclose(cos, 1.0, atol=1e-6)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(42)
        sources = random_aligned_sets(rng, 3, 5, 7)
        weights = [0.5, 0.3, 0.2]
        out = fuse_average(sources, weights)
        expected = scalar_average_fusion([s.data.tolist() for s in sources], weights)
        assert np.allclose(out.data, expected, atol=1e-6)

    def test_dim_mismatch_rejected(self):
        a = make_set([[1.0, 0.0]])
        b = make_set([[1.0, 0.0, 0.0]])
        with pytest.raises(ShapeError, match="concat for mixed dims"):
            fuse_average([a, b])

    def test_count_mismatch_rejected(self):
        a = make_set([[1.0, 0.0]])
        b = make_set([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ShapeError):
            fuse_average([a, b])

    def test_misaligned_item_order_rejected(self):
        a = make_set([[1.0, 0.0]], ids=["x"])
        b = make_set([[0.0, 1.0]], ids=["y"])
        with pytest.raises(ShapeError, match="item_order"):
            fuse_average([a, b])

    def test_all_zero_fused_row(self):
        a = make_set([[1.0, 0.0]])
        b = make_set([[-1.0, 0.0]])
        with pytest.raises(NormalizationError, match="all-zero"):
            fuse_average([a, b])

    def test_source_permutation_invariance(self):
        rng = np.random.default_rng(7)
        sources = random_aligned_sets(rng, 3, 4, 6)
        weights = [0.6, 0.3, 0.1]
        out1 = fuse_average(sources, weights)
        out2 = fuse_average(
            [sources[2], sources[0], sources[1]], [weights[2], weights[0], weights[1]]
        )
        assert np.allclose(out1.data, out2.data, atol=1e-7)


class TestFuseConcat:
    def test_unit_axes(self):
        out = fuse_concat([make_set([[1.0, 0.0]]), make_set([[0.0, 1.0]])])
        inv_sqrt2 = 1.0 / np.sqrt(2)
        assert np.allclose(out.data, [[inv_sqrt2, 0, 0, inv_sqrt2]], atol=1e-6)
        assert out.dim == 4

    def test_single_source_direction_preserved(self):
        rng = np.random.default_rng(1)
        src = random_aligned_sets(rng, 1, 5, 4)[0]
        out = fuse_concat([src])
        cos = np.sum(out.data.astype(np.float64) * src.data, axis=1)
        assert np.allclose(cos, 1.0, atol=1e-6)
        assert out.dim == src.dim

    def test_cosine_equals_mean_of_per_source_similarities(self):
        rng = np.random.default_rng(12)
        ids_q = ["q0", "q1", "q2"]
        ids_g = ["g0", "g1", "g2", "g3"]
        qa = l2_normalize(make_set(rng.standard_normal((3, 5)), ids_q))
        qb = l2_normalize(make_set(rng.standard_normal((3, 8)), ids_q))
        ga = l2_normalize(make_set(rng.standard_normal((4, 5)), ids_g))
        gb = l2_normalize(make_set(rng.standard_normal((4, 8)), ids_g))
        fused_q = fuse_concat([qa, qb])
        fused_g = fuse_concat([ga, gb])
        fused_sim = 1.0 - cosine_distance_matrix(fused_q, fused_g).values
        mean_sim = 0.5 * (
            (1.0 - cosine_distance_matrix(qa, ga).values)
            + (1.0 - cosine_distance_matrix(qb, gb).values)
        )
        assert np.allclose(fused_sim, mean_sim, atol=1e-6)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(9)
        ids = ["i0", "i1", "i2", "i3"]
        a = l2_normalize(make_set(rng.standard_normal((4, 3)), ids))
        b = l2_normalize(make_set(rng.standard_normal((4, 5)), ids))
        weights = [0.7, 0.3]
        out = fuse_concat([a, b], weights)
        expected = scalar_concat_fusion(
            [a.data.tolist(), b.data.tolist()], weights
        )
        assert np.allclose(out.data, expected, atol=1e-6)

    def test_mixed_dims_allowed(self):
        a = make_set([[1.0, 0.0]])
        b = make_set([[0.0, 1.0, 0.0]])
        assert fuse_concat([a, b]).dim == 5


def dist(values):
    return DistanceMatrix(values=np.asarray(values, dtype=np.float32))


class TestConditionalPercentile:
    def test_percentile_zero_keeps_base(self):
        rng = np.random.default_rng(2)
        base = dist(rng.random((6, 5)))
        fused = dist(rng.random((6, 5)))
        out = fuse_conditional_percentile(base, fused, percentile=0.0)
        assert out.values.tobytes() == base.values.tobytes()

    def test_percentile_hundred_replaces_all_but_max(self):
        base_rows = np.array(
            [
                [0.9, 0.8, 0.7, 0.6],   # best sim 0.4
                [0.5, 0.8, 0.9, 0.95],  # best sim 0.5
                [0.3, 0.9, 0.9, 0.9],   # best sim 0.7
                [0.1, 0.9, 0.9, 0.9],   # best sim 0.9  <- max, keeps base
            ],
            dtype=np.float32,
        )
        base = dist(base_rows)
        fused = dist(np.full((4, 4), 0.42, dtype=np.float32))
        out = fuse_conditional_percentile(base, fused, percentile=100.0)
        for i in range(3):
            assert out.values[i].tobytes() == fused.values[i].tobytes()
        assert out.values[3].tobytes() == base.values[3].tobytes()

    def test_matches_rule_oracle_at_20(self):
        rng = np.random.default_rng(31)
        base = dist(rng.random((10, 8)))
        fused = dist(rng.random((10, 8)))
        out = fuse_conditional_percentile(base, fused, percentile=20.0)
        flags, _ = scalar_conditional_rows(
            base.values.tolist(), fused.values.tolist(), 20.0
        )
        for i, take_fused in enumerate(flags):
            source = fused if take_fused else base
            assert out.values[i].tobytes() == source.values[i].tobytes()

    def test_all_pairs_scope_matches_oracle(self):
        rng = np.random.default_rng(33)
        base = dist(rng.random((8, 6)))
        fused = dist(rng.random((8, 6)))
        out = fuse_conditional_percentile(
            base, fused, percentile=50.0, scope="all_pairs"
        )
        flags, _ = scalar_conditional_rows(
            base.values.tolist(), fused.values.tolist(), 50.0, scope="all_pairs"
        )
        for i, take_fused in enumerate(flags):
            source = fused if take_fused else base
            assert out.values[i].tobytes() == source.values[i].tobytes()

    def test_row_provenance_is_exact(self):
        rng = np.random.default_rng(4)
        base = dist(rng.random((12, 7)))
        fused = dist(rng.random((12, 7)))
        out = fuse_conditional_percentile(base, fused, percentile=40.0)
        for i in range(12):
            row = out.values[i].tobytes()
            from_base = row == base.values[i].tobytes()
            from_fused = row == fused.values[i].tobytes()
            assert from_base or from_fused

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            fuse_conditional_percentile(
                dist(np.zeros((2, 3))), dist(np.zeros((2, 4)))
            )

    def test_empty_queries(self):
        with pytest.raises(ParameterError, match="empty query set"):
            fuse_conditional_percentile(
                dist(np.zeros((0, 3))), dist(np.zeros((0, 3)))
            )


class TestDualChannel:
    def test_mix_one_is_base(self):
        rng = np.random.default_rng(8)
        base = dist(rng.random((3, 4)))
        ref = dist(rng.random((3, 4)))
        out = fuse_dual_channel(base, ref, mix=1.0)
        assert out.values.tobytes() == base.values.tobytes()

    def test_mix_zero_is_refinement(self):
        rng = np.random.default_rng(8)
        base = dist(rng.random((3, 4)))
        ref = dist(rng.random((3, 4)))
        out = fuse_dual_channel(base, ref, mix=0.0)
        assert out.values.tobytes() == ref.values.tobytes()

    def test_half_mix_is_elementwise_mean(self):
        rng = np.random.default_rng(19)
        base = dist(rng.random((3, 4)))
        ref = dist(rng.random((3, 4)))
        out = fuse_dual_channel(base, ref, mix=0.5)
        mean = 0.5 * (base.values.astype(np.float64) + ref.values.astype(np.float64))
        assert np.allclose(out.values, mean, atol=1e-7)

    def test_metric_mismatch(self):
        base = DistanceMatrix(values=np.zeros((2, 2), dtype=np.float32))
        ref = DistanceMatrix(
            values=np.zeros((2, 2), dtype=np.float32), metric=Metric.EUCLIDEAN
        )
        with pytest.raises(ShapeError, match="metric"):
            fuse_dual_channel(base, ref)

    def test_mix_out_of_range(self):
        base = dist(np.zeros((1, 1)))
        with pytest.raises(ParameterError):
            fuse_dual_channel(base, base, mix=1.5)
