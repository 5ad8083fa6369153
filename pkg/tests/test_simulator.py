import numpy as np
import pytest

from reidfuse.errors import ParameterError
from reidfuse.manifest import Kind, Split, load_manifest, validate_records
from reidfuse.simulator import (
    SimSpec,
    generate,
    identity_centroids,
    queries_per_identity,
    write_dataset,
)
from reidfuse.vectors import load_vectors


def small_spec(**overrides):
    defaults = dict(
        n_identities=4, items_per_identity=3, dim=16, seed=42, rho=0.5,
        shift_magnitude=1.0,
    )
    defaults.update(overrides)
    return SimSpec(**defaults)


@pytest.mark.parametrize(
    "overrides",
    [
        {"items_per_identity": 1},
        {"n_identities": 0},
        {"dim": 0},
        {"rho": 1.2},
        {"rho": -0.1},
        {"sigma_base": -0.5},
        {"shift_magnitude": float("nan")},
        {"seed": -1},
    ],
)
def test_invalid_specs_rejected(overrides):
    with pytest.raises(ParameterError):
        small_spec(**overrides)


def test_same_seed_is_bit_identical():
    spec = small_spec(text_dim=8, alt_base_sigma=0.3, alt_refinement_rho=0.1)
    records_a, channels_a = generate(spec)
    records_b, channels_b = generate(spec)
    assert records_a == records_b
    assert channels_a.keys() == channels_b.keys()
    for name in channels_a:
        assert np.array_equal(channels_a[name].data, channels_b[name].data)
        assert channels_a[name].item_order == channels_b[name].item_order


def test_different_seeds_differ():
    _, channels_a = generate(small_spec(seed=1))
    _, channels_b = generate(small_spec(seed=2))
    assert not np.array_equal(channels_a["base"].data, channels_b["base"].data)


def test_all_channels_unit_norm():
    _, channels = generate(small_spec(text_dim=8, alt_base_sigma=0.3))
    for emb in channels.values():
        norms = np.linalg.norm(emb.data.astype(np.float64), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-4)


def test_manifest_is_valid_and_complete():
    spec = small_spec(text_dim=8)
    records, channels = generate(spec)
    validate_records(records)
    n_items = spec.n_identities * spec.items_per_identity
    kinds = {}
    for record in records:
        kinds[record.kind] = kinds.get(record.kind, 0) + 1
    assert kinds[Kind.BASE] == n_items
    assert kinds[Kind.REFINEMENT] == 3 * n_items
    assert kinds[Kind.TEXT] == n_items
    assert set(channels) == {
        "base", "refinement_A", "refinement_B", "refinement_C", "text",
    }


def test_split_sizes_follow_one_third_rule():
    assert queries_per_identity(2) == 1
    assert queries_per_identity(6) == 2
    assert queries_per_identity(10) == 3

    records, _ = generate(small_spec(items_per_identity=6))
    for ident in range(4):
        own = [
            r for r in records
            if r.kind is Kind.BASE and r.identity_id == f"id{ident:03d}"
        ]
        n_query = sum(1 for r in own if r.split is Split.QUERY)
        assert n_query == 2
        assert len(own) - n_query == 4


def test_optional_channels_leave_core_channels_untouched():
    plain = small_spec()
    extended = small_spec(text_dim=8, alt_base_sigma=0.3, alt_refinement_rho=0.1)
    _, core = generate(plain)
    _, full = generate(extended)
    for name in ("base", "refinement_A", "refinement_B", "refinement_C"):
        assert np.array_equal(core[name].data, full[name].data)
    assert {"text", "base_alt", "refinement_A_alt"} <= set(full)


def _mean_cosine_to_own_centroid(emb, centroids, items_per_identity):
    # channel rows are identity-major, items consecutive
    per_row = np.repeat(centroids, items_per_identity, axis=0)
    return float(np.mean(np.sum(emb.data.astype(np.float64) * per_row, axis=1)))


def test_faithful_refinements_match_base_distribution():
    # rho=1, shift=0, equal noise: refinements should look just like bases
    spec = SimSpec(
        n_identities=20, items_per_identity=50, dim=64, sigma_base=0.15,
        rho=1.0, shift_magnitude=0.0, sigma_refinement=0.15, seed=7,
    )
    _, channels = generate(spec)
    centroids = identity_centroids(spec)
    base_mean = _mean_cosine_to_own_centroid(channels["base"], centroids, 50)
    ref_mean = _mean_cosine_to_own_centroid(channels["refinement_A"], centroids, 50)
    assert abs(base_mean - ref_mean) < 0.02


def test_zero_fidelity_refinements_forget_identity():
    spec = SimSpec(
        n_identities=50, items_per_identity=20, dim=64, sigma_base=0.15,
        rho=0.0, shift_magnitude=0.0, sigma_refinement=0.15, seed=11,
    )
    _, channels = generate(spec)
    centroids = identity_centroids(spec)
    own_mean = _mean_cosine_to_own_centroid(channels["refinement_A"], centroids, 20)

    rng = np.random.default_rng(99)
    other = np.array([
        centroids[(ident + 1 + rng.integers(49)) % 50]
        for ident in range(50)
        for _ in range(20)
    ])
    data = channels["refinement_A"].data.astype(np.float64)
    other_mean = float(np.mean(np.sum(data * other, axis=1)))
    assert abs(own_mean - other_mean) < 0.05


def test_zero_noise_zero_fidelity_lands_on_other_centroids():
    spec = SimSpec(
        n_identities=6, items_per_identity=4, dim=32, sigma_base=0.1,
        rho=0.0, shift_magnitude=0.0, sigma_refinement=0.0, seed=3,
    )
    _, channels = generate(spec)
    centroids = identity_centroids(spec)
    data = channels["refinement_B"].data.astype(np.float64)
    own = np.repeat(centroids, 4, axis=0)
    cos_own = np.sum(data * own, axis=1)
    assert cos_own.max() < 0.99  # never the item's own centroid
    best_any = np.max(data @ centroids.T, axis=1)
    np.testing.assert_allclose(best_any, 1.0, atol=1e-5)  # exactly some centroid


def test_write_dataset_roundtrip(tmp_path):
    spec = small_spec(text_dim=8)
    records, channels = generate(spec)
    out = write_dataset(records, channels, tmp_path / "sim")

    loaded = load_manifest(out / "manifest.jsonl")
    assert loaded == records

    base_records = [r for r in loaded if r.kind is Kind.BASE]
    emb = load_vectors(out / "base.vec", base_records)
    assert np.array_equal(emb.data, channels["base"].data)
    assert emb.item_order == [r.item_id for r in base_records]

    on_disk = {p.name for p in out.iterdir()}
    assert on_disk == {
        "manifest.jsonl", "base.vec", "refinement_A.vec",
        "refinement_B.vec", "refinement_C.vec", "text.vec",
    }
