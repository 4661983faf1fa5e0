# -*- coding: utf-8 -*-
import numpy as np
import pytest

from config.settings import settings
from src.storage.example_store import ExampleStore, Metric, RetrievalHit, TargetPayload
from src.utils.exceptions import (
    ConfigError,
    DimensionError,
    DuplicateIdError,
    EmptyStoreError,
    FormatError,
    InvalidTargetError,
    StoreError,
)


def _filled_store(rng, n=40, dim=5, metric=Metric.L2) -> ExampleStore:
    store = ExampleStore(dim, metric)
    for i in range(n):
        store.add(100 + i, rng.normal(size=dim), TargetPayload.of_label(i % 2))
    return store.freeze()


class TestExampleStore:
    """Tests del índice exacto de ejemplos"""

    def test_search_matches_brute_force(self, rng):
        store = _filled_store(rng)
        vectors = np.stack([store.vector(i) for i in store.ids]).astype(np.float64)
        for _ in range(10):
            query = rng.normal(size=5)
            q = query.astype(np.float32).astype(np.float64)
            dist = ((vectors - q) ** 2).sum(axis=1)
            expected = [store.ids[j] for j in np.argsort(dist, kind="stable")[:3]]
            hits = store.search(query, k=3)
            assert [h.id for h in hits] == expected
            assert hits[0].distance == pytest.approx(dist.min())

    def test_exact_vector_has_zero_distance(self, rng):
        store = _filled_store(rng)
        hit, payload = store.nearest(store.vector(117))
        assert hit == RetrievalHit(id=117, distance=0.0)
        assert payload.label == 1

    def test_nearest_target_returns_payload(self):
        store = ExampleStore(2)
        store.add(3, [0.0, 0.0], TargetPayload.of_caption([5, 6]))
        store.add(8, [5.0, 5.0], TargetPayload.of_caption([7]))
        assert store.nearest_target([0.1, 0.0]).caption == (5, 6)
        assert store.nearest_target([0.1, 0.0], exclude=[3]).caption == (7,)

    def test_exclusion_skips_self(self, rng):
        store = _filled_store(rng)
        hit, _ = store.nearest(store.vector(117), exclude=[117])
        assert hit.id != 117

    def test_ties_break_by_smaller_id(self):
        store = ExampleStore(2)
        store.add(9, [1.0, 0.0], TargetPayload.of_label(1))
        store.add(4, [0.0, 1.0], TargetPayload.of_label(0))
        store.add(7, [-1.0, 0.0], TargetPayload.of_label(1))
        hits = store.search([0.0, 0.0], k=3)
        assert [h.id for h in hits] == [4, 7, 9]

    def test_inner_product_metric(self):
        store = ExampleStore(2, "ip")
        store.add(1, [1.0, 0.0], TargetPayload.of_label(0))
        store.add(2, [3.0, 0.0], TargetPayload.of_label(1))
        hit, payload = store.nearest([1.0, 0.0])
        assert hit.id == 2
        assert payload.label == 1

    def test_k_larger_than_store(self, rng):
        store = _filled_store(rng, n=3)
        assert len(store.search(rng.normal(size=5), k=10)) == 3

    def test_search_errors(self, rng):
        store = _filled_store(rng, n=1)
        with pytest.raises(DimensionError):
            store.search(np.zeros(4))
        with pytest.raises(ConfigError):
            store.search(np.zeros(5), k=0)
        with pytest.raises(EmptyStoreError):
            store.search(np.zeros(5), exclude=[100])
        with pytest.raises(EmptyStoreError):
            ExampleStore(3).search(np.zeros(3))

    def test_add_errors(self):
        store = ExampleStore(2)
        store.add(1, [0.0, 0.0], TargetPayload.of_label(0))
        with pytest.raises(DuplicateIdError):
            store.add(1, [1.0, 1.0], TargetPayload.of_label(1))
        with pytest.raises(DimensionError):
            store.add(2, [1.0], TargetPayload.of_label(1))
        store.freeze()
        with pytest.raises(StoreError):
            store.add(3, [1.0, 1.0], TargetPayload.of_label(1))

    def test_payload_validation(self):
        with pytest.raises(InvalidTargetError):
            TargetPayload.of_caption([])
        with pytest.raises(InvalidTargetError):
            TargetPayload.of_label(2)
        with pytest.raises(InvalidTargetError):
            TargetPayload(caption=(4,), label=1)

    def test_save_and_load(self, rng, tmp_path):
        store = ExampleStore(4)
        for i in range(5):
            payload = TargetPayload.of_caption([4 + i, 5, 2]) if i % 2 else TargetPayload.of_label(1)
            store.add(i * 3, rng.normal(size=4), payload)
        store.freeze()
        path = store.save(tmp_path / "index.rknn")

        loaded = ExampleStore.load(path)
        assert loaded.ids == store.ids
        assert loaded.metric is Metric.L2
        for example_id in store.ids:
            np.testing.assert_array_equal(loaded.vector(example_id), store.vector(example_id))
            assert loaded.target(example_id) == store.target(example_id)
        query = rng.normal(size=4)
        assert loaded.search(query, k=5) == store.search(query, k=5)

    def test_truncated_file(self, rng, tmp_path):
        raw = _filled_store(rng, n=4).to_bytes()
        with pytest.raises(FormatError):
            ExampleStore.from_bytes(raw[:-1])
        with pytest.raises(FormatError):
            ExampleStore.from_bytes(raw[:30])
        with pytest.raises(FormatError):
            ExampleStore.from_bytes(b"XXXX" + raw[4:])

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ExampleStore.load(tmp_path / "missing.rknn")

    def test_nearest_target_on_clusters(self, rng):
        centers = 10.0 * rng.normal(size=(5, 6))
        store = ExampleStore(6)
        for i in range(100):
            cluster = i % 5
            vec = centers[cluster] + 0.1 * rng.normal(size=6)
            store.add(i, vec, TargetPayload.of_caption([cluster + 4]))
        store.freeze()
        for cluster in range(5):
            for _ in range(4):
                query = centers[cluster] + 0.1 * rng.normal(size=6)
                assert store.nearest_target(query).caption == (cluster + 4,)

    def test_save_and_load_hundred_queries(self, rng, tmp_path):
        store = _filled_store(rng, n=60, dim=8)
        loaded = ExampleStore.load(store.save(tmp_path / "index.rknn"))
        for _ in range(100):
            query = rng.normal(size=8)
            assert loaded.search(query, k=3) == store.search(query, k=3)
            assert loaded.nearest_target(query) == store.nearest_target(query)

    def test_empty_store_round_trip(self, tmp_path):
        path = ExampleStore(3, "ip").freeze().save(tmp_path / "empty.rknn")
        loaded = ExampleStore.load(path)
        assert (len(loaded), loaded.dim, loaded.metric) == (0, 3, Metric.INNER_PRODUCT)
        with pytest.raises(EmptyStoreError):
            loaded.search(np.zeros(3))

    def test_brute_force_with_ties_across_blocks(self, rng, monkeypatch):
        monkeypatch.setattr(settings, "search_block_size", 7)
        n, dim = 1000, 64
        vectors = rng.normal(size=(n, dim))
        # grupos de tres vectores idénticos repartidos en bloques distintos
        for base in range(0, 300, 3):
            vectors[base + 1] = vectors[base]
            vectors[n - 1 - base] = vectors[base]
        ids = rng.permutation(5 * n)[:n]
        store = ExampleStore(dim)
        for example_id, vec in zip(ids, vectors):
            store.add(example_id, vec, TargetPayload.of_label(int(example_id) % 2))
        store.freeze()

        stored = vectors.astype(np.float32).astype(np.float64)
        for j in range(200):
            if j % 2:
                query = rng.normal(size=dim)
            else:
                query = vectors[3 * (j // 2)] + 0.05 * rng.normal(size=dim)
            q = query.astype(np.float32).astype(np.float64)
            diff = stored - q
            dist = np.einsum("ij,ij->i", diff, diff)
            order = np.lexsort((ids, dist))[:5]
            hits = store.search(query, k=5)
            assert [h.id for h in hits] == ids[order].tolist()
            np.testing.assert_allclose([h.distance for h in hits], dist[order], rtol=1e-12)
