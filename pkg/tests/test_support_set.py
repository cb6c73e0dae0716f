from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist
from scipy.stats import chisquare

from nnclr.errors import BatchLargerThanQueue, KOutOfRange, LabelsUnavailable
from nnclr.numerics import l2_normalize
from nnclr.support_set import SupportSet


def make_queue(m, d, seed=0, **kwargs):
    return SupportSet(m, d, np.random.default_rng(seed), **kwargs)


def unit_rows(rng, n, d):
    return l2_normalize(rng.standard_normal((n, d)))


class TestPush:
    def test_fifo_overwrites_oldest(self):
        q = make_queue(4, 3)
        r = unit_rows(np.random.default_rng(1), 6, 3)
        q.push(r[:4])
        q.push(r[4:6])
        stored = l2_normalize(r)  # push stores the normalized rows
        np.testing.assert_array_equal(
            q.buffer, np.array([stored[4], stored[5], stored[2], stored[3]]))

    def test_same_batch_twice_leaves_two_copies(self):
        q = make_queue(4, 3)
        batch = unit_rows(np.random.default_rng(2), 2, 3)
        q.push(batch)
        q.push(batch)
        np.testing.assert_array_equal(q.buffer[:2], q.buffer[2:])
        np.testing.assert_array_equal(q.buffer[:2], l2_normalize(batch))

    def test_random_mode_reproducible(self):
        batch = unit_rows(np.random.default_rng(3), 4, 5)
        buffers = []
        for _ in range(2):
            q = make_queue(16, 5, seed=9, replacement="random")
            q.push(batch)
            q.push(batch[:2])
            buffers.append(q.buffer.copy())
        np.testing.assert_array_equal(buffers[0], buffers[1])

    def test_random_mode_overwrites_distinct_slots(self):
        q = make_queue(16, 5, replacement="random")
        before = q.buffer.copy()
        q.push(unit_rows(np.random.default_rng(4), 6, 5))
        changed = np.flatnonzero(np.any(q.buffer != before, axis=1))
        assert len(changed) == 6

    def test_batch_larger_than_queue(self):
        q = make_queue(4, 3)
        with pytest.raises(BatchLargerThanQueue):
            q.push(np.ones((5, 3)))

    def test_stored_rows_normalized(self):
        q = make_queue(8, 4)
        q.push(np.random.default_rng(5).standard_normal((8, 4)) * 10)
        np.testing.assert_allclose(np.linalg.norm(q.buffer, axis=1), 1.0, atol=1e-10)

    @given(st.lists(st.integers(1, 8), min_size=1, max_size=30),
           st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_fifo_matches_reference_ring(self, batch_sizes, seed):
        rng = np.random.default_rng(seed)
        m, d = 8, 3
        q = make_queue(m, d, seed=seed)
        ref = deque(q.buffer.copy(), maxlen=m)  # oldest-first reference model
        for b in batch_sizes:
            batch = unit_rows(rng, b, d)
            q.push(batch)
            ref.extend(l2_normalize(batch))
        # slot at write_cursor holds the oldest surviving row
        expected = np.roll(np.stack(list(ref)), q.write_cursor, axis=0)
        np.testing.assert_array_equal(q.buffer, expected)


class TestNearest:
    def test_self_retrieval(self):
        q = make_queue(8, 4)
        neighbors, idx = q.nearest(q.buffer[3:4].copy())
        assert idx[0] == 3
        np.testing.assert_array_equal(neighbors[0], q.buffer[3])

    def test_dot_product_example(self):
        q = make_queue(2, 2)
        q.buffer[...] = [[0.0, 1.0], [0.8, 0.6]]
        neighbors, _ = q.nearest(np.array([[1.0, 0.0]]))
        np.testing.assert_allclose(neighbors, [[0.8, 0.6]])

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(6)
        q = make_queue(512, 16)
        query = rng.standard_normal((64, 16))
        _, idx = q.nearest(query)
        # independent oracle: Euclidean distances via scipy
        oracle = np.argmin(cdist(l2_normalize(query), q.buffer), axis=1)
        np.testing.assert_array_equal(idx, oracle)

    def test_scale_invariance(self):
        rng = np.random.default_rng(7)
        q = make_queue(64, 8)
        query = rng.standard_normal((16, 8))
        _, idx = q.nearest(query)
        q.buffer *= 3.5  # retrieval normalizes the query; buffer rows scaled too
        _, idx_scaled = q.nearest(query * 0.01)
        q.buffer /= 3.5
        np.testing.assert_array_equal(idx, idx_scaled)

    def test_retrieval_does_not_mutate_buffer(self):
        q = make_queue(32, 4)
        before = q.buffer.copy()
        neighbors, _ = q.nearest(np.random.default_rng(8).standard_normal((4, 4)))
        neighbors[...] = 0.0  # writes to the copy must not reach the queue
        np.testing.assert_array_equal(q.buffer, before)


class TestTopK:
    def test_k1_equals_nearest(self):
        rng = np.random.default_rng(9)
        q = make_queue(32, 6)
        query = rng.standard_normal((8, 6))
        n1, i1 = q.nearest(query)
        n2, i2 = q.top_k_sample(query, 1, np.random.default_rng(0))
        np.testing.assert_array_equal(i1, i2)
        np.testing.assert_array_equal(n1, n2)

    def test_k_equals_m_uniform(self):
        m = 8
        q = make_queue(m, 4)
        rng = np.random.default_rng(10)
        query = np.tile(unit_rows(rng, 1, 4), (10000, 1))
        _, idx = q.top_k_sample(query, m, rng)
        counts = np.bincount(idx, minlength=m)
        assert chisquare(counts).pvalue > 0.01

    def test_k2_with_duplicate(self):
        rng = np.random.default_rng(11)
        q = make_queue(16, 4)
        query = q.buffer[5:6].copy()
        q.buffer[9] = q.buffer[5]  # exact duplicate of the query
        sims = (l2_normalize(query) @ q.buffer.T)[0]
        top2 = set(np.argsort(-sims, kind="stable")[:2])
        for draw_seed in range(20):
            _, idx = q.top_k_sample(query, 2, np.random.default_rng(draw_seed))
            assert idx[0] in top2

    def test_k_out_of_range(self):
        q = make_queue(8, 4)
        rng = np.random.default_rng(0)
        with pytest.raises(KOutOfRange):
            q.top_k_sample(np.ones((1, 4)), 0, rng)
        with pytest.raises(KOutOfRange):
            q.top_k_sample(np.ones((1, 4)), 9, rng)


class TestSoftNN:
    def test_small_temperature_approaches_hard_nn(self):
        rng = np.random.default_rng(12)
        q = make_queue(64, 8)
        query = rng.standard_normal((16, 8))
        soft = q.soft_nn(query, temperature_s=1e-3)
        hard, _ = q.nearest(query)
        cos = np.sum(l2_normalize(soft) * hard, axis=1)
        assert np.all(cos > 0.999)

    def test_opposite_vectors_cancel(self):
        q = make_queue(2, 2)
        q.buffer[...] = [[1.0, 0.0], [-1.0, 0.0]]
        out = q.soft_nn(np.array([[0.0, 1.0]]), temperature_s=0.1)
        np.testing.assert_allclose(out, [[0.0, 0.0]], atol=1e-12)

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(13)
        q = make_queue(32, 6)
        w = q.soft_weights(rng.standard_normal((8, 6)), temperature_s=0.1)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)

    def test_output_in_convex_hull(self):
        rng = np.random.default_rng(14)
        q = make_queue(16, 4)
        out = q.soft_nn(rng.standard_normal((4, 4)), temperature_s=0.5)
        # convex combinations of unit rows stay inside the unit ball
        assert np.all(np.linalg.norm(out, axis=1) <= 1.0 + 1e-12)


class TestOracleNN:
    def test_all_labels_match_equals_nearest(self):
        q = make_queue(32, 4, with_labels=True, num_classes=3)
        q.labels[...] = 1
        rng = np.random.default_rng(15)
        query = rng.standard_normal((8, 4))
        _, idx_plain = q.nearest(query)
        _, idx_oracle = q.oracle_nn(query, np.ones(8, dtype=int))
        np.testing.assert_array_equal(idx_plain, idx_oracle)

    def test_unique_label_row_returned(self):
        q = make_queue(8, 4, with_labels=True, num_classes=4)
        q.labels[...] = 0
        q.labels[5] = 3
        _, idx = q.oracle_nn(np.random.default_rng(16).standard_normal((1, 4)),
                             np.array([3]))
        assert idx[0] == 5

    def test_matches_filtered_scan_oracle(self):
        rng = np.random.default_rng(17)
        q = make_queue(64, 8, with_labels=True, num_classes=4)
        query = rng.standard_normal((16, 8))
        labels = rng.integers(0, 4, 16)
        _, idx = q.oracle_nn(query, labels)
        dists = cdist(l2_normalize(query), q.buffer)
        for i in range(16):
            allowed = np.flatnonzero(q.labels == labels[i])
            assert idx[i] == allowed[np.argmin(dists[i, allowed])]

    def test_fallback_without_matching_label(self):
        q = make_queue(8, 4, with_labels=True, num_classes=2)
        q.labels[...] = 0
        query = np.random.default_rng(18).standard_normal((2, 4))
        _, idx = q.oracle_nn(query, np.array([1, 1]))
        _, idx_plain = q.nearest(query)
        np.testing.assert_array_equal(idx, idx_plain)

    def test_labels_unavailable(self):
        q = make_queue(8, 4)
        with pytest.raises(LabelsUnavailable):
            q.oracle_nn(np.ones((1, 4)), np.array([0]))
        with pytest.raises(LabelsUnavailable):
            q.nn_label_match_rate(np.ones((1, 4)), np.array([0]))


class TestLabelMatchRate:
    def test_perfect_match(self):
        rng = np.random.default_rng(19)
        rows = unit_rows(rng, 8, 4)
        labels = np.arange(8) % 3
        q = make_queue(8, 4, with_labels=True, num_classes=3)
        q.push(rows, labels)
        assert q.nn_label_match_rate(rows, labels) == 1.0

    def test_random_labels_near_chance(self):
        c = 4
        rng = np.random.default_rng(20)
        q = make_queue(1024, 16, with_labels=True, num_classes=c)
        n = 2000
        rate = q.nn_label_match_rate(rng.standard_normal((n, 16)),
                                     rng.integers(0, c, n))
        # binomial 99.9% interval around 1/c
        margin = 3.29 * np.sqrt((1 / c) * (1 - 1 / c) / n)
        assert abs(rate - 1 / c) < margin
