"""Channels, distributions and elementary operations."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idbounds import core


def _simplex(k):
    return st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k).filter(lambda v: sum(v) > 1e-3).map(
        lambda v: np.asarray(v) / sum(v)
    )


class TestDistribution:
    def test_normalizes_within_slack(self):
        d = core.Distribution([0.5, 0.5 + 5e-10])
        assert abs(d.probs.sum() - 1.0) <= 1e-12

    def test_rejects_beyond_slack(self):
        with pytest.raises(core.ValidationError, match="not stochastic"):
            core.Distribution([0.5, 0.6])

    def test_rejects_negative(self):
        with pytest.raises(core.ValidationError):
            core.Distribution([1.5, -0.5])

    def test_immutable(self):
        d = core.Distribution.uniform(3)
        with pytest.raises(ValueError):
            d.probs[0] = 1.0

    def test_named(self):
        np.testing.assert_array_equal(core.named_distribution("point:3:1").probs, [0, 1, 0])
        np.testing.assert_allclose(core.named_distribution("uniform:4").probs, 0.25)


class TestChannel:
    def test_row_error_names_row(self):
        with pytest.raises(core.ValidationError, match="row 1 not stochastic"):
            core.Channel(np.array([[0.9, 0.1], [0.5, 0.3]]))

    def test_named_channels(self):
        np.testing.assert_allclose(core.named_channel("bsc:0.1").matrix, [[0.9, 0.1], [0.1, 0.9]])
        assert core.named_channel("bec:0.2").matrix.shape == (2, 3)
        np.testing.assert_array_equal(core.named_channel("identity:3").matrix, np.eye(3))
        np.testing.assert_allclose(core.named_channel("useless:2x4").matrix, 0.25)
        with pytest.raises(core.ValidationError):
            core.named_channel("foo:1")

    def test_json_round_trip(self, tmp_path, bsc01):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(core.channel_to_json(bsc01)))
        np.testing.assert_array_equal(core.load_channel(path).matrix, bsc01.matrix)

    def test_csv(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("# comment\n0.9,0.1\n0.1,0.9\n")
        np.testing.assert_array_equal(core.load_channel(path).matrix, [[0.9, 0.1], [0.1, 0.9]])


class TestOutputAndJoint:
    def test_examples(self, bsc01):
        np.testing.assert_allclose(core.output_distribution([0.5, 0.5], bsc01).probs, [0.5, 0.5])
        np.testing.assert_array_equal(core.output_distribution([1, 0], np.eye(2)).probs, [1, 0])
        np.testing.assert_allclose(core.output_distribution([0.3, 0.7], bsc01).probs, [0.34, 0.66], atol=1e-15)

    def test_dimension_mismatch(self, bsc01):
        with pytest.raises(core.ValidationError):
            core.output_distribution([1.0, 0.0, 0.0], bsc01)

    def test_joint_examples(self, bsc01):
        np.testing.assert_allclose(core.joint([0.5, 0.5], core.Distribution([0.5, 0.5])).mass, 0.25)
        np.testing.assert_allclose(core.joint([1, 0], bsc01).mass, [[0.9, 0.1], [0, 0]])

    @settings(max_examples=50, deadline=None)
    @given(_simplex(3), st.lists(_simplex(4), min_size=3, max_size=3))
    def test_marginals(self, p, rows):
        w = core.Channel(np.vstack(rows))
        j = core.joint(p, w)
        np.testing.assert_allclose(j.marginal_x(), core.probs(p), atol=1e-12)
        np.testing.assert_allclose(j.marginal_y(), core.output_distribution(p, w).probs, atol=1e-12)
        assert abs(core.output_distribution(p, w).probs.sum() - 1) <= 1e-12


class TestVariationalDistance:
    def test_examples(self):
        assert core.variational_distance([0.3, 0.7], [0.3, 0.7]) == 0.0
        assert core.variational_distance([1, 0], [0, 1]) == 1.0
        assert core.variational_distance([0.5, 0.5], [0.3, 0.7]) == pytest.approx(0.2, abs=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(_simplex(5), _simplex(5), _simplex(5))
    def test_metric(self, a, b, c):
        d = core.variational_distance
        assert d(a, b) == pytest.approx(d(b, a), abs=1e-15)
        assert d(a, a) <= 1e-12
        assert d(a, c) <= d(a, b) + d(b, c) + 1e-12


class TestProductChannel:
    def test_n1(self, bsc01):
        np.testing.assert_array_equal(core.product_channel(bsc01, 1).matrix, bsc01.matrix)

    def test_entry(self, bsc01):
        w2 = core.product_channel(bsc01, 2).matrix
        assert w2[0, 3] == pytest.approx(0.01, abs=1e-15)

    def test_rows_and_marginal(self, gen):
        w = core.random_channel(gen, 2, 3)
        w3 = core.product_channel(w, 3)
        np.testing.assert_allclose(w3.matrix.sum(axis=1), 1.0, atol=1e-12)
        p = core.random_distribution(gen, 2).probs
        pn = np.kron(np.kron(p, p), p)
        jn = (pn[:, None] * w3.matrix).reshape(2, 2, 2, 3, 3, 3)
        first = jn.sum(axis=(1, 2, 4, 5))
        np.testing.assert_allclose(first, p[:, None] * w.matrix, atol=1e-12)

    def test_cap(self, bsc01):
        with pytest.raises(core.ValidationError, match="implicit"):
            core.product_channel(bsc01, 20)


class TestLogConventions:
    def test_log_ratio(self):
        r = core.log_ratio([0.5, 0.0, 0.3, 0.0], [0.25, 0.5, 0.0, 0.0])
        assert r[0] == pytest.approx(np.log(2))
        assert r[1] == -np.inf and r[2] == np.inf and np.isnan(r[3])

    def test_kl(self):
        assert core.kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
        assert core.kl_divergence([1.0, 0.0], [0.0, 1.0]) == np.inf
        assert core.kl_divergence([0.0, 1.0], [0.5, 0.5]) == pytest.approx(np.log(2))


class TestMType:
    def test_counts(self, gen):
        mt = core.MType.from_samples(gen.integers(0, 3, size=17), 3)
        assert sum(mt.counts) == 17
        np.testing.assert_allclose(mt.distribution() * 17, np.round(mt.distribution() * 17), atol=1e-12)

    def test_invalid(self):
        with pytest.raises(core.ValidationError):
            core.MType((1, 2), 4)
