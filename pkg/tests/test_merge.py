import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedoselm import merge, oselm
from fedoselm.elm import Activation, Chunk, Topology, hidden, init_model, train_batch
from fedoselm.errors import ConfigurationError, IncompatibleTopologyError, SingularMatrixError
from fedoselm.merge import Intermediates, combine, extract, rebuild, subtract

from conftest import regression_data, rel_fro


def concat(*chunks):
    return Chunk(np.vstack([c.x for c in chunks]), np.vstack([c.t for c in chunks]))


def sequential(topo, data, ridge=0.0, init=None):
    init = init or topo.n_hidden
    model = oselm.init_sequential(init_model(topo), Chunk(data.x[:init], data.t[:init]), ridge)
    return oselm.train_stream(model, oselm.rows(data.x[init:], data.t[init:]))


def random_ir(rng, topo, samples=10):
    h = rng.standard_normal((samples, topo.n_hidden))
    t = rng.standard_normal((samples, topo.n_output))
    return Intermediates(h.T @ h, h.T @ t, topo, samples)


class TestExtract:
    def test_u_and_v_equal_direct_products(self, rng, small_topology):
        data = regression_data(rng, 30)
        model = oselm.init_sequential(init_model(small_topology), data, ridge=1e-3)
        ir = extract(model)
        h = hidden(model, data.x)
        assert rel_fro(ir.u, h.T @ h + 1e-3 * np.eye(4)) < 1e-8
        assert rel_fro(ir.v, h.T @ data.t) < 1e-8
        assert ir.ridge == 1e-3 and ir.sample_count == 30

    def test_round_trip(self, rng, small_topology):
        model = sequential(small_topology, regression_data(rng, 40))
        back = rebuild(extract(model))
        assert rel_fro(back.beta, model.beta) < 1e-8
        assert rel_fro(back.p, model.p) < 1e-8
        assert back.alpha.tobytes() == model.alpha.tobytes()

    def test_needs_state(self, small_topology):
        with pytest.raises(ConfigurationError):
            extract(init_model(small_topology))


class TestCombine:
    def test_zero_identity(self, rng, small_topology):
        a = random_ir(rng, small_topology)
        out = combine(a, merge.zeros(small_topology))
        assert out.equals(a)

    def test_commutative_bit_exact(self, rng, small_topology):
        a, b = random_ir(rng, small_topology), random_ir(rng, small_topology)
        assert combine(a, b).equals(combine(b, a))

    def test_merge_equals_union_batch(self, rng, small_topology):
        d1, d2 = regression_data(rng, 40), regression_data(rng, 35)
        m1, m2 = sequential(small_topology, d1), sequential(small_topology, d2)
        merged = rebuild(combine(extract(m1), extract(m2)))
        batch = train_batch(init_model(small_topology), concat(d1, d2))
        assert rel_fro(merged.beta, batch.beta) < 1e-7
        assert merged.sample_count == 75

    def test_rejects_seed_mismatch(self, rng, small_topology):
        other = Topology(8, 4, 8, Activation.IDENTITY, init_seed=8)
        with pytest.raises(IncompatibleTopologyError, match="7 vs 8") as info:
            combine(random_ir(rng, small_topology), random_ir(rng, other))
        assert (info.value.seed_a, info.value.seed_b) == (7, 8)

    def test_rejects_topology_mismatch(self, rng, small_topology):
        other = Topology(8, 4, 8, Activation.SIGMOID, init_seed=7)
        with pytest.raises(IncompatibleTopologyError):
            combine(random_ir(rng, small_topology), random_ir(rng, other))

    def test_ridge_accumulates(self, rng, small_topology):
        d1, d2 = regression_data(rng, 3), regression_data(rng, 3)
        m1 = oselm.init_sequential(init_model(small_topology), d1, 0.25)
        m2 = oselm.init_sequential(init_model(small_topology), d2, 0.25)
        merged = rebuild(combine(extract(m1), extract(m2)))
        assert merged.ridge == 0.5
        batch = train_batch(init_model(small_topology), concat(d1, d2), ridge=0.5)
        assert rel_fro(merged.beta, batch.beta) < 1e-8

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_associative(self, seed):
        g = np.random.default_rng(seed)
        topo = Topology(5, 3, 4, init_seed=1)
        a, b, c = (random_ir(g, topo) for _ in range(3))
        left = combine(combine(a, b), c)
        right = combine(a, combine(b, c))
        assert np.max(np.abs(left.u - right.u)) <= 1e-12
        assert np.max(np.abs(left.v - right.v)) <= 1e-12

    def test_post_merge_training_continues(self, rng, small_topology):
        d1, d2, d3 = regression_data(rng, 30), regression_data(rng, 30), regression_data(rng, 12)
        merged = rebuild(combine(extract(sequential(small_topology, d1)),
                                 extract(sequential(small_topology, d2))))
        cont = oselm.train_stream(merged, oselm.rows(d3.x, d3.t))
        batch = train_batch(init_model(small_topology), concat(d1, d2, d3))
        assert rel_fro(cont.beta, batch.beta) < 1e-7


class TestSubtract:
    def test_inverse_of_combine(self, rng, small_topology):
        a, b = random_ir(rng, small_topology), random_ir(rng, small_topology)
        back = subtract(combine(a, b), b)
        assert np.max(np.abs(back.u - a.u)) < 1e-9 and np.max(np.abs(back.v - a.v)) < 1e-9
        assert back.sample_count == a.sample_count

    def test_self_is_zero(self, rng, small_topology):
        a = random_ir(rng, small_topology)
        out = subtract(a, a)
        assert not out.u.any() and not out.v.any()

    def test_unlearn_recovers_batch(self, rng, small_topology):
        d1, d2 = regression_data(rng, 40), regression_data(rng, 30)
        union = sequential(small_topology, concat(d1, d2))
        removed = rebuild(subtract(extract(union), extract(sequential(small_topology, d2))))
        batch = train_batch(init_model(small_topology), d1)
        assert rel_fro(removed.beta, batch.beta) < 1e-7

    def test_sample_count_guard(self, rng, small_topology):
        with pytest.raises(ConfigurationError):
            subtract(random_ir(rng, small_topology, 3), random_ir(rng, small_topology, 10))

    def test_replace(self, rng, small_topology):
        a, old, new = (random_ir(rng, small_topology) for _ in range(3))
        out = merge.replace(combine(a, old), old, new)
        expected = combine(a, new)
        assert np.max(np.abs(out.u - expected.u)) < 1e-9


class TestRebuild:
    def test_identity_u(self, rng, small_topology):
        beta0 = rng.standard_normal((4, 8))
        model = rebuild(Intermediates(np.eye(4), beta0, small_topology))
        np.testing.assert_allclose(model.beta, beta0, rtol=0, atol=1e-15)

    def test_singular_u(self, small_topology):
        with pytest.raises(SingularMatrixError):
            rebuild(merge.zeros(small_topology))

    def test_ridge_floor(self, small_topology):
        model = rebuild(merge.zeros(small_topology), ridge_floor=1e-8)
        assert model.ridge == 1e-8 and np.all(model.beta == 0)


class TestValidate:
    def test_accepts_products(self, rng, small_topology):
        merge.validate(random_ir(rng, small_topology))

    def test_rejects_indefinite(self, small_topology):
        ir = Intermediates(-np.eye(4), np.zeros((4, 8)), small_topology)
        with pytest.raises(ConfigurationError):
            merge.validate(ir)

    def test_rejects_asymmetric(self, small_topology):
        u = np.eye(4)
        u[0, 1] = 0.5
        with pytest.raises(ConfigurationError):
            merge.validate(Intermediates(u, np.zeros((4, 8)), small_topology))

    def test_shape_checked(self, small_topology):
        with pytest.raises(IncompatibleTopologyError):
            Intermediates(np.eye(3), np.zeros((3, 8)), small_topology)
