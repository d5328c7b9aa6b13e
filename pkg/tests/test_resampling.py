import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from mlpf.resampling import (
    DegenerateWeightsError,
    WeightVector,
    ess,
    maximal_coupling_indices,
    maximal_coupling_pmf,
    multinomial_indices,
    normalize_log_weights,
    sorted_coupling_indices,
)


class StubRng:
    """Replays a scripted uniform stream through .random(size)."""

    def __init__(self, values):
        self.values = list(values)

    def random(self, size=None):
        n = 1 if size is None else size
        out = np.array([self.values.pop(0) for _ in range(n)])
        return out if size is not None else out[0]


def wv(weights):
    w = np.asarray(weights, dtype=float)
    with np.errstate(divide="ignore"):
        return normalize_log_weights(np.log(w))


class TestNormalize:
    def test_uniform(self):
        v = normalize_log_weights(np.full(7, -3.2))
        assert np.allclose(v.normalized, 1 / 7, atol=1e-15)

    def test_support_collapse(self):
        v = normalize_log_weights(np.array([0.0, -np.inf]))
        assert np.array_equal(v.normalized, [1.0, 0.0])

    def test_direct_arithmetic(self):
        v = normalize_log_weights(np.log([2.0, 1.0, 1.0]))
        assert np.allclose(v.normalized, [0.5, 0.25, 0.25], atol=1e-15)

    def test_all_neg_inf_raises(self):
        with pytest.raises(DegenerateWeightsError):
            normalize_log_weights(np.array([-np.inf, -np.inf]))

    @given(st.lists(st.floats(-30, 30), min_size=1, max_size=20), st.floats(-100, 100))
    def test_shift_invariance(self, lws, c):
        a = normalize_log_weights(np.array(lws))
        b = normalize_log_weights(np.array(lws) + c)
        assert np.allclose(a.normalized, b.normalized, atol=1e-12)
        assert abs(a.normalized.sum() - 1.0) < 1e-12


class TestEss:
    def test_uniform(self):
        assert ess(wv(np.ones(13))) == pytest.approx(13.0)

    def test_atom(self):
        assert ess(wv([1.0, 0.0, 0.0])) == pytest.approx(1.0)

    def test_hand_value(self):
        assert ess(wv([0.5, 0.25, 0.25])) == pytest.approx(1 / 0.375)


class TestMultinomial:
    def test_degenerate(self):
        idx = multinomial_indices(wv([1.0, 0, 0, 0]), 50, np.random.default_rng(0))
        assert np.all(idx == 0)

    def test_inverse_cdf_walkthrough(self):
        idx = multinomial_indices(wv([0.7, 0.3]), 2, StubRng([0.65, 0.75]))
        assert list(idx) == [0, 1]

    def test_frequencies(self):
        n = 8
        draws = 100_000
        idx = multinomial_indices(wv(np.ones(n)), draws, np.random.default_rng(42))
        freq = np.bincount(idx, minlength=n) / draws
        se = np.sqrt((1 / n) * (1 - 1 / n) / draws)
        assert np.all(np.abs(freq - 1 / n) < 5 * se)


class TestMaximalCouplingPmf:
    def test_identical_halves(self):
        pmf = maximal_coupling_pmf(wv([0.5, 0.5]), wv([0.5, 0.5]))
        assert np.allclose(pmf, np.eye(2) / 2, atol=1e-15)

    def test_hand_enumeration(self):
        pmf = maximal_coupling_pmf(wv([0.7, 0.3]), wv([0.4, 0.6]))
        assert np.allclose(pmf, [[0.4, 0.3], [0.0, 0.3]], atol=1e-12)

    @given(st.lists(st.floats(0.01, 1), min_size=2, max_size=8),
           st.lists(st.floats(0.01, 1), min_size=2, max_size=8))
    def test_marginals(self, a, b):
        n = min(len(a), len(b))
        wf, wc = wv(a[:n]), wv(b[:n])
        pmf = maximal_coupling_pmf(wf, wc)
        assert np.allclose(pmf.sum(axis=1), wf.normalized, atol=1e-12)
        assert np.allclose(pmf.sum(axis=0), wc.normalized, atol=1e-12)
        coupled_mass = np.trace(np.diag(np.minimum(wf.normalized, wc.normalized)))
        assert pmf.trace() >= coupled_mass - 1e-12


class TestMaximalCouplingSampler:
    def test_identical_weights_fully_coupled(self):
        pairs = maximal_coupling_indices(wv([0.2, 0.8]), wv([0.2, 0.8]), 100,
                                         np.random.default_rng(1))
        assert np.all(pairs.coupled)
        assert np.array_equal(pairs.fine, pairs.coarse)

    def test_disjoint_supports(self):
        pairs = maximal_coupling_indices(wv([1.0, 0.0]), wv([0.0, 1.0]), 64,
                                         np.random.default_rng(2))
        assert not np.any(pairs.coupled)
        assert np.all(pairs.fine == 0) and np.all(pairs.coarse == 1)

    def test_joint_pmf_hand_case(self):
        wf, wc = wv([0.7, 0.3]), wv([0.4, 0.6])
        rng = np.random.default_rng(7)
        pairs = maximal_coupling_indices(wf, wc, 200_000, rng)
        counts = np.zeros((2, 2))
        np.add.at(counts, (pairs.fine, pairs.coarse), 1)
        assert np.allclose(counts / 200_000, [[0.4, 0.3], [0.0, 0.3]], atol=0.01)
        assert abs(np.mean(pairs.coupled) - 0.7) < 0.01

    def test_stub_enumeration_matches_pmf(self):
        wf, wc = wv([0.7, 0.3]), wv([0.4, 0.6])
        law = enumerate_sampler_law(wf, wc)
        assert np.allclose(law, maximal_coupling_pmf(wf, wc), atol=1e-12)

    def test_chi_square_against_pmf(self):
        wf, wc = wv([0.5, 0.2, 0.3]), wv([0.1, 0.6, 0.3])
        pmf = maximal_coupling_pmf(wf, wc)
        draws = 100_000
        pairs = maximal_coupling_indices(wf, wc, draws, np.random.default_rng(11))
        counts = np.zeros((3, 3))
        np.add.at(counts, (pairs.fine, pairs.coarse), 1)
        mask = pmf.flatten() > 0
        stat, pval = chisquare(counts.flatten()[mask], draws * pmf.flatten()[mask])
        assert pval > 1e-3


def enumerate_sampler_law(wf: WeightVector, wc: WeightVector) -> np.ndarray:
    """Drive the sampler through every branch/index cell of its uniform input
    space and accumulate each outcome weighted by the cell probability."""
    n = wf.n
    overlap = np.minimum(wf.normalized, wc.normalized)
    alpha = overlap.sum()
    law = np.zeros((n, n))

    def cells(probs):
        edges = np.concatenate([[0.0], np.cumsum(probs)])
        for i in range(len(probs)):
            if probs[i] > 0:
                yield i, (edges[i] + edges[i + 1]) / 2, probs[i]

    if 1.0 - alpha < 1e-14:
        for i, u, pr in cells(overlap / alpha):
            pairs = maximal_coupling_indices(wf, wc, 1, StubRng([0.0, u, 0.5, 0.5]))
            law[pairs.fine[0], pairs.coarse[0]] += pr
        return law
    res_f = (wf.normalized - overlap) / (1 - alpha)
    res_c = (wc.normalized - overlap) / (1 - alpha)
    if alpha > 0:
        for i, u, pr in cells(overlap / alpha):
            pairs = maximal_coupling_indices(wf, wc, 1, StubRng([alpha / 2, u, 0.5, 0.5]))
            assert pairs.coupled[0]
            law[pairs.fine[0], pairs.coarse[0]] += alpha * pr
    for i, uf, pf in cells(res_f):
        for j, uc, pc in cells(res_c):
            u_branch = (1 + alpha) / 2
            pairs = maximal_coupling_indices(wf, wc, 1, StubRng([u_branch, 0.5, uf, uc]))
            assert not pairs.coupled[0]
            law[pairs.fine[0], pairs.coarse[0]] += (1 - alpha) * pf * pc
    return law


class TestSortedCoupling:
    def test_identical_ensembles(self):
        states = np.array([[0.3], [-1.0], [2.0], [0.9]])
        weights = wv([0.1, 0.4, 0.2, 0.3])
        for u in [0.05, 0.3, 0.6, 0.95]:
            a = sorted_coupling_indices(weights, weights, states, states, 1, StubRng([u]))
            assert a.fine[0] == a.coarse[0]

    def test_comonotone_pick_of_larger_state(self):
        states = np.array([[5.0], [1.0]])
        weights = wv([0.5, 0.5])
        pairs = sorted_coupling_indices(weights, weights, states, states, 1, StubRng([0.9]))
        assert pairs.fine[0] == 0  # index of the larger state

    def test_marginals_monte_carlo(self):
        rng = np.random.default_rng(5)
        wf, wc = wv([0.5, 0.3, 0.2]), wv([0.2, 0.2, 0.6])
        sf = np.array([[0.0], [1.0], [2.0]])
        sc = np.array([[2.0], [0.0], [1.0]])
        draws = 100_000
        pairs = sorted_coupling_indices(wf, wc, sf, sc, draws, rng)
        for target, idx in ((wf.normalized, pairs.fine), (wc.normalized, pairs.coarse)):
            freq = np.bincount(idx, minlength=3) / draws
            se = np.sqrt(target * (1 - target) / draws)
            assert np.all(np.abs(freq - target) < 5 * np.maximum(se, 1e-4))

    def test_rejects_vector_states(self):
        w = wv([0.5, 0.5])
        with pytest.raises(ValueError):
            sorted_coupling_indices(w, w, np.zeros((2, 2)), np.zeros((2, 2)), 2,
                                    np.random.default_rng(0))
