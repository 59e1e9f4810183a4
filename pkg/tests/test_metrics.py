import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from qimtest.graph import AdjacencyMatrix, GraphError, complete_graph, empty_graph, graph_spectrum
from qimtest.metrics import (
    GAMMA_BRACKET,
    MetricError,
    QimParams,
    SpectralBatch,
    SpectralContext,
    euclidean_sq,
    gamma_star,
    im_distance,
    im_raw,
    lorentz_density,
    lorentz_overlap,
    qed_approx,
    qim,
)

from conftest import graphs, random_graph


def relabel(g, perm):
    return AdjacencyMatrix(g.weights[np.ix_(perm, perm)])


class TestLorentzDensity:
    def test_single_zero_frequency(self):
        ctx = SpectralContext.from_frequencies([0.0, 0.0], gamma=1.0)
        assert ctx.normK == pytest.approx(2 / np.pi)
        assert lorentz_density(0.0, ctx) == pytest.approx(0.63662, abs=1e-5)

    @pytest.mark.parametrize("gamma", [0.05, 0.47, 3.0])
    def test_integrates_to_one(self, gamma):
        freqs = graph_spectrum(random_graph(12, 0.4, seed=1)).frequencies
        ctx = SpectralContext.from_frequencies(freqs, gamma)
        val, _ = integrate.quad(lambda x: lorentz_density(x, ctx), 0, np.inf, limit=500)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_tail_bound(self):
        # each term is below gamma / (psi - psi_i)^2 once psi is past the spectrum
        freqs = graph_spectrum(complete_graph(6)).frequencies
        ctx = SpectralContext.from_frequencies(freqs, 0.5)
        psi = 100.0
        bound = ctx.normK * sum(0.5 / (psi - f) ** 2 for f in ctx.frequencies)
        assert lorentz_density(psi, ctx) <= bound

    def test_gamma_must_be_positive(self):
        with pytest.raises(MetricError):
            SpectralContext.from_frequencies([0, 1], 0.0)


class TestOverlap:
    @pytest.mark.parametrize("a, b, gamma", [(0, 0, 1), (0.3, 2.0, 0.4), (5.0, 5.0 + 1e-9, 0.2), (1, 7, 3)])
    def test_matches_quadrature(self, a, b, gamma):
        f = lambda x: gamma / ((x - a) ** 2 + gamma**2) * gamma / ((x - b) ** 2 + gamma**2)
        ref, _ = integrate.quad(f, 0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=400)
        got = lorentz_overlap([a], [b], gamma)[0, 0]
        assert got == pytest.approx(ref, rel=1e-9, abs=1e-13)

    def test_zero_zero_is_quarter_pi_over_gamma(self):
        # int_0^inf (g / (x^2 + g^2))^2 dx = pi / (4 g)
        assert lorentz_overlap([0.0], [0.0], 2.0)[0, 0] == pytest.approx(np.pi / 8)


class TestGammaStar:
    @pytest.mark.parametrize("n", [10, 20, 100])
    def test_defining_property(self, n):
        g = gamma_star(n)
        assert GAMMA_BRACKET[0] < g < GAMMA_BRACKET[1]
        assert im_distance(empty_graph(n), complete_graph(n), g) == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("n", [10, 20])
    def test_distance_decreasing_in_gamma(self, n):
        empty = np.zeros(n)
        full = np.full(n, np.sqrt(n))
        full[0] = 0
        vals = [im_raw(empty, full, g) for g in np.linspace(*GAMMA_BRACKET, 50)]
        assert np.all(np.diff(vals) < 0)

    @pytest.mark.slow
    @pytest.mark.parametrize("n", [10, 20, 100])
    def test_quadrature_tolerance_stable(self, n):
        a = gamma_star(n, method="quad", tol=1e-9)
        b = gamma_star(n, method="quad", tol=1e-11)
        assert a == pytest.approx(b, abs=1e-5)
        assert gamma_star(n) == pytest.approx(b, abs=1e-5)

    def test_too_small(self):
        with pytest.raises(MetricError):
            gamma_star(1)


class TestIM:
    @given(graphs(v=7))
    @settings(max_examples=30, deadline=None)
    def test_identity(self, g):
        assert im_distance(g, g) == 0.0

    @given(graphs(v=7, weighted=True), st.permutations(range(7)))
    @settings(max_examples=30, deadline=None)
    def test_relabel(self, g, perm):
        assert im_distance(g, relabel(g, list(perm))) == pytest.approx(0.0, abs=1e-8)

    @pytest.mark.parametrize("seed", range(5))
    def test_analytic_matches_quadrature(self, seed):
        g1 = random_graph(15, 0.3, seed=seed, weighted=seed % 2 == 1)
        g2 = random_graph(15, 0.5, seed=100 + seed, weighted=seed % 2 == 1)
        a = im_distance(g1, g2, method="analytic")
        q = im_distance(g1, g2, method="quad", tol=1e-12)
        assert a == pytest.approx(q, abs=1e-7)

    @given(graphs(v=8), graphs(v=8))
    @settings(max_examples=40, deadline=None)
    def test_unit_interval_for_unweighted(self, g1, g2):
        d = im_distance(g1, g2)
        assert 0.0 <= d <= 1.0
        assert d == pytest.approx(im_distance(g2, g1), abs=1e-12)

    def test_negative_weights(self):
        w = np.array([[0, -1.0], [-1.0, 0]])
        g = AdjacencyMatrix(w)
        with pytest.raises(GraphError, match="nonnegative"):
            im_distance(g, empty_graph(2))
        d = im_distance(g, empty_graph(2), abs_weights=True)
        assert d == im_distance(AdjacencyMatrix(-w), empty_graph(2))

    def test_size_mismatch(self):
        with pytest.raises(MetricError):
            im_distance(empty_graph(3), empty_graph(4))

    def test_batch_rows_match_pairwise(self):
        gs = [random_graph(10, 0.3, seed=s) for s in range(6)]
        params = QimParams()
        batch = SpectralBatch.from_graphs(gs, params)
        for i in range(len(gs)):
            row = batch.im_row(i)
            for j in range(i + 1, len(gs)):
                assert row[j] == pytest.approx(im_distance(gs[i], gs[j]), abs=1e-12)


class TestLocalDistance:
    def test_single_weight(self):
        g1 = AdjacencyMatrix(np.array([[0, 0.5], [0.5, 0]]))
        assert qed_approx(g1, empty_graph(2)) == 1.0

    @pytest.mark.parametrize("k", [1, 3, 6])
    def test_edges_count_twice(self, k):
        w = np.zeros((6, 6))
        iu = np.triu_indices(6, 1)
        w[iu[0][:k], iu[1][:k]] = 1
        assert qed_approx(AdjacencyMatrix(w + w.T), empty_graph(6)) == 2 * k

    def test_triangle_inequality(self):
        rng = np.random.default_rng(4)
        for t in range(100):
            a, b, c = (random_graph(8, rng.uniform(0.1, 0.9), seed=3 * t + i, weighted=True) for i in range(3))
            assert qed_approx(a, c) <= qed_approx(a, b) + qed_approx(b, c) + 1e-12

    def test_euclidean_sq(self):
        assert euclidean_sq([0, 0], [3, 4]) == 25.0
        assert euclidean_sq([1.5], [1.5]) == 0.0
        with pytest.raises(MetricError):
            euclidean_sq([1, 2], [1, 2, 3])


class TestQIM:
    g1 = random_graph(10, 0.3, seed=7)
    g2 = random_graph(10, 0.3, seed=8)

    @given(graphs(v=6), graphs(v=6))
    @settings(max_examples=30, deadline=None)
    def test_symmetric(self, a, b):
        assert qim(a, b) == pytest.approx(qim(b, a), abs=1e-12)

    @pytest.mark.parametrize("variant", ["product", "plus"])
    def test_kappa_zero_is_local(self, variant):
        p = QimParams(kappa=0.0, variant=variant)
        assert qim(self.g1, self.g2, p) == qed_approx(self.g1, self.g2)

    def test_product_bounds(self):
        d_a = qed_approx(self.g1, self.g2)
        d = qim(self.g1, self.g2, QimParams(kappa=2.0))
        assert d_a <= d <= d_a * 3

    def test_monotone_in_kappa(self):
        for variant in ("product", "plus"):
            vals = [qim(self.g1, self.g2, QimParams(kappa=k, variant=variant)) for k in (0, 0.1, 1, 10)]
            assert vals == sorted(vals)

    def test_plus_alias(self):
        assert QimParams(metric="qim-plus") == QimParams(variant="plus")
        d_a = qed_approx(self.g1, self.g2)
        im = im_distance(self.g1, self.g2)
        assert qim(self.g1, self.g2, QimParams(metric="qim-plus", kappa=3)) == pytest.approx(d_a + 3 * im)

    def test_other_metrics(self):
        assert qim(self.g1, self.g2, QimParams(metric="im")) == pytest.approx(im_distance(self.g1, self.g2))
        e = qim(self.g1, self.g2, QimParams(metric="euclidean"))
        assert e == pytest.approx(np.linalg.norm(self.g1.weights - self.g2.weights))

    @pytest.mark.parametrize("bad", [dict(metric="hamming"), dict(variant="times"), dict(kappa=-1.0)])
    def test_invalid(self, bad):
        with pytest.raises(MetricError):
            QimParams(**bad)
