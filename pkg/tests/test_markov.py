import math

import numpy as np
import pytest

from sidecomp.markov import (
    ZChain,
    berry_esseen_probe,
    block_function,
    build_z_chain,
    markov_rates,
    sample_path_statistics,
    simulate_pair,
)
from sidecomp.measures import measures
from sidecomp.models import embed_cond_iid


class TestRates:
    def test_embedded_matches_single_letter(self, fig1):
        # The long-run rates of the embedded chain must reproduce the
        # single-letter conditional entropy and varentropy.
        emb = embed_cond_iid(fig1)
        ms = measures(fig1)
        analysis = markov_rates(emb)
        assert analysis.h_rate == pytest.approx(ms.h_xy, abs=1e-9)
        assert analysis.sigma2_rate == pytest.approx(ms.sigma2, abs=1e-9)

    def test_embedded_skewed_model(self, corpus_models):
        model = corpus_models["skewed34"]
        emb = embed_cond_iid(model)
        ms = measures(model)
        analysis = markov_rates(emb)
        assert analysis.h_rate == pytest.approx(ms.h_xy, abs=1e-9)
        assert analysis.sigma2_rate == pytest.approx(ms.sigma2, abs=1e-9)

    def test_embedded_fig1_boundary_constant(self, fig1):
        # [DERIVED] worst initial term plus worst trailing window
        analysis = markov_rates(embed_cond_iid(fig1))
        assert analysis.delta == pytest.approx(6.643856189774725, abs=1e-9)

    def test_markov2x2_frozen(self, corpus_models):
        analysis = markov_rates(corpus_models["markov2x2"])
        assert analysis.h_rate == pytest.approx(0.738498307647, abs=1e-9)
        assert analysis.sigma2_rate == pytest.approx(0.664314743388, abs=1e-9)
        assert analysis.delta == pytest.approx(5.429262139, abs=1e-6)
        assert analysis.y_chain.markovianity_defect <= 1e-12

    def test_copy_chain_degenerate(self, corpus_models):
        # x determined by y: zero conditional entropy and variance
        analysis = markov_rates(corpus_models["copy_chain"])
        assert abs(analysis.h_rate) <= 1e-12
        assert abs(analysis.sigma2_rate) <= 1e-12

    def test_indep_chains_entropy_rate(self, corpus_models):
        # [DERIVED] independent X and Y chains: side information is
        # useless and the rate is the X entropy rate, exactly 6/7 here.
        analysis = markov_rates(corpus_models["indep_chains"])
        assert analysis.h_rate == pytest.approx(6 / 7, abs=1e-10)

    def test_nonmarkov_marginal_warns(self, corpus_models):
        model = corpus_models["ymarg_nonmarkov"]
        with pytest.warns(RuntimeWarning):
            analysis = markov_rates(model)
        assert analysis.y_chain.markovianity_defect == pytest.approx(
            0.108092, abs=1e-5
        )
        assert analysis.h_rate == pytest.approx(0.351207, abs=1e-5)
        assert analysis.sigma2_rate == pytest.approx(0.940232, abs=1e-5)


class TestBlockFunction:
    def test_embedded_block_is_single_letter_info(self, fig1):
        # For the embedded chain the block value collapses to
        # -log2 P(x2 | y2) independent of the leading block symbol.
        emb = embed_cond_iid(fig1)
        table = block_function(emb)
        assert len(table) == 16
        for (s1, s2), val in table.items():
            x2, y2 = emb.pair_split(s2)
            assert val == pytest.approx(
                -math.log2(float(fig1.p_x_given_y[y2][x2])), abs=1e-12
            )

    def test_z_chain_is_stochastic(self, corpus_models):
        model = corpus_models["markov2x2"]
        zc = build_z_chain(model, markov_rates(model).y_chain)
        assert isinstance(zc, ZChain)
        assert np.allclose(zc.transition.sum(axis=1), 1.0, atol=1e-12)
        assert zc.stationary.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.isfinite(zc.f).all()


class TestPathSampling:
    def test_simulate_pair_shapes_and_determinism(self, corpus_models):
        model = corpus_models["markov2x2"]
        x1, y1 = simulate_pair(model, 50, seed=3)
        x2, y2 = simulate_pair(model, 50, seed=3)
        assert x1.shape == y1.shape == (50,)
        assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
        assert set(np.unique(x1)) <= {0, 1}
        assert set(np.unique(y1)) <= {0, 1}

    def test_boundary_gap_bounded_by_delta(self, corpus_models, fig1):
        # The sampled |info - window| gap must never exceed delta.
        cases = [
            embed_cond_iid(fig1),
            corpus_models["markov2x2"],
            corpus_models["indep_chains"],
        ]
        for model in cases:
            analysis = markov_rates(model)
            stats = sample_path_statistics(model, 30, 10000, seed=11, analysis=analysis)
            gap = np.abs(stats.info - stats.window_sum).max()
            assert gap <= analysis.delta + 1e-9

    def test_long_run_moments_match_rates(self, corpus_models):
        model = corpus_models["markov2x2"]
        analysis = markov_rates(model)
        n, trials = 2048, 2000
        stats = sample_path_statistics(model, n, trials, seed=5, analysis=analysis)
        assert stats.info.mean() / n == pytest.approx(analysis.h_rate, abs=0.01)
        assert stats.info.var() / n == pytest.approx(analysis.sigma2_rate, abs=0.08)

    def test_statistics_deterministic(self, corpus_models):
        model = corpus_models["markov2x2"]
        a = sample_path_statistics(model, 40, 500, seed=9)
        b = sample_path_statistics(model, 40, 500, seed=9)
        assert np.array_equal(a.info, b.info)
        assert np.array_equal(a.window_sum, b.window_sum)


class TestProbe:
    def test_probe_rows_and_determinism(self, corpus_models):
        model = corpus_models["markov2x2"]
        r1 = berry_esseen_probe(model, [64, 256], trials=4000, seed=0)
        r2 = berry_esseen_probe(model, [64, 256], trials=4000, seed=0)
        assert r1 == r2
        assert [row.n for row in r1.rows] == [64, 256]
        for row in r1.rows:
            assert 0 < row.distance < 1
            assert row.scaled == pytest.approx(row.distance * math.sqrt(row.n))
        assert r1.a_hat == max(row.scaled for row in r1.rows)

    def test_probe_rejects_degenerate(self, corpus_models):
        with pytest.raises(ValueError):
            berry_esseen_probe(corpus_models["copy_chain"], [16], trials=100, seed=0)
