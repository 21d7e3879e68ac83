"""Capacity, the beta saddle point and the single-shot converses."""

import math

import numpy as np
import pytest

from idbounds import core, idcode, minimax, nptest

LN2 = math.log(2)


def grid_mutual_information(w, step=400):
    return max(minimax.mutual_information([t, 1 - t], w) for t in np.linspace(0, 1, step + 1))


class TestBlahutArimoto:
    @pytest.mark.parametrize(
        "w, cap",
        [
            (core.identity_channel(2), LN2),
            (core.useless_channel(3, 2), 0.0),
            (core.bsc(0.1), LN2 - core.binary_entropy(0.1)),
            (core.bec(0.25), 0.75 * LN2),
        ],
    )
    def test_closed_forms(self, w, cap):
        r = minimax.blahut_arimoto(w, 1e-10)
        assert r.capacity == pytest.approx(cap, abs=1e-9)

    def test_certificate(self, gen):
        for _ in range(10):
            w = core.random_channel(gen, 3, 4)
            r = minimax.blahut_arimoto(w, 1e-9)
            assert 0 <= r.gap <= 1e-9
            assert np.max(r.divergences) - r.capacity <= 1e-9
            np.testing.assert_allclose(r.output_dist, r.input_dist @ w.matrix, atol=1e-10)

    def test_binary_input_grid(self, gen):
        for _ in range(5):
            w = core.random_channel(gen, 2, 3)
            cap = minimax.blahut_arimoto(w, 1e-10).capacity
            assert cap >= grid_mutual_information(w) - 1e-10
            assert cap - grid_mutual_information(w) <= 1e-4

    def test_iteration_cap(self):
        with pytest.raises(minimax.ConvergenceError) as exc:
            minimax.blahut_arimoto(core.random_channel(np.random.default_rng(0), 4, 4), 1e-15, max_iter=2)
        assert exc.value.best is not None


class TestBetaJoint:
    def test_useless(self):
        w = core.useless_channel(2, 3)
        assert minimax.beta_joint([0.3, 0.7], w, w.matrix[0], 0.2).beta == pytest.approx(0.8)

    def test_identity(self):
        assert minimax.beta_joint([0.5, 0.5], np.eye(2), [0.5, 0.5], 0.0).beta == pytest.approx(0.5)


def grid_saddle(w, eps, step=200):
    """Brute-force min_P max_Q and max_Q min_P of beta for binary input and output."""
    ts = np.linspace(0, 1, step + 1)
    table = np.array([[minimax.beta_joint([a, 1 - a], w, [b, 1 - b], eps).beta for b in ts] for a in ts])
    return table.max(axis=1).min(), table.min(axis=0).max(), ts[table.min(axis=0).argmax()]


class TestSaddle:
    @pytest.mark.parametrize("eps", [0.1, 0.2, 0.3])
    def test_bsc(self, bsc01, eps):
        r = minimax.saddle_solve(bsc01, eps)
        assert r.gap <= 1e-4
        np.testing.assert_allclose(r.q_star, 0.5, atol=1e-3)

    def test_grid_oracle(self, bsc01):
        r = minimax.saddle_solve(bsc01, 0.2)
        upper, lower, q0 = grid_saddle(bsc01, 0.2)
        assert r.minmax_value == pytest.approx(upper, abs=1e-3)
        assert r.maxmin_value == pytest.approx(lower, abs=1e-3)
        assert q0 == pytest.approx(0.5, abs=1e-2)

    def test_useless(self):
        r = minimax.saddle_solve(core.useless_channel(2, 3), 0.25)
        assert r.minmax_value == pytest.approx(0.75, abs=1e-9)
        assert r.maxmin_value == pytest.approx(0.75, abs=1e-9)

    def test_weak_duality(self, gen):
        for _ in range(10):
            w = core.random_channel(gen, 2, 3)
            for eps in (0.1, 0.3):
                r = minimax.saddle_solve(w, eps)
                assert r.minmax_value >= r.maxmin_value - 1e-9
                assert r.gap <= 1e-4

    def test_subgradient_method(self, bsc01):
        r = minimax.saddle_solve(bsc01, 0.2, method="subgradient")
        assert r.gap <= 1e-4 and r.method == "subgradient"

    def test_domain(self, bsc01):
        with pytest.raises(core.DomainError):
            minimax.saddle_solve(bsc01, 1.0)


class TestSymbolwise:
    def test_useless(self):
        w = core.useless_channel(2, 2)
        assert minimax.sup_ds_over_inputs(w, [0.5, 0.5], 0.3)["value"] == 0.0

    @pytest.mark.parametrize("eps, value", [(0.05, math.log(0.2)), (0.2, math.log(1.8))])
    def test_bsc(self, bsc01, eps, value):
        assert minimax.sup_ds_over_inputs(bsc01, [0.5, 0.5], eps)["value"] == pytest.approx(value)

    def test_point_masses_attain_grid_sup(self, gen):
        for _ in range(5):
            w = core.random_channel(gen, 3, 3)
            q = core.random_distribution(gen, 3).probs
            eps = float(gen.uniform(0.05, 0.6))
            best = max(
                nptest.ds_epsilon(core.joint(p, w).flat(), core.joint(p, q).flat(), eps).value
                for p in minimax.simplex_grid(3, 64)
            )
            assert minimax.sup_ds_over_inputs(w, q, eps)["value"] == pytest.approx(best, abs=1e-12)


class TestCorollaries:
    def test_slack_terms(self):
        s = minimax.slack_terms(2, 0.1)
        assert s["loglog_alphabet"] == pytest.approx(-0.36651292058166435)
        assert s["eta_term"] == pytest.approx(4.605170185988092)
        assert s["constant"] == 2.0

    def test_bound_decomposition(self, bsc01):
        r = minimax.corollary1_bound(bsc01, 0.1, 0.1, 0.05)
        assert r.bound_on_loglogN == pytest.approx(r.main_term + sum(r.slack_terms.values()))

    def test_useless(self):
        """Zero at the common output law; skewing Q lowers it towards log(1/2)."""
        r = minimax.corollary1_bound(core.useless_channel(2, 2), 0.1, 0.1, 0.1)
        assert r.details["candidate_values"]["capacity_output"] == 0.0
        assert -LN2 <= r.main_term <= 0.0
        assert r.main_term == pytest.approx(math.log(0.5 / (63 / 64)))

    def test_eta_sweep_finite(self, bsc01):
        for eta in (0.1, 0.01):
            assert math.isfinite(minimax.corollary1_bound(bsc01, 0.1, 0.1, eta).bound_on_loglogN)

    def test_degenerate(self):
        with pytest.raises(core.ValidationError):
            minimax.corollary1_bound(np.array([[0.5, 0.5]]), 0.1, 0.1, 0.1)

    def test_eta_range(self, bsc01):
        with pytest.raises(core.DomainError):
            minimax.corollary1_bound(bsc01, 0.4, 0.4, 0.3)

    def test_infinite_regime(self, bsc01):
        with pytest.raises(core.DomainError, match="infinite"):
            minimax.corollary1_bound(bsc01, 0.6, 0.4, 0.01)

    def test_corollary2_agree(self, bsc01):
        r = minimax.corollary2_bound(bsc01, 0.1, 0.1, 0.05)
        assert abs(r["minmax"].main_term - r["maxmin"].main_term) <= 1e-4

    def test_corollary2_useless(self):
        r = minimax.corollary2_bound(core.useless_channel(2, 2), 0.1, 0.1, 0.1)
        assert r["minmax"].main_term == pytest.approx(-math.log(0.7), abs=1e-9)

    def test_corollary2_dominates_spectrum(self, gen):
        for _ in range(5):
            w = core.random_channel(gen, 2, 3)
            eps, delta, eta = 0.1, 0.1, 0.05
            r = minimax.corollary2_bound(w, eps, delta, eta)
            level = eps + delta + eta
            q_star = r["minmax"].details["q_star"]
            assert r["minmax"].main_term >= minimax.sup_ds_over_inputs(w, q_star, level)["value"] - 1e-9
            c1 = minimax.corollary1_bound(w, eps, delta, eta)
            assert r["minmax"].main_term >= c1.main_term - math.log(1 / eta) - 1e-9

    def test_identity_finite(self):
        w = core.identity_channel(2)
        for eps, delta, eta in ((0.0, 0.0, 0.5), (0.3, 0.2, 0.1)):
            assert math.isfinite(minimax.corollary1_bound(w, eps, delta, eta).bound_on_loglogN)
            for rep in minimax.corollary2_bound(w, eps, delta, eta).values():
                assert math.isfinite(rep.bound_on_loglogN)

    @pytest.mark.parametrize("n", [1, 2])
    def test_explicit_codes_below_bound(self, n, gen):
        for _ in range(3):
            w = core.product_channel(core.random_channel(gen, 2, 2), n)
            for eps, delta in ((0.1, 0.1), (0.3, 0.2)):
                code = idcode.search_codes(w, eps, delta, idcode.SearchBudget(candidates=3000))["best_code"]
                if len(code) < 2:
                    continue
                bound = minimax.corollary1_bound(w, eps, delta, 0.05).bound_on_loglogN
                assert math.log(math.log(len(code))) <= bound


class TestExistingBound:
    def test_useless(self):
        v = minimax.existing_bound(core.useless_channel(2, 2), 0.5, 100)
        assert v == pytest.approx(1 - math.sqrt(math.exp(0.5) / 100), abs=1e-12)

    def test_penalty_matches_theorem1(self):
        from idbounds import resolvability

        w = core.useless_channel(2, 2)
        t = resolvability.theorem1_bound(w, [0.5, 0.5], 0.5, 100)
        assert 1 - minimax.existing_bound(w, 0.5, 100) == pytest.approx(t.penalty)

    def test_size_limit(self, gen):
        with pytest.raises(core.ValidationError):
            minimax.existing_bound(core.random_channel(gen, 5, 2), 0.0, 10)
