"""Dispersion, Gaussian quantile, second-order capacity and finite-n bounds."""

import math

import mpmath
import numpy as np
import pytest
from scipy.optimize import brentq, linprog

from idbounds import core, minimax
from idbounds import secondorder as so
from idbounds.checks import BSC01_CAPACITY, BSC01_DISPERSION


def equal_divergence_channel():
    """Cyclic shifts of two rows with equal entropy: capacity-achieving inputs
    form a polytope whose vertices have different conditional variances."""
    r1 = np.array([0.8, 0.1, 0.1])
    h = float(-(r1 * np.log(r1)).sum())
    t = brentq(lambda t: -t * math.log(t) - (1 - t) * math.log(1 - t) - h, 0.01, 0.5)
    r2 = np.array([t, 1 - t, 0.0])
    return np.array([np.roll(r1, k) for k in range(3)] + [np.roll(r2, k) for k in range(3)])


def lp_variance_oracle(wm, q, sense):
    """Extreme conditional variance over inputs that induce ``q`` using only max-divergence rows."""
    d, v = so.conditional_variances(wm, q)
    active = np.abs(d - d.max()) <= 1e-9
    a_eq = np.vstack([wm[active].T, np.ones(active.sum())])
    b_eq = np.r_[q, 1.0]
    res = linprog(sense * v[active], A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    assert res.status == 0
    return sense * res.fun


class TestDispersion:
    def test_bsc_closed_form(self, bsc01):
        rep = so.dispersion_analysis(bsc01)
        assert rep.capacity == pytest.approx(BSC01_CAPACITY, abs=1e-12)
        assert rep.v_min == pytest.approx(BSC01_DISPERSION, abs=1e-10)
        assert rep.v_max == pytest.approx(BSC01_DISPERSION, abs=1e-10)

    @pytest.mark.parametrize("e", [0.05, 0.2, 0.5])
    def test_bec_closed_form(self, e):
        rep = so.dispersion_analysis(core.bec(e))
        assert rep.v_min == pytest.approx(e * (1 - e) * math.log(2) ** 2, abs=1e-10)

    def test_noiseless_has_zero_dispersion(self):
        rep = so.dispersion_analysis(core.identity_channel(2))
        assert rep.capacity == pytest.approx(math.log(2), abs=1e-12)
        assert rep.v_min == pytest.approx(0.0, abs=1e-12)

    def test_useless(self):
        rep = so.dispersion_analysis(core.useless_channel(2, 3))
        assert rep.capacity == pytest.approx(0.0, abs=1e-12)
        assert rep.v_min == pytest.approx(0.0, abs=1e-12)
        assert len(rep.pi_vertices) >= 2

    def test_vertices_induce_optimal_output(self, gen):
        for w in (core.bsc(0.1), core.bec(0.3), core.random_channel(gen, 3, 4), equal_divergence_channel()):
            wm = core.as_channel(w).matrix
            rep = so.dispersion_analysis(w)
            for p, u, v in zip(rep.pi_vertices, rep.vertex_u, rep.vertex_v):
                np.testing.assert_allclose(p @ wm, rep.output_dist, atol=1e-9)
                assert p.sum() == pytest.approx(1.0)
                assert u == pytest.approx(v, abs=1e-9)

    def test_multi_vertex_against_lp(self):
        wm = equal_divergence_channel()
        rep = so.dispersion_analysis(wm)
        np.testing.assert_allclose(rep.output_dist, np.full(3, 1 / 3), atol=1e-10)
        assert rep.v_min == pytest.approx(lp_variance_oracle(wm, rep.output_dist, 1), abs=1e-9)
        assert rep.v_max == pytest.approx(lp_variance_oracle(wm, rep.output_dist, -1), abs=1e-9)
        assert rep.v_max - rep.v_min > 0.5
        assert rep.v_eps(0.1) == rep.v_min and rep.v_eps(0.5) == rep.v_max and rep.v_eps(0.9) == rep.v_max

    def test_u_eps_vertex_is_attaining(self):
        rep = so.dispersion_analysis(equal_divergence_channel())
        p, u = so.u_eps_vertex(rep, 0.2)
        assert u == pytest.approx(rep.u_min)
        assert so.unconditional_information_variance(p, equal_divergence_channel()) == pytest.approx(u, abs=1e-9)

    def test_unconditional_ge_conditional(self, gen):
        for _ in range(20):
            w = core.random_channel(gen, 3, 3)
            p = core.random_distribution(gen, 3).probs
            q = p @ w.matrix
            assert so.unconditional_information_variance(p, w) >= so.conditional_information_variance(w, q, p) - 1e-12


class TestQuantile:
    @pytest.mark.parametrize("p", [1e-300, 1e-12, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.8413447, 0.975, 1 - 1e-9])
    def test_against_mpmath(self, p):
        mpmath.mp.dps = 40
        pm = mpmath.mpf(p)
        want = float(mpmath.findroot(lambda x: mpmath.ncdf(x) - pm, so._acklam(p)))
        assert so.gaussian_quantile(p) == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_roundtrip(self, gen):
        ps = gen.uniform(1e-12, 1 - 1e-12, size=10_000)
        err = max(abs(so.gaussian_cdf(so.gaussian_quantile(float(p))) - p) for p in ps)
        assert err <= 1e-10

    def test_symmetry(self):
        for p in (0.01, 0.2, 0.4):
            assert so.gaussian_quantile(p) == pytest.approx(-so.gaussian_quantile(1 - p), abs=1e-10)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, math.nan])
    def test_domain(self, p):
        with pytest.raises(core.DomainError):
            so.gaussian_quantile(p)


class TestSecondOrderCapacity:
    def test_bsc_value(self, bsc01):
        want = math.sqrt(BSC01_DISPERSION) * float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf("0.1") - 1))
        assert so.second_order_id_capacity(bsc01, 0.1) == pytest.approx(want, abs=1e-9)
        assert so.second_order_id_capacity(bsc01, 0.1) == pytest.approx(-0.844757, abs=1e-6)

    def test_sign(self, bsc01):
        assert so.second_order_id_capacity(bsc01, 0.5) == 0.0
        assert so.second_order_id_capacity(bsc01, 0.2) < 0 < so.second_order_id_capacity(bsc01, 0.8)

    def test_uses_vmin_below_half(self):
        wm = equal_divergence_channel()
        rep = so.dispersion_analysis(wm)
        assert so.second_order_id_capacity(wm, 0.2, rep) == pytest.approx(
            math.sqrt(rep.v_min) * so.gaussian_quantile(0.2))
        assert so.second_order_id_capacity(wm, 0.8, rep) == pytest.approx(
            math.sqrt(rep.v_max) * so.gaussian_quantile(0.8))

    def test_zero_dispersion_rejected(self):
        with pytest.raises(core.DomainError, match="V_eps"):
            so.second_order_id_capacity(core.identity_channel(2), 0.1)


class TestSingleShotLemma:
    def params(self, **kw):
        base = dict(a=3.0, a_prime=3.0, b=3.0, b_prime=3.0, tau=0.01, kappa=0.5, K=math.exp(20), M=1000)
        base.update(kw)
        return so.Lemma5Params.with_m(**base)

    def test_code_size_example(self, bsc01):
        prm = self.params()
        assert prm.c == pytest.approx(1 / 3)
        spec = so.spectrum_cdf([0.5, 0.5], bsc01, [0.5, 0.5], 1)
        pt = so.lemma5_code_point(prm, spec)
        assert pt["N"] == math.floor(math.exp(10) / (1000 * math.e)) == 8
        assert pt["loglog_N"] == pytest.approx(math.log(math.log(8)))
        assert pt["delta_bound"] == pytest.approx(0.5 + 9 * 3000 / math.exp(20))
        # log K = 20 exceeds every level, so the tail is 1
        assert pt["eps_bound"] == pytest.approx(9.0)
        assert not pt["valid"]

    @pytest.mark.parametrize("kw, msg", [
        (dict(tau=0.4), "0 < tau < 1/3"),
        (dict(kappa=0.2), r"kappa\*log\(1/tau - 1\) > log 2 \+ 1"),
        (dict(kappa=1.2), "0 < kappa < 1"),
        (dict(a=1.5, a_prime=1.5), r"1 > 1/a \+ 1/a'"),
        (dict(b=1.5, b_prime=1.5), "c = 1 - 1/b - 1/b' > 0"),
        (dict(a=1.0), "a, a', b, b' > 1"),
    ])
    def test_constraint_messages(self, kw, msg):
        with pytest.raises(so.ConstraintError, match=msg):
            self.params(**kw)

    def test_large_m_log_domain(self):
        mpmath.mp.dps = 60
        for log_m in (30.0, 200.0, 800.0, 5000.0):
            prm = so.Lemma5Params(3.0, 3.0, 3.0, 3.0, 0.01, 0.5, log_m + 5, log_m)
            m = mpmath.e ** log_m
            want = mpmath.log(mpmath.mpf("0.01") * m - log_m - 1)
            assert so._loglog_n(prm) == pytest.approx(float(want), rel=1e-12)


class TestAchievability:
    def test_delta_formula(self):
        for n in (3, 10, 2000, 10**4):
            assert so.schedule_delta(n) == pytest.approx((1 + math.log(2)) / math.log(n) + 2 / (n + 2))
        ds = [so.schedule_delta(n) for n in range(3, 500)]
        assert all(x > y for x, y in zip(ds, ds[1:]))

    def test_schedule_satisfies_constraints(self):
        for n in (6, 50, 10**4, 10**6):
            prm = so.schedule(n, 0.3)
            assert prm.kappa * math.log(1 / prm.tau - 1) > 1 + math.log(2)

    def test_small_n_rejected(self, bsc01):
        with pytest.raises(core.DomainError, match="n >= 3"):
            so.achievability_rate(bsc01, 2, 0.1)

    def test_kappa_needs_minimum_n(self):
        with pytest.raises(so.ConstraintError, match="0 < kappa < 1"):
            so.schedule(5, 0.3)

    def test_proviso_failure(self, bsc01):
        with pytest.raises(core.DomainError, match="minimum n not yet reached"):
            so.achievability_rate(bsc01, 6, 0.97)

    def test_bsc_2000(self, bsc01):
        res = so.achievability_rate(bsc01, 2000, 0.4)
        assert res["delta_n"] == pytest.approx(so.schedule_delta(2000))
        assert res["delta_lemma"] <= res["delta_n"]
        assert res["eps_n"] == pytest.approx(0.4, abs=0.02)
        assert res["rate"] == pytest.approx(BSC01_CAPACITY + math.sqrt(BSC01_DISPERSION / 2000) * so.gaussian_quantile(0.4))
        assert res["loglogN"] < 2000 * res["rate"]
        assert res["F"] > 0

    def test_monte_carlo_tracks_exact(self, bsc01):
        exact = so.achievability_rate(bsc01, 300, 0.3)
        mc = so.achievability_rate(bsc01, 300, 0.3, mode="monte_carlo", samples=200_000, seed=5)
        assert mc["seed"] == 5 and mc["samples"] == 200_000
        assert mc["loglogN"] == exact["loglogN"]
        assert mc["eps_n"] == pytest.approx(exact["eps_n"], abs=0.01)


class TestFiniteConverse:
    def test_n1_is_single_letter(self, gen):
        for w in (core.bsc(0.1), core.random_channel(gen, 3, 3)):
            eta = 0.05
            rep = so.finite_n_converse(w, 1, 0.1, 0.2, eta=eta)
            q = minimax.blahut_arimoto(w, 1e-12).output_dist
            assert rep.main_term == pytest.approx(minimax.sup_ds_over_inputs(w, q, 0.35)["value"], abs=1e-9)
            assert rep.slack_terms == pytest.approx(minimax.slack_terms(core.as_channel(w).input_size, eta))

    def test_default_eta_at_n1_rejected(self, bsc01):
        with pytest.raises(core.DomainError, match="must stay below 1"):
            so.finite_n_converse(bsc01, 1, 0.1, 0.1)

    def test_gaussian_envelope(self, bsc01):
        for n in (100, 400, 1600):
            rep = so.finite_n_converse(bsc01, n, 0.1, 0.1)
            target = math.sqrt(BSC01_DISPERSION) * so.gaussian_quantile(0.2 + rep.eta)
            main = (rep.main_term - n * BSC01_CAPACITY) / math.sqrt(n)
            full = (rep.bound_on_loglogN - n * BSC01_CAPACITY) / math.sqrt(n)
            assert abs(main - target) <= math.log(n) / math.sqrt(n)
            assert abs(full - target) <= 4 * math.log(n) / math.sqrt(n)

    def test_brackets_achievability(self, bsc01):
        for n in (100, 400):
            ach = so.achievability_rate(bsc01, n, 0.1)
            conv = so.finite_n_converse(bsc01, n, ach["eps_n"], ach["delta_n"])
            assert conv.bound_on_loglogN >= ach["loglogN"]

    def test_classes_and_witness(self, gen):
        w = core.random_channel(gen, 3, 3)
        rep = so.finite_n_converse(w, 8, 0.2, 0.1)
        assert not rep.details["heuristic"]
        assert rep.details["compositions_evaluated"] == math.comb(10, 2)
        assert sum(c["count"] for c in rep.details["witness_composition"]) == 8
        # the two BSC inputs are interchangeable
        assert so.finite_n_converse(core.bsc(0.1), 8, 0.2, 0.1).details["classes"] == [[0, 1]]

    def test_heuristic_flag(self, gen):
        w = core.random_channel(gen, 4, 3)
        rep = so.finite_n_converse(w, 12, 0.2, 0.1, max_compositions=50, sample_compositions=20, seed=2)
        exact = so.finite_n_converse(w, 12, 0.2, 0.1)
        assert rep.details["heuristic"] and not exact.details["heuristic"]
        assert rep.main_term <= exact.main_term + 1e-12

    def test_infinite_regime_rejected(self, bsc01):
        with pytest.raises(core.DomainError):
            so.finite_n_converse(bsc01, 10, 0.6, 0.4)
