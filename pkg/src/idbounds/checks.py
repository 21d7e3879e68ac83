"""Self-test suite: randomized property checks and closed-form cross-checks.

Each check is a function returning a :class:`CheckResult`; ``run_checks``
runs a selection of them, optionally in parallel threads. The same
functions back ``idbounds --selftest`` and the acceptance tests.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import core, idcode, minimax, nptest, resolvability, secondorder, spectrum
from . import rng as rngmod

#: ``ln 2 - h(0.1)`` and ``0.09 ln^2 9`` for BSC(0.1), frozen from a 40-digit evaluation.
BSC01_CAPACITY = 0.36806420716849706991
BSC01_DISPERSION = 0.43450162589252951202


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  ({self.seconds:.2f}s)"


def _timed(name: str, fn, *args, **kwargs) -> CheckResult:
    t0 = time.perf_counter()
    try:
        passed, detail = fn(*args, **kwargs)
    except Exception as exc:  # a crashing check is a failing check
        passed, detail = False, {"error": f"{type(exc).__name__}: {exc}"}
    return CheckResult(name, bool(passed), detail, time.perf_counter() - t0)


def _random_pair(gen: np.random.Generator, max_k: int) -> tuple[np.ndarray, np.ndarray]:
    k = int(gen.integers(2, max_k + 1))
    sparse = 0.3 if gen.random() < 0.3 else 0.0
    return core.random_distribution(gen, k, sparse).probs, core.random_distribution(gen, k, sparse).probs


# ---------------------------------------------------------------------------
# acceptance-level checks


def lemma1_sandwich(count: int = 1000, seed: int = 1) -> tuple[bool, dict]:
    gen = rngmod.stream(seed)
    failures = []
    for i in range(count):
        p, q = _random_pair(gen, 8)
        eps = float(gen.uniform(0.01, 0.9))
        zeta = float(gen.uniform(0.001, 1 - eps - 1e-3))
        r = nptest.lemma1_check(p, q, eps, zeta)
        if not r["holds"]:
            failures.append(i)
    return not failures, {"instances": count, "failures": failures[:10], "seed": seed}


def np_exactness(count: int = 200, seed: int = 2, tol: float = 1e-9) -> tuple[bool, dict]:
    gen = rngmod.stream(seed)
    worst = 0.0
    for _ in range(count):
        p, q = _random_pair(gen, 4)
        eps = float(gen.uniform(0.0, 0.95))
        worst = max(worst, abs(nptest.beta_epsilon(p, q, eps).beta - nptest.beta_vertex_oracle(p, q, eps)))
    return worst <= tol, {"instances": count, "max_abs_diff": worst, "seed": seed}


def truncation_identity(count: int = 500, seed: int = 3, tol: float = 1e-12) -> tuple[bool, dict]:
    gen = rngmod.stream(seed)
    worst = 0.0
    for _ in range(count):
        kx, ky = (int(v) for v in gen.integers(2, 7, size=2))
        w = core.random_channel(gen, kx, ky, sparse=0.2)
        p = core.random_distribution(gen, kx, sparse=0.2)
        q = core.random_distribution(gen, ky)
        s = resolvability.truncation_set(w, q, float(gen.normal(0.0, 1.0)))
        r = resolvability.truncation_error_check(p, w, s, tol)
        worst = max(worst, abs(r["lhs"] - r["rhs"]))
    return worst <= tol, {"instances": count, "max_abs_diff": worst, "seed": seed}


THM1_SWEEP = tuple(itertools.product((-3.0, -2.0, -1.0, 0.0, math.log(2)), (1, 2, 3, 4)))


def _thm1_sweep(channels, tolerances, seed: int) -> dict:
    applicable = violations = codes = 0
    for w in channels:
        q = minimax.capacity_output(w)
        for eps, delta in tolerances:
            res = idcode.search_codes(w, eps, delta, idcode.SearchBudget(candidates=4000), seed=seed)
            codes += 1
            for gamma, m in THM1_SWEEP:
                r = resolvability.verify_theorem1_against_code(res["best_code"], w, q, gamma, m)
                if r["applicable"]:
                    applicable += 1
                    violations += not r["holds"]
    return {"codes": codes, "applicable": applicable, "violations": violations}


def split_output_channel(noise: float = 0.0) -> core.Channel:
    """Ternary input, each input spread over its own pair of outputs."""
    base = np.kron(np.eye(3), np.full((1, 2), 0.5))
    return core.Channel((1 - noise) * base + noise / 6)


def theorem1_sandwich(seed: int = 4) -> tuple[bool, dict]:
    """Searched codes on 2x2 channels, plus ternary-input codes where ``N > |X|^M`` occurs.

    For binary inputs the outputs ``P_i W`` lie on a segment and each
    acceptance probability is affine along it, so ``eps + delta < 1`` forces
    ``N <= 2 = |X|``: the 2x2 sweep alone is vacuous. The ternary group
    must produce applicable cases or the check fails.
    """
    gen = rngmod.stream(seed)
    tols = [(e, d) for e in (0.05, 0.2, 0.4) for d in (0.05, 0.2, 0.4) if e + d < 1]
    square = [core.bsc(0.1), core.bsc(0.3), core.Channel(np.array([[1.0, 0.0], [0.2, 0.8]]))]
    square += [core.random_channel(gen, 2, 2) for _ in range(2)]
    ternary = [split_output_channel(0.0), split_output_channel(0.01)]
    s = _thm1_sweep(square, tols, seed)
    t = _thm1_sweep(ternary, [(0.25, 0.74), (0.2, 0.75), (0.1, 0.85)], seed)
    ok = s["violations"] == 0 and t["violations"] == 0 and t["applicable"] > 0
    return ok, {"square": s, "ternary": t, "sweep": [list(x) for x in THM1_SWEEP]}


def closed_forms(tol: float = 1e-8) -> tuple[bool, dict]:
    w = core.bsc(0.1)
    cap = minimax.blahut_arimoto(w, 1e-12).capacity
    rep = secondorder.dispersion_analysis(w)
    ok = abs(cap - BSC01_CAPACITY) <= tol and abs(rep.v_min - BSC01_DISPERSION) <= tol
    ok = ok and abs(rep.v_max - BSC01_DISPERSION) <= tol
    return ok, {"capacity": cap, "v_min": rep.v_min, "v_max": rep.v_max}


def lemma5_arithmetic() -> tuple[bool, dict]:
    fail_ok = pass_ok = False
    try:
        secondorder.Lemma5Params(1.5, 4.0, 1.5, 4.0, 0.1, 0.5, 0.0, 0.0, 1)
    except secondorder.ConstraintError as exc:
        fail_ok = "kappa*log(1/tau - 1) > log 2 + 1" in str(exc)
    try:
        secondorder.Lemma5Params(1.5, 4.0, 1.5, 4.0, 0.05, 0.9, 0.0, 0.0, 1)
        pass_ok = True
    except secondorder.ConstraintError:
        pass
    params = secondorder.Lemma5Params.with_m(1.5, 4.0, 1.5, 4.0, 0.1, 0.9, 10.0, 100)
    spec = spectrum.spectrum_cdf([0.5, 0.5], core.bsc(0.1), [0.5, 0.5], 1)
    n_codes = secondorder.lemma5_code_point(params, spec)["N"]
    return fail_ok and pass_ok and n_codes == 81, {"fail_case": fail_ok, "pass_case": pass_ok, "N": n_codes}


# ---------------------------------------------------------------------------
# module invariants


def inv_core(seed: int = 10) -> tuple[bool, dict]:
    gen = rngmod.stream(seed)
    ok = True
    for _ in range(50):
        w = core.random_channel(gen, 3, 2)
        p = core.random_distribution(gen, 3)
        out = core.output_distribution(p, w).probs
        j = core.joint(p, w)
        w2 = core.product_channel(w, 3)
        ok &= abs(out.sum() - 1) <= 1e-12 and np.allclose(j.marginal_y(), out, atol=1e-12)
        ok &= np.allclose(w2.matrix.sum(axis=1), 1.0, atol=1e-12)
    return bool(ok), {}


def inv_testing(seed: int = 11) -> tuple[bool, dict]:
    gen = rngmod.stream(seed)
    worst_dual, monotone = 0.0, True
    for _ in range(100):
        p, q = _random_pair(gen, 6)
        betas = [nptest.beta_epsilon(p, q, e).beta for e in (0.0, 0.1, 0.3, 0.6, 0.9)]
        monotone &= all(b1 >= b2 - 1e-12 for b1, b2 in zip(betas, betas[1:]))
        eps = float(gen.uniform(0, 0.95))
        worst_dual = max(worst_dual, abs(nptest.beta_epsilon(p, q, eps).beta - nptest.beta_dual(p, q, eps)))
    return monotone and worst_dual <= 1e-9, {"max_dual_gap": worst_dual, "monotone": monotone}


def inv_resolvability(seed: int = 12) -> tuple[bool, dict]:
    w = core.bsc(0.1)
    s = resolvability.truncation_set(w, [0.5, 0.5], 0.0)
    r = resolvability.soft_cover_mean_check([0.5, 0.5], w, s, 25, 2000, seed)
    t = resolvability.theorem1_bound(w, [0.5, 0.5], 0.0, 10_000)
    ok = r["holds"] and abs(t.inf_term - 0.1) <= 1e-12 and abs(t.lower_bound_on_eps_plus_delta - 0.09) <= 1e-12
    return ok, {"softcover": r, "thm1_bound": t.lower_bound_on_eps_plus_delta}


def inv_minimax() -> tuple[bool, dict]:
    w = core.bsc(0.1)
    ba = minimax.blahut_arimoto(w)
    sad = minimax.saddle_solve(w, 0.1)
    ok = ba.gap <= minimax.DEFAULT_CAPACITY_TOL and sad.gap <= 1e-4
    ok = ok and np.max(np.abs(sad.q_star - 0.5)) <= 1e-3
    return bool(ok), {"ba_gap": ba.gap, "saddle_gap": sad.gap}


def inv_second_order(seed: int = 13) -> tuple[bool, dict]:
    gen = rngmod.stream(seed)
    ok = True
    for w in (core.bsc(0.1), core.bec(0.2), core.random_channel(gen, 3, 3)):
        rep = secondorder.dispersion_analysis(w)
        ok &= all(abs(u - v) <= 1e-8 for u, v in zip(rep.vertex_u, rep.vertex_v))
        ok &= all(np.max(np.abs(p @ w.matrix - rep.output_dist)) <= 1e-8 for p in rep.pi_vertices)
    w = core.bsc(0.1)
    base = spectrum.letter_levels([0.5, 0.5], w, [0.5, 0.5])
    dist = spectrum.nfold(base, 50)
    ok &= abs(dist.mean() - 50 * base.mean()) <= 1e-9 and abs(dist.variance() - 50 * base.variance()) <= 1e-9
    ps = gen.uniform(1e-12, 1 - 1e-12, size=10_000)
    worst = max(abs(secondorder.gaussian_cdf(secondorder.gaussian_quantile(float(p))) - p) for p in ps)
    ok &= worst <= 1e-10
    sandwich = []
    for n in (100, 400):
        conv = secondorder.finite_n_converse(w, n, 0.4, 0.0).bound_on_loglogN
        ach = secondorder.achievability_rate(w, n, 0.4)["loglogN"]
        sandwich.append(conv - ach)
    ok &= min(sandwich) >= 0
    return bool(ok), {"quantile_roundtrip": worst, "converse_minus_achievability": sandwich}


def inv_idcode(seed: int = 14) -> tuple[bool, dict]:
    gen = rngmod.stream(seed)
    ok = True
    for _ in range(3):
        w = core.random_channel(gen, 2, 3)
        for eps, delta in ((0.1, 0.1), (0.3, 0.2)):
            res = idcode.search_codes(w, eps, delta, idcode.SearchBudget(candidates=3000), seed=seed)
            code, ev = res["best_code"], res["evaluation"]
            t1, t2 = idcode.evaluate_via_joint(code, w)
            ok &= abs(t1 - ev.type1) <= 1e-12 and abs(t2 - ev.type2) <= 1e-12
            ok &= ev.type1 <= eps + 1e-12 and ev.type2 <= delta + 1e-12
            ok &= idcode.separation_check(code, w)["holds"] and not idcode.duplicate_encoders(code)
            if len(code) >= 2:
                bound = minimax.corollary1_bound(w, eps, delta, 0.5 * (1 - eps - delta)).bound_on_loglogN
                ok &= math.log(math.log(len(code))) <= bound
    half = idcode.IDCode((np.array([0.5, 0.5]),), (frozenset({0}),))
    ok &= idcode.is_m_canonical(half, 2) and not idcode.is_m_canonical(half, 3)
    return bool(ok), {}


#: every check run by the self-test, in order
CHECKS = {
    "lemma1_sandwich": lemma1_sandwich,
    "np_exactness": np_exactness,
    "truncation_identity": truncation_identity,
    "theorem1_sandwich": theorem1_sandwich,
    "closed_forms": closed_forms,
    "lemma5_arithmetic": lemma5_arithmetic,
    "inv_core": inv_core,
    "inv_testing": inv_testing,
    "inv_resolvability": inv_resolvability,
    "inv_minimax": inv_minimax,
    "inv_second_order": inv_second_order,
    "inv_idcode": inv_idcode,
}


def run_checks(names=None, jobs: int = 1) -> list[CheckResult]:
    names = list(CHECKS) if names is None else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise core.ValidationError(f"unknown checks: {unknown}")
    if jobs <= 1:
        return [_timed(n, CHECKS[n]) for n in names]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda n: _timed(n, CHECKS[n]), names))
