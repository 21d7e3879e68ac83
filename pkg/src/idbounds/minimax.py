"""Capacity, the convex-concave saddle point of beta and single-shot ID converses.

Notation: ``f(P, Q) = beta_eps(P x W, P x Q)``. LP duality gives

    f(P, Q) = max_{l >= 0}  l (1 - eps) - sum_{x,y} P(x) (l W(y|x) - Q(y))^+

which is affine in ``P`` for fixed ``l`` and jointly concave in ``(l, Q)``.
Both one-sided optima used as certificates below are built on this form.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .core import (
    ChannelLike,
    Distribution,
    DomainError,
    ProbLike,
    ValidationError,
    as_channel,
    joint,
    kl_divergence,
    probs,
)
from .nptest import BetaResult, beta_epsilon, ds_epsilon, neg_log

DEFAULT_CAPACITY_TOL = 1e-8
DEFAULT_SADDLE_TOL = 1e-4


class ConvergenceError(RuntimeError):
    """Iteration cap reached; ``best`` carries the best iterate or certificates."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


# ---------------------------------------------------------------------------
# capacity


@dataclass(frozen=True)
class CapacityResult:
    capacity: float
    input_dist: np.ndarray
    output_dist: np.ndarray
    iterations: int
    gap: float
    divergences: np.ndarray = field(repr=False)


def blahut_arimoto(w: ChannelLike, tol: float = DEFAULT_CAPACITY_TOL, max_iter: int = 200_000) -> CapacityResult:
    """Alternating maximization for ``C(W) = max_P I(X;Y)`` in nats.

    Stops once ``max_x D(W_x || PW) - I(P)`` (an upper minus a lower bound on
    the capacity) is at most ``tol``.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    wc = as_channel(w)
    wm = wc.matrix
    pos = wm > 0
    logw = np.where(pos, np.log(np.where(pos, wm, 1.0)), 0.0)
    p = np.full(wc.input_size, 1.0 / wc.input_size)
    best = None
    for it in range(1, max_iter + 1):
        q = p @ wm
        logq = np.log(np.where(q > 0, q, 1.0))
        d = np.where(pos, wm * (logw - logq[None, :]), 0.0).sum(axis=1)
        lower = float(p @ d)
        upper = float(d.max())
        gap = upper - lower
        best = CapacityResult(lower, p.copy(), q, it, max(gap, 0.0), d)
        if gap <= tol:
            return best
        p = p * np.exp(d - upper)
        p /= p.sum()
    raise ConvergenceError(f"Blahut-Arimoto did not reach gap {tol} in {max_iter} iterations", best)


def mutual_information(p: ProbLike, w: ChannelLike) -> float:
    pv, wc = probs(p), as_channel(w)
    q = pv @ wc.matrix
    return float(sum(pv[x] * kl_divergence(wc.matrix[x], q) for x in range(pv.size) if pv[x] > 0))


# ---------------------------------------------------------------------------
# beta over joint laws and its one-sided optima


def beta_joint(p: ProbLike, w: ChannelLike, q: ProbLike, eps: float) -> BetaResult:
    """``beta_eps(P x W, P x Q)``."""
    pv, wc, qv = probs(p), as_channel(w), probs(q)
    if qv.size != wc.output_size:
        raise ValidationError("Q must live on the channel output alphabet")
    return beta_epsilon(joint(pv, wc).flat(), joint(pv, qv).flat(), eps)


def _golden_max(fn, lo: float, hi: float, rel: float = 1e-15):
    """Maximize a concave scalar function on ``[lo, hi]``."""
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    width = max(hi - lo, 1e-300) * rel
    while b - a > width:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    cands = [(fn(x), x) for x in (lo, a, (a + b) / 2, b, hi)]
    return max(cands)


def _lambda_range(wm: np.ndarray, eps: float, ratio_max: float) -> float:
    # beyond ratio_max the objective is affine with slope -eps; with eps > 0
    # the objective is also <= 1 - eps*l while its value at l = 0 is 0
    hi = ratio_max
    if eps > 0:
        hi = min(hi, 1.0 / eps)
    return max(hi, 1e-12)


def _fill_q(pv: np.ndarray, wm: np.ndarray, lam: float) -> tuple[float, np.ndarray]:
    """``max_Q sum_{x,y} P(x) min(l W(y|x), Q(y))`` over the simplex, by greedy filling.

    Along ``Q(y)`` the marginal gain is ``P({x : l W(y|x) > Q(y)})``, a
    nonincreasing step function, so allocating unit mass to the steepest
    segments first is optimal.
    """
    nx, ny = wm.shape
    segs = []  # (rate, length, y)
    for y in range(ny):
        b = lam * wm[:, y]
        order = np.argsort(b)
        bs, ps = b[order], pv[order]
        tail = np.cumsum(ps[::-1])[::-1]  # tail[k] = P(x : b_x >= bs[k])
        prev = 0.0
        for k in range(nx):
            length = bs[k] - prev
            if length > 0 and tail[k] > 0:
                segs.append((tail[k], length, y))
            prev = max(prev, bs[k])
    segs.sort(key=lambda s: -s[0])
    q = np.zeros(ny)
    budget, filled = 1.0, 0.0
    for rate, length, y in segs:
        take = min(length, budget)
        q[y] += take
        filled += rate * take
        budget -= take
        if budget <= 0:
            break
    if budget > 0:
        # remaining mass has zero marginal value; spread it uniformly
        q += budget / ny
    return filled, q


def max_over_q(p: ProbLike, w: ChannelLike, eps: float) -> tuple[float, np.ndarray]:
    """``max_Q beta_eps(P x W, P x Q)`` and a maximizing ``Q``.

    The value is re-evaluated with the exact Neyman-Pearson routine at the
    returned ``Q``.
    """
    pv, wc = probs(p), as_channel(w)
    wm = wc.matrix
    pos = wm[pv > 0] > 0
    ratio_max = 1.0 / wm[pv > 0][pos].min()

    def value(lam):
        return _fill_q(pv, wm, lam)[0] - eps * lam

    _, lam = _golden_max(value, 0.0, _lambda_range(wm, eps, ratio_max))
    q = _fill_q(pv, wm, lam)[1]
    q = q / q.sum()
    return beta_joint(pv, wc, q, eps).beta, q


def min_over_p(q: ProbLike, w: ChannelLike, eps: float) -> tuple[float, int, float]:
    """``min_P beta_eps(P x W, P x Q) = max_l min_x [l (1-eps) - h_x(l)]``.

    ``h_x(l) = sum_y (l W(y|x) - Q(y))^+``. Returns the value, the input
    symbol that is active at the optimal ``l`` and that ``l``.
    """
    qv, wc = probs(q), as_channel(w)
    wm = wc.matrix
    pos = wm > 0
    ratio_max = float((np.broadcast_to(qv, wm.shape)[pos] / wm[pos]).max())

    def value(lam):
        h = np.maximum(lam * wm - qv[None, :], 0.0).sum(axis=1)
        return lam * (1 - eps) - h.max()

    val, lam = _golden_max(value, 0.0, _lambda_range(wm, eps, ratio_max))
    h = np.maximum(lam * wm - qv[None, :], 0.0).sum(axis=1)
    return float(val), int(np.argmax(h)), float(lam)


# ---------------------------------------------------------------------------
# saddle point


@dataclass(frozen=True)
class SaddleResult:
    p_star: np.ndarray
    q_star: np.ndarray
    minmax_value: float
    maxmin_value: float
    gap: float
    eps: float
    tol: float
    method: str
    iterations: int = 0


def _minmax_lp(wm: np.ndarray, eps: float) -> np.ndarray:
    """``min_P max_Q f`` as an LP over ``(P, U = P T, t)``; returns ``P``."""
    nx, ny = wm.shape
    nu = nx * ny
    nvar = nx + nu + 1
    c = np.zeros(nvar)
    c[-1] = 1.0
    rows, rhs = [], []
    for y in range(ny):  # sum_x U(x,y) <= t
        r = np.zeros(nvar)
        r[nx + np.arange(nx) * ny + y] = 1.0
        r[-1] = -1.0
        rows.append(r)
        rhs.append(0.0)
    r = np.zeros(nvar)  # sum W U >= 1 - eps
    r[nx : nx + nu] = -wm.ravel()
    rows.append(r)
    rhs.append(-(1 - eps))
    for x in range(nx):  # U(x,y) <= P(x)
        for y in range(ny):
            r = np.zeros(nvar)
            r[nx + x * ny + y] = 1.0
            r[x] = -1.0
            rows.append(r)
            rhs.append(0.0)
    a_eq = np.zeros((1, nvar))
    a_eq[0, :nx] = 1.0
    res = linprog(c, A_ub=np.array(rows), b_ub=rhs, A_eq=a_eq, b_eq=[1.0], bounds=[(0, None)] * nvar, method="highs")
    if res.status != 0:
        raise ConvergenceError(f"min-max LP failed: {res.message}")
    p = np.clip(res.x[:nx], 0, None)
    return p / p.sum()


def _maxmin_lp(wm: np.ndarray, eps: float) -> np.ndarray:
    """``max_Q min_P f`` as an LP over ``(l, Q, r, s)``; returns ``Q``."""
    nx, ny = wm.shape
    nr = nx * ny
    nvar = 1 + ny + nr + 1
    c = np.zeros(nvar)
    c[-1] = -1.0
    rows, rhs = [], []
    for x in range(nx):  # s <= l (1-eps) - sum_y r(x,y)
        r = np.zeros(nvar)
        r[-1] = 1.0
        r[0] = -(1 - eps)
        r[1 + ny + x * ny : 1 + ny + (x + 1) * ny] = 1.0
        rows.append(r)
        rhs.append(0.0)
    for x in range(nx):  # r(x,y) >= l W(y|x) - Q(y)
        for y in range(ny):
            r = np.zeros(nvar)
            r[0] = wm[x, y]
            r[1 + y] = -1.0
            r[1 + ny + x * ny + y] = -1.0
            rows.append(r)
            rhs.append(0.0)
    a_eq = np.zeros((1, nvar))
    a_eq[0, 1 : 1 + ny] = 1.0
    bounds = [(0, None)] * (nvar - 1) + [(None, None)]
    res = linprog(c, A_ub=np.array(rows), b_ub=rhs, A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0:
        raise ConvergenceError(f"max-min LP failed: {res.message}")
    q = np.clip(res.x[1 : 1 + ny], 0, None)
    return q / q.sum()


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def _subgradient_saddle(wm: np.ndarray, eps: float, tol: float, max_iter: int, step: float):
    nx, ny = wm.shape
    p = np.full(nx, 1.0 / nx)
    q = np.full(ny, 1.0 / ny)
    best_up, best_p = math.inf, p
    best_lo, best_q = -math.inf, q
    for t in range(1, max_iter + 1):
        up, q_resp = max_over_q(p, wm, eps)
        lo, _, lam_lo = min_over_p(q, wm, eps)
        if up < best_up:
            best_up, best_p = up, p.copy()
        if lo > best_lo:
            best_lo, best_q = lo, q.copy()
        if best_up - best_lo <= tol:
            return best_p, best_q, best_up, best_lo, t
        eta = step / math.sqrt(t)
        # subgradient of max_Q f(., Q) at p, taken at the best-responding Q
        lam_up = _argmax_lambda(p, q_resp, wm, eps)
        g_p = -np.maximum(lam_up * wm - q_resp[None, :], 0.0).sum(axis=1)
        h = np.maximum(lam_lo * wm - q[None, :], 0.0).sum(axis=1)
        x_act = h >= h.max() - 1e-12
        w_act = x_act / x_act.sum()
        g_q = (w_act[:, None] * (lam_lo * wm > q[None, :])).sum(axis=0)
        p = _project_simplex(p - eta * g_p)
        q = _project_simplex(q + eta * g_q)
    best = {"p": best_p, "q": best_q, "minmax": best_up, "maxmin": best_lo, "gap": best_up - best_lo}
    raise ConvergenceError(f"saddle gap {best_up - best_lo:.3g} above tol {tol} after {max_iter} iterations", best)


def _argmax_lambda(p: np.ndarray, q: np.ndarray, wm: np.ndarray, eps: float) -> float:
    pos = wm > 0
    ratio_max = float((np.broadcast_to(q, wm.shape)[pos] / wm[pos]).max())

    def value(lam):
        return lam * (1 - eps) - (p[:, None] * np.maximum(lam * wm - q[None, :], 0.0)).sum()

    return _golden_max(value, 0.0, _lambda_range(wm, eps, ratio_max))[1]


def saddle_solve(
    w: ChannelLike,
    eps: float,
    tol: float = DEFAULT_SADDLE_TOL,
    method: str = "lp",
    max_iter: int = 5000,
    step: float = 0.5,
) -> SaddleResult:
    """``min_P max_Q beta`` and ``max_Q min_P beta`` with a duality-gap certificate.

    ``method="lp"`` solves both sides as linear programs; ``"subgradient"``
    runs projected sub/supergradient steps with ``step/sqrt(t)`` sizes.
    Either way the reported values are recomputed at the returned ``P*``
    and ``Q*`` by the exact one-sided routines :func:`max_over_q` and
    :func:`min_over_p`, so ``gap`` certifies both.
    """
    if not (0 <= eps < 1):
        raise DomainError(f"eps must lie in [0, 1), got {eps!r}")
    if tol <= 0:
        raise DomainError("tol must be positive")
    wm = as_channel(w).matrix
    iters = 0
    if method == "lp":
        p_star, q_star = _minmax_lp(wm, eps), _maxmin_lp(wm, eps)
    elif method == "subgradient":
        p_star, q_star, _, _, iters = _subgradient_saddle(wm, eps, tol, max_iter, step)
    else:
        raise ValidationError(f"unknown saddle method {method!r}")
    upper, _ = max_over_q(p_star, wm, eps)
    lower, _, _ = min_over_p(q_star, wm, eps)
    gap = upper - lower
    if gap > tol:
        raise ConvergenceError(
            f"saddle gap {gap:.3g} above tol {tol}",
            {"p": p_star, "q": q_star, "minmax": upper, "maxmin": lower, "gap": gap},
        )
    return SaddleResult(p_star, q_star, upper, lower, gap, eps, tol, method, iters)


# ---------------------------------------------------------------------------
# converses


@dataclass(frozen=True)
class ConverseReport:
    bound_on_loglogN: float
    main_term: float
    slack_terms: dict
    eta: float
    variant: str
    details: dict = field(default_factory=dict)


def sup_ds_over_inputs(w: ChannelLike, q: ProbLike, eps: float) -> dict:
    """``max_x Ds^eps(W(.|x) || Q)``; equals ``sup_P Ds^eps(P x W || P x Q)``."""
    wc, qv = as_channel(w), probs(q)
    vals = [ds_epsilon(wc.matrix[x], qv, eps).value for x in range(wc.input_size)]
    x = int(np.argmax(vals))
    return {"value": float(vals[x]), "witness_x": x, "per_input": vals}


def slack_terms(input_size: int, eta: float) -> dict:
    if input_size < 2:
        raise ValidationError("degenerate channel: log log |X| needs |X| >= 2")
    return {
        "loglog_alphabet": math.log(math.log(input_size)),
        "eta_term": 2 * math.log(1 / eta),
        "constant": 2.0,
    }


def _check_converse_args(eps: float, delta: float, eta: float) -> float:
    if not (0 <= eps < 1 and 0 <= delta < 1):
        raise DomainError("eps and delta must lie in [0, 1)")
    if eps + delta >= 1:
        raise DomainError("eps + delta >= 1: ID capacity is infinite in this regime")
    if not (0 < eta < 1 - eps - delta):
        raise DomainError(f"eta must lie in (0, 1 - eps - delta), got {eta!r}")
    return eps + delta + eta


def simplex_grid(k: int, step: int) -> np.ndarray:
    """All points of the simplex on ``range(k)`` with coordinates in ``(1/step) Z``."""
    pts = []
    for bars in itertools.combinations(range(step + k - 1), k - 1):
        counts, prev = [], -1
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(step + k - 2 - prev)
        pts.append(counts)
    return np.asarray(pts, dtype=float) / step


def corollary1_bound(
    w: ChannelLike,
    eps: float,
    delta: float,
    eta: float,
    q_candidates=None,
    grid_step: int = 64,
    saddle_tol: float = DEFAULT_SADDLE_TOL,
) -> ConverseReport:
    """Information-spectrum converse on ``log log N*(eps, delta|W)``.

    The outer infimum over ``Q`` of ``max_x Ds^(eps+delta+eta)(W_x || Q)`` is
    taken over a candidate set: the capacity-achieving output, the uniform
    law, the beta saddle-point ``Q*`` (a continuous surrogate) and, for
    ``|Y| <= 3``, a simplex grid. Every candidate gives a valid bound; the
    smallest is reported together with the surrogate and grid values.
    """
    wc = as_channel(w)
    level = _check_converse_args(eps, delta, eta)
    slack = slack_terms(wc.input_size, eta)
    cands: dict[str, np.ndarray] = {
        "capacity_output": blahut_arimoto(wc).output_dist,
        "uniform": np.full(wc.output_size, 1.0 / wc.output_size),
    }
    try:
        cands["saddle_surrogate"] = saddle_solve(wc, level, saddle_tol).q_star
    except ConvergenceError as exc:
        if exc.best is not None:
            cands["saddle_surrogate"] = exc.best["q"]
    for i, q in enumerate(q_candidates or []):
        cands[f"user_{i}"] = probs(q)
    values = {k: sup_ds_over_inputs(wc, q, level)["value"] for k, q in cands.items()}
    grid_value = None
    if grid_step and wc.output_size <= 3:
        best_g, best_q = math.inf, None
        for q in simplex_grid(wc.output_size, grid_step):
            v = max(ds_epsilon(row, q, level).value for row in wc.matrix) if np.all(q > 0) else math.inf
            if v < best_g:
                best_g, best_q = v, q
        if best_q is not None:
            grid_value = best_g
            cands["grid"] = best_q
            values["grid"] = best_g
    key = min(values, key=values.get)
    main = values[key]
    return ConverseReport(
        bound_on_loglogN=main + sum(slack.values()),
        main_term=main,
        slack_terms=slack,
        eta=eta,
        variant="ds_corollary1",
        details={
            "level": level,
            "q_witness": cands[key].tolist(),
            "q_source": key,
            "surrogate_value": values.get("saddle_surrogate"),
            "grid_value": grid_value,
            "candidate_values": values,
        },
    )


def corollary2_bound(w: ChannelLike, eps: float, delta: float, eta: float, tol: float = DEFAULT_SADDLE_TOL) -> dict:
    """The beta-form converses: ``min_Q max_P -log beta`` and ``max_P min_Q -log beta``.

    ``min_Q max_P -log beta = -log max_Q min_P beta`` and symmetrically, so
    both come from one saddle solve at level ``eps + delta + eta``.
    """
    wc = as_channel(w)
    level = _check_converse_args(eps, delta, eta)
    slack = slack_terms(wc.input_size, eta)
    sad = saddle_solve(wc, level, tol)
    extra = sum(slack.values())
    common = {"level": level, "saddle_gap": sad.gap, "p_star": sad.p_star.tolist(), "q_star": sad.q_star.tolist()}
    m1 = neg_log(sad.maxmin_value)
    m2 = neg_log(sad.minmax_value)
    return {
        "minmax": ConverseReport(m1 + extra, m1, slack, eta, "beta_minmax", common),
        "maxmin": ConverseReport(m2 + extra, m2, slack, eta, "beta_maxmin", common),
    }


def _existing_objective(p: np.ndarray, wm: np.ndarray, gamma: float) -> float:
    q = p @ wm
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.where(wm > 0, np.log(np.where(wm > 0, wm, 1.0)) - np.log(np.where(q > 0, q, 1.0))[None, :], -np.inf)
    outside = (lr > gamma) & (wm > 0)
    return 1.0 - 2.0 * float((p[:, None] * wm * outside).sum())


def existing_bound(w: ChannelLike, gamma: float, m: int, grid_step: int = 64, return_witness: bool = False):
    """``inf_P [1 - 2 P x W(T_P^c)] - sqrt(e^gamma/M)`` with ``T_P`` thresholded against ``PW``.

    ``T_P`` moves with ``P`` so there is no vertex reduction; the infimum is
    searched on a simplex grid followed by a shrinking pattern search.
    """
    wc = as_channel(w)
    if m < 1:
        raise ValidationError("M must be >= 1")
    if wc.input_size > 4:
        raise ValidationError("existing_bound grid search is limited to |X| <= 4")
    wm = wc.matrix
    grid = simplex_grid(wc.input_size, grid_step)
    vals = np.array([_existing_objective(p, wm, gamma) for p in grid])
    starts = grid[np.argsort(vals)[:5]]
    best_v, best_p = float(vals.min()), grid[int(np.argmin(vals))]
    nx = wc.input_size
    for p0 in starts:
        p, v, h = p0.copy(), _existing_objective(p0, wm, gamma), 1.0 / grid_step
        while h > 1e-9:
            improved = False
            for i, j in itertools.permutations(range(nx), 2):
                cand = p.copy()
                move = min(h, cand[j])
                cand[i] += move
                cand[j] -= move
                cv = _existing_objective(cand, wm, gamma)
                if cv < v - 1e-15:
                    p, v, improved = cand, cv, True
            if not improved:
                h /= 2
        if v < best_v:
            best_v, best_p = v, p
    value = best_v - math.sqrt(math.exp(gamma) / m)
    if return_witness:
        return value, best_p
    return value


def capacity_output(w: ChannelLike, tol: float = DEFAULT_CAPACITY_TOL) -> Distribution:
    return Distribution(blahut_arimoto(w, tol).output_dist)

