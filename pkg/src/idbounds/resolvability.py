"""Truncated channels, partial responses and the soft-covering construction.

The soft-covering bound approximates the partial response ``P W^S`` of an
arbitrary input by that of an M-type built from M i.i.d. draws of ``P``;
the ID converse then counts M-types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .core import (
    ChannelLike,
    MType,
    ProbLike,
    SubDistribution,
    ValidationError,
    as_channel,
    log_ratio,
    output_distribution,
    probs,
    variational_distance,
)


@dataclass(frozen=True)
class TruncationSet:
    """Boolean mask over ``X x Y``; ``q``/``gamma`` set when built from a log-ratio threshold."""

    mask: np.ndarray
    q: np.ndarray | None = None
    gamma: float | None = None

    @property
    def explicit(self) -> bool:
        return self.q is None

    def complement(self) -> "TruncationSet":
        return TruncationSet(~self.mask)


@dataclass(frozen=True)
class SoftCoverTrial:
    mtype: MType
    distance: float
    seed: int
    trial: int = 0
    flagged: bool = False


@dataclass(frozen=True)
class Theorem1Report:
    inf_term: float
    penalty: float
    lower_bound_on_eps_plus_delta: float
    witness_x: int


def truncation_set(w: ChannelLike, q: ProbLike, gamma: float) -> TruncationSet:
    """``S(Q, gamma) = {(x, y) : log W(y|x)/Q(y) <= gamma}``.

    Pairs with ``W(y|x) = 0`` are always inside (log-ratio ``-inf``); pairs
    with ``Q(y) = 0 < W(y|x)`` are outside (``+inf``).
    """
    wc, qv = as_channel(w), probs(q)
    if qv.size != wc.output_size:
        raise ValidationError("Q must live on the channel output alphabet")
    lr = log_ratio(wc.matrix, qv[None, :])
    mask = np.isnan(lr) | (lr <= gamma)
    mask.setflags(write=False)
    return TruncationSet(mask, np.array(qv), float(gamma))


def explicit_set(mask: np.ndarray) -> TruncationSet:
    m = np.array(mask, dtype=bool)
    m.setflags(write=False)
    return TruncationSet(m)


def _check_shape(w, s: TruncationSet) -> None:
    if s.mask.shape != w.matrix.shape:
        raise ValidationError("truncation set shape does not match the channel")


def truncated_matrix(w: ChannelLike, s: TruncationSet) -> np.ndarray:
    wc = as_channel(w)
    _check_shape(wc, s)
    return np.where(s.mask, wc.matrix, 0.0)


def partial_response(p: ProbLike, w: ChannelLike, s: TruncationSet) -> SubDistribution:
    """``P W^S(y) = sum_x P(x) W(y|x) 1[(x, y) in S]``."""
    pv = probs(p)
    ws = truncated_matrix(w, s)
    if pv.size != ws.shape[0]:
        raise ValidationError("input distribution and channel sizes differ")
    return SubDistribution(pv @ ws)


def joint_mass(p: ProbLike, w: ChannelLike, s: TruncationSet) -> float:
    """``P x W(S)``."""
    return float(partial_response(p, w, s).total)


def truncation_error_check(p: ProbLike, w: ChannelLike, s: TruncationSet, tol: float = 1e-12) -> dict:
    """Compare ``d(P W^S, P W)`` against ``P x W(S^c) / 2``."""
    lhs = variational_distance(partial_response(p, w, s).mass, output_distribution(p, w).probs)
    rhs = joint_mass(p, w, s.complement()) / 2
    return {"lhs": lhs, "rhs": rhs, "equal": abs(lhs - rhs) <= tol}


def soft_cover_bound(gamma: float, m: int) -> float:
    """``1/2 sqrt(e^gamma / M)``."""
    if m < 1:
        raise ValidationError("M must be >= 1")
    return 0.5 * math.sqrt(math.exp(gamma) / m)


def sample_mtype(p: ProbLike, m: int, gen: np.random.Generator) -> MType:
    """Empirical type of ``m`` inverse-CDF draws from ``p`` (fixed index order)."""
    pv = probs(p)
    cdf = np.cumsum(pv)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, gen.random(m), side="right")
    return MType.from_samples(np.minimum(idx, pv.size - 1), pv.size)


def soft_cover_sample(
    p: ProbLike, w: ChannelLike, s: TruncationSet, m: int, seed: int, trial: int = 0
) -> SoftCoverTrial:
    """One random M-type and its exact partial-response distance ``d(P~W^S, PW^S)``.

    Sets without a ``(Q, gamma)`` provenance are allowed but ``flagged``:
    the soft-covering bound is only claimed for threshold-shaped sets.
    """
    if m < 1:
        raise ValidationError("M must be >= 1")
    mt = sample_mtype(p, m, rngmod.stream(seed, trial))
    ws = truncated_matrix(w, s)
    d = variational_distance(mt.distribution() @ ws, probs(p) @ ws)
    return SoftCoverTrial(mt, d, int(seed), trial, flagged=s.explicit)


def soft_cover_distances(
    p: ProbLike, w: ChannelLike, s: TruncationSet, m: int, trials: int, seed: int
) -> np.ndarray:
    """Distances of ``trials`` independent soft-cover samples, trial ``i`` on sub-stream ``i``."""
    pv = probs(p)
    ws = truncated_matrix(w, s)
    counts = np.empty((trials, pv.size))
    for i in range(trials):
        counts[i] = sample_mtype(pv, m, rngmod.stream(seed, i)).counts
    approx = (counts / m) @ ws
    return 0.5 * np.abs(approx - pv @ ws).sum(axis=1)


def soft_cover_best_of(
    p: ProbLike, w: ChannelLike, s: TruncationSet, m: int, trials: int, seed: int
) -> SoftCoverTrial:
    """Best of ``trials`` samples; an existence witness for the soft-covering bound."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    best = None
    for i in range(trials):
        t = soft_cover_sample(p, w, s, m, seed, trial=i)
        if best is None or t.distance < best.distance:
            best = t
    return best


def soft_cover_mean_check(
    p: ProbLike, w: ChannelLike, s: TruncationSet, m: int, trials: int, seed: int, k_se: float = 3.0
) -> dict:
    """Monte Carlo mean of the distance against ``soft_cover_bound`` plus ``k_se`` standard errors."""
    d = soft_cover_distances(p, w, s, m, trials, seed)
    mean = float(d.mean())
    se = float(d.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    bound = soft_cover_bound(s.gamma, m)
    return {
        "mean": mean,
        "std_error": se,
        "bound": bound,
        "holds": mean <= bound + k_se * se,
        **rngmod.provenance(seed, trials=trials),
    }


def theorem1_bound(w: ChannelLike, q: ProbLike, gamma: float, m: int) -> Theorem1Report:
    """Lower bound on ``eps + delta`` for any ID code with ``N > |X|^M``.

    ``P x W(S)`` is linear in ``P``, so its infimum over the simplex is
    attained at a vertex: ``min_x sum_y W(y|x) 1[(x, y) in S]``.
    """
    wc = as_channel(w)
    s = truncation_set(wc, q, gamma)
    per_x = (wc.matrix * s.mask).sum(axis=1)
    x = int(np.argmin(per_x))
    inf_term = float(per_x[x])
    penalty = 2 * soft_cover_bound(gamma, m)
    return Theorem1Report(inf_term, penalty, inf_term - penalty, x)


def exceeds_type_count(n_messages: int, input_size: int, m: int) -> bool:
    """``N > |X|^M`` without overflow."""
    if m * math.log(max(input_size, 1)) > 64 * math.log(2):
        return False
    return n_messages > input_size**m


def verify_theorem1_against_code(code, w: ChannelLike, q: ProbLike, gamma: float, m: int, tol: float = 1e-9) -> dict:
    """Check the converse on an explicit code; only applicable when ``N > |X|^M``."""
    from .idcode import evaluate

    wc = as_channel(w)
    applicable = exceeds_type_count(len(code), wc.input_size, m)
    ev = evaluate(code, wc)
    report = theorem1_bound(wc, q, gamma, m)
    total = ev.type1 + ev.type2
    return {
        "applicable": applicable,
        "holds": (total >= report.lower_bound_on_eps_plus_delta - tol) if applicable else None,
        "eps_plus_delta": total,
        "bound": report.lower_bound_on_eps_plus_delta,
    }


def triangle_chain_check(
    p_i: ProbLike, p_j: ProbLike, approx: ProbLike, w: ChannelLike, s: TruncationSet, tol: float = 1e-12
) -> dict:
    """Re-check the two-step triangle chain for a pair sharing the same approximating M-type."""
    wc = as_channel(w)
    ws = truncated_matrix(wc, s)
    pi, pj, pt = probs(p_i), probs(p_j), probs(approx)
    lhs = variational_distance(pi @ wc.matrix, pj @ wc.matrix)
    rhs = (
        0.5 * (joint_mass(pi, wc, s.complement()) + joint_mass(pj, wc, s.complement()))
        + variational_distance(pt @ ws, pi @ ws)
        + variational_distance(pt @ ws, pj @ ws)
    )
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs + tol}
