"""Explicit identification codes: exact error evaluation and greedy search.

An ID code is a list of (stochastic encoder, acceptance set) pairs; unlike
transmission codes the acceptance sets may overlap.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .core import ChannelLike, ValidationError, as_channel, joint, probs, variational_distance


@dataclass(frozen=True)
class IDCode:
    encoders: tuple[np.ndarray, ...]
    acceptors: tuple[frozenset[int], ...]

    def __post_init__(self) -> None:
        if len(self.encoders) != len(self.acceptors) or not self.encoders:
            raise ValidationError("an ID code needs N >= 1 encoder/acceptor pairs")
        encs = tuple(np.array(probs(e)) for e in self.encoders)
        for e in encs:
            e.setflags(write=False)
        object.__setattr__(self, "encoders", encs)
        object.__setattr__(self, "acceptors", tuple(frozenset(int(y) for y in d) for d in self.acceptors))

    def __len__(self) -> int:
        return len(self.encoders)

    @classmethod
    def from_json(cls, obj: dict) -> "IDCode":
        return cls(tuple(np.asarray(e, dtype=float) for e in obj["encoders"]), tuple(obj["acceptors"]))

    def to_json(self) -> dict:
        return {
            "encoders": [e.tolist() for e in self.encoders],
            "acceptors": [sorted(d) for d in self.acceptors],
        }


@dataclass(frozen=True)
class IDCodeEvaluation:
    type1: float
    type2: float
    worst_pair: tuple[int, int] | None
    worst_message: int
    single_message: bool = False
    acceptance: np.ndarray = field(default=None, repr=False, compare=False)


def _indicator(d: frozenset[int], size: int) -> np.ndarray:
    v = np.zeros(size)
    if d:
        idx = np.fromiter(d, dtype=int)
        if idx.min() < 0 or idx.max() >= size:
            raise ValidationError("acceptance set refers to an output outside the alphabet")
        v[idx] = 1.0
    return v


def acceptance_matrix(code: IDCode, w: ChannelLike) -> np.ndarray:
    """``A[i, j] = P_i W(D_j)``."""
    wc = as_channel(w)
    enc = np.vstack(code.encoders)
    if enc.shape[1] != wc.input_size:
        raise ValidationError("encoder alphabet does not match the channel input")
    ind = np.vstack([_indicator(d, wc.output_size) for d in code.acceptors])
    return (enc @ wc.matrix) @ ind.T


def evaluate(code: IDCode, w: ChannelLike) -> IDCodeEvaluation:
    """Exact type-I (``max_i P_i W(D_i^c)``) and type-II (``max_{i != j} P_i W(D_j)``) errors.

    With a single message no pair exists; type II is reported as 0 and flagged.
    """
    a = acceptance_matrix(code, w)
    miss = 1.0 - np.diag(a)
    i1 = int(np.argmax(miss))
    n = len(code)
    if n == 1:
        return IDCodeEvaluation(max(float(miss[0]), 0.0), 0.0, None, i1, True, a)
    off = a.copy()
    np.fill_diagonal(off, -np.inf)
    i, j = np.unravel_index(int(np.argmax(off)), off.shape)
    return IDCodeEvaluation(max(float(miss[i1]), 0.0), float(off[i, j]), (int(i), int(j)), i1, False, a)


def evaluate_via_joint(code: IDCode, w: ChannelLike) -> tuple[float, float]:
    """Same errors recomputed from the joint laws ``P_i x W`` (cross-check route)."""
    wc = as_channel(w)
    masses = [joint(e, wc).mass for e in code.encoders]
    n = len(code)
    t1 = max(1.0 - float(m[:, sorted(d)].sum()) for m, d in zip(masses, code.acceptors))
    t2 = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                t2 = max(t2, float(masses[i][:, sorted(code.acceptors[j])].sum()))
    return max(t1, 0.0), t2


def is_mtype(p: np.ndarray, m: int, tol: float = 1e-12) -> bool:
    scaled = np.asarray(p, dtype=float) * m
    return bool(np.all(np.abs(scaled - np.round(scaled)) <= tol * m))


def is_m_canonical(code: IDCode, m: int) -> bool:
    """True iff every encoder is an M-type."""
    if m < 1:
        raise ValidationError("M must be >= 1")
    return all(is_mtype(e, m) for e in code.encoders)


def duplicate_encoders(code: IDCode, tol: float = 1e-12) -> list[tuple[int, int]]:
    """Pairs of messages sharing an encoder; impossible for a code with eps + delta < 1."""
    out = []
    for i, j in itertools.combinations(range(len(code)), 2):
        if np.max(np.abs(code.encoders[i] - code.encoders[j])) <= tol:
            out.append((i, j))
    return out


def separation_check(code: IDCode, w: ChannelLike, tol: float = 1e-9) -> dict:
    """``d(P_i W, P_j W) >= 1 - eps - delta`` for every pair of a code."""
    wc = as_channel(w)
    ev = evaluate(code, wc)
    outs = [e @ wc.matrix for e in code.encoders]
    target = 1.0 - ev.type1 - ev.type2
    worst = math.inf
    for i, j in itertools.combinations(range(len(code)), 2):
        worst = min(worst, variational_distance(outs[i], outs[j]))
    return {"min_distance": worst, "target": target, "holds": len(code) < 2 or worst >= target - tol}


# ---------------------------------------------------------------------------
# search


def mtype_grid(k: int, m: int) -> list[np.ndarray]:
    """All M-types on ``range(k)``."""
    out = []
    for bars in itertools.combinations(range(m + k - 1), k - 1):
        counts, prev = [], -1
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(m + k - 2 - prev)
        out.append(np.asarray(counts, dtype=float) / m)
    return out


def encoder_pool(k: int, denominators=(1, 2, 4, 8)) -> list[np.ndarray]:
    pool: dict[tuple, np.ndarray] = {}
    for m in denominators:
        for p in mtype_grid(k, m):
            pool.setdefault(tuple(np.round(p, 12)), p)
    return list(pool.values())


def acceptor_pool(w: ChannelLike, max_exhaustive: int = 12) -> list[frozenset[int]]:
    """All non-empty output subsets for small ``|Y|``; likelihood-level sets beyond."""
    wc = as_channel(w)
    ny = wc.output_size
    if ny <= max_exhaustive:
        return [frozenset(c) for r in range(1, ny + 1) for c in itertools.combinations(range(ny), r)]
    pool = set()
    avg = wc.matrix.mean(axis=0)
    for row in wc.matrix:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(avg > 0, row / avg, 0.0)
        order = np.argsort(-ratio, kind="stable")
        for r in range(1, ny + 1):
            pool.add(frozenset(int(y) for y in order[:r]))
    return sorted(pool, key=lambda d: (len(d), sorted(d)))


@dataclass(frozen=True)
class SearchBudget:
    candidates: int = 20000
    max_messages: int = 64
    denominators: tuple[int, ...] = (1, 2, 4, 8)
    #: cap on greedy re-runs over the critical (eps, delta) ladder
    max_runs: int = 2500


def _greedy(hit, miss, order, n_acc: int, eps: float, delta: float, cap: int):
    chosen: list[tuple[int, int]] = []
    for c in order:
        e, a = divmod(int(c), n_acc)
        if miss[e, a] > eps:
            continue
        if all(hit[e, a2] <= delta and hit[e2, a] <= delta for e2, a2 in chosen):
            chosen.append((e, a))
            if len(chosen) >= cap:
                break
    return chosen


def search_codes(w: ChannelLike, eps: float, delta: float, budget: SearchBudget | None = None, seed: int = 0) -> dict:
    """Greedy lower-bound witness for ``N*(eps, delta|W)``; never claims optimality.

    Candidate (encoder, acceptor) pairs are visited in a seeded random order,
    and again sorted by selectivity, and added whenever every pairwise error
    constraint stays within the tolerances. The greedy pass only sees which error values fall below the
    tolerances, so it is re-run at every critical pair ``(e', d') <= (eps,
    delta)`` of observed error values and the largest code kept; this makes
    ``N`` nondecreasing in ``eps`` and ``delta``.
    """
    if not (0 <= eps < 1 and 0 <= delta < 1):
        raise ValidationError("eps and delta must lie in [0, 1)")
    if eps + delta >= 1:
        raise ValidationError("eps + delta >= 1: ID capacity is infinite in this regime")
    budget = budget or SearchBudget()
    wc = as_channel(w)
    encs = encoder_pool(wc.input_size, budget.denominators)
    accs = acceptor_pool(wc)
    hit = (np.vstack(encs) @ wc.matrix) @ np.vstack([_indicator(d, wc.output_size) for d in accs]).T
    # snap round-off so that "within eps" comparisons are exact on the grid
    hit = np.round(hit, 12)
    miss = np.round(1.0 - hit, 12)
    total = len(encs) * len(accs)
    order = rngmod.stream(seed).permutation(total)[: budget.candidates]
    seen_e, seen_a = np.divmod(order, len(accs))
    # second pass order: selective pairs first (low average hit of the
    # acceptor across encoders and of the encoder across acceptors)
    score = hit.mean(axis=0)[seen_a] + hit.mean(axis=1)[seen_e]
    orders = (order, order[np.argsort(score, kind="stable")])
    crit_e = np.unique(miss[seen_e, seen_a])
    crit_e = crit_e[crit_e <= eps + 1e-12]
    crit_d = np.unique(hit)
    crit_d = crit_d[crit_d <= delta + 1e-12]
    runs = [(eps, delta)]
    monotone = crit_e.size * max(crit_d.size, 1) <= budget.max_runs
    if monotone:
        runs = [(e, d) for e in crit_e for d in (crit_d if crit_d.size else [0.0])]
    best: list[tuple[int, int]] = []
    for e, d in runs:
        for o in orders:
            chosen = _greedy(hit, miss, o, len(accs), e, d, budget.max_messages)
            if len(chosen) > len(best):
                best = chosen
    if not best:
        # a single message accepted everywhere is always a valid code
        best = [(0, len(accs) - 1)]
    code = IDCode(tuple(encs[e] for e, _ in best), tuple(accs[a] for _, a in best))
    ev = evaluate(code, wc)
    return {
        "best_code": code,
        "N": len(code),
        "evaluation": ev,
        "monotone_ladder": monotone,
        **rngmod.provenance(seed, candidates=int(order.size)),
    }
