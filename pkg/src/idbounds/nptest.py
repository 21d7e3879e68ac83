"""Exact binary hypothesis testing between two finite distributions.

``beta_epsilon`` is the Neyman-Pearson optimum, ``ds_epsilon`` the
epsilon-information-spectrum divergence; both work on the merged
log-likelihood-ratio levels of the pair ``(P, Q)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError, ProbLike, ValidationError, log_ratio, probs

#: Log-ratio levels closer than this are merged into one level.
TIE_TOL = 1e-12
#: A CDF value must exceed eps by more than this to count as "above eps".
CDF_TOL = 1e-12


@dataclass(frozen=True)
class NPTest:
    """Randomized likelihood-ratio test on merged levels.

    Levels strictly below ``threshold`` are rejected, levels above are
    accepted and the threshold level is rejected with probability
    ``randomization``.
    """

    levels: np.ndarray
    p_mass: np.ndarray
    q_mass: np.ndarray
    threshold: float
    randomization: float

    def acceptance(self) -> np.ndarray:
        """Probability of deciding for the null at every level."""
        acc = (self.levels > self.threshold).astype(float)
        acc[self.levels == self.threshold] = 1.0 - self.randomization
        return acc


@dataclass(frozen=True)
class BetaResult:
    beta: float
    test: NPTest
    type1: float
    type2: float


@dataclass(frozen=True)
class DsResult:
    value: float
    achieved_tail: float

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)


def _check_eps(eps: float) -> None:
    if not (0.0 <= eps < 1.0):
        raise DomainError(f"eps must lie in [0, 1), got {eps!r}")


def likelihood_levels(p: ProbLike, q: ProbLike) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sorted distinct values of ``log p/q`` with their P- and Q-masses.

    Outcomes with ``p = q = 0`` are dropped; ``+-inf`` levels are kept as
    explicit sentinels.
    """
    pv, qv = probs(p), probs(q)
    if pv.shape != qv.shape:
        raise ValidationError(f"alphabet sizes differ: {pv.size} vs {qv.size}")
    return merge_levels(log_ratio(pv, qv), pv, qv)


def merge_levels(lv: np.ndarray, pv: np.ndarray, qv: np.ndarray, tol: float = TIE_TOL):
    keep = ~np.isnan(lv)
    lv, pv, qv = lv[keep], pv[keep], qv[keep]
    order = np.argsort(lv, kind="stable")
    lv, pv, qv = lv[order], pv[order], qv[order]
    if lv.size == 0:
        return lv, pv, qv
    with np.errstate(invalid="ignore"):
        gaps = np.diff(lv)
    new = np.ones(lv.size, dtype=bool)
    new[1:] = ~((gaps <= tol) | (lv[1:] == lv[:-1]))
    idx = np.cumsum(new) - 1
    levels = lv[new]
    return levels, np.bincount(idx, weights=pv), np.bincount(idx, weights=qv)


def beta_epsilon(p: ProbLike, q: ProbLike, eps: float) -> BetaResult:
    """Smallest type-II error among tests with type-I error at most ``eps``.

    Greedy Neyman-Pearson: reject the lowest-ratio P-mass up to ``eps``,
    randomizing on the boundary level; this is the optimum of the test LP.
    Levels whose cumulative P-mass is within ``CDF_TOL`` of ``eps`` are
    rejected whole, the same round-off allowance ``ds_epsilon`` uses.
    """
    _check_eps(eps)
    levels, pm, qm = likelihood_levels(p, q)
    cum = np.cumsum(pm)
    k = int(np.searchsorted(cum, eps + CDF_TOL, side="right"))
    k = min(k, levels.size - 1)
    before = float(cum[k - 1]) if k > 0 else 0.0
    r = 0.0 if pm[k] <= 0 else min(max((eps - before) / pm[k], 0.0), 1.0)
    beta = float(qm[k] * (1.0 - r) + qm[k + 1 :].sum())
    test = NPTest(levels, pm, qm, float(levels[k]), r)
    type1 = float(before + r * pm[k])
    return BetaResult(beta=beta, test=test, type1=type1, type2=beta)


def ds_epsilon(p: ProbLike, q: ProbLike, eps: float) -> DsResult:
    """Supremum of thresholds whose likelihood-ratio lower tail under P is at most ``eps``.

    The CDF of ``log p/q`` under P is a right-continuous step function, so
    the supremum is the first level where the CDF exceeds ``eps``.
    """
    _check_eps(eps)
    levels, pm, _ = likelihood_levels(p, q)
    return spectrum_quantile(levels, np.cumsum(pm), eps)


def spectrum_quantile(levels: np.ndarray, cdf: np.ndarray, eps: float) -> DsResult:
    """``sup{g : CDF(g) <= eps}`` for a step CDF given on sorted levels."""
    above = np.flatnonzero(cdf > eps + CDF_TOL)
    if above.size == 0:
        # only reachable through round-off in cdf[-1]
        return DsResult(math.inf, float(cdf[-1]))
    k = int(above[0])
    return DsResult(float(levels[k]), float(cdf[k]))


def neg_log(x: float) -> float:
    return math.inf if x <= 0 else -math.log(x)


def lemma1_check(p: ProbLike, q: ProbLike, eps: float, zeta: float, slack: float = 1e-9) -> dict:
    """Check ``Ds^eps <= -log beta_eps <= Ds^(eps+zeta) + log(1/zeta)``."""
    _check_eps(eps)
    if not (0.0 < zeta < 1.0 - eps):
        raise DomainError(f"zeta must lie in (0, 1 - eps), got {zeta!r}")
    ds = ds_epsilon(p, q, eps).value
    nlb = neg_log(beta_epsilon(p, q, eps).beta)
    upper = ds_epsilon(p, q, eps + zeta).value + math.log(1.0 / zeta)
    holds = ds <= nlb + slack and nlb <= upper + slack
    return {
        "ds_eps": ds,
        "neg_log_beta": nlb,
        "ds_eps_plus_zeta_slack": upper,
        "holds": bool(holds),
    }


def beta_dual(p: ProbLike, q: ProbLike, eps: float) -> float:
    """LP dual value ``max_l l(1-eps) - sum (l p - q)^+`` evaluated at every breakpoint.

    The dual objective is concave and piecewise linear in ``l`` with kinks at
    ``q/p``, so its maximum sits at ``l = 0`` or at a kink. Used as an
    independent certificate for :func:`beta_epsilon`.
    """
    _check_eps(eps)
    pv, qv = probs(p), probs(q)
    pos = pv > 0
    lam = np.concatenate(([0.0], qv[pos] / pv[pos]))
    vals = lam * (1 - eps) - np.maximum(lam[:, None] * pv[None, :] - qv[None, :], 0).sum(axis=1)
    return float(vals.max())


def beta_vertex_oracle(p: ProbLike, q: ProbLike, eps: float) -> float:
    """Brute-force test LP optimum by enumerating its vertices.

    A vertex of ``{T in [0,1]^k : sum p T >= 1 - eps}`` has at most one
    fractional coordinate; enumerate every deterministic acceptance set and
    every single-coordinate randomization. Exponential in the alphabet size.
    """
    _check_eps(eps)
    pv, qv = probs(p), probs(q)
    k = pv.size
    need = 1.0 - eps
    best = math.inf
    for mask in range(1 << k):
        acc = np.array([(mask >> i) & 1 for i in range(k)], dtype=bool)
        pa, qa = float(pv[acc].sum()), float(qv[acc].sum())
        if pa >= need - 1e-15:
            best = min(best, qa)
            continue
        for j in np.flatnonzero(~acc):
            if pv[j] <= 0:
                continue
            t = (need - pa) / pv[j]
            if 0.0 <= t <= 1.0:
                best = min(best, qa + t * qv[j])
    return best
