"""Finite-n information spectra: laws of normalized sums of per-letter log-ratios.

A :class:`LevelDist` is a finite law on the extended reals (only ``+inf``
can occur as a sentinel: an output with positive channel probability but
zero reference probability). Sums of i.i.d. letters are computed by exact
convolution or by sampling multinomial letter counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import rng as rngmod
from .core import ChannelLike, ProbLike, ValidationError, as_channel, log_ratio, probs
from .nptest import DsResult, spectrum_quantile

#: Levels closer than ``MERGE_TOL * max(1, |level|)`` are merged.
MERGE_TOL = 1e-12
DEFAULT_LEVEL_CAP = 10**6


class LevelCapExceeded(ValidationError):
    """Exact convolution would exceed the distinct-level cap."""


@dataclass(frozen=True)
class LevelDist:
    """Sorted finite levels with masses, plus the mass sitting at ``+inf``."""

    levels: np.ndarray
    masses: np.ndarray
    inf_mass: float = 0.0

    @classmethod
    def build(cls, levels: np.ndarray, masses: np.ndarray, tol: float = MERGE_TOL) -> "LevelDist":
        lv = np.asarray(levels, dtype=float)
        ms = np.asarray(masses, dtype=float)
        keep = ms > 0
        lv, ms = lv[keep], ms[keep]
        inf = np.isposinf(lv)
        inf_mass = float(ms[inf].sum())
        lv, ms = lv[~inf], ms[~inf]
        if np.any(np.isnan(lv)) or np.any(np.isneginf(lv)):
            raise ValidationError("levels must be finite or +inf")
        return cls(*_merge(lv, ms, tol), inf_mass)

    @property
    def size(self) -> int:
        return int(self.levels.size)

    def mean(self) -> float:
        return math.inf if self.inf_mass > 0 else float(self.levels @ self.masses)

    def variance(self) -> float:
        if self.inf_mass > 0:
            return math.inf
        m = self.mean()
        return float(((self.levels - m) ** 2) @ self.masses)

    def finite_conditional(self) -> "LevelDist":
        return LevelDist(self.levels, self.masses / self.masses.sum(), 0.0)

    def with_inf(self) -> tuple[np.ndarray, np.ndarray]:
        if self.inf_mass > 0:
            return np.append(self.levels, np.inf), np.append(self.masses, self.inf_mass)
        return self.levels, self.masses


def _merge(lv: np.ndarray, ms: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    if lv.size == 0:
        return lv, ms
    order = np.argsort(lv, kind="stable")
    lv, ms = lv[order], ms[order]
    scale = np.maximum(1.0, np.abs(lv[1:]))
    new = np.ones(lv.size, dtype=bool)
    new[1:] = np.diff(lv) > tol * scale
    idx = np.cumsum(new) - 1
    mass = np.bincount(idx, weights=ms)
    first = lv[new]
    return first, mass


def convolve(a: LevelDist, b: LevelDist, cap: int = DEFAULT_LEVEL_CAP) -> LevelDist:
    """Law of the sum of independent draws from ``a`` and ``b``."""
    if a.size * b.size > cap * 8:
        raise LevelCapExceeded(f"{a.size} x {b.size} level pairs exceed the convolution cap")
    lv = (a.levels[:, None] + b.levels[None, :]).ravel()
    ms = (a.masses[:, None] * b.masses[None, :]).ravel()
    fin_a, fin_b = a.masses.sum(), b.masses.sum()
    inf_mass = 1.0 - fin_a * fin_b if (a.inf_mass > 0 or b.inf_mass > 0) else 0.0
    out = LevelDist(*_merge(lv, ms, MERGE_TOL), max(inf_mass, 0.0))
    if out.size > cap:
        raise LevelCapExceeded(f"{out.size} distinct levels exceed the cap {cap}")
    return out


def _compositions(n: int, k: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``k`` summing to ``n``."""
    if k == 1:
        return np.array([[n]])
    rows = []
    for first in range(n + 1):
        rest = _compositions(n - first, k - 1)
        rows.append(np.hstack([np.full((rest.shape[0], 1), first), rest]))
    return np.vstack(rows)


def nfold(base: LevelDist, n: int, cap: int = DEFAULT_LEVEL_CAP) -> LevelDist:
    """Law of the sum of ``n`` i.i.d. draws from ``base``.

    When the number of letter-count vectors ``C(n+k-1, k-1)`` is small the
    sum is enumerated with multinomial weights; otherwise letters are
    convolved in one at a time, merging coincident levels after each step.
    """
    if n < 0:
        raise ValidationError("n must be >= 0")
    if n == 0:
        return LevelDist(np.zeros(1), np.ones(1), 0.0)
    cond = base.finite_conditional() if base.inf_mass > 0 else base
    fin_n = (1.0 - base.inf_mass) ** n
    k = cond.size
    if math.comb(n + k - 1, k - 1) <= min(cap, 2 * 10**5):
        counts = _compositions(n, k)
        logw = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1) + (counts * np.log(cond.masses)).sum(axis=1)
        out = LevelDist.build(counts @ cond.levels, np.exp(logw))
    else:
        out = cond
        for _ in range(n - 1):
            out = convolve(out, cond, cap)
    return LevelDist(out.levels, out.masses * fin_n, 1.0 - fin_n if base.inf_mass > 0 else 0.0)


@dataclass(frozen=True)
class SpectrumCDF:
    """CDF of the normalized information density ``(1/n) sum_i log W(Y_i|X_i)/q(Y_i)``."""

    values: np.ndarray
    cdf: np.ndarray
    n: int
    mode: str
    description: dict = field(default_factory=dict)

    def at(self, x: float) -> float:
        """``Pr(value <= x)``, with levels within round-off of ``x`` counted as equal."""
        k = np.searchsorted(self.values, x + MERGE_TOL * max(1.0, abs(x)), side="right")
        return 0.0 if k == 0 else float(self.cdf[k - 1])

    def ds(self, eps: float) -> DsResult:
        """Normalized ``Ds^eps``: first level whose CDF exceeds ``eps``."""
        return spectrum_quantile(self.values, self.cdf, eps)


def letter_levels(p: ProbLike, w: ChannelLike, q: ProbLike) -> LevelDist:
    """Per-letter law of ``log W(Y|X)/q(Y)`` under ``(X, Y) ~ p x W``."""
    pv, wc, qv = probs(p), as_channel(w), probs(q)
    if pv.size != wc.input_size or qv.size != wc.output_size:
        raise ValidationError("dimension mismatch between p, W and q")
    mass = pv[:, None] * wc.matrix
    lr = log_ratio(wc.matrix, qv[None, :])
    keep = mass > 0
    return LevelDist.build(lr[keep], mass[keep])


def row_levels(w: ChannelLike, q: ProbLike, x: int) -> LevelDist:
    """Law of ``log W(Y|x)/q(Y)`` under ``Y ~ W(.|x)``."""
    wc, qv = as_channel(w), probs(q)
    row = wc.matrix[x]
    keep = row > 0
    return LevelDist.build(log_ratio(row[keep], qv[keep]), row[keep])


def _as_cdf(dist: LevelDist, n: int, mode: str, description: dict) -> SpectrumCDF:
    lv, ms = dist.with_inf()
    return SpectrumCDF(lv / n, np.minimum(np.cumsum(ms), 1.0), n, mode, description)


def spectrum_cdf(
    p: ProbLike,
    w: ChannelLike,
    q: ProbLike,
    n: int,
    mode: str = "exact_dp",
    samples: int = 100_000,
    seed: int | None = None,
    cap: int = DEFAULT_LEVEL_CAP,
) -> SpectrumCDF:
    """CDF of ``(1/n) sum log W(Y_i|X_i)/q(Y_i)`` for i.i.d. ``(X_i, Y_i) ~ p x W``.

    ``mode="exact_dp"`` convolves the per-letter levels; ``"monte_carlo"``
    draws ``samples`` vectors of letter counts from the multinomial law,
    which has the same distribution as summing ``n`` sampled letters.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    base = letter_levels(p, w, q)
    desc = {"input": probs(p).tolist(), "reference": probs(q).tolist(), "letter_levels": base.size}
    if mode == "exact_dp":
        try:
            dist = nfold(base, n, cap)
        except LevelCapExceeded as exc:
            raise LevelCapExceeded(f"{exc}; use mode='monte_carlo'") from None
        return _as_cdf(dist, n, mode, desc)
    if mode != "monte_carlo":
        raise ValidationError(f"unknown spectrum mode {mode!r}")
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    seed = rngmod.default_seed() if seed is None else seed
    gen = rngmod.stream(seed)
    lv, ms = base.with_inf()
    counts = gen.multinomial(n, ms / ms.sum(), size=samples)
    fin = np.isfinite(lv)
    vals = counts[:, fin] @ lv[fin] / n
    if not fin.all():
        vals = np.where(counts[:, ~fin].sum(axis=1) > 0, np.inf, vals)
    vals.sort()
    uniq, last = np.unique(vals, return_index=False, return_counts=True)
    cdf = np.cumsum(last) / samples
    return SpectrumCDF(uniq, cdf, n, mode, {**desc, **rngmod.provenance(seed, samples=samples)})


def composition_spectrum(class_dists: list[LevelDist], counts, cap: int = DEFAULT_LEVEL_CAP) -> LevelDist:
    """Law of the unnormalized sum when class ``c`` contributes ``counts[c]`` letters."""
    out = LevelDist(np.zeros(1), np.ones(1), 0.0)
    for dist, k in zip(class_dists, counts):
        if k:
            out = convolve(out, nfold(dist, int(k), cap), cap)
    return out

