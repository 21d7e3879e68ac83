"""Finite-alphabet channels, distributions and elementary operations.

All logarithms are natural (nats). Alphabets are index ranges ``0..k-1``;
optional string labels are kept for display only.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from numpy.typing import ArrayLike

#: Input normalization slack tolerated (and removed) on construction.
INPUT_SLACK = 1e-9
#: Default cap on explicitly materialized product-channel entries.
MATERIALIZATION_CAP = 10**7


class ValidationError(ValueError):
    """Raised when an input violates an operation precondition."""


class DomainError(ValidationError):
    """Raised when a scalar parameter lies outside its admissible range."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _normalize(vec: ArrayLike, what: str) -> np.ndarray:
    v = np.asarray(vec, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValidationError(f"{what} must be a non-empty vector")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{what} has non-finite entries")
    if np.any(v < -INPUT_SLACK):
        raise ValidationError(f"{what} has negative entries")
    total = float(v.sum())
    if abs(total - 1.0) > INPUT_SLACK:
        raise ValidationError(f"{what} not stochastic (sums to {total!r})")
    v = np.clip(v, 0.0, None)
    return v / v.sum()


@dataclass(frozen=True)
class Distribution:
    """Probability vector over ``range(len(probs))``."""

    probs: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", _frozen(_normalize(self.probs, "distribution")))
        if self.labels is not None and len(self.labels) != self.probs.size:
            raise ValidationError("label count does not match alphabet size")

    @property
    def size(self) -> int:
        return int(self.probs.size)

    def __len__(self) -> int:
        return self.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)

    @classmethod
    def uniform(cls, k: int) -> "Distribution":
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def point(cls, k: int, i: int) -> "Distribution":
        v = np.zeros(k)
        v[i] = 1.0
        return cls(v)

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)


@dataclass(frozen=True)
class SubDistribution:
    """Nonnegative vector with total mass at most one (e.g. a partial response)."""

    mass: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.mass, dtype=float)
        if m.ndim != 1:
            raise ValidationError("sub-distribution must be a vector")
        if np.any(m < -1e-12) or m.sum() > 1 + 1e-12:
            raise ValidationError("sub-distribution must be nonnegative with total <= 1")
        object.__setattr__(self, "mass", _frozen(np.clip(m, 0.0, None)))

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    @property
    def size(self) -> int:
        return int(self.mass.size)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.mass, dtype=dtype)


@dataclass(frozen=True)
class Channel:
    """Row-stochastic matrix ``W(y|x)`` with rows indexed by the input."""

    matrix: np.ndarray
    input_labels: tuple[str, ...] | None = None
    output_labels: tuple[str, ...] | None = None
    name: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.size == 0:
            raise ValidationError("channel matrix must be a non-empty 2-D array")
        rows = []
        for i, row in enumerate(m):
            rows.append(_normalize(row, f"row {i}"))
        object.__setattr__(self, "matrix", _frozen(np.vstack(rows)))
        for labels, k in ((self.input_labels, m.shape[0]), (self.output_labels, m.shape[1])):
            if labels is not None and len(labels) != k:
                raise ValidationError("label count does not match channel dimensions")

    @property
    def input_size(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def output_size(self) -> int:
        return int(self.matrix.shape[1])

    def row(self, x: int) -> np.ndarray:
        return self.matrix[x]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass(frozen=True)
class JointDistribution:
    """Joint law on ``X x Y``; houses both ``P x W`` and ``P x Q``."""

    mass: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.mass, dtype=float)
        if m.ndim != 2 or np.any(m < 0) or abs(m.sum() - 1.0) > 1e-12:
            raise ValidationError("joint distribution must be a nonnegative matrix summing to 1")
        object.__setattr__(self, "mass", _frozen(m))

    def marginal_x(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    def marginal_y(self) -> np.ndarray:
        return self.mass.sum(axis=0)

    def flat(self) -> np.ndarray:
        return self.mass.ravel()


@dataclass(frozen=True)
class MType:
    """Distribution whose entries are integer multiples of ``1/denominator``."""

    counts: tuple[int, ...]
    denominator: int

    def __post_init__(self) -> None:
        if self.denominator < 1:
            raise ValidationError("M-type denominator must be >= 1")
        if any(c < 0 for c in self.counts) or sum(self.counts) != self.denominator:
            raise ValidationError("M-type counts must be nonnegative and sum to M")

    @classmethod
    def from_samples(cls, samples: ArrayLike, k: int) -> "MType":
        s = np.asarray(samples, dtype=int)
        counts = np.bincount(s, minlength=k)
        return cls(tuple(int(c) for c in counts), int(s.size))

    def distribution(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.denominator


ProbLike = Union[Distribution, ArrayLike]
ChannelLike = Union[Channel, ArrayLike]


def as_distribution(p: ProbLike) -> Distribution:
    return p if isinstance(p, Distribution) else Distribution(np.asarray(p, dtype=float))


def as_channel(w: ChannelLike) -> Channel:
    return w if isinstance(w, Channel) else Channel(np.asarray(w, dtype=float))


def probs(p: ProbLike) -> np.ndarray:
    """Validated probability vector as a plain array."""
    return as_distribution(p).probs


# ---------------------------------------------------------------------------
# elementary operations


def output_distribution(p: ProbLike, w: ChannelLike) -> Distribution:
    """Output law ``PW(y) = sum_x P(x) W(y|x)``."""
    pv, wc = probs(p), as_channel(w)
    if pv.size != wc.input_size:
        raise ValidationError(
            f"input distribution has size {pv.size}, channel expects {wc.input_size}"
        )
    return Distribution(pv @ wc.matrix)


def joint(p: ProbLike, q_or_w: Union[Channel, Distribution, ArrayLike]) -> JointDistribution:
    """``P x W`` when given a channel (or 2-D array), ``P x Q`` for a distribution."""
    pv = probs(p)
    arr = q_or_w.matrix if isinstance(q_or_w, Channel) else np.asarray(q_or_w, dtype=float)
    if isinstance(q_or_w, Channel) or arr.ndim == 2:
        wc = as_channel(q_or_w)
        if wc.input_size != pv.size:
            raise ValidationError("input distribution and channel sizes differ")
        return JointDistribution(pv[:, None] * wc.matrix)
    qv = probs(q_or_w)
    return JointDistribution(np.outer(pv, qv))


def variational_distance(a: ArrayLike, b: ArrayLike) -> float:
    """``d(a, b) = 1/2 sum |a - b|``; accepts (sub-)distributions."""
    av = np.asarray(a, dtype=float).ravel()
    bv = np.asarray(b, dtype=float).ravel()
    if av.shape != bv.shape:
        raise ValidationError(f"alphabet sizes differ: {av.size} vs {bv.size}")
    return 0.5 * float(np.abs(av - bv).sum())


def product_channel(w: ChannelLike, n: int, cap: int = MATERIALIZATION_CAP) -> Channel:
    """Memoryless extension ``W^n``.

    Input and output sequences are indexed lexicographically with the first
    letter most significant, i.e. ``x^n -> sum_i x_i |X|^(n-1-i)``.
    """
    wc = as_channel(w)
    if n < 1:
        raise DomainError("blocklength n must be >= 1")
    entries = (wc.input_size * wc.output_size) ** n
    if entries > cap:
        raise ValidationError(
            f"W^{n} has {entries} entries, above the materialization cap {cap}; "
            "use the per-letter (implicit) interfaces such as spectrum_cdf instead"
        )
    m = wc.matrix
    for _ in range(n - 1):
        m = np.kron(m, wc.matrix)
    return Channel(m)


def sequences(k: int, n: int) -> list[tuple[int, ...]]:
    """All length-``n`` words over ``range(k)`` in product-channel index order."""
    return list(itertools.product(range(k), repeat=n))


# ---------------------------------------------------------------------------
# log-ratio conventions


def log_ratio(num: ArrayLike, den: ArrayLike) -> np.ndarray:
    """Elementwise ``log(num/den)`` with ``log(0/q) = -inf`` and ``log(p/0) = +inf``.

    ``0/0`` is returned as NaN; callers drop such outcomes.
    """
    a = np.asarray(num, dtype=float)
    b = np.asarray(den, dtype=float)
    out = np.full(np.broadcast(a, b).shape, np.nan)
    a, b = np.broadcast_arrays(a, b)
    both = (a > 0) & (b > 0)
    out[both] = np.log(a[both]) - np.log(b[both])
    out[(a > 0) & (b <= 0)] = np.inf
    out[(a <= 0) & (b > 0)] = -np.inf
    return out


def kl_divergence(p: ArrayLike, q: ArrayLike) -> float:
    """``D(p||q)`` in nats with ``0 log 0/q = 0`` and ``p log p/0 = +inf``."""
    pv = np.asarray(p, dtype=float)
    qv = np.asarray(q, dtype=float)
    s = pv > 0
    if np.any(qv[s] <= 0):
        return math.inf
    return float(np.sum(pv[s] * (np.log(pv[s]) - np.log(qv[s]))))


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


# ---------------------------------------------------------------------------
# named channels and file formats


def bsc(p: float) -> Channel:
    return Channel(np.array([[1 - p, p], [p, 1 - p]]), name=f"bsc:{p}")


def bec(p: float) -> Channel:
    return Channel(np.array([[1 - p, p, 0.0], [0.0, p, 1 - p]]), name=f"bec:{p}")


def identity_channel(k: int) -> Channel:
    return Channel(np.eye(k), name=f"identity:{k}")


def useless_channel(k: int, m: int) -> Channel:
    return Channel(np.full((k, m), 1.0 / m), name=f"useless:{k}x{m}")


def named_channel(spec: str) -> Channel:
    """Parse ``bsc:<p>``, ``bec:<p>``, ``identity:<k>`` or ``useless:<k>x<m>``."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "bsc":
            return bsc(float(arg))
        if kind == "bec":
            return bec(float(arg))
        if kind == "identity":
            return identity_channel(int(arg))
        if kind == "useless":
            k, m = arg.lower().split("x")
            return useless_channel(int(k), int(m))
    except ValueError as exc:
        raise ValidationError(f"bad channel spec {spec!r}: {exc}") from None
    raise ValidationError(f"unknown channel spec {spec!r}")


def named_distribution(spec: str) -> Distribution:
    """Parse ``uniform:<k>`` or ``point:<k>:<i>``."""
    parts = spec.split(":")
    try:
        if parts[0] == "uniform" and len(parts) == 2:
            return Distribution.uniform(int(parts[1]))
        if parts[0] == "point" and len(parts) == 3:
            return Distribution.point(int(parts[1]), int(parts[2]))
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"bad distribution spec {spec!r}: {exc}") from None
    raise ValidationError(f"unknown distribution spec {spec!r}")


def _read_csv_rows(text: str) -> list[list[float]]:
    rows = []
    for rec in csv.reader(io.StringIO(text)):
        rec = [c.strip() for c in rec if c.strip()]
        if not rec or rec[0].startswith("#"):
            continue
        rows.append([float(c) for c in rec])
    return rows


def channel_from_json(obj: dict) -> Channel:
    if "rows" not in obj:
        raise ValidationError("channel JSON needs a 'rows' field")
    il = obj.get("input_labels")
    ol = obj.get("output_labels")
    return Channel(
        np.asarray(obj["rows"], dtype=float),
        input_labels=tuple(map(str, il)) if il else None,
        output_labels=tuple(map(str, ol)) if ol else None,
    )


def channel_to_json(w: Channel) -> dict:
    return {
        "input_labels": list(w.input_labels) if w.input_labels else [str(i) for i in range(w.input_size)],
        "output_labels": list(w.output_labels) if w.output_labels else [str(i) for i in range(w.output_size)],
        "rows": w.matrix.tolist(),
    }


def load_channel(source: str | Path) -> Channel:
    """Channel from a named spec, a JSON file or a CSV file (one row per input)."""
    s = str(source)
    if ":" in s and not Path(s).exists():
        return named_channel(s)
    path = Path(s)
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        return Channel(np.asarray(_read_csv_rows(text), dtype=float))
    return channel_from_json(json.loads(text))


def load_distribution(source: str | Path) -> Distribution:
    """Distribution from a named spec, JSON (list or ``{"probs": [...]}``) or CSV."""
    s = str(source)
    if ":" in s and not Path(s).exists():
        return named_distribution(s)
    path = Path(s)
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        rows = _read_csv_rows(text)
        flat = [v for r in rows for v in r]
        return Distribution(np.asarray(flat))
    obj = json.loads(text)
    if isinstance(obj, dict):
        obj = obj.get("probs", obj.get("p"))
    if not isinstance(obj, Sequence):
        raise ValidationError("distribution JSON must be a list or have a 'probs' field")
    return Distribution(np.asarray(obj, dtype=float))


def random_distribution(rng: np.random.Generator, k: int, sparse: float = 0.0) -> Distribution:
    """Dirichlet(1) sample; with probability ``sparse`` each entry is zeroed (keeping one)."""
    v = rng.dirichlet(np.ones(k))
    if sparse > 0:
        keep = rng.random(k) >= sparse
        keep[rng.integers(k)] = True
        v = np.where(keep, v, 0.0)
        v = v / v.sum()
    return Distribution(v)


def random_channel(rng: np.random.Generator, k: int, m: int, sparse: float = 0.0) -> Channel:
    return Channel(np.vstack([random_distribution(rng, m, sparse).probs for _ in range(k)]))
