"""Monte-Carlo engine for the two-dimensional attack walk.

``X`` counts regular-block lead of the honest chain, ``Y`` its iron-block
lead. Each step is one block: honest regular (+X), adversary regular (-X),
honest iron (+Y) or adversary iron (-Y). An attack is abandoned once the
honest weight lead ``X + theta*Y`` reaches the threshold; the fork length is
the number of adversary steps taken before that.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import InvalidParameterError
from .rng import Xoshiro256, derive_seed

DEFAULT_CHUNK = 1 << 16
HISTOGRAM_COLUMNS = ("length", "count", "probability", "tail")
SUMMARY_COLUMNS = ("theta", "q", "q_tilde", "gamma", "threshold", "runs", "mean", "p95")


class InsufficientSamplesError(ValueError):
    """A tail ran out of samples before the curves crossed."""


@dataclass(frozen=True)
class WalkConfig:
    q: float
    q_tilde: float
    gamma: float = 0.5
    theta: float = 1.0
    threshold: float = 2.0
    runs: int = 1_000_000
    seed: int = 0
    step_cap: int = 100_000
    renormalize: bool = True

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise InvalidParameterError("q", f"must lie in [0, 1], got {self.q!r}")
        if not 0.0 <= self.q_tilde <= 1.0:
            raise InvalidParameterError("q_tilde", f"must lie in [0, 1], got {self.q_tilde!r}")
        if not (self.gamma > 0.0) or math.isinf(self.gamma):
            raise InvalidParameterError("gamma", f"must be a finite positive number, got {self.gamma!r}")
        if not (self.theta >= 1.0) or math.isinf(self.theta):
            raise InvalidParameterError("theta", f"must be a finite real >= 1, got {self.theta!r}")
        if not (self.threshold > 0.0) or math.isinf(self.threshold):
            raise InvalidParameterError("threshold", f"must be a finite positive number, got {self.threshold!r}")
        if int(self.runs) != self.runs or self.runs < 1:
            raise InvalidParameterError("runs", f"must be a positive integer, got {self.runs!r}")
        if int(self.step_cap) != self.step_cap or self.step_cap < 1:
            raise InvalidParameterError("step_cap", f"must be a positive integer, got {self.step_cap!r}")

    def replace(self, **changes) -> "WalkConfig":
        return replace(self, **changes)


@dataclass
class WalkOutcome:
    """Fork-length histogram of the completed walks.

    ``histogram[l]`` counts walks with fork length ``l``. Walks stopped by the
    step cap are not in the histogram; they are counted in ``censored``.
    """

    config: WalkConfig
    histogram: np.ndarray
    censored: int = 0
    total_steps: int = 0
    _tail: np.ndarray | None = field(default=None, repr=False)

    @property
    def runs(self) -> int:
        return int(self.histogram.sum())

    @property
    def mean(self) -> float:
        n = self.runs
        if n == 0:
            return math.nan
        return float(np.dot(np.arange(self.histogram.shape[0], dtype=np.float64), self.histogram) / n)

    @property
    def mean_steps(self) -> float:
        total = self.runs + self.censored
        return self.total_steps / total if total else math.nan

    def quantile(self, level: float) -> int:
        """Smallest length whose empirical CDF reaches ``level``."""
        cdf = np.cumsum(self.histogram)
        return int(np.searchsorted(cdf, level * cdf[-1], side="left"))

    @property
    def p95(self) -> int:
        return self.quantile(0.95)

    def tail(self) -> np.ndarray:
        """``tail()[l]`` is the fraction of walks with fork length >= l."""
        if self._tail is None:
            h = self.histogram.astype(np.float64)
            self._tail = np.cumsum(h[::-1])[::-1] / max(self.runs, 1)
        return self._tail

    def tail_at(self, length: int) -> float:
        t = self.tail()
        return float(t[length]) if 0 <= length < t.shape[0] else 0.0

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTOGRAM_COLUMNS)
        n = max(self.runs, 1)
        tail = self.tail()
        for length in np.flatnonzero(self.histogram).tolist():
            c = int(self.histogram[length])
            w.writerow([length, c, repr(c / n), repr(float(tail[length]))])
        return buf.getvalue()

    def summary_row(self) -> dict:
        c = self.config
        return {
            "theta": c.theta,
            "q": c.q,
            "q_tilde": c.q_tilde,
            "gamma": c.gamma,
            "threshold": c.threshold,
            "runs": self.runs,
            "mean": self.mean,
            "p95": self.p95,
        }


def step_distribution(config: WalkConfig) -> tuple[float, float, float, float]:
    """Probabilities of (honest regular, adversary regular, honest iron, adversary iron).

    >>> step_distribution(WalkConfig(q=0.0, q_tilde=0.0, gamma=0.5))
    (0.6, 0.4, 0.0, 0.0)
    """
    g = config.gamma
    raw = ((1 + g) * (1 - config.q_tilde), 1 - config.q, (1 + g) * config.q_tilde, config.q)
    total = sum(raw) if config.renormalize else 2.0 + g
    return tuple(x / total for x in raw)


def _cut_points(config: WalkConfig) -> np.ndarray:
    probs = step_distribution(config)
    return np.array(np.cumsum(probs[:3]), dtype=np.float64)


def _run_chunk(config: WalkConfig, chunk_index: int, runs: int, backend: str | None = None) -> tuple[np.ndarray, int, int]:
    kern = kernels if backend is None else kernels.get_backend(backend)
    state = np.array(Xoshiro256(derive_seed(config.seed, chunk_index)).state(), dtype=np.uint64)
    hist = np.zeros(config.step_cap + 1, dtype=np.int64)
    censored, steps = kern.walk_batch(state, runs, _cut_points(config), float(config.theta), float(config.threshold), int(config.step_cap), hist)
    return hist, int(censored), int(steps)


def _chunks(runs: int, chunk: int) -> list[tuple[int, int]]:
    return [(i, min(chunk, runs - i * chunk)) for i in range((runs + chunk - 1) // chunk)]


def run_walks(config: WalkConfig, jobs: int = 1, chunk: int = DEFAULT_CHUNK, backend: str | None = None) -> WalkOutcome:
    """Simulate ``config.runs`` attack walks.

    Runs are split into fixed chunks, each drawn from its own substream of the
    seed, so the outcome does not depend on ``jobs``.
    """
    if chunk < 1:
        raise ValueError("chunk must be >= 1")
    parts = _chunks(int(config.runs), chunk)
    hist = np.zeros(config.step_cap + 1, dtype=np.int64)
    censored = 0
    steps = 0
    if jobs > 1 and len(parts) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = pool.map(_run_chunk, [config] * len(parts), [i for i, _ in parts], [n for _, n in parts], [backend] * len(parts))
            for h, c, s in results:
                hist += h
                censored += c
                steps += s
    else:
        for i, n in parts:
            h, c, s = _run_chunk(config, i, n, backend)
            hist += h
            censored += c
            steps += s
    last = int(np.flatnonzero(hist)[-1]) + 1 if hist.any() else 1
    return WalkOutcome(config, hist[:last].copy(), censored, steps)


def tail_crossover(a: WalkOutcome, b: WalkOutcome) -> tuple[float, float] | None:
    """First length at which the tails of ``a`` and ``b`` change order.

    The crossing is located by linear interpolation of the log-tail
    difference between neighbouring lengths; the returned probability is the
    interpolated tail of ``a``. Returns ``None`` when both tails end without
    crossing. Identical tails cross at the first bin.
    """
    n = max(a.tail().shape[0], b.tail().shape[0])
    sign = 0
    prev = None
    for length in range(n):
        pa, pb = a.tail_at(length), b.tail_at(length)
        if pa == 0.0 and pb == 0.0:
            break
        if pa == 0.0 or pb == 0.0:
            raise InsufficientSamplesError(f"tail reaches zero at length {length} before the curves cross")
        d = math.log(pa) - math.log(pb)
        s = (d > 0) - (d < 0)
        if sign == 0:
            sign = s
        elif s == 0:
            return float(length), pa
        elif s != sign:
            l0, d0, p0 = prev
            frac = d0 / (d0 - d)
            return l0 + frac, math.exp(math.log(p0) + frac * (math.log(pa) - math.log(p0)))
        prev = (length, d, pa)
    if sign == 0:
        return 0.0, a.tail_at(0)
    return None


def summary_csv(outcomes) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    w.writeheader()
    for out in outcomes:
        row = out.summary_row()
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
