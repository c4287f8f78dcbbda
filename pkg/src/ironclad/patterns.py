"""Greedy decomposition of honest strings into sigma1..sigma4 and the
empirical consensus rate built on it."""

from __future__ import annotations

from typing import Iterable, Iterator, NamedTuple

import numpy as np

from . import kernels
from ._pykernels import C_PREAMBLE, C_W_S0_S2, C_W_S0_S4, C_W_S1_S4
from .errors import DomainError
from .params import HONEST_ALPHABET, ProtocolParams, derive_rates, iter_honest_chunks


class Pattern(NamedTuple):
    kind: int
    start: int
    length: int
    truncated: bool = False


class PatternSequence(NamedTuple):
    patterns: list[Pattern]
    preamble: int

    def total_length(self) -> int:
        return self.preamble + sum(p.length for p in self.patterns)


def _as_symbols(honest) -> np.ndarray:
    if isinstance(honest, str):
        out = np.empty(len(honest), dtype=np.uint8)
        for i, ch in enumerate(honest):
            code = HONEST_ALPHABET.find(ch)
            if code < 0:
                raise ValueError(f"malformed honest symbol {ch!r} at slot {i}")
            out[i] = code
        return out
    arr = np.asarray(honest)
    if arr.ndim != 1:
        raise ValueError("honest string must be one-dimensional")
    if arr.size and (arr.min() < 0 or arr.max() > 2):
        bad = int(np.flatnonzero((arr < 0) | (arr > 2))[0])
        raise ValueError(f"malformed honest symbol {arr[bad]!r} at slot {bad}")
    return arr.astype(np.uint8, copy=False)


def iter_patterns(honest, delta: int) -> Iterator[Pattern]:
    """Yield the greedy decomposition one pattern at a time.

    Leading zeros are skipped (see ``decompose_patterns`` for the preamble).
    The last pattern is cut by the end of the data and is flagged
    ``truncated``; it is classified by what was consumed.
    """
    sym = _as_symbols(honest)
    n = sym.shape[0]
    nz = np.flatnonzero(sym)
    if nz.size == 0:
        return
    i = int(nz[0])
    # positions of the next non-zero symbol and the next iron symbol
    iron = np.flatnonzero(sym == 2)
    while i < n:
        start = i
        if sym[i] == 1:
            k = np.searchsorted(nz, i, side="right")
            nxt = int(nz[k]) if k < nz.size else n
            run = nxt - i - 1
            kind = 1 if run < delta else 2
            yield Pattern(kind, start, nxt - start, nxt == n)
            i = nxt
            continue
        k = np.searchsorted(iron, i, side="right")
        nxt_iron = int(iron[k]) if k < iron.size else n
        if nxt_iron - i <= delta and nxt_iron < n:
            yield Pattern(3, start, nxt_iron - start, False)
            i = nxt_iron
            continue
        window_end = i + 1 + delta
        if window_end > n:
            yield Pattern(3, start, n - start, True)
            return
        k = np.searchsorted(nz, window_end - 1, side="right")
        nxt = int(nz[k]) if k < nz.size else n
        yield Pattern(4, start, nxt - start, nxt == n)
        i = nxt


def decompose_patterns(honest, delta: int) -> PatternSequence:
    """Split an honest string into its preamble and greedy pattern sequence.

    >>> seq = decompose_patterns("h00Hh000h0", 2)
    >>> [(p.kind, p.length) for p in seq.patterns]
    [(2, 3), (4, 5), (1, 2)]
    """
    if delta < 1:
        raise DomainError("delta must be >= 1")
    sym = _as_symbols(honest)
    nz = np.flatnonzero(sym)
    preamble = int(nz[0]) if nz.size else int(sym.shape[0])
    return PatternSequence(list(iter_patterns(sym, delta)), preamble)


def pattern_text(honest, pattern: Pattern) -> str:
    sym = _as_symbols(honest)
    return "".join(HONEST_ALPHABET[s] for s in sym[pattern.start : pattern.start + pattern.length].tolist())


class AlphaScanner:
    """Incremental consensus-rate estimator over a stream of honest chunks.

    Counts only completed patterns, so splitting the stream at arbitrary
    points gives the same totals as scanning it in one piece.
    """

    def __init__(self, delta: int, theta: float, backend=None):
        self.delta = int(delta)
        self.theta = float(theta)
        self._scan = np.zeros(8, dtype=np.int64)
        self.counts = np.zeros(8, dtype=np.int64)
        self.length = 0
        self._kern = backend if backend is not None else kernels

    def feed(self, chunk: np.ndarray) -> None:
        chunk = np.ascontiguousarray(chunk, dtype=np.uint8)
        self._kern.alpha_scan(chunk, self.delta, self._scan, self.counts)
        self.length += chunk.shape[0]

    def pattern_counts(self) -> tuple[int, int, int, int]:
        return tuple(int(x) for x in self.counts[:4])

    def weight(self) -> float:
        c = self.counts
        return float(c[C_W_S0_S2]) + self.theta * float(c[C_W_S0_S4] + c[C_W_S1_S4])

    def preamble(self) -> int:
        return int(self.counts[C_PREAMBLE])

    def alpha(self) -> float:
        return self.weight() / self.length if self.length else 0.0


def empirical_alpha(honest, params: ProtocolParams) -> float:
    """Convergence weight per slot measured on a finite honest string."""
    sym = _as_symbols(honest)
    if sym.shape[0] < params.delta:
        raise DomainError(f"string of {sym.shape[0]} slots is shorter than delta={params.delta}")
    scanner = AlphaScanner(params.delta, params.theta)
    scanner.feed(sym)
    return scanner.alpha()


def empirical_alpha_stream(chunks: Iterable[np.ndarray], params: ProtocolParams) -> float:
    scanner = AlphaScanner(params.delta, params.theta)
    for chunk in chunks:
        scanner.feed(chunk)
    return scanner.alpha()


def empirical_alpha_sampled(params: ProtocolParams, length: int, seed: int, chunk: int = 1 << 22) -> float:
    """Sample an honest string of ``length`` slots and estimate alpha without materialising it."""
    rates = derive_rates(params)
    return empirical_alpha_stream(iter_honest_chunks(rates, length, seed, chunk), params)
