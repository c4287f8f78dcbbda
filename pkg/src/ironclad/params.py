"""Parameter space, derived per-slot rates, and characteristic strings."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import kernels
from .errors import InvalidParameterError
from .rng import Xoshiro256, derive_seed

ZERO, REGULAR, IRON = 0, 1, 2
HONEST_ALPHABET = "0hH"
ADVERSARY_ALPHABET = "0aA"


def pow1m(x: float, n: float) -> float:
    """``(1 - x) ** n`` evaluated as ``exp(n * log1p(-x))``.

    This is the only way delay-sized powers are computed anywhere in the
    package; repeated multiplication underflows for n around 1e13.
    """
    if x >= 1.0:
        return 0.0 if n > 0 else 1.0
    return math.exp(n * math.log1p(-x))


@dataclass(frozen=True)
class ProtocolParams:
    """Mining model parameters.

    ``p`` is the per-slot probability that some block is mined, ``rho`` the
    adversarial share of mining power, ``delta`` the delay bound in slots,
    ``q`` the iron-block probability and ``theta`` the iron weight.
    """

    p: float
    rho: float
    delta: int
    q: float
    theta: float

    def __post_init__(self):
        validate_params(self)

    @property
    def p_h(self) -> float:
        return (1.0 - self.rho) * self.p

    @property
    def p_a(self) -> float:
        return self.rho * self.p

    def replace(self, **changes) -> "ProtocolParams":
        fields = dict(p=self.p, rho=self.rho, delta=self.delta, q=self.q, theta=self.theta)
        fields.update(changes)
        return ProtocolParams(**fields)


def validate_params(params: ProtocolParams) -> None:
    if not (0.0 < params.p < 1.0):
        raise InvalidParameterError("p", f"must lie in (0, 1), got {params.p!r}")
    if not (0.0 <= params.rho < 1.0):
        raise InvalidParameterError("rho", f"must lie in [0, 1), got {params.rho!r}")
    if isinstance(params.delta, bool) or int(params.delta) != params.delta or params.delta < 1:
        raise InvalidParameterError("delta", f"must be a positive integer, got {params.delta!r}")
    if params.delta >= 1 << 64:
        raise InvalidParameterError("delta", "must fit in 64 bits")
    if not (0.0 <= params.q <= 1.0):
        raise InvalidParameterError("q", f"must lie in [0, 1], got {params.q!r}")
    if not (params.theta >= 1.0) or math.isinf(params.theta):
        raise InvalidParameterError("theta", f"must be a finite real >= 1, got {params.theta!r}")


@dataclass(frozen=True)
class DerivedRates:
    p_h: float
    p_a: float
    q_h: float
    q_H: float
    q_a: float
    q_A: float
    w_bar: float
    q: float
    theta: float


def derive_rates(params: ProtocolParams) -> DerivedRates:
    """Per-slot block probabilities for each party and block type."""
    validate_params(params)
    q = params.q
    p_h = (1.0 - params.rho) * params.p
    p_a = params.rho * params.p
    q_H = q * p_h
    q_A = q * p_a
    # complements taken by subtraction so the splits add back exactly
    q_h = p_h - q_H
    q_a = p_a - q_A
    w_bar = 1.0 - q + q * params.theta
    return DerivedRates(p_h, p_a, q_h, q_H, q_a, q_A, w_bar, q, params.theta)


@dataclass(frozen=True, eq=False)
class CharacteristicString:
    """Per-slot mining outcomes; symbols are 0 (none), 1 (regular), 2 (iron)."""

    honest: np.ndarray
    adversary: np.ndarray

    def __post_init__(self):
        if self.honest.shape != self.adversary.shape or self.honest.ndim != 1:
            raise ValueError("honest and adversary streams must be 1-D and equally long")

    def __len__(self) -> int:
        return int(self.honest.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CharacteristicString):
            return NotImplemented
        return np.array_equal(self.honest, other.honest) and np.array_equal(self.adversary, other.adversary)

    @classmethod
    def from_text(cls, honest: str, adversary: str | None = None) -> "CharacteristicString":
        """Build from text such as ``"hh0H"`` and ``"00a0"``."""
        if adversary is None:
            adversary = "0" * len(honest)
        return cls(_decode(honest, HONEST_ALPHABET), _decode(adversary, ADVERSARY_ALPHABET))

    def honest_text(self) -> str:
        return "".join(HONEST_ALPHABET[s] for s in self.honest.tolist())

    def adversary_text(self) -> str:
        return "".join(ADVERSARY_ALPHABET[s] for s in self.adversary.tolist())

    def to_bytes(self) -> bytes:
        """Compact form: magic, length, then 2 bits per slot for each party."""
        return b"ICS1" + struct.pack("<Q", len(self)) + _pack2(self.honest) + _pack2(self.adversary)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CharacteristicString":
        if data[:4] != b"ICS1":
            raise ValueError("not a characteristic-string blob")
        (n,) = struct.unpack("<Q", data[4:12])
        nb = (n + 3) // 4
        honest = _unpack2(data[12 : 12 + nb], n)
        adversary = _unpack2(data[12 + nb : 12 + 2 * nb], n)
        if len(data) != 12 + 2 * nb or honest.max(initial=0) > 2 or adversary.max(initial=0) > 2:
            raise ValueError("corrupt characteristic-string blob")
        return cls(honest, adversary)


def _decode(text: str, alphabet: str) -> np.ndarray:
    out = np.empty(len(text), dtype=np.uint8)
    for i, ch in enumerate(text):
        code = alphabet.find(ch)
        if code < 0:
            raise ValueError(f"symbol {ch!r} at slot {i} not in {alphabet!r}")
        out[i] = code
    return out


def _pack2(sym: np.ndarray) -> bytes:
    n = sym.shape[0]
    padded = np.zeros((n + 3) // 4 * 4, dtype=np.uint8)
    padded[:n] = sym
    quads = padded.reshape(-1, 4)
    packed = quads[:, 0] | (quads[:, 1] << 2) | (quads[:, 2] << 4) | (quads[:, 3] << 6)
    return packed.astype(np.uint8).tobytes()


def _unpack2(data: bytes, n: int) -> np.ndarray:
    b = np.frombuffer(data, dtype=np.uint8)
    quads = np.stack([(b >> s) & 3 for s in (0, 2, 4, 6)], axis=1)
    return quads.reshape(-1)[:n].astype(np.uint8)


def _stream_state(seed: int, party: int) -> np.ndarray:
    return np.array(Xoshiro256(derive_seed(seed, party)).state(), dtype=np.uint64)


def sample_string(rates: DerivedRates, length: int, seed: int) -> CharacteristicString:
    """Draw a characteristic string of ``length`` slots.

    Honest and adversarial streams come from independent substreams of
    ``seed`` (keys 0 and 1), so the honest stream does not depend on the
    adversary's rates.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    try:
        honest = np.empty(length, dtype=np.uint8)
        adversary = np.empty(length, dtype=np.uint8)
    except MemoryError as exc:
        raise MemoryError(f"cannot allocate a {length}-slot string; use iter_honest_chunks") from exc
    kernels.fill_symbols(_stream_state(seed, 0), honest, rates.q_h, rates.p_h)
    kernels.fill_symbols(_stream_state(seed, 1), adversary, rates.q_a, rates.p_a)
    return CharacteristicString(honest, adversary)


def iter_honest_chunks(rates: DerivedRates, length: int, seed: int, chunk: int = 1 << 22) -> Iterator[np.ndarray]:
    """Stream the honest symbols of ``sample_string`` in chunks.

    Concatenating the chunks gives exactly ``sample_string(...).honest``.
    """
    state = _stream_state(seed, 0)
    remaining = length
    while remaining > 0:
        n = min(chunk, remaining)
        buf = np.empty(n, dtype=np.uint8)
        kernels.fill_symbols(state, buf, rates.q_h, rates.p_h)
        remaining -= n
        yield buf
