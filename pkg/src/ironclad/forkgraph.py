"""Labelled block trees with weighted fork choice.

Weights are kept as exact integers: theta is represented as a fraction
``num/den`` with ``den <= 1000``, a regular block counts ``den`` units and an
iron block ``num`` units. Ties are therefore detected exactly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidParameterError

ROOT = 0
TIE_POLICIES = ("first-seen", "adversary-favoring", "lowest-id")
MAX_THETA_DENOMINATOR = 1000


class UnknownParentError(KeyError):
    pass


class LabelOrderError(ValueError):
    pass


def theta_units(theta: float) -> tuple[int, int]:
    """Return ``(iron_units, regular_units)`` for an exact rational theta."""
    frac = Fraction(theta).limit_denominator(MAX_THETA_DENOMINATOR)
    if abs(float(frac) - theta) > 1e-12 * max(1.0, abs(theta)):
        raise InvalidParameterError("theta", f"{theta!r} is not a rational with denominator <= {MAX_THETA_DENOMINATOR}")
    return frac.numerator, frac.denominator


@dataclass(frozen=True)
class Block:
    id: int
    parent: int
    label: int
    honest: bool
    iron: bool
    depth: int
    weight: float


@dataclass(frozen=True)
class Chain:
    """The root path ending at ``leaf``."""

    leaf: int
    weight: float
    length: int
    honest: bool
    policy: str | None = None
    tie_candidates: tuple[int, ...] = ()


class BlockTree:
    """A rooted tree of blocks. Block ids are assigned in insertion order; the root is 0."""

    def __init__(self, theta: float = 1.0):
        self.theta = float(theta)
        self.iron_units, self.unit = theta_units(self.theta)
        self.parent: list[int] = [-1]
        self.label: list[int] = [0]
        self.honest: list[bool] = [True]
        self.iron: list[bool] = [False]
        self.depth: list[int] = [0]
        self.wunits: list[int] = [0]
        self.children: list[list[int]] = [[]]

    def __len__(self) -> int:
        return len(self.parent)

    def add_block(self, parent: int, label: int, honest: bool, iron: bool = False) -> int:
        if not 0 <= parent < len(self.parent):
            raise UnknownParentError(parent)
        if label <= self.label[parent]:
            raise LabelOrderError(f"label {label} must exceed parent label {self.label[parent]}")
        bid = len(self.parent)
        self.parent.append(parent)
        self.label.append(label)
        self.honest.append(bool(honest))
        self.iron.append(bool(iron))
        self.depth.append(self.depth[parent] + 1)
        self.wunits.append(self.wunits[parent] + (self.iron_units if iron else self.unit))
        self.children.append([])
        self.children[parent].append(bid)
        return bid

    def block(self, bid: int) -> Block:
        return Block(bid, self.parent[bid], self.label[bid], self.honest[bid], self.iron[bid], self.depth[bid], self.weight(bid))

    def blocks(self) -> Iterable[Block]:
        return (self.block(b) for b in range(len(self.parent)))

    def weight(self, bid: int) -> float:
        """Chain weight of the root path ending at ``bid`` (the root weighs 0)."""
        return self.wunits[bid] / self.unit

    def block_weight(self, bid: int) -> float:
        if bid == ROOT:
            return 0.0
        return self.theta if self.iron[bid] else 1.0

    def path(self, leaf: int) -> list[int]:
        """Block ids from the root to ``leaf`` inclusive."""
        out = []
        b = leaf
        while b >= 0:
            out.append(b)
            b = self.parent[b]
        out.reverse()
        return out

    def leaves(self) -> list[int]:
        return [b for b, ch in enumerate(self.children) if not ch]

    def chain(self, leaf: int, policy: str | None = None, candidates: tuple[int, ...] = ()) -> Chain:
        return Chain(leaf, self.weight(leaf), self.depth[leaf], self.honest[leaf], policy, candidates)

    def prefers(self, current: int, candidate: int, policy: str = "first-seen") -> bool:
        """Whether a party holding ``current`` switches to ``candidate``."""
        wc, wn = self.wunits[current], self.wunits[candidate]
        if wn != wc:
            return wn > wc
        if candidate == current:
            return False
        if policy == "first-seen":
            return False
        if policy == "adversary-favoring":
            return self.honest[current] and not self.honest[candidate]
        if policy == "lowest-id":
            return candidate < current
        raise ValueError(f"unknown tie policy {policy!r}")

    def heaviest_chain(self, policy: str = "adversary-favoring") -> Chain:
        """Heaviest root path; every tied leaf is listed in ``tie_candidates``."""
        if policy not in TIE_POLICIES:
            raise ValueError(f"unknown tie policy {policy!r}")
        best = max(self.wunits)
        tied = tuple(b for b, w in enumerate(self.wunits) if w == best and not self.children[b])
        pick = tied[0]
        if policy == "adversary-favoring":
            adv = [b for b in tied if not self.honest[b]]
            if adv:
                pick = adv[0]
        return self.chain(pick, policy, tied if len(tied) > 1 else ())

    def longest_chain(self) -> Chain:
        best = max(self.depth)
        pick = next(b for b, d in enumerate(self.depth) if d == best)
        return self.chain(pick)

    def truncate(self, leaf: int, max_label: int) -> int:
        """Last block of the chain ending at ``leaf`` whose label is at most ``max_label``."""
        b = leaf
        while b != ROOT and self.label[b] > max_label:
            b = self.parent[b]
        return b

    def is_ancestor(self, a: int, b: int) -> bool:
        """True if ``a`` lies on the root path of ``b`` (a block is its own ancestor)."""
        da = self.depth[a]
        while self.depth[b] > da:
            b = self.parent[b]
        return a == b

    def lca(self, a: int, b: int) -> int:
        while self.depth[a] > self.depth[b]:
            a = self.parent[a]
        while self.depth[b] > self.depth[a]:
            b = self.parent[b]
        while a != b:
            a, b = self.parent[a], self.parent[b]
        return a

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "parent", "label", "honest", "iron", "weight"])
        for b in range(len(self.parent)):
            w.writerow([b, self.parent[b], self.label[b], int(self.honest[b]), int(self.iron[b]), repr(self.weight(b))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, theta: float) -> "BlockTree":
        tree = cls(theta)
        rows = list(csv.DictReader(io.StringIO(text)))
        for row in rows[1:]:
            if int(row["id"]) != len(tree):
                raise ValueError("tree dump ids must be sequential")
            tree.add_block(int(row["parent"]), int(row["label"]), row["honest"] == "1", row["iron"] == "1")
        return tree


def is_prefix(tree: BlockTree, leaf_a: int, t_a: int, leaf_b: int, k: int) -> bool:
    """Whether chain A held at slot ``t_a``, minus its last ``k`` slots, is a prefix of chain B."""
    return tree.is_ancestor(tree.truncate(leaf_a, t_a - k), leaf_b)


def _euler_intervals(tree: BlockTree) -> tuple[np.ndarray, np.ndarray]:
    """Entry/exit times of a depth-first walk; ``a`` is an ancestor of ``b``
    iff ``tin[a] <= tin[b] and tout[b] <= tout[a]``."""
    n = len(tree)
    tin = np.zeros(n, dtype=np.int64)
    tout = np.zeros(n, dtype=np.int64)
    clock = 0
    stack = [(ROOT, False)]
    while stack:
        b, done = stack.pop()
        if done:
            tout[b] = clock
            clock += 1
            continue
        tin[b] = clock
        clock += 1
        stack.append((b, True))
        stack.extend((c, False) for c in tree.children[b])
    return tin, tout


def common_prefix_violations(tree: BlockTree, views: Sequence[tuple[int, int]], k: int) -> int:
    """Count ordered pairs of views ``(leaf, slot)`` with ``t1 <= t2`` that break the k-prefix rule."""
    if len(views) < 2:
        return 0
    tin, tout = _euler_intervals(tree)
    cut = np.array([tree.truncate(leaf, t - k) for leaf, t in views])
    leaf = np.array([v[0] for v in views])
    times = np.array([v[1] for v in views])
    prefix_ok = (tin[cut][:, None] <= tin[leaf][None, :]) & (tout[leaf][None, :] <= tout[cut][:, None])
    ordered = times[:, None] <= times[None, :]
    np.fill_diagonal(ordered, False)
    return int(np.count_nonzero(ordered & ~prefix_ok))


@dataclass
class ForkReport:
    ok: bool
    axiom: str | None = None
    message: str = ""
    witnesses: tuple = field(default_factory=tuple)

    def __bool__(self) -> bool:
        return self.ok


def _symbol_map(s) -> dict[int, int]:
    """Non-zero slots of a string given as text, a sequence, or a slot->symbol mapping (slots from 1)."""
    if isinstance(s, Mapping):
        return {int(t): int(v) for t, v in s.items() if v}
    if isinstance(s, str):
        codes = {"0": 0, "h": 1, "a": 1, "H": 2, "A": 2}
        return {i + 1: codes[ch] for i, ch in enumerate(s) if ch != "0"}
    return {i + 1: int(v) for i, v in enumerate(s) if v}


def validate_delta_fork(tree: BlockTree, honest, adversary, delta: int, measure: str = "depth") -> ForkReport:
    """Check the four fork axioms and report the first violation.

    ``measure`` selects what A4 compares: ``"depth"`` (block count) or
    ``"weight"`` (chain weight), the latter being the form a heaviest-chain
    honest majority actually guarantees once theta > 1.
    """
    if measure not in ("depth", "weight"):
        raise ValueError(f"unknown measure {measure!r}")
    # A1
    if tree.label[ROOT] != 0 or not tree.honest[ROOT]:
        return ForkReport(False, "A1", "root must be honest with label 0", (ROOT,))
    # A2
    for b in range(1, len(tree)):
        if tree.label[b] <= tree.label[tree.parent[b]]:
            return ForkReport(False, "A2", "labels must increase along paths", (tree.parent[b], b))
    # A3
    w = _symbol_map(honest)
    wa = _symbol_map(adversary)
    by_label: dict[int, list[int]] = {}
    for b in range(1, len(tree)):
        by_label.setdefault(tree.label[b], []).append(b)
    for t, bs in by_label.items():
        hon = [b for b in bs if tree.honest[b]]
        adv = [b for b in bs if not tree.honest[b]]
        if len(hon) > 1 or len(adv) > 1:
            return ForkReport(False, "A3", f"more than one block per party at label {t}", tuple(bs))
        for b in hon:
            sym = w.get(t, 0)
            if sym == 0 or (sym == 2) != tree.iron[b]:
                return ForkReport(False, "A3", f"honest block {b} does not match honest symbol at slot {t}", (b, t))
        for b in adv:
            sym = wa.get(t, 0)
            if sym == 0 or (sym == 2) != tree.iron[b]:
                return ForkReport(False, "A3", f"adversarial block {b} does not match adversarial symbol at slot {t}", (b, t))
    for t in w:
        n = len(by_label.get(t, ()))
        if wa.get(t, 0) == 0 and n != 1:
            return ForkReport(False, "A3", f"slot {t} needs exactly one block, found {n}", (t,))
        if wa.get(t, 0) != 0 and n not in (1, 2):
            return ForkReport(False, "A3", f"slot {t} needs one or two blocks, found {n}", (t,))
    # A4: each honest block must be at least as deep as every honest block delta slots older
    key = tree.depth if measure == "depth" else tree.wunits
    honest_blocks = sorted((tree.label[b], b) for b in range(len(tree)) if tree.honest[b])
    j = 0
    best = -1
    best_block = -1
    for lb2, b2 in honest_blocks:
        while j < len(honest_blocks) and honest_blocks[j][0] + delta <= lb2:
            b1 = honest_blocks[j][1]
            if key[b1] > best:
                best, best_block = key[b1], b1
            j += 1
        if best > key[b2]:
            return ForkReport(False, "A4", f"honest block {b2} is shallower than older honest block {best_block}", (best_block, b2))
    return ForkReport(True)
