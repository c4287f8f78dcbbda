"""Event-driven simulation of honest miners and an adversary on a delay-bounded network.

Time is measured in integer slots but never iterated slot by slot: block
arrivals are geometric gaps and deliveries are heap events. Within one slot
deliveries are processed first, then adversarial mining, then honest mining.

A run produces a ``SimTrace`` (mining, delivery, release and tip-adoption
events); every metric is computed from the trace by ``compute_metrics``.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .forkgraph import TIE_POLICIES, BlockTree
from .params import ProtocolParams, derive_rates
from .rng import Xoshiro256, derive_seed

STRATEGIES = ("none", "private-chain", "convergence-prevention")
HONEST_DELAYS = ("worst-case", "uniform")

# heap ordering of event classes inside a slot
_DELIVER, _ADV_MINE, _HON_MINE = 0, 1, 2

# stream keys under the run seed
_KEY_HONEST, _KEY_ADVERSARY, _KEY_ASSIGN, _KEY_DELAY = 0, 1, 2, 3


@dataclass(frozen=True)
class SimConfig:
    params: ProtocolParams
    miners: int = 50
    horizon: int = 10_000
    adversary: str = "none"
    honest_delay: str = "worst-case"
    chains: int = 1
    tiebreak: str = "adversary-favoring"
    seed: int = 0
    # stop and flag a broken run when the common prefix of all honest tips
    # stalls this many deltas (or this many mean block gaps, if longer)
    watchdog_deltas: float | None = 500.0
    grace_fraction: float = 0.1
    # confirmation lags beyond this many deltas (or mean block gaps) count as unbounded
    confirm_cap_deltas: float | None = 500.0
    k_grid: tuple[int, ...] = (1, 5, 20)

    def __post_init__(self):
        if self.miners < 1:
            raise InvalidParameterError("miners", "must be >= 1")
        if self.horizon < 1:
            raise InvalidParameterError("horizon", "must be >= 1")
        if self.chains < 1:
            raise InvalidParameterError("chains", "must be >= 1")
        if self.adversary not in STRATEGIES:
            raise InvalidParameterError("adversary", f"must be one of {STRATEGIES}")
        if self.honest_delay not in HONEST_DELAYS:
            raise InvalidParameterError("honest_delay", f"must be one of {HONEST_DELAYS}")
        if self.tiebreak not in TIE_POLICIES:
            raise InvalidParameterError("tiebreak", f"must be one of {TIE_POLICIES}")
        if not 0.0 <= self.grace_fraction < 1.0:
            raise InvalidParameterError("grace_fraction", "must lie in [0, 1)")

    def replace(self, **changes) -> "SimConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return SimConfig(**d)


@dataclass
class SimTrace:
    """Everything needed to recompute metrics.

    ``events`` rows are ``(time, kind, chain, block, parent, miner, iron, recipient)``.
    Kinds: ``mine-honest``, ``mine-adversary``, ``deliver``, ``release``, ``adopt``.
    For ``deliver`` the recipient is ``all``, ``g0``/``g1`` or a party index;
    for ``adopt`` it is the party index.
    """

    config: SimConfig
    end_time: int
    events: list[tuple]
    consistency_broken: bool = False
    complete: bool = True

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["time", "kind", "block_id", "parent_id", "miner", "iron", "recipient"]
        multi = self.config.chains > 1
        if multi:
            header.append("chain")
        w.writerow(header)
        for time, kind, chain, block, parent, miner, iron, recipient in self.events:
            row = [time, kind, block, parent, miner, int(iron), recipient]
            if multi:
                row.append(chain)
            w.writerow(row)
        return buf.getvalue()


REPORT_COLUMNS = (
    "rho", "p_per_delta", "q", "theta", "cq_num", "cq_wt", "qg_num", "qg_wt",
    "agree_ratio", "conf_median", "conf_p95", "unconfirmed", "seed",
)


@dataclass
class MetricsReport:
    rho: float
    p_per_delta: float
    q: float
    theta: float
    cq_num: float
    cq_wt: float
    qg_num: float
    qg_wt: float
    agree_ratio: float
    conf_median: float
    conf_p95: float
    unconfirmed: int
    seed: int
    confirmed: int = 0
    weight_growth: float = 0.0
    q_tilde: float = 0.0
    consistency_violations: dict = field(default_factory=dict)
    consistency_broken: bool = False
    chain_blocks: tuple[int, ...] = ()
    per_chain: list = field(default_factory=list)

    def row(self) -> dict:
        return {c: getattr(self, c) for c in REPORT_COLUMNS}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["consistency_violations"] = {str(k): v for k, v in self.consistency_violations.items()}
        return d


class _ChainState:
    __slots__ = ("tree", "tips", "best", "adv")

    def __init__(self, theta: float, miners: int):
        self.tree = BlockTree(theta)
        self.tips = [0] * miners
        self.best = 0  # heaviest block known to the adversary (all blocks)
        self.adv = None  # per-chain strategy state


class _Engine:
    def __init__(self, cfg: SimConfig, parallel: bool):
        self.cfg = cfg
        self.params = cfg.params
        self.rates = derive_rates(cfg.params)
        self.delta = cfg.params.delta
        self.policy = cfg.tiebreak
        self.n = cfg.miners
        self.m = cfg.chains
        self.parallel = parallel
        self.chains = [_ChainState(cfg.params.theta, self.n) for _ in range(self.m)]
        self.rng_h = Xoshiro256(derive_seed(cfg.seed, _KEY_HONEST))
        self.rng_a = Xoshiro256(derive_seed(cfg.seed, _KEY_ADVERSARY))
        self.rng_assign = Xoshiro256(derive_seed(cfg.seed, _KEY_ASSIGN))
        self.rng_delay = Xoshiro256(derive_seed(cfg.seed, _KEY_DELAY))
        self.heap: list = []
        self.seq = 0
        self.events: list[tuple] = []
        self.now = 0
        self.others = [tuple(j for j in range(self.n) if j != i) for i in range(self.n)]
        self.groups = (tuple(range(0, self.n, 2)), tuple(range(1, self.n, 2)))
        self.group_of = [i % 2 for i in range(self.n)]
        self.strategy = _make_strategy(cfg.adversary if self.rates.p_a > 0 else "none", self)
        self.broken = False

    # scheduling
    def push(self, time: int, cls: int, kind: str, data) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (time, cls, self.seq, kind, data))

    def schedule_delivery(self, time: int, c: int, blocks: tuple, recips: tuple, label: str, sender_group: int = -1):
        # nobody may build on a block in the slot it was mined
        time = max(time, self.chains[c].tree.label[blocks[-1]] + 1)
        self.push(time, _DELIVER, "deliver", (c, blocks, recips, label, sender_group))

    def pick_chain(self) -> int:
        return self.rng_assign.randbelow(self.m) if self.parallel else 0

    # block bookkeeping
    def add_block(self, c: int, parent: int, honest: bool, iron: bool, miner: int) -> int:
        st = self.chains[c]
        b = st.tree.add_block(parent, self.now, honest, iron)
        if st.tree.prefers(st.best, b, self.policy):
            st.best = b
        kind = "mine-honest" if honest else "mine-adversary"
        self.events.append((self.now, kind, c, b, parent, miner, iron, ""))
        return b

    def prefers(self, c: int, current: int, candidate: int) -> bool:
        """Fork choice of an honest party; under the adversary-favoring policy
        the adversary's strategy settles exact ties."""
        tree = self.chains[c].tree
        if self.policy == "adversary-favoring" and current != candidate and tree.wunits[current] == tree.wunits[candidate]:
            return self.strategy.tie_switch(c, current, candidate)
        return tree.prefers(current, candidate, self.policy)

    def adopt(self, c: int, party: int, b: int) -> None:
        st = self.chains[c]
        if self.prefers(c, st.tips[party], b):
            st.tips[party] = b
            self.events.append((self.now, "adopt", c, b, -1, -1, False, party))

    def deliver_now(self, c: int, blocks: tuple, recips: tuple) -> None:
        for r in recips:
            for b in blocks:
                self.adopt(c, r, b)

    def honest_best(self, c: int) -> int:
        st = self.chains[c]
        best = st.tips[0]
        for t in st.tips:
            if t != best and st.tree.prefers(best, t, self.policy):
                best = t
        return best

    def broadcast_honest_like(self, c: int, b: int, sender: int) -> None:
        recips = self.others[sender] if sender >= 0 else tuple(range(self.n))
        if self.cfg.honest_delay == "worst-case":
            if recips:
                self.schedule_delivery(self.now + self.delta, c, (b,), recips, "all")
        else:
            for r in recips:
                d = self.rng_delay.randbelow(self.delta + 1)
                self.schedule_delivery(self.now + d, c, (b,), (r,), str(r))

    # main loop
    def run(self) -> SimTrace:
        p_h, p_a, q = self.rates.p_h, self.rates.p_a, self.params.q
        next_h = self.rng_h.geometric(p_h) if p_h > 0 else math.inf
        next_a = self.rng_a.geometric(p_a) if p_a > 0 else math.inf
        mined = 0
        horizon = self.cfg.horizon
        wd = self.cfg.watchdog_deltas
        wd_slots = wd * max(self.delta, 1.0 / self.params.p) if wd else math.inf
        prefix_depth = [0] * self.m
        prefix_time = [0] * self.m
        end_time = 0
        while mined < horizon:
            top = self.heap[0] if self.heap else None
            t_mine = min(next_h, next_a)
            if top is not None and top[0] <= t_mine:
                time, _, _, kind, data = heapq.heappop(self.heap)
                self.now = time
                c, blocks, recips, label, sender_group = data
                self.events.append((time, "deliver", c, blocks[-1], -1, -1, False, label))
                self.strategy.before_delivery(c, blocks, recips, sender_group)
                self.deliver_now(c, blocks, recips)
                self.strategy.after_event(c)
                continue
            if next_a <= next_h:
                self.now = next_a
                iron = self.rng_a.random() < q
                c = self.pick_chain()
                self.strategy.adversary_mines(c, iron)
                self.strategy.after_event(c)
                next_a += self.rng_a.geometric(p_a)
            else:
                self.now = next_h
                miner = self.rng_h.randbelow(self.n)
                iron = self.rng_h.random() < q
                c = self.pick_chain()
                self.honest_mines(c, miner, iron)
                self.strategy.after_event(c)
                next_h += self.rng_h.geometric(p_h)
            mined += 1
            end_time = self.now
            if mined % 128 == 0 and wd_slots < math.inf:
                for ci in range(self.m):
                    d = self.common_prefix_depth(ci)
                    if d > prefix_depth[ci]:
                        prefix_depth[ci] = d
                        prefix_time[ci] = self.now
                    elif self.now - prefix_time[ci] > wd_slots:
                        self.broken = True
                if self.broken:
                    break
        return SimTrace(self.cfg, end_time, self.events, self.broken)

    def honest_mines(self, c: int, miner: int, iron: bool) -> None:
        st = self.chains[c]
        parent = st.tips[miner]
        b = self.add_block(c, parent, True, iron, miner)
        st.tips[miner] = b
        self.events.append((self.now, "adopt", c, b, -1, -1, False, miner))
        self.strategy.honest_block(c, b, miner)

    def common_prefix_depth(self, c: int) -> int:
        st = self.chains[c]
        tips = set(st.tips)
        it = iter(tips)
        a = next(it)
        for t in it:
            a = st.tree.lca(a, t)
        return st.tree.depth[a]


class _Strategy:
    """Adversary behaviour. The base class mines honestly and publishes like an honest party."""

    def __init__(self, eng: _Engine):
        self.eng = eng

    def adversary_mines(self, c: int, iron: bool) -> None:
        eng = self.eng
        st = eng.chains[c]
        b = eng.add_block(c, st.best, False, iron, -1)
        eng.broadcast_honest_like(c, b, -1)

    def honest_block(self, c: int, b: int, miner: int) -> None:
        eng = self.eng
        eng.broadcast_honest_like(c, b, miner)

    def before_delivery(self, c: int, blocks: tuple, recips: tuple, sender_group: int) -> None:
        pass

    def tie_switch(self, c: int, current: int, candidate: int) -> bool:
        tree = self.eng.chains[c].tree
        return tree.honest[current] and not tree.honest[candidate]

    def after_event(self, c: int) -> None:
        pass


class _PrivateChain(_Strategy):
    """Withhold a private fork of the heaviest honest tip and publish it once it
    matches a competing public chain; abandon it when trailing by max(theta, 2)."""

    def __init__(self, eng: _Engine):
        super().__init__(eng)
        for st in eng.chains:
            st.adv = {"stash": [], "base": 0}
        self.give_up_units = None

    def adversary_mines(self, c: int, iron: bool) -> None:
        eng = self.eng
        s = eng.chains[c].adv
        if s["stash"]:
            parent = s["stash"][-1]
        else:
            parent = eng.honest_best(c)
            s["base"] = parent
        b = eng.add_block(c, parent, False, iron, -1)
        s["stash"].append(b)

    def after_event(self, c: int) -> None:
        eng = self.eng
        st = eng.chains[c]
        s = st.adv
        if not s["stash"]:
            return
        tree = st.tree
        top = s["stash"][-1]
        pub = eng.honest_best(c)
        w_top, w_pub = tree.wunits[top], tree.wunits[pub]
        if w_pub > tree.wunits[s["base"]] and w_top >= w_pub:
            when = max(eng.now, tree.label[top] + 1)
            eng.schedule_delivery(when, c, tuple(s["stash"]), tuple(range(eng.n)), "all")
            eng.events.append((eng.now, "release", c, top, s["base"], -1, False, "all"))
            s["stash"] = []
            return
        give_up = max(eng.params.theta, 2.0) * tree.unit
        if w_pub - w_top >= give_up:
            s["stash"] = []


class _ConvergencePrevention(_Strategy):
    """Keep honest parties from ever holding the same tip.

    Honest blocks travel with the configured delay. The adversary extends one
    withheld private chain, started on the leading honest tip. Whenever a
    delivery is about to leave every honest party on one tip, it first hands
    the recipients the shortest withheld prefix that is at least as heavy as
    the incoming block and does not extend it; exact ties are settled in
    favour of staying put. Released blocks reach everyone else after delta by
    relay. An attempt is abandoned and restarted on the leading tip once the
    private chain trails it by max(theta, 2).
    """

    def __init__(self, eng: _Engine):
        super().__init__(eng)
        for st in eng.chains:
            st.adv = {"private": []}
        self.give_up = max(eng.params.theta, 2.0)

    def tie_switch(self, c: int, current: int, candidate: int) -> bool:
        return False

    def adversary_mines(self, c: int, iron: bool) -> None:
        eng = self.eng
        st = eng.chains[c]
        tree = st.tree
        private = st.adv["private"]
        lead = eng.honest_best(c)
        if private and tree.wunits[private[-1]] + self.give_up * tree.unit <= tree.wunits[lead]:
            private.clear()
        parent = private[-1] if private else lead
        private.append(eng.add_block(c, parent, False, iron, -1))

    def before_delivery(self, c: int, blocks: tuple, recips: tuple, sender_group: int) -> None:
        eng = self.eng
        st = eng.chains[c]
        tree = st.tree
        private = st.adv["private"]
        if not private:
            return
        incoming = blocks[-1]
        rset = set(recips)
        outcome = set()
        for party, tip in enumerate(st.tips):
            outcome.add(incoming if party in rset and eng.prefers(c, tip, incoming) else tip)
            if len(outcome) > 1:
                return
        need = tree.wunits[incoming]
        for k, x in enumerate(private):
            if tree.label[x] >= eng.now:
                return
            if tree.wunits[x] >= need:
                break
        else:
            return
        if tree.is_ancestor(incoming, x):
            return
        released = tuple(private[: k + 1])
        del private[: k + 1]
        eng.events.append((eng.now, "release", c, x, -1, -1, False, "partial"))
        eng.deliver_now(c, released, recips)
        others = tuple(j for j in range(eng.n) if j not in rset)
        if others:
            eng.schedule_delivery(eng.now + eng.delta, c, released, others, "relay")


def _make_strategy(name: str, eng: _Engine) -> _Strategy:
    if name == "private-chain":
        return _PrivateChain(eng)
    if name == "convergence-prevention":
        return _ConvergencePrevention(eng)
    return _Strategy(eng)


def simulate_trace(config: SimConfig, parallel: bool | None = None) -> SimTrace:
    """Run the event engine and return the raw trace."""
    if parallel is None:
        parallel = config.chains > 1
    return _Engine(config, parallel).run()


def run_simulation(config: SimConfig) -> MetricsReport:
    """Single-chain run. Identical to ``run_parallel`` with one chain."""
    if config.chains != 1:
        raise InvalidParameterError("chains", "run_simulation is single-chain; use run_parallel")
    return compute_metrics(simulate_trace(config, parallel=False))


def run_parallel(config: SimConfig) -> MetricsReport:
    """Parallel chains: every block is assigned to a uniformly random chain.

    The aggregate report combines per-chain chain quality and growth and uses
    the shared-depth confirmation rule; ``per_chain`` holds each chain's own report.
    """
    return compute_metrics(simulate_trace(config, parallel=config.chains > 1))


class IncompleteTraceError(ValueError):
    pass


def _rebuild(trace: SimTrace):
    cfg = trace.config
    trees = [BlockTree(cfg.params.theta) for _ in range(cfg.chains)]
    histories = [[[(0, 0)] for _ in range(cfg.miners)] for _ in range(cfg.chains)]
    for time, kind, c, b, parent, miner, iron, recipient in trace.events:
        if kind in ("mine-honest", "mine-adversary"):
            tree = trees[c]
            got = tree.add_block(parent, time, kind == "mine-honest", iron)
            if got != b:
                raise IncompleteTraceError(f"block ids out of sequence at time {time}")
        elif kind == "adopt":
            if not 0 <= b < len(trees[c]):
                raise IncompleteTraceError(f"adoption of unknown block {b}")
            h = histories[c][recipient]
            if h[-1][0] == time:
                h[-1] = (time, b)
            else:
                h.append((time, b))
    return trees, histories


def _agreement(histories_c, end_time: int) -> float:
    """Fraction of [0, end_time) during which all parties hold the same tip."""
    if end_time <= 0:
        return 1.0
    changes = []
    for party, hist in enumerate(histories_c):
        for time, b in hist[1:]:
            changes.append((time, party, b))
    changes.sort(key=lambda x: x[0])
    tips = [0] * len(histories_c)
    counts = {0: len(histories_c)}
    agree = 0
    last = 0
    i = 0
    n = len(changes)
    while i < n:
        t = changes[i][0]
        if t >= end_time:
            break
        if len(counts) == 1:
            agree += t - last
        last = t
        while i < n and changes[i][0] == t:
            _, party, b = changes[i]
            old = tips[party]
            counts[old] -= 1
            if not counts[old]:
                del counts[old]
            tips[party] = b
            counts[b] = counts.get(b, 0) + 1
            i += 1
    if len(counts) == 1:
        agree += end_time - last
    return agree / end_time


def _final_tip(tree: BlockTree, histories_c, policy: str) -> int:
    best = histories_c[0][-1][1]
    for hist in histories_c[1:]:
        t = hist[-1][1]
        if t != best and tree.prefers(best, t, policy):
            best = t
    return best


def _confirmation_slots(tree: BlockTree, histories_c, final: int) -> np.ndarray:
    """Absolute confirmation slot of each block on the final chain, indexed by depth.

    A block is confirmed at the start of the last stretch during which it is in
    every party's adopted chain; ``inf`` if some party does not hold it at the end.
    """
    path = tree.path(final)
    on_final = np.zeros(len(tree), dtype=bool)
    on_final[path] = True
    depth_d = len(path)
    conf = np.zeros(depth_d, dtype=float)
    parent = tree.parent
    depth = tree.depth
    for hist in histories_c:
        times = np.fromiter((h[0] for h in hist), dtype=np.int64, count=len(hist))
        shared = np.empty(len(hist), dtype=np.int64)
        for j, (_, x) in enumerate(hist):
            while not on_final[x]:
                x = parent[x]
            shared[j] = depth[x]
        suffix_min = np.minimum.accumulate(shared[::-1])[::-1]
        idx = np.searchsorted(suffix_min, np.arange(depth_d), side="left")
        party_conf = np.where(idx < len(hist), times[np.minimum(idx, len(hist) - 1)].astype(float), math.inf)
        np.maximum(conf, party_conf, out=conf)
    return conf


def _quantile(x: np.ndarray, q: float) -> float:
    if x.size == 0:
        return math.nan
    return float(np.quantile(x, q, method="inverted_cdf"))


def _violations(tree: BlockTree, histories_c, end_time: int, k_grid, delta: int, samples: int = 24) -> dict:
    from .forkgraph import common_prefix_violations

    views = []
    for s in range(1, samples + 1):
        t = end_time * s // samples
        seen = set()
        for hist in histories_c:
            lo, hi = 0, len(hist)
            while lo + 1 < hi:
                mid = (lo + hi) // 2
                if hist[mid][0] <= t:
                    lo = mid
                else:
                    hi = mid
            tip = hist[lo][1]
            if tip not in seen:
                seen.add(tip)
                views.append((tip, t))
    return {k: common_prefix_violations(tree, views, k * delta) for k in k_grid}


def _chain_report(cfg: SimConfig, tree: BlockTree, histories_c, end_time: int, broken: bool):
    p = cfg.params
    rates = derive_rates(p)
    delta = p.delta
    final = _final_tip(tree, histories_c, cfg.tiebreak)
    path = tree.path(final)[1:]
    n_blocks = len(path)
    honest = [b for b in path if tree.honest[b]]
    w_total = tree.weight(final)
    w_honest = sum(tree.block_weight(b) for b in honest)
    cq_num = len(honest) / n_blocks if n_blocks else 1.0
    cq_wt = w_honest / w_total if w_total else 1.0
    span = end_time / delta if end_time else math.nan
    qg_num = len(honest) / span if end_time else 0.0
    qg_wt = w_honest / rates.w_bar / span if end_time else 0.0
    conf_abs = _confirmation_slots(tree, histories_c, final)
    cutoff = end_time * (1.0 - cfg.grace_fraction)
    labels = np.array([tree.label[b] for b in path], dtype=float)
    eligible = labels <= cutoff
    iron = sum(1 for b in path if tree.iron[b])
    return {
        "final": final,
        "path": path,
        "labels": labels,
        "eligible": eligible,
        "conf_abs": conf_abs[1:],
        "cq_num": cq_num,
        "cq_wt": cq_wt,
        "qg_num": qg_num,
        "qg_wt": qg_wt,
        "n_honest": len(honest),
        "n_blocks": n_blocks,
        "w_honest": w_honest,
        "w_total": w_total,
        "agree": _agreement(histories_c, end_time),
        "weight_growth": w_total / end_time if end_time else 0.0,
        "q_tilde": iron / n_blocks if n_blocks else 0.0,
        "violations": _violations(tree, histories_c, end_time, cfg.k_grid, delta),
        "tree_size": len(tree) - 1,
    }


def _conf_stats(times: np.ndarray, cfg: SimConfig) -> tuple[float, float, int, int]:
    p = cfg.params
    rel = times / p.delta
    if cfg.confirm_cap_deltas is not None:
        cap = cfg.confirm_cap_deltas * max(1.0, 1.0 / (p.p * p.delta))
        rel = np.where(rel > cap, math.inf, rel)
    unconfirmed = int(np.isinf(rel).sum())
    return _quantile(rel, 0.5), _quantile(rel, 0.95), unconfirmed, int(rel.size - unconfirmed)


def _make_report(cfg: SimConfig, parts: dict, conf_rel: np.ndarray, broken: bool) -> MetricsReport:
    p = cfg.params
    med, p95, unconf, conf_n = _conf_stats(conf_rel, cfg)
    return MetricsReport(
        rho=p.rho,
        p_per_delta=p.p * p.delta / cfg.chains,
        q=p.q,
        theta=p.theta,
        cq_num=parts["cq_num"],
        cq_wt=parts["cq_wt"],
        qg_num=parts["qg_num"],
        qg_wt=parts["qg_wt"],
        agree_ratio=parts["agree"],
        conf_median=med,
        conf_p95=p95,
        unconfirmed=unconf,
        seed=cfg.seed,
        confirmed=conf_n,
        weight_growth=parts["weight_growth"],
        q_tilde=parts["q_tilde"],
        consistency_violations=parts["violations"],
        consistency_broken=broken,
        chain_blocks=parts.get("chain_blocks", ()),
    )


def compute_metrics(trace: SimTrace) -> MetricsReport:
    """Metrics from a trace: chain quality, quality growth per delta, agreement
    ratio, retrospective confirmation times (in deltas) and prefix violations.

    Confirmation statistics cover blocks of the final heaviest chain mined
    before the last ``grace_fraction`` of the run. Blocks not confirmed by the
    end, or confirmed later than ``confirm_cap_deltas``, count as unbounded in
    the percentiles and are tallied in ``unconfirmed``.
    """
    if not trace.complete:
        raise IncompleteTraceError("trace is marked incomplete")
    cfg = trace.config
    trees, histories = _rebuild(trace)
    end = trace.end_time
    reports = [_chain_report(cfg, trees[c], histories[c], end, trace.consistency_broken) for c in range(cfg.chains)]
    per_chain = []
    for r in reports:
        per_chain.append(_make_report(cfg, r, (r["conf_abs"] - r["labels"])[r["eligible"]], trace.consistency_broken))
    if cfg.chains == 1:
        rep = per_chain[0]
        rep.chain_blocks = (reports[0]["tree_size"],)
        return rep

    # shared-depth rule: a block at depth d counts as confirmed once its own
    # chain confirms it and every chain has a confirmed block at depth >= d
    reach = []
    for r in reports:
        suffix = np.minimum.accumulate(r["conf_abs"][::-1])[::-1] if r["conf_abs"].size else r["conf_abs"]
        reach.append(suffix)
    agg_times = []
    for r in reports:
        conf = r["conf_abs"].copy()
        for d in range(conf.size):
            for s in reach:
                conf[d] = max(conf[d], s[d] if d < s.size else math.inf)
        agg_times.append((conf - r["labels"])[r["eligible"]])
    tot_blocks = sum(r["n_blocks"] for r in reports)
    tot_w = sum(r["w_total"] for r in reports)
    parts = {
        "cq_num": sum(r["n_honest"] for r in reports) / tot_blocks if tot_blocks else 1.0,
        "cq_wt": sum(r["w_honest"] for r in reports) / tot_w if tot_w else 1.0,
        "qg_num": sum(r["qg_num"] for r in reports),
        "qg_wt": sum(r["qg_wt"] for r in reports),
        "agree": float(np.mean([r["agree"] for r in reports])),
        "weight_growth": sum(r["weight_growth"] for r in reports),
        "q_tilde": sum(r["q_tilde"] * r["n_blocks"] for r in reports) / tot_blocks if tot_blocks else 0.0,
        "violations": {k: sum(r["violations"][k] for r in reports) for k in cfg.k_grid},
        "chain_blocks": tuple(r["tree_size"] for r in reports),
    }
    rep = _make_report(cfg, parts, np.concatenate(agg_times) if agg_times else np.array([]), trace.consistency_broken)
    rep.per_chain = per_chain
    return rep


def estimate_qtilde(trace: SimTrace) -> float:
    """Fraction of iron blocks on the final heaviest chain of a no-attack run."""
    cfg = trace.config
    trees, histories = _rebuild(trace)
    iron = total = 0
    for tree, hist in zip(trees, histories):
        path = tree.path(_final_tip(tree, hist, cfg.tiebreak))[1:]
        total += len(path)
        iron += sum(1 for b in path if tree.iron[b])
    if total == 0:
        raise ValueError("the final chain is empty")
    return iron / total


def honest_strings(trace: SimTrace, chain: int = 0) -> tuple[dict, dict]:
    """Sparse characteristic strings (slot -> symbol) implied by the mining events."""
    honest, adversary = {}, {}
    for time, kind, c, b, parent, miner, iron, recipient in trace.events:
        if c != chain:
            continue
        if kind == "mine-honest":
            honest[time] = 2 if iron else 1
        elif kind == "mine-adversary":
            adversary[time] = 2 if iron else 1
    return honest, adversary


def report_csv(reports, extra_columns: tuple[str, ...] = ()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS + extra_columns)
    for r in reports:
        w.writerow([getattr(r, c) for c in REPORT_COLUMNS] + [getattr(r, c) for c in extra_columns])
    return buf.getvalue()
