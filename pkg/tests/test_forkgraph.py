import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ironclad.errors import InvalidParameterError
from ironclad.forkgraph import (
    ROOT,
    BlockTree,
    LabelOrderError,
    UnknownParentError,
    common_prefix_violations,
    is_prefix,
    theta_units,
    validate_delta_fork,
)

HONEST = "hh0H00H0h"
ADVERSARY = "0000a0000"


def two_branch_tree(theta=3.0):
    """Delta = 2 fork: 0 <- 1 <- 2 <- 5(adv), 1 <- 4(iron) <- 7(iron) <- 9."""
    t = BlockTree(theta)
    b1 = t.add_block(ROOT, 1, True)
    b2 = t.add_block(b1, 2, True)
    b4 = t.add_block(b1, 4, True, iron=True)
    b5 = t.add_block(b2, 5, False)
    b7 = t.add_block(b4, 7, True, iron=True)
    b9 = t.add_block(b7, 9, True)
    return t, dict(b1=b1, b2=b2, b4=b4, b5=b5, b7=b7, b9=b9)


def test_two_branch_tree_is_a_valid_fork():
    t, _ = two_branch_tree()
    assert validate_delta_fork(t, HONEST, ADVERSARY, 2)
    assert validate_delta_fork(t, HONEST, ADVERSARY, 2, measure="weight")


def test_two_branch_tree_heaviest_chain():
    t, b = two_branch_tree(theta=3.0)
    c = t.heaviest_chain()
    assert c.leaf == b["b9"]
    assert c.weight == 1 + 3 + 3 + 1
    assert c.length == 4
    assert [t.label[x] for x in t.path(c.leaf)] == [0, 1, 4, 7, 9]


def test_theta_one_is_longest_chain():
    t, b = two_branch_tree(theta=1.0)
    assert t.heaviest_chain().leaf == t.longest_chain().leaf == b["b9"]
    assert t.weight(b["b5"]) == t.depth[b["b5"]]


def test_axiom_violations_are_named():
    t, b = two_branch_tree()
    bad = BlockTree(3.0)
    bad.add_block(ROOT, 1, True)
    assert validate_delta_fork(bad, "h0", "00", 1)
    # A3: honest block where the honest string is silent
    assert validate_delta_fork(bad, "0h", "00", 1).axiom == "A3"
    # A3: iron flag disagrees with the symbol
    assert validate_delta_fork(bad, "H0", "00", 1).axiom == "A3"
    # A3: an honest slot without its block
    assert validate_delta_fork(bad, "hh", "00", 1).axiom == "A3"
    # A1: adversarial root
    t.honest[ROOT] = False
    assert validate_delta_fork(t, HONEST, ADVERSARY, 2).axiom == "A1"


def test_a2_label_order():
    t, _ = two_branch_tree()
    t.label[3] = 1
    r = validate_delta_fork(t, HONEST, ADVERSARY, 2)
    assert not r and r.axiom == "A2"


def test_a4_depth_violation():
    t = BlockTree(1.0)
    a = t.add_block(ROOT, 1, True)
    b = t.add_block(a, 2, True)
    t.add_block(ROOT, 4, True)  # ignores the depth-2 block from slot 2
    rep = validate_delta_fork(t, "hh0h", "0000", 1)
    assert rep.axiom == "A4" and rep.witnesses == (b, 3)
    # with a long enough delay it is allowed
    assert validate_delta_fork(t, "hh0h", "0000", 3)


def test_a4_weight_measure_differs_from_depth():
    t = BlockTree(5.0)
    iron = t.add_block(ROOT, 1, True, iron=True)
    b2 = t.add_block(ROOT, 2, True)
    b4 = t.add_block(b2, 4, True)
    # 0-2-4 is deeper than the iron block but lighter (2 < 5)
    assert validate_delta_fork(t, "Hh0h", "0000", 1, measure="depth")
    rep = validate_delta_fork(t, "Hh0h", "0000", 1, measure="weight")
    assert rep.axiom == "A4" and rep.witnesses[0] == iron
    assert t.weight(b4) < t.weight(iron)


def test_symbol_map_forms_agree():
    t, _ = two_branch_tree()
    as_list = [{"0": 0, "h": 1, "H": 2}[c] for c in HONEST]
    as_map = {i + 1: v for i, v in enumerate(as_list) if v}
    adv = {5: 1}
    assert validate_delta_fork(t, as_list, adv, 2)
    assert validate_delta_fork(t, as_map, ADVERSARY, 2)


def test_tie_policies():
    t = BlockTree(2.0)
    h = t.add_block(ROOT, 1, True)
    a = t.add_block(ROOT, 1, False)
    assert t.prefers(h, a, "adversary-favoring")
    assert not t.prefers(a, h, "adversary-favoring")
    assert not t.prefers(h, a, "first-seen")
    assert t.prefers(a, h, "lowest-id")
    c = t.heaviest_chain("adversary-favoring")
    assert c.leaf == a and set(c.tie_candidates) == {h, a}
    assert t.heaviest_chain("lowest-id").leaf == h
    with pytest.raises(ValueError):
        t.heaviest_chain("coin-flip")
    with pytest.raises(ValueError):
        t.prefers(h, a, "coin-flip")


def test_iron_block_beats_longer_chain():
    t = BlockTree(500.0)
    x = ROOT
    for s in range(1, 200):
        x = t.add_block(x, s, True)
    iron = t.add_block(ROOT, 5, False, iron=True)
    assert t.heaviest_chain().leaf == iron


def test_add_block_errors():
    t = BlockTree(2.0)
    with pytest.raises(UnknownParentError):
        t.add_block(5, 1, True)
    b = t.add_block(ROOT, 3, True)
    with pytest.raises(LabelOrderError):
        t.add_block(b, 3, True)


def test_theta_units_exactness():
    assert theta_units(500.0) == (500, 1)
    assert theta_units(2.5) == (5, 2)
    with pytest.raises(InvalidParameterError):
        theta_units(2 ** 0.5)


def test_ancestry_and_lca():
    t, b = two_branch_tree()
    assert t.is_ancestor(b["b1"], b["b9"])
    assert not t.is_ancestor(b["b2"], b["b9"])
    assert t.lca(b["b5"], b["b9"]) == b["b1"]
    assert t.truncate(b["b9"], 6) == b["b4"]
    assert t.truncate(b["b9"], -5) == ROOT


def test_prefix_and_violations():
    t, b = two_branch_tree()
    assert is_prefix(t, b["b5"], 5, b["b9"], 4)
    assert not is_prefix(t, b["b5"], 5, b["b9"], 0)
    views = [(b["b5"], 5), (b["b9"], 9)]
    assert common_prefix_violations(t, views, 0) == 1
    assert common_prefix_violations(t, views, 4) == 0


def _random_tree(rng, n=60):
    t = BlockTree(3.0)
    for _ in range(n):
        par = rng.randrange(len(t))
        t.add_block(par, t.label[par] + rng.randint(1, 3), rng.random() < 0.7, rng.random() < 0.2)
    return t


def test_violation_counter_matches_pairwise_definition():
    rng = random.Random(1)
    for _ in range(100):
        t = _random_tree(rng)
        views = [(rng.randrange(len(t)), rng.randint(0, 40)) for _ in range(12)]
        k = rng.randint(0, 5)
        slow = sum(
            1
            for i, (la, ta) in enumerate(views)
            for j, (lb, tb) in enumerate(views)
            if i != j and ta <= tb and not is_prefix(t, la, ta, lb, k)
        )
        assert common_prefix_violations(t, views, k) == slow


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_csv_round_trip(seed):
    t = _random_tree(random.Random(seed), n=30)
    back = BlockTree.from_csv(t.to_csv(), 3.0)
    assert back.to_csv() == t.to_csv()
    assert back.heaviest_chain() == t.heaviest_chain()


def test_csv_rejects_gaps():
    t, _ = two_branch_tree()
    lines = t.to_csv().splitlines()
    del lines[2]
    with pytest.raises(ValueError):
        BlockTree.from_csv("\n".join(lines) + "\n", 3.0)
