import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaoskit.crn import (CRNSyntaxError, Reaction, ReactionNetwork, closure, format_network,
                          is_propagating, parse_network)
from chaoskit.field import DensityField
from chaoskit.kernels import Kernel

from conftest import CORPUS

K1 = "kernel k1 = tophat(radius=0.25, rate=5)\n"
SPECIAL = parse_network(K1 + "S1 + S2 -> S2 + S2 @ k1")


def test_special_reaction():
    assert SPECIAL.reactions == (Reaction((1, 2), (2, 2), "k1"),)
    assert SPECIAL.n_species == 2
    assert SPECIAL.kernel(SPECIAL.reactions[0]) == Kernel("tophat", 5, radius=0.25)


def test_identity_reaction_accepted():
    net = parse_network(K1 + "S1 + S1 -> S1 + S1 @ k1")
    assert net.reactions == (Reaction((1, 1), (1, 1), "k1"),)


def test_coefficient_syntax():
    net = parse_network(K1 + "S1 + S2 -> 2 S2 @ k1")
    assert net.reactions == SPECIAL.reactions


def test_non_bimolecular():
    with pytest.raises(CRNSyntaxError, match="non-bimolecular"):
        parse_network(K1 + "S1 -> S2 @ k1")
    with pytest.raises(CRNSyntaxError, match="non-bimolecular"):
        parse_network(K1 + "S1 + S2 + S3 -> S1 + S2 @ k1")


def test_unknown_kernel():
    with pytest.raises(CRNSyntaxError, match="unknown kernel"):
        parse_network("S1 + S2 -> S2 + S2 @ k9")


def test_species_index_overflow():
    with pytest.raises(CRNSyntaxError, match="overflow"):
        parse_network("species: S1, S2\n" + K1 + "S1 + S3 -> S2 + S2 @ k1")


def test_syntax_error_position():
    with pytest.raises(CRNSyntaxError) as info:
        parse_network(K1 + "S1 + S2 -> S2 + S2 @ k1\nS1 + !! -> S1 + S1 @ k1")
    assert info.value.line == 3
    assert info.value.column == 6


def test_bad_kernel_parameter():
    with pytest.raises(CRNSyntaxError):
        parse_network("kernel k = tophat(rate=1)\nS1 + S2 -> S2 + S2 @ k")
    with pytest.raises(CRNSyntaxError):
        parse_network("kernel k = tophat(radius=0.1, rate=1, width=2)\nS1 + S2 -> S2 + S2 @ k")


def test_duplicate_reaction_rejected():
    with pytest.raises(CRNSyntaxError, match="duplicate"):
        parse_network(K1 + "S1 + S2 -> S2 + S2 @ k1\nS2 + S1 -> S2 + S2 @ k1")


def test_same_pairs_distinct_kernels_allowed():
    net = parse_network(K1 + "kernel k2 = constant(rate=1)\nS1 + S2 -> S2 + S2 @ k1\nS1 + S2 -> S2 + S2 @ k2")
    assert net.n_reactions == 2


def test_comments_and_blank_lines():
    net = parse_network("# header\n\n" + K1 + "S1 + S2 -> S2 + S2 @ k1  # the special reaction\n")
    assert net == SPECIAL


def test_first_appearance_order():
    net = parse_network(K1 + "B + A -> A + A @ k1")
    assert net.species_names == ("B", "A")
    assert net.reactions[0] == Reaction((1, 2), (2, 2), "k1")


def test_declared_order_wins():
    net = parse_network("species: A, B\n" + K1 + "B + A -> A + A @ k1")
    assert net.species_names == ("A", "B")
    assert net.reactions[0] == Reaction((1, 2), (1, 1), "k1")


def test_direct_construction_validates():
    k = {"k": Kernel("constant", 1.0)}
    with pytest.raises(ValueError):
        ReactionNetwork(2, (Reaction((1, 3), (1, 1), "k"),), k)
    with pytest.raises(ValueError):
        ReactionNetwork(2, (Reaction((1, 2), (1, 1), "x"),), k)
    with pytest.raises(ValueError):
        Reaction((2, 1), (1, 1), "k")
    r = Reaction((1, 2), (1, 1), "k")
    with pytest.raises(ValueError):
        ReactionNetwork(2, (r, r), k)


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_corpus_round_trip(name):
    net = parse_network(CORPUS[name])
    assert parse_network(format_network(net)) == net


# closure

def test_closure_examples():
    assert closure(SPECIAL, {1, 2}) == {1, 2}
    assert closure(SPECIAL, {1}) == {1}
    assert closure(SPECIAL, set()) == frozenset()


def test_closure_chain_needs_many_rounds():
    # S_i + S_i -> S_i + S_{i+1}: each round adds exactly one species
    n = 7
    lines = ["kernel k = constant(rate=1)"]
    lines += [f"S{i} + S{i} -> S{i} + S{i + 1} @ k" for i in range(1, n)]
    net = parse_network("\n".join(lines))
    assert closure(net, {1}) == frozenset(range(1, n + 1))
    assert closure(net, {4}) == frozenset(range(4, n + 1))


def test_closure_rejects_bad_species():
    with pytest.raises(ValueError):
        closure(SPECIAL, {3})


def _closure_oracle(reactions, v0):
    # unbounded fixed-point iteration on plain tuples
    cur = set(v0)
    while True:
        new = set(cur)
        for (k, l), (kp, lp) in reactions:
            if k in cur and l in cur:
                new |= {kp, lp}
        if new == cur:
            return frozenset(cur)
        cur = new


@st.composite
def networks(draw, max_species=6):
    n = draw(st.integers(1, max_species))
    sp = st.integers(1, n)
    pairs = draw(st.lists(st.tuples(sp, sp, sp, sp), max_size=8))
    reactions = []
    for a, b, c, e in pairs:
        r = Reaction(tuple(sorted((a, b))), tuple(sorted((c, e))), "k")
        if r not in reactions:
            reactions.append(r)
    return ReactionNetwork(n, tuple(reactions), {"k": Kernel("constant", 1.0)})


@settings(max_examples=200, deadline=None)
@given(networks(), st.data())
def test_closure_properties(net, data):
    species = list(range(1, net.n_species + 1))
    v0 = set(data.draw(st.lists(st.sampled_from(species), unique=True)))
    extra = set(data.draw(st.lists(st.sampled_from(species), unique=True)))
    c = closure(net, v0)
    assert v0 <= c
    assert closure(net, c) == c
    assert c <= closure(net, v0 | extra)
    assert c == _closure_oracle([(r.input, r.output) for r in net.reactions], v0)


@settings(max_examples=200, deadline=None)
@given(networks())
def test_round_trip_property(net):
    assert parse_network(format_network(net)) == net


@settings(max_examples=100, deadline=None)
@given(st.permutations(["A", "B"]), st.permutations(["C", "A"]))
def test_normalization_any_textual_order(lhs, rhs):
    net = parse_network("species: A, B, C\n" + K1 + f"{lhs[0]} + {lhs[1]} -> {rhs[0]} + {rhs[1]} @ k1")
    r = net.reactions[0]
    assert r.input == (1, 2) and r.output == (1, 3)


# propagation

def test_is_propagating_examples():
    assert is_propagating(SPECIAL, [0.5, 0.5])
    assert not is_propagating(SPECIAL, [1.0, 0.0])
    empty = ReactionNetwork(3, (), {})
    assert is_propagating(empty, [0.2, 0.3, 0.5])


def test_is_propagating_threshold():
    assert not is_propagating(SPECIAL, [1.0, 1e-13])
    assert is_propagating(SPECIAL, [1.0 - 1e-9, 1e-9])


def test_is_propagating_density_field():
    vals = np.stack([np.full(8, 0.5), np.full(8, 0.5)])
    assert is_propagating(SPECIAL, DensityField(vals))
    with pytest.raises(ValueError):
        is_propagating(SPECIAL, [1.0, 0.0, 0.0])


def test_closure_of_every_subset_is_fixed_point():
    net = parse_network(CORPUS["reversible"])
    for k in range(4):
        for v0 in itertools.combinations(range(1, 4), k):
            c = closure(net, v0)
            assert closure(net, c) == c
