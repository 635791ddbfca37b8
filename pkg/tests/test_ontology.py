import numpy as np
import pytest
from hypothesis import given, strategies as st

from sherbet.errors import CycleDetected, LevelOutOfRange, MultipleParents, MultipleRoots, OrphanNode, SchemaError
from sherbet.ontology import load_ontology, pad_virtual_leaves, read_ontology_csv, write_ontology_csv
from conftest import TOY_EDGES, random_tree


def _ids(ont, *labels):
    return [ont.label_to_id[x] for x in labels]


def test_depth_counting():
    ont = load_ontology(TOY_EDGES)
    assert ont.H == 3
    assert ont.level_nodes[1] == _ids(ont, "root")
    assert sorted(ont.level_nodes[2]) == sorted(_ids(ont, "a", "b"))
    assert ont.level_nodes[3] == _ids(ont, "c1")


def test_bfs_ids_are_dense_and_ordered():
    ont = load_ontology(TOY_EDGES)
    assert [n.label for n in ont.nodes] == ["root", "a", "b", "c1"]


@pytest.mark.parametrize("edges, err", [
    ([("ROOT", "r"), ("r", "a"), ("a", "a")], CycleDetected),
    ([("ROOT", "r"), ("r", "a"), ("x", "y")], OrphanNode),
    ([("r", "a"), ("x", "y")], MultipleRoots),
    ([("ROOT", "r"), ("ROOT", "s")], MultipleRoots),
    ([("ROOT", "r"), ("r", "a"), ("r", "b"), ("b", "a")], MultipleParents),
    ([("ROOT", "r"), ("r", "a"), ("b", "c"), ("c", "b")], CycleDetected),
])
def test_malformed_trees(edges, err):
    with pytest.raises(err) as info:
        load_ontology(edges)
    assert info.value.to_dict()["error"] == err.__name__


def test_padding_toy(toy_tree):
    assert toy_tree.leaf_labels() == ["c1", "b~v3"]
    b_v = toy_tree.label_to_id["b~v3"]
    assert toy_tree.nodes[b_v].is_virtual and toy_tree.nodes[b_v].level == 3
    assert toy_tree.code_index["b"] == 1 and toy_tree.code_index["c1"] == 0


def test_padding_keeps_original_ids(toy_tree):
    orig = load_ontology(TOY_EDGES)
    for node in orig.nodes:
        assert toy_tree.nodes[node.id].label == node.label


def test_uniform_tree_unchanged():
    edges = [("ROOT", "r"), ("r", "a"), ("r", "b"), ("a", "x"), ("b", "y")]
    ont = load_ontology(edges)
    assert pad_virtual_leaves(ont) == ont


def test_single_root_tree():
    ont = pad_virtual_leaves(load_ontology([("ROOT", "r")]))
    assert ont.H == 1 and ont.leaf_labels() == ["r"]


def test_recorded_internal_code_gets_own_leaf():
    ont = pad_virtual_leaves(load_ontology(TOY_EDGES), recorded=["a"])
    assert "a~v3" in ont.leaf_labels()
    assert ont.code_index["a"] == ont.leaf_labels().index("a~v3")


def test_ancestor_lookup(toy_tree):
    c1 = toy_tree.label_to_id["c1"]
    assert toy_tree.ancestor(c1, 3) == c1
    assert toy_tree.ancestor(c1, 1) == toy_tree.root
    assert toy_tree.ancestor(c1, 2) == toy_tree.label_to_id["a"]
    with pytest.raises(LevelOutOfRange):
        toy_tree.ancestor(c1, 4)
    with pytest.raises(LevelOutOfRange):
        toy_tree.ancestor(c1, 0)


@given(st.integers(0, 2**32 - 1))
def test_tree_invariants(seed):
    rng = np.random.default_rng(seed)
    edges = random_tree(rng, depth=int(rng.integers(2, 5)), fanout=(0, 3))
    ont = pad_virtual_leaves(load_ontology(edges))
    H = ont.H
    assert ont.level_counts[1] == 1 and sum(ont.level_counts.values()) == len(ont)
    assert ont.n_codes == ont.level_counts[H]
    for leaf in ont.leaf_codes:
        assert ont.nodes[leaf].level == H
        assert ont.ancestor(leaf, H) == leaf and ont.ancestor(leaf, 1) == ont.root
        for h in range(2, H + 1):
            assert ont.parent[ont.ancestor(leaf, h)] == ont.ancestor(leaf, h - 1)
    for node in ont.nodes:
        if node.is_virtual and node.level < H:
            assert len(ont.children[node.id]) == 1
    assert pad_virtual_leaves(ont) == ont


@given(st.integers(0, 2**32 - 1))
def test_csv_round_trip(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    ont = pad_virtual_leaves(load_ontology(random_tree(rng, depth=3, fanout=(0, 3))))
    path = tmp_path_factory.mktemp("ont") / "o.csv"
    write_ontology_csv(ont, path)
    again = read_ontology_csv(path)
    assert again == ont
    assert [n.label for n in again.nodes] == [n.label for n in ont.nodes]


def test_csv_header_checked(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("from,to\nROOT,r\n")
    with pytest.raises(SchemaError):
        read_ontology_csv(p)


def test_csv_uses_lf(tmp_path, toy_tree):
    p = tmp_path / "o.csv"
    write_ontology_csv(toy_tree, p)
    raw = p.read_bytes()
    assert b"\r" not in raw and raw.startswith(b"parent,child\nROOT,root\n")
