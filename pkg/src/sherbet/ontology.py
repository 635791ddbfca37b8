"""Medical-code hierarchy: parsing, validation, virtual-leaf padding, ancestor lookup."""
import csv
import re
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import SchemaError, CycleDetected, LevelOutOfRange, MultipleParents, MultipleRoots, OrphanNode

ROOT_TOKEN = "ROOT"
VIRTUAL_SUFFIX = "~v"
_VIRTUAL_RE = re.compile(re.escape(VIRTUAL_SUFFIX) + r"\d+$")


@dataclass(frozen=True)
class CodeNode:
    id: int
    label: str
    level: int
    is_virtual: bool = False


def origin_label(label, suffix=VIRTUAL_SUFFIX):
    """Strip any chain of virtual suffixes from ``label``."""
    pattern = re.compile(re.escape(suffix) + r"\d+$")
    while pattern.search(label):
        label = pattern.sub("", label)
    return label


class Ontology:
    """An immutable rooted tree of codes with dense ids in breadth-first order.

    Parameters
    ----------
    nodes : sequence of CodeNode
        ``nodes[i].id == i``.
    parent : sequence of int
        Parent id per node, ``-1`` for the root.
    """

    def __init__(self, nodes, parent):
        self.nodes = tuple(nodes)
        self.parent = np.asarray(parent, dtype=np.int64)
        n = len(self.nodes)
        children = [[] for _ in range(n)]
        for i in range(n):
            if self.parent[i] >= 0:
                children[self.parent[i]].append(i)
        self.children = tuple(tuple(c) for c in children)
        self.root = int(np.flatnonzero(self.parent < 0)[0])
        self.levels = np.array([nd.level for nd in self.nodes], dtype=np.int64)
        self.H = int(self.levels.max())
        self.level_nodes = {h: np.flatnonzero(self.levels == h) for h in range(1, self.H + 1)}
        self.level_counts = {h: int(v.size) for h, v in self.level_nodes.items()}
        # position of each node inside its own level
        self.level_pos = np.empty(n, dtype=np.int64)
        for ids in self.level_nodes.values():
            self.level_pos[ids] = np.arange(ids.size)
        self.label_to_id = {nd.label: nd.id for nd in self.nodes}
        self.leaf_codes = self.level_nodes[self.H]
        self._ancestors = None
        self._code_index = None

    def __len__(self):
        return len(self.nodes)

    def __eq__(self, other):
        return (isinstance(other, Ontology) and self.nodes == other.nodes
                and np.array_equal(self.parent, other.parent))

    @property
    def is_padded(self):
        return all(self.children[i] or self.levels[i] == self.H for i in range(len(self)))

    @property
    def n_codes(self):
        return int(self.leaf_codes.size)

    def leaf_labels(self):
        return [self.nodes[i].label for i in self.leaf_codes]

    @property
    def ancestors(self):
        """``(|C|, H)`` table of ancestor node ids; column ``h-1`` holds level ``h``."""
        if self._ancestors is None:
            table = np.empty((self.n_codes, self.H), dtype=np.int64)
            for k, leaf in enumerate(self.leaf_codes):
                node = int(leaf)
                for h in range(self.H, 0, -1):
                    table[k, h - 1] = node
                    node = int(self.parent[node])
            self._ancestors = table
        return self._ancestors

    def ancestor(self, leaf, h):
        if not 1 <= h <= self.H:
            raise LevelOutOfRange(f"level {h} outside 1..{self.H}")
        if self.levels[leaf] != self.H:
            raise LevelOutOfRange(f"node {self.nodes[leaf].label!r} is not a level-{self.H} leaf")
        node = int(leaf)
        for _ in range(self.H - h):
            node = int(self.parent[node])
        return node

    @property
    def code_index(self):
        """Map code label to its column in ``C``.

        Origin labels of padded nodes resolve to the virtual leaf that ends
        their chain, so data recorded against a shallow code still maps.
        """
        if self._code_index is None:
            index = {}
            for k, leaf in enumerate(self.leaf_codes):
                index[self.nodes[leaf].label] = k
            for k, leaf in enumerate(self.leaf_codes):
                nd = self.nodes[leaf]
                if nd.is_virtual:
                    node = int(leaf)
                    while self.nodes[node].is_virtual:
                        node = int(self.parent[node])
                        index.setdefault(self.nodes[node].label, k)
            self._code_index = index
        return self._code_index

    def parent_positions(self, h):
        """Level-``h-1`` position of the parent of every level-``h`` node."""
        return self.level_pos[self.parent[self.level_nodes[h]]]

    def edges(self):
        """Tree edges as ``(parent, child)`` id pairs in child-id order."""
        return [(int(self.parent[i]), i) for i in range(len(self)) if self.parent[i] >= 0]

    def to_edge_list(self):
        rows = [(ROOT_TOKEN, self.nodes[self.root].label)]
        rows += [(self.nodes[p].label, self.nodes[c].label) for p, c in self.edges()]
        return rows


def load_ontology(edge_list):
    """Build a validated :class:`Ontology` from ``(parent, child)`` label pairs.

    The root is the child of the literal ``ROOT`` token. Without such a row,
    the unique parentless node is taken as root. Node levels are depths
    from the root plus one.
    """
    parent_of = {}
    order = []
    marked = []

    def see(label):
        if label not in parent_of:
            parent_of[label] = None
            order.append(label)

    for p, c in edge_list:
        p, c = p.strip(), c.strip()
        if p == c:
            raise CycleDetected(f"self-loop on code {c!r}")
        if p == ROOT_TOKEN:
            see(c)
            if c not in marked:
                marked.append(c)
            continue
        see(p)
        see(c)
        if parent_of[c] is not None and parent_of[c] != p:
            raise MultipleParents(f"code {c!r} has parents {parent_of[c]!r} and {p!r}")
        parent_of[c] = p

    parentless = [lab for lab in order if parent_of[lab] is None]
    if len(marked) > 1:
        raise MultipleRoots(f"several codes under {ROOT_TOKEN}: {marked[0]!r}, {marked[1]!r}")
    if marked:
        root = marked[0]
        if parent_of[root] is not None:
            raise CycleDetected(f"root {root!r} also has parent {parent_of[root]!r}")
        stray = [lab for lab in parentless if lab != root]
        if stray:
            raise OrphanNode(f"code {stray[0]!r} has no parent and is not the root")
    else:
        if len(parentless) > 1:
            raise MultipleRoots(f"parentless codes {parentless[0]!r} and {parentless[1]!r}")
        if not parentless:
            raise CycleDetected(f"no root; code {order[0]!r} lies on a cycle")
        root = parentless[0]

    kids = {lab: [] for lab in order}
    for lab in order:
        if parent_of[lab] is not None:
            kids[parent_of[lab]].append(lab)

    # plain nodes in BFS order first, then virtual ones level by level
    depth = {root: 1}
    queue = deque([root])
    bfs = []
    while queue:
        lab = queue.popleft()
        bfs.append(lab)
        for ch in kids[lab]:
            depth[ch] = depth[lab] + 1
            queue.append(ch)
    if len(bfs) != len(order):
        missing = next(lab for lab in order if lab not in depth)
        raise CycleDetected(f"code {missing!r} is unreachable from root {root!r} (cycle)")

    plain = [lab for lab in bfs if not _VIRTUAL_RE.search(lab)]
    virtual = [lab for lab in bfs if _VIRTUAL_RE.search(lab)]
    ids = {lab: i for i, lab in enumerate(plain)}
    # virtual ids must follow the parent-id order padding produces
    bfs_pos = {lab: k for k, lab in enumerate(bfs)}
    by_level = {}
    for lab in virtual:
        by_level.setdefault(depth[lab], []).append(lab)
    nxt = len(plain)
    for lvl in sorted(by_level):
        for lab in sorted(by_level[lvl], key=lambda x: (ids[parent_of[x]], bfs_pos[x])):
            ids[lab] = nxt
            nxt += 1

    n = len(ids)
    nodes = [None] * n
    parent = [-1] * n
    for lab, i in ids.items():
        nodes[i] = CodeNode(i, lab, depth[lab], bool(_VIRTUAL_RE.search(lab)))
        if parent_of[lab] is not None:
            parent[i] = ids[parent_of[lab]]
    return Ontology(nodes, parent)


def pad_virtual_leaves(ont, recorded=(), suffix=VIRTUAL_SUFFIX):
    """Pad every shallow leaf down to level ``H`` with a chain of virtual nodes.

    Codes in ``recorded`` that are internal nodes also receive a virtual
    chain, so diagnoses made at a coarse level get their own leaf. Existing
    ids are kept; new nodes are appended level by level in parent-id order.
    """
    H = ont.H
    nodes = list(ont.nodes)
    parent = list(ont.parent)
    levels = list(ont.levels)
    has_child = [bool(c) for c in ont.children]
    recorded_ids = {ont.label_to_id[c] for c in recorded if c in ont.label_to_id}
    existing = set(ont.label_to_id)
    padded = {int(ont.parent[i]) for i in range(len(ont)) if ont.nodes[i].is_virtual}

    for lvl in range(1, H):
        current = [i for i in range(len(nodes)) if levels[i] == lvl]
        for i in current:
            needs = not has_child[i] or (i in recorded_ids and not nodes[i].is_virtual)
            if not needs:
                continue
            if i in padded:
                continue
            base = origin_label(nodes[i].label, suffix)
            label = f"{base}{suffix}{lvl + 1}"
            if label in existing:
                continue
            new = len(nodes)
            nodes.append(CodeNode(new, label, lvl + 1, True))
            parent.append(i)
            levels.append(lvl + 1)
            has_child.append(False)
            has_child[i] = True
            padded.add(i)
            existing.add(label)
    return Ontology(nodes, parent)


def read_ontology_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["parent", "child"]:
            raise SchemaError(f"{path}: header must be 'parent,child'")
        return load_ontology((row["parent"], row["child"]) for row in reader)


def write_ontology_csv(ont, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["parent", "child"])
        writer.writerows(ont.to_edge_list())
