"""Similarity distances between template trees.

Two families:

* **Top-down** (pattern trees): paired nodes score 2 and recursion continues
  per relation label, zipping sibling lists positionally; a mismatch at a
  node cuts off its whole subtree.  Distance is ``1 - score/(N1+N2)``.
* **Bottom-up** (context trees): every pair of equal leaves starts a chain
  that climbs both parents while the nodes stay equal; chains are consumed
  greedily by descending score with per-side visited marking so every node
  contributes at most once.

Each family has a *deep* form (base type, grammar type, and value must all
agree) and a *shallow* form (grammar type only).  Component distances over a
template pair average the per-tree distances of the paired trees.
"""

from __future__ import annotations

from .serialize import tree_hash
from .templates import FixTemplate, TemplateTree, TNode, values_equal


def _deep_eq(a: TNode, b: TNode) -> bool:
    return (
        a.bt is b.bt
        and values_equal(a.t, b.t)
        and values_equal(a.v, b.v)
    )


def _shallow_eq(a: TNode, b: TNode) -> bool:
    return values_equal(a.t, b.t)


# ---------------------------------------------------------------------------
# Top-down (pattern) scoring
# ---------------------------------------------------------------------------

def _score_topdown(a: TNode, b: TNode, eq) -> int:
    if not eq(a, b):
        return 0
    score = 2
    for rel in a.relations():
        for ca, cb in zip(a.group(rel), b.group(rel)):
            score += _score_topdown(ca, cb, eq)
    return score


def tree_distance_topdown(t1: TemplateTree, t2: TemplateTree, shallow: bool = False) -> float:
    """Pattern-tree distance in [0,1]; any empty operand gives 1."""
    if t1.is_empty or t2.is_empty:
        return 1.0
    eq = _shallow_eq if shallow else _deep_eq
    total = t1.size + t2.size
    return 1.0 - _score_topdown(t1.root, t2.root, eq) / total


# ---------------------------------------------------------------------------
# Bottom-up (context) scoring
# ---------------------------------------------------------------------------

def _leaves(tree: TemplateTree) -> list[TNode]:
    return [n for n in tree.nodes() if not n.children]


def _chain(la: TNode, lb: TNode, eq) -> list[tuple[TNode, TNode]]:
    pairs: list[tuple[TNode, TNode]] = []
    a: TNode | None = la
    b: TNode | None = lb
    while a is not None and b is not None and eq(a, b):
        pairs.append((a, b))
        a, b = a.parent, b.parent
    return pairs


def _score_bottomup(t1: TemplateTree, t2: TemplateTree, eq) -> int:
    candidates: list[tuple[int, int, int, list[tuple[TNode, TNode]]]] = []
    for la in _leaves(t1):
        for lb in _leaves(t2):
            pairs = _chain(la, lb, eq)
            if pairs:
                candidates.append((len(pairs) * 2, la.id, lb.id, pairs))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    seen1: set[int] = set()
    seen2: set[int] = set()
    score = 0
    for _, _, _, pairs in candidates:
        for a, b in pairs:
            if id(a) in seen1 or id(b) in seen2:
                continue
            seen1.add(id(a))
            seen2.add(id(b))
            score += 2
    return score


def tree_distance_bottomup(t1: TemplateTree, t2: TemplateTree, shallow: bool = False) -> float:
    """Context-tree distance in [0,1]; two empty trees agree (0), one empty
    tree is maximally far (1).  Symmetric by construction: operands are
    ordered by canonical hash before the greedy pairing."""
    if t1.is_empty and t2.is_empty:
        return 0.0
    if t1.is_empty or t2.is_empty:
        return 1.0
    if tree_hash(t2) < tree_hash(t1):
        t1, t2 = t2, t1
    eq = _shallow_eq if shallow else _deep_eq
    total = t1.size + t2.size
    return 1.0 - _score_bottomup(t1, t2, eq) / total


# ---------------------------------------------------------------------------
# Component distances over template pairs (memoized)
# ---------------------------------------------------------------------------

def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


class DistanceCalculator:
    """Memoizes tree-pair distances across a mining run.

    Safe because mining never mutates a tree after it enters the pool; new
    merges always build new trees.  Keys are canonical content hashes, so
    structurally equal trees share entries.
    """

    def __init__(self) -> None:
        self._tree_memo: dict[tuple[str, str, str], float] = {}
        self._hash_memo: dict[int, tuple[TemplateTree, str]] = {}

    def _hash(self, tree: TemplateTree) -> str:
        key = id(tree)
        hit = self._hash_memo.get(key)
        if hit is not None:
            return hit[1]
        h = tree_hash(tree)
        self._hash_memo[key] = (tree, h)  # keep the tree alive so ids stay unique
        return h

    def _tree_distance(self, t1: TemplateTree, t2: TemplateTree,
                       family: str, shallow: bool) -> float:
        h1, h2 = self._hash(t1), self._hash(t2)
        if h2 < h1:
            h1, h2 = h2, h1
        key = (h1, h2, family + ("~s" if shallow else ""))
        hit = self._tree_memo.get(key)
        if hit is not None:
            return hit
        if family == "p":
            value = tree_distance_topdown(t1, t2, shallow)
        else:
            value = tree_distance_bottomup(t1, t2, shallow)
        self._tree_memo[key] = value
        return value

    # -- pattern ---------------------------------------------------------
    def pattern_distance(self, a: FixTemplate, b: FixTemplate, shallow: bool = False) -> float:
        parts = []
        if not (a.before.is_empty and b.before.is_empty):
            parts.append(self._tree_distance(a.before, b.before, "p", shallow))
        if not (a.after.is_empty and b.after.is_empty):
            parts.append(self._tree_distance(a.after, b.after, "p", shallow))
        if not parts:  # both sides empty on both templates: no pattern at all
            return 1.0
        return _mean(parts)

    # -- internal context --------------------------------------------------
    def ic_distance(self, a: FixTemplate, b: FixTemplate, shallow: bool = False) -> float:
        return self._tree_distance(a.ic_tree, b.ic_tree, "c", shallow)

    # -- external context --------------------------------------------------
    def ec_distance(self, a: FixTemplate, b: FixTemplate, shallow: bool = False) -> float:
        return _mean([
            self._tree_distance(a.ec_before, b.ec_before, "c", shallow),
            self._tree_distance(a.ec_after, b.ec_after, "c", shallow),
        ])
