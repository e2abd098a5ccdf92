"""Generalizing two templates into one by abstracting their differences.

Pattern trees merge **top-down**, node pair by node pair:

* same base type, grammar type, and value  ->  copy, recurse into children
  (paired per relation, zipped positionally; unpaired extras drop);
* same base type and grammar type, values differ  ->  value hole (``v=ABS``),
  recurse;
* same base type, grammar types differ  ->  full hole (``t=v=ABS``), children
  pruned;
* base types differ  ->  the node pair is removed.

Context trees merge **bottom-up**: every compatible leaf pair starts a chain
that climbs both parents in lockstep while the relations agree and the node
pair needs at most value abstraction.  Only chains that reach both roots
survive; the merged tree is the union of the surviving chains' paths through
the first tree, values abstracted wherever any partner disagreed.  This
keeps the result connected and never invents edges absent from the inputs.

The internal context must additionally keep its attachment point alive: the
two attachment nodes must land in one surviving chain together, and the
recorded attachment slots must agree on their relation — otherwise the merge
is rejected so the miner can ban the pair.
"""

from __future__ import annotations

from .basetypes import ABS
from .errors import InvalidPattern, ResultEmptyPattern
from .templates import (
    Attachment,
    FixTemplate,
    TemplateTree,
    TNode,
    tree_contains,
    values_equal,
)

_SAME, _VALUE, _TYPE, _REMOVE = 0, 1, 2, 3


def _case(a: TNode, b: TNode) -> int:
    if a.bt is not b.bt:
        return _REMOVE
    if not values_equal(a.t, b.t):
        return _TYPE
    if not values_equal(a.v, b.v):
        return _VALUE
    return _SAME


# ---------------------------------------------------------------------------
# Pattern (top-down) abstraction
# ---------------------------------------------------------------------------

def abstract_nodes(a: TNode, b: TNode) -> TNode | None:
    """Merge one node pair per the four cases; None means removal."""
    case = _case(a, b)
    if case == _REMOVE:
        return None
    if case == _TYPE:
        return TNode(a.bt, ABS, ABS)
    out = TNode(a.bt, a.t, a.v if case == _SAME else ABS)
    for rel in a.relations():
        for ca, cb in zip(a.group(rel), b.group(rel)):
            merged = abstract_nodes(ca, cb)
            if merged is not None:
                out.add(rel, merged)
    return out


def merge_pattern_trees(a: TemplateTree, b: TemplateTree) -> TemplateTree:
    if a.is_empty or b.is_empty:
        return TemplateTree.empty()
    merged = abstract_nodes(a.root, b.root)
    return TemplateTree(merged) if merged is not None else TemplateTree.empty()


# ---------------------------------------------------------------------------
# Context (bottom-up) abstraction
# ---------------------------------------------------------------------------

def _chains(t1: TemplateTree, t2: TemplateTree) -> list[list[tuple[TNode, TNode]]]:
    leaves1 = [n for n in t1.nodes() if not n.children]
    leaves2 = [n for n in t2.nodes() if not n.children]
    chains: list[list[tuple[TNode, TNode]]] = []
    for l1 in leaves1:
        for l2 in leaves2:
            if _case(l1, l2) > _VALUE:
                continue
            chain: list[tuple[TNode, TNode]] = []
            a: TNode = l1
            b: TNode = l2
            ok = True
            while True:
                chain.append((a, b))
                pa, pb = a.parent, b.parent
                if pa is None and pb is None:
                    break
                if pa is None or pb is None:
                    ok = False
                    break
                if a.relation_in_parent() != b.relation_in_parent():
                    ok = False
                    break
                if _case(pa, pb) > _VALUE:
                    ok = False
                    break
                a, b = pa, pb
            if ok:
                chains.append(chain)
    return chains


def _merge_context(
    t1: TemplateTree, t2: TemplateTree
) -> tuple[TemplateTree, dict[int, TNode], set[tuple[int, int]]]:
    """Chain-merge two context trees.

    Returns the merged tree, a map id(t1 node) -> merged node, and the set
    of (id(t1 node), id(t2 node)) pairs that appeared in surviving chains.
    """
    empty: tuple[TemplateTree, dict[int, TNode], set[tuple[int, int]]]
    empty = (TemplateTree.empty(), {}, set())
    if t1.is_empty or t2.is_empty:
        return empty
    chains = _chains(t1, t2)
    if not chains:
        return empty
    include: dict[int, TNode] = {}
    needs_abs: set[int] = set()
    paired: set[tuple[int, int]] = set()
    for chain in chains:
        for n1, n2 in chain:
            include[id(n1)] = n1
            paired.add((id(n1), id(n2)))
            if not values_equal(n1.v, n2.v):
                needs_abs.add(id(n1))
    mapping: dict[int, TNode] = {}

    def rebuild(node: TNode) -> TNode:
        copy = TNode(node.bt, node.t, ABS if id(node) in needs_abs else node.v, node.origin)
        mapping[id(node)] = copy
        for rel, child in node.children:
            if id(child) in include:
                copy.add(rel, rebuild(child))
        return copy

    merged = TemplateTree(rebuild(t1.root))
    return merged, mapping, paired


def merge_context_trees(a: TemplateTree, b: TemplateTree) -> TemplateTree:
    merged, _, _ = _merge_context(a, b)
    return merged


# ---------------------------------------------------------------------------
# Internal context with attachment preservation
# ---------------------------------------------------------------------------

def _attachment_of(t: FixTemplate) -> TNode:
    if len(t.rn) != 1:
        raise ResultEmptyPattern(
            f"expected exactly one attachment entry, found {len(t.rn)}"
        )
    nid = next(iter(t.rn))
    node = t.ic_tree.node_by_id(nid)
    if node is None:
        raise ResultEmptyPattern(f"attachment node {nid} is missing from the context tree")
    return node


def _merge_slot(s1: Attachment | None, s2: Attachment | None) -> Attachment | None:
    if s1 is None and s2 is None:
        return None
    if s1 is None or s2 is None:
        raise ResultEmptyPattern("attachment slots disagree on which sides exist")
    if s1[0] != s2[0]:
        raise ResultEmptyPattern(
            f"attachment relations disagree: {s1[0]!r} vs {s2[0]!r}"
        )
    return (s1[0], min(s1[1], s2[1]))


def merge_internal_context(
    t1: FixTemplate, t2: FixTemplate, b_empty: bool, a_empty: bool
) -> tuple[TemplateTree, dict[int, tuple[int | None, int | None]], dict[int, dict[str, Attachment | None]]]:
    """Merge internal contexts; raises ``ResultEmptyPattern`` when the
    attachment cannot be carried into the merged tree."""
    ic1, ic2 = t1.ic_tree, t2.ic_tree
    if ic1.is_empty and ic2.is_empty:
        return TemplateTree.empty(), {}, {}
    if ic1.is_empty or ic2.is_empty:
        raise ResultEmptyPattern(
            "cannot reconcile an expression-level fix with a statement-level one"
        )
    att1 = _attachment_of(t1)
    att2 = _attachment_of(t2)
    merged, mapping, paired = _merge_context(ic1, ic2)
    if merged.is_empty:
        raise ResultEmptyPattern("the merged internal context is empty")
    if (id(att1), id(att2)) not in paired:
        raise ResultEmptyPattern("the attachment nodes do not survive the merge together")
    new_att = mapping[id(att1)]
    a1 = t1.anchors.get(att1.id, {})
    a2 = t2.anchors.get(att2.id, {})
    new_anchor = {
        "b_slot": _merge_slot(a1.get("b_slot"), a2.get("b_slot")),
        "a_slot": _merge_slot(a1.get("a_slot"), a2.get("a_slot")),
    }
    rn = {new_att.id: (None if b_empty else 0, None if a_empty else 0)}
    anchors = {new_att.id: new_anchor}
    return merged, rn, anchors


# ---------------------------------------------------------------------------
# Whole-template merges for the three mining stages
# ---------------------------------------------------------------------------

def _merged_ids(t1: FixTemplate, t2: FixTemplate) -> list[str]:
    return sorted(set(t1.instance_ids) | set(t2.instance_ids))


def _merged_stmt_anchor(t1: FixTemplate, t2: FixTemplate):
    return t1.stmt_anchor if t1.stmt_anchor == t2.stmt_anchor else None


def merge_templates(t1: FixTemplate, t2: FixTemplate) -> FixTemplate:
    """Full (pattern-stage) merge.

    Raises ``ResultEmptyPattern`` when abstraction erases the pattern or the
    attachment, and ``InvalidPattern`` when the merged pattern no longer
    carries its category: a side that was present got erased, or an Insert
    pattern lost the embedding of its before tree inside its after tree
    (which the Insert application strategy depends on).  The category label
    itself is inherited — every generalized instance shares it.
    """
    if t1.category != t2.category:
        raise InvalidPattern(
            f"cannot merge across categories: {t1.category} vs {t2.category}"
        )
    before = merge_pattern_trees(t1.before, t2.before)
    after = merge_pattern_trees(t1.after, t2.after)
    if before.is_empty and after.is_empty:
        raise ResultEmptyPattern("abstraction erased the whole pattern")
    if (before.is_empty != t1.before.is_empty) or (after.is_empty != t1.after.is_empty):
        raise InvalidPattern("abstraction erased one side of the pattern")
    category = t1.category
    if category == "Insert" and not tree_contains(before, after):
        raise InvalidPattern("the merged pattern lost its insert embedding")
    ic, rn, anchors = merge_internal_context(
        t1, t2, before.is_empty, after.is_empty
    )
    return FixTemplate(
        category=category,
        before=before,
        after=after,
        ic_tree=ic,
        rn=rn,
        anchors=anchors,
        stmt_anchor=_merged_stmt_anchor(t1, t2),
        ec_before=merge_context_trees(t1.ec_before, t2.ec_before),
        ec_after=merge_context_trees(t1.ec_after, t2.ec_after),
        instance_ids=_merged_ids(t1, t2),
        children=[t1, t2],
    )


def merge_external_stage(t1: FixTemplate, t2: FixTemplate) -> FixTemplate:
    """External-context-stage merge: pattern and internal context are shared
    (the caller clusters on them), only the external context abstracts."""
    return FixTemplate(
        category=t1.category,
        before=t1.before,
        after=t1.after,
        ic_tree=t1.ic_tree,
        rn=t1.rn,
        anchors=t1.anchors,
        stmt_anchor=_merged_stmt_anchor(t1, t2),
        ec_before=merge_context_trees(t1.ec_before, t2.ec_before),
        ec_after=merge_context_trees(t1.ec_after, t2.ec_after),
        instance_ids=_merged_ids(t1, t2),
        children=[t1, t2],
    )


def merge_internal_stage(
    t1: FixTemplate, t2: FixTemplate
) -> tuple[FixTemplate, FixTemplate]:
    """Internal-context-stage merge: the two templates share a pattern; each
    keeps its own external context but adopts the common abstracted internal
    context.  Raises ``ResultEmptyPattern`` when the contexts cannot merge."""
    ic, rn, anchors = merge_internal_context(
        t1, t2, t1.before.is_empty, t1.after.is_empty
    )
    out = []
    for t in (t1, t2):
        out.append(
            FixTemplate(
                category=t.category,
                before=t.before,
                after=t.after,
                ic_tree=ic,
                rn=rn,
                anchors=anchors,
                stmt_anchor=t.stmt_anchor,
                ec_before=t.ec_before,
                ec_after=t.ec_after,
                instance_ids=list(t.instance_ids),
                children=[t],
            )
        )
    return out[0], out[1]
