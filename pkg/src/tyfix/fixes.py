"""Turn a (buggy, fixed) source pair into a raw fix template.

Pipeline: diff the texts line-wise, locate the deepest statements touching
the changed lines on each side, lift them to template trees, then prune the
shared skeleton so the pattern keeps only what actually changed.  When both
statement roots agree the fix is *expression level*: the shared spine from
the root down to the edit becomes the internal context, and the attachment
map ``rn`` records where the before/after remainders hang.  Otherwise the
fix is *statement level* and the whole statements form the pattern.  Nearby
sibling statements sharing a variable with the pattern become the external
context.
"""

from __future__ import annotations

import difflib
from typing import Iterable

from .basetypes import BaseType
from .errors import EmptyChange, OversizeCommit, UnparseableDiff
from .source import SyntaxNode, SyntaxTree, parse_source, statements_for_lines
from .templates import (
    Attachment,
    FixTemplate,
    TemplateTree,
    TNode,
    compute_category,
    from_syntax,
    values_equal,
)

DEFAULT_MAX_LINES = 50
DEFAULT_EC_WINDOW = 3

_BLOCK_RELATION = "stmts"


# ---------------------------------------------------------------------------
# Line diffing
# ---------------------------------------------------------------------------

class _LineDiff:
    __slots__ = ("before_lines", "after_lines", "insert_pos", "delete_pos")

    def __init__(self, before_text: str, after_text: str) -> None:
        a = before_text.splitlines()
        b = after_text.splitlines()
        matcher = difflib.SequenceMatcher(None, a, b, autojunk=False)
        self.before_lines: set[int] = set()
        self.after_lines: set[int] = set()
        self.insert_pos: int | None = None  # before-side line the insert follows
        self.delete_pos: int | None = None  # after-side line the cut follows
        for tag, i1, i2, j1, j2 in matcher.get_opcodes():
            if tag in ("replace", "delete"):
                self.before_lines.update(range(i1 + 1, i2 + 1))
            if tag in ("replace", "insert"):
                self.after_lines.update(range(j1 + 1, j2 + 1))
            if tag == "insert" and self.insert_pos is None:
                self.insert_pos = i1  # 1-based line before the insertion (0 = head)
            if tag == "delete" and self.delete_pos is None:
                self.delete_pos = j1

    @property
    def changed_count(self) -> int:
        return len(self.before_lines) + len(self.after_lines)


def _map_after_line(before_text: str, after_text: str, after_line: int) -> int | None:
    """Map a fixed-file line back to its buggy-file line (unchanged lines only)."""
    matcher = difflib.SequenceMatcher(
        None, before_text.splitlines(), after_text.splitlines(), autojunk=False
    )
    for tag, i1, _i2, j1, j2 in matcher.get_opcodes():
        if tag == "equal" and j1 < after_line <= j2:
            return i1 + (after_line - j1)
    return None


def _insertion_anchor_line(before_text: str, after_text: str, diff: _LineDiff) -> int | None:
    """The buggy-file line of the statement a pure insertion sits next to.

    Prefers the unchanged sibling following the added statements inside
    their own suite (so a guard points at the line it protects, even in a
    nested block), falling back to the preceding sibling for appends.
    """
    try:
        after_tree = parse_source(after_text)
    except SyntaxError:
        return None
    added = statements_for_lines(after_tree, sorted(diff.after_lines))
    if not added:
        return None
    first, last = added[0], added[-1]
    parent = first.parent
    if parent is None:
        return None
    rel = None
    for r, child in parent.children:
        if child is first:
            rel = r
            break
    group = [c for r, c in parent.children if r == rel]
    added_ids = {id(s) for s in added}
    idx_first = next((i for i, c in enumerate(group) if c is first), None)
    if idx_first is None:
        return None
    idx_last = max(
        (i for i, c in enumerate(group) if id(c) in added_ids), default=idx_first
    )
    sibling = None
    if idx_last + 1 < len(group):
        sibling = group[idx_last + 1]
    elif idx_first > 0:
        sibling = group[idx_first - 1]
    if sibling is None or sibling.span is None:
        return None
    return _map_after_line(before_text, after_text, sibling.span[0])


def suspect_window(before_text: str, after_text: str) -> tuple[int, int]:
    """The 1-based buggy-side line range a repair run would point at.

    For edits that touch existing lines this is their span.  For pure
    insertions it is the line of the statement the insertion is anchored
    to inside its own suite (the guarded statement for a mid-suite guard,
    the last statement for an append).
    """
    diff = _LineDiff(before_text, after_text)
    if diff.before_lines:
        return (min(diff.before_lines), max(diff.before_lines))
    anchor = _insertion_anchor_line(before_text, after_text, diff)
    if anchor is not None:
        return (anchor, anchor)
    pos = diff.insert_pos or 0
    total = len(before_text.splitlines())
    line = max(pos, 1) if pos >= total else pos + 1
    return (line, line)


# ---------------------------------------------------------------------------
# Lifting statement selections
# ---------------------------------------------------------------------------

def _lift_selection(stmts: list[SyntaxNode]) -> TNode | None:
    if not stmts:
        return None
    if len(stmts) == 1:
        return from_syntax(stmts[0])
    block = TNode(BaseType.STMT, "Block", "")
    for stmt in stmts:
        block.add(_BLOCK_RELATION, from_syntax(stmt))
    return block


def _deep_key(node: TNode):
    return (
        node.t if isinstance(node.t, str) else "\x00ABS",
        node.v if isinstance(node.v, str) else "\x00ABS",
        tuple((rel, _deep_key(child)) for rel, child in node.children),
    )


def _identity_index(group: list[TNode], node: TNode) -> int:
    for i, member in enumerate(group):
        if member is node:
            return i
    raise ValueError("node is not a member of its own sibling group")


# ---------------------------------------------------------------------------
# Shared-skeleton pruning
# ---------------------------------------------------------------------------

class _Pruner:
    """Pairs equal structure between the two lifted trees and collects the
    maximal changed subtrees on each side."""

    def __init__(self) -> None:
        self.b2a: dict[TNode, TNode] = {}
        self.a2b: dict[TNode, TNode] = {}
        self.changed_b: list[TNode] = []
        self.changed_a: list[TNode] = []

    def pair(self, nb: TNode, na: TNode) -> None:
        self.b2a[nb] = na
        self.a2b[na] = nb
        rels = nb.relations()
        for rel in na.relations():
            if rel not in rels:
                rels.append(rel)
        for rel in rels:
            bs = nb.group(rel)
            as_ = na.group(rel)
            matcher = difflib.SequenceMatcher(
                None, [_deep_key(x) for x in bs], [_deep_key(x) for x in as_],
                autojunk=False,
            )
            for tag, i1, i2, j1, j2 in matcher.get_opcodes():
                if tag == "equal":
                    continue  # identical subtrees: dropped from the pattern
                if tag == "replace":
                    span = min(i2 - i1, j2 - j1)
                    for k in range(span):
                        cb, ca = bs[i1 + k], as_[j1 + k]
                        if values_equal(cb.t, ca.t) and values_equal(cb.v, ca.v):
                            self.pair(cb, ca)
                        else:
                            self.changed_b.append(cb)
                            self.changed_a.append(ca)
                    self.changed_b.extend(bs[i1 + span:i2])
                    self.changed_a.extend(as_[j1 + span:j2])
                elif tag == "delete":
                    self.changed_b.extend(bs[i1:i2])
                elif tag == "insert":
                    self.changed_a.extend(as_[j1:j2])


def _path_to_root(node: TNode) -> list[TNode]:
    path = [node]
    while path[-1].parent is not None:
        path.append(path[-1].parent)
    path.reverse()
    return path


def _lowest_common(nodes: list[TNode]) -> TNode:
    paths = [_path_to_root(n) for n in nodes]
    lca = None
    for layer in zip(*paths):
        first = layer[0]
        if all(member is first for member in layer):
            lca = first
        else:
            break
    assert lca is not None, "nodes of one tree always share its root"
    return lca


class _Split:
    """Outcome of pruning: pattern remainders plus attachment information."""

    __slots__ = ("before_root", "after_root", "ic_path", "b_slot", "a_slot")

    def __init__(self, before_root, after_root, ic_path, b_slot, a_slot) -> None:
        self.before_root: TNode | None = before_root
        self.after_root: TNode | None = after_root
        self.ic_path: list[TNode] | None = ic_path  # b-side spine, root..attachment
        self.b_slot: Attachment | None = b_slot
        self.a_slot: Attachment | None = a_slot


def prune_shared(tb: TNode, ta: TNode) -> _Split:
    """Split two lifted statement trees into shared spine + changed parts.

    Raises ``EmptyChange`` when the trees are structurally identical.
    """
    if not (values_equal(tb.t, ta.t) and values_equal(tb.v, ta.v)):
        return _Split(tb, ta, None, None, None)  # statement level

    pruner = _Pruner()
    pruner.pair(tb, ta)
    changed_b, changed_a = pruner.changed_b, pruner.changed_a
    if not changed_b and not changed_a:
        raise EmptyChange("the two sources parse to identical statements")

    if len(changed_b) <= 1 and len(changed_a) <= 1:
        cb = changed_b[0] if changed_b else None
        ca = changed_a[0] if changed_a else None
        pb = cb.parent if cb is not None else pruner.a2b[ca.parent]
        pa = pruner.b2a[pb]
        path = _path_to_root(pb)
        b_slot = None
        if cb is not None:
            rel = cb.relation_in_parent()
            b_slot = (rel, _identity_index(cb.parent.group(rel), cb))
        a_slot = None
        if ca is not None:
            rel = ca.relation_in_parent()
            a_slot = (rel, _identity_index(ca.parent.group(rel), ca))
        return _Split(cb, ca, path, b_slot, a_slot)

    # Multiple edit sites: collapse to the lowest paired ancestor that
    # covers every site, mapped onto the before side.
    attach_points = [cb.parent for cb in changed_b]
    attach_points.extend(pruner.a2b[ca.parent] for ca in changed_a)
    lca_b = _lowest_common(attach_points)
    lca_a = pruner.b2a[lca_b]
    if lca_b.parent is None:
        return _Split(tb, ta, None, None, None)  # whole statements differ
    rel_b = lca_b.relation_in_parent()
    rel_a = lca_a.relation_in_parent()
    return _Split(
        lca_b,
        lca_a,
        _path_to_root(lca_b.parent),
        (rel_b, _identity_index(lca_b.parent.group(rel_b), lca_b)),
        (rel_a, _identity_index(lca_a.parent.group(rel_a), lca_a)),
    )


def _build_ic(path: list[TNode]) -> TemplateTree:
    """Copy the root..attachment spine into a chain tree."""
    copies = [TNode(n.bt, n.t, n.v, n.origin) for n in path]
    for i in range(1, len(path)):
        rel = path[i].relation_in_parent()
        copies[i - 1].add(rel, copies[i])
    return TemplateTree(copies[0])


# ---------------------------------------------------------------------------
# External context
# ---------------------------------------------------------------------------

def _pattern_variables(trees: Iterable[TemplateTree]) -> set[str]:
    out: set[str] = set()
    for tree in trees:
        for node in tree.nodes():
            if node.bt is BaseType.VARIABLE and isinstance(node.v, str) and node.v:
                out.add(node.v)
    return out


def _prune_to_shared(node: TNode, shared: set[str]) -> TNode | None:
    kept_children = []
    for rel, child in node.children:
        pruned = _prune_to_shared(child, shared)
        if pruned is not None:
            kept_children.append((rel, pruned))
    keeps_self = (
        node.bt is BaseType.VARIABLE
        and isinstance(node.v, str)
        and node.v in shared
    )
    if not keeps_self and not kept_children:
        return None
    copy = TNode(node.bt, node.t, node.v, node.origin)
    for rel, child in kept_children:
        copy.add(rel, child)
    return copy


def _sibling_window(
    changed: list[SyntaxNode], window: int
) -> tuple[list[SyntaxNode], list[SyntaxNode]]:
    """Unchanged statements around the edit inside its enclosing body list."""
    first = changed[0]
    parent = first.parent
    if parent is None:
        return [], []
    rel = None
    for r, child in parent.children:
        if child is first:
            rel = r
            break
    if rel is None:
        return [], []
    group = [c for r, c in parent.children if r == rel]
    changed_ids = {id(c) for c in changed}
    idx_first = next(i for i, c in enumerate(group) if c is first)
    idx_last = max(
        (i for i, c in enumerate(group) if id(c) in changed_ids), default=idx_first
    )
    if window <= 0:
        return [], []
    pre = [c for c in group[:idx_first] if id(c) not in changed_ids][-window:]
    post = [c for c in group[idx_last + 1:] if id(c) not in changed_ids][:window]
    return pre, post


def _assemble_ec(stmts: list[TNode]) -> TemplateTree:
    if not stmts:
        return TemplateTree.empty()
    if len(stmts) == 1:
        return TemplateTree(stmts[0])
    block = TNode(BaseType.STMT, "Block", "")
    for stmt in stmts:
        block.add(_BLOCK_RELATION, stmt)
    return TemplateTree(block)


def _external_context(
    pre: list[SyntaxNode], post: list[SyntaxNode], shared: set[str]
) -> TemplateTree:
    kept: list[TNode] = []
    for stmt in pre + post:
        pruned = _prune_to_shared(from_syntax(stmt), shared)
        if pruned is not None:
            kept.append(pruned)
    return _assemble_ec(kept)


# ---------------------------------------------------------------------------
# Statement anchors for additions
# ---------------------------------------------------------------------------

def _stmt_anchor_for_add(added: list[SyntaxNode]) -> tuple[str, str | None]:
    """Where the added statements sat in their suite: at its head, at its
    tail, or in the middle (between surviving neighbours)."""
    first = added[0]
    parent = first.parent
    if parent is None:
        return ("mid", None)
    rel = None
    for r, child in parent.children:
        if child is first:
            rel = r
            break
    group = [c for r, c in parent.children if r == rel]
    if group and group[0] is first:
        return ("head", rel)
    if group and group[-1] is added[-1]:
        return ("tail", rel)
    return ("mid", rel)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def parse_fix(
    before_text: str,
    after_text: str,
    fix_id: str,
    max_lines: int = DEFAULT_MAX_LINES,
    ec_window: int = DEFAULT_EC_WINDOW,
) -> FixTemplate:
    """Build a raw (unmerged) fix template from a buggy/fixed source pair.

    Raises ``UnparseableDiff`` for sources that do not parse,
    ``OversizeCommit`` when more than ``max_lines`` lines changed, and
    ``EmptyChange`` when no statement-level difference remains.
    """
    try:
        before_tree = parse_source(before_text)
        after_tree = parse_source(after_text)
    except SyntaxError as exc:
        raise UnparseableDiff(f"fix {fix_id}: source does not parse: {exc}") from exc

    diff = _LineDiff(before_text, after_text)
    if diff.changed_count == 0:
        raise EmptyChange(f"fix {fix_id}: the two sources are identical")
    if diff.changed_count > max_lines:
        raise OversizeCommit(
            f"fix {fix_id}: {diff.changed_count} changed lines exceed the "
            f"limit of {max_lines}"
        )

    b_stmts = statements_for_lines(before_tree, diff.before_lines)
    a_stmts = statements_for_lines(after_tree, diff.after_lines)
    if not b_stmts and not a_stmts:
        raise EmptyChange(f"fix {fix_id}: no statement is touched by the change")

    tb = _lift_selection(b_stmts)
    ta = _lift_selection(a_stmts)

    ic_tree = TemplateTree.empty()
    rn: dict[int, tuple[int | None, int | None]] = {}
    anchors: dict[int, dict[str, Attachment | None]] = {}
    stmt_anchor: tuple[str, str | None] | None = None

    if tb is not None and ta is not None:
        split = prune_shared(tb, ta)
        before = TemplateTree(split.before_root.clone()) if split.before_root else TemplateTree.empty()
        after = TemplateTree(split.after_root.clone()) if split.after_root else TemplateTree.empty()
        if split.ic_path is not None:
            ic_tree = _build_ic(split.ic_path)
            attach_id = ic_tree.size - 1  # the spine ends at the attachment
            rn[attach_id] = (
                 0 if not before.is_empty else None,
                 0 if not after.is_empty else None,
            )
            anchors[attach_id] = {"b_slot": split.b_slot, "a_slot": split.a_slot}
    elif tb is None:
        before = TemplateTree.empty()
        after = TemplateTree(ta)
        stmt_anchor = _stmt_anchor_for_add(a_stmts)
    else:
        before = TemplateTree(tb)
        after = TemplateTree.empty()

    category = compute_category(before, after)

    shared = _pattern_variables([before, after])
    # A pure insertion (or deletion) has statements on one side only, but its
    # neighbours are unchanged code present in both files, so the sibling
    # window around the touched statements describes the context of both.
    pre_b, post_b = _sibling_window(b_stmts or a_stmts, ec_window)
    pre_a, post_a = _sibling_window(a_stmts or b_stmts, ec_window)
    ec_before = _external_context(pre_b, post_b, shared)
    ec_after = _external_context(pre_a, post_a, shared)

    return FixTemplate(
        category=category,
        before=before,
        after=after,
        ic_tree=ic_tree,
        rn=rn,
        anchors=anchors,
        stmt_anchor=stmt_anchor,
        ec_before=ec_before,
        ec_after=ec_after,
        instance_ids=[fix_id],
    )
