"""Matching mined templates against buggy code.

The program side is summarized as a *bug view*: the deepest statements
covering the suspect lines, plus windowed sibling context pruned to the
variables those statements use.  The template side is queried through
*concat*: the internal-context spine with the before-pattern tree attached
at its recorded anchor.  Matching is a relation-respecting, order-preserving
embedding where template holes act as wildcards: a value hole matches any
value, a full hole matches any node of the same base type.

Matched templates are ranked: templates with the same concat query form a
group ordered by popularity (instance count), and groups are ordered from
concrete to abstract by the after-pattern's abstraction ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

from .basetypes import ABS
from .errors import EmptyMatch, EmptyResult
from .fixes import (
    _assemble_ec,
    _lift_selection,
    _pattern_variables,
    _prune_to_shared,
    _sibling_window,
)
from .serialize import dumps_canonical, template_hash, tree_to_json
from .source import SyntaxNode, SyntaxTree, statements_for_lines
from .templates import FixTemplate, TemplateTree, TNode, from_syntax

DEFAULT_CTX_WINDOW = 3


# ---------------------------------------------------------------------------
# Bug views
# ---------------------------------------------------------------------------

@dataclass
class BugView:
    """The program-side summary a template is matched against."""

    tree: TemplateTree
    stmts: list[SyntaxNode]
    source: SyntaxTree
    before_ctx: TemplateTree
    after_ctx: TemplateTree


def build_view(source: SyntaxTree, lines, window: int = DEFAULT_CTX_WINDOW) -> BugView:
    """Lift the statements covering the 1-based ``lines`` plus their context.

    Raises ``EmptyResult`` when no statement intersects the lines.
    """
    stmts = statements_for_lines(source, lines)
    if not stmts:
        raise EmptyResult("no statement covers the suspect lines")
    root = _lift_selection(stmts)
    tree = TemplateTree(root)
    shared = _pattern_variables([tree])
    pre, post = _sibling_window(stmts, window)

    def _ctx(candidates: list[SyntaxNode]) -> TemplateTree:
        kept = []
        for stmt in candidates:
            pruned = _prune_to_shared(from_syntax(stmt), shared)
            if pruned is not None:
                kept.append(pruned)
        return _assemble_ec(kept)

    return BugView(
        tree=tree,
        stmts=stmts,
        source=source,
        before_ctx=_ctx(pre),
        after_ctx=_ctx(post),
    )


# ---------------------------------------------------------------------------
# Node and tree matching
# ---------------------------------------------------------------------------

def node_match(b: TNode, a: TNode) -> bool:
    """Does template node ``b`` accept program node ``a``?"""
    if b.v is not ABS and b.v != a.v:
        return False
    if b.bt is not a.bt:
        return False
    if b.t is ABS:
        return True
    return b.t == a.t or b.t == a.bt.value


def match_tree(pattern: TNode, subject: TNode) -> dict[TNode, TNode] | None:
    """Match ``pattern`` at ``subject``; returns pattern-node -> program-node
    or None.  Children embed per relation, order preserved, extras allowed."""
    if not node_match(pattern, subject):
        return None
    mapping: dict[TNode, TNode] = {pattern: subject}
    for rel in pattern.relations():
        candidates = subject.group(rel)
        i = 0
        for child in pattern.group(rel):
            found = None
            while i < len(candidates):
                sub = match_tree(child, candidates[i])
                i += 1
                if sub is not None:
                    found = sub
                    break
            if found is None:
                return None
            mapping.update(found)
    return mapping


def find_matches(pattern: TemplateTree, subject: TemplateTree) -> list[dict[TNode, TNode]]:
    """All sites in ``subject`` where ``pattern`` matches, in document order."""
    if pattern.is_empty:
        return []
    out = []
    if not subject.is_empty:
        for node in subject.nodes():
            m = match_tree(pattern.root, node)
            if m is not None:
                out.append(m)
    return out


# ---------------------------------------------------------------------------
# Concat query
# ---------------------------------------------------------------------------

def concat_query(t: FixTemplate) -> TemplateTree:
    """The matchable buggy shape: internal-context spine with the before
    tree attached at its anchor (either part may be absent)."""
    if t.ic_tree.is_empty:
        return t.before.clone() if not t.before.is_empty else TemplateTree.empty()
    mapping: dict[TNode, TNode] = {}
    tree = t.ic_tree.clone(mapping)
    if t.before.is_empty:
        return tree
    attach_id = next(iter(t.rn))
    attach = tree.node_by_id(attach_id)
    slot = (t.anchors.get(attach_id) or {}).get("b_slot")
    relation = slot[0] if slot is not None else "value"
    attach.add(relation, t.before.clone().root)
    tree.renumber()
    return tree


def query_hash(t: FixTemplate) -> str:
    q = concat_query(t)
    return dumps_canonical(tree_to_json(q)) if not q.is_empty else "{}"


# ---------------------------------------------------------------------------
# Template-level matching
# ---------------------------------------------------------------------------

def _context_matches(template_ctx: TemplateTree, view_nodes: list[TNode]) -> bool:
    if template_ctx.is_empty:
        return True
    stmts = template_ctx.root.group("stmts") if template_ctx.root.t == "Block" else [template_ctx.root]
    for stmt in stmts:
        if not any(match_tree(stmt, n) is not None for n in view_nodes):
            return False
    return True


def template_match(t: FixTemplate, view: BugView) -> bool:
    """Full template test: bug shape plus surrounding context.

    A template's context trees describe the statements around the edit in
    the buggy and in the fixed file; both are unchanged code, so each must
    match somewhere in the view's combined (preceding plus following)
    context pool.  A template with no query (a pure statement insertion)
    has nothing to match the selected statements against — they are
    untouched neighbours of the insertion point, so they join the pool.
    """
    q = concat_query(t)
    pool: list[TNode] = []
    if not q.is_empty:
        if not any(match_tree(q.root, n) is not None for n in view.tree.nodes()):
            return False
    else:
        pool.extend(view.tree.nodes())
    if not view.before_ctx.is_empty:
        pool.extend(view.before_ctx.nodes())
    if not view.after_ctx.is_empty:
        pool.extend(view.after_ctx.nodes())
    return (
        _context_matches(t.ec_before, pool)
        and _context_matches(t.ec_after, pool)
    )


def bfs_select(t: FixTemplate, view: BugView) -> list[TNode]:
    """Deepest program nodes where the concat query matches: sites whose
    descendants contain no further match.  Document order."""
    q = concat_query(t)
    if q.is_empty:
        return []
    matched = [n for n in view.tree.nodes() if match_tree(q.root, n) is not None]
    if not matched:
        raise EmptyMatch("the template does not match the bug tree")
    matched_set = {id(n) for n in matched}
    frontier = []
    for node in matched:
        if any(
            id(desc) in matched_set
            for desc in node.walk()
            if desc is not node
        ):
            continue
        frontier.append(node)
    return frontier


def match_forest(forest: list[FixTemplate], view: BugView) -> list[FixTemplate]:
    """Scan every node of every mined tree (roots and lineage) and return
    the templates whose pattern and contexts accept the view."""
    out = []
    for root in forest:
        for t in root.walk():
            if template_match(t, view):
                out.append(t)
    return out


# ---------------------------------------------------------------------------
# Ranking
# ---------------------------------------------------------------------------

def abstraction_ratio(tree: TemplateTree) -> float:
    """Share of nodes carrying a hole; the empty tree counts as fully
    abstract (1.0)."""
    nodes = tree.nodes()
    if not nodes:
        return 1.0
    holes = sum(1 for n in nodes if n.v is ABS or n.t is ABS)
    return holes / len(nodes)


def rank_matches(templates: list[FixTemplate]) -> list[FixTemplate]:
    """Order matched templates concrete-first.

    Templates sharing a concat query form one group ordered by instance
    count (most general evidence first); groups are ordered by the
    after-pattern abstraction ratio of their best member, then by hash.
    """
    groups: dict[str, list[FixTemplate]] = {}
    for t in templates:
        groups.setdefault(query_hash(t), []).append(t)
    ordered_groups = []
    for qh, members in groups.items():
        members.sort(key=lambda t: (-t.instance_count, template_hash(t)))
        ordered_groups.append((abstraction_ratio(members[0].after), qh, members))
    ordered_groups.sort(key=lambda g: (g[0], g[1]))
    out: list[FixTemplate] = []
    for _, _, members in ordered_groups:
        out.extend(members)
    return out


# ---------------------------------------------------------------------------
# Coverage
# ---------------------------------------------------------------------------

def covers(t: FixTemplate, view: BugView, specific_after: TemplateTree) -> bool:
    """Would this template have led to the holdout fix?  The template must
    match the buggy view and its (general) after pattern must accept the
    holdout's (specific) after tree."""
    if not template_match(t, view):
        return False
    if t.after.is_empty or specific_after.is_empty:
        return t.after.is_empty and specific_after.is_empty
    return match_tree(t.after.root, specific_after.root) is not None


def forest_covers(forest: list[FixTemplate], view: BugView, specific_after: TemplateTree) -> bool:
    return any(
        covers(t, view, specific_after)
        for root in forest
        for t in root.walk()
    )
