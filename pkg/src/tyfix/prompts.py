"""Applying a matched template to a program and rendering masked prompts.

Application replaces the program subtree matched by the before pattern with
the after pattern, completed so it renders: grammar-required children that
abstraction pruned away come back as dummy hole nodes, each of which later
renders as one mask token.  For Insert templates the before pattern's image
inside the after pattern is instantiated with the matched program subtree,
so unchanged code is reused verbatim and only genuinely new material is
masked.  Add templates splice their statements at the anchor implied by the
template's surrounding context; Remove templates delete the matched image.

Rendering walks the whole modified file and numbers holes ``<extra_id_0>``,
``<extra_id_1>``, ... densely in order of appearance.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .basetypes import ABS, ANNOTATION_RELATIONS, BaseType
from .errors import EmptyMatch, GrammarViolation, NoMatchSite, TooManyMasks, UnparseError
from .matching import BugView, bfs_select, match_tree
from .source import (
    STMT_FIELDS,
    SyntaxNode,
    SyntaxTree,
    clone_node,
    render,
    required_child_fields,
)
from .templates import (
    Attachment,
    FixTemplate,
    TemplateTree,
    TNode,
    from_syntax,
    to_syntax,
    values_equal,
)

MASK_FMT = "<extra_id_{}>"
MASK_RE = re.compile(r"<extra_id_(\d+)>")
DEFAULT_MASK_CAP = 100

_BLOCK = "Block"
_BLOCK_RELATION = "stmts"


@dataclass
class CodePrompt:
    """A masked repair prompt plus the full-file scaffold behind it.

    ``text`` is the (possibly windowed) prompt handed to a mask filler;
    ``full_text`` is the complete candidate file with the same mask tokens,
    used to assemble patches from fills.
    """

    text: str
    mask_count: int
    origin: dict = field(default_factory=dict)
    full_text: str = ""


# ---------------------------------------------------------------------------
# Completing pruned after-patterns
# ---------------------------------------------------------------------------

#: Statement bodies that may not render empty ("body" of a suite-bearing
#: statement); orelse/finalbody legitimately render as nothing.
_NONEMPTY_BODY_KINDS = frozenset(STMT_FIELDS) - {"Module", "Interactive", _BLOCK}


def _slot_bt(parent: TNode, relation: str) -> BaseType:
    if relation in ANNOTATION_RELATIONS:
        return BaseType.TYPE
    if relation in ("op", "ops"):
        return BaseType.OP
    if isinstance(parent.t, str) and relation in STMT_FIELDS.get(parent.t, ()):
        return BaseType.STMT
    return BaseType.EXPR


def _hole(bt: BaseType) -> TNode:
    return TNode(bt, ABS, ABS)


def _dummy_for(parent: TNode, relation: str) -> TNode:
    """A minimal renderable child for a grammar slot lost to abstraction."""
    if relation == "names":  # import lists hold aliases, not expressions
        return TNode(BaseType.EXPR, "alias", ABS)
    if relation == "items":  # with-statements hold withitems
        item = TNode(BaseType.EXPR, "withitem", "")
        item.add("context_expr", _hole(BaseType.EXPR))
        return item
    if relation == "handlers":
        handler = TNode(BaseType.STMT, "ExceptHandler", "")
        handler.add("body", _hole(BaseType.STMT))
        return handler
    if relation == "cases":
        case = TNode(BaseType.STMT, "match_case", "")
        case.add("pattern", TNode(BaseType.EXPR, "MatchAs", ""))
        case.add("body", _hole(BaseType.STMT))
        return case
    if relation == "args" and parent.t in ("FunctionDef", "AsyncFunctionDef", "Lambda"):
        return TNode(BaseType.EXPR, "arguments", "")
    return _hole(_slot_bt(parent, relation))


def _complete_node(node: TNode) -> None:
    kind = node.t
    if not isinstance(kind, str):
        return
    present = set(node.relations())
    for fld in required_child_fields(kind):
        if fld in present:
            continue
        if kind == "Call" and fld == "func" and node.v != "":
            continue  # a folded call name (or a value hole) stands in for func
        node.add(fld, _dummy_for(node, fld))
    # Suites and clause lists that cannot render empty.
    if kind in _NONEMPTY_BODY_KINDS and not node.group("body"):
        node.add("body", _hole(BaseType.STMT))
    if kind == "Try" and not node.group("handlers") and not node.group("finalbody"):
        node.add("handlers", _dummy_for(node, "handlers"))
    if kind in ("With", "AsyncWith") and not node.group("items"):
        node.add("items", _dummy_for(node, "items"))
    if kind in ("Import", "ImportFrom") and not node.group("names"):
        node.add("names", _dummy_for(node, "names"))
    if kind in ("Assign", "Delete") and not node.group("targets"):
        node.add("targets", _hole(BaseType.EXPR))
    if kind == "Match" and not node.group("cases"):
        node.add("cases", _dummy_for(node, "cases"))
    if kind == "BoolOp":
        while len(node.group("values")) < 2:
            node.add("values", _hole(BaseType.EXPR))


def complete_template_tree(tree: TemplateTree) -> TemplateTree:
    """Clone ``tree`` and restore grammar-required children as hole nodes."""
    if tree.is_empty:
        return TemplateTree.empty()
    out = tree.clone()
    for node in list(out.root.walk()):
        _complete_node(node)
    return out


# ---------------------------------------------------------------------------
# Locating the before pattern inside the after pattern (content reuse)
# ---------------------------------------------------------------------------

def _embed_map(b: TNode, a: TNode) -> dict[TNode, TNode] | None:
    """The greedy-leftmost exact embedding of ``b``'s subtree at ``a``."""
    if not values_equal(b.t, a.t) or not values_equal(b.v, a.v):
        return None
    out = {b: a}
    for rel in b.relations():
        targets = a.group(rel)
        i = 0
        for bc in b.group(rel):
            got = None
            while i < len(targets):
                got = _embed_map(bc, targets[i])
                i += 1
                if got is not None:
                    break
            if got is None:
                return None
            out.update(got)
    return out


def _first_embedding(b: TNode, a_root: TNode) -> dict[TNode, TNode] | None:
    for node in a_root.walk():
        found = _embed_map(b, node)
        if found is not None:
            return found
    return None


# ---------------------------------------------------------------------------
# Tree surgery helpers
# ---------------------------------------------------------------------------

def _top_pattern_nodes(root: TNode) -> list[TNode]:
    """The independently spliceable units of a pattern (Block unwraps)."""
    if root.t == _BLOCK:
        return root.group(_BLOCK_RELATION)
    return [root]


def _swap_tnode(image: TNode, replacement: TNode) -> TNode:
    parent = image.parent
    if parent is None:
        return replacement
    for i, (rel, child) in enumerate(parent.children):
        if child is image:
            replacement.parent = parent
            parent.children[i] = (rel, replacement)
            return replacement
    raise NoMatchSite("pattern image vanished from its parent during reuse")


def _child_position(parent: SyntaxNode, child: SyntaxNode) -> tuple[str, int]:
    for i, (rel, node) in enumerate(parent.children):
        if node is child:
            return rel, i
    raise NoMatchSite("matched node is no longer a child of its parent")


def _slot_position(parent: SyntaxNode, slot: Attachment) -> tuple[str, int]:
    """Absolute child-list position for (relation, index-within-relation)."""
    relation, idx = slot
    members = [i for i, (rel, _) in enumerate(parent.children) if rel == relation]
    if not members:
        return relation, len(parent.children)
    if idx >= len(members):
        return relation, members[-1] + 1
    return relation, members[max(idx, 0)]


def _insert_children(
    parent: SyntaxNode, position: int, relation: str, nodes: list[SyntaxNode]
) -> None:
    for offset, node in enumerate(nodes):
        node.parent = parent
        parent.children.insert(position + offset, (relation, node))


def _remove_child(parent: SyntaxNode, child: SyntaxNode) -> tuple[str, int]:
    rel, pos = _child_position(parent, child)
    del parent.children[pos]
    child.parent = None
    return rel, pos


def _fill_emptied_body(parent: SyntaxNode, relation: str) -> None:
    if (
        relation == "body"
        and parent.kind in _NONEMPTY_BODY_KINDS
        and not parent.group("body")
    ):
        parent.add("body", SyntaxNode("Pass"))


# ---------------------------------------------------------------------------
# Template application
# ---------------------------------------------------------------------------

def _concat_parts(t: FixTemplate) -> tuple[TemplateTree, TNode | None, TNode | None]:
    """Like the matcher's concat query but keeping references to the cloned
    before-pattern root and the cloned attachment node."""
    if t.ic_tree.is_empty:
        if t.before.is_empty:
            return TemplateTree.empty(), None, None
        btree = t.before.clone()
        return btree, btree.root, None
    tree = t.ic_tree.clone()
    if t.before.is_empty or not t.rn:
        return tree, None, (tree.node_by_id(next(iter(t.rn))) if t.rn else None)
    attach_id = next(iter(t.rn))
    attach = tree.node_by_id(attach_id)
    if attach is None:
        raise NoMatchSite("the attachment id is missing from the context spine")
    slot = (t.anchors.get(attach_id) or {}).get("b_slot")
    relation = slot[0] if slot is not None else "value"
    b_root = t.before.clone().root
    attach.add(relation, b_root)
    return tree, b_root, attach


def _lockstep(a: TNode, b: TNode, out: dict[TNode, TNode]) -> None:
    out[a] = b
    for (_, ca), (_, cb) in zip(a.children, b.children):
        _lockstep(ca, cb, out)


def _render_after(
    t: FixTemplate,
    prog_of_b: dict[TNode, TNode] | None,
) -> list[SyntaxNode]:
    """The syntax nodes the after pattern contributes, completed and (for
    Insert templates) instantiated with the matched program content."""
    completed = complete_template_tree(t.after)
    if completed.is_empty:
        return []
    if t.category == "Insert" and prog_of_b is not None and not t.before.is_empty:
        pairs = _first_embedding(t.before.root, completed.root)
        if pairs is not None:
            reuse_roots = _top_pattern_nodes(t.before.root)
            if t.before.root.t == _BLOCK:
                reuse_roots = [b for b in reuse_roots if b in pairs]
            for b_node in reuse_roots:
                image = pairs.get(b_node)
                prog = prog_of_b.get(b_node)
                if image is None or prog is None or prog.origin is None:
                    continue
                concrete = from_syntax(prog.origin)
                if image is completed.root:
                    completed = TemplateTree(concrete)
                else:
                    _swap_tnode(image, concrete)
    return [to_syntax(n) for n in _top_pattern_nodes(completed.root)]


def _resolve_copies(
    nodes: list[TNode], cmap: dict[SyntaxNode, SyntaxNode]
) -> list[SyntaxNode]:
    out = []
    for node in nodes:
        if node.origin is None or node.origin not in cmap:
            raise NoMatchSite("a matched node has no counterpart in the program")
        out.append(cmap[node.origin])
    return out


def _check_renders(root: SyntaxNode) -> None:
    try:
        render(root, MASK_FMT.format)
    except UnparseError as exc:
        raise GrammarViolation(
            f"the completed after pattern does not render: {exc}"
        ) from exc


def _apply_at_site(
    view: BugView,
    program: SyntaxTree,
    t: FixTemplate,
    query: TemplateTree,
    b_clone: TNode | None,
    attach_clone: TNode | None,
    site: TNode,
) -> SyntaxTree:
    mapping = match_tree(query.root, site)
    if mapping is None:
        raise NoMatchSite("a selected site no longer matches the template")
    cmap: dict[SyntaxNode, SyntaxNode] = {}
    new_root = clone_node(program.root, cmap)

    attach_copy = None
    b_slot = a_slot = None
    if attach_clone is not None and attach_clone in mapping:
        attach_copy = _resolve_copies([mapping[attach_clone]], cmap)[0]
        slots = t.anchors.get(next(iter(t.rn))) or {}
        b_slot, a_slot = slots.get("b_slot"), slots.get("a_slot")

    if t.category == "Add":
        if attach_copy is None or a_slot is None:
            raise NoMatchSite("an addition inside a statement needs its anchor slot")
        new_nodes = _render_after(t, None)
        relation, position = _slot_position(attach_copy, a_slot)
        _insert_children(attach_copy, position, relation, new_nodes)
        out = SyntaxTree(new_root)
        _check_renders(new_root)
        return out

    # Map template before-nodes to matched program nodes.
    if b_clone is None:
        raise NoMatchSite("the query carries no before pattern to locate")
    lock: dict[TNode, TNode] = {}
    _lockstep(t.before.root, b_clone, lock)
    prog_of_b = {orig: mapping[clone] for orig, clone in lock.items() if clone in mapping}

    top_before = _top_pattern_nodes(t.before.root)
    image_copies = _resolve_copies([prog_of_b[n] for n in top_before], cmap)

    if t.category == "Remove":
        emptied: list[tuple[SyntaxNode, str]] = []
        for image in image_copies:
            parent = image.parent
            if parent is None:
                raise NoMatchSite("cannot delete the module root")
            rel, _ = _remove_child(parent, image)
            emptied.append((parent, rel))
        for parent, rel in emptied:
            _fill_emptied_body(parent, rel)
        out = SyntaxTree(new_root)
        _check_renders(new_root)
        return out

    # Replace / Insert: delete the image, splice the rendered after pattern.
    new_nodes = _render_after(t, prog_of_b)
    first = image_copies[0]
    parent = first.parent
    if parent is None:
        if len(new_nodes) != 1:
            raise GrammarViolation("a module can only be replaced by one tree")
        out = SyntaxTree(new_nodes[0])
        _check_renders(new_nodes[0])
        return out
    rel, pos = _child_position(parent, first)
    for image in image_copies:
        _remove_child(image.parent, image)
    if attach_copy is not None and a_slot is not None:
        relation, position = _slot_position(attach_copy, a_slot)
        _insert_children(attach_copy, position, relation, new_nodes)
    else:
        _insert_children(parent, min(pos, len(parent.children)), rel, new_nodes)
    _fill_emptied_body(parent, rel)
    out = SyntaxTree(new_root)
    _check_renders(new_root)
    return out


def _apply_add_statements(
    view: BugView, program: SyntaxTree, t: FixTemplate
) -> SyntaxTree:
    """Splice an Add template's statements around the suspect statements.

    The template's statement anchor decides the spot: ``head`` pins the new
    statements to the front of the enclosing suite, ``tail`` appends them at
    its end, and ``mid`` (or an anchor lost to merging) puts them directly
    above the first suspect statement — the usual guard-above-use shape.
    """
    cmap: dict[SyntaxNode, SyntaxNode] = {}
    new_root = clone_node(program.root, cmap)
    new_nodes = _render_after(t, None)
    copies = [cmap.get(s) for s in view.stmts]
    if any(s is None for s in copies):
        raise NoMatchSite("the suspect statements are not part of the program tree")
    s_first, s_last = copies[0], copies[-1]
    if s_first.parent is None or s_last.parent is None:
        raise NoMatchSite("the suspect statement has no enclosing suite")

    anchor = t.stmt_anchor or ("mid", None)
    kind = anchor[0]
    if kind == "head":
        parent = s_first.parent
        group = parent.group(anchor[1]) if anchor[1] else []
        lead = group[0] if group else s_first
        relation, position = _child_position(parent, lead)
        _insert_children(parent, position, relation, new_nodes)
    elif kind == "tail":
        parent = s_last.parent
        relation, _ = _child_position(parent, s_last)
        group = parent.group(relation)
        _, position = _child_position(parent, group[-1])
        _insert_children(parent, position + 1, relation, new_nodes)
    else:
        parent = s_first.parent
        relation, position = _child_position(parent, s_first)
        _insert_children(parent, position, relation, new_nodes)
    out = SyntaxTree(new_root)
    _check_renders(new_root)
    return out


def apply_template(
    view: BugView, program: SyntaxTree, t: FixTemplate
) -> list[SyntaxTree]:
    """Apply a matched template to the program, one modified tree per site.

    The view must have been built over ``program`` (the identical tree
    object — the view's nodes point back into it); sites are the deepest
    nodes where the template's pattern-plus-spine matches.  Raises
    ``NoMatchSite`` when site resolution fails after a successful match and
    ``GrammarViolation`` when the completed after pattern cannot render.
    """
    if program is not view.source:
        raise ValueError("the program must be the tree the view was built from")
    query, b_clone, attach_clone = _concat_parts(t)
    if query.is_empty:
        if not t.before.is_empty:
            raise NoMatchSite("a template with a before pattern needs a query")
        return [_apply_add_statements(view, program, t)]
    try:
        sites = bfs_select(t, view)
    except EmptyMatch as exc:
        raise NoMatchSite(str(exc)) from exc
    if not sites:
        raise NoMatchSite("no site in the suspect region matches the template")
    return [
        _apply_at_site(view, program, t, query, b_clone, attach_clone, site)
        for site in sites
    ]


# ---------------------------------------------------------------------------
# Prompt rendering
# ---------------------------------------------------------------------------

def render_prompt(
    modified: SyntaxTree,
    *,
    window: int | None = None,
    origin: dict | None = None,
    cap: int = DEFAULT_MASK_CAP,
) -> CodePrompt:
    """Render a modified tree to a masked prompt.

    Holes become ``<extra_id_k>`` tokens numbered densely from zero in order
    of appearance.  ``window`` trims the prompt text to that many lines
    around the masked region (the full file always stays available as
    ``full_text``); a zero-mask prompt keeps the whole text.  Raises
    ``TooManyMasks`` when the hole count exceeds ``cap``.
    """
    try:
        full, count = render(modified.root, MASK_FMT.format)
    except UnparseError as exc:
        raise GrammarViolation(f"the modified tree does not render: {exc}") from exc
    if count > cap:
        raise TooManyMasks(f"{count} holes exceed the {cap}-mask vocabulary")
    text = full
    if window is not None and count:
        lines = full.splitlines()
        masked = [i for i, line in enumerate(lines) if MASK_RE.search(line)]
        lo = max(0, masked[0] - window)
        hi = min(len(lines), masked[-1] + 1 + window)
        text = "\n".join(lines[lo:hi])
        if full.endswith("\n"):
            text += "\n"
    return CodePrompt(
        text=text, mask_count=count, origin=dict(origin or {}), full_text=full
    )
