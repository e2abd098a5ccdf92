"""Typed template trees and the fix-template record.

A template tree mirrors a source subtree: every node carries a base type
(coarse role), a grammar type ``t`` (the node kind), and a value ``v`` (the
folded scalar).  Abstraction replaces ``v`` — or both ``t`` and ``v`` — with
the ``ABS`` hole marker.  A fix template couples a before/after pattern with
the internal context it attaches to and external context statements, plus
the instance fixes it generalizes and the merge lineage beneath it.
"""

from __future__ import annotations

from typing import Iterator

from .basetypes import ABS, BaseType, classify_base_type
from .errors import InvalidPattern
from .source import SyntaxNode

CATEGORIES = ("Add", "Remove", "Insert", "Replace")


def values_equal(x, y) -> bool:
    """Equality that treats the ABS marker as equal only to itself."""
    if x is ABS or y is ABS:
        return x is y
    return x == y


class TNode:
    """One template-tree node: (base type, grammar type, value, children)."""

    __slots__ = ("id", "bt", "t", "v", "children", "parent", "origin")

    def __init__(self, bt: BaseType, t, v, origin: SyntaxNode | None = None) -> None:
        self.id = -1
        self.bt = bt
        self.t = t
        self.v = v
        self.children: list[tuple[str, "TNode"]] = []
        self.parent: "TNode | None" = None
        self.origin = origin

    def add(self, relation: str, child: "TNode") -> None:
        child.parent = self
        self.children.append((relation, child))

    @property
    def is_hole(self) -> bool:
        return self.t is ABS

    def group(self, relation: str) -> list["TNode"]:
        return [c for r, c in self.children if r == relation]

    def relations(self) -> list[str]:
        seen: list[str] = []
        for r, _ in self.children:
            if r not in seen:
                seen.append(r)
        return seen

    def walk(self) -> Iterator["TNode"]:
        yield self
        for _, child in self.children:
            yield from child.walk()

    def relation_in_parent(self) -> str | None:
        if self.parent is None:
            return None
        for rel, child in self.parent.children:
            if child is self:
                return rel
        return None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TNode):
            return NotImplemented
        if self.bt is not other.bt:
            return False
        if not values_equal(self.t, other.t) or not values_equal(self.v, other.v):
            return False
        if len(self.children) != len(other.children):
            return False
        return all(
            ra == rb and ca == cb
            for (ra, ca), (rb, cb) in zip(self.children, other.children)
        )

    def __hash__(self) -> int:
        return id(self)

    def __repr__(self) -> str:
        t = "ABS" if self.t is ABS else self.t
        v = "ABS" if self.v is ABS else self.v
        return f"TNode(#{self.id} {self.bt.value}:{t}:{v!r}, {len(self.children)}c)"

    def clone(self, mapping: dict["TNode", "TNode"] | None = None) -> "TNode":
        copy = TNode(self.bt, self.t, self.v, self.origin)
        copy.id = self.id
        if mapping is not None:
            mapping[self] = copy
        for rel, child in self.children:
            copy.add(rel, child.clone(mapping))
        return copy


class TemplateTree:
    """A (possibly empty) template tree with canonical preorder ids."""

    __slots__ = ("root",)

    def __init__(self, root: TNode | None = None) -> None:
        self.root = root
        if root is not None:
            self.renumber()

    @classmethod
    def empty(cls) -> "TemplateTree":
        return cls(None)

    @property
    def is_empty(self) -> bool:
        return self.root is None

    def nodes(self) -> list[TNode]:
        return [] if self.root is None else list(self.root.walk())

    @property
    def size(self) -> int:
        return len(self.nodes())

    def renumber(self) -> None:
        for i, node in enumerate(self.nodes()):
            node.id = i

    def node_by_id(self, nid: int) -> TNode | None:
        for node in self.nodes():
            if node.id == nid:
                return node
        return None

    def clone(self, mapping: dict[TNode, TNode] | None = None) -> "TemplateTree":
        if self.root is None:
            return TemplateTree(None)
        tree = TemplateTree.__new__(TemplateTree)
        tree.root = self.root.clone(mapping)
        return tree

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TemplateTree):
            return NotImplemented
        if self.root is None or other.root is None:
            return self.root is None and other.root is None
        return self.root == other.root

    def __hash__(self) -> int:
        return id(self)

    def __repr__(self) -> str:
        return f"TemplateTree({'empty' if self.is_empty else self.root})"


def from_syntax(node: SyntaxNode, relation: str | None = None) -> TNode:
    """Lift a parsed source node (and subtree) into a template node."""
    bt = classify_base_type(node.kind, node.value, relation)
    out = TNode(bt, node.kind, node.value, origin=node)
    for rel, child in node.children:
        out.add(rel, from_syntax(child, rel))
    return out


def to_syntax(node: TNode) -> SyntaxNode:
    """Lower a template node back to a renderable source node."""
    out = SyntaxNode(ABS if node.t is ABS else node.t, node.v)
    for rel, child in node.children:
        out.add(rel, to_syntax(child))
    return out


# ---------------------------------------------------------------------------
# Categories
# ---------------------------------------------------------------------------

def embeds_at(b: TNode, a: TNode) -> bool:
    """Exact embedding test: ``b``'s subtree occurs at ``a`` with values,
    grammar types, relations, and sibling order all preserved (``a`` may
    have extra children anywhere)."""
    if not values_equal(b.t, a.t) or not values_equal(b.v, a.v):
        return False
    for rel in b.relations():
        targets = a.group(rel)
        i = 0
        for bc in b.group(rel):
            while i < len(targets) and not embeds_at(bc, targets[i]):
                i += 1
            if i >= len(targets):
                return False
            i += 1
    return True


def tree_contains(b: TemplateTree, a: TemplateTree) -> bool:
    """True if the whole ``b`` tree embeds somewhere inside ``a``."""
    if b.is_empty:
        return True
    if a.is_empty:
        return False
    return any(embeds_at(b.root, n) for n in a.nodes())


def compute_category(before: TemplateTree, after: TemplateTree) -> str:
    """Classify a pattern pair; raises ``InvalidPattern`` when both empty."""
    if before.is_empty and after.is_empty:
        raise InvalidPattern("a fix pattern needs at least one non-empty side")
    if before.is_empty:
        return "Add"
    if after.is_empty:
        return "Remove"
    if tree_contains(before, after):
        return "Insert"
    return "Replace"


# ---------------------------------------------------------------------------
# The template record
# ---------------------------------------------------------------------------

Attachment = tuple[str, int]  # (relation, index within that relation group)


class FixTemplate:
    """A mined (or raw) fix template.

    Components: the before/after pattern trees, the internal-context tree
    with its attachment map ``rn`` (internal-context node id -> ids of the
    before/after roots that hang there), external-context statement trees,
    the ids of the concrete fixes generalized, and the merge lineage.
    """

    __slots__ = (
        "category", "before", "after", "ic_tree", "rn", "anchors",
        "stmt_anchor", "ec_before", "ec_after", "instance_ids", "children",
    )

    def __init__(
        self,
        category: str,
        before: TemplateTree,
        after: TemplateTree,
        ic_tree: TemplateTree | None = None,
        rn: dict[int, tuple[int | None, int | None]] | None = None,
        anchors: dict[int, dict[str, Attachment | None]] | None = None,
        stmt_anchor: tuple[str, str | None] | None = None,
        ec_before: TemplateTree | None = None,
        ec_after: TemplateTree | None = None,
        instance_ids: list[str] | None = None,
        children: list["FixTemplate"] | None = None,
    ) -> None:
        if category not in CATEGORIES:
            raise InvalidPattern(f"unknown fix category {category!r}")
        self.category = category
        self.before = before
        self.after = after
        self.ic_tree = ic_tree if ic_tree is not None else TemplateTree.empty()
        self.rn = dict(rn) if rn else {}
        self.anchors = {k: dict(v) for k, v in anchors.items()} if anchors else {}
        self.stmt_anchor = stmt_anchor
        self.ec_before = ec_before if ec_before is not None else TemplateTree.empty()
        self.ec_after = ec_after if ec_after is not None else TemplateTree.empty()
        self.instance_ids = list(instance_ids) if instance_ids else []
        self.children = list(children) if children else []

    @property
    def instance_count(self) -> int:
        return len(self.instance_ids)

    def trees(self) -> list[TemplateTree]:
        return [self.before, self.after, self.ic_tree, self.ec_before, self.ec_after]

    def walk(self) -> Iterator["FixTemplate"]:
        yield self
        for child in self.children:
            yield from child.walk()

    def __repr__(self) -> str:
        return (
            f"FixTemplate({self.category}, B={self.before.size}n, "
            f"A={self.after.size}n, IC={self.ic_tree.size}n, "
            f"x{self.instance_count})"
        )
