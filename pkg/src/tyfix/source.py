"""Bridge between Python source text and span-annotated syntax trees.

Parsing wraps the stdlib ``ast`` module.  Each node keeps its grammar kind,
a folded scalar value (identifier text, literal repr, call-name, ...), its
ordered children labelled by the grammar relation (field name), and a line
span.  Rendering rebuilds stdlib AST objects and unparses them; hole nodes
(kind or value set to the ``ABS`` marker) render as mask placeholders.

Comments and formatting are discarded by design: ``unparse(parse_source(s))``
is a normal form, and applying it twice is a fixed point.
"""

from __future__ import annotations

import ast
import re
from typing import Callable, Iterator

from .basetypes import ABS, OP_KINDS
from .errors import EmptyResult, UnparseError

Span = tuple[int, int, int, int]
SourceSpan = tuple[int, int]

_HOLE_FMT = "__tyfix_hole_{}__"
_HOLE_RE = re.compile(r"\b__tyfix_hole_\d+__\b")
HOLE_TEXT = "<HOLE>"


def _concrete(base: type) -> frozenset[str]:
    names: set[str] = set()
    stack = list(base.__subclasses__())
    while stack:
        cls = stack.pop()
        sub = cls.__subclasses__()
        if sub:
            stack.extend(sub)
        names.add(cls.__name__)
    return frozenset(names)


#: Kinds that count as statements for edit localization.
STATEMENT_KINDS = _concrete(ast.stmt)

#: Per-kind fields whose children are statements (used for hole rendering
#: and for locating insertion slots).
STMT_FIELDS: dict[str, frozenset[str]] = {
    "Module": frozenset({"body"}),
    "Interactive": frozenset({"body"}),
    "FunctionDef": frozenset({"body"}),
    "AsyncFunctionDef": frozenset({"body"}),
    "ClassDef": frozenset({"body"}),
    "For": frozenset({"body", "orelse"}),
    "AsyncFor": frozenset({"body", "orelse"}),
    "While": frozenset({"body", "orelse"}),
    "If": frozenset({"body", "orelse"}),
    "With": frozenset({"body"}),
    "AsyncWith": frozenset({"body"}),
    "Try": frozenset({"body", "orelse", "finalbody"}),
    "ExceptHandler": frozenset({"body"}),
    "match_case": frozenset({"body"}),
    "Block": frozenset({"stmts"}),
}

_LIST_FIELDS = frozenset(
    {
        "body", "orelse", "finalbody", "handlers", "targets", "values",
        "keys", "ops", "comparators", "args", "posonlyargs", "kwonlyargs",
        "kw_defaults", "defaults", "keywords", "bases", "decorator_list",
        "names", "items", "ifs", "generators", "elts", "cases", "patterns",
        "kwd_patterns", "type_ignores",
    }
)

# "args" is the single arguments node on function definitions but a list on
# calls and on the arguments node itself.
_SINGLE_OVERRIDES = frozenset(
    {
        ("FunctionDef", "args"), ("AsyncFunctionDef", "args"),
        ("Lambda", "args"), ("Lambda", "body"),
        ("IfExp", "body"), ("IfExp", "orelse"),
    }
)

_OPTIONAL_SINGLE = frozenset(
    {
        ("Return", "value"), ("Yield", "value"), ("Raise", "exc"),
        ("Raise", "cause"), ("AnnAssign", "value"), ("arg", "annotation"),
        ("FunctionDef", "returns"), ("AsyncFunctionDef", "returns"),
        ("Slice", "lower"), ("Slice", "upper"), ("Slice", "step"),
        ("withitem", "optional_vars"), ("ExceptHandler", "type"),
        ("FormattedValue", "format_spec"), ("arguments", "vararg"),
        ("arguments", "kwarg"), ("MatchAs", "pattern"),
        ("match_case", "guard"), ("Assert", "msg"),
        # fields a value fold can legitimately restore as None
        ("ImportFrom", "module"), ("ExceptHandler", "name"),
        ("keyword", "arg"), ("MatchAs", "name"), ("MatchStar", "name"),
        ("MatchMapping", "rest"), ("MatchSingleton", "value"),
    }
)


def _is_list_field(kind: str, field: str) -> bool:
    if (kind, field) in _SINGLE_OVERRIDES:
        return False
    return field in _LIST_FIELDS


#: Fields the parser folds into the node value instead of keeping as children.
_FOLDED_FIELDS: dict[str, frozenset[str]] = {
    "Name": frozenset({"id"}),
    "Attribute": frozenset({"attr"}),
    "Constant": frozenset({"value", "kind"}),
    "FunctionDef": frozenset({"name"}),
    "AsyncFunctionDef": frozenset({"name"}),
    "ClassDef": frozenset({"name"}),
    "arg": frozenset({"arg"}),
    "keyword": frozenset({"arg"}),
    "alias": frozenset({"name", "asname"}),
    "ImportFrom": frozenset({"module", "level"}),
    "Global": frozenset({"names"}),
    "Nonlocal": frozenset({"names"}),
    "ExceptHandler": frozenset({"name"}),
    "FormattedValue": frozenset({"conversion"}),
    "comprehension": frozenset({"is_async"}),
    "AnnAssign": frozenset({"simple"}),
    "MatchAs": frozenset({"name"}),
    "MatchStar": frozenset({"name"}),
    "MatchMapping": frozenset({"rest"}),
    "MatchSingleton": frozenset({"value"}),
    "MatchClass": frozenset({"kwd_attrs"}),
}


def required_child_fields(kind: str) -> tuple[str, ...]:
    """Single child fields a ``kind`` node cannot be rendered without.

    ``Call.func`` is listed here but is also satisfied by a folded call-name
    value; callers that complete pruned trees must allow for that.
    """
    cls = getattr(ast, kind, None)
    if cls is None or not (isinstance(cls, type) and issubclass(cls, ast.AST)):
        return ()
    folded = _FOLDED_FIELDS.get(kind, frozenset())
    required = []
    for field in cls._fields:
        if field in folded or field in ("ctx", "type_comment", "type_ignores"):
            continue
        if _is_list_field(kind, field):
            continue
        if (kind, field) in _OPTIONAL_SINGLE:
            continue
        required.append(field)
    return tuple(required)


class SyntaxNode:
    """One tree node: grammar kind, folded value, labelled ordered children."""

    __slots__ = ("kind", "value", "children", "span", "parent")

    def __init__(self, kind, value="", span: Span | None = None) -> None:
        self.kind = kind
        self.value = value
        self.children: list[tuple[str, "SyntaxNode"]] = []
        self.span = span
        self.parent: "SyntaxNode | None" = None

    def add(self, relation: str, child: "SyntaxNode") -> None:
        child.parent = self
        self.children.append((relation, child))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SyntaxNode):
            return NotImplemented
        if self.kind is not other.kind and self.kind != other.kind:
            return False
        if self.value is not other.value and self.value != other.value:
            return False
        if len(self.children) != len(other.children):
            return False
        return all(
            ra == rb and ca == cb
            for (ra, ca), (rb, cb) in zip(self.children, other.children)
        )

    def __hash__(self) -> int:  # identity hashing; trees are mutable
        return id(self)

    def __repr__(self) -> str:
        return f"SyntaxNode({self.kind!r}, {self.value!r}, {len(self.children)} children)"

    def walk(self) -> Iterator["SyntaxNode"]:
        yield self
        for _, child in self.children:
            yield from child.walk()

    def group(self, relation: str) -> list["SyntaxNode"]:
        return [c for r, c in self.children if r == relation]

    def depth(self) -> int:
        d, node = 0, self.parent
        while node is not None:
            d += 1
            node = node.parent
        return d

    def ancestors(self) -> Iterator["SyntaxNode"]:
        node = self.parent
        while node is not None:
            yield node
            node = node.parent


class SyntaxTree:
    """A parsed file: module root plus the original text."""

    __slots__ = ("root", "text")

    def __init__(self, root: SyntaxNode, text: str = "") -> None:
        self.root = root
        self.text = text

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SyntaxTree):
            return NotImplemented
        return self.root == other.root

    def __hash__(self) -> int:
        return id(self)

    def walk(self) -> Iterator[SyntaxNode]:
        return self.root.walk()


def clone_node(node: SyntaxNode, mapping: dict[SyntaxNode, SyntaxNode] | None = None) -> SyntaxNode:
    """Deep-copy a node; ``mapping`` (if given) collects original -> copy."""
    copy = SyntaxNode(node.kind, node.value, node.span)
    if mapping is not None:
        mapping[node] = copy
    for rel, child in node.children:
        copy.add(rel, clone_node(child, mapping))
    return copy


# ---------------------------------------------------------------------------
# Parsing: stdlib AST -> SyntaxNode
# ---------------------------------------------------------------------------

def _const_repr(value: object) -> str:
    if value is Ellipsis:
        return "..."
    return repr(value)


def _fold_value(node: ast.AST) -> tuple[str, frozenset[str]]:
    """Return (folded value, ast fields consumed by the fold)."""
    if isinstance(node, ast.Name):
        return node.id, frozenset({"id"})
    if isinstance(node, ast.Attribute):
        return node.attr, frozenset({"attr"})
    if isinstance(node, ast.Constant):
        return _const_repr(node.value), frozenset({"value", "kind"})
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        return node.func.id, frozenset({"func"})
    if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
        return node.name, frozenset({"name"})
    if isinstance(node, ast.arg):
        return node.arg, frozenset({"arg"})
    if isinstance(node, ast.keyword):
        return node.arg if node.arg is not None else "**", frozenset({"arg"})
    if isinstance(node, ast.alias):
        text = node.name + (f" as {node.asname}" if node.asname else "")
        return text, frozenset({"name", "asname"})
    if isinstance(node, ast.ImportFrom):
        return "." * (node.level or 0) + (node.module or ""), frozenset({"module", "level"})
    if isinstance(node, (ast.Global, ast.Nonlocal)):
        return ", ".join(node.names), frozenset({"names"})
    if isinstance(node, ast.ExceptHandler):
        return node.name or "", frozenset({"name"})
    if isinstance(node, ast.FormattedValue):
        conv = node.conversion
        return (chr(conv) if conv not in (-1, None) else ""), frozenset({"conversion"})
    if isinstance(node, ast.comprehension):
        return ("async" if node.is_async else ""), frozenset({"is_async"})
    if isinstance(node, ast.AnnAssign):
        return "", frozenset({"simple"})
    if node.__class__.__name__ in ("MatchAs", "MatchStar"):
        return getattr(node, "name", None) or "", frozenset({"name"})
    if node.__class__.__name__ == "MatchMapping":
        return getattr(node, "rest", None) or "", frozenset({"rest"})
    if node.__class__.__name__ == "MatchSingleton":
        return _const_repr(node.value), frozenset({"value"})
    if node.__class__.__name__ == "MatchClass":
        return ",".join(node.kwd_attrs), frozenset({"kwd_attrs"})
    return "", frozenset()


def _from_ast(node: ast.AST) -> SyntaxNode:
    kind = node.__class__.__name__
    value, consumed = _fold_value(node)
    span: Span | None = None
    if hasattr(node, "lineno") and getattr(node, "end_lineno", None) is not None:
        span = (node.lineno, node.col_offset, node.end_lineno, node.end_col_offset)
    out = SyntaxNode(kind, value, span)

    if isinstance(node, ast.Dict):
        # Interleave so **-unpacking entries (key None) keep their position.
        for key, val in zip(node.keys, node.values):
            if key is None:
                out.add("unpack", _from_ast(val))
            else:
                out.add("keys", _from_ast(key))
                out.add("values", _from_ast(val))
    else:
        for field, val in ast.iter_fields(node):
            if field in consumed or field in ("ctx", "type_comment", "type_ignores"):
                continue
            if isinstance(val, ast.AST):
                if isinstance(val, ast.expr_context):
                    continue
                out.add(field, _from_ast(val))
            elif isinstance(val, list):
                for item in val:
                    if isinstance(item, ast.AST):
                        out.add(field, _from_ast(item))

    _extend_span(out)
    return out


def _extend_span(node: SyntaxNode) -> None:
    spans = [c.span for _, c in node.children if c.span is not None]
    if node.span is not None:
        spans.append(node.span)
    if spans:
        start = min((s[0], s[1]) for s in spans)
        end = max((s[2], s[3]) for s in spans)
        node.span = (start[0], start[1], end[0], end[1])


def parse_source(text: str) -> SyntaxTree:
    """Parse source text; raises ``SyntaxError`` with location on bad input."""
    module = ast.parse(text)
    return SyntaxTree(_from_ast(module), text)


# ---------------------------------------------------------------------------
# Rendering: SyntaxNode -> stdlib AST -> text
# ---------------------------------------------------------------------------

class _Holes:
    def __init__(self) -> None:
        self.count = 0

    def new(self) -> str:
        name = _HOLE_FMT.format(self.count)
        self.count += 1
        return name


def _hole_name(holes: _Holes) -> ast.Name:
    return ast.Name(id=holes.new(), ctx=ast.Load())


def _is_hole(node: SyntaxNode) -> bool:
    return node.kind is ABS


def _literal(text: str, kind: str) -> object:
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError) as exc:
        raise UnparseError(f"cannot decode {kind} value {text!r}") from exc


def _split_alias(value: str) -> ast.alias:
    if " as " in value:
        name, asname = value.split(" as ", 1)
        return ast.alias(name=name, asname=asname)
    return ast.alias(name=value, asname=None)


def _build_child(parent_kind: str, relation: str, node: SyntaxNode, holes: _Holes) -> ast.AST:
    if _is_hole(node):
        if relation in STMT_FIELDS.get(parent_kind, frozenset()):
            return ast.Expr(value=_hole_name(holes))
        return _hole_name(holes)
    built = _build(node, holes)
    if relation in STMT_FIELDS.get(parent_kind, frozenset()) and isinstance(built, ast.expr):
        return ast.Expr(value=built)
    return built


def _op_hole_in(groups: dict[str, list[SyntaxNode]]) -> bool:
    for rel in ("op", "ops"):
        for child in groups.get(rel, []):
            if _is_hole(child):
                return True
    return False


def _build(node: SyntaxNode, holes: _Holes) -> ast.AST:
    kind = node.kind
    if kind is ABS:
        return _hole_name(holes)
    if not isinstance(kind, str):
        raise UnparseError(f"cannot render node kind {kind!r}")

    groups: dict[str, list[SyntaxNode]] = {}
    for rel, child in node.children:
        groups.setdefault(rel, []).append(child)

    # A hole standing for an operator cannot appear as a mask in parseable
    # text; widen the whole operator expression into a single hole.
    if kind in ("BinOp", "UnaryOp", "BoolOp", "Compare") and _op_hole_in(groups):
        return _hole_name(holes)
    if kind == "AugAssign" and _op_hole_in(groups):
        return ast.Expr(value=_hole_name(holes))

    if kind == "Name":
        ident = holes.new() if node.value is ABS else node.value
        return ast.Name(id=ident, ctx=ast.Load())
    if kind == "Constant":
        if node.value is ABS:
            return _hole_name(holes)
        return ast.Constant(value=_literal(node.value, kind), kind=None)
    if kind == "Dict":
        keys: list[ast.expr | None] = []
        values: list[ast.expr] = []
        pending: ast.expr | None = None
        for rel, child in node.children:
            built = _build_child(kind, rel, child, holes)
            if rel == "keys":
                pending = built
            elif rel == "values":
                keys.append(pending)
                values.append(built)
                pending = None
            elif rel == "unpack":
                keys.append(None)
                values.append(built)
        return ast.Dict(keys=keys, values=values)
    if kind in OP_KINDS:
        cls = getattr(ast, kind, None)
        if cls is None:
            raise UnparseError(f"unknown operator kind {kind!r}")
        return cls()
    if kind == "alias":
        if node.value is ABS:
            return ast.alias(name=holes.new(), asname=None)
        return _split_alias(node.value)

    cls = getattr(ast, kind, None)
    if cls is None or not (isinstance(cls, type) and issubclass(cls, ast.AST)):
        raise UnparseError(f"no rendering rule for node kind {kind!r}")

    fields: dict[str, object] = {}
    for field in cls._fields:
        if _is_list_field(kind, field):
            fields[field] = [_build_child(kind, field, c, holes) for c in groups.get(field, [])]
        elif field in groups:
            fields[field] = _build_child(kind, field, groups[field][0], holes)
        else:
            fields[field] = None

    value = node.value

    if kind == "Attribute":
        fields["attr"] = holes.new() if value is ABS else value
        fields["ctx"] = ast.Load()
    elif kind == "Call":
        if fields.get("func") is None:
            if value is ABS:
                fields["func"] = _hole_name(holes)
            elif isinstance(value, str) and value:
                fields["func"] = ast.Name(id=value, ctx=ast.Load())
            else:
                raise UnparseError("call node lacks both a folded name and a func child")
    elif kind in ("FunctionDef", "AsyncFunctionDef", "ClassDef"):
        fields["name"] = holes.new() if value is ABS else value
        if kind != "ClassDef" and fields.get("args") is None:
            raise UnparseError(f"{kind} node lacks an arguments child")
    elif kind == "arg":
        fields["arg"] = holes.new() if value is ABS else value
    elif kind == "keyword":
        if value is ABS:
            fields["arg"] = holes.new()
        else:
            fields["arg"] = None if value == "**" else value
    elif kind == "ImportFrom":
        if value is ABS:
            fields["module"], fields["level"] = holes.new(), 0
        else:
            text = value
            level = len(text) - len(text.lstrip("."))
            fields["module"] = text[level:] or None
            fields["level"] = level
    elif kind in ("Global", "Nonlocal"):
        names = [holes.new()] if value is ABS else [n for n in value.split(", ") if n]
        if not names:
            raise UnparseError(f"{kind} node lost its name list")
        fields["names"] = names
    elif kind == "ExceptHandler":
        fields["name"] = (holes.new() if value is ABS else (value or None))
    elif kind == "FormattedValue":
        fields["conversion"] = -1 if (value is ABS or not value) else ord(value)
    elif kind == "comprehension":
        fields["is_async"] = 1 if value == "async" else 0
    elif kind == "AnnAssign":
        fields["simple"] = 1 if isinstance(fields.get("target"), ast.Name) else 0
    elif kind == "MatchSingleton":
        fields["value"] = None if value is ABS else _literal(value, kind)
    elif kind in ("MatchAs", "MatchStar"):
        fields["name"] = (holes.new() if value is ABS else (value or None))
    elif kind == "MatchMapping":
        fields["rest"] = (holes.new() if value is ABS else (value or None))
    elif kind == "MatchClass":
        fields["kwd_attrs"] = [] if value is ABS else [a for a in value.split(",") if a]

    if kind == "arguments":
        # kw-only defaults align right-to-left with kwonlyargs; restore the
        # leading None slots that parsing dropped.
        short = len(fields.get("kwonlyargs") or []) - len(fields.get("kw_defaults") or [])
        if short > 0:
            fields["kw_defaults"] = [None] * short + list(fields["kw_defaults"])

    for field in cls._fields:
        if fields.get(field) is not None or _is_list_field(kind, field):
            continue
        if field == "ctx":
            fields[field] = ast.Load()
        elif field in ("type_comment", "type_ignores") or (kind, field) in _OPTIONAL_SINGLE:
            continue  # genuinely optional; stays None
        else:
            raise UnparseError(f"{kind} node is missing required child {field!r}")

    kwargs = dict(fields)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise UnparseError(f"cannot assemble {kind} node: {exc}") from exc


def render(node: SyntaxNode | SyntaxTree, mask_token: Callable[[int], str]) -> tuple[str, int]:
    """Render a tree to text, replacing holes via ``mask_token`` in text order."""
    root = node.root if isinstance(node, SyntaxTree) else node
    holes = _Holes()
    try:
        built = _build(root, holes)
        ast.fix_missing_locations(built)
        text = ast.unparse(built)
    except UnparseError:
        raise
    except Exception as exc:  # stdlib unparse failures on damaged trees
        raise UnparseError(f"cannot render tree rooted at {root.kind!r}: {exc}") from exc

    counter = [0]

    def _sub(_match: re.Match) -> str:
        token = mask_token(counter[0])
        counter[0] += 1
        return token

    text = _HOLE_RE.sub(_sub, text)
    return text, holes.count


def unparse(node: SyntaxNode | SyntaxTree) -> str:
    """Normalized source text; hole nodes render as ``<HOLE>``."""
    text, _ = render(node, lambda _k: HOLE_TEXT)
    return text


def normalize(text: str) -> str:
    """Parse then unparse: one normalization pass (idempotent)."""
    return unparse(parse_source(text))


# ---------------------------------------------------------------------------
# Edit localization
# ---------------------------------------------------------------------------

def _line_extent(node: SyntaxNode) -> int:
    assert node.span is not None
    return node.span[2] - node.span[0]


def statements_for_lines(tree: SyntaxTree, lines) -> list[SyntaxNode]:
    """Deepest statement nodes covering any of the given 1-based lines.

    Per line, the covering statement with the smallest line extent wins
    (shallower on ties).  A selected statement absorbs selected descendants.
    Returns source order; empty list when no statement is hit.
    """
    stmts = [
        n for n in tree.walk()
        if isinstance(n.kind, str) and n.kind in STATEMENT_KINDS and n.span is not None
    ]
    chosen: list[SyntaxNode] = []
    for line in sorted(set(lines)):
        containing = [n for n in stmts if n.span[0] <= line <= n.span[2]]
        if not containing:
            continue
        best = min(containing, key=lambda n: (_line_extent(n), n.depth()))
        if not any(best is c for c in chosen):
            chosen.append(best)
    keep: list[SyntaxNode] = []
    for node in chosen:
        if any(any(anc is c for c in chosen) for anc in node.ancestors()):
            continue  # an ancestor is already selected and covers this edit
        keep.append(node)
    keep.sort(key=lambda n: (n.span[0], n.span[1]))
    return keep


def deepest_statements(tree: SyntaxTree, lines: SourceSpan) -> list[SyntaxNode]:
    """Deepest statement nodes covering the 1-based inclusive line range.

    Raises ``EmptyResult`` if no statement intersects the range.  No returned
    node is an ancestor of another; results are in source order.
    """
    start, end = lines
    if end < start:
        start, end = end, start
    found = statements_for_lines(tree, range(start, end + 1))
    if not found:
        raise EmptyResult(f"no statement covers lines {start}..{end}")
    return found
