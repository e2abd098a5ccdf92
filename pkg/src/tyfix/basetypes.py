"""Base-type classification for template-tree nodes.

Every grammar node kind is re-classified into one of eight coarse base types.
The mapping ships as package data (``data/base_types.json``) so it can be
corrected without code changes.
"""

from __future__ import annotations

import enum
import json
from importlib import resources
from typing import Optional


class _Abs:
    """The distinguished hole marker.  A singleton compared by identity."""

    _instance: Optional["_Abs"] = None

    def __new__(cls) -> "_Abs":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ABS"

    def __reduce__(self):
        return (_Abs, ())


#: Hole marker used in both the type and value slots of template nodes.
ABS = _Abs()


class BaseType(enum.Enum):
    VARIABLE = "Variable"
    OP = "Op"
    LITERAL = "Literal"
    BUILTIN = "Builtin"
    TYPE = "Type"
    ATTRIBUTE = "Attribute"
    EXPR = "Expr"
    STMT = "Stmt"


def _load_table() -> dict:
    with resources.files("tyfix.data").joinpath("base_types.json").open("rb") as fh:
        return json.load(fh)


_TABLE = _load_table()

STMT_KINDS: frozenset[str] = frozenset(_TABLE["stmt_kinds"])
OP_KINDS: frozenset[str] = frozenset(_TABLE["op_kinds"])
LITERAL_KINDS: frozenset[str] = frozenset(_TABLE["literal_kinds"])
ATTRIBUTE_KINDS: frozenset[str] = frozenset(_TABLE["attribute_kinds"])
IDENTIFIER_KINDS: frozenset[str] = frozenset(_TABLE["identifier_kinds"])
EXPR_KINDS: frozenset[str] = frozenset(_TABLE["expr_kinds"])
TYPE_NAMES: frozenset[str] = frozenset(_TABLE["type_names"])
BUILTIN_NAMES: frozenset[str] = frozenset(_TABLE["builtin_names"])
ANNOTATION_RELATIONS: frozenset[str] = frozenset(_TABLE["annotation_relations"])


def classify_base_type(kind: str, value: object = "", relation: str | None = None) -> BaseType:
    """Classify one grammar node kind into a base type.

    ``value`` is the node's folded value (identifier text for names) and
    ``relation`` the edge label from its parent; both refine the
    classification of identifier leaves.  Raises ``ValueError`` for kinds
    outside the pinned grammar so table gaps fail loudly.
    """
    if kind in OP_KINDS:
        return BaseType.OP
    if kind in LITERAL_KINDS:
        return BaseType.LITERAL
    if kind in ATTRIBUTE_KINDS:
        return BaseType.ATTRIBUTE
    if kind in IDENTIFIER_KINDS:
        if isinstance(value, str):
            if value in TYPE_NAMES:
                return BaseType.TYPE
            if relation is not None and relation in ANNOTATION_RELATIONS:
                return BaseType.TYPE
            if value in BUILTIN_NAMES:
                return BaseType.BUILTIN
        return BaseType.VARIABLE
    if kind in STMT_KINDS:
        return BaseType.STMT
    if kind in EXPR_KINDS:
        return BaseType.EXPR
    raise ValueError(f"no base type mapping for grammar kind {kind!r}")
