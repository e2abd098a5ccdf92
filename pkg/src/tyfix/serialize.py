"""Canonical JSON serialization for template trees and template forests.

The hole marker serializes as the literal string ``"ABS"``; real string
values that would collide (``"ABS"``, ``"\\ABS"``, ...) gain one leading
backslash on encode and lose it on decode.  Output is deterministic: keys
sorted, fixed separators, stable indentation — rerunning a build on the
same input yields byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import re
from typing import Any

from .basetypes import ABS, BaseType
from .errors import SandboxError, SchemaError
from .templates import CATEGORIES, FixTemplate, TemplateTree, TNode

SCHEMA_VERSION = 1

_ESCAPE_RE = re.compile(r"^\\*ABS$")


def encode_value(v) -> str:
    if v is ABS:
        return "ABS"
    if not isinstance(v, str):
        raise SchemaError(f"template values must be strings, got {type(v).__name__}")
    if _ESCAPE_RE.match(v):
        return "\\" + v
    return v


def decode_value(s: str):
    if not isinstance(s, str):
        raise SchemaError(f"encoded values must be strings, got {type(s).__name__}")
    if s == "ABS":
        return ABS
    if _ESCAPE_RE.match(s):
        return s[1:]
    return s


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------

def tree_to_json(tree: TemplateTree) -> dict | None:
    if tree.is_empty:
        return None
    return _node_to_json(tree.root)


def _node_to_json(node: TNode) -> dict:
    return {
        "id": node.id,
        "bt": node.bt.value,
        "t": encode_value(node.t),
        "v": encode_value(node.v),
        "children": [
            {"relation": rel, "node": _node_to_json(child)}
            for rel, child in node.children
        ],
    }


def tree_from_json(data: Any) -> TemplateTree:
    """Rebuild a tree, keeping stored ids (validated strictly increasing in
    preorder).  Callers that need canonical 0..n-1 ids remap afterwards."""
    if data is None:
        return TemplateTree.empty()
    root = _node_from_json(data)
    tree = TemplateTree.__new__(TemplateTree)
    tree.root = root
    ids = [n.id for n in tree.nodes()]
    if any(b <= a for a, b in zip(ids, ids[1:])):
        raise SchemaError(f"node ids must strictly increase in preorder, got {ids}")
    return tree


def _canonicalize_ids(tree: TemplateTree) -> dict[int, int]:
    """Renumber to 0..n-1 preorder; returns old-id -> new-id."""
    remap: dict[int, int] = {}
    for i, node in enumerate(tree.nodes()):
        remap[node.id] = i
        node.id = i
    return remap


def _node_from_json(data: Any) -> TNode:
    if not isinstance(data, dict):
        raise SchemaError(f"tree nodes must be objects, got {type(data).__name__}")
    for key in ("id", "bt", "t", "v", "children"):
        if key not in data:
            raise SchemaError(f"tree node is missing field {key!r}")
    try:
        bt = BaseType(data["bt"])
    except ValueError as exc:
        raise SchemaError(f"unknown base type {data['bt']!r}") from exc
    t = decode_value(data["t"])
    v = decode_value(data["v"])
    if t is ABS and (v is not ABS or data["children"]):
        raise SchemaError("a fully abstracted node must have v=ABS and no children")
    if not isinstance(data["id"], int):
        raise SchemaError("node id must be an integer")
    node = TNode(bt, t, v)
    node.id = data["id"]
    if not isinstance(data["children"], list):
        raise SchemaError("children must be a list")
    for entry in data["children"]:
        if not isinstance(entry, dict) or "relation" not in entry or "node" not in entry:
            raise SchemaError("each child entry needs 'relation' and 'node'")
        if not isinstance(entry["relation"], str):
            raise SchemaError("child relations must be strings")
        node.add(entry["relation"], _node_from_json(entry["node"]))
    return node


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------

def template_to_json(t: FixTemplate) -> dict:
    out: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "category": t.category,
        "pattern": {
            "before": tree_to_json(t.before),
            "after": tree_to_json(t.after),
        },
        "internal_context": {
            "tree": tree_to_json(t.ic_tree),
            "rn": {str(k): [v[0], v[1]] for k, v in sorted(t.rn.items())},
        },
        "external_context": {
            "before": tree_to_json(t.ec_before),
            "after": tree_to_json(t.ec_after),
        },
        "instance_count": t.instance_count,
        "instance_ids": sorted(t.instance_ids),
        "children": [template_to_json(c) for c in t.children],
    }
    if t.anchors:
        out["anchors"] = {
            str(k): {
                slot: (list(att) if att is not None else None)
                for slot, att in sorted(v.items())
            }
            for k, v in sorted(t.anchors.items())
        }
    if t.stmt_anchor is not None:
        out["stmt_anchor"] = [t.stmt_anchor[0], t.stmt_anchor[1]]
    return out


def _attachment_from_json(raw: Any, label: str):
    if raw is None:
        return None
    if (
        not isinstance(raw, list) or len(raw) != 2
        or not isinstance(raw[0], str) or not isinstance(raw[1], int)
    ):
        raise SchemaError(f"{label} must be null or [relation, index]")
    return (raw[0], raw[1])


def template_from_json(data: Any) -> FixTemplate:
    if not isinstance(data, dict):
        raise SchemaError(f"a template must be an object, got {type(data).__name__}")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}")
    for key in ("category", "pattern", "internal_context", "external_context",
                "instance_count", "instance_ids", "children"):
        if key not in data:
            raise SchemaError(f"template is missing field {key!r}")
    category = data["category"]
    if category not in CATEGORIES:
        raise SchemaError(f"unknown category {category!r}")
    pattern = data["pattern"]
    if not isinstance(pattern, dict) or "before" not in pattern or "after" not in pattern:
        raise SchemaError("pattern must carry 'before' and 'after'")
    before = tree_from_json(pattern["before"])
    after = tree_from_json(pattern["after"])
    ic_raw = data["internal_context"]
    if not isinstance(ic_raw, dict) or "tree" not in ic_raw or "rn" not in ic_raw:
        raise SchemaError("internal_context must carry 'tree' and 'rn'")
    ic_tree = tree_from_json(ic_raw["tree"])
    ic_ids = {n.id for n in ic_tree.nodes()}
    rn: dict[int, tuple[int | None, int | None]] = {}
    if not isinstance(ic_raw["rn"], dict):
        raise SchemaError("rn must be an object")
    for key, val in ic_raw["rn"].items():
        try:
            nid = int(key)
        except ValueError as exc:
            raise SchemaError(f"rn keys must be integer node ids, got {key!r}") from exc
        if nid not in ic_ids:
            raise SchemaError(f"rn references node {nid} absent from the context tree")
        if not isinstance(val, list) or len(val) != 2:
            raise SchemaError("rn entries must be [before_id, after_id]")
        br, ar = val
        if br is not None and not any(n.id == br for n in before.nodes()):
            raise SchemaError(f"rn before-id {br} is not a pattern node")
        if ar is not None and not any(n.id == ar for n in after.nodes()):
            raise SchemaError(f"rn after-id {ar} is not a pattern node")
        rn[nid] = (br, ar)
    ec_raw = data["external_context"]
    if not isinstance(ec_raw, dict) or "before" not in ec_raw or "after" not in ec_raw:
        raise SchemaError("external_context must carry 'before' and 'after'")
    instance_ids = data["instance_ids"]
    if not isinstance(instance_ids, list) or not all(isinstance(i, str) for i in instance_ids):
        raise SchemaError("instance_ids must be a list of strings")
    if data["instance_count"] != len(instance_ids):
        raise SchemaError("instance_count must equal len(instance_ids)")
    anchors: dict[int, dict] = {}
    for key, val in (data.get("anchors") or {}).items():
        try:
            nid = int(key)
        except ValueError as exc:
            raise SchemaError(f"anchor keys must be integer node ids, got {key!r}") from exc
        if nid not in ic_ids:
            raise SchemaError(f"anchor references node {nid} absent from the context tree")
        if not isinstance(val, dict):
            raise SchemaError("anchor entries must be objects")
        anchors[nid] = {
            slot: _attachment_from_json(att, f"anchor {slot}")
            for slot, att in val.items()
        }
    stmt_anchor = None
    if data.get("stmt_anchor") is not None:
        raw = data["stmt_anchor"]
        if not isinstance(raw, list) or len(raw) != 2 or raw[0] not in ("head", "tail", "mid"):
            raise SchemaError("stmt_anchor must be ['head'|'tail'|'mid', relation|null]")
        stmt_anchor = (raw[0], raw[1])
    if not isinstance(data["children"], list):
        raise SchemaError("children must be a list")

    # Normalize all ids to canonical 0..n-1 preorder, translating the
    # attachment maps along the way so references stay coherent.
    b_map = _canonicalize_ids(before)
    a_map = _canonicalize_ids(after)
    ic_map = _canonicalize_ids(ic_tree)
    rn = {
        ic_map[k]: (
            b_map[v[0]] if v[0] is not None else None,
            a_map[v[1]] if v[1] is not None else None,
        )
        for k, v in rn.items()
    }
    anchors = {ic_map[k]: v for k, v in anchors.items()}

    ec_before = tree_from_json(ec_raw["before"])
    ec_after = tree_from_json(ec_raw["after"])
    _canonicalize_ids(ec_before)
    _canonicalize_ids(ec_after)
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
        instance_ids=list(instance_ids),
        children=[template_from_json(c) for c in data["children"]],
    )


# ---------------------------------------------------------------------------
# Forest files, canonical text, hashing
# ---------------------------------------------------------------------------

def dumps_canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def tree_hash(tree: TemplateTree) -> str:
    return hashlib.sha256(dumps_canonical(tree_to_json(tree)).encode()).hexdigest()


def template_hash(t: FixTemplate) -> str:
    payload = template_to_json(t)
    payload.pop("children", None)
    payload.pop("instance_ids", None)
    payload.pop("instance_count", None)
    return hashlib.sha256(dumps_canonical(payload).encode()).hexdigest()


def forest_to_json(templates: list[FixTemplate]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "templates": [template_to_json(t) for t in templates],
    }


def forest_from_json(data: Any) -> list[FixTemplate]:
    if not isinstance(data, dict):
        raise SchemaError("a forest file must hold a JSON object")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {data.get('schema_version')!r}")
    if not isinstance(data.get("templates"), list):
        raise SchemaError("forest must carry a 'templates' list")
    return [template_from_json(t) for t in data["templates"]]


def save_forest(path: str, templates: list[FixTemplate]) -> None:
    text = json.dumps(forest_to_json(templates), sort_keys=True, indent=1, ensure_ascii=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def load_forest(path: str) -> list[FixTemplate]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"not valid JSON: {exc}") from exc
    except OSError as exc:
        raise SandboxError(f"cannot read forest {path}: {exc}") from exc
    return forest_from_json(data)
