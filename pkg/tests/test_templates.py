"""Template trees: base-type classification, categories, cloning, serialization."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from tyfix.basetypes import ABS, BaseType, classify_base_type
from tyfix.errors import InvalidPattern, SchemaError
from tyfix.serialize import (
    decode_value,
    encode_value,
    forest_from_json,
    forest_to_json,
    load_forest,
    save_forest,
    template_from_json,
    template_hash,
    template_to_json,
    tree_from_json,
    tree_hash,
    tree_to_json,
)
from tyfix.source import parse_source, render
from tyfix.templates import (
    FixTemplate,
    TemplateTree,
    TNode,
    compute_category,
    embeds_at,
    from_syntax,
    to_syntax,
    tree_contains,
    values_equal,
)
from tyfix.fixes import parse_fix
from tyfix.abstraction import merge_templates
from tyfix.prompts import MASK_FMT

from test_source import SAMPLES


def tree_of(src: str, kind: str) -> TemplateTree:
    """Lift the first source node of the given kind into a template tree."""
    parsed = parse_source(src)
    for node in parsed.walk():
        if node.kind == kind:
            return TemplateTree(from_syntax(node))
    raise AssertionError(f"no {kind} node in {src!r}")


# ---------------------------------------------------------------------------
# Base-type classification
# ---------------------------------------------------------------------------

CLASSIFY_TABLE = [
    # (kind, value, relation, expected)
    ("Name", "counter", None, BaseType.VARIABLE),
    ("arg", "x", "args", BaseType.VARIABLE),
    ("alias", "os", "names", BaseType.VARIABLE),
    ("Name", "int", None, BaseType.TYPE),
    ("Name", "Optional", None, BaseType.TYPE),
    ("Name", "len", None, BaseType.BUILTIN),
    ("Name", "None", None, BaseType.BUILTIN),
    # an annotation position forces the type reading even for unknown names
    ("Name", "MyClass", "annotation", BaseType.TYPE),
    ("Name", "MyClass", "returns", BaseType.TYPE),
    ("Name", "MyClass", "bases", BaseType.TYPE),
    ("Name", "MyClass", "func", BaseType.VARIABLE),
    ("Add", "", None, BaseType.OP),
    ("Is", "", None, BaseType.OP),
    ("USub", "", None, BaseType.OP),
    ("Constant", "'s'", None, BaseType.LITERAL),
    ("Attribute", "append", None, BaseType.ATTRIBUTE),
    ("Call", "f", None, BaseType.EXPR),
    ("BinOp", "", None, BaseType.EXPR),
    ("Assign", "", None, BaseType.STMT),
    ("Return", "", None, BaseType.STMT),
    ("Block", "", None, BaseType.STMT),
]


@pytest.mark.parametrize("kind,value,relation,expected", CLASSIFY_TABLE)
def test_base_type_classification_table(kind, value, relation, expected):
    assert classify_base_type(kind, value, relation) is expected


def test_every_parsed_node_kind_gets_a_base_type():
    """Classification is total over everything the parser can produce."""
    for sample in SAMPLES:
        for node in parse_source(sample).walk():
            bt = classify_base_type(node.kind, node.value)
            assert isinstance(bt, BaseType)


def test_unknown_grammar_kind_is_rejected_loudly():
    with pytest.raises(ValueError):
        classify_base_type("NotAGrammarKind")


def test_type_name_outranks_builtin_name():
    # 'type' names that shadow builtins classify by the builtin table only
    # when absent from the type table; 'int' sits in both worlds but reads
    # as a type.
    assert classify_base_type("Name", "int") is BaseType.TYPE


# ---------------------------------------------------------------------------
# Value equality with the hole marker
# ---------------------------------------------------------------------------

def test_hole_marker_equals_only_itself():
    assert values_equal(ABS, ABS)
    assert not values_equal(ABS, "ABS")
    assert not values_equal("ABS", ABS)
    assert values_equal("x", "x")
    assert not values_equal("x", "y")


def test_hole_marker_is_a_singleton_across_pickling():
    import pickle

    assert pickle.loads(pickle.dumps(ABS)) is ABS


# ---------------------------------------------------------------------------
# TNode structure
# ---------------------------------------------------------------------------

def test_children_keep_insertion_order_and_parent_backrefs():
    root = TNode(BaseType.EXPR, "Call", "f")
    a = TNode(BaseType.VARIABLE, "Name", "a")
    b = TNode(BaseType.VARIABLE, "Name", "b")
    k = TNode(BaseType.EXPR, "keyword", "kw")
    root.add("args", a)
    root.add("keywords", k)
    root.add("args", b)
    assert root.group("args") == [a, b]
    assert root.relations() == ["args", "keywords"]
    assert a.parent is root and k.parent is root
    assert a.relation_in_parent() == "args"
    assert k.relation_in_parent() == "keywords"
    assert root.relation_in_parent() is None


def test_walk_is_preorder():
    # the callee name is folded into the Call node's value
    tree = tree_of("y = f(a, b)\n", "Call")
    assert [n.t for n in tree.root.walk()] == ["Call", "Name", "Name"]
    assert [n.v for n in tree.root.walk()] == ["f", "a", "b"]


def test_node_equality_is_structural_and_value_sensitive():
    t1 = tree_of("y = f(a)\n", "Call").root
    t2 = tree_of("y = f(a)\n", "Call").root
    t3 = tree_of("y = f(b)\n", "Call").root
    t4 = tree_of("y = g(a)\n", "Call").root
    assert t1 == t2
    assert t1 != t3
    assert t1 != t4
    assert hash(t1) != hash(t2)  # identity hashing: trees are mutable


def test_node_equality_requires_matching_base_types():
    x = TNode(BaseType.VARIABLE, "Name", "x")
    y = TNode(BaseType.TYPE, "Name", "x")
    assert x != y


def test_hole_nodes_compare_equal_to_each_other_only():
    h1 = TNode(BaseType.EXPR, ABS, ABS)
    h2 = TNode(BaseType.EXPR, ABS, ABS)
    v = TNode(BaseType.EXPR, "Call", "f")
    assert h1 == h2
    assert h1 != v
    assert h1.is_hole and not v.is_hole


def test_clone_preserves_ids_values_and_origins():
    tree = tree_of("y = f(a, b)\n", "Call")
    mapping: dict[TNode, TNode] = {}
    copy = tree.clone(mapping)
    originals = tree.nodes()
    copies = copy.nodes()
    assert len(mapping) == len(originals)
    for orig, dup in zip(originals, copies):
        assert mapping[orig] is dup
        assert dup is not orig
        assert dup.id == orig.id
        assert dup.t == orig.t and values_equal(dup.v, orig.v)
        assert dup.bt is orig.bt
        assert dup.origin is orig.origin  # still points into the parse


def test_mutating_a_clone_leaves_the_original_alone():
    tree = tree_of("y = f(a)\n", "Call")
    copy = tree.clone()
    copy.root.v = ABS
    copy.root.children.clear()
    assert tree.root.v == "f"
    assert len(tree.root.children) == 1


# ---------------------------------------------------------------------------
# TemplateTree
# ---------------------------------------------------------------------------

def test_fresh_trees_get_dense_preorder_ids():
    tree = tree_of("y = f(a, g(b))\n", "Call")
    assert [n.id for n in tree.nodes()] == list(range(tree.size))
    assert tree.node_by_id(0) is tree.root
    assert tree.node_by_id(tree.size) is None


def test_empty_tree_properties():
    empty = TemplateTree.empty()
    assert empty.is_empty
    assert empty.size == 0
    assert empty.nodes() == []
    assert empty == TemplateTree.empty()
    assert empty != tree_of("x = 1\n", "Assign")


def test_tree_clone_does_not_renumber():
    tree = tree_of("y = f(a)\n", "Call")
    tree.root.children[0][1].id = 99
    copy = tree.clone()
    assert [n.id for n in copy.nodes()] == [n.id for n in tree.nodes()]


# ---------------------------------------------------------------------------
# Lifting and lowering
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("src", [
    "x = a + b\n",
    "y = f(a, key=1)\n",
    "if x is None:\n    return None\n",
    "for i in range(3):\n    total += i\n",
])
def test_lift_then_lower_renders_the_same_text(src):
    parsed = parse_source(src)
    lifted = from_syntax(parsed.root)
    lowered = to_syntax(lifted)
    assert render(lowered, MASK_FMT.format)[0] == render(parsed, MASK_FMT.format)[0]


def test_lift_records_origin_backrefs_for_every_node():
    parsed = parse_source("y = f(a, b)\n")
    lifted = from_syntax(parsed.root)
    sources = list(parsed.walk())
    for tnode in lifted.walk():
        assert tnode.origin in sources


def test_lowered_hole_renders_as_a_mask_token():
    call = tree_of("y = f(a)\n", "Call")
    arg = call.root.children[0][1]
    arg.t = ABS
    arg.v = ABS
    arg.children.clear()
    text, count = render(to_syntax(call.root), MASK_FMT.format)
    assert count == 1
    assert "<extra_id_0>" in text


# ---------------------------------------------------------------------------
# Categories
# ---------------------------------------------------------------------------

def test_category_of_pure_addition_is_add():
    after = tree_of("return None\n", "Return")
    assert compute_category(TemplateTree.empty(), after) == "Add"


def test_category_of_pure_removal_is_remove():
    before = tree_of("print(x)\n", "Call")
    assert compute_category(before, TemplateTree.empty()) == "Remove"


def test_category_is_insert_when_before_survives_inside_after():
    before = tree_of("y = f(a)\n", "Call")
    after = tree_of("y = g(f(a))\n", "Call")
    assert compute_category(before, after) == "Insert"


def test_category_is_replace_when_before_does_not_survive():
    before = tree_of("y = f(a)\n", "Call")
    after = tree_of("y = g(h(a))\n", "Call")
    assert compute_category(before, after) == "Replace"


def test_category_requires_at_least_one_side():
    with pytest.raises(InvalidPattern):
        compute_category(TemplateTree.empty(), TemplateTree.empty())


def test_embedding_preserves_sibling_order():
    fab = tree_of("y = f(a, b)\n", "Call").root
    faqb = tree_of("y = f(a, q, b)\n", "Call").root
    fba = tree_of("y = f(b, a)\n", "Call").root
    assert embeds_at(fab, faqb)
    assert not embeds_at(fba, faqb)


def test_embedding_requires_matching_values():
    fa = tree_of("y = f(a)\n", "Call").root
    ga = tree_of("y = g(a)\n", "Call").root
    assert not embeds_at(fa, ga)


def test_containment_searches_every_position():
    inner = tree_of("y = f(a)\n", "Call")
    outer = tree_of("y = h(g(f(a)))\n", "Call")
    assert tree_contains(inner, outer)
    assert not tree_contains(outer, inner)
    assert tree_contains(TemplateTree.empty(), inner)
    assert not tree_contains(inner, TemplateTree.empty())


# ---------------------------------------------------------------------------
# FixTemplate record
# ---------------------------------------------------------------------------

def test_unknown_category_is_rejected():
    with pytest.raises(InvalidPattern):
        FixTemplate("Rewrite", TemplateTree.empty(), tree_of("x = 1\n", "Assign"))


def test_instance_count_tracks_instance_ids():
    t = FixTemplate(
        "Remove", tree_of("print(x)\n", "Call"), TemplateTree.empty(),
        instance_ids=["a", "b", "c"],
    )
    assert t.instance_count == 3


def test_walk_yields_self_then_full_lineage():
    leaf1 = FixTemplate("Remove", tree_of("print(x)\n", "Call"), TemplateTree.empty())
    leaf2 = FixTemplate("Remove", tree_of("print(y)\n", "Call"), TemplateTree.empty())
    parent = FixTemplate(
        "Remove", tree_of("print(z)\n", "Call"), TemplateTree.empty(),
        children=[leaf1, leaf2],
    )
    assert list(parent.walk()) == [parent, leaf1, leaf2]


def test_trees_returns_all_five_components():
    t = FixTemplate("Remove", tree_of("print(x)\n", "Call"), TemplateTree.empty())
    assert len(t.trees()) == 5


# ---------------------------------------------------------------------------
# Value encoding (hole marker vs. the literal string "ABS")
# ---------------------------------------------------------------------------

def test_hole_marker_encodes_as_plain_abs_string():
    assert encode_value(ABS) == "ABS"
    assert decode_value("ABS") is ABS


@pytest.mark.parametrize("raw,encoded", [
    ("ABS", "\\ABS"),
    ("\\ABS", "\\\\ABS"),
    ("\\\\ABS", "\\\\\\ABS"),
    ("CABS", "CABS"),
    ("ABS ", "ABS "),
    ("abs", "abs"),
    ("", ""),
])
def test_colliding_strings_gain_one_escape_level(raw, encoded):
    assert encode_value(raw) == encoded
    assert decode_value(encoded) == raw


@settings(derandomize=True, max_examples=200)
@given(st.text(max_size=20))
def test_any_string_value_round_trips_through_encoding(s):
    assert decode_value(encode_value(s)) == s


def test_non_string_values_are_schema_errors():
    with pytest.raises(SchemaError):
        encode_value(7)
    with pytest.raises(SchemaError):
        decode_value(7)


# ---------------------------------------------------------------------------
# Tree serialization
# ---------------------------------------------------------------------------

def test_tree_round_trips_through_json():
    tree = tree_of("y = f(a, g(b))\n", "Call")
    again = tree_from_json(tree_to_json(tree))
    assert again == tree
    assert tree_hash(again) == tree_hash(tree)


def test_tree_with_abstracted_value_round_trips():
    tree = tree_of("y = f(a)\n", "Call")
    tree.root.v = ABS
    again = tree_from_json(tree_to_json(tree))
    assert again.root.v is ABS
    assert again == tree


def test_tree_with_full_hole_round_trips():
    tree = tree_of("y = f(a)\n", "Call")
    hole = tree.root.children[0][1]
    hole.t = ABS
    hole.v = ABS
    hole.children.clear()
    again = tree_from_json(tree_to_json(tree))
    assert again.root.children[0][1].is_hole
    assert again == tree


def test_empty_tree_serializes_as_null():
    assert tree_to_json(TemplateTree.empty()) is None
    assert tree_from_json(None).is_empty


def test_tree_hash_depends_on_structure_not_object_identity():
    t1 = tree_of("y = f(a)\n", "Call")
    t2 = tree_of("y = f(a)\n", "Call")
    t3 = tree_of("y = f(b)\n", "Call")
    assert tree_hash(t1) == tree_hash(t2)
    assert tree_hash(t1) != tree_hash(t3)


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("bt"),
    lambda d: d.update(bt="Widget"),
    lambda d: d.update(children="nope"),
    lambda d: d.update(id="zero"),
])
def test_malformed_tree_json_is_a_schema_error(mutate):
    data = tree_to_json(tree_of("y = f(a)\n", "Call"))
    mutate(data)
    with pytest.raises(SchemaError):
        tree_from_json(data)


def test_hole_with_children_is_rejected_on_load():
    data = tree_to_json(tree_of("y = f(a)\n", "Call"))
    data["t"] = "ABS"
    data["v"] = "ABS"
    with pytest.raises(SchemaError):
        tree_from_json(data)


# ---------------------------------------------------------------------------
# Template and forest serialization
# ---------------------------------------------------------------------------

def desk_template(desk_cases, fid):
    for case_id, before, after in desk_cases:
        if case_id == fid:
            return parse_fix(before, after, fid)
    raise AssertionError(fid)


@pytest.mark.parametrize("fid", [
    "rep-call-1", "ins-sub-1", "add-guard-1", "rem-print-1", "add-ret-1",
])
def test_parsed_fix_round_trips_through_json(desk_cases, fid):
    t = desk_template(desk_cases, fid)
    again = template_from_json(template_to_json(t))
    assert template_hash(again) == template_hash(t)
    assert again.category == t.category
    assert again.instance_ids == sorted(t.instance_ids)
    assert again.rn == t.rn
    assert again.anchors == t.anchors
    assert again.stmt_anchor == t.stmt_anchor
    for mine, theirs in zip(again.trees(), t.trees()):
        assert mine == theirs


def test_merged_template_keeps_its_lineage_through_json(desk_cases):
    t1 = desk_template(desk_cases, "rep-call-1")
    t2 = desk_template(desk_cases, "rep-call-2")
    merged = merge_templates(t1, t2)
    again = template_from_json(template_to_json(merged))
    assert [template_hash(x) for x in again.walk()] == [
        template_hash(x) for x in merged.walk()
    ]
    assert again.instance_count == merged.instance_count == 2


def test_template_hash_ignores_lineage_and_instances(desk_cases):
    t = desk_template(desk_cases, "rep-call-1")
    bare = FixTemplate(
        t.category, t.before, t.after, t.ic_tree, t.rn, t.anchors,
        t.stmt_anchor, t.ec_before, t.ec_after,
        instance_ids=["other-id"], children=[t],
    )
    assert template_hash(bare) == template_hash(t)


def test_forest_files_are_byte_identical_across_saves(tmp_path, desk_cases):
    templates = [
        desk_template(desk_cases, "rep-call-1"),
        desk_template(desk_cases, "add-guard-1"),
    ]
    p1 = tmp_path / "one.json"
    p2 = tmp_path / "two.json"
    save_forest(str(p1), templates)
    save_forest(str(p2), templates)
    assert p1.read_bytes() == p2.read_bytes()
    loaded = load_forest(str(p1))
    assert [template_hash(t) for t in loaded] == [template_hash(t) for t in templates]


def test_forest_load_rejects_bad_payloads(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("not json at all {")
    with pytest.raises(SchemaError):
        load_forest(str(bad))
    bad.write_text(json.dumps({"schema_version": 99, "templates": []}))
    with pytest.raises(SchemaError):
        load_forest(str(bad))
    bad.write_text(json.dumps({"schema_version": 1, "templates": "x"}))
    with pytest.raises(SchemaError):
        load_forest(str(bad))


def test_forest_json_round_trip(desk_cases):
    templates = [desk_template(desk_cases, "rem-print-1")]
    again = forest_from_json(forest_to_json(templates))
    assert [template_hash(t) for t in again] == [template_hash(t) for t in templates]
