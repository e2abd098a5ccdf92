"""tyfix: mine generalized fix templates from type-error patches and apply
them to new buggy code via masked-prompt patch generation."""

from .abstraction import merge_templates
from .basetypes import ABS, BaseType, classify_base_type
from .errors import TyfixError
from .fixes import parse_fix, suspect_window
from .matching import (
    BugView,
    build_view,
    concat_query,
    forest_covers,
    match_forest,
    rank_matches,
    template_match,
)
from .metrics import DistanceCalculator, tree_distance_bottomup, tree_distance_topdown
from .mining import mine_templates
from .patching import (
    CandidatePatch,
    EchoFiller,
    HTTPFiller,
    TableFiller,
    generate_patches,
    validate,
    write_outputs,
)
from .prompts import CodePrompt, apply_template, render_prompt
from .serialize import (
    forest_from_json,
    forest_to_json,
    load_forest,
    save_forest,
    template_from_json,
    template_to_json,
)
from .source import parse_source, render, statements_for_lines
from .templates import FixTemplate, TemplateTree, TNode, from_syntax, to_syntax

__version__ = "0.1.0"

__all__ = [
    "ABS",
    "BaseType",
    "BugView",
    "CandidatePatch",
    "CodePrompt",
    "DistanceCalculator",
    "EchoFiller",
    "FixTemplate",
    "HTTPFiller",
    "TNode",
    "TableFiller",
    "TemplateTree",
    "TyfixError",
    "apply_template",
    "build_view",
    "classify_base_type",
    "concat_query",
    "forest_covers",
    "forest_from_json",
    "forest_to_json",
    "from_syntax",
    "generate_patches",
    "load_forest",
    "match_forest",
    "merge_templates",
    "mine_templates",
    "parse_fix",
    "parse_source",
    "rank_matches",
    "render",
    "render_prompt",
    "save_forest",
    "statements_for_lines",
    "suspect_window",
    "template_from_json",
    "tree_distance_bottomup",
    "tree_distance_topdown",
    "template_match",
    "template_to_json",
    "to_syntax",
    "validate",
    "write_outputs",
]
