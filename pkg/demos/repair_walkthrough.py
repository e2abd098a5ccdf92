#!/usr/bin/env python3
"""End-to-end walkthrough of the tyfix pipeline on a tiny synthetic corpus.

The script builds everything it needs in a fresh temporary directory:

  1. a five-fix corpus (four "wrap a config read in a converter call"
     fixes plus one unrelated removal),
  2. a mined template forest,
  3. a buggy project with a failing check script,
  4. candidate patches generated from the matched templates, validated by
     actually running the check script against each candidate,
  5. the same repair once more through the command-line interface.

Run it from anywhere:

    python3 demos/repair_walkthrough.py

It needs only an installed tyfix (`pip install -e . --no-build-isolation`
from the repository root) and leaves its workspace behind for inspection.
"""

from __future__ import annotations

import difflib
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from tyfix import (
    ABS,
    TableFiller,
    build_view,
    generate_patches,
    match_forest,
    mine_templates,
    parse_fix,
    parse_source,
    rank_matches,
    save_forest,
    validate,
    write_outputs,
)

# ---------------------------------------------------------------------------
# The corpus: before/after pairs the way a history scrape would deliver them.
#
# Four fixes share one shape — a value read out of a mapping is wrapped in a
# converter call before use.  Two wrap in int(), two in to_int(), so mining
# has something to generalize: the callee differs across instances and must
# abstract to a hole, while the assignment-around-a-subscript skeleton stays.
# The fifth fix (a removed log statement) is deliberate noise: it appears
# once, which is below the frequency threshold we mine with, so it gets
# pruned and never reaches the forest.
# ---------------------------------------------------------------------------

CORPUS = {
    "wrap-int-1": (
        "def read_port(cfg):\n    port = cfg['port']\n    return port + 1\n",
        "def read_port(cfg):\n    port = int(cfg['port'])\n    return port + 1\n",
    ),
    "wrap-int-2": (
        "def read_count(args):\n    count = args['count']\n    return count * 3\n",
        "def read_count(args):\n    count = int(args['count'])\n    return count * 3\n",
    ),
    "wrap-toint-1": (
        "def read_width(params):\n    width = params['width']\n    return width - 2\n",
        "def read_width(params):\n    width = to_int(params['width'])\n    return width - 2\n",
    ),
    "wrap-toint-2": (
        "def read_depth(opts):\n    depth = opts['depth']\n    return depth // 4\n",
        "def read_depth(opts):\n    depth = to_int(opts['depth'])\n    return depth // 4\n",
    ),
    "drop-log-1": (
        "def ship(order):\n    print(order)\n    return order.total\n",
        "def ship(order):\n    return order.total\n",
    ),
}

BUGGY_APP = """\
def scaled_timeout(settings):
    timeout = settings['timeout']
    return timeout * 2


def main():
    print(scaled_timeout({'timeout': '30'}))


if __name__ == '__main__':
    main()
"""

CHECK_SCRIPT = """\
import sys

from app import scaled_timeout

sys.exit(0 if scaled_timeout({'timeout': '30'}) == 60 else 1)
"""


def banner(text: str) -> None:
    print()
    print("=" * 72)
    print(text)
    print("=" * 72)


def sketch(tree, indent: str = "    ") -> str:
    """Render a template tree as indented kind:value lines, holes as '?'."""
    if tree.is_empty:
        return indent + "(empty)"
    lines = []

    def walk(node, relation, depth):
        kind = "?" if node.t is ABS else node.t
        value = "?" if node.v is ABS else repr(node.v)
        slot = f"{relation}=" if relation else ""
        lines.append(f"{indent}{'  ' * depth}{slot}{kind}:{value}")
        for rel, child in node.children:
            walk(child, rel, depth + 1)

    walk(tree.root, None, 0)
    return "\n".join(lines)


def show_diff(before: str, after: str, name: str) -> str:
    rows = difflib.unified_diff(
        before.splitlines(keepends=True),
        after.splitlines(keepends=True),
        fromfile=f"a/{name}",
        tofile=f"b/{name}",
    )
    return "".join(rows)


def main() -> int:
    sys.stdout.reconfigure(line_buffering=True)
    work = Path(tempfile.mkdtemp(prefix="tyfix-demo-"))
    print(f"workspace: {work}")

    # -- 1. lay the corpus out on disk (subdir per fix, before.py/after.py) --
    banner("1. The fix corpus")
    corpus_dir = work / "corpus"
    for fix_id, (before, after) in CORPUS.items():
        fix_dir = corpus_dir / fix_id
        fix_dir.mkdir(parents=True)
        (fix_dir / "before.py").write_text(before)
        (fix_dir / "after.py").write_text(after)
    print(f"wrote {len(CORPUS)} before/after pairs under {corpus_dir}")

    raw = []
    for fix_id in sorted(CORPUS):
        before = (corpus_dir / fix_id / "before.py").read_text()
        after = (corpus_dir / fix_id / "after.py").read_text()
        template = parse_fix(before, after, fix_id)
        raw.append(template)
        print(f"  {fix_id:13s} -> category {template.category}")

    # -- 2. mine: cluster same-category fixes, merging nearest pairs --------
    banner("2. Mining generalized templates (min_freq=2)")
    forest, stats = mine_templates(raw, min_freq=2)
    print(
        f"{stats.raw_count} raw fixes -> {stats.mined_count} root template(s) "
        f"after {stats.iterations} iterations, {stats.merges} merge(s), "
        f"{stats.pruned} low-frequency root(s) pruned"
    )
    for root in forest:
        print(f"\nroot covers fixes {sorted(root.instance_ids)}")
        print("  before pattern (what buggy code must look like):")
        print(sketch(root.before))
        print("  after pattern (what the fix turns it into):")
        print(sketch(root.after))
    forest_path = work / "forest.json"
    save_forest(str(forest_path), forest)
    print(f"\nsaved forest to {forest_path}")

    # -- 3. the buggy project ------------------------------------------------
    banner("3. A buggy project whose check currently fails")
    project = work / "project"
    project.mkdir()
    (project / "app.py").write_text(BUGGY_APP)
    (project / "check.py").write_text(CHECK_SCRIPT)
    print(BUGGY_APP)
    probe = subprocess.run([sys.executable, "check.py"], cwd=project)
    print(f"check.py exit status on the buggy code: {probe.returncode} (failing)")

    # -- 4. match the forest against the suspicious line ---------------------
    banner("4. Matching templates against app.py line 2")
    source = parse_source(BUGGY_APP)
    view = build_view(source, [2])
    matches = match_forest(forest, view)
    ranked = rank_matches(matches)
    print(
        f"{len(matches)} template(s) match (the generalized root and both of\n"
        "its merged children -- they share one search query, so they form one\n"
        "rank group ordered by how many corpus fixes back each one):"
    )
    for t in ranked:
        callee = next((n.v for n in t.after.nodes() if n.t == "Call"), None)
        label = "hole (mask for the filler)" if callee is ABS else repr(callee)
        print(f"  {t!r}  converter callee: {label}")

    # -- 5. generate candidate patches ---------------------------------------
    # Fully concrete templates need no mask filling; the generalized root
    # renders a masked prompt and asks the filler for the missing callee.
    # The table below plays the role of a code model's beam output.
    banner("5. Generating candidate patches")
    filler = TableFiller([(["int"], 0.9), (["to_num"], 0.2)])
    candidates, errors = generate_patches(view, source, ranked, filler, beam=10)
    for c in candidates:
        masks = c.prompt.mask_count if c.prompt else 0
        print(f"  {c.candidate_id}: masks={masks} fills={c.fills} score={c.score}")
    print(f"  per-template errors: {len(errors)}")
    masked = [c for c in candidates if c.prompt and c.prompt.mask_count]
    if masked:
        print("\nthe masked prompt sent to the filler (window of 3 lines):")
        print("  | " + masked[0].prompt.text.replace("\n", "\n  | "))

    # -- 6. validate by running the project's check on each candidate --------
    banner("6. Validating candidates against check.py")
    checked = validate(
        candidates,
        project,
        f"{sys.executable} check.py",
        "app.py",
        timeout=60.0,
    )
    for c in checked:
        print(f"  {c.candidate_id}: {c.status}")
    plausible = [c for c in checked if c.status == "plausible"]
    if not plausible:
        print("no candidate passed the check -- demo corpus is broken")
        return 1
    print("\nwinning patch:")
    print(show_diff(BUGGY_APP, plausible[0].text, "app.py"))

    out_dir = work / "out"
    manifest = write_outputs(out_dir, BUGGY_APP, "app.py", [], checked, errors)
    print(f"wrote prompts/diffs/manifest under {out_dir} ({manifest.name} and friends)")

    # -- 7. the same repair as two shell commands ----------------------------
    banner("7. Command-line parity: tyfix mine + tyfix repair")
    table_path = work / "table.json"
    table_path.write_text(
        json.dumps(
            {
                "results": [
                    {"fills": ["int"], "score": 0.9},
                    {"fills": ["to_num"], "score": 0.2},
                ]
            }
        )
    )
    cli_forest = work / "forest_cli.json"
    mine_cmd = [
        sys.executable, "-m", "tyfix", "mine",
        "--corpus", str(corpus_dir),
        "--out", str(cli_forest),
        "--min-freq", "2",
    ]
    print("$", " ".join(mine_cmd))
    subprocess.run(mine_cmd, check=True)
    if cli_forest.read_bytes() == forest_path.read_bytes():
        print("(byte-identical to the forest mined through the API above)")

    out_cli = work / "out_cli"
    repair_cmd = [
        sys.executable, "-m", "tyfix", "repair",
        "--forest", str(cli_forest),
        "--file", str(project / "app.py"),
        "--lines", "2",
        "--filler", f"mock:{table_path}",
        "--test-cmd", f"{sys.executable} check.py",
        "--project", str(project),
        "--out", str(out_cli),
        "--jobs", "1",
    ]
    print("$", " ".join(repair_cmd))
    subprocess.run(repair_cmd, check=True)
    rows = json.loads((out_cli / "manifest.json").read_text())["candidates"]
    print("manifest statuses:", {r["candidate_id"]: r["status"] for r in rows})

    banner(f"done -- explore the artifacts under {work}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
