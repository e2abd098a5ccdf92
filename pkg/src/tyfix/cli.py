"""Command-line front end: ``mine``, ``repair``, and ``coverage``.

Exit codes: 0 success, 2 bad usage or malformed input files, 3 when no
template matched the buggy program, 4 for environment problems (missing
paths, unreachable services).  All JSON outputs are canonical, so the same
inputs write byte-identical files; timing goes to stderr only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import Settings, load_settings
from .errors import (
    EmptyChange,
    EmptyResult,
    FillerError,
    NoTemplateMatched,
    OversizeCommit,
    SandboxError,
    SchemaError,
    TyfixError,
    UnparseableDiff,
)
from .fixes import parse_fix, suspect_window
from .matching import build_view, forest_covers, match_forest, rank_matches
from .mining import mine_templates
from .patching import (
    EchoFiller,
    HTTPFiller,
    TableFiller,
    generate_patches,
    validate,
    write_outputs,
)
from .serialize import load_forest, save_forest
from .source import parse_source
from .templates import CATEGORIES

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_MATCH = 3
EXIT_ENVIRONMENT = 4


# ---------------------------------------------------------------------------
# Corpus loading
# ---------------------------------------------------------------------------

def load_corpus(corpus_dir: str | Path) -> list[tuple[str, str, str]]:
    """Read a corpus directory of fixes.

    Each immediate subdirectory is one fix and must contain ``before.py``
    and ``after.py``; the subdirectory name is the fix id.  Returns
    ``(fix_id, before_text, after_text)`` rows sorted by fix id.
    """
    root = Path(corpus_dir)
    if not root.is_dir():
        raise SandboxError(f"corpus directory {root} does not exist")
    rows: list[tuple[str, str, str]] = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        before = sub / "before.py"
        after = sub / "after.py"
        if not (before.is_file() and after.is_file()):
            continue
        rows.append((sub.name, before.read_text(), after.read_text()))
    return rows


def parse_corpus(
    corpus: list[tuple[str, str, str]],
    max_lines: int,
    ec_window: int,
    skip: str | None = None,
):
    """Parse every corpus fix into a raw template, collecting skips."""
    raw = []
    skipped: list[dict] = []
    for fix_id, before, after in corpus:
        if fix_id == skip:
            continue
        try:
            raw.append(parse_fix(before, after, fix_id, max_lines, ec_window))
        except (UnparseableDiff, OversizeCommit, EmptyChange) as exc:
            skipped.append({"fix_id": fix_id, "reason": str(exc)})
    return raw, skipped


# ---------------------------------------------------------------------------
# Fillers
# ---------------------------------------------------------------------------

def make_filler(spec: str):
    """Build a filler from its CLI spec: echo, mock:PATH, or an HTTP URL."""
    if spec == "echo":
        return EchoFiller()
    if spec.startswith("mock:"):
        return TableFiller.from_file(spec[len("mock:"):])
    if spec.startswith("http://") or spec.startswith("https://"):
        return HTTPFiller(spec)
    raise SchemaError(
        f"unknown filler {spec!r}: use 'echo', 'mock:<table.json>', or an http(s) URL"
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _settings_from(args: argparse.Namespace) -> Settings:
    overrides = {
        name: getattr(args, name, None)
        for name in (
            "min_freq",
            "beam",
            "max_templates",
            "test_timeout",
            "ctx_window",
            "max_lines",
            "mask_cap",
        )
    }
    return load_settings(config_file=getattr(args, "config", None), overrides=overrides)


def cmd_mine(args: argparse.Namespace) -> int:
    settings = _settings_from(args)
    started = time.monotonic()
    corpus = load_corpus(args.corpus)
    if not corpus:
        print(f"warning: corpus {args.corpus} holds no fixes", file=sys.stderr)
    raw, skipped = parse_corpus(corpus, settings.max_lines, settings.ctx_window)
    for entry in skipped:
        print(f"skipped {entry['fix_id']}: {entry['reason']}", file=sys.stderr)
    categories = args.categories.split(",") if args.categories else None
    forest, stats = mine_templates(raw, settings.min_freq, categories)
    save_forest(args.out, forest)
    report = {
        "corpus_fixes": len(corpus),
        "parsed": len(raw),
        "skipped": skipped,
        "mined_roots": stats.mined_count,
        "iterations": stats.iterations,
        "merges": stats.merges,
        "per_category": stats.per_category,
    }
    if args.report:
        Path(args.report).write_text(
            json.dumps(report, indent=1, sort_keys=True) + "\n"
        )
    elapsed = time.monotonic() - started
    print(
        f"mined {stats.mined_count} template roots from {len(raw)} fixes "
        f"({len(skipped)} skipped) -> {args.out}"
    )
    print(f"elapsed: {elapsed:.2f}s", file=sys.stderr)
    return EXIT_OK


def _parse_lines(spec: str) -> list[int]:
    parts = spec.split(":")
    try:
        if len(parts) == 1:
            start = end = int(parts[0])
        elif len(parts) == 2:
            start, end = int(parts[0]), int(parts[1])
        else:
            raise ValueError
    except ValueError:
        raise SchemaError(f"--lines wants 'A' or 'A:B', got {spec!r}") from None
    if start < 1 or end < start:
        raise SchemaError(f"--lines range {spec!r} is not a valid 1-based span")
    return list(range(start, end + 1))


def cmd_repair(args: argparse.Namespace) -> int:
    settings = _settings_from(args)
    started = time.monotonic()
    filler = make_filler(args.filler)
    forest = load_forest(args.forest)
    buggy_path = Path(args.file)
    if not buggy_path.is_file():
        raise SandboxError(f"buggy file {buggy_path} does not exist")
    original_text = buggy_path.read_text()
    try:
        source = parse_source(original_text)
    except SyntaxError as exc:
        raise SchemaError(f"{buggy_path} does not parse: {exc}") from exc
    lines = _parse_lines(args.lines)
    total = original_text.count("\n") + (not original_text.endswith("\n"))
    if lines[-1] > total:
        raise SchemaError(
            f"--lines {args.lines} reaches past the end of {buggy_path} "
            f"({total} lines)"
        )
    try:
        view = build_view(source, lines, settings.ctx_window)
    except EmptyResult as exc:
        raise SchemaError(str(exc)) from exc
    matched = match_forest(forest, view)
    if not matched:
        raise NoTemplateMatched(
            f"none of {len(forest)} template roots match {buggy_path}:{args.lines}"
        )
    ranked = rank_matches(matched)
    candidates, errors = generate_patches(
        view,
        source,
        ranked,
        filler,
        beam=settings.beam,
        max_templates=settings.max_templates,
    )
    if args.test_cmd:
        project = Path(args.project) if args.project else buggy_path.parent
        validate(
            candidates,
            project,
            args.test_cmd,
            buggy_path.resolve(),
            timeout=settings.test_timeout,
            jobs=args.jobs or 1,
        )
    prompts = []
    seen_origins = set()
    for candidate in candidates:
        if candidate.prompt is None:
            continue
        key = tuple(sorted(candidate.prompt.origin.items()))
        if key in seen_origins:
            continue
        seen_origins.add(key)
        prompts.append(candidate.prompt)
    manifest = write_outputs(
        args.out, original_text, buggy_path.name, prompts, candidates, errors
    )
    plausible = sum(1 for c in candidates if c.status == "plausible")
    print(
        f"{len(ranked)} templates matched; {len(candidates)} candidates "
        f"({plausible} plausible) -> {manifest}"
    )
    print(f"elapsed: {time.monotonic() - started:.2f}s", file=sys.stderr)
    return EXIT_OK


def _coverage_row(
    corpus: list[tuple[str, str, str]],
    index: int,
    settings: Settings,
    holdout_mode: str,
    forest,
) -> dict:
    fix_id, before, after = corpus[index]
    row: dict = {"fix_id": fix_id}
    try:
        holdout = parse_fix(
            before, after, fix_id, settings.max_lines, settings.ctx_window
        )
        window = suspect_window(before, after)
        view = build_view(
            parse_source(before),
            range(window[0], window[1] + 1),
            settings.ctx_window,
        )
    except (UnparseableDiff, OversizeCommit, EmptyChange, EmptyResult) as exc:
        row["skipped"] = str(exc)
        return row
    if holdout_mode == "leave-one-out":
        raw, _ = parse_corpus(
            corpus, settings.max_lines, settings.ctx_window, skip=fix_id
        )
        judge, _ = mine_templates(raw, settings.min_freq)
    else:
        judge = forest
    row["covered"] = forest_covers(judge, view, holdout.after)
    return row


def cmd_coverage(args: argparse.Namespace) -> int:
    settings = _settings_from(args)
    started = time.monotonic()
    corpus = load_corpus(args.corpus)
    forest = load_forest(args.forest) if args.forest else None
    if forest is None and args.holdout != "leave-one-out":
        raise SchemaError("coverage needs --forest unless --holdout leave-one-out")
    jobs = args.jobs or 1
    indices = range(len(corpus))
    if jobs > 1 and len(corpus) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(
                pool.map(
                    lambda i: _coverage_row(corpus, i, settings, args.holdout, forest),
                    indices,
                )
            )
    else:
        rows = [
            _coverage_row(corpus, i, settings, args.holdout, forest) for i in indices
        ]
    measurable = sum(1 for row in rows if "covered" in row)
    covered = sum(1 for row in rows if row.get("covered"))
    ratio = covered / measurable if measurable else 0.0
    report = {
        "holdout": args.holdout,
        "fixes": rows,
        "measurable": measurable,
        "covered": covered,
        "ratio": ratio,
    }
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    print(f"coverage: {covered}/{measurable} = {ratio:.3f}")
    print(f"elapsed: {time.monotonic() - started:.2f}s", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tyfix",
        description="Mine fix templates from before/after pairs and use them "
        "to draft repairs.",
    )
    parser.add_argument("--config", help="TOML settings file")
    sub = parser.add_subparsers(dest="command", required=True)

    mine = sub.add_parser("mine", help="mine a template forest from a corpus")
    mine.add_argument("--corpus", required=True, help="directory of fix subdirs")
    mine.add_argument("--out", required=True, help="forest JSON output path")
    mine.add_argument("--min-freq", dest="min_freq", type=int)
    mine.add_argument(
        "--categories",
        help=f"comma-separated subset of {','.join(CATEGORIES)}",
    )
    mine.add_argument("--max-lines", dest="max_lines", type=int)
    mine.add_argument("--report", help="mining report JSON output path")
    mine.set_defaults(func=cmd_mine)

    repair = sub.add_parser("repair", help="draft patches for a buggy file")
    repair.add_argument("--forest", required=True, help="mined forest JSON")
    repair.add_argument("--file", required=True, help="buggy source file")
    repair.add_argument("--lines", required=True, help="suspect lines 'A' or 'A:B'")
    repair.add_argument("--out", required=True, help="output directory")
    repair.add_argument(
        "--filler",
        default="echo",
        help="mask filler: echo | mock:<table.json> | http(s) URL",
    )
    repair.add_argument("--beam", type=int)
    repair.add_argument("--max-templates", dest="max_templates", type=int)
    repair.add_argument("--test-cmd", dest="test_cmd", help="validation command")
    repair.add_argument("--project", help="project root copied into the sandbox")
    repair.add_argument("--timeout", dest="test_timeout", type=float)
    repair.add_argument(
        "--jobs",
        type=int,
        default=os.cpu_count() or 1,
        help="parallel validation runs (default: logical cores; 1 = sequential)",
    )
    repair.set_defaults(func=cmd_repair)

    coverage = sub.add_parser(
        "coverage", help="measure how much of a corpus a forest covers"
    )
    coverage.add_argument("--forest", help="mined forest JSON (holdout none)")
    coverage.add_argument("--corpus", required=True, help="directory of fix subdirs")
    coverage.add_argument(
        "--holdout",
        choices=("none", "leave-one-out"),
        default="none",
        help="re-mine without each fix before judging it",
    )
    coverage.add_argument("--min-freq", dest="min_freq", type=int)
    coverage.add_argument("--out", help="coverage report JSON output path")
    coverage.add_argument(
        "--jobs",
        type=int,
        default=os.cpu_count() or 1,
        help="parallel per-fix evaluations (default: logical cores)",
    )
    coverage.set_defaults(func=cmd_coverage)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except NoTemplateMatched as exc:
        print(f"no template matched: {exc}", file=sys.stderr)
        return EXIT_NO_MATCH
    except (SandboxError, FillerError) as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    except TyfixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
