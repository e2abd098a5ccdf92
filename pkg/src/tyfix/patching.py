"""Candidate patches: fill masks, assemble texts, and validate in a sandbox.

A *mask filler* is anything with ``fill(prompt, beam) -> [(fills, score)]``;
deterministic table-driven and echo fillers ship for hermetic runs, plus a
JSON-over-HTTP client for a remote model service.  Candidates are ordered by
(template rank, descending fill score) and deduplicated by text.

Validation is generate-and-validate: a parse check first, then each
syntactically valid candidate is written into a scratch copy of the project
and the test command is run there.  The original project is never modified.
"""

from __future__ import annotations

import ast
import difflib
import json
import shutil
import subprocess
import tempfile
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

from .errors import FillerError, SandboxError
from .matching import BugView
from .prompts import MASK_RE, CodePrompt, apply_template, render_prompt
from .serialize import template_hash
from .source import SyntaxTree
from .templates import FixTemplate

DEFAULT_BEAM = 50
DEFAULT_MAX_TEMPLATES = 20
DEFAULT_TEST_TIMEOUT = 300.0

STATUS_GENERATED = "generated"
STATUS_SYNTAX_OK = "syntax_ok"
STATUS_PLAUSIBLE = "plausible"


@dataclass
class CandidatePatch:
    """One candidate repair: a full replacement file plus its provenance."""

    text: str
    fills: list[str]
    score: float
    status: str = STATUS_GENERATED
    template_id: str = ""
    candidate_id: str = ""
    prompt: CodePrompt | None = None


class MaskFiller(Protocol):
    """The fill contract: up to ``beam`` results, each with one fill per mask."""

    def fill(self, prompt: CodePrompt, beam: int) -> list[tuple[list[str], float]]:
        ...


class EchoFiller:
    """Fills every mask with a distinct placeholder identifier.

    Useful for exercising the pipeline without a model: the output parses,
    so candidates survive the syntax stage deterministically.
    """

    def __init__(self, fmt: str = "filled_{}") -> None:
        self.fmt = fmt

    def fill(self, prompt: CodePrompt, beam: int) -> list[tuple[list[str], float]]:
        if beam <= 0:
            return []
        fills = [self.fmt.format(k) for k in range(prompt.mask_count)]
        return [(fills, 0.0)]


class TableFiller:
    """Deterministic filler driven by a results table.

    The table is ``{"results": [{"fills": [...], "score": s}, ...]}`` —
    every prompt receives the listed results whose fill count matches its
    mask count, best score first, truncated to the beam.
    """

    def __init__(self, results: Sequence[tuple[list[str], float]]) -> None:
        self.results = [(list(fills), float(score)) for fills, score in results]

    @classmethod
    def from_json(cls, data: dict) -> "TableFiller":
        rows = data.get("results")
        if not isinstance(rows, list):
            raise FillerError("filler table needs a 'results' list")
        out = []
        for row in rows:
            fills = row.get("fills") if isinstance(row, dict) else None
            if not isinstance(fills, list) or not all(isinstance(f, str) for f in fills):
                raise FillerError("each table row needs a 'fills' list of strings")
            out.append((fills, float(row.get("score", 0.0))))
        return cls(out)

    @classmethod
    def from_file(cls, path: str | Path) -> "TableFiller":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise FillerError(f"cannot read filler table {path}: {exc}") from exc
        return cls.from_json(data)

    def fill(self, prompt: CodePrompt, beam: int) -> list[tuple[list[str], float]]:
        rows = [r for r in self.results if len(r[0]) == prompt.mask_count]
        rows.sort(key=lambda r: -r[1])
        return [(list(fills), score) for fills, score in rows[: max(beam, 0)]]


class HTTPFiller:
    """JSON-over-HTTP filler client.

    Request: ``{"prompt": text, "mask_count": n, "beam": k}``.
    Response: ``{"results": [{"fills": [...], "score": s}, ...]}``.
    """

    def __init__(self, url: str, timeout: float = 60.0) -> None:
        self.url = url
        self.timeout = timeout

    def fill(self, prompt: CodePrompt, beam: int) -> list[tuple[list[str], float]]:
        payload = json.dumps(
            {"prompt": prompt.text, "mask_count": prompt.mask_count, "beam": beam}
        ).encode("utf-8")
        request = urllib.request.Request(
            self.url, data=payload, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                body = response.read()
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise FillerError(f"filler service unreachable: {exc}") from exc
        try:
            data = json.loads(body)
            rows = data["results"]
            return [(list(r["fills"]), float(r.get("score", 0.0))) for r in rows]
        except (ValueError, KeyError, TypeError) as exc:
            raise FillerError(f"malformed filler response: {exc}") from exc


# ---------------------------------------------------------------------------
# Candidate generation
# ---------------------------------------------------------------------------

def substitute_fills(full_text: str, fills: list[str]) -> str:
    """Replace ``<extra_id_k>`` with ``fills[k]`` throughout the text."""
    return MASK_RE.sub(lambda m: fills[int(m.group(1))], full_text)


def generate_patches(
    view: BugView,
    program: SyntaxTree,
    ranked: list[FixTemplate],
    filler: MaskFiller,
    beam: int = DEFAULT_BEAM,
    max_templates: int = DEFAULT_MAX_TEMPLATES,
    window: int | None = None,
) -> tuple[list[CandidatePatch], list[tuple[str, str]]]:
    """Apply templates in rank order, fill their prompts, assemble patches.

    Returns the deduplicated candidates (template rank major, fill score
    minor) plus a log of per-template errors that were recorded and skipped
    (filler transport failures, unrenderable after patterns).
    """
    candidates: list[CandidatePatch] = []
    errors: list[tuple[str, str]] = []
    seen: set[str] = set()
    for t in ranked[: max_templates if max_templates >= 0 else len(ranked)]:
        tid = template_hash(t)
        try:
            modified = apply_template(view, program, t)
        except Exception as exc:  # noqa: BLE001 - recorded per template
            errors.append((tid, f"{type(exc).__name__}: {exc}"))
            continue
        for site_index, tree in enumerate(modified):
            try:
                prompt = render_prompt(
                    tree,
                    window=window,
                    origin={"template": tid, "site": site_index},
                )
            except Exception as exc:  # noqa: BLE001
                errors.append((tid, f"{type(exc).__name__}: {exc}"))
                continue
            if prompt.mask_count == 0:
                results: list[tuple[list[str], float]] = [([], 0.0)]
            else:
                try:
                    results = filler.fill(prompt, beam)
                except FillerError as exc:
                    errors.append((tid, str(exc)))
                    continue
                results = [r for r in results if len(r[0]) == prompt.mask_count]
                results = sorted(results[: max(beam, 0)], key=lambda r: -r[1])
            for fills, score in results:
                text = substitute_fills(prompt.full_text, fills)
                if text in seen:
                    continue
                seen.add(text)
                candidates.append(
                    CandidatePatch(
                        text=text,
                        fills=list(fills),
                        score=score,
                        template_id=tid,
                        prompt=prompt,
                    )
                )
    for i, candidate in enumerate(candidates):
        candidate.candidate_id = f"c{i:04d}"
    return candidates, errors


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _run_candidate(
    candidate: CandidatePatch,
    project: Path,
    relative: Path,
    test_command: str,
    timeout: float,
    scratch_root: Path,
) -> bool:
    """Stage one candidate in its own scratch copy and run the test command."""
    scratch = scratch_root / candidate.candidate_id
    try:
        shutil.copytree(project, scratch)
        (scratch / relative).write_text(candidate.text)
    except OSError as exc:
        raise SandboxError(f"cannot stage candidate: {exc}") from exc
    try:
        result = subprocess.run(
            test_command,
            shell=True,
            cwd=scratch,
            timeout=timeout,
            capture_output=True,
        )
    except subprocess.TimeoutExpired:
        return False  # counted as not plausible
    return result.returncode == 0


def validate(
    patches: list[CandidatePatch],
    project_dir: str | Path,
    test_command: str,
    file_path: str | Path,
    timeout: float = DEFAULT_TEST_TIMEOUT,
    workdir: str | Path | None = None,
    jobs: int = 1,
) -> list[CandidatePatch]:
    """Parse-check candidates, then run the test command on scratch copies.

    ``file_path`` is the patched file's path relative to ``project_dir``.
    Statuses only ever move forward (generated -> syntax_ok -> plausible);
    candidate order is preserved and the source project is never written.
    Runs are sequential by default; ``jobs > 1`` validates candidates
    concurrently, each in its own isolated scratch directory.
    """
    project = Path(project_dir)
    if not project.is_dir():
        raise SandboxError(f"project directory {project} does not exist")
    relative = Path(file_path)
    if relative.is_absolute():
        try:
            relative = relative.relative_to(project.resolve())
        except ValueError as exc:
            raise SandboxError(
                f"{file_path} is not inside the project {project}"
            ) from exc

    for candidate in patches:
        try:
            ast.parse(candidate.text)
        except SyntaxError:
            continue
        candidate.status = STATUS_SYNTAX_OK

    runnable = [c for c in patches if c.status == STATUS_SYNTAX_OK]
    scratch_root = Path(workdir) if workdir is not None else None
    temp_holder: tempfile.TemporaryDirectory | None = None
    if scratch_root is None:
        temp_holder = tempfile.TemporaryDirectory(prefix="patch-sandbox-")
        scratch_root = Path(temp_holder.name)
    try:
        scratch_root.mkdir(parents=True, exist_ok=True)
        if jobs > 1 and len(runnable) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                verdicts = list(
                    pool.map(
                        lambda c: _run_candidate(
                            c, project, relative, test_command, timeout, scratch_root
                        ),
                        runnable,
                    )
                )
        else:
            verdicts = [
                _run_candidate(
                    c, project, relative, test_command, timeout, scratch_root
                )
                for c in runnable
            ]
        for candidate, passed in zip(runnable, verdicts):
            if passed:
                candidate.status = STATUS_PLAUSIBLE
    finally:
        if temp_holder is not None:
            temp_holder.cleanup()
    return patches


# ---------------------------------------------------------------------------
# Output writers
# ---------------------------------------------------------------------------

def unified_diff(original: str, patched: str, name: str) -> str:
    lines = difflib.unified_diff(
        original.splitlines(keepends=True),
        patched.splitlines(keepends=True),
        fromfile=f"a/{name}",
        tofile=f"b/{name}",
    )
    return "".join(lines)


def manifest_entry(candidate: CandidatePatch) -> dict:
    return {
        "candidate_id": candidate.candidate_id,
        "template_id": candidate.template_id,
        "status": candidate.status,
        "score": candidate.score,
    }


def write_outputs(
    out_dir: str | Path,
    original_text: str,
    file_name: str,
    prompts: list[CodePrompt],
    patches: list[CandidatePatch],
    errors: list[tuple[str, str]] | None = None,
) -> Path:
    """Write prompts, per-candidate diffs, and the JSON manifest.

    Returns the manifest path.  All JSON output is canonical (sorted keys,
    stable indentation) so identical runs write identical bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prompt_rows = [
        {"text": p.text, "mask_count": p.mask_count, "origin": p.origin}
        for p in prompts
    ]
    (out / "prompts.json").write_text(
        json.dumps(prompt_rows, indent=1, sort_keys=True) + "\n"
    )
    for candidate in patches:
        diff_text = unified_diff(original_text, candidate.text, file_name)
        (out / f"{candidate.candidate_id}.diff").write_text(diff_text)
    manifest = {
        "file": file_name,
        "candidates": [manifest_entry(c) for c in patches],
        "errors": [
            {"template_id": tid, "error": message} for tid, message in (errors or [])
        ],
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest_path
