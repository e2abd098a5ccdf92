"""Shared fixtures: the desk corpus, the mini corpus, and the listing project."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
FIXTURES = TESTS_DIR / "fixtures"
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

from fixtures.desk_corpus import CASES  # noqa: E402

from tyfix.fixes import parse_fix, suspect_window  # noqa: E402
from tyfix.matching import build_view  # noqa: E402
from tyfix.prompts import MASK_FMT  # noqa: E402
from tyfix.source import parse_source, render  # noqa: E402


def normalize(text: str) -> str:
    """Source text as rendered back from its own parse (the comparison form)."""
    return render(parse_source(text), MASK_FMT.format)[0]


def view_for(before: str, after: str, window: int = 3):
    """The bug view a repair run would build for this fix's suspect lines."""
    lines = suspect_window(before, after)
    source = parse_source(before)
    return build_view(source, range(lines[0], lines[1] + 1), window), source


@pytest.fixture(scope="session")
def desk_cases() -> list[tuple[str, str, str]]:
    return list(CASES)


@pytest.fixture(scope="session")
def desk_raw(desk_cases):
    return [parse_fix(b, a, fid) for fid, b, a in desk_cases]


@pytest.fixture(scope="session")
def mini_corpus_dir() -> Path:
    return FIXTURES / "mini_corpus"


@pytest.fixture(scope="session")
def listing_project_dir() -> Path:
    return FIXTURES / "listing_project"


@pytest.fixture(scope="session")
def listing_filler_table() -> Path:
    return FIXTURES / "listing_filler.json"


@pytest.fixture()
def desk_corpus_dir(tmp_path, desk_cases) -> Path:
    root = tmp_path / "desk"
    for fid, before, after in desk_cases:
        d = root / fid
        d.mkdir(parents=True)
        (d / "before.py").write_text(before)
        (d / "after.py").write_text(after)
    return root
