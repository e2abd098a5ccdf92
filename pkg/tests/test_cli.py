"""Command-line behaviour: mine, repair, coverage, settings, exit codes."""

from __future__ import annotations

import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from tyfix.cli import (
    EXIT_ENVIRONMENT,
    EXIT_NO_MATCH,
    EXIT_OK,
    EXIT_USAGE,
    _parse_lines,
    load_corpus,
    main,
    make_filler,
    parse_corpus,
)
from tyfix.config import Settings, load_settings
from tyfix.errors import FillerError, SandboxError, SchemaError
from tyfix.fixes import parse_fix, suspect_window
from tyfix.matching import build_view, forest_covers
from tyfix.mining import mine_templates
from tyfix.patching import EchoFiller, HTTPFiller, TableFiller
from tyfix.serialize import load_forest
from tyfix.source import parse_source


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_corpus(root: Path, cases) -> Path:
    for fid, before, after in cases:
        d = root / fid
        d.mkdir(parents=True)
        (d / "before.py").write_text(before)
        (d / "after.py").write_text(after)
    return root


# ---------------------------------------------------------------------------
# Settings
# ---------------------------------------------------------------------------

def test_settings_defaults():
    s = load_settings(environ={})
    assert s == Settings()
    assert (s.min_freq, s.beam, s.max_templates) == (5, 50, 20)
    assert (s.test_timeout, s.ctx_window, s.max_lines, s.mask_cap) == (
        300.0, 3, 50, 100,
    )


@pytest.mark.parametrize("body", [
    "[tyfix]\nmin_freq = 2\nbeam = 7\n",   # table form
    "min_freq = 2\nbeam = 7\n",            # top-level form
])
def test_settings_read_from_toml(tmp_path, body):
    cfg = tmp_path / "tyfix.toml"
    cfg.write_text(body)
    s = load_settings(config_file=cfg, environ={})
    assert (s.min_freq, s.beam) == (2, 7)
    assert s.max_templates == 20  # untouched fields keep defaults


def test_settings_precedence_is_flags_env_file(tmp_path):
    cfg = tmp_path / "tyfix.toml"
    cfg.write_text("min_freq = 2\nbeam = 7\nmax_lines = 9\n")
    env = {"TYFIX_MIN_FREQ": "3", "TYFIX_BEAM": "8"}
    s = load_settings(config_file=cfg, environ=env, overrides={"min_freq": 4})
    assert s.min_freq == 4      # flag beats env beats file
    assert s.beam == 8          # env beats file
    assert s.max_lines == 9     # file beats default


@pytest.mark.parametrize("kwargs", [
    {"overrides": {"bean": 3}},                       # typo'd key
    {"environ": {"TYFIX_MIN_FREQ": "many"}},          # non-numeric env value
])
def test_settings_reject_bad_inputs(kwargs):
    with pytest.raises(SchemaError):
        load_settings(**{"environ": {}, **kwargs})


def test_settings_reject_boolean_integers(tmp_path):
    cfg = tmp_path / "tyfix.toml"
    cfg.write_text("min_freq = true\n")
    with pytest.raises(SchemaError):
        load_settings(config_file=cfg, environ={})


def test_settings_coerce_numeric_strings():
    s = load_settings(environ={"TYFIX_TEST_TIMEOUT": "1.5", "TYFIX_BEAM": "9"})
    assert s.test_timeout == 1.5 and s.beam == 9


def test_settings_missing_config_file_is_loud(tmp_path):
    with pytest.raises(SchemaError):
        load_settings(config_file=tmp_path / "absent.toml", environ={})


# ---------------------------------------------------------------------------
# Small helpers
# ---------------------------------------------------------------------------

def test_line_specs_expand_to_ranges():
    assert _parse_lines("7") == [7]
    assert _parse_lines("3:5") == [3, 4, 5]
    for bad in ("5:3", "0", "x", "1:2:3", "-1"):
        with pytest.raises(SchemaError):
            _parse_lines(bad)


def test_filler_specs_map_to_implementations(listing_filler_table):
    assert isinstance(make_filler("echo"), EchoFiller)
    assert isinstance(make_filler(f"mock:{listing_filler_table}"), TableFiller)
    assert isinstance(make_filler("http://h/fill"), HTTPFiller)
    assert isinstance(make_filler("https://h/fill"), HTTPFiller)
    with pytest.raises(SchemaError):
        make_filler("model-v3")
    with pytest.raises(FillerError):
        make_filler("mock:/no/such/table.json")


def test_corpus_loading_is_sorted_and_tolerant(tmp_path):
    root = write_corpus(tmp_path / "c", [("b-2", "x = 1\n", "x = 2\n"),
                                         ("a-1", "y = 1\n", "y = 2\n")])
    (root / "incomplete").mkdir()          # no before/after pair
    (root / "stray.txt").write_text("")    # not a fix directory
    rows = load_corpus(root)
    assert [r[0] for r in rows] == ["a-1", "b-2"]
    with pytest.raises(SandboxError):
        load_corpus(tmp_path / "missing")


def test_corpus_parsing_records_skips_and_holdouts():
    corpus = [
        ("good", "x = 1\n", "x = int(1)\n"),
        ("broken", "def f(:\n", "def f():\n    pass\n"),
        ("held", "y = 2\n", "y = str(2)\n"),
    ]
    raw, skipped = parse_corpus(corpus, max_lines=50, ec_window=3)
    assert [t.instance_ids[0] for t in raw] == ["good", "held"]
    assert [s["fix_id"] for s in skipped] == ["broken"]
    raw2, _ = parse_corpus(corpus, 50, 3, skip="held")
    assert [t.instance_ids[0] for t in raw2] == ["good"]


# ---------------------------------------------------------------------------
# mine
# ---------------------------------------------------------------------------

def test_mine_writes_a_forest_and_a_report(capsys, desk_corpus_dir, tmp_path):
    forest_path = tmp_path / "forest.json"
    report_path = tmp_path / "report.json"
    code, out, err = run(
        capsys, "mine", "--corpus", str(desk_corpus_dir),
        "--out", str(forest_path), "--report", str(report_path),
    )
    assert code == EXIT_OK
    assert "mined 7 template roots from 60 fixes (0 skipped)" in out
    assert "elapsed" in err and "elapsed" not in out
    forest = load_forest(forest_path)
    assert len(forest) == 7
    report = json.loads(report_path.read_text())
    assert report["corpus_fixes"] == 60 and report["parsed"] == 60
    assert report["mined_roots"] == 7 and report["skipped"] == []
    assert set(report["per_category"]) == {"Add", "Insert", "Remove", "Replace"}


def test_mine_is_reproducible_byte_for_byte(capsys, desk_corpus_dir, tmp_path):
    paths = [tmp_path / "f1.json", tmp_path / "f2.json"]
    for p in paths:
        assert run(capsys, "mine", "--corpus", str(desk_corpus_dir),
                   "--out", str(p))[0] == EXIT_OK
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_mine_warns_on_an_empty_corpus(capsys, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    out_path = tmp_path / "forest.json"
    code, _out, err = run(capsys, "mine", "--corpus", str(empty),
                          "--out", str(out_path))
    assert code == EXIT_OK
    assert "holds no fixes" in err
    assert load_forest(out_path) == []


def test_mine_skips_corrupt_fixes_loudly(capsys, tmp_path):
    root = write_corpus(tmp_path / "c", [("ok-1", "x = 1\n", "x = int(1)\n")])
    bad = root / "bad-1"
    bad.mkdir()
    (bad / "before.py").write_text("def broken(:\n")
    (bad / "after.py").write_text("def broken():\n    pass\n")
    report_path = tmp_path / "report.json"
    code, out, err = run(capsys, "mine", "--corpus", str(root),
                         "--out", str(tmp_path / "f.json"), "--min-freq", "1",
                         "--report", str(report_path))
    assert code == EXIT_OK
    assert "skipped bad-1" in err
    report = json.loads(report_path.read_text())
    assert [s["fix_id"] for s in report["skipped"]] == ["bad-1"]
    assert report["parsed"] == 1


def test_mine_can_restrict_categories(capsys, desk_corpus_dir, tmp_path):
    report_path = tmp_path / "report.json"
    code, _out, _err = run(
        capsys, "mine", "--corpus", str(desk_corpus_dir),
        "--out", str(tmp_path / "f.json"), "--min-freq", "1",
        "--categories", "Remove", "--report", str(report_path),
    )
    assert code == EXIT_OK
    report = json.loads(report_path.read_text())
    assert set(report["per_category"]) == {"Remove"}
    assert run(capsys, "mine", "--corpus", str(desk_corpus_dir),
               "--out", str(tmp_path / "g.json"),
               "--categories", "Bogus")[0] == EXIT_USAGE


def test_mine_without_a_corpus_is_an_environment_error(capsys, tmp_path):
    code, _out, err = run(capsys, "mine", "--corpus", str(tmp_path / "nope"),
                          "--out", str(tmp_path / "f.json"))
    assert code == EXIT_ENVIRONMENT
    assert "environment error" in err


def test_mine_settings_flow_through_the_layers(
    capsys, monkeypatch, desk_corpus_dir, tmp_path
):
    def roots_with(*argv):
        out_path = tmp_path / f"f{len(list(tmp_path.iterdir()))}.json"
        assert run(capsys, *argv, "--corpus", str(desk_corpus_dir),
                   "--out", str(out_path))[0] == EXIT_OK
        return len(load_forest(out_path))

    cfg = tmp_path / "tyfix.toml"
    cfg.write_text("[tyfix]\nmin_freq = 1\n")
    assert roots_with("--config", str(cfg), "mine") == 8
    monkeypatch.setenv("TYFIX_MIN_FREQ", "1")
    assert roots_with("mine") == 8
    monkeypatch.setenv("TYFIX_MIN_FREQ", "99")
    assert roots_with("mine", "--min-freq", "1") == 8  # the flag wins
    monkeypatch.delenv("TYFIX_MIN_FREQ")


# ---------------------------------------------------------------------------
# repair
# ---------------------------------------------------------------------------

@pytest.fixture()
def mini_forest(capsys, mini_corpus_dir, tmp_path):
    forest_path = tmp_path / "mini-forest.json"
    code, _out, _err = run(capsys, "mine", "--corpus", str(mini_corpus_dir),
                           "--out", str(forest_path))
    assert code == EXIT_OK
    return forest_path


def test_repair_drafts_a_plausible_patch_for_the_listing_bug(
    capsys, mini_forest, listing_project_dir, listing_filler_table, tmp_path
):
    out_dirs = [tmp_path / "out1", tmp_path / "out2"]
    for out_dir in out_dirs:
        code, out, _err = run(
            capsys, "repair",
            "--forest", str(mini_forest),
            "--file", str(listing_project_dir / "netauth.py"),
            "--lines", "12",
            "--out", str(out_dir),
            "--filler", f"mock:{listing_filler_table}",
            "--test-cmd", f"{sys.executable} check.py",
            "--project", str(listing_project_dir),
            "--jobs", "1",
        )
        assert code == EXIT_OK
        assert "plausible" in out

    manifest = json.loads((out_dirs[0] / "manifest.json").read_text())
    assert manifest["file"] == "netauth.py"
    plausible = [c for c in manifest["candidates"] if c["status"] == "plausible"]
    assert plausible
    diff = (out_dirs[0] / f"{plausible[0]['candidate_id']}.diff").read_text()
    assert "-    creds = '%s:%s' % (unquote(user), unquote(password))" in diff
    assert "+    creds = to_bytes('%s:%s' % (unquote(user), unquote(password)))" in diff
    prompts = json.loads((out_dirs[0] / "prompts.json").read_text())
    assert any("<extra_id_0>" in p["text"] for p in prompts)
    # reruns write identical bytes
    for name in ("manifest.json", "prompts.json"):
        assert (out_dirs[0] / name).read_bytes() == (out_dirs[1] / name).read_bytes()


def test_repair_round_trips_a_single_fix_corpus(capsys, tmp_path):
    corpus = write_corpus(tmp_path / "corpus", [(
        "swap-1",
        "def conv(v):\n    return str(v)\n",
        "def conv(v):\n    return int(v)\n",
    )])
    forest_path = tmp_path / "forest.json"
    assert run(capsys, "mine", "--corpus", str(corpus), "--out",
               str(forest_path), "--min-freq", "1")[0] == EXIT_OK

    project = tmp_path / "project"
    project.mkdir()
    (project / "mod.py").write_text("def conv(v):\n    return str(v)\n")
    (project / "check.py").write_text(
        "import mod\nraise SystemExit(0 if mod.conv('3') == 3 else 1)\n"
    )
    code, out, _err = run(
        capsys, "repair", "--forest", str(forest_path),
        "--file", str(project / "mod.py"), "--lines", "2",
        "--out", str(tmp_path / "out"),
        "--test-cmd", f"{sys.executable} check.py", "--jobs", "1",
    )
    assert code == EXIT_OK
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert [c["status"] for c in manifest["candidates"]] == ["plausible"]
    # the repaired file is the fixed one
    diff = (tmp_path / "out" / "c0000.diff").read_text()
    assert "+    return int(v)" in diff
    # the original buggy file was never modified
    assert (project / "mod.py").read_text() == "def conv(v):\n    return str(v)\n"


def test_repair_reports_when_nothing_matches(capsys, mini_forest, tmp_path):
    buggy = tmp_path / "lonely.py"
    buggy.write_text("q = [1, 2]\ndel q\n")
    code, _out, err = run(
        capsys, "repair", "--forest", str(mini_forest),
        "--file", str(buggy), "--lines", "2", "--out", str(tmp_path / "out"),
    )
    assert code == EXIT_NO_MATCH
    assert "no template matched" in err


def test_repair_rejects_bad_line_specs(capsys, mini_forest, tmp_path):
    buggy = tmp_path / "small.py"
    buggy.write_text("x = 1\n")
    for spec in ("9", "0", "2:1", "one"):
        code, _out, _err = run(
            capsys, "repair", "--forest", str(mini_forest),
            "--file", str(buggy), "--lines", spec, "--out", str(tmp_path / "o"),
        )
        assert code == EXIT_USAGE, spec


def test_repair_missing_inputs_are_environment_errors(
    capsys, mini_forest, tmp_path
):
    buggy = tmp_path / "b.py"
    buggy.write_text("x = 1\n")
    assert run(capsys, "repair", "--forest", str(mini_forest),
               "--file", str(tmp_path / "absent.py"), "--lines", "1",
               "--out", str(tmp_path / "o"))[0] == EXIT_ENVIRONMENT
    assert run(capsys, "repair", "--forest", str(tmp_path / "no-forest.json"),
               "--file", str(buggy), "--lines", "1",
               "--out", str(tmp_path / "o"))[0] == EXIT_ENVIRONMENT
    assert run(capsys, "repair", "--forest", str(mini_forest),
               "--file", str(buggy), "--lines", "1",
               "--out", str(tmp_path / "o"),
               "--filler", "mock:/absent.json")[0] == EXIT_ENVIRONMENT


def test_repair_rejects_unparseable_and_unknown_inputs(
    capsys, mini_forest, tmp_path
):
    mangled = tmp_path / "mangled.py"
    mangled.write_text("def broken(:\n")
    assert run(capsys, "repair", "--forest", str(mini_forest),
               "--file", str(mangled), "--lines", "1",
               "--out", str(tmp_path / "o"))[0] == EXIT_USAGE
    good = tmp_path / "good.py"
    good.write_text("x = 1\n")
    assert run(capsys, "repair", "--forest", str(mini_forest),
               "--file", str(good), "--lines", "1",
               "--out", str(tmp_path / "o"),
               "--filler", "model-v3")[0] == EXIT_USAGE


# ---------------------------------------------------------------------------
# coverage
# ---------------------------------------------------------------------------

def test_self_coverage_is_total_at_threshold_one(
    capsys, desk_corpus_dir, tmp_path
):
    forest_path = tmp_path / "forest.json"
    assert run(capsys, "mine", "--corpus", str(desk_corpus_dir),
               "--out", str(forest_path), "--min-freq", "1")[0] == EXIT_OK
    report_path = tmp_path / "coverage.json"
    code, out, _err = run(
        capsys, "coverage", "--corpus", str(desk_corpus_dir),
        "--forest", str(forest_path), "--out", str(report_path), "--jobs", "1",
    )
    assert code == EXIT_OK
    assert "coverage: 60/60 = 1.000" in out
    report = json.loads(report_path.read_text())
    assert report["ratio"] == 1.0 and report["measurable"] == 60
    assert all(row["covered"] for row in report["fixes"])


def test_coverage_needs_a_forest_unless_leave_one_out(capsys, mini_corpus_dir):
    code, _out, err = run(capsys, "coverage", "--corpus", str(mini_corpus_dir))
    assert code == EXIT_USAGE
    assert "--forest" in err


def test_leave_one_out_matches_a_hand_rolled_judge(
    capsys, mini_corpus_dir, tmp_path
):
    report_path = tmp_path / "loo.json"
    code, out, _err = run(
        capsys, "coverage", "--corpus", str(mini_corpus_dir),
        "--holdout", "leave-one-out", "--min-freq", "1",
        "--out", str(report_path), "--jobs", "1",
    )
    assert code == EXIT_OK
    report = json.loads(report_path.read_text())

    corpus = load_corpus(mini_corpus_dir)
    for row in report["fixes"]:
        fid = row["fix_id"]
        _, before, after = next(c for c in corpus if c[0] == fid)
        holdout = parse_fix(before, after, fid)
        lines = suspect_window(before, after)
        view = build_view(parse_source(before), range(lines[0], lines[1] + 1))
        others, _ = parse_corpus(corpus, 50, 3, skip=fid)
        judge, _stats = mine_templates(others, min_freq=1)
        assert row["covered"] == forest_covers(judge, view, holdout.after), fid
    assert report["ratio"] == 1.0  # every held-out mini fix stays covered


def test_parallel_coverage_matches_sequential(capsys, mini_corpus_dir, tmp_path):
    reports = []
    for jobs, name in (("1", "seq.json"), ("4", "par.json")):
        path = tmp_path / name
        assert run(capsys, "coverage", "--corpus", str(mini_corpus_dir),
                   "--holdout", "leave-one-out", "--min-freq", "1",
                   "--out", str(path), "--jobs", jobs)[0] == EXIT_OK
        reports.append(path.read_bytes())
    assert reports[0] == reports[1]


def test_coverage_skips_fixes_it_cannot_parse(capsys, tmp_path):
    root = write_corpus(tmp_path / "c", [
        ("ok-1", "x = 1\n", "x = int(1)\n"),
        ("ok-2", "y = 2\n", "y = int(2)\n"),
    ])
    bad = root / "bad-1"
    bad.mkdir()
    (bad / "before.py").write_text("def broken(:\n")
    (bad / "after.py").write_text("def broken():\n    pass\n")
    report_path = tmp_path / "cov.json"
    code, out, _err = run(
        capsys, "coverage", "--corpus", str(root),
        "--holdout", "leave-one-out", "--min-freq", "1",
        "--out", str(report_path), "--jobs", "1",
    )
    assert code == EXIT_OK
    report = json.loads(report_path.read_text())
    skipped = [r for r in report["fixes"] if "skipped" in r]
    assert [r["fix_id"] for r in skipped] == ["bad-1"]
    assert report["measurable"] == 2


# ---------------------------------------------------------------------------
# Entry points and usage
# ---------------------------------------------------------------------------

def test_bare_invocations_and_help(capsys):
    assert run(capsys, )[0] == EXIT_USAGE
    assert run(capsys, "frobnicate")[0] == EXIT_USAGE
    code, out, _err = run(capsys, "--help")
    assert code == EXIT_OK
    assert "mine" in out and "repair" in out and "coverage" in out


def test_console_script_and_module_entry_points():
    script = shutil.which("tyfix")
    assert script, "the tyfix console script is not installed"
    for argv in ([script, "--help"], [sys.executable, "-m", "tyfix", "--help"]):
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=60)
        assert proc.returncode == 0
        assert "repair" in proc.stdout
