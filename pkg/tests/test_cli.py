import io
import os
import subprocess
import sys
from pathlib import Path

import pytest

from lightrocks.cli import main

ROOT = Path(__file__).resolve().parent.parent
SCEN = ROOT / "scenarios"
DEFECTS = Path(__file__).parent / "defects"
GOLDEN = Path(__file__).parent / "golden"


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


def test_validate_clean_bundle_is_silent():
    assert cli("validate", SCEN / "screwing.lr") == (0, "", "")


def test_validate_defect():
    code, out, err = cli("validate", DEFECTS / "bad_no_end.lr")
    assert code == 1 and out == ""
    assert "E001" in err


def test_generic_profile_flag():
    src = DEFECTS / "level_violation.lr"
    assert cli("validate", src)[0] == 1
    assert cli("validate", src, "--profile", "generic")[0] == 0


def test_parse_summary():
    code, out, _ = cli("parse", SCEN / "screwing.lr")
    assert code == 0
    assert out.splitlines()[0].startswith("task ScrewTask:")
    assert cli("parse", DEFECTS / "syntax_error.lr")[0] == 1


def test_run_screwing():
    code, out, err = cli("run", SCEN / "screwing.lr", "--root", "ScrewTask",
                         "--world", SCEN / "screwing_world.json", "--seed", 7)
    assert code == 0 and err == ""
    assert out.startswith("outcome=Success ticks=") and out.rstrip().endswith("end=done")


def test_run_failure_exit_code():
    code, out, err = cli("run", SCEN / "screwing.lr", "--root", "ScrewTask",
                         "--world", SCEN / "screwing_world.json", "--max-ticks", 50)
    assert code == 3 and out.startswith("outcome=Timeout ticks=50 ")


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["run", "x.lr"],
    ["validate", "x.lr", "--profile", "odd"],
    ["run", "x.lr", "--root", "R", "--world", "w.json", "--seed", "many"],
])
def test_usage_errors(argv):
    code, _, _ = cli(*argv)
    assert code == 2


def test_missing_file():
    code, _, err = cli("validate", "no/such/file.lr")
    assert code == 1 and "no/such/file.lr" in err


def test_unknown_root():
    code, _, err = cli("run", SCEN / "screwing.lr", "--root", "Nope",
                       "--world", SCEN / "screwing_world.json")
    assert code == 1 and "E011" in err


def test_compile_outputs(tmp_path):
    out_lr, out_dot = tmp_path / "flat.lr", tmp_path / "flat.dot"
    code, out, err = cli("compile", SCEN / "screwing.lr", "--root", "ScrewTask",
                         "-o", out_lr, "--dot", out_dot)
    assert (code, out, err) == (0, "", "")
    assert out_dot.read_bytes() == (GOLDEN / "screwing.dot").read_bytes()
    assert cli("validate", out_lr, "--profile", "generic")[0] == 0
    # the flat model runs to the same outcome
    code, out, _ = cli("run", out_lr, "--root", "ScrewTask",
                       "--world", SCEN / "screwing_world.json", "--seed", 7)
    assert code == 0 and out.startswith("outcome=Success")


def test_compile_to_stdout():
    code, out, _ = cli("compile", SCEN / "rail_assembly.lr", "--root", "RailAssembly")
    assert code == 0 and out.startswith("component 3 RailAssembly")


def test_trace_summary(tmp_path):
    trace = tmp_path / "t.jsonl"
    cli("run", SCEN / "screwing.lr", "--root", "ScrewTask",
        "--world", SCEN / "screwing_world.json", "--seed", 7, "--trace", trace)
    code, out, _ = cli("trace", trace, "--summary")
    assert code == 0
    assert "ScrewTask/screw/ScrewDown: entered=3 stops: lambda=3" in out.splitlines()
    assert out.splitlines()[-1].startswith("result: Success")


def test_trace_rejects_broken_file(tmp_path):
    trace = tmp_path / "t.jsonl"
    trace.write_text('{"seq": 1, "tick": 0, "kind": "Entered", "subject": "X", "data": {}}\n')
    code, _, err = cli("trace", trace)
    assert code == 3 and "trace:" in err


def test_lr_path(tmp_path, monkeypatch):
    lib = tmp_path / "libs"
    lib.mkdir()
    (lib / "grasping.lr").write_text(
        "skill Grasp { start a; end b; action X { start p; end q; exec tool.release() until true; }"
        " on self.a -> X.p; on X.q -> self.b; }\n")
    main_lr = tmp_path / "main.lr"
    main_lr.write_text("task T { start s; end e; uses grasping.Grasp as g; "
                       "on self.s -> g.a; on g.b -> self.e; }\n")
    monkeypatch.delenv("LR_PATH", raising=False)
    assert cli("validate", main_lr)[0] == 1
    monkeypatch.setenv("LR_PATH", os.pathsep.join(["/nonexistent", str(lib)]))
    assert cli("validate", main_lr) == (0, "", "")
    code, out, _ = cli("run", main_lr, "--root", "T", "--world", SCEN / "screwing_world.json")
    assert code == 0 and out.startswith("outcome=Success")


def test_module_entry_point_is_deterministic(tmp_path):
    def invoke(trace):
        return subprocess.run(
            [sys.executable, "-m", "lightrocks", "run", str(SCEN / "rail_assembly.lr"),
             "--root", "RailAssembly", "--world", str(SCEN / "rail_world.json"),
             "--seed", "3", "--trace", str(trace)],
            capture_output=True, cwd=ROOT)

    a, b = invoke(tmp_path / "a.jsonl"), invoke(tmp_path / "b.jsonl")
    assert a.returncode == b.returncode == 0
    assert (a.stdout, a.stderr) == (b.stdout, b.stderr)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
