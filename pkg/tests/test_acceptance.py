"""The eight acceptance criteria, one test each.

Each test prints a ``[PASS]``/``[FAIL]`` line; pytest repeats them in an
"acceptance criteria" section of its summary. Running this file directly
(``python tests/test_acceptance.py``) prints the same lines without pytest.
"""

import functools
import glob
import io
import math
import random
import re
import subprocess
import sys
import tempfile
import time
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

import oracles  # noqa: E402
from lightrocks import devices  # noqa: E402
from lightrocks.cli import diagnose, main as cli_main  # noqa: E402
from lightrocks.compiler import flatten  # noqa: E402
from lightrocks.dsl import parse, parse_file, print_model  # noqa: E402
from lightrocks.engine import DEFAULT_DT, eval_condition, read_trace  # noqa: E402
from lightrocks.generate import MAX_CHILDREN, generator_world, random_model, random_syntax_model  # noqa: E402
from lightrocks.model import resolve_names, strip_spans, walk  # noqa: E402
from lightrocks.scenarios import expected_screw_iterations, load_scenario, run_scenario  # noqa: E402
from lightrocks.world import load_world, pose_error  # noqa: E402

ROOT = HERE.parent
SCEN = ROOT / "scenarios"
DEFECTS = HERE / "defects"
RAIL_SEEDS = range(10)
GENERATED_FLATTEN = 60
GENERATED_ROUND_TRIP = 100
CONDITION_CASES = 1000


# ---------------------------------------------------------------------------
# Shared runs (cached so criterion 4 can inspect every trace)


@functools.cache
def screwing_cli_run():
    with tempfile.TemporaryDirectory() as tmp:
        trace = Path(tmp) / "screwing.jsonl"
        out, err = io.StringIO(), io.StringIO()
        t0 = time.perf_counter()
        code = cli_main(["run", str(SCEN / "screwing.lr"), "--root", "ScrewTask",
                         "--world", str(SCEN / "screwing_world.json"), "--seed", "7",
                         "--trace", str(trace)], out, err)
        elapsed = time.perf_counter() - t0
        events = read_trace(trace)
    return code, out.getvalue(), events, elapsed


@functools.cache
def rail_runs():
    t0 = time.perf_counter()
    runs = [run_scenario("rail", seed=s, world_overrides={"perception": {"sigma_pos": 0.002}})
            for s in RAIL_SEEDS]
    return runs, time.perf_counter() - t0


@functools.cache
def flatten_cases():
    """(label, table, root, world factory, seed) for every equivalence check."""
    cases = []
    for name, seed in (("screwing", 7), ("rail", 0)):
        bundle = load_scenario(name)
        _, table, _ = bundle.load()
        cases.append((name, table, bundle.root, functools.partial(load_world, bundle.world_file), seed))
    for seed in range(GENERATED_FLATTEN):
        model, root = random_model(seed)
        table, _ = resolve_names(model)
        cases.append((f"generated-{seed}", table, root, generator_world, seed))
    return cases


@functools.cache
def flatten_results():
    return [(label, oracles.trace_mismatch(table, root, factory, seed))
            for label, table, root, factory, seed in flatten_cases()]


# ---------------------------------------------------------------------------
# Criteria


def criterion_1():
    code, out, events, elapsed = screwing_cli_run()
    oracle = load_scenario("screwing").expected["oracle"]
    overshoot = oracle["resistK"] * devices.V_ROT * DEFAULT_DT
    threshold = oracle["threshold"]
    stops = [e for e in events if e.kind == "StopTriggered" and e.subject.endswith("/ScrewDown")]
    torques = [e.data["snapshot"]["robot.torque.z"] for e in stops]
    in_band = all(threshold <= t <= threshold + overshoot for t in torques)
    entries = sum(1 for e in events if e.kind == "Entered" and e.subject.endswith("/ScrewDown"))
    expected = expected_screw_iterations(oracle["z0"], oracle["zTarget"], oracle["pitchPerTurn"])
    stepped = oracles.screw_iterations(oracle["z0"], oracle["zTarget"], oracle["pitchPerTurn"])
    ok = (code == 0 and out.startswith("outcome=Success") and torques and in_band
          and entries == expected == stepped and elapsed < 5.0)
    detail = (f"{out.strip()}; screw-down torques {[round(t, 6) for t in torques]} within "
              f"[{threshold}, {threshold + overshoot:.4f}]; iterations {entries} "
              f"(expected {expected}); {elapsed:.2f} s")
    return ok, detail


def criterion_2():
    runs, elapsed = rail_runs()
    expected = load_scenario("rail").expected
    tol = expected["tolerance"]
    worst_pos = worst_rot = 0.0
    ok = True
    for outcome, events, run in runs:
        finished = [e.subject.split("/")[-1] for e in events
                    if e.kind == "Finished" and e.subject.count("/") == 1]
        ok &= outcome.status == "Success" and finished == expected["tasks"]
        for part, slot in expected["parts"].items():
            d, a = pose_error(run.sim.cell.truth[part], run.em.chain(slot))
            worst_pos, worst_rot = max(worst_pos, d), max(worst_rot, a)
    ok &= worst_pos <= tol["position"] and worst_rot <= tol["rotation"] and elapsed < 10.0
    detail = (f"{len(runs)} seeds, sigma_pos 2 mm; worst part error {worst_pos * 1e3:.2e} mm, "
              f"{math.degrees(worst_rot):.2e} deg; {elapsed:.2f} s total")
    return ok, detail


def _shape_ok(table, root):
    flat = flatten(table, root).root

    def depth(c):
        return 1 + max((depth(k) for k in c.children), default=0)

    return depth(flat) <= 3 and all(len(c.children) <= MAX_CHILDREN for c in walk(flat))


def criterion_3():
    results = flatten_results()
    mismatches = [label for label, m in results if m is not None]
    generated = [c for c in flatten_cases() if c[0].startswith("generated")]
    shapes = all(_shape_ok(table, root) for _, table, root, _, _ in generated)
    ok = not mismatches and len(generated) >= 50 and shapes
    return ok, f"{len(results)} models (2 bundles + {len(generated)} generated); mismatches {mismatches or 0}"


def ordering_violations(events):
    """Check PreEvaluated < EmUpdated* < PostEvaluated for every firing.

    Returns ``(firings checked, violations)``.
    """
    window, firings, bad = None, 0, 0
    for i, e in enumerate(events):
        if e.kind == "PreEvaluated":
            window = (e.subject, e.data["transition"]) if e.data["result"] else None
        elif e.kind == "EmUpdated":
            # a root leaf's updates are applied right before the run result
            tail = {x.kind for x in events[i:]}
            if window is None and tail != {"EmUpdated", "RunResult"}:
                bad += 1
        elif e.kind == "PostEvaluated":
            firings += 1
            if window != (e.subject, e.data["transition"]):
                bad += 1
            window = None
    return firings, bad


def criterion_4():
    traces = [screwing_cli_run()[2]] + [events for _, events, _ in rail_runs()[0]]
    from lightrocks.engine import run_model
    for _, table, root, factory, seed in flatten_cases():
        traces.append(run_model(table, root, factory(), seed=seed)[1])
    firings = violations = 0
    for events in traces:
        f, v = ordering_violations(events)
        firings += f
        violations += v
    ok = violations == 0 and firings > 0
    return ok, f"{len(traces)} traces, {firings} evaluated firings, {violations} violations"


def _round_trip_ok(model):
    text = print_model(model)
    first, d1 = parse(text)
    text2 = print_model(first)
    second, d2 = parse(text2)
    return (not d1 and not d2 and strip_spans(first) == strip_spans(second)
            and text == text2 == print_model(first))


def criterion_5():
    corpus = [parse_file(SCEN / name)[0] for name in ("screwing.lr", "rail_assembly.lr")]
    corpus += [random_model(s)[0] for s in range(GENERATED_ROUND_TRIP)]
    corpus += [random_syntax_model(s) for s in range(GENERATED_ROUND_TRIP)]
    failures = sum(1 for m in corpus if not _round_trip_ok(m))
    return failures == 0, f"{len(corpus)} models, {failures} failures"


def criterion_6():
    files = sorted(glob.glob(str(DEFECTS / "*.lr")))
    wrong = []
    covered = set()
    for f in files:
        want = set(re.search(r"expect: (.*)", Path(f).read_text()).group(1).split())
        _, _, diags = diagnose(f, paths=[])
        got = {d.code for d in diags if d.is_error}
        covered |= got
        if got != want:
            wrong.append((Path(f).name, sorted(got)))
    required = {"E001", "E003", "E005", "E010", "E011", "E020", "E021", "E015"}
    ok = len(files) >= 12 and not wrong and required <= covered
    return ok, f"{len(files)} defect files, {len(covered)} distinct codes; wrong: {wrong or 'none'}"


def criterion_7():
    details, ok = [], True
    with tempfile.TemporaryDirectory() as tmp:
        for name, model, world, root in (
            ("screwing", "screwing.lr", "screwing_world.json", "ScrewTask"),
            ("rail", "rail_assembly.lr", "rail_world.json", "RailAssembly"),
        ):
            outputs = []
            for attempt in range(2):
                trace = Path(tmp) / f"{name}-{attempt}.jsonl"
                proc = subprocess.run(
                    [sys.executable, "-m", "lightrocks", "run", str(SCEN / model), "--root", root,
                     "--world", str(SCEN / world), "--seed", "7", "--trace", str(trace)],
                    capture_output=True, cwd=ROOT)
                outputs.append((proc.returncode, proc.stdout, proc.stderr, trace.read_bytes()))
            same = outputs[0] == outputs[1]
            ok &= same and outputs[0][0] == 0
            details.append(f"{name} {'identical' if same else 'DIFFERENT'} ({len(outputs[0][3])} bytes)")
    return ok, ", ".join(details)


def criterion_8():
    rng = random.Random(2024)
    matches = 0
    for _ in range(CONDITION_CASES):
        tree = oracles.random_tree(rng)
        values = rng.choice(oracles.valuations(rng))
        matches += eval_condition(tree, values, None) == oracles.oracle_eval(tree, values)
    return matches == CONDITION_CASES, f"{matches}/{CONDITION_CASES} agree with the tree-walk oracle"


CRITERIA = [
    (1, "screwing reproduction", criterion_1),
    (2, "rail assembly reproduction", criterion_2),
    (3, "flattening equivalence", criterion_3),
    (4, "micro-step ordering", criterion_4),
    (5, "parser round-trip", criterion_5),
    (6, "validation defect corpus", criterion_6),
    (7, "determinism", criterion_7),
    (8, "condition evaluator oracle", criterion_8),
]


# ---------------------------------------------------------------------------
# pytest entry points


def _check(report, number):
    _, title, fn = CRITERIA[number - 1]
    ok, detail = fn()
    assert report(number, title, ok, detail), detail


def test_criterion_1_screwing(acceptance_report):
    _check(acceptance_report, 1)


def test_criterion_2_rail(acceptance_report):
    _check(acceptance_report, 2)


def test_criterion_3_flattening(acceptance_report):
    _check(acceptance_report, 3)


def test_criterion_4_ordering(acceptance_report):
    _check(acceptance_report, 4)


def test_criterion_5_round_trip(acceptance_report):
    _check(acceptance_report, 5)


def test_criterion_6_defects(acceptance_report):
    _check(acceptance_report, 6)


def test_criterion_7_determinism(acceptance_report):
    _check(acceptance_report, 7)


def test_criterion_8_conditions(acceptance_report):
    _check(acceptance_report, 8)


if __name__ == "__main__":
    failed = 0
    for number, title, fn in CRITERIA:
        ok, detail = fn()
        failed += not ok
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {number} {title}: {detail}")
    sys.exit(1 if failed else 0)
