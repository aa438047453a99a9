"""Independent reference implementations used by the tests."""

import itertools
import math
import random

from lightrocks.model import And, BoolChannel, Compare, Const, Not, Or

BOOL_CHANNELS = ["b.p", "b.q", "b.r", "b.s"]
NUM_CHANNELS = ["n.x", "n.y", "n.z"]
OPS = ["<", "<=", ">", ">=", "==", "!="]


def to_python(cond) -> str:
    """Translate a condition tree into a Python expression over ``v[...]``."""
    if isinstance(cond, Const):
        return "True" if cond.value else "False"
    if isinstance(cond, BoolChannel):
        return f"v[{cond.path!r}]"
    if isinstance(cond, Compare):
        return f"(v[{cond.path!r}] {cond.op} {cond.value!r})"
    if isinstance(cond, Not):
        return f"(not {to_python(cond.operand)})"
    if isinstance(cond, And):
        return f"({to_python(cond.left)} and {to_python(cond.right)})"
    if isinstance(cond, Or):
        return f"({to_python(cond.left)} or {to_python(cond.right)})"
    raise TypeError(cond)


def oracle_eval(cond, values: dict) -> bool:
    return bool(eval(to_python(cond), {"__builtins__": {}}, {"v": values}))


def random_tree(rng: random.Random, depth=0):
    k = rng.randrange(6 if depth < 4 else 3)
    if k == 0:
        return Const(rng.random() < 0.5)
    if k == 1:
        return BoolChannel(rng.choice(BOOL_CHANNELS))
    if k == 2:
        return Compare(rng.choice(NUM_CHANNELS), rng.choice(OPS), rng.choice([-1.0, 0.0, 0.5, 2.0]))
    if k == 3:
        return Not(random_tree(rng, depth + 1))
    if k == 4:
        return And(random_tree(rng, depth + 1), random_tree(rng, depth + 1))
    return Or(random_tree(rng, depth + 1), random_tree(rng, depth + 1))


def valuations(rng: random.Random, limit=64):
    """All boolean assignments crossed with sampled numeric values (capped)."""
    out = []
    for bools in itertools.product([False, True], repeat=len(BOOL_CHANNELS)):
        nums = [rng.choice([-1.0, 0.0, 0.25, 0.5, 2.0, 3.0]) for _ in NUM_CHANNELS]
        out.append(dict(zip(BOOL_CHANNELS, bools)) | dict(zip(NUM_CHANNELS, nums)))
    rng.shuffle(out)
    return out[:limit]


def screw_iterations(z0, z_target, pitch_per_turn):
    """Count screw-down turns by stepping, not by formula."""
    z, n = z0, 0
    while z > z_target + 1e-12:
        z -= pitch_per_turn
        n += 1
    return n


def half_turn_advance(pitch, threshold, resist_k):
    return pitch * (threshold / resist_k) / (2 * math.pi)


def trace_mismatch(table, root, em_factory, seed, **limits):
    """First differing event between a run of ``root`` and of its flattened form.

    Subjects of the original trace are rewritten to flat instance paths
    before comparing. Returns None when the traces are equal.
    """
    from lightrocks.compiler import flat_table, flatten
    from lightrocks.engine import TraceEvent, run_model

    _, original, _ = run_model(table, root, em_factory(), seed=seed, **limits)
    flat = flatten(table, root)
    _, flat_events, _ = run_model(flat_table(flat), root, em_factory(), seed=seed, **limits)
    rewritten = [TraceEvent(e.seq, e.tick, e.kind, flat.rewrite(e.subject), e.data).to_json()
                 for e in original]
    other = [e.to_json() for e in flat_events]
    for a, b in zip(rewritten, other):
        if a != b:
            return a, b
    if len(rewritten) != len(other):
        return len(rewritten), len(other)
    return None
