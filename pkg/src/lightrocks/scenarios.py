"""Bundled case studies: screwing a screw into a cube, and rail assembly."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .dsl import parse_file
from .model import Compare, Model, SymbolTable, resolve_names, walk
from .world import EnvironmentalModel, load_world

DATA_DIR = Path(__file__).resolve().parent / "data"


class UnknownScenario(KeyError):
    pass


@dataclass
class ScenarioBundle:
    name: str
    model_file: Path
    world_file: Path
    root: str
    expected: dict = field(default_factory=dict)

    def load(self) -> tuple[Model, SymbolTable, EnvironmentalModel]:
        model, diags = parse_file(self.model_file)
        if diags:
            raise ValueError("; ".join(map(str, diags)))
        table, diags = resolve_names(model)
        if any(d.is_error for d in diags):
            raise ValueError("; ".join(map(str, diags)))
        return model, table, load_world(self.world_file)

    def world_data(self) -> dict:
        return json.loads(self.world_file.read_text(encoding="utf-8"))


def expected_screw_iterations(z0: float, z_target: float, pitch_per_turn: float) -> int:
    """Screw-down repetitions needed to drive a screw from ``z0`` to ``z_target``."""
    if not z0 > z_target:
        raise ValueError("z0 must lie above z_target")
    if not pitch_per_turn > 0:
        raise ValueError("pitch_per_turn must be positive")
    ratio = (z0 - z_target) / pitch_per_turn
    # a ratio within float noise of an integer needs exactly that many turns
    if abs(ratio - round(ratio)) < 1e-9:
        return max(1, round(ratio))
    return math.ceil(ratio)


def screw_down_threshold(model) -> float:
    """The torque literal in the ScrewDown stop condition."""
    for comp in model:
        for c in walk(comp):
            if c.name == "ScrewDown" and c.exec is not None:
                cond = c.exec.until
                if isinstance(cond, Compare) and cond.path == "robot.torque.z":
                    return cond.value
    raise LookupError("no ScrewDown torque condition")


def screw_oracle_params(model, world: dict) -> dict:
    """Loop-count oracle inputs derived from the model and the world file.

    One screw-down turns the engaged thread until ``threshold / resistK``
    radians, advancing ``pitch * angle / 2 pi``.
    """
    joint = next(c for c in world["contacts"] if c["kind"] == "screwjoint")
    threshold = screw_down_threshold(model)
    angle = threshold / joint["resistK"]
    return {
        "z0": joint["engageZ"],
        "zTarget": joint["zMin"],
        "pitchPerTurn": joint["pitch"] * angle / (2 * math.pi),
        "threshold": threshold,
        "resistK": joint["resistK"],
        "turnAngle": angle,
    }


SCENARIOS = {
    "screwing": dict(model="screwing.lr", world="screwing_world.json", root="ScrewTask",
                     expected={"outcome": "Success", "end": "done"}),
    "rail": dict(model="rail_assembly.lr", world="rail_world.json", root="RailAssembly",
                 expected={"outcome": "Success", "end": "done",
                           "tasks": ["first", "second", "third"],
                           "parts": {"part1": "slot1", "part2": "slot2", "part3": "slot3"},
                           "tolerance": {"position": 1e-3, "rotation": math.radians(1.0)}}),
}


def load_scenario(name: str) -> ScenarioBundle:
    try:
        entry = SCENARIOS[name]
    except KeyError:
        raise UnknownScenario(name) from None
    bundle = ScenarioBundle(name, DATA_DIR / entry["model"], DATA_DIR / entry["world"],
                            entry["root"], dict(entry["expected"]))
    if name == "screwing":
        model, _ = parse_file(bundle.model_file)
        bundle.expected["oracle"] = screw_oracle_params(model, bundle.world_data())
    return bundle


def run_scenario(name: str, seed: int = 7, world_overrides: dict | None = None, **limits):
    """Run a bundle; returns ``(outcome, events, run_state)``."""
    from .engine import run_model
    from .world import build_world

    bundle = load_scenario(name)
    model, table, em = bundle.load()
    if world_overrides:
        data = bundle.world_data()
        for key, value in world_overrides.items():
            if isinstance(value, dict):
                data.setdefault(key, {}).update(value)
            else:
                data[key] = value
        em = build_world(data)
    return run_model(table, bundle.root, em, seed=seed, **limits)
