"""Plug three parts into a rail with noisy perception.

One PlugPart task is referenced three times with different bindings.
Compliant insertion absorbs the localisation error, which this demo
makes visible by comparing perceived and true part positions.

Run:  python3 demos/rail_assembly.py [sigma_pos_in_m]
"""

import sys

import numpy as np

from lightrocks.scenarios import load_scenario, run_scenario
from lightrocks.world import load_world, pose_error

sigma = float(sys.argv[1]) if len(sys.argv) > 1 else 0.002
bundle = load_scenario("rail")
expected = bundle.expected
initial = load_world(bundle.world_file)

for seed in range(3):
    outcome, events, run = run_scenario("rail", seed=seed,
                                        world_overrides={"perception": {"sigma_pos": sigma}})
    perceived = [e for e in events if e.kind == "EmUpdated" and e.data.get("path", "").endswith(".pose")]
    print(f"seed {seed}: {outcome.line()}")
    for e in perceived:
        part = e.data["path"].split(".")[0]
        miss = np.linalg.norm(np.subtract(e.data["value"]["xyz"], initial.chain(part)[:3, 3]))
        print(f"   perceived {part} {miss * 1e3:.2f} mm away from where it really was")
    for part, slot in expected["parts"].items():
        d, a = pose_error(run.sim.cell.truth[part], run.em.chain(slot))
        print(f"   {part} -> {slot}: {d * 1e3:.3f} mm, {np.degrees(a):.3f} deg from the slot")
