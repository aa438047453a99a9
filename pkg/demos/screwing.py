"""Screw a screw into a cube and watch the torque-guarded loop.

Run:  python3 demos/screwing.py [seed]
"""

import sys

from lightrocks.cli import summarize_trace
from lightrocks.scenarios import expected_screw_iterations, load_scenario, run_scenario

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 7
bundle = load_scenario("screwing")
oracle = bundle.expected["oracle"]

print(f"Root task {bundle.root}; the screw sits {oracle['z0'] * 1e3:.1f} mm above its seat.")
print(f"Each turn advances {oracle['pitchPerTurn'] * 1e3:.3f} mm before the torque guard trips, "
      f"so we expect {expected_screw_iterations(oracle['z0'], oracle['zTarget'], oracle['pitchPerTurn'])} "
      "screw-down iterations.\n")

outcome, events, run = run_scenario("screwing", seed=seed)

for e in events:
    if e.kind == "StopTriggered" and e.subject.endswith("/ScrewDown"):
        print(f"tick {e.tick:5d}  ScrewDown stopped, torque.z = {e.data['snapshot']['robot.torque.z']:.4f} N·m")

print("\nPer-component summary:")
for line in summarize_trace(events):
    print("  " + line)
print(f"\n{outcome.line()}")
