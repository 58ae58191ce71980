"""Solve one small instance three ways and print the joint-action trace.

Run: python3 demos/oracles_walkthrough.py
"""

from tspd import exact_optimum, generate_instances, greedy_nearest, random_rollout
from tspd.environment import dump_trajectory

inst = generate_instances(7, 1, seed=3)[0]
print(f"{inst.n} nodes, depot {inst.depot}, drone speed factor {inst.alpha}")

plans = {
    "exact": exact_optimum(inst),
    "nearest-neighbour": greedy_nearest(inst),
    "random": random_rollout(inst, seed=0),
}
best = plans["exact"].cost
for name, plan in plans.items():
    print(f"{name:>18}: cost {plan.cost:8.2f}  ({100 * (plan.cost / best - 1):5.1f}% above optimum)")

# step, agent, from, to, departure, arrival
print("\noptimal plan:")
print(dump_trajectory(plans["exact"].replay(inst), inst))
