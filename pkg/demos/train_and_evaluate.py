"""Train a narrow model for a few hundred epochs, then compare greedy and
best-of-k decoding against the exact optimum and draw one route.

Run: python3 demos/train_and_evaluate.py [epochs]   (about 2 min at 300)
"""

import sys
from pathlib import Path

from tspd import ModelConfig, exact_optimum, generate_instances
from tspd.evaluation import evaluate, render_route
from tspd.training import TrainConfig, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 300
out = Path("demo_run")

cfg = TrainConfig(n=10, epochs=epochs, batch=64, val_interval=100, lr_actor=1.5e-3, lr_critic=1.5e-3,
                  t_max=epochs, mode="sync", model=ModelConfig(d_h=32, heads=4, layers=1, d_ff=64, critic_hidden=32))


def progress(row):
    if row["epoch"] % 50 == 0:
        print(f"epoch {row['epoch']:4d}  mean sampled cost {row['reward']:7.1f}  lr {row['lr_actor']:.2e}")


res = train(cfg, out, log=progress)
print(f"best validation cost {res.best_val:.1f} after {res.actor_updates} actor updates")

test = list(generate_instances(7, 20, seed=12345))
opt = [exact_optimum(inst).cost for inst in test]
for strategy, k in (("greedy", 1), ("sample", 16)):
    rep = evaluate(res.best_model, test, strategy, k=k, baselines=opt)
    print(f"{rep.strategy:>12}: mean cost {rep.mean_cost:7.2f}  mean gap {rep.mean_gap:5.2f}%")

traj = res.best_model.solve(test[:1]).trajectories[0]
render_route(traj, test[0], out / "route.svg")
print(f"route with cost {traj.total_cost:.2f} drawn to {out / 'route.svg'}")
