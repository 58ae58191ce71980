"""Acceptance checks, one test per headline requirement.

Each test prints a single ``PASS``/``FAIL`` line (outside pytest's capture)
before asserting, so the run log doubles as an acceptance report.
"""

import math
import time

import numpy as np
import pytest

import tspd.training as training
from tspd.decoder import gru_param_count, init_mgu_params, lstm_param_count, mgu_param_count
from tspd.encoder import EncoderConfig, encode, init_encoder_params, knn_k
from tspd.environment import InvariantError, env_for, movements, route_replay_cost
from tspd.evaluation import gap, solve_one
from tspd.instances import generate_instances, rng_stream
from tspd.model import Model, ModelConfig
from tspd.nn import tensor as T
from tspd.nn.optim import OptimizerState, adabelief_step, cosine_lr
from tspd.nn.tensor import Tensor
from tspd.oracles import exact_optimum, greedy_nearest, random_rollout
from tspd.training import TrainConfig, random_baseline, train, validate, validation_set

from helpers import FD_STEP, FD_TOL, TINY, gradcheck, random_episode
from test_nn_core import _ops


@pytest.fixture
def report(capsys):
    def emit(name: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, detail

    return emit


# Benchmark (cost, reference, printed gap %) triples.  Random-location table:
# the reference is the exact-ish solver column for each size.
RANDOM_REF = (230.07, 281.62, 397.17, 535.67)
RANDOM_ROWS = {
    "DPS/10": (None, (292.05, 3.70), (420.61, 5.90), (565.14, 5.50)),
    "HGVAC+": ((227.45, -1.14), (279.88, -0.62), (398.72, 0.39), (543.88, 1.53)),
    "HM greedy": ((233.21, 1.36), (285.54, 1.39), (408.84, 2.94), (564.42, 5.37)),
    "greedy": ((231.67, 0.69), (285.80, 1.48), (407.04, 2.49), (564.36, 5.36)),
    "HM sampling_100": ((230.10, 0.01), (282.93, 0.46), (399.59, 0.61), (550.13, 2.70)),
    "sampling_100": ((229.05, -0.45), (282.10, 0.17), (396.41, -0.19), (550.89, 2.84)),
    "HM sampling_1200": ((229.22, -0.37), (282.13, 0.18), (397.38, 0.05), (546.01, 1.93)),
    "sampling_1200": ((228.55, -0.66), (280.80, -0.29), (392.94, -1.06), (544.41, 1.63)),
    "HM sampling_2400": ((229.12, -0.42), (281.84, 0.08), (397.01, -0.04), (545.13, 1.77)),
    "sampling_2400": ((228.36, -0.74), (280.67, -0.34), (392.07, -1.28), (543.18, 1.40)),
    "HM sampling_4800": ((228.93, -0.50), (281.67, 0.02), (396.31, -0.22), (544.42, 1.63)),
    "sampling_4800": ((228.30, -0.77), (280.44, -0.42), (391.51, -1.42), (542.21, 1.22)),
}
UNIFORM_REF = (227.75, 276.05, 409.48)
UNIFORM_ROWS = {
    "HM greedy": ((228.38, 0.28), (277.87, 0.66), (426.93, 4.26)),
    "HM sampling_100": ((228.38, 0.28), (276.95, 0.33), (413.22, 0.91)),
    "HM sampling_1200": ((227.98, 0.10), (276.09, 0.02), (410.57, 0.27)),
    "HM sampling_2400": ((227.75, 0.00), (276.09, 0.02), (409.94, 0.11)),
    "HM sampling_4800": ((227.75, 0.00), (276.05, 0.00), (409.48, 0.00)),
    "greedy": ((228.38, 0.28), (279.23, 1.15), (425.68, 3.96)),
    "sampling_100": ((227.76, 0.00), (275.51, -0.19), (412.42, 0.72)),
    "sampling_1200": ((227.49, -0.12), (273.60, -0.89), (408.23, -0.31)),
    "sampling_2400": ((227.49, -0.12), (273.00, -1.10), (407.43, -0.50)),
    "sampling_4800": ((227.49, -0.12), (273.00, -1.10), (407.09, -0.58)),
}
# Real-city table: costs are printed with only two decimals.
CITY_REF = (2.36, 3.27)
CITY_ROWS = {
    "DPS/10": ((3.14, 33.20), (3.80, 16.49)),
    "DPS/25": (None, (4.23, 29.46)),
    "HGVAC+": ((2.34, -0.79), (3.33, 2.10)),
    "HM sampling_4800": ((2.38, 1.00), (3.31, 1.37)),
    "sampling_4800": ((2.34, -0.70), (3.29, 0.76)),
}


def _triples(ref, rows):
    for name, cells in rows.items():
        for j, cell in enumerate(cells):
            if cell is not None:
                yield name, cell[0], ref[j], cell[1]


def _misses(ref, rows, tol=0.01):
    return [(name, c, z, g, gap(c, z)) for name, c, z, g in _triples(ref, rows) if abs(gap(c, z) - g) > tol + 1e-9]


def test_gap_arithmetic(report):
    t0 = time.perf_counter()
    pairs = list(_triples(RANDOM_REF, RANDOM_ROWS)) + list(_triples(UNIFORM_REF, UNIFORM_ROWS))
    misses = _misses(RANDOM_REF, RANDOM_ROWS) + _misses(UNIFORM_REF, UNIFORM_ROWS)
    # The two-decimal city costs cannot pin the gap to 0.01 points; the
    # printed gap must at least be consistent with the rounding interval.
    inconsistent = []
    for name, c, z, g in _triples(CITY_REF, CITY_ROWS):
        lo = gap(c - 0.005, z + 0.005)
        hi = gap(c + 0.005, z - 0.005)
        if not lo - 0.01 <= g <= hi + 0.01:
            inconsistent.append((name, c, z, g))
    dt = time.perf_counter() - t0
    ok = not misses and not inconsistent and dt < 1.0
    report("gap arithmetic", ok, f"{len(pairs)} pairs within 0.01 points, misses={misses}; "
           f"{len(list(_triples(CITY_REF, CITY_ROWS)))} city pairs rounding-consistent, bad={inconsistent}; {dt:.3f}s")


@pytest.mark.xfail(strict=True, reason="city-table costs carry two decimals; identical printed costs map to different printed gaps")
def test_gap_arithmetic_city_table_exact(report):
    misses = _misses(CITY_REF, CITY_ROWS)
    report("gap arithmetic (city table, 0.01 points)", not misses,
           f"{len(misses)} of {len(list(_triples(CITY_REF, CITY_ROWS)))} pairs off: "
           + ", ".join(f"{n} {c}/{z} printed {g} computed {v:.2f}" for n, c, z, g, v in misses))


def test_oracle_equivalence(report):
    t0 = time.perf_counter()
    model = Model.init(TINY, 3)
    insts = [inst for n in range(3, 8) for inst in generate_instances(n, 10, 500 + n, scale=1)]
    below, pruned_diff, checked = [], [], 0
    for i, inst in enumerate(insts):
        opt = exact_optimum(inst)
        plans = {
            "greedy_nearest": greedy_nearest(inst).replay(inst),
            "random_rollout": random_rollout(inst, i).replay(inst),
            "model_greedy": model.solve([inst]).trajectories[0],
            "model_sample": model.solve([inst], "sample", [rng_stream(9, i)]).trajectories[0],
        }
        for name, traj in plans.items():
            cost = route_replay_cost(inst, movements(traj, inst))
            checked += 1
            if cost < opt.cost - 1e-9:
                below.append((i, name, cost, opt.cost))
        if inst.n <= 5:
            full = exact_optimum(inst, prune=False).cost
            if full != opt.cost:
                pruned_diff.append((i, opt.cost, full))
    dt = time.perf_counter() - t0
    ok = len(insts) == 50 and not below and not pruned_diff and dt < 120
    report("oracle equivalence", ok, f"{checked} solver costs on {len(insts)} instances, below optimum={below}, "
           f"pruned!=unpruned={pruned_diff}; {dt:.1f}s")


def test_feasibility_suite(report):
    t0 = time.perf_counter()
    episodes, mask_violations, invariant_violations, clock_errors = 0, 0, 0, 0
    for n in (3, 5, 8, 12):
        for i, inst in enumerate(generate_instances(n, 2500, 900 + n, "uniform-random-depot")):
            env = env_for(inst)
            traj = random_episode(inst, rng_stream(77, n, i))
            for rec in traj.steps:
                masks = env.masks(rec.state, "truck")
                if not masks[rec.action.truck] or not env.masks(rec.state, "drone", rec.action.truck)[rec.action.drone]:
                    mask_violations += 1
                try:
                    env.check_invariants(rec.state)
                except InvariantError:
                    invariant_violations += 1
                if not (rec.state.drone_busy or rec.state.drone_loc == rec.state.truck_loc):
                    invariant_violations += 1
            total = math.fsum(rec.dt for rec in traj.steps)
            if abs(total - traj.final_state.clock) > 1e-9:
                clock_errors += 1
            episodes += 1
    dt = time.perf_counter() - t0
    ok = episodes == 10_000 and mask_violations == invariant_violations == clock_errors == 0 and dt < 60
    report("feasibility suite", ok, f"{episodes} rollouts, mask violations={mask_violations}, "
           f"docking violations={invariant_violations}, clock mismatches={clock_errors}; {dt:.1f}s")


def test_gradient_checks(report):
    t0 = time.perf_counter()
    worst = {}
    for name, f, leaves in _ops(np.random.default_rng(2024)):
        worst[name] = max(gradcheck(f, leaves).values())

    cfg = ModelConfig(d_h=8, heads=2, layers=1, d_sparse=4, d_ff=16, dec_layers=1, critic_hidden=8, coord_scale=1.0)
    model = Model.init(cfg, 5)
    insts = list(generate_instances(5, 2, 31, scale=1))
    forced = [exact_optimum(insts[0]).joint_actions(), greedy_nearest(insts[1]).joint_actions()]
    weights = np.array([0.7, -1.3])
    costs = np.array([2.5, 3.0])

    def loss():
        lp = model.solve(insts, forced=forced, track_grad=True).log_prob
        return T.add(T.sum_(T.mul(lp, weights)), T.mean(T.square(T.sub(costs, model.value(insts)))))

    errs = gradcheck(loss, {**model.actor, **model.critic}, FD_STEP)
    worst["full tiny model"] = max(errs.values())
    dt = time.perf_counter() - t0
    bad = {k: v for k, v in worst.items() if not v < FD_TOL}
    ok = not bad and dt < 120
    report("gradient checks", ok, f"{len(worst) - 1} ops + full model ({len(errs)} tensors), "
           f"max rel err {max(worst.values()):.2e}, failing={bad}; {dt:.1f}s")


def test_optimizer_and_schedule(report):
    p = {"w": Tensor(np.array([0.0]), requires_grad=True)}
    adabelief_step(p, {"w": np.array([1.0])}, OptimizerState(weight_decay=0.0, lr=0.001))
    step_err = abs(p["w"].data[0] - (-3.5136418446315e-3))

    eta, tm = 1e-3, 400
    lo = 0.01 * eta
    endpoints = cosine_lr(0, tm, eta) == eta and cosine_lr(tm // 2, tm, eta) == (eta + lo) / 2
    limit = abs(cosine_lr(10**7 - 1, 10**7, eta) - lo) < 1e-12
    K = 5 * tm
    trace = [cosine_lr(t, tm, eta) for t in range(K)]
    periodic = all(trace[t] == trace[t % tm] for t in range(K))
    ok = step_err <= 1e-12 and endpoints and limit and periodic
    report("optimizer/schedule exactness", ok, f"single-step error {step_err:.1e}, endpoints={endpoints}, "
           f"t->T_max limit={limit}, five-cycle periodic over {K} steps={periodic}")


def test_sparse_attention_soundness(report):
    ks = {n: knn_k(n) for n in (11, 20, 50, 100)}
    k_ok = ks == {11: 4, 20: 5, 50: 6, 100: 7}

    cfg = EncoderConfig(d_h=16, heads=4, layers=3, d_sparse=8, d_ff=32)
    leaked, rows_over = 0.0, 0
    for n in (11, 20, 50, 100):
        insts = list(generate_instances(n, 2, 40 + n, "uniform-random-depot"))
        out = encode(insts, init_encoder_params(cfg, rng_stream(n, 5)), cfg, keep_attention=True)
        allowed = np.stack([g.adjacency for g in out.graphs])[:, None]
        for attn in out.attention:
            leaked = max(leaked, float(np.abs(attn[~np.broadcast_to(allowed, attn.shape)]).max(initial=0.0)))
        for g, inst in zip(out.graphs, insts):
            for i in range(n):
                if i == inst.depot:
                    continue
                # own neighbours, up to 4 stripe partners, depot, global node, self
                if g.adjacency[i].sum() > g.knn[i].sum() + 4 + 3:
                    rows_over += 1
            rows_over += int(np.any(g.knn.sum(1) < ks[n]))
    ok = k_ok and leaked == 0.0 and rows_over == 0
    report("sparse-attention soundness", ok, f"k={ks}, max attention on masked pairs={leaked}, rows over bound={rows_over}")


def test_mgu_economy(report):
    results = []
    for d_h, d_in in ((8, 8), (128, 128), (64, 3)):
        count = sum(t.data.size for t in init_mgu_params(d_h, d_in, rng_stream(1), "m.").values())
        # standard cells: one (input + hidden + bias) block per gate
        lstm = 4 * ((d_in + d_h) * d_h + d_h)
        gru = 3 * ((d_in + d_h) * d_h + d_h)
        results.append(count == mgu_param_count(d_h, d_in) and lstm == lstm_param_count(d_h, d_in)
                       and gru == gru_param_count(d_h, d_in) and 2 * count == lstm and 3 * count == 2 * gru)
    report("MGU economy", all(results), f"MGU = LSTM/2 = 2GRU/3 at (8,8), (128,128), (64,3): {results}")


# Desk-scale stand-in for the full model: same architecture, narrower and
# one attention layer, with a single cosine cycle over the whole run.
SMOKE_MODEL = ModelConfig(d_h=32, heads=4, layers=1, d_ff=64, critic_hidden=32)
SMOKE_LR = 1.5e-3


@pytest.mark.slow
def test_training_smoke(report, tmp_path):
    t0 = time.perf_counter()
    cfg = TrainConfig(n=10, epochs=500, batch=64, val_interval=100, lr_actor=SMOKE_LR, lr_critic=SMOKE_LR,
                      t_max=500, seed=0, mode="sync", model=SMOKE_MODEL)
    res = train(cfg, tmp_path / "run")
    vset = validation_set(cfg)
    final = validate(res.model, vset)
    rand = random_baseline(vset)
    test = list(generate_instances(7, 30, 12345))
    opt = np.array([exact_optimum(inst).cost for inst in test])
    greedy = res.best_model.solve(test).costs
    mean_gap = float(np.mean([gap(c, z) for c, z in zip(greedy, opt)]))
    dt = time.perf_counter() - t0
    ok = final < rand and mean_gap <= 20.0 and dt < 1800
    report("training smoke", ok, f"final greedy validation {final:.1f} vs random {rand:.1f}; "
           f"mean greedy gap at n=7 {mean_gap:.2f}% (limit 20%); {dt:.0f}s")


def test_priority_gate(report, monkeypatch):
    cfg = TrainConfig(n=5, epochs=3, batch=4, val_interval=2, val_size=3, lr_actor=1e-3, lr_critic=1e-3,
                      scale=1, seed=11, tau=math.inf, model=TINY)
    model = Model.init(TINY, cfg.seed)
    before = {k: v.copy() for k, v in model.arrays().items()}
    frozen = train(cfg, model=model)
    untouched = all(np.array_equal(v, before[k]) for k, v in frozen.model.arrays().items())

    real = training.compute_losses
    monkeypatch.setattr(training, "compute_losses", lambda lp, v, c: real(lp, v, c)[:2] + (0.4,))
    gated_cfg = TrainConfig(**{**cfg.__dict__, "tau": 0.5, "epochs": 1})
    model = Model.init(TINY, cfg.seed)
    gated = train(gated_cfg, model=model)
    no_update = gated.actor_updates == gated.critic_updates == 0 and all(
        np.array_equal(v, before[k]) for k, v in gated.model.arrays().items())
    report("priority gate", untouched and no_update and frozen.actor_updates == 0,
           f"tau=inf bit-identical={untouched}; mean|A|=0.4 at tau=0.5 skipped={no_update}")


def test_sampling_monotonicity(report):
    model = Model.init(TINY, 8)
    insts = list(generate_instances(8, 20, 321, scale=1))
    violations = []
    for i, inst in enumerate(insts):
        best = [solve_one(model, inst, "sample", k, seed=4, index=i).total_cost for k in (1, 10, 100)]
        if not best[0] >= best[1] >= best[2]:
            violations.append((i, best))
    report("sampling monotonicity", not violations, f"best-of-k for k=1,10,100 on {len(insts)} instances, "
           f"violations={violations}")


def test_async_sync_consistency(report):
    cfg = dict(n=5, epochs=3, batch=4, val_interval=2, val_size=3, lr_actor=1e-3, lr_critic=1e-3,
               scale=1, seed=11, tau=0.0, model=TINY)
    sync = train(TrainConfig(**cfg, mode="sync"))
    asyn = train(TrainConfig(**cfg, mode="async", max_lag=0))
    a, b = sync.model.arrays(), asyn.model.arrays()
    diff = max(float(np.abs(a[k] - b[k]).max()) for k in a)
    ok = sync.actor_updates == asyn.actor_updates == 3 and diff <= 1e-12
    report("async/sync consistency", ok, f"{asyn.actor_updates} gated updates each, max parameter difference {diff:.1e}")
