"""Actor-critic training with a priority gate and queued updates.

Every epoch samples one trajectory per fresh instance, compares its cost
with the critic's estimate and, if the mean absolute advantage exceeds the
threshold, sends an actor loss and a critic loss to their updaters.  Each
updater owns one parameter set, one AdaBelief state and one cosine
schedule driven by its own update counter.

``mode="sync"`` runs everything in one loop and is the reference.
``mode="async"`` runs two updater threads fed by bounded queues; the
rollout loop reads copies of the parameters and may run at most
``max_lag`` epochs ahead of the updates.  With ``max_lag=0`` the result is
identical to sync mode.
"""

from __future__ import annotations

import csv
import math
import os
import queue
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .instances import Instance, InstanceSet, generate_instances, rng_stream
from .model import Model, ModelConfig
from .nn import tensor as T
from .nn.optim import OptimizerState, adabelief_step, cosine_lr
from .nn.tensor import NumericError, Tensor
from .oracles import random_rollout

METRICS_HEADER = ["epoch", "reward", "actor_loss", "critic_loss", "lr_actor", "lr_critic", "seconds"]
QUEUE_SIZE = 64


class TrainingError(RuntimeError):
    """An updater failed; the last parameters were saved if possible."""


@dataclass
class TrainConfig:
    n: int = 10
    epochs: int = 10000
    batch: int = 64
    tau: float = 0.5
    val_interval: int = 200
    val_size: int = 100
    lr_actor: float = 1e-4
    lr_critic: float = 1e-4
    t_max: int | None = None  # defaults to epochs // 5
    seed: int = 0
    mode: str = "sync"
    max_lag: int = 1
    family: str = "random-corner-depot"
    scale: float = 100
    alpha: float = 2.0
    weight_decay: float = 0.01
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be >= 1")
        if not self.tau >= 0:
            raise ValueError("tau must be >= 0")
        if self.mode not in ("sync", "async"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.t_max is None:
            self.t_max = max(1, self.epochs // 5)
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.max_lag < 0:
            raise ValueError("max_lag must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d


@dataclass
class LossPacket:
    kind: str  # "actor" or "critic"
    loss: Tensor
    epoch: int
    leaves: dict[str, Tensor]  # parameters the graph was built on

    def __post_init__(self):
        if not np.isfinite(self.loss.data).all():
            raise NumericError(f"non-finite {self.kind} loss at epoch {self.epoch}")


def compute_losses(log_probs: Tensor, values: Tensor, costs) -> tuple[Tensor, Tensor, float]:
    """Policy-gradient and value losses for one batch.

    ``log_probs`` holds each episode's summed truck and drone log-probs,
    ``values`` the critic estimates.  The advantage ``cost - value`` is a
    constant in the actor loss, so a costlier-than-expected episode has its
    probability pushed down.
    """
    costs = np.asarray(costs, dtype=np.float64)
    for name, arr in (("cost", costs), ("value", values.data), ("log-prob", log_probs.data)):
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise NumericError(f"non-finite {name} at batch index {int(bad[0])}")
    adv = costs - values.data
    actor = T.mean(T.mul(log_probs, adv))
    critic = T.mean(T.square(T.sub(costs, values)))
    return actor, critic, float(np.abs(adv).mean())


class Updater:
    """Single writer for one parameter set."""

    def __init__(self, params: dict[str, Tensor], lr_max: float, t_max: int, weight_decay: float):
        self.params = params
        self.state = OptimizerState(weight_decay=weight_decay, lr=lr_max)
        self.lr_max = lr_max
        self.t_max = t_max
        self.count = 0
        self.lock = threading.Lock()

    @property
    def lr(self) -> float:
        return cosine_lr(self.count, self.t_max, self.lr_max)

    def apply(self, packet: LossPacket) -> float:
        for p in packet.leaves.values():
            p.grad = None
        T.backward(packet.loss)
        grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in packet.leaves.items()}
        for p in packet.leaves.values():
            p.grad = None
        with self.lock:
            lr = self.lr
            adabelief_step(self.params, grads, self.state, lr)
            self.count += 1
        return lr

    def snapshot(self) -> dict[str, Tensor]:
        with self.lock:
            return {k: Tensor(p.data.copy(), requires_grad=True, name=k) for k, p in self.params.items()}


def epoch_instances(cfg: TrainConfig, epoch: int) -> list[Instance]:
    seed = int(np.random.SeedSequence([cfg.seed, 2, epoch]).generate_state(1)[0])
    return list(generate_instances(cfg.n, cfg.batch, seed, cfg.family, cfg.scale, cfg.alpha))


def validation_set(cfg: TrainConfig) -> InstanceSet:
    return generate_instances(cfg.n, cfg.val_size, cfg.seed + 1, cfg.family, cfg.scale, cfg.alpha)


def validate(model: Model, instances, batch: int = 100) -> float:
    """Mean greedy cost over a fixed instance set."""
    insts = list(instances)
    costs = []
    for i in range(0, len(insts), batch):
        costs.extend(model.solve(insts[i:i + batch], "greedy").costs)
    return float(np.mean(costs))


def random_baseline(instances, seed: int = 0) -> float:
    return float(np.mean([random_rollout(inst, seed + i).cost for i, inst in enumerate(instances)]))


@dataclass
class TrainResult:
    model: Model
    best_val: float
    best_epoch: int
    metrics: list[dict]
    validations: list[tuple[int, float]]
    actor_updates: int
    critic_updates: int
    best_model: Model | None = None


class Trainer:
    def __init__(self, cfg: TrainConfig, model: Model | None = None, out_dir=None, log=None):
        self.cfg = cfg
        self.model = model if model is not None else Model.init(cfg.model, cfg.seed)
        self.actor_up = Updater(self.model.actor, cfg.lr_actor, cfg.t_max, cfg.weight_decay)
        self.critic_up = Updater(self.model.critic, cfg.lr_critic, cfg.t_max, cfg.weight_decay)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.log = log
        self.metrics: list[dict] = []
        self.validations: list[tuple[int, float]] = []
        self.best_val = math.inf
        self.best_epoch = -1
        self.best_model: Model | None = None
        self._val = None

    # -- one epoch of rollouts --------------------------------------------------

    def rollout(self, epoch: int, actor: dict[str, Tensor], critic: dict[str, Tensor]):
        insts = epoch_instances(self.cfg, epoch)
        rngs = [rng_stream(self.cfg.seed, 3, epoch, b) for b in range(self.cfg.batch)]
        snap = Model(self.cfg.model, actor, critic)
        res = snap.solve(insts, "sample", rngs, track_grad=True)
        values = snap.value(insts)
        actor_loss, critic_loss, mean_abs = compute_losses(res.log_prob, values, res.costs)
        packets = []
        if mean_abs > self.cfg.tau:
            packets = [LossPacket("actor", actor_loss, epoch, actor), LossPacket("critic", critic_loss, epoch, critic)]
        return res.costs, actor_loss.item(), critic_loss.item(), packets

    def gate_and_apply(self, packets: list[LossPacket]) -> None:
        """Sync-mode dispatch."""
        for p in packets:
            (self.actor_up if p.kind == "actor" else self.critic_up).apply(p)

    # -- bookkeeping ----------------------------------------------------------------

    def _record(self, epoch, costs, a_loss, c_loss, lr_a, lr_c, t0):
        row = {
            "epoch": epoch, "reward": float(np.mean(costs)), "actor_loss": a_loss, "critic_loss": c_loss,
            "lr_actor": lr_a, "lr_critic": lr_c, "seconds": time.perf_counter() - t0,
        }
        self.metrics.append(row)
        if self.log:
            self.log(row)

    def _maybe_validate(self, epoch: int, model: Model) -> None:
        last = epoch == self.cfg.epochs - 1
        if (epoch + 1) % self.cfg.val_interval and not last:
            return
        if self._val is None:
            self._val = list(validation_set(self.cfg))
        val = validate(model, self._val)
        self.validations.append((epoch, val))
        if val < self.best_val:
            self.best_val, self.best_epoch = val, epoch
            self.best_model = model.snapshot()
            if self.out_dir is not None:
                self.best_model.save(self.out_dir / "best.ckpt", {"epoch": epoch, "val_cost": val})
                with open(self.out_dir / "checkpoints.txt", "a", encoding="utf-8") as fh:
                    fh.write(f"best.ckpt epoch={epoch} val_cost={val!r}\n")

    def _write_outputs(self) -> None:
        if self.out_dir is None:
            return
        with open(self.out_dir / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=METRICS_HEADER)
            w.writeheader()
            for row in self.metrics:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        with open(self.out_dir / "validation.csv", "w", encoding="utf-8") as fh:
            fh.write("epoch,val_cost\n")
            for e, v in self.validations:
                fh.write(f"{e},{v!r}\n")
        self.model.save(self.out_dir / "last.ckpt", {"epochs": len(self.metrics)})

    # -- drivers ----------------------------------------------------------------------

    def run(self) -> TrainResult:
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / "checkpoints.txt").write_text("", encoding="utf-8")
        if self.cfg.mode == "sync":
            self._run_sync()
        else:
            self._run_async()
        self._write_outputs()
        return TrainResult(self.model, self.best_val, self.best_epoch, self.metrics, self.validations,
                           self.actor_up.count, self.critic_up.count, self.best_model)

    def _run_sync(self) -> None:
        t0 = time.perf_counter()
        for epoch in range(self.cfg.epochs):
            costs, a_loss, c_loss, packets = self.rollout(epoch, self.model.actor, self.model.critic)
            lr_a, lr_c = self.actor_up.lr, self.critic_up.lr
            self.gate_and_apply(packets)
            self._record(epoch, costs, a_loss, c_loss, lr_a, lr_c, t0)
            self._maybe_validate(epoch, self.model)

    def _run_async(self) -> None:
        t0 = time.perf_counter()
        queues = {"actor": queue.Queue(QUEUE_SIZE), "critic": queue.Queue(QUEUE_SIZE)}
        updaters = {"actor": self.actor_up, "critic": self.critic_up}
        done_epoch = {"actor": -1, "critic": -1}  # last epoch whose packet was applied
        cond = threading.Condition()
        errors: list[BaseException] = []

        def worker(kind: str) -> None:
            q, up = queues[kind], updaters[kind]
            while True:
                item = q.get()
                if item is None:
                    return
                epoch, packet = item
                try:
                    if packet is not None:
                        up.apply(packet)
                except BaseException as exc:  # surfaced by the rollout loop
                    with cond:
                        errors.append(exc)
                        cond.notify_all()
                    return
                with cond:
                    done_epoch[kind] = epoch
                    cond.notify_all()

        threads = [threading.Thread(target=worker, args=(k,), daemon=True, name=f"{k}-updater") for k in queues]
        for t in threads:
            t.start()

        def put(kind, item):
            while True:
                if errors:
                    raise TrainingError(f"{kind} updater failed") from errors[0]
                try:
                    queues[kind].put(item, timeout=0.1)
                    return
                except queue.Full:
                    continue

        def wait_until(epoch: int) -> None:
            with cond:
                while not errors and min(done_epoch.values()) < epoch:
                    cond.wait(0.1)
            if errors:
                raise TrainingError("updater failed") from errors[0]

        try:
            for epoch in range(self.cfg.epochs):
                wait_until(epoch - 1 - self.cfg.max_lag)
                actor, critic = self.actor_up.snapshot(), self.critic_up.snapshot()
                costs, a_loss, c_loss, packets = self.rollout(epoch, actor, critic)
                lr_a, lr_c = self.actor_up.lr, self.critic_up.lr
                by_kind = {p.kind: p for p in packets}
                for kind in queues:
                    put(kind, (epoch, by_kind.get(kind)))
                self._record(epoch, costs, a_loss, c_loss, lr_a, lr_c, t0)
                if (epoch + 1) % self.cfg.val_interval == 0 or epoch == self.cfg.epochs - 1:
                    wait_until(epoch)
                    self._maybe_validate(epoch, Model(self.cfg.model, self.actor_up.snapshot(), self.critic_up.snapshot()))
            wait_until(self.cfg.epochs - 1)
        except BaseException:
            if self.out_dir is not None:
                try:
                    self.model.save(self.out_dir / "last.ckpt", {"aborted": True})
                except OSError:
                    pass
            raise
        finally:
            for kind in queues:
                try:
                    queues[kind].put_nowait(None)
                except queue.Full:
                    pass
            for t in threads:
                t.join(timeout=5)


def train(cfg: TrainConfig, out_dir=None, model: Model | None = None, log=None) -> TrainResult:
    return Trainer(cfg, model, out_dir, log).run()


def thread_cap() -> int:
    """Worker cap from ``TSPD_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("TSPD_THREADS", "1")))
    except ValueError:
        return 1
