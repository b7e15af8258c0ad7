"""Staged optimization: combined objective, AdamW and the warmup/cosine schedule."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .diffcore import Tensor, checkpoint, rng_stream

STAGES = ("instruction", "task")
LOG_COLUMNS = ["step", "stage", "lr", "loss", "inst", "task", "task_cls", "task_reg", "decorr", "sep"]


@dataclass
class TrainConfig:
    alpha: float = 5e-3
    beta: float = 5e-3
    instruction_steps: int = 0
    task_steps: int = 200
    batch_size: int = 8
    seed: int = 0
    lr_warmup_start: float = 1e-6
    lr_peak: float = 1e-4
    lr_final: float = 1e-5
    warmup_steps: int = 20
    total_steps: int | None = None
    weight_decay: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    head: str = "direct"
    cls_weight: float = 1.0
    reg_weight: float = 1.0
    grad_clip: float | None = 1.0
    question: str = "P1"
    lr_groups: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.total_steps is None:
            self.total_steps = self.instruction_steps + self.task_steps
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("regularizer weights must be nonnegative")
        if self.lr_warmup_start > self.lr_peak or self.lr_final > self.lr_peak:
            raise ValueError("warmup start and final rate must not exceed the peak rate")
        if not 0 <= self.warmup_steps <= self.total_steps:
            raise ValueError("warmup_steps must lie in [0, total_steps]")
        if self.head not in ("direct", "lm"):
            raise ValueError(f"unknown head {self.head!r}")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


def lr_at(step, cfg: TrainConfig):
    """Linear warmup to the peak, then cosine decay to the final rate at ``total_steps``."""
    if not 0 <= step <= cfg.total_steps:
        raise ValueError(f"step {step} outside [0, {cfg.total_steps}]")
    if step < cfg.warmup_steps:
        return cfg.lr_warmup_start + (cfg.lr_peak - cfg.lr_warmup_start) * step / cfg.warmup_steps
    span = cfg.total_steps - cfg.warmup_steps
    if span == 0:
        return cfg.lr_peak
    progress = (step - cfg.warmup_steps) / span
    return cfg.lr_final + 0.5 * (cfg.lr_peak - cfg.lr_final) * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """Adam with bias correction and decoupled, lr-scaled weight decay."""

    def __init__(self, store, cfg: TrainConfig):
        self.store = store
        self.cfg = cfg
        self.m = {}
        self.v = {}
        self.t = 0

    def multiplier(self, name):
        best, mult = -1, 1.0
        for prefix, m in self.cfg.lr_groups.items():
            if name.startswith(prefix) and len(prefix) > best:
                best, mult = len(prefix), float(m)
        return mult

    def step(self, lr):
        c = self.cfg
        self.t += 1
        b1, b2 = c.adam_beta1, c.adam_beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for name, p in self.store.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.isfinite(g).all():
                from .diffcore import NonFiniteValue
                raise NonFiniteValue(f"non-finite gradient for {name}")
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            rate = lr * self.multiplier(name)
            upd = (m / corr1) / (np.sqrt(v / corr2) + c.adam_eps)
            p.data = p.data * (1.0 - rate * c.weight_decay) - rate * upd


def adamw_step(store, lr, cfg: TrainConfig, opt: AdamW | None = None):
    opt = opt or AdamW(store, cfg)
    opt.step(lr)
    return opt


def clip_grad_norm(store, max_norm):
    norm = store.global_grad_norm()
    if max_norm is not None and norm > max_norm:
        f = max_norm / norm
        for _, p in store.items():
            if p.grad is not None:
                p.grad = p.grad * f
    return norm


def total_loss(batch, stage, model, cfg: TrainConfig):
    """Combined objective and its components.

    L = d L_inst + (1 - d) L_task + alpha L_decorr + beta L_sep with d = 1 in
    the instruction stage.  With the direct head, L_task is
    cls_weight * CE + reg_weight * MSE.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    comps = {}
    out = model.forward(batch)
    if stage == "instruction":
        inst = model.instruction_loss(batch)
        main = inst if inst is not None else Tensor(0.0)
        comps["inst"] = main
    elif cfg.head == "direct":
        ce, mse = model.direct_losses(out)
        comps["task_cls"], comps["task_reg"] = ce, mse
        main = ce * cfg.cls_weight + mse * cfg.reg_weight
        comps["task"] = main
    else:
        main = model.lm_task_loss(out, cfg.question)
        comps["task"] = main
    decorr = model.decorrelation(out)
    sep = model.separation()
    comps["decorr"], comps["sep"] = decorr, sep
    loss = main + decorr * cfg.alpha + sep * cfg.beta
    return loss, comps


@dataclass
class StageResult:
    stage: str
    steps: int
    log: list
    checkpoint: Path | None = None


def batches(n, batch_size, steps, seed, stage):
    """Deterministic epoch-shuffled minibatch index lists."""
    rng = rng_stream(seed, f"batches.{stage}")
    order = []
    for _ in range(steps):
        if len(order) < batch_size:
            order = order + list(rng.permutation(n))
        yield order[:min(batch_size, n)]
        order = order[min(batch_size, n):]


def _fmt(x):
    return "" if x is None else repr(float(x))


def run_stage(stage, model, samples, cfg: TrainConfig, opt=None, start_step=0, steps=None):
    """Optimize one stage for its configured number of steps; returns the log rows."""
    steps = (cfg.instruction_steps if stage == "instruction" else cfg.task_steps) if steps is None else steps
    if steps and not samples:
        raise ValueError(f"{stage} stage has no training samples")
    opt = opt or AdamW(model.store, cfg)
    uses_lm = stage == "instruction" or cfg.head == "lm"
    rows = []
    for i, idx in enumerate(batches(len(samples), cfg.batch_size, steps, cfg.seed, stage)):
        step = start_step + i
        lr = lr_at(step, cfg)
        model.store.zero_grad()
        loss, comps = total_loss([samples[j] for j in idx], stage, model, cfg)
        vals = {k: v.item() for k, v in comps.items()}
        total = loss.item()
        loss.backward()
        if uses_lm and cfg.grad_clip:
            clip_grad_norm(model.store, cfg.grad_clip)
        opt.step(lr)
        model.store.step = step + 1
        rows.append({"step": step, "stage": stage, "lr": lr, "loss": total, **vals})
    return StageResult(stage, steps, rows), opt


def write_log(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in rows:
            w.writerow([r["step"], r["stage"]] + [_fmt(r.get(c)) for c in LOG_COLUMNS[2:]])


def train(model, train_samples, cfg: TrainConfig, out_dir=None):
    """Instruction stage (if any steps) then task stage; writes checkpoint and loss log."""
    opt = AdamW(model.store, cfg)
    log_rows = []
    step = 0
    for stage in STAGES:
        n = cfg.instruction_steps if stage == "instruction" else cfg.task_steps
        if n == 0:
            continue
        res, opt = run_stage(stage, model, train_samples, cfg, opt, start_step=step)
        log_rows += res.log
        step += n
    result = StageResult("all", step, log_rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.checkpoint = out / "model.ckpt"
        checkpoint.save(result.checkpoint, model.store)
        write_log(log_rows, out / "loss_log.csv")
    return result
