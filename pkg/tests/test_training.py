import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synergraph import verify
from synergraph.diffcore import ParamStore, checkpoint
from synergraph.training import AdamW, TrainConfig, batches, lr_at, run_stage, total_loss, train


@pytest.fixture(scope="module")
def built():
    return verify.build(0)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(alpha=-1)
    with pytest.raises(ValueError):
        TrainConfig(lr_warmup_start=1e-3)
    with pytest.raises(ValueError):
        TrainConfig(task_steps=10, warmup_steps=20)
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"no_such_key": 1})
    assert TrainConfig.from_dict(TrainConfig().to_dict()) == TrainConfig()


def test_schedule_anchors():
    cfg = TrainConfig(task_steps=100, warmup_steps=10)
    assert lr_at(0, cfg) == pytest.approx(1e-6, abs=1e-15)
    assert lr_at(10, cfg) == pytest.approx(1e-4, abs=1e-15)
    assert lr_at(100, cfg) == pytest.approx(1e-5, abs=1e-15)
    with pytest.raises(ValueError):
        lr_at(101, cfg)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 50), st.integers(0, 200))
def test_schedule_bounded_and_monotone_after_peak(warmup, extra):
    cfg = TrainConfig(task_steps=warmup + extra, warmup_steps=warmup)
    lrs = [lr_at(s, cfg) for s in range(cfg.total_steps + 1)]
    assert all(1e-6 - 1e-18 <= v <= 1e-4 + 1e-18 for v in lrs)
    assert all(a <= b for a, b in zip(lrs[:warmup], lrs[1:warmup + 1]))
    assert all(a >= b - 1e-18 for a, b in zip(lrs[warmup:], lrs[warmup + 1:]))


def _store(rng):
    store = ParamStore()
    store.add("w", rng.normal(size=(3, 2)))
    return store


def test_adamw_decay_only(rng):
    store = _store(rng)
    before = store["w"].data.copy()
    store.zero_grad()
    AdamW(store, TrainConfig(weight_decay=0.05)).step(1e-3)
    assert np.array_equal(store["w"].data, before * (1 - 1e-3 * 0.05))


def test_adamw_noop_without_decay_or_gradient(rng):
    store = _store(rng)
    before = store["w"].data.copy()
    store.zero_grad()
    AdamW(store, TrainConfig(weight_decay=0.0)).step(1e-3)
    assert np.array_equal(store["w"].data, before)


def test_adamw_first_step_closed_form(rng):
    store = _store(rng)
    before = store["w"].data.copy()
    g = rng.normal(size=(3, 2))
    store["w"].grad = g.copy()
    lr, eps = 1e-3, 1e-8
    AdamW(store, TrainConfig(weight_decay=0.0, adam_eps=eps)).step(lr)
    upd = store["w"].data - before
    assert np.abs(upd + lr * g / (np.abs(g) + eps)).max() < 1e-12


def test_lr_groups(rng):
    store = ParamStore()
    store.add("a.x", np.ones(2))
    store.add("b.x", np.ones(2))
    opt = AdamW(store, TrainConfig(weight_decay=1.0, lr_groups={"a": 0.0}))
    store.zero_grad()
    opt.step(0.1)
    assert np.array_equal(store["a.x"].data, np.ones(2)) and np.allclose(store["b.x"].data, 0.9)


def test_total_loss_decomposition(built):
    model, samples = built
    cfg = TrainConfig(alpha=0.3, beta=0.7, cls_weight=1.5, reg_weight=0.5)
    loss, c = total_loss(samples, "task", model, cfg)
    expected = 1.5 * c["task_cls"].item() + 0.5 * c["task_reg"].item() + 0.3 * c["decorr"].item() + 0.7 * c["sep"].item()
    assert loss.item() == pytest.approx(expected, abs=1e-12)
    assert all(v.item() >= 0 for v in c.values())
    inst, c = total_loss(samples, "instruction", model, TrainConfig(alpha=0, beta=0))
    assert inst.item() == c["inst"].item()
    with pytest.raises(ValueError):
        total_loss(samples, "pretrain", model, cfg)


def test_batches_deterministic():
    a = list(batches(10, 4, 6, 0, "task"))
    assert a == list(batches(10, 4, 6, 0, "task"))
    assert all(len(b) == 4 for b in a)
    assert sorted(a[0] + a[1] + a[2][:2]) == list(range(10))
    assert a != list(batches(10, 4, 6, 1, "task"))


def test_zero_steps_keeps_init(tmp_path):
    model, samples = verify.build(0)
    init = model.store.arrays()
    train(model, samples, TrainConfig(task_steps=0, warmup_steps=0), tmp_path)
    arrays, step = checkpoint.load(tmp_path / "model.ckpt")
    assert step == 0 and all(np.array_equal(arrays[k], init[k]) for k in init)


def test_training_reproducible(tmp_path):
    outs = []
    for run in ("a", "b"):
        model, samples = verify.build(0)
        cfg = TrainConfig(task_steps=4, warmup_steps=1, batch_size=2, instruction_steps=2)
        train(model, samples, cfg, tmp_path / run)
        outs.append(((tmp_path / run / "model.ckpt").read_bytes(), (tmp_path / run / "loss_log.csv").read_text()))
    assert outs[0] == outs[1]
    log = outs[0][1].splitlines()
    assert log[0].startswith("step,stage,lr,loss") and len(log) == 7
    assert [r.split(",")[1] for r in log[1:]] == ["instruction"] * 2 + ["task"] * 4


def test_lm_head_stage_runs():
    model, samples = verify.build(0)
    res, _ = run_stage("task", model, samples, TrainConfig(head="lm", task_steps=2, warmup_steps=1, batch_size=2))
    assert len(res.log) == 2 and all(math.isfinite(r["loss"]) for r in res.log)
