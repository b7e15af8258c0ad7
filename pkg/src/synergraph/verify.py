"""Finite-difference verification of every training objective on the small fixture."""
from __future__ import annotations

import time
from dataclasses import dataclass

from . import fixtures
from .diffcore import grad_check
from .encoder import EncoderConfig
from .model import ModelConfig, SynergyModel
from .predictor import KnowledgeBase, LMConfig
from .training import TrainConfig, total_loss


def small_config(target_dim=4):
    return ModelConfig(
        encoder=EncoderConfig(D_t=target_dim, view_dim=8, D=8, D_irr=4, D_rel=4, K_max=2, d_attn=4),
        pair_d_attn=4, pair_d_ff=8, route_hidden=8, d_op=4, d_x=8, n_prefix=1, proj_hidden=8,
        lm=LMConfig(width=8, heads=2, n_layers=1), head_hidden=8,
    )


@dataclass
class CheckResult:
    name: str
    max_error: float
    checked: int
    skipped_kinks: int
    seconds: float


def build(seed=0):
    ds, knowledge = fixtures.grad_fixture(seed)
    model = SynergyModel(small_config(ds.target_dim), ds.n_genes, seed=seed).bind(ds, KnowledgeBase(knowledge))
    return model, ds.samples


def objectives(model, samples):
    """name -> (scalar loss closure, parameter subset, sampled coordinates per tensor)."""
    store = model.store
    lm_params = [(n, t) for n, t in store.items() if n.startswith("predictor.lm.")]
    desc = [(n, t) for n, t in store.items() if n.endswith(".descriptors")]
    direct = TrainConfig(head="direct")
    return {
        "L_inst": (lambda: model.instruction_loss(samples), lm_params, 6),
        "L_task_lm": (lambda: model.lm_task_loss(model.forward(samples)), store, 2),
        "L_task_direct": (lambda: total_loss(samples, "task", model, TrainConfig(alpha=0, beta=0))[0], store, 3),
        "L_decorr": (lambda: model.decorrelation(model.forward(samples)), store, 3),
        "L_sep": (lambda: model.separation(), desc, None),
        "L_total": (lambda: total_loss(samples, "task", model, direct)[0], store, 3),
    }


def run_suite(seed=0, eps=1e-4, coord_scale=1.0, names=None):
    """Check each objective; ``coord_scale`` multiplies the sampled coordinate counts."""
    model, samples = build(seed)
    out = []
    for name, (f, params, coords) in objectives(model, samples).items():
        if names and name not in names:
            continue
        stats = {}
        t0 = time.perf_counter()
        n = None if coords is None else max(1, int(round(coords * coord_scale)))
        err = grad_check(f, params, eps=eps, max_coords=n, seed=seed, stats=stats)
        out.append(CheckResult(name, err, stats["checked"], stats["skipped_kinks"], time.perf_counter() - t0))
    return out
