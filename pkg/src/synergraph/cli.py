"""Command-line entry point: ``synergraph <subcommand> ...``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import chem, dataset, evalkit, fixtures, verify
from .diffcore import checkpoint
from .model import ModelConfig, SynergyModel
from .predictor import KnowledgeBase
from .training import TrainConfig, train

log = logging.getLogger("synergraph")

DATA_FILES = {
    "triplets": "triplets.csv", "expression": "expression.csv", "drugs": "drugs.csv",
    "targets": "targets.csv", "descriptions": "cell_descriptions.csv", "knowledge": "knowledge.jsonl",
}


class UsageError(Exception):
    pass


# manifests

def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def git_describe():
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=10)
        return res.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    git: str = ""
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def add_inputs(self, paths):
        for p in paths:
            if p is not None and Path(p).exists():
                self.inputs[str(p)] = sha256(p)

    def add_outputs(self, paths):
        for p in paths:
            self.outputs[str(p)] = sha256(p)

    def write(self, out_dir):
        path = Path(out_dir) / f"manifest.{self.command}.json"
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True, default=str) + "\n")
        return path

    @classmethod
    def load(cls, path):
        return cls(**json.loads(Path(path).read_text()))

    def verify(self):
        """Names of recorded files whose current digest differs from the stored one."""
        bad = []
        for table in (self.inputs, self.outputs):
            for p, digest in table.items():
                if not Path(p).exists() or sha256(p) != digest:
                    bad.append(p)
        return bad


# shared helpers

def data_paths(args):
    base = Path(args.data_dir)
    return {k: base / v for k, v in DATA_FILES.items()}


def load_data(args):
    p = data_paths(args)
    ds = dataset.ingest(p["triplets"], p["expression"], p["drugs"], p["targets"], p["descriptions"])
    kb = KnowledgeBase.load(p["knowledge"]) if p["knowledge"].exists() else KnowledgeBase()
    return ds, kb, p


def labelled(ds, tau):
    return dataset.filter_and_label(ds.samples, tau)


def read_config(path):
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _coerce(text):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def apply_overrides(cfg, pairs):
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = _coerce(value)
    return cfg


def load_split(path):
    return json.loads(Path(path).read_text())


def build_model(model_cfg, ds, seed):
    mc = dict(model_cfg)
    enc = dict(mc.pop("encoder", {}))
    enc["D_t"] = ds.target_dim or enc.get("D_t", 16)
    cfg = ModelConfig(encoder=enc, **mc)
    return SynergyModel(cfg, ds.n_genes, seed=seed)


def load_run(run_dir, ds, kb):
    meta = json.loads((Path(run_dir) / "model.json").read_text())
    model = build_model(meta["model"], ds, meta["seed"]).bind(ds, kb)
    checkpoint.load(Path(run_dir) / "model.ckpt", model.store)
    return model, meta


def subset(split, samples, name):
    if name not in ("train", "valid", "test"):
        raise UsageError(f"unknown subset {name!r}")
    return [samples[i] for i in split[name]]


# subcommands

def cmd_gen_fixtures(args):
    paths = fixtures.write_fixtures(args.out_dir, args.seed, args.n_genes, args.n_triplets, args.target_dim)
    for p in paths:
        print(p)
    return paths, []


def cmd_ingest(args):
    ds, kb, p = load_data(args)
    lab = labelled(ds, args.tau)
    summary = {
        "n_triplets": len(ds.samples), "n_labelled": len(lab), "n_drugs": len(ds.drugs),
        "n_cell_lines": len(ds.profiles), "n_genes": ds.n_genes, "n_targets": len(ds.targets),
        "target_dim": ds.target_dim, "n_knowledge": len(kb),
        "n_synergistic": sum(s.label == dataset.SYNERGISTIC for s in lab),
    }
    out = Path(args.out_dir) / "ingest_summary.json"
    out.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for k, v in summary.items():
        print(f"{k}: {v}")
    return [out], list(p.values())


def cmd_split(args):
    ds, _, p = load_data(args)
    lab = labelled(ds, args.tau)
    part = dataset.ood_split(ds.drugs, args.criterion, args.theta)
    part = dataset.assemble_splits(lab, part, seed=args.seed)
    dataset.check_partition(lab, part)
    out_dir = Path(args.out_dir)
    split = {
        "criterion": part.criterion, "theta": part.threshold, "tau": args.tau, "seed": args.seed,
        "id_drugs": sorted(part.id_drugs), "ood_drugs": sorted(part.ood_drugs),
        "train": part.train, "valid": part.valid, "test": part.test,
    }
    sp = out_dir / "split.json"
    sp.write_text(json.dumps(split, indent=1) + "\n")
    name = Path(args.data_dir).name or "fixture"
    txt = out_dir / "split_report.txt"
    txt.write_text(dataset.split_report(part, name))
    csvp = out_dir / "split_report.csv"
    csvp.write_text(dataset.split_report(part, name, fmt="csv"))
    sys.stdout.write(txt.read_text())
    return [sp, txt, csvp], list(p.values())


def cmd_train(args):
    ds, kb, p = load_data(args)
    cfg = apply_overrides(read_config(args.config), args.set)
    tcfg = dict(cfg.get("train", {}))
    for key in ("task_steps", "instruction_steps", "batch_size", "head", "lr_peak", "warmup_steps"):
        val = getattr(args, key, None)
        if val is not None:
            tcfg[key] = val
    tcfg["seed"] = args.seed
    tc = TrainConfig.from_dict(tcfg)
    split = load_split(args.split)
    samples = subset(split, labelled(ds, split["tau"]), "train")
    model = build_model(cfg.get("model", {}), ds, args.seed).bind(ds, kb)
    res = train(model, samples, tc, args.out_dir)
    meta = {"model": model.cfg.to_dict(), "train": tc.to_dict(), "seed": args.seed,
            "n_genes": ds.n_genes, "steps": res.steps}
    mj = Path(args.out_dir) / "model.json"
    mj.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    last = res.log[-1]["loss"] if res.log else float("nan")
    print(f"trained {res.steps} steps on {len(samples)} samples; final loss {last!r}")
    return [res.checkpoint, Path(args.out_dir) / "loss_log.csv", mj], list(p.values()) + [args.split, args.config]


def cmd_eval(args):
    ds, kb, p = load_data(args)
    split = load_split(args.split)
    samples = subset(split, labelled(ds, split["tau"]), args.subset)
    model, _ = load_run(args.run_dir, ds, kb)
    labels = [s.label for s in samples]
    truth = [s.score for s in samples]
    if args.head == "direct":
        probs, scores = model.predict_direct(samples)
        report = evalkit.compute_metrics(probs, labels, scores, truth)
    else:
        probs, scores, ok, _ = model.predict_lm(samples, max_len=args.max_len)
        report = evalkit.compute_metrics(probs, labels, scores, truth, parsed=ok)
    out = Path(args.out_dir)
    mc = out / f"metrics_{args.subset}_{args.head}.csv"
    mt = out / f"metrics_{args.subset}_{args.head}.txt"
    mc.write_text(report.to_csv())
    mt.write_text(report.to_text())
    sys.stdout.write(report.to_text())
    return [mc, mt], list(p.values()) + [args.split, Path(args.run_dir) / "model.ckpt"]


def cmd_analyze(args):
    ds, kb, p = load_data(args)
    split = load_split(args.split)
    samples = subset(split, labelled(ds, split["tau"]), args.subset)
    model, _ = load_run(args.run_dir, ds, kb)
    rows = model.routing_table(samples)
    desc = {d: chem.structural_descriptors(model._graph(d)) for d in ds.drugs}
    report = evalkit.routing_structure_analysis(rows, desc, n_bins=args.bins)
    out = Path(args.out_dir)
    rp, cp, pp = out / "routing_weights.csv", out / "routing_correlations.csv", out / "routing_preference.csv"
    rp.write_text(evalkit.routing_csv(rows))
    cp.write_text(report.to_csv())
    with open(pp, "w") as fh:
        fh.write("descriptor,group,kind,centered_weight\n")
        for name, groups in report.preference.items():
            for g, kinds in groups.items():
                for k, v in kinds.items():
                    fh.write(f"{name},{g},{k},{v!r}\n")
    tp = out / "top_targets.csv"
    with open(tp, "w") as fh:
        fh.write("sample_index,drug_id,top_target\n")
        for start in range(0, len(samples), 64):
            top = evalkit.top_attended_targets(model.target_scores(samples[start:start + 64]))
            for (sid, drug), tid in top.items():
                fh.write(f"{start + sid},{drug},{tid}\n")
    sys.stdout.write(report.to_csv())
    return [rp, cp, pp, tp], list(p.values()) + [args.split, Path(args.run_dir) / "model.ckpt"]


def cmd_explain(args):
    ds, kb, p = load_data(args)
    split = load_split(args.split)
    samples = subset(split, labelled(ds, split["tau"]), args.subset)
    if not 0 <= args.sample < len(samples):
        raise UsageError(f"sample index {args.sample} outside 0..{len(samples) - 1}")
    model, _ = load_run(args.run_dir, ds, kb)
    s = samples[args.sample]
    out = Path(args.out_dir)
    paths = []
    for which in ("SMILES_1", "SMILES_2"):
        att = evalkit.smiles_attention(model, s, which, window=args.window)
        path = out / f"attention_{args.subset}_{args.sample}_{which.lower()}.csv"
        path.write_text(att.to_csv())
        paths.append(path)
        drug = s.drug_a_id if which == "SMILES_1" else s.drug_b_id
        print(f"{drug}: top fragment {att.fragment!r} at {att.window[0]}-{att.window[1]} "
              f"holds {att.fraction:.3f} of SMILES attention")
    return paths, list(p.values()) + [args.split, Path(args.run_dir) / "model.ckpt"]


def cmd_grad_check(args):
    results = verify.run_suite(seed=args.seed, eps=args.eps, coord_scale=args.coord_scale)
    worst = 0.0
    for r in results:
        worst = max(worst, r.max_error)
        print(f"{r.name:14s} max_rel_error={r.max_error:.3e} checked={r.checked} "
              f"skipped_kinks={r.skipped_kinks} time={r.seconds:.1f}s")
    print(f"max relative error {worst:.3e}")
    if worst >= args.tol:
        raise RuntimeError(f"gradient check failed: {worst:.3e} >= {args.tol:g}")
    return [], []


# argument parsing

def _common(p, data=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--config", default=None, help="TOML file with [model] and [train] tables")
    if data:
        p.add_argument("--data-dir", required=True)
        p.add_argument("--tau", type=float, default=10.0, help="labelling threshold on |score|")


def build_parser():
    ap = argparse.ArgumentParser(prog="synergraph", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-fixtures", help="write the synthetic corpus")
    _common(p, data=False)
    p.add_argument("--n-genes", type=int, default=908)
    p.add_argument("--n-triplets", type=int, default=200)
    p.add_argument("--target-dim", type=int, default=16)
    p.set_defaults(func=cmd_gen_fixtures)

    p = sub.add_parser("ingest", help="validate input tables and summarize them")
    _common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="out-of-distribution split and statistics table")
    _common(p)
    p.add_argument("--criterion", choices=("scaffold", "size"), required=True)
    p.add_argument("--theta", type=float, required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="run the training stages")
    _common(p)
    p.add_argument("--split", required=True)
    p.add_argument("--task-steps", type=int, dest="task_steps")
    p.add_argument("--instruction-steps", type=int, dest="instruction_steps")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--warmup-steps", type=int, dest="warmup_steps")
    p.add_argument("--lr-peak", type=float, dest="lr_peak")
    p.add_argument("--head", choices=("direct", "lm"))
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (("eval", cmd_eval, "metric report for a trained run"),
                              ("analyze", cmd_analyze, "routing weight vs. structure correlations"),
                              ("explain", cmd_explain, "SMILES attention for one sample")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.add_argument("--split", required=True)
        p.add_argument("--run-dir", required=True)
        p.add_argument("--subset", default="test")
        if name == "eval":
            p.add_argument("--head", choices=("direct", "lm"), default="direct")
            p.add_argument("--max-len", type=int, default=96)
        if name == "analyze":
            p.add_argument("--bins", type=int, default=4)
        if name == "explain":
            p.add_argument("--sample", type=int, default=0)
            p.add_argument("--window", type=int, default=5)
        p.set_defaults(func=func)

    p = sub.add_parser("grad-check", help="finite-difference check of every objective")
    _common(p, data=False)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--coord-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_grad_check)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        cfg_snapshot = {k: v for k, v in vars(args).items() if k != "func"}
        outputs, inputs = args.func(args)
        manifest = RunManifest(args.command, cfg_snapshot, args.seed, git_describe())
        manifest.add_inputs(inputs)
        manifest.add_outputs(outputs)
        manifest.timings["total_seconds"] = round(time.perf_counter() - t0, 3)
        manifest.write(args.out_dir)
    except UsageError as exc:
        print(f"synergraph {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surface module errors as one line with context
        print(f"synergraph {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
