"""Command-line pipeline: train, analyze, generate, evolve, attack, report.

Runs are driven by a JSON config with sections dataset / network / train /
generator / evolution / fitness / attack / output. Unknown keys are
rejected. Every command writes a reproducibility stamp (config echo,
seeds, artifact hashes) into its output directory.

Exit codes: 0 success, 2 config error, 3 missing/invalid input file,
4 training or generation failure, 1 unexpected error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import adversarial, evolution, fitness, generator, nn, store
from .errors import (
    ConfigRangeError,
    CorruptModelError,
    FormatError,
    GenerationFailedError,
    MgeError,
    TrainingDivergedError,
)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4

_SECTIONS = {
    "dataset": {"kind", "n", "classes", "seed", "noise", "dim",
                "images", "labels", "splits"},
    "network": {"input_shape", "classes", "layers"},
    "train": {"optimizer", "learning_rate", "epochs", "batch_size", "seed"},
    "generator": {"t", "z", "attempts", "epsilon", "seed", "adaptive_z"},
    "evolution": {"generations", "parents", "mutations", "fusions",
                  "fusion_weights", "seed"},
    "fitness": {"base", "extra", "gamma"},
    "attack": {"epsilons", "examples"},
    "output": {"directory"},
}


class ConfigError(ConfigRangeError):
    pass


def load_config(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file {path} does not exist")
    with open(path) as f:
        doc = json.load(f)
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    for section, body in doc.items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for key in body:
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {section}.{key}")
    return doc


_LAYER_BUILDERS = {
    "dense": lambda d: nn.Dense(int(d["in"]), int(d["out"])),
    "conv": lambda d: nn.Conv(int(d["in_ch"]), int(d["out_ch"]), int(d["k"])),
    "maxpool": lambda d: nn.MaxPool(int(d["k"])),
    "relu": lambda d: nn.Activation("relu"),
    "tanh": lambda d: nn.Activation("tanh"),
    "flatten": lambda d: nn.Flatten(),
}


def build_network(cfg):
    net = cfg.get("network")
    if not net:
        raise ConfigError("missing section network")
    layers = []
    for i, item in enumerate(net.get("layers", [])):
        kind = item.get("type")
        if kind not in _LAYER_BUILDERS:
            raise ConfigError(f"network.layers[{i}]: unknown type {kind!r}")
        layers.append(_LAYER_BUILDERS[kind](item))
    return nn.NetworkSpec(tuple(layers), tuple(net["input_shape"]), int(net["classes"]))


def build_datasets(cfg):
    """Returns dict with train/val/test Datasets."""
    ds = cfg.get("dataset")
    if not ds:
        raise ConfigError("missing section dataset")
    kind = ds.get("kind", "blobs")
    if kind == "idx":
        full = nn.load_idx_dataset(ds["images"], ds["labels"],
                                   classes=int(ds.get("classes", 10)))
    else:
        full = nn.make_synthetic(kind, int(ds.get("n", 600)),
                                 int(ds.get("classes", 3)),
                                 int(ds.get("seed", 0)),
                                 noise=float(ds.get("noise", 0.06)),
                                 dim=int(ds.get("dim", 2)))
    splits = ds.get("splits", {"train": 0.6, "val": 0.2, "test": 0.2})
    return nn.split_dataset(full, splits, seed=int(ds.get("seed", 0)) + 1)


def build_train_config(cfg, seed_override=None):
    t = cfg.get("train", {})
    return nn.TrainConfig(
        optimizer=t.get("optimizer", "adam"),
        learning_rate=float(t.get("learning_rate", 0.001)),
        epochs=int(t.get("epochs", 20)),
        batch_size=int(t.get("batch_size", 32)),
        seed=seed_override if seed_override is not None else int(t.get("seed", 0)),
    )


def build_generator_config(cfg, seed_override=None):
    g = cfg.get("generator", {})
    return generator.GeneratorConfig(
        t=float(g.get("t", 0.8)),
        z=float(g.get("z", 0.2)),
        attempts=int(g.get("attempts", 100)),
        epsilon=float(g.get("epsilon", 0.05)),
        seed=seed_override if seed_override is not None else int(g.get("seed", 0)),
        adaptive_z=bool(g.get("adaptive_z", False)),
    )


def build_evolution_config(cfg):
    e = cfg.get("evolution", {})
    return evolution.EvolutionConfig(
        generations=int(e.get("generations", 20)),
        parents=int(e.get("parents", 10)),
        mutations=int(e.get("mutations", 10)),
        fusions=int(e.get("fusions", 20)),
        fusion_weights=e.get("fusion_weights", "uniform"),
        seed=int(e.get("seed", 0)),
    )


def build_fitness_config(cfg, splits):
    f = cfg.get("fitness", {})

    def criterion(body, default_kind):
        if body is None:
            return None
        kind = body.get("kind", default_kind)
        split = body.get("dataset", "val")
        if split not in splits:
            raise ConfigError(f"fitness dataset {split!r} is not a known split")
        return fitness.Criterion(kind, splits[split],
                                 attack_eps=body.get("attack_eps"))

    base = criterion(f.get("base", {}), "accuracy")
    extra = criterion(f.get("extra"), "robust_accuracy")
    return fitness.FitnessConfig(base=base, extra=extra,
                                 gamma=float(f.get("gamma", 1.0)))


def _out_dir(cfg, args):
    out = args.out or cfg.get("output", {}).get("directory")
    if not out:
        raise ConfigError("no output directory (use --out or output.directory)")
    os.makedirs(out, exist_ok=True)
    return out


def _write_stamp(out, cfg, seeds, artifacts):
    store.write_manifest(store.stamp(cfg, seeds, artifacts),
                         os.path.join(out, "stamp.json"))


def _member_record(cand, fname, fhash):
    return {
        "id": cand.cand_id,
        "file": fname,
        "hash": fhash,
        "accuracy": cand.accuracy,
        "f_q": cand.f_q,
        "f_d": cand.f_d,
        "f": cand.f,
        "lineage": {"op": cand.lineage[0], "parents": list(cand.lineage[1])},
        "seed": cand.seed,
    }


# ---------------------------------------------------------------------------
# commands


def cmd_train(cfg, args):
    out = _out_dir(cfg, args)
    splits = build_datasets(cfg)
    spec = build_network(cfg)
    tcfg = build_train_config(cfg, seed_override=args.seed)
    params, seconds = nn.train(spec, splits["train"], tcfg)
    val_acc = nn.evaluate_accuracy(spec, params.as_float32(), splits["val"])
    test_acc = nn.evaluate_accuracy(spec, params.as_float32(), splits["test"])
    info = store.save_model(params, os.path.join(out, "base.mgem"))
    record = {
        "model": "base.mgem",
        "hash": info.sha256,
        "val_accuracy": val_acc,
        "test_accuracy": test_acc,
        "wall_clock": {"train_seconds": seconds},
    }
    store.write_manifest(record, os.path.join(out, "train.json"))
    _write_stamp(out, cfg, {"train": tcfg.seed}, {"base.mgem": info.sha256})
    print(f"trained base model: val={val_acc:.4f} test={test_acc:.4f} "
          f"({seconds:.1f}s) -> {info.path}")
    return EXIT_OK


def cmd_analyze(cfg, args):
    out = _out_dir(cfg, args)
    splits = build_datasets(cfg)
    spec = build_network(cfg)
    base = store.load_model(args.model)
    report = {"layers": {}}
    from .transforms import cumulative_energy, dct2
    for e in base.entries:
        curve = cumulative_energy(dct2(e.values))
        report["layers"][e.name] = {
            "size": int(e.values.size),
            "cumulative_energy": [float(v) for v in curve[:: max(1, len(curve) // 64)]],
        }
    fractions = [round(0.05 * i, 2) for i in range(11)]
    decay = generator.zero_fill_decay(base, spec, splits["test"], fractions)
    report["zero_fill_decay"] = [{"fraction": f, "accuracy": a} for f, a in decay]
    bands = [(0.0, 1 / 3), (1 / 3, 2 / 3), (2 / 3, 1.0)]
    sens = generator.band_sensitivity(base, spec, splits["test"], bands,
                                      scale=0.05, seed=args.seed or 0)
    report["band_sensitivity"] = [
        {"band": [lo, hi], "accuracy": a} for (lo, hi), a in sens
    ]
    masks = {}
    for e in base.entries:
        m = generator.unimportant_mask_spatial(e.values, "mid", 0.10)
        masks[e.name] = [int(i) for i in np.nonzero(m)[0]]
    report["unimportant_positions"] = masks
    store.write_manifest(report, os.path.join(out, "analysis.json"))
    _write_stamp(out, cfg, {"analyze": args.seed or 0}, {})
    print(f"analysis written to {os.path.join(out, 'analysis.json')}")
    return EXIT_OK


def cmd_generate(cfg, args):
    out = _out_dir(cfg, args)
    splits = build_datasets(cfg)
    spec = build_network(cfg)
    base = store.load_model(args.model)
    gcfg = build_generator_config(cfg, seed_override=args.seed)
    pool = generator.generate_pool(base, spec, gcfg, splits["val"], args.count)
    members = []
    for cand in pool.candidates:
        fname = f"model_{cand.cand_id:04d}.mgem"
        info = store.save_model(cand.params, os.path.join(out, fname))
        members.append(_member_record(cand, fname, info.sha256))
    wall = {
        "time_generated": pool.seconds,
        "member_seconds": [c.seconds for c in pool.candidates],
    }
    train_json = os.path.join(os.path.dirname(os.path.abspath(args.model)), "train.json")
    ratio = None
    if os.path.exists(train_json):
        t_train_one = store.read_manifest(train_json)["wall_clock"]["train_seconds"]
        wall["time_trained"] = t_train_one * args.count
        ratio = store.time_ratio(pool.seconds, wall["time_trained"])
        wall["ratio_time"] = ratio
    doc = store.build_manifest(
        pool_id=f"pool-{gcfg.seed}-{args.count}",
        base={"path": os.path.basename(args.model),
              "hash": store.file_hash(args.model),
              "accuracy": pool.base_accuracy},
        config={"generator": vars(gcfg)},
        members=members,
        wall_clock=wall,
        attempts=pool.attempts,
        seeds={"generator": gcfg.seed},
    )
    store.write_manifest(doc, os.path.join(out, "manifest.json"))
    _write_stamp(out, cfg, {"generator": gcfg.seed},
                 {m["file"]: m["hash"] for m in members})
    msg = (f"pool of {len(members)} accepted models in {pool.attempts} attempts "
           f"({pool.seconds:.1f}s)")
    if ratio is not None:
        msg += f", Ratio_time={ratio:.2%}"
    print(msg)
    return EXIT_OK


def cmd_evolve(cfg, args):
    out = _out_dir(cfg, args)
    splits = build_datasets(cfg)
    spec = build_network(cfg)
    base = store.load_model(args.model)
    gcfg = build_generator_config(cfg, seed_override=args.seed)
    ecfg = build_evolution_config(cfg)
    fit = build_fitness_config(cfg, splits)
    best, history = evolution.evolve(base, spec, gcfg, ecfg, fit, splits["val"])
    info = store.save_model(best.params, os.path.join(out, "best.mgem"))
    with open(os.path.join(out, "history.csv"), "w", newline="") as f:
        writer = csv.DictWriter(f, ["generation", "max_f", "mean_f", "best_id"])
        writer.writeheader()
        for row in history:
            writer.writerow(row.to_record())
    record = {
        "best": {"file": "best.mgem", "hash": info.sha256, "id": best.cand_id,
                 "accuracy": best.accuracy, "f_q": best.f_q, "f_d": best.f_d,
                 "f": best.f},
        "config": {"generator": vars(gcfg), "evolution": vars(ecfg),
                   "gamma": fit.gamma},
        "history": [row.to_record() for row in history],
    }
    store.write_manifest(record, os.path.join(out, "evolution.json"))
    _write_stamp(out, cfg, {"generator": gcfg.seed, "evolution": ecfg.seed},
                 {"best.mgem": info.sha256})
    print(f"evolved {ecfg.generations} generations: best F={best.f:.4f} "
          f"(id {best.cand_id}) -> {info.path}")
    return EXIT_OK


def cmd_attack(cfg, args):
    out = _out_dir(cfg, args)
    splits = build_datasets(cfg)
    spec = build_network(cfg)
    atk = cfg.get("attack", {})
    epsilons = [float(e) for e in atk.get("epsilons", [0.01, 0.1])]
    n_examples = int(atk.get("examples", 100))
    manifest = store.read_manifest(os.path.join(args.pool, "manifest.json"))
    pool = []
    for m in manifest["members"]:
        pool.append((str(m["id"]), store.load_model(os.path.join(args.pool, m["file"]))))
    base_path = os.path.join(args.pool, "..", manifest["base"]["path"])
    if not os.path.exists(base_path):
        base_path = os.path.join(os.path.dirname(args.pool.rstrip("/")),
                                 manifest["base"]["path"])
    base = store.load_model(base_path)
    rows = []
    for eps in epsilons:
        for mid, params in [("base", base)] + pool:
            rows.append({"model": mid, "eps": eps,
                         "robust_accuracy": adversarial.robust_accuracy(
                             spec, params, splits["test"], eps)})
    with open(os.path.join(out, "robustness.csv"), "w", newline="") as f:
        writer = csv.DictWriter(f, ["model", "eps", "robust_accuracy"])
        writer.writeheader()
        writer.writerows(rows)
    report = adversarial.transfer_matrix(spec, base, pool, splits["test"],
                                         eps=epsilons[-1], n_examples=n_examples)
    with open(os.path.join(out, "transfer.tsv"), "w") as f:
        f.write(report.to_text())
    _write_stamp(out, cfg, {}, {})
    print(f"robustness table ({len(rows)} rows) and transfer report written to {out}")
    return EXIT_OK


def _aligned(rows, headers):
    widths = [max(len(h), *(len(str(r[i])) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for r in rows:
        lines.append("  ".join(str(c).ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)


def cmd_report(cfg, args):
    out = _out_dir(cfg, args)
    sections = []
    manifest_path = os.path.join(args.pool, "manifest.json") if args.pool else None
    if manifest_path and os.path.exists(manifest_path):
        doc = store.read_manifest(manifest_path)
        if not doc["members"]:
            print("pool is empty")
            return EXIT_OK
        base_acc = doc["base"]["accuracy"]
        rows = [[m["id"], f"{m['accuracy']:.4f}", f"{base_acc:.4f}",
                 f"{m['accuracy'] - base_acc:+.4f}"] for m in doc["members"]]
        mean_acc = sum(m["accuracy"] for m in doc["members"]) / len(doc["members"])
        sections.append("== accuracy parity (generated vs base) ==")
        sections.append(_aligned(rows, ["id", "generated", "base", "delta"]))
        sections.append(f"mean generated accuracy: {mean_acc:.4f}")
        wall = doc.get("wall_clock", {})
        if "ratio_time" in wall:
            sections.append("== time ==")
            sections.append(_aligned(
                [[f"{wall['time_generated']:.2f}", f"{wall['time_trained']:.2f}",
                  f"{wall['ratio_time']:.2%}"]],
                ["generated_s", "trained_s", "ratio"]))
        with open(os.path.join(out, "report_accuracy.csv"), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["id", "generated", "base"])
            for m in doc["members"]:
                writer.writerow([m["id"], m["accuracy"], base_acc])
    if args.history and os.path.exists(args.history):
        with open(args.history) as f:
            hist = list(csv.DictReader(f))
        sections.append("== evolution history ==")
        sections.append(_aligned(
            [[h["generation"], h["max_f"], h["mean_f"], h["best_id"]] for h in hist],
            ["generation", "max_f", "mean_f", "best_id"]))
    if not sections:
        print("nothing to report (no pool manifest or history found)")
        return EXIT_OK
    text = "\n".join(sections)
    print(text)
    with open(os.path.join(out, "report.txt"), "w") as f:
        f.write(text + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def make_parser():
    p = argparse.ArgumentParser(prog="mgepool",
                                description="Training-free model generation, "
                                            "enhancement, and benchmarking.")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--seed", type=int, help="seed override for the command")
    p.add_argument("--workers", type=int,
                   default=int(os.environ.get("MGE_WORKERS", "1")),
                   help="worker count (reserved; evaluation is serial)")
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train")
    pa = sub.add_parser("analyze")
    pa.add_argument("--model", required=True)
    pg = sub.add_parser("generate")
    pg.add_argument("--model", required=True)
    pg.add_argument("--count", type=int, default=10)
    pe = sub.add_parser("evolve")
    pe.add_argument("--model", required=True)
    pk = sub.add_parser("attack")
    pk.add_argument("--pool", required=True)
    pr = sub.add_parser("report")
    pr.add_argument("--pool")
    pr.add_argument("--history")
    return p


_COMMANDS = {
    "train": cmd_train,
    "analyze": cmd_analyze,
    "generate": cmd_generate,
    "evolve": cmd_evolve,
    "attack": cmd_attack,
    "report": cmd_report,
}


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](cfg, args)
    except (ConfigError, ConfigRangeError, json.JSONDecodeError) as exc:
        print(f"ERROR code={EXIT_CONFIG} config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, FormatError, CorruptModelError) as exc:
        print(f"ERROR code={EXIT_INPUT} input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (GenerationFailedError, TrainingDivergedError) as exc:
        print(f"ERROR code={EXIT_RUNTIME} runtime: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except MgeError as exc:
        print(f"ERROR code={EXIT_UNEXPECTED} {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
