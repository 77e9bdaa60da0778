"""Pipeline executable: stats, split, train, tune, evaluate, flow, report.

Configuration lives in an INI file; `--set section.key=value` overrides
individual entries. Every stage writes a manifest with the effective
config, its hash, the derived seeds and library versions, so a run can
be repeated bit-identically. Stages are idempotent: unchanged inputs
produce byte-identical outputs.

Exit codes: 0 success, 1 usage, 2 data problem, 3 numerical failure.
"""

import argparse
import configparser
import hashlib
import json
import os
import platform
import sys

import numpy as np
import scipy

from . import arrayio, baselines, evaluator, flow, gcf, graph, hypersearch, ingest, trainer
from .errors import (CapacityError, DataError, DependencyError, NumericalError,
                     UsageError)
from .seeding import derive_seed

try:
    from importlib.metadata import version as _pkg_version
    VERSION = _pkg_version("gcfbench")
except Exception:
    VERSION = "0+unknown"

ALL_KINDS = tuple(baselines.BASELINE_KINDS) + tuple(gcf.GCF_KINDS)

# column labels used in figure-data tables and leaderboards
DISPLAY_NAMES = {
    "ngcf": "NGCF", "dgcf": "DGCF", "lightgcn": "LightGCN", "sgl": "SGL",
    "ultragcn": "UltraGCN", "gfcf": "GFCF", "userknn": "UserkNN",
    "itemknn": "ItemkNN", "rp3beta": "RP3Beta", "easer": "EASER",
    "mostpop": "MostPop", "random": "Random",
}

# TrainConfig fields that may appear in a [model.<kind>] section or a
# search space; everything else is model-constructor hyper
TRAIN_KEYS = ("epochs", "batch_size", "lr", "l2", "patience", "eval_every")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _coerce(text: str):
    text = text.strip()
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def load_config(path, overrides) -> dict:
    if not path or not os.path.exists(path):
        raise UsageError(f"config file not found: {path!r}")
    cp = configparser.ConfigParser()
    cp.read(path)
    cfg = {section: dict(cp[section]) for section in cp.sections()}
    for entry in overrides or []:
        key, sep, value = entry.partition("=")
        # last dot separates key from section: section names may be dotted
        section, dot, name = key.rpartition(".")
        if not sep or not dot or not section or not name:
            raise UsageError(f"--set expects section.key=value, got {entry!r}")
        cfg.setdefault(section, {})[name] = value
    return cfg


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _get(cfg, section, key, default=None, cast=None):
    value = cfg.get(section, {}).get(key, default)
    if value is None:
        return None
    if cast is not None and isinstance(value, str):
        try:
            value = cast(value)
        except ValueError as exc:
            raise UsageError(f"[{section}] {key}: {exc}") from None
    return value


def _require(cfg, section, key, cast=None):
    value = _get(cfg, section, key, cast=cast)
    if value is None:
        raise UsageError(f"config is missing [{section}] {key}")
    return value


def _out_dir(cfg) -> str:
    out = _require(cfg, "run", "output")
    os.makedirs(out, exist_ok=True)
    return out


def _root_seed(cfg) -> int:
    return int(_get(cfg, "run", "seed", default=42, cast=int))


def write_manifest(out, command: str, cfg: dict, seeds: dict) -> None:
    payload = {
        "command": command,
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "root_seed": _root_seed(cfg),
        "derived_seeds": seeds,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "gcfbench": VERSION,
        },
    }
    path = os.path.join(out, f"manifest.{command}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_dataset(cfg) -> ingest.InteractionSet:
    path = _require(cfg, "data", "interactions")
    fmt = _get(cfg, "data", "format", default="pairs")
    if not os.path.exists(path):
        raise DataError(f"interaction file not found: {path}")
    return ingest.load_interactions(path, fmt=fmt)


def _read_split(out) -> ingest.Split:
    return ingest.read_split(os.path.join(out, "split"))


def _model_section(cfg, kind: str) -> dict:
    raw = cfg.get(f"model.{kind}", {})
    return {k: _coerce(v) for k, v in raw.items()}


def _split_hyper(kind: str, section: dict):
    """Separate optimizer settings from model-constructor hyper."""
    train_kw = {k: v for k, v in section.items() if k in TRAIN_KEYS}
    model_kw = {k: v for k, v in section.items() if k not in TRAIN_KEYS}
    return model_kw, train_kw


def _parse_models_arg(cfg, arg) -> list:
    raw = arg if arg else _get(cfg, "run", "models", default="")
    kinds = [m.strip().lower() for m in raw.split(",") if m.strip()]
    if not kinds:
        raise UsageError("no models given; set run.models or pass --models")
    for kind in kinds:
        if kind not in ALL_KINDS:
            raise UsageError(
                f"unknown model {kind!r}; known kinds: {', '.join(ALL_KINDS)}")
    return kinds


# ---------------------------------------------------------------- stages

def cmd_stats(cfg, args) -> int:
    out = _out_dir(cfg)
    if args.on_split:
        iset = _read_split(out).train
        name, path = "train", os.path.join(out, "stats.train.tsv")
    else:
        iset = _load_dataset(cfg)
        name, path = "dataset", os.path.join(out, "stats.tsv")
    stats = ingest.compute_stats(iset)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("statistic\tvalue\n")
        fh.write(f"users\t{stats.num_users}\n")
        fh.write(f"items\t{stats.num_items}\n")
        fh.write(f"edges\t{stats.num_interactions}\n")
        fh.write(f"density\t{stats.density:.4f}\n")
        fh.write(f"avg_degree_users\t{stats.avg_user_degree:.4f}\n")
        fh.write(f"avg_degree_items\t{stats.avg_item_degree:.4f}\n")
    write_manifest(out, "stats", cfg, {})
    print(ingest.format_stats(stats, name=name))
    print(f"wrote {path}")
    return 0


def cmd_split(cfg, args) -> int:
    out = _out_dir(cfg)
    root = _root_seed(cfg)
    iset = _load_dataset(cfg)
    train_ratio = float(_get(cfg, "split", "train_ratio", default=0.8, cast=float))
    validation_ratio = float(_get(cfg, "split", "validation_ratio", default=0.0, cast=float))
    seed = _get(cfg, "split", "seed", cast=int)
    seed = derive_seed(root, "split") if seed is None else seed
    vseed = _get(cfg, "split", "validation_seed", cast=int)
    vseed = derive_seed(root, "validation") if vseed is None else vseed

    split = ingest.holdout_split(iset, train_ratio=train_ratio, seed=seed)
    if validation_ratio > 0:
        split = ingest.carve_validation(split, validation_ratio=validation_ratio,
                                        seed=vseed)
    split_dir = os.path.join(out, "split")
    ingest.write_split(split, split_dir)
    write_manifest(out, "split", cfg, {"split": seed, "validation": vseed})
    parts = [f"train={split.train.num_pairs}", f"test={split.test.num_pairs}"]
    if split.validation is not None:
        parts.append(f"validation={split.validation.num_pairs}")
    print(f"split written to {split_dir} ({', '.join(parts)})")
    return 0


def _fit_untrained(kind: str, cfg, split) -> object:
    """Build and fit a model that needs no gradient training."""
    root = _root_seed(cfg)
    model_kw, _ = _split_hyper(kind, _model_section(cfg, kind))
    R = graph.build_interaction_matrix(split.train)
    if kind == "gfcf":
        model_kw.setdefault("seed", derive_seed(root, "model/gfcf"))
        return gcf.build_model("gfcf", split.train, **model_kw)
    model = baselines.build_baseline(
        kind, seed=model_kw.pop("seed", derive_seed(root, f"model/{kind}")),
        **model_kw)
    return model.fit(R)


def _baseline_arrays(kind: str, model) -> tuple:
    """(hyper, arrays) pair to persist for a fitted non-trainable model."""
    if kind == "mostpop":
        return {}, {"item_scores": model.item_scores}
    if kind == "random":
        return {"seed": model.seed}, {}
    if kind in ("userknn", "itemknn"):
        return {"k": model.k, "shrink": model.shrink}, {"W": model.W}
    if kind == "rp3beta":
        return {"k": model.k, "beta": model.beta}, {"W": model.W}
    if kind == "easer":
        return {"l2": model.l2}, {"B": model.B}
    # gfcf
    return model.hyperparameters(), {"V": model.V, "sigma": model.sigma}


def cmd_train(cfg, args) -> int:
    out = _out_dir(cfg)
    root = _root_seed(cfg)
    kind = args.model.lower()
    if kind not in ALL_KINDS:
        raise UsageError(f"unknown model {kind!r}")
    split = _read_split(out)
    ckpt_dir = os.path.join(out, "models", kind)

    if kind in gcf.TRAINABLE_KINDS:
        model_kw, train_kw = _split_hyper(kind, _model_section(cfg, kind))
        config = trainer.TrainConfig(
            seed=derive_seed(root, f"train/{kind}"),
            k_eval=int(_get(cfg, "run", "k", default=20, cast=int)),
            **train_kw)
        model = gcf.build_model(kind, split.train, **model_kw)
        result = trainer.train(model, split, config)
        trainer.save_checkpoint(ckpt_dir, model, config, result)
        best = "" if result.best_val is None else f", best val recall {result.best_val:.4f}"
        print(f"{kind}: stopped at epoch {result.stopped_epoch}{best}; "
              f"checkpoint at {ckpt_dir}")
        write_manifest(out, "train", cfg, {f"train/{kind}": config.seed})
        return 0

    model = _fit_untrained(kind, cfg, split)
    hyper, arrays = _baseline_arrays(kind, model)
    arrayio.save_model(ckpt_dir, kind, {"model": hyper}, arrays)
    write_manifest(out, "train", cfg,
                   {f"model/{kind}": derive_seed(root, f"model/{kind}")})
    print(f"{kind}: fitted, artifacts at {ckpt_dir}")
    return 0


def _scorer_from_checkpoint(kind: str, meta: dict, arrays: dict, split):
    hyper = meta.get("model", {})
    R = graph.build_interaction_matrix(split.train)
    if kind in gcf.TRAINABLE_KINDS:
        model = gcf.build_model(kind, split.train, **hyper)
        users, items = model.final_embeddings(arrays)
        return evaluator.EmbeddingScorer(users, items)
    if kind == "gfcf":
        hyper = dict(hyper)
        hyper.pop("seed", None)
        return gcf.Gfcf(**hyper).restore(R, arrays["V"], arrays["sigma"])
    if kind == "mostpop":
        model = baselines.MostPop()
        model.item_scores = arrays["item_scores"]
        return model
    if kind == "random":
        return baselines.RandomScorer(seed=int(hyper.get("seed", 0))).fit(R)
    if kind in ("userknn", "itemknn"):
        model = baselines.Knn("user" if kind == "userknn" else "item",
                              k=int(hyper.get("k", 50)),
                              shrink=float(hyper.get("shrink", 0.0)))
        model.W = arrays["W"].tocsr()
        model._R = R
        return model
    if kind == "rp3beta":
        model = baselines.RP3Beta(k=int(hyper.get("k", 100)),
                                  beta=float(hyper.get("beta", 0.0)))
        model.W = arrays["W"].tocsr()
        model._R = R.astype(np.float64)
        return model
    if kind == "easer":
        model = baselines.EaseR(l2=float(hyper.get("l2", 1.0)))
        model.B = arrays["B"]
        model._R = R.astype(np.float64)
        return model
    raise UsageError(f"unknown model {kind!r}")


def _load_scorer(kind: str, cfg, out, split):
    ckpt_dir = os.path.join(out, "models", kind)
    if os.path.exists(os.path.join(ckpt_dir, "model.json")):
        saved_kind, meta, arrays = trainer.load_checkpoint(ckpt_dir)
        if saved_kind != kind:
            raise DataError(f"checkpoint at {ckpt_dir} holds {saved_kind!r}, "
                            f"not {kind!r}")
        return _scorer_from_checkpoint(kind, meta, arrays, split)
    if kind in gcf.TRAINABLE_KINDS:
        raise DependencyError(
            f"no checkpoint for {kind!r} under {ckpt_dir}; run "
            f"`gcfbench train --model {kind}` first")
    # closed-form and reference scorers are cheap enough to fit on demand
    return _fit_untrained(kind, cfg, split)


def cmd_evaluate(cfg, args) -> int:
    out = _out_dir(cfg)
    kinds = _parse_models_arg(cfg, args.models)
    split = _read_split(out)
    K = int(_get(cfg, "run", "k", default=20, cast=int))
    reports_dir = os.path.join(out, "reports")
    os.makedirs(reports_dir, exist_ok=True)

    for kind in kinds:
        scorer = _load_scorer(kind, cfg, out, split)
        report = evaluator.evaluate(scorer, split, K=K)
        evaluator.write_report_tsv(
            report, os.path.join(reports_dir, f"{kind}.report.tsv"),
            user_ids=split.train.user_ids)
        evaluator.write_report_json(
            report, os.path.join(reports_dir, f"{kind}.report.json"),
            extra={"model": kind})
        arrayio.save_array(
            os.path.join(reports_dir, f"{kind}.peruser.bin"),
            np.vstack([report.recall, report.ndcg]))
        print(f"{kind}\trecall@{K}={report.recall_mean:.4f}\t"
              f"ndcg@{K}={report.ndcg_mean:.4f}\t"
              f"users={report.n_evaluable}")
    write_manifest(out, "evaluate", cfg, {})
    return 0


def _tune_objective(kind: str, cfg, split):
    """Map a sampled config dict to validation Recall@K."""
    root = _root_seed(cfg)
    K = int(_get(cfg, "run", "k", default=20, cast=int))
    base_section = _model_section(cfg, kind)
    val_split = ingest.Split(train=split.train, test=split.validation)

    def objective(sample: dict) -> float:
        section = dict(base_section)
        section.update(sample)
        model_kw, train_kw = _split_hyper(kind, section)
        if kind in gcf.TRAINABLE_KINDS:
            config = trainer.TrainConfig(
                seed=derive_seed(root, f"tune/{kind}"), k_eval=K, **train_kw)
            model = gcf.build_model(kind, split.train, **model_kw)
            result = trainer.train(model, split, config)
            if result.best_val is None:
                raise DataError("tuning needs validation checks during training")
            return result.best_val
        R = graph.build_interaction_matrix(split.train)
        if kind == "gfcf":
            model_kw.setdefault("seed", derive_seed(root, "model/gfcf"))
            model = gcf.build_model("gfcf", split.train, **model_kw)
        else:
            model = baselines.build_baseline(
                kind, seed=model_kw.pop("seed", derive_seed(root, f"model/{kind}")),
                **model_kw).fit(R)
        return evaluator.evaluate(model, val_split, K=K).recall_mean

    return objective


def cmd_tune(cfg, args) -> int:
    out = _out_dir(cfg)
    root = _root_seed(cfg)
    kind = args.model.lower()
    if kind not in ALL_KINDS:
        raise UsageError(f"unknown model {kind!r}")
    split = _read_split(out)
    if split.validation is None:
        raise DependencyError(
            "tuning needs a validation part; re-split with "
            "split.validation_ratio > 0")

    section = dict(cfg.get(f"search.{kind}", {}))
    engine = (args.engine or section.pop("engine", "random")).lower()
    trials = int(args.trials or section.pop("trials", 20))
    if engine not in ("random", "tpe"):
        raise UsageError(f"engine must be random or tpe, got {engine!r}")
    if not section:
        raise UsageError(f"config has no [search.{kind}] domains to tune over")
    space = hypersearch.SearchSpace(
        {name: hypersearch.parse_domain(text) for name, text in section.items()})

    objective = _tune_objective(kind, cfg, split)
    seed = derive_seed(root, f"tune/{kind}")
    search = hypersearch.random_search if engine == "random" else hypersearch.tpe_search
    best, history = search(space, objective, trials=trials, seed=seed)

    tune_dir = os.path.join(out, "tuning", kind)
    os.makedirs(tune_dir, exist_ok=True)
    hypersearch.write_history(os.path.join(tune_dir, "history.jsonl"), history)
    with open(os.path.join(tune_dir, "best.json"), "w", encoding="utf-8") as fh:
        json.dump({"model": kind, "engine": engine, "trials": trials,
                   "config": best.config, "objective": best.objective,
                   "trial_index": best.index}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    write_manifest(out, "tune", cfg, {f"tune/{kind}": seed})
    print(f"{kind}: best validation recall {best.objective:.4f} at trial "
          f"{best.index}: {best.config}")
    return 0


def cmd_flow(cfg, args) -> int:
    out = _out_dir(cfg)
    kinds = _parse_models_arg(cfg, args.models)
    split = _read_split(out)
    reports_dir = os.path.join(out, "reports")
    flow_dir = os.path.join(reports_dir, "flow")
    os.makedirs(flow_dir, exist_ok=True)

    ndcg_rows = {}
    for kind in kinds:
        path = os.path.join(reports_dir, f"{kind}.peruser.bin")
        if not os.path.exists(path):
            raise DependencyError(
                f"no per-user metrics for {kind!r}; run "
                f"`gcfbench evaluate` on it first")
        ndcg_rows[kind] = arrayio.load_array(path)[1]

    first = ndcg_rows[kinds[0]]
    evaluable = ~np.isnan(first)
    if not evaluable.any():
        raise DataError("no evaluable users in the stored reports")

    R = graph.build_interaction_matrix(split.train)
    hop_values = flow.flow_profile(R)
    groups_by_hop = {h: flow.quartile_partition(hop_values[h][evaluable])
                     for h in flow.HOPS}

    eval_users = np.flatnonzero(evaluable)
    with open(os.path.join(flow_dir, "profile.tsv"), "w", encoding="utf-8") as fh:
        fh.write("user\thop1\thop2\thop3\tq1\tq2\tq3\n")
        for pos, u in enumerate(eval_users):
            label = split.train.user_ids[u]
            cells = [str(label)]
            cells += [str(int(hop_values[h][u])) for h in flow.HOPS]
            cells += [str(int(groups_by_hop[h][pos])) for h in flow.HOPS]
            fh.write("\t".join(cells) + "\n")

    display = [DISPLAY_NAMES[k] for k in kinds]
    for h in flow.HOPS:
        variations = {}
        detail_path = os.path.join(flow_dir, f"quartiles_hop{h}.tsv")
        with open(detail_path, "w", encoding="utf-8") as fh:
            fh.write("model\tquartile\tsize\tmean_ndcg\tvariation_pct\n")
            for kind in kinds:
                vals = ndcg_rows[kind][evaluable]
                rows = flow.quartile_report(vals, groups_by_hop[h],
                                            float(vals.mean()))
                variations[DISPLAY_NAMES[kind]] = [r["variation"] for r in rows]
                for r in rows:
                    mean = "" if r["mean"] is None else f"{r['mean']:.10g}"
                    var = "" if r["variation"] is None else f"{r['variation']:.4f}"
                    fh.write(f"{kind}\t{r['quartile']}\t{r['size']}\t{mean}\t{var}\n")
        flow.write_variation_table(
            os.path.join(flow_dir, f"quartiles_ndcg_hop{h}.csv"),
            display, variations)
    write_manifest(out, "flow", cfg, {})
    print(f"flow tables written to {flow_dir}")
    return 0


def cmd_report(cfg, args) -> int:
    out = _out_dir(cfg)
    kinds = _parse_models_arg(cfg, args.models)
    reports_dir = os.path.join(out, "reports")

    rows = []
    for kind in kinds:
        path = os.path.join(reports_dir, f"{kind}.report.json")
        if not os.path.exists(path):
            raise DependencyError(
                f"no evaluation report for {kind!r}; run `gcfbench evaluate`")
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        rows.append({"model": kind, "recall": payload["recall"],
                     "ndcg": payload["ndcg"], "K": payload["K"]})

    by_recall = sorted(rows, key=lambda r: (-r["recall"], r["model"]))
    by_ndcg = sorted(rows, key=lambda r: (-r["ndcg"], r["model"]))
    rank_recall = {r["model"]: i + 1 for i, r in enumerate(by_recall)}
    rank_ndcg = {r["model"]: i + 1 for i, r in enumerate(by_ndcg)}
    worst_recall = min(r["recall"] for r in rows)
    worst_ndcg = min(r["ndcg"] for r in rows)

    def rel(value, worst):
        if worst <= 0:
            return ""
        return f"{(value / worst - 1.0) * 100.0:.2f}"

    path = os.path.join(reports_dir, "leaderboard.tsv")
    header = ("model\trecall\tndcg\trank_recall\trank_ndcg\t"
              "rel_improvement_recall_pct\trel_improvement_ndcg_pct\n")
    lines = [header]
    for r in by_recall:
        lines.append(
            f"{DISPLAY_NAMES[r['model']]}\t{r['recall']:.4f}\t{r['ndcg']:.4f}\t"
            f"{rank_recall[r['model']]}\t{rank_ndcg[r['model']]}\t"
            f"{rel(r['recall'], worst_recall)}\t{rel(r['ndcg'], worst_ndcg)}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)
    write_manifest(out, "report", cfg, {})
    sys.stdout.write("".join(lines))
    print(f"leaderboard written to {path}")
    return 0


# ---------------------------------------------------------------- parser

def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gcfbench",
                     description="Graph collaborative filtering benchmark pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="INI configuration file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE",
                       help="override one config entry")

    p = sub.add_parser("stats", help="dataset statistics table")
    common(p)
    p.add_argument("--split", dest="on_split", action="store_true",
                   help="compute on the persisted train part instead of raw data")

    p = sub.add_parser("split", help="hold out train/validation/test")
    common(p)

    p = sub.add_parser("train", help="fit one model and persist artifacts")
    common(p)
    p.add_argument("--model", required=True, help="model kind to fit")

    p = sub.add_parser("tune", help="hyper-parameter search on validation recall")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--engine", choices=("random", "tpe"), default=None)
    p.add_argument("--trials", type=int, default=None)

    p = sub.add_parser("evaluate", help="top-K metrics for a model list")
    common(p)
    p.add_argument("--models", default=None, help="comma-separated model kinds")

    p = sub.add_parser("flow", help="hop-flow quartile breakdown tables")
    common(p)
    p.add_argument("--models", default=None)

    p = sub.add_parser("report", help="merged leaderboard with ranks")
    common(p)
    p.add_argument("--models", default=None)

    return parser


_COMMANDS = {
    "stats": cmd_stats,
    "split": cmd_split,
    "train": cmd_train,
    "tune": cmd_tune,
    "evaluate": cmd_evaluate,
    "flow": cmd_flow,
    "report": cmd_report,
}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        cfg = load_config(args.config, args.overrides)
        return _COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, CapacityError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
