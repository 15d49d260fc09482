"""Command-line entry point: ``corefrank <command> [--config FILE] [--key value ...]``.

Settings come from built-in defaults, then an optional ``key = value`` config
file, then command-line flags (later sources win). Exit status is 0 on
success, 1 on a runtime failure and 2 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from . import analysis, plotting, synthetic, tuning
from .corpus_io import ConllError, read_conll, read_embeddings, write_conll, write_embeddings
from .metrics import CorpusScorer, format_table
from .model import CheckpointError, ModelConfig
from .objectives import ErrorCosts
from .training import (OBJECTIVES, TrainConfig, TrainingError, atomic_write, evaluate,
                       load_checkpoint, predict_clusters, save_checkpoint, train)

logger = logging.getLogger("corefrank")


class ConfigError(Exception):
    pass


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key: (type, default, help)
KEYS = {
    "data.train": (str, None, "training corpus in CoNLL-2012 format"),
    "data.dev": (str, None, "development corpus used for model selection"),
    "data.test": (str, None, "corpus read by eval, analyze and predict"),
    "data.embeddings": (str, None, "word vectors, one 'word v1 ... vd' line per word"),
    "model.checkpoint": (str, "model.ckpt", "checkpoint written by train, read by the other commands"),
    "model.init": (str, None, "checkpoint to warm-start training from"),
    "model.d_w": (int, 20, "embedding dimension"),
    "model.m1": (int, 100, "width of hidden layer 1"),
    "model.m2": (int, 50, "width of hidden layer 2"),
    "model.m3": (int, 50, "width of hidden layer 3"),
    "model.dropout": (float, 0.5, "dropout rate on the input and hidden layers"),
    "model.freeze_embeddings": (_bool, False, "keep word vectors fixed during training"),
    "train.objective": (str, "reward_rescaling", "one of " + ", ".join(OBJECTIVES)),
    "train.epochs": (int, 10, "number of passes over the training corpus"),
    "train.seed": (int, 0, "random seed (initialization, shuffling, dropout, sampling)"),
    "train.lr": (float, 1e-4, "RMSprop learning rate"),
    "train.decay": (float, 0.99, "RMSprop decay of the squared-gradient average"),
    "train.epsilon": (float, 1e-8, "RMSprop epsilon"),
    "train.alpha_fn": (float, 0.8, "heuristic cost of a false-new error"),
    "train.alpha_fa": (float, 0.4, "heuristic cost of a false-anaphor error"),
    "train.alpha_wl": (float, 1.0, "heuristic cost of a wrong-link error"),
    "train.samples": (int, 1, "REINFORCE action sequences sampled per document"),
    "train.log": (str, None, "per-epoch CSV log (default: <checkpoint>.log.csv)"),
    "train.plot": (_bool, False, "also draw the training curve next to the log"),
    "tune.start_fn": (float, 1.0, "alpha_fn of the first grid point"),
    "tune.start_fa": (float, 1.0, "alpha_fa of the first grid point"),
    "tune.surrogate": (str, "", "score grid points without training: 'constant' or 'manhattan:FN,FA'"),
    "tune.trials": (str, None, "trials CSV (default: stdout)"),
    "analyze.out_dir": (str, "analysis", "directory for errors.csv, costs.csv, density.csv and figures"),
    "analyze.bins": (int, 50, "histogram bins of the cost density"),
    "analyze.figures": (_bool, True, "draw density.png and errors.png"),
    "predict.output": (str, None, "CoNLL file with predicted chains (default: stdout)"),
    "synth.out_dir": (str, "synthetic", "directory for the generated corpus"),
    "synth.train_docs": (int, 50, "synthetic training documents"),
    "synth.dev_docs": (int, 20, "synthetic development documents"),
    "synth.seed": (int, 0, "synthetic corpus seed"),
}


def read_config_file(path: str) -> dict[str, str]:
    values = {}
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        values[key] = value
    return values


def resolve(args: argparse.Namespace) -> dict:
    raw: dict[str, object] = {}
    if getattr(args, "config", None):
        raw.update(read_config_file(args.config))
    for key in KEYS:
        if key in vars(args):
            raw[key] = vars(args)[key]
    cfg = {}
    for key, (typ, default, _) in KEYS.items():
        if key in raw and raw[key] is not None:
            try:
                cfg[key] = typ(raw[key])
            except ValueError as e:
                raise ConfigError(f"{key}: {e}") from None
        else:
            cfg[key] = default
    return cfg


def _need(cfg, *keys):
    for key in keys:
        if not cfg[key]:
            raise ConfigError(f"{key} is required")
        if key.startswith("data.") or key in ("model.init",):
            if not os.path.exists(cfg[key]):
                raise ConfigError(f"{key}: no such file {cfg[key]!r}")


def model_config(cfg) -> ModelConfig:
    try:
        return ModelConfig(cfg["model.d_w"], cfg["model.m1"], cfg["model.m2"], cfg["model.m3"],
                           cfg["model.dropout"], cfg["model.freeze_embeddings"])
    except ValueError as e:
        raise ConfigError(str(e)) from None


def train_config(cfg) -> TrainConfig:
    try:
        return TrainConfig(objective=cfg["train.objective"],
                           costs=ErrorCosts(cfg["train.alpha_fn"], cfg["train.alpha_fa"],
                                            cfg["train.alpha_wl"]),
                           model=model_config(cfg), lr=cfg["train.lr"], decay=cfg["train.decay"],
                           epsilon=cfg["train.epsilon"], epochs=cfg["train.epochs"],
                           seed=cfg["train.seed"], samples=cfg["train.samples"])
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _load_training_inputs(cfg):
    _need(cfg, "data.train")
    if cfg["data.dev"]:
        _need(cfg, "data.dev")
    if cfg["model.init"]:
        _need(cfg, "model.init")
    else:
        _need(cfg, "data.embeddings")
    corpus = read_conll(cfg["data.train"])
    dev = read_conll(cfg["data.dev"]) if cfg["data.dev"] else []
    table = init = None
    if cfg["model.init"]:
        init = load_checkpoint(cfg["model.init"], expect=model_config(cfg))
    else:
        table = read_embeddings(cfg["data.embeddings"], cfg["model.d_w"])
    return corpus, dev, table, init


# ---------------------------------------------------------------- commands


def cmd_train(cfg, args) -> int:
    config = train_config(cfg)
    corpus, dev, table, init = _load_training_inputs(cfg)
    params, log = train(config, corpus, dev, table=table, init=init)
    save_checkpoint(params, cfg["model.checkpoint"])
    log_path = cfg["train.log"] or cfg["model.checkpoint"] + ".log.csv"
    atomic_write(log_path, log.to_csv())
    if cfg["train.plot"]:
        plotting.plot_training_log(log, os.path.splitext(log_path)[0] + ".png")
    print(f"wrote {cfg['model.checkpoint']} (best epoch {log.best_epoch}) and {log_path}")
    return 0


def _load_model(cfg):
    _need(cfg, "model.checkpoint")
    if not os.path.exists(cfg["model.checkpoint"]):
        raise ConfigError(f"model.checkpoint: no such file {cfg['model.checkpoint']!r}")
    return load_checkpoint(cfg["model.checkpoint"])


def cmd_eval(cfg, args) -> int:
    _need(cfg, "data.test")
    params = _load_model(cfg)
    report = evaluate(params, read_conll(cfg["data.test"]))
    if args.json:
        print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    else:
        sys.stdout.write(format_table(report))
    return 0


def cmd_score(cfg, args) -> int:
    """Score a response file against a key file, matching mentions by span."""
    for p in (args.key, args.response):
        if not os.path.exists(p):
            raise ConfigError(f"no such file {p!r}")
    key_docs = {(d.doc_key, d.part): d for d in read_conll(args.key)}
    resp_docs = {(d.doc_key, d.part): d for d in read_conll(args.response, warn_singletons=False)}
    scorer = CorpusScorer()
    for k, kd in key_docs.items():
        rd = resp_docs.get(k)
        key = [{kd.mentions[m].span for m in c} for c in kd.gold]
        resp = [{rd.mentions[m].span for m in c} for c in rd.gold] if rd else []
        scorer.add(key, resp)
    report = scorer.report()
    if args.json:
        print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    else:
        sys.stdout.write(format_table(report))
    return 0


def cmd_tune(cfg, args) -> int:
    start = tuning.GridPoint.from_alphas(cfg["tune.start_fn"], cfg["tune.start_fa"])
    surrogate = cfg["tune.surrogate"]
    if surrogate == "constant":
        score_fn = lambda p: 0.0
    elif surrogate.startswith("manhattan:"):
        try:
            fn, fa = (float(x) for x in surrogate.split(":", 1)[1].split(","))
        except ValueError:
            raise ConfigError("tune.surrogate: expected manhattan:FN,FA") from None
        score_fn = tuning.manhattan_surrogate(tuning.GridPoint.from_alphas(fn, fa))
    elif surrogate:
        raise ConfigError(f"tune.surrogate: unknown surrogate {surrogate!r}")
    else:
        base = replace(train_config(cfg), objective="heuristic")
        corpus, dev, table, init = _load_training_inputs(cfg)
        if not dev:
            raise ConfigError("tuning needs data.dev")

        def score_fn(p):
            params, log = train(base.with_costs(p.alpha_fn, p.alpha_fa), corpus, dev, table, init)
            return evaluate(params, dev).conll_average
    best, state = tuning.grid_search(score_fn, start)
    if cfg["tune.trials"]:
        atomic_write(cfg["tune.trials"], state.trials_csv())
    else:
        sys.stdout.write(state.trials_csv())
    print(f"best alpha_fn={best.alpha_fn} alpha_fa={best.alpha_fa} "
          f"alpha_wl={cfg['train.alpha_wl']} after {len(state.trials)} trials",
          file=sys.stderr if not cfg["tune.trials"] else sys.stdout)
    return 0


def cmd_analyze(cfg, args) -> int:
    _need(cfg, "data.test")
    params = _load_model(cfg)
    records = analysis.classify_errors(params, read_conll(cfg["data.test"]))
    out = cfg["analyze.out_dir"]
    has_wl = any(r.error_type.value == "WL" and r.delta_r > 0 for r in records)
    scaled = analysis.scale_to_wl(records) if has_wl else records
    if records and not has_wl:
        logger.warning("no wrong-link errors with positive cost; costs left unscaled")
    atomic_write(os.path.join(out, "errors.csv"), analysis.errors_csv(records))
    atomic_write(os.path.join(out, "costs.csv"), analysis.costs_csv(analysis.cost_statistics(records, scale=has_wl)))
    atomic_write(os.path.join(out, "density.csv"),
                 analysis.export_cost_density(scaled, cfg["analyze.bins"]))
    if cfg["analyze.figures"]:
        plotting.plot_cost_density(analysis.density_rows(scaled, cfg["analyze.bins"]),
                                   os.path.join(out, "density.png"))
        plotting.plot_error_counts(analysis.error_counts(records), os.path.join(out, "errors.png"))
    counts = analysis.error_counts(records)
    print(" ".join(f"{k}={v}" for k, v in counts.items()) + f" -> {out}")
    return 0


def cmd_predict(cfg, args) -> int:
    _need(cfg, "data.test")
    params = _load_model(cfg)
    docs = read_conll(cfg["data.test"], warn_singletons=False)
    for doc in docs:
        doc.gold = predict_clusters(params, doc)
    text = write_conll(docs)
    if cfg["predict.output"]:
        atomic_write(cfg["predict.output"], text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth(cfg, args) -> int:
    out = cfg["synth.out_dir"]
    seed = cfg["synth.seed"]
    atomic_write(os.path.join(out, "train.conll"),
                 write_conll(synthetic.make_corpus(cfg["synth.train_docs"], seed=2 * seed + 1)))
    atomic_write(os.path.join(out, "dev.conll"),
                 write_conll(synthetic.make_corpus(cfg["synth.dev_docs"], seed=2 * seed + 2)))
    atomic_write(os.path.join(out, "embeddings.txt"),
                 write_embeddings(synthetic.make_embeddings(cfg["model.d_w"], seed)))
    print(f"wrote synthetic corpus to {out}")
    return 0


COMMANDS = {
    "train": (cmd_train, "train a model and write a checkpoint plus a per-epoch CSV log"),
    "eval": (cmd_eval, "print MUC / B3 / CEAF-phi4 / average F1 of a checkpoint on data.test"),
    "tune": (cmd_tune, "grid-search the heuristic error costs"),
    "analyze": (cmd_analyze, "write error records, cost statistics and cost densities"),
    "predict": (cmd_predict, "write data.test with predicted chains"),
    "score": (cmd_score, "score a response CoNLL file against a key CoNLL file"),
    "synth": (cmd_synth, "generate the synthetic separable corpus"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corefrank", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        if name == "score":
            p.add_argument("key", help="gold CoNLL file")
            p.add_argument("response", help="system CoNLL file")
        else:
            p.add_argument("--config", metavar="FILE", help="key = value settings file")
        if name in ("eval", "score"):
            p.add_argument("--json", action="store_true", help="machine-readable report")
        if name != "score":
            group = p.add_argument_group("settings (also accepted in --config files)")
            for key, (_, default, key_help) in KEYS.items():
                group.add_argument(f"--{key}", dest=key, metavar="VALUE", default=argparse.SUPPRESS,
                                   help=f"{key_help} (default: {default})")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func = COMMANDS[args.command][0]
    try:
        cfg = resolve(args)
        return func(cfg, args)
    except ConfigError as e:
        print(f"corefrank {args.command}: {e}", file=sys.stderr)
        return 2
    except (TrainingError, CheckpointError, ConllError, OSError) as e:
        print(f"corefrank {args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
