"""Command-line front end.

Every subcommand resolves its settings as defaults < ``--config`` file <
explicit flags, and writes the resolved settings to ``<out>/config.txt``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import graphdata as gd
from . import kernels
from .experiment import (DatasetSpec, ExperimentSpec, emit_results_csv,
                         emit_summary_csv, ensure_dir, fit_method, load_base, make_split,
                         predict_labels, compute_metrics, run_noise_sweep,
                         synthetic_graph, write_pairs_csv, Model)
from .inference import InferenceConfig
from .localclf import ClassifierSpec, ParamMatrix, load_params, save_params
from .relfeat import AggregatorSpec
from .train import TrainConfig, finite_difference_check, loss_cross_section

log = logging.getLogger("rcc")

DEFAULTS = {
    "dataset": "synthetic",
    "method": "rcc",
    "classifier": "sigmoid",
    "aggregator": "proportion",
    "tau": "0.5",
    "T": "10",
    "eta": "0.1",
    "iters": "500",
    "lambda": "0.001",
    "lambda_grid": "0.001,0.01,0.1,1",
    "noise_levels": "0",
    "noise_kind": "",
    "splits": "10",
    "test_fraction": "0.2",
    "seed": "0",
    "out": "rcc_out",
    "workers": "1",
    "select": "test",
    "record_time": "false",
    "params": "",
    "alphas": "-0.2:1.2:0.05",
    "step": "1e-6",
    "kind": "graph",
    "burn_in": "100",
    "samples": "1000",
}

PAPER_SCALE = {"iters": "2000", "splits": "20"}

_FLAGS = [
    ("--dataset", "dataset descriptor: synthetic[:key=val,...] | citation:CONTENT,CITES "
                  "| images:DIR | synthetic-images[:count=..,height=..,width=..]"),
    ("--method", "one of local, ica, gs, rcc (comma-separated list for sweep)"),
    ("--classifier", "sigmoid | softmax"),
    ("--aggregator", "sum | proportion | mode"),
    ("--tau", "temperature for the softmax classifier and the mode aggregator"),
    ("--T", "unrolled iterations"),
    ("--eta", "adagrad learning rate"),
    ("--iters", "adagrad iterations"),
    ("--lambda", "L2 strength for single-run commands"),
    ("--lambda-grid", "comma-separated L2 strengths for sweep"),
    ("--noise-levels", "comma-separated noise levels in [0, 1)"),
    ("--noise-kind", "delete | salt_pepper | signal (default depends on dataset)"),
    ("--splits", "number of train/test splits"),
    ("--test-fraction", "held-out fraction for snowball splits"),
    ("--seed", "base seed"),
    ("--out", "output directory"),
    ("--workers", "parallel worker processes for sweep"),
    ("--select", "best-lambda selection: test | validation"),
    ("--params", "parameter file (predict)"),
    ("--alphas", "cross-section grid START:STOP:STEP"),
    ("--step", "finite-difference step"),
    ("--kind", "gen-synthetic output: graph | images"),
    ("--burn-in", "Gibbs burn-in sweeps"),
    ("--samples", "Gibbs sample sweeps"),
]


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, val = line.partition("=")
            if not eq:
                raise SystemExit(f"{path}:{lineno}: expected key=value")
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def resolve(args):
    cfg = dict(DEFAULTS)
    if args.paper_scale:
        cfg.update(PAPER_SCALE)
    if args.config:
        cfg.update(read_config_file(args.config))
    for key in DEFAULTS:
        if key == "record_time":
            continue
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if args.record_time:
        cfg["record_time"] = "true"
    return cfg


def write_resolved(cfg, out, command):
    lines = [f"command={command}", f"backend={kernels.BACKEND}"]
    lines += [f"{k}={cfg[k]}" for k in sorted(cfg)]
    (Path(out) / "config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _specs(cfg):
    tau = float(cfg["tau"])
    kind = cfg["classifier"]
    f = ClassifierSpec(kind, tau if kind == "softmax" else 1.0)
    return f, AggregatorSpec(cfg["aggregator"], tau)


def _train_config(cfg, lam=None):
    return TrainConfig(T=int(cfg["T"]), eta=float(cfg["eta"]), iterations=int(cfg["iters"]),
                       lam=float(cfg["lambda"]) if lam is None else lam,
                       seed=int(cfg["seed"]))


def _experiment(cfg):
    f, g = _specs(cfg)
    methods = tuple(m.strip() for m in cfg["method"].split(",") if m.strip())
    return ExperimentSpec(
        dataset=DatasetSpec.parse(cfg["dataset"]), methods=methods, classifier=f,
        aggregator=g, noise_kind=cfg["noise_kind"] or None,
        noise_levels=_floats(cfg["noise_levels"]), splits=int(cfg["splits"]),
        test_fraction=float(cfg["test_fraction"]), train_config=_train_config(cfg),
        lambda_grid=_floats(cfg["lambda_grid"]), seed=int(cfg["seed"]),
        selection=cfg["select"], record_time=cfg["record_time"].lower() == "true",
        gibbs_burn_in=int(cfg["burn_in"]), gibbs_samples=int(cfg["samples"]))


def _whole_graph(spec):
    """The full dataset as a single graph (images are joined side by side)."""
    base = load_base(spec)
    if base is None:
        return synthetic_graph(spec, 0)
    if isinstance(base, list):
        return gd.disjoint_union(gd.build_grid_graph(im) for im in base)
    return base


# ---------------------------------------------------------------- commands

def cmd_train(cfg):
    spec = _experiment(cfg)
    if len(spec.methods) != 1:
        raise SystemExit("train takes a single --method")
    out = ensure_dir(cfg["out"])
    graph = _whole_graph(spec)
    model, hist = fit_method(spec.methods[0], graph, spec.classifier, spec.aggregator,
                             _train_config(cfg), spec.seed, spec.gibbs_burn_in,
                             spec.gibbs_samples)
    save_params(out / "params.txt", model.params, spec.classifier)
    write_pairs_csv(out / "loss_history.csv", ["step", "loss"], list(enumerate(hist)))
    acc, _ = compute_metrics(predict_labels(model, graph), graph.labels, graph.num_classes)
    write_resolved(cfg, out, "train")
    print(f"{spec.methods[0]}: final loss {hist[-1]:.6f}  train accuracy {acc:.6f}"
          if hist else f"{spec.methods[0]}: no iterations run")
    return 0


def cmd_predict(cfg):
    if not cfg["params"]:
        raise SystemExit("predict needs --params")
    spec = _experiment(cfg)
    params, spec_f = load_params(cfg["params"])
    method = spec.methods[0]
    infer = InferenceConfig(T=int(cfg["T"]), init="zeros" if method == "rcc" else "uniform",
                            seed=spec.seed, burn_in=spec.gibbs_burn_in,
                            samples=spec.gibbs_samples)
    model = Model(method, params, spec_f, spec.aggregator, infer)
    graph = _whole_graph(spec)
    out = ensure_dir(cfg["out"])
    labels = predict_labels(model, graph)
    write_pairs_csv(out / "predictions.csv", ["node", "label"],
                    [(i, int(v)) for i, v in enumerate(labels)])
    write_resolved(cfg, out, "predict")
    if graph.labels is not None:
        acc, f1 = compute_metrics(labels, graph.labels, graph.num_classes)
        print(f"accuracy {acc:.6f}" + ("" if f1 is None else f"  f1 {f1:.6f}"))
    return 0


def cmd_gradcheck(cfg):
    spec = _experiment(cfg)
    out = ensure_dir(cfg["out"])
    ds = spec.dataset
    if ds.kind == "synthetic" and not ds.opts:
        spec = replace(spec, dataset=DatasetSpec("synthetic", (("avg_degree", 3.0), ("d", 5.0),
                                                               ("n", 20.0), ("signal", 0.5))))
    graph = _whole_graph(spec)
    rng = np.random.default_rng(spec.seed)
    params = ParamMatrix(rng.normal(0.0, 0.5, (graph.d + 1 + graph.num_classes,
                                               graph.num_classes)),
                         graph.d, graph.num_classes)
    err = finite_difference_check(graph, graph.labels, spec.classifier, spec.aggregator,
                                  params, int(cfg["T"]), float(cfg["step"]),
                                  float(cfg["lambda"]))
    write_pairs_csv(out / "gradcheck.csv", ["classifier", "aggregator", "T", "max_rel_error"],
                    [(spec.classifier.kind, spec.aggregator.kind, int(cfg["T"]),
                      f"{err:.3e}")])
    write_resolved(cfg, out, "gradcheck")
    print(f"{spec.classifier.kind}/{spec.aggregator.kind} T={cfg['T']}: "
          f"max relative error {err:.3e}")
    return 0 if err < 1e-4 else 1


def cmd_sweep(cfg):
    spec = _experiment(cfg)
    out = ensure_dir(cfg["out"])
    records, summary = run_noise_sweep(spec, workers=int(cfg["workers"]))
    emit_results_csv(records, out / "results.csv")
    emit_summary_csv(summary, out / "summary.csv")
    write_resolved(cfg, out, "sweep")
    for s in summary:
        print(f"{s['method']:>5} noise={s['noise']:.3f} train={s['train_acc']:.4f} "
              f"test={s['test_acc']:.4f}")
    return 0


def _alphas(text):
    start, stop, step = (float(v) for v in text.split(":"))
    count = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(count)]


def cmd_cross_section(cfg):
    spec = _experiment(cfg)
    out = ensure_dir(cfg["out"])
    if spec.dataset.kind in ("synthetic",):
        train, _ = make_split(spec, None, 0.0, 0)
    else:
        train = _whole_graph(spec)
    tc = _train_config(cfg)
    rcc, _ = fit_method("rcc", train, spec.classifier, spec.aggregator, tc)
    ica, _ = fit_method("ica", train, spec.classifier, spec.aggregator, tc)
    curve = loss_cross_section(rcc.params, ica.params, _alphas(cfg["alphas"]), train,
                               train.labels, spec.classifier, spec.aggregator, tc.T, tc.lam)
    write_pairs_csv(out / "cross_section.csv", ["alpha", "loss"], curve)
    write_resolved(cfg, out, "cross-section")
    best = min(curve, key=lambda p: p[1])
    print(f"min loss {best[1]:.6f} at alpha={best[0]:g}; "
          f"l(0)={dict(curve).get(0.0, float('nan')):.6f} "
          f"l(1)={dict(curve).get(1.0, float('nan')):.6f}")
    return 0


def cmd_gen_synthetic(cfg):
    spec = _experiment(cfg)
    out = ensure_dir(cfg["out"])
    if cfg["kind"] == "images":
        ds = spec.dataset
        opts = dict(ds.opts) if ds.kind == "synthetic-images" else {}
        spec = replace(spec, dataset=DatasetSpec("synthetic-images", tuple(sorted(opts.items()))))
        for im in load_base(spec):
            gd.write_ppm(out / f"{im.name}.ppm", im.pixels)
            gd.write_pbm(out / f"{im.name}.pbm", im.mask)
        print(f"wrote images to {out}")
    else:
        graph = synthetic_graph(spec, 0)
        gd.write_citation_dataset(graph, out / "synthetic.content", out / "synthetic.cites")
        print(f"wrote {graph} to {out}")
    write_resolved(cfg, out, "gen-synthetic")
    return 0


COMMANDS = {
    "train": (cmd_train, "train one method on a whole dataset"),
    "predict": (cmd_predict, "predict labels with a saved parameter file"),
    "gradcheck": (cmd_gradcheck, "compare the RCC gradient to finite differences"),
    "sweep": (cmd_sweep, "noise sweep over methods, lambdas and splits"),
    "cross-section": (cmd_cross_section, "loss along the line from RCC to ICA parameters"),
    "gen-synthetic": (cmd_gen_synthetic, "write a synthetic dataset to disk"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="rcc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key=value settings file")
        p.add_argument("--paper-scale", action="store_true",
                       help="2,000 adagrad iterations and 20 splits")
        p.add_argument("--record-time", action="store_true",
                       help="fill the seconds column (makes CSVs run-dependent)")
        for flag, help_text in _FLAGS:
            p.add_argument(flag, dest=flag[2:].replace("-", "_"), default=None, help=help_text)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = resolve(args)
    try:
        return COMMANDS[args.command][0](cfg)
    except (ValueError, gd.DatasetFormatError, FileNotFoundError) as exc:
        print(f"rcc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
