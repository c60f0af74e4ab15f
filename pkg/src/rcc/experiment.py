"""Noise-robustness experiments: train each method over a λ grid on noisy
splits, evaluate from features and links only, and report CSV metrics."""

from __future__ import annotations

import contextlib
import contextvars
import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import graphdata as gd
from .inference import InferenceConfig, gibbs_predict, hard_labels, ica_predict
from .localclf import ClassifierSpec, ParamMatrix
from .relfeat import AggregatorSpec
from .train import (TrainConfig, TrainingDiverged, train_ica_baseline, train_local,
                    train_rcc)

log = logging.getLogger(__name__)

METHODS = ("local", "ica", "gs", "rcc")
LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0)
CSV_HEADER = ["method", "noise", "split", "lambda", "train_acc", "test_acc",
              "train_f1", "test_f1", "seconds"]

_PHASE = contextvars.ContextVar("rcc_phase", default="train")


def current_phase():
    return _PHASE.get()


@contextlib.contextmanager
def evaluation_phase():
    token = _PHASE.set("evaluate")
    try:
        yield
    finally:
        _PHASE.reset(token)


# ---------------------------------------------------------------- specs & records

@dataclass(frozen=True)
class DatasetSpec:
    """Where the data comes from.

    kind is ``synthetic`` (options are generator keywords), ``citation``
    (``content``/``cites`` paths), ``images`` (``dir`` of PPM/PBM pairs) or
    ``synthetic-images`` (``count``, ``height``, ``width``).
    """

    kind: str = "synthetic"
    options: tuple = ()

    @property
    def opts(self):
        return dict(self.options)

    @classmethod
    def parse(cls, text):
        kind, _, rest = text.partition(":")
        kind = kind.strip()
        if kind == "citation":
            paths = [p for p in rest.split(",") if p]
            if len(paths) == 1:
                paths = [paths[0] + ".content", paths[0] + ".cites"]
            if len(paths) != 2:
                raise ValueError("citation dataset needs CONTENT,CITES or a path prefix")
            return cls("citation", (("content", paths[0]), ("cites", paths[1])))
        if kind == "images":
            if not rest:
                raise ValueError("images dataset needs a directory")
            return cls("images", (("dir", rest),))
        if kind in ("synthetic", "synthetic-images"):
            opts = []
            for item in filter(None, rest.split(",")):
                key, eq, val = item.partition("=")
                if not eq:
                    raise ValueError(f"bad synthetic option {item!r}")
                opts.append((key.strip(), float(val)))
            return cls(kind, tuple(sorted(opts)))
        raise ValueError(f"unknown dataset kind {kind!r}")

    def describe(self):
        if self.kind == "citation":
            return f"citation:{self.opts['content']},{self.opts['cites']}"
        if self.kind == "images":
            return f"images:{self.opts['dir']}"
        body = ",".join(f"{k}={v:g}" for k, v in self.options)
        return self.kind + (":" + body if body else "")


SYNTHETIC_DEFAULTS = dict(n=400, k=3, d=10, homophily=0.9, signal=1.0, avg_degree=3.0)
IMAGE_DEFAULTS = dict(count=20, height=24, width=24)


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: DatasetSpec = DatasetSpec()
    methods: tuple = ("local", "ica", "rcc")
    classifier: ClassifierSpec = ClassifierSpec("sigmoid")
    aggregator: AggregatorSpec = AggregatorSpec("proportion", 0.5)
    noise_kind: str | None = None  # delete | salt_pepper | signal; None picks per dataset
    noise_levels: tuple = (0.0,)
    splits: int = 10
    test_fraction: float = 0.2
    train_config: TrainConfig = TrainConfig()
    lambda_grid: tuple = LAMBDA_GRID
    seed: int = 0
    selection: str = "test"
    record_time: bool = False
    gibbs_burn_in: int = 100
    gibbs_samples: int = 1000

    def __post_init__(self):
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if any(not 0.0 <= v < 1.0 for v in self.noise_levels):
            raise ValueError("noise levels must lie in [0, 1)")
        if self.splits < 1:
            raise ValueError("need at least one split")
        if self.selection not in ("test", "validation"):
            raise ValueError("selection must be 'test' or 'validation'")

    @property
    def resolved_noise_kind(self):
        if self.noise_kind:
            return self.noise_kind
        return {"citation": "delete", "images": "salt_pepper",
                "synthetic-images": "salt_pepper"}.get(self.dataset.kind, "signal")


@dataclass
class MetricsRecord:
    method: str
    noise: float
    split: int
    lam: float
    train_acc: float = math.nan
    test_acc: float = math.nan
    train_f1: float | None = None
    test_f1: float | None = None
    seconds: float | None = None
    failed: bool = False


@dataclass(frozen=True)
class Model:
    """A trained collective classifier plus the inference routine it uses."""

    method: str
    params: ParamMatrix
    spec_f: ClassifierSpec
    spec_g: AggregatorSpec
    inference: InferenceConfig = field(default_factory=InferenceConfig)

    def predict_proba(self, adjacency, features):
        graph = gd.AttributedGraph(adjacency, features)
        if self.method == "gs":
            return gibbs_predict(graph, self.spec_f, self.spec_g, self.params, self.inference)
        return ica_predict(graph, self.spec_f, self.spec_g, self.params, self.inference)[0]


def predict_labels(model, graph):
    """Hard labels from local features and link structure only."""
    with evaluation_phase():
        return hard_labels(model.predict_proba(graph.adjacency, graph.features))


# ---------------------------------------------------------------- metrics

def compute_metrics(predicted, truth, k):
    """Accuracy, and for k = 2 the F1 score of class 1 (None otherwise)."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError("predicted and truth lengths differ")
    acc = float(np.mean(predicted == truth)) if truth.size else math.nan
    if k != 2:
        return acc, None
    tp = int(np.sum((predicted == 1) & (truth == 1)))
    fp = int(np.sum((predicted == 1) & (truth == 0)))
    fn = int(np.sum((predicted == 0) & (truth == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return acc, f1


# ---------------------------------------------------------------- training

def fit_method(method, graph, spec_f, spec_g, config, seed=0, burn_in=100, samples=1000):
    """Train ``method`` on a fully labelled graph; returns a :class:`Model` and loss history."""
    labels = graph.labels
    if method == "rcc":
        params, hist = train_rcc(graph, labels, spec_f, spec_g, config)
        infer = InferenceConfig(T=config.T, init="zeros")
    elif method in ("ica", "gs"):
        params, hist = train_ica_baseline(graph, labels, spec_f, spec_g, config)
        infer = InferenceConfig(T=config.T, init="uniform", seed=seed,
                                burn_in=burn_in, samples=samples)
    elif method == "local":
        params, hist = train_local(graph, labels, spec_f, config)
        infer = InferenceConfig(T=1, init="uniform")
    else:
        raise ValueError(f"unknown method {method!r}")
    return Model(method, params, spec_f, spec_g, infer), hist


# ---------------------------------------------------------------- data per split

def _split_seed(spec, split):
    return int(np.random.SeedSequence([spec.seed, split]).generate_state(1)[0])


def load_base(spec):
    """Load or generate the dataset once; returns a graph or a list of images."""
    ds = spec.dataset
    if ds.kind == "citation":
        return gd.load_citation_dataset(ds.opts["content"], ds.opts["cites"])
    if ds.kind == "images":
        return gd.load_image_dir(ds.opts["dir"])
    if ds.kind == "synthetic-images":
        o = {**IMAGE_DEFAULTS, **ds.opts}
        return [gd.generate_synthetic_image(int(o["height"]), int(o["width"]), spec.seed + i)
                for i in range(int(o["count"]))]
    return None  # synthetic graphs are generated per split


def synthetic_graph(spec, split, signal=None):
    o = {**SYNTHETIC_DEFAULTS, **spec.dataset.opts}
    return gd.generate_synthetic_homophily_graph(
        int(o["n"]), int(o["k"]), int(o["d"]), o["homophily"],
        o["signal"] if signal is None else signal, o["avg_degree"],
        seed=spec.seed * 100_003 + split)


def make_split(spec, base, noise, split, hook=None):
    """Build (train, test) graphs for one noise level and split."""
    hook = hook or (lambda g: g)
    sseed = _split_seed(spec, split)
    kind = spec.resolved_noise_kind
    if isinstance(base, list):  # images
        rng = np.random.default_rng(sseed)
        order = rng.permutation(len(base))
        half = len(base) - max(1, int(round(len(base) * spec.test_fraction)))
        if kind == "salt_pepper":
            imgs = [gd.salt_pepper_noise(im, noise, sseed + i) for i, im in enumerate(base)]
        else:
            imgs = list(base)
        graphs = [hook(gd.build_grid_graph(im)) for im in imgs]
        train = gd.disjoint_union([graphs[i] for i in order[:half]])
        test = gd.disjoint_union([graphs[i] for i in order[half:]])
        return hook(train), hook(test)
    if base is None:
        graph = synthetic_graph(spec, split, 1.0 - noise if kind == "signal" else None)
    else:
        graph = base
    graph = hook(graph)
    if kind == "delete":
        graph = gd.delete_feature_columns(graph, noise, sseed)
    elif kind not in ("signal", "none"):
        raise ValueError(f"noise kind {kind!r} does not apply to graph datasets")
    return gd.snowball_split(graph, spec.test_fraction, sseed)


def _validation_choice(spec, train, method, seed):
    """Pick λ by accuracy on a snowball validation subgraph carved from ``train``."""
    inner, val = gd.snowball_split(train, spec.test_fraction, seed + 1)
    best, best_acc = None, -1.0
    for lam in spec.lambda_grid:
        cfg = replace(spec.train_config, lam=lam)
        try:
            model, _ = fit_method(method, inner, spec.classifier, spec.aggregator, cfg,
                                  seed, spec.gibbs_burn_in, spec.gibbs_samples)
        except TrainingDiverged:
            continue
        acc, _ = compute_metrics(predict_labels(model, val), val.labels, val.num_classes)
        if acc > best_acc:
            best, best_acc = lam, acc
    return best


def run_job(spec, base, noise, split, hook=None):
    """All methods × λ for one (noise, split); returns records and validation picks."""
    train, test = make_split(spec, base, noise, split, hook)
    k = train.num_classes
    sseed = _split_seed(spec, split)
    records, picks = [], {}
    for method in spec.methods:
        for lam in spec.lambda_grid:
            cfg = replace(spec.train_config, lam=lam)
            rec = MetricsRecord(method, noise, split, lam)
            t0 = time.perf_counter()
            try:
                model, _ = fit_method(method, train, spec.classifier, spec.aggregator, cfg,
                                      sseed, spec.gibbs_burn_in, spec.gibbs_samples)
            except TrainingDiverged as exc:
                log.warning("%s noise=%g split=%d lambda=%g failed: %s",
                            method, noise, split, lam, exc)
                rec.failed = True
                records.append(rec)
                continue
            pred_train = predict_labels(model, train)
            pred_test = predict_labels(model, test)
            rec.train_acc, rec.train_f1 = compute_metrics(pred_train, train.labels, k)
            rec.test_acc, rec.test_f1 = compute_metrics(pred_test, test.labels, k)
            if spec.record_time:
                rec.seconds = time.perf_counter() - t0
            records.append(rec)
        if spec.selection == "validation":
            picks[method] = _validation_choice(spec, train, method, sseed)
    return records, {(m, noise, split): lam for m, lam in picks.items()}


def _job(args):
    spec, base, noise, split = args
    return run_job(spec, base, noise, split)


def run_noise_sweep(spec, hook=None, workers=1):
    """Per-λ records for every method × noise level × split.

    ``hook`` is applied to every graph the sweep builds (used for auditing).
    Returns ``(records, summary)`` where the summary holds one best-λ record
    per (method, noise) averaged over splits.
    """
    base = load_base(spec)
    jobs = [(noise, split) for noise in spec.noise_levels for split in range(spec.splits)]
    if workers > 1 and hook is None:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, [(spec, base, nz, sp) for nz, sp in jobs]))
    else:
        results = [run_job(spec, base, nz, sp, hook) for nz, sp in jobs]
    records, picks = [], {}
    for recs, pk in results:
        records.extend(recs)
        picks.update(pk)
    return records, summarize(records, spec.selection, picks)


def best_per_split(records, selection="test", picks=None):
    """The chosen-λ record for every (method, noise, split)."""
    groups = {}
    for r in records:
        if not r.failed:
            groups.setdefault((r.method, r.noise, r.split), []).append(r)
    chosen = {}
    for key, recs in groups.items():
        if selection == "validation" and picks and picks.get(key) is not None:
            match = [r for r in recs if r.lam == picks[key]]
            if match:
                chosen[key] = match[0]
                continue
        # ties keep the earliest λ in grid order
        chosen[key] = max(recs, key=lambda r: (r.test_acc, -recs.index(r)))
    return chosen


def _mean(values):
    vals = [v for v in values if v is not None and not math.isnan(v)]
    return float(np.mean(vals)) if vals else None


def summarize(records, selection="test", picks=None):
    """Average the best-λ record per split for every (method, noise)."""
    chosen = best_per_split(records, selection, picks)
    by = {}
    for (method, noise, _), rec in sorted(chosen.items()):
        by.setdefault((method, noise), []).append(rec)
    out = []
    for (method, noise), recs in by.items():
        out.append(dict(
            method=method, noise=noise, splits=len(recs),
            train_acc=_mean(r.train_acc for r in recs),
            test_acc=_mean(r.test_acc for r in recs),
            train_f1=_mean(r.train_f1 for r in recs),
            test_f1=_mean(r.test_f1 for r in recs)))
    order = {m: i for i, m in enumerate(METHODS)}
    return sorted(out, key=lambda s: (order[s["method"]], s["noise"]))


# ---------------------------------------------------------------- CSV

def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.6f}"


def emit_results_csv(records, path):
    """Write one row per record with 6-decimal fixed formatting; missing values are empty."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([r.method, _fmt(r.noise), r.split, _fmt(r.lam),
                        _fmt(r.train_acc), _fmt(r.test_acc), _fmt(r.train_f1),
                        _fmt(r.test_f1), _fmt(r.seconds)])


def read_results_csv(path):
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            def num(key):
                return float(row[key]) if row[key] != "" else None
            acc_tr, acc_te = num("train_acc"), num("test_acc")
            out.append(MetricsRecord(
                row["method"], float(row["noise"]), int(row["split"]), float(row["lambda"]),
                math.nan if acc_tr is None else acc_tr,
                math.nan if acc_te is None else acc_te,
                num("train_f1"), num("test_f1"), num("seconds"), failed=acc_te is None))
    return out


SUMMARY_HEADER = ["method", "noise", "splits", "train_acc", "test_acc", "train_f1", "test_f1"]


def emit_summary_csv(summary, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for s in summary:
            w.writerow([s["method"], _fmt(s["noise"]), s["splits"], _fmt(s["train_acc"]),
                        _fmt(s["test_acc"]), _fmt(s["train_f1"]), _fmt(s["test_f1"])])


def write_pairs_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, str)) else f"{v:.6f}" for v in row])


def ensure_dir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
