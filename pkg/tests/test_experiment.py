import math

import numpy as np
import pytest

from rcc import graphdata as gd
from rcc.experiment import (CSV_HEADER, DatasetSpec, ExperimentSpec, MetricsRecord,
                            best_per_split, compute_metrics, current_phase, emit_results_csv,
                            emit_summary_csv, fit_method, make_split, predict_labels,
                            read_results_csv, run_noise_sweep, summarize)
from rcc.localclf import ClassifierSpec
from rcc.relfeat import AggregatorSpec
from rcc.train import TrainConfig

FAST = TrainConfig(T=4, iterations=40)


def small_spec(**kw):
    base = dict(dataset=DatasetSpec.parse("synthetic:n=60,d=4,avg_degree=3"),
                methods=("local", "ica", "gs", "rcc"), splits=2, noise_levels=(0.0, 0.5),
                train_config=FAST, lambda_grid=(1e-3, 0.1), gibbs_burn_in=5,
                gibbs_samples=30)
    base.update(kw)
    return ExperimentSpec(**base)


def test_metrics_examples():
    assert compute_metrics([0, 1, 1], [0, 1, 1], 2) == (1.0, 1.0)
    assert compute_metrics([0, 0, 0], [1, 1, 1], 2) == (0.0, 0.0)
    assert compute_metrics([1, 1, 0, 0], [1, 0, 1, 0], 2) == (0.5, 0.5)
    acc, f1 = compute_metrics([0, 2, 1], [0, 1, 1], 3)
    assert acc == pytest.approx(2 / 3) and f1 is None
    with pytest.raises(ValueError):
        compute_metrics([0, 1], [0, 1, 1], 2)


def test_dataset_spec_parsing():
    ds = DatasetSpec.parse("synthetic:n=50,signal=0.2")
    assert ds.opts == {"n": 50.0, "signal": 0.2}
    assert DatasetSpec.parse(ds.describe()) == ds
    cit = DatasetSpec.parse("citation:data/cora")
    assert cit.opts == {"content": "data/cora.content", "cites": "data/cora.cites"}
    for bad in ("banana", "synthetic:n", "images:", "citation:a,b,c"):
        with pytest.raises(ValueError):
            DatasetSpec.parse(bad)


def test_spec_validation_and_noise_kind():
    with pytest.raises(ValueError):
        ExperimentSpec(methods=("svm",))
    with pytest.raises(ValueError):
        ExperimentSpec(noise_levels=(1.0,))
    assert ExperimentSpec().resolved_noise_kind == "signal"
    assert ExperimentSpec(DatasetSpec.parse("citation:x")).resolved_noise_kind == "delete"
    assert ExperimentSpec(DatasetSpec("synthetic-images")).resolved_noise_kind == "salt_pepper"


def test_csv_header_only_and_two_lines(tmp_path):
    emit_results_csv([], tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text() == ",".join(CSV_HEADER) + "\n"
    rec = MetricsRecord("rcc", 0.5, 3, 0.01, 0.75, 2 / 3)
    emit_results_csv([rec], tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert len(lines) == 2
    assert lines[1] == "rcc,0.500000,3,0.010000,0.750000,0.666667,,,"
    with pytest.raises(OSError):
        emit_results_csv([rec], tmp_path / "missing" / "c.csv")


def test_csv_round_trip(tmp_path):
    recs = [MetricsRecord("ica", 0.2, 1, 1.0, 0.5, 0.25, 0.4, 0.1, 2.5),
            MetricsRecord("gs", 0.2, 1, 0.1, failed=True)]
    emit_results_csv(recs, tmp_path / "r.csv")
    back = read_results_csv(tmp_path / "r.csv")
    assert back[0] == recs[0]
    assert back[1].failed and math.isnan(back[1].test_acc)


def test_summary_is_mean_of_best_lambda():
    recs = []
    for split, (a, b) in enumerate([(0.6, 0.8), (0.9, 0.7)]):
        recs.append(MetricsRecord("rcc", 0.0, split, 0.1, 1.0, a))
        recs.append(MetricsRecord("rcc", 0.0, split, 1.0, 0.5, b))
    recs.append(MetricsRecord("rcc", 0.0, 2, 0.1, failed=True))
    (row,) = summarize(recs)
    assert row["splits"] == 2
    assert row["test_acc"] == pytest.approx(0.85)
    assert row["train_acc"] == pytest.approx(0.75)
    chosen = best_per_split(recs)
    assert chosen[("rcc", 0.0, 0)].lam == 1.0


def test_local_on_clean_signal():
    spec = ExperimentSpec(dataset=DatasetSpec.parse("synthetic:signal=1"), methods=("local",),
                          splits=2, train_config=TrainConfig(iterations=200),
                          lambda_grid=(1e-3,))
    _, summary = run_noise_sweep(spec)
    assert summary[0]["test_acc"] > 0.95


@pytest.mark.slow
def test_rcc_beats_local_at_weak_signal():
    spec = ExperimentSpec(methods=("local", "rcc"), noise_levels=(0.9,), splits=10,
                          train_config=TrainConfig(T=10, iterations=500), lambda_grid=(1e-3,))
    _, summary = run_noise_sweep(spec)
    acc = {s["method"]: s["test_acc"] for s in summary}
    assert acc["rcc"] - acc["local"] >= 0.10


def test_sweep_deterministic_and_parallel_equal(tmp_path):
    spec = small_spec(methods=("local", "rcc"))
    a, sa = run_noise_sweep(spec)
    b, _ = run_noise_sweep(spec)
    c, _ = run_noise_sweep(spec, workers=2)
    for name, recs in (("a", a), ("b", b), ("c", c)):
        emit_results_csv(recs, tmp_path / f"{name}.csv")
    text = (tmp_path / "a.csv").read_bytes()
    assert text == (tmp_path / "b.csv").read_bytes() == (tmp_path / "c.csv").read_bytes()
    assert len(a) == 2 * 2 * 2 * 2
    emit_summary_csv(sa, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith("method,noise,splits,")


def test_noise_applies_to_both_sides():
    spec = ExperimentSpec(DatasetSpec.parse("synthetic:n=50,d=10"), noise_kind="delete",
                          noise_levels=(0.5,))
    train, test = make_split(spec, None, 0.5, 0)
    assert train.d == test.d == 5
    imgs = [gd.generate_synthetic_image(6, 6, s) for s in range(4)]
    spec = ExperimentSpec(DatasetSpec("synthetic-images"), test_fraction=0.5)
    train, test = make_split(spec, imgs, 0.3, 0)
    assert train.n == test.n == 72 and train.num_classes == 2


def test_evaluation_never_reads_labels():
    graphs = []

    def audit(g):
        ag = gd.AuditedGraph(g, current_phase)
        graphs.append(ag)
        return ag

    run_noise_sweep(small_spec(), hook=audit)
    reads = [phase for g in graphs for phase in g.label_reads]
    assert reads and "train" in reads
    assert "evaluate" not in reads


def test_predict_labels_runs_in_evaluation_phase():
    seen = []
    g = gd.generate_synthetic_homophily_graph(30, 2, 3, 0.9, 0.5, 2.0, seed=0)
    model, _ = fit_method("rcc", g, ClassifierSpec(), AggregatorSpec(), FAST)
    audited = gd.AuditedGraph(g, lambda: seen.append(current_phase()) or current_phase())
    assert predict_labels(model, audited).shape == (30,)
    assert seen == []
    assert fit_method("gs", g, ClassifierSpec(), AggregatorSpec(), FAST)[0].method == "gs"
    with pytest.raises(ValueError):
        fit_method("svm", g, ClassifierSpec(), AggregatorSpec(), FAST)
