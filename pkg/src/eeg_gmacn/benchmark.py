"""Planted-electrode benchmark runs and the two ablation sweeps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SyntheticSpec, generate, split
from .evaluation import evaluate
from .explain import explain_epochs
from .model import GmacnConfig, build_model, calibrate, count_cost, train
from .montage import builtin_64
from .spatial_graph import build_threshold, build_topk

__all__ = ["BenchmarkRun", "run_planted", "recovery_scores", "sweep"]


@dataclass
class BenchmarkRun:
    graph: object
    spec: SyntheticSpec
    train_set: object
    test_set: object
    report: object  # TrainingReport
    evaluation: object  # EvaluationReport on the test split

    @property
    def model(self):
        return self.report.model


def run_planted(
    *,
    seed=0,
    attention=True,
    strategy="threshold",
    parameter=20.0,
    data_seed=7,
    classes=4,
    epochs_per_class=100,
    planted_per_class=8,
    signal_gain=5.0,
    noise_sigma=1.0,
    train_fraction=0.5,
    epochs=300,
    learning_rate=0.05,
    montage=None,
    **config_overrides,
) -> BenchmarkRun:
    """Generate, split, build, calibrate, train and evaluate one configuration."""
    montage = montage or builtin_64()
    graph = (build_threshold(montage, parameter) if strategy == "threshold"
             else build_topk(montage, int(parameter)))
    spec = SyntheticSpec(montage, classes=classes, epochs_per_class=epochs_per_class,
                         planted_per_class=planted_per_class, signal_gain=signal_gain,
                         noise_sigma=noise_sigma, seed=data_seed)
    data = generate(spec)
    train_set, test_set = split(data, train_fraction, seed=seed)
    cfg = GmacnConfig(classes=classes, epochs=epochs, learning_rate=learning_rate,
                      seed=seed, attention=attention, **config_overrides)
    model = calibrate(build_model(cfg, graph, data.shape[1]), train_set.features)
    report = train(model, train_set, cfg)
    return BenchmarkRun(graph, spec, train_set, test_set, report,
                        evaluate(report.model, test_set))


def recovery_scores(run: BenchmarkRun, top=8, hits=5):
    """Fractions of test epochs where planted electrodes win under IEGW.

    Returns ``(mean_rate, topk_rate)``: the share of epochs whose mean IEGW
    over the predicted class's planted electrodes beats the mean over the
    rest, and the share whose top-``top`` electrodes include at least
    ``hits`` planted ones.
    """
    reports = explain_epochs(run.model, run.test_set.features)
    n = len(run.spec.montage)
    mean_wins = top_wins = 0
    for r in reports:
        planted = np.array(run.spec.planted[r.target_class])
        mask = np.zeros(n, dtype=bool)
        mask[planted] = True
        mean_wins += r.iegw[mask].mean() > r.iegw[~mask].mean()
        top_wins += len(set(r.ranking()[:top].tolist()) & set(planted.tolist())) >= hits
    return mean_wins / len(reports), top_wins / len(reports)


def sweep(seeds=(0,), thresholds=(10, 20, 30), topks=(3, 5, 7), epochs=300, **kw):
    """Rows mirroring the two ablation tables.

    Graph-strategy rows use the plain GCN stack (no attention); the attention
    rows use threshold 20 with and without the attention branch.
    """
    rows = []

    def row(kind, param, attention, seed):
        strategy = "topk" if kind == "k" else "threshold"
        run = run_planted(seed=seed, attention=attention, strategy=strategy,
                          parameter=param, epochs=epochs, **kw)
        e = run.evaluation
        flops, params = count_cost(run.model)
        return {"table": "strategy" if kind != "ma" else "attention",
                "strategy": strategy, "parameter": param, "attention": attention,
                "seed": seed, "acc": e.accuracy, "pre": e.precision, "rec": e.recall,
                "f1": e.f1, "ece": e.ece, "flops": flops, "params": params}

    for seed in seeds:
        for t in thresholds:
            rows.append(row("t", t, False, seed))
        for k in topks:
            rows.append(row("k", k, False, seed))
        for attention in (False, True):
            rows.append(row("ma", 20, attention, seed))
    return rows
