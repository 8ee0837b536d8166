# SPDX-License-Identifier: Apache-2.0
import math

import pytest

import flowrvae


def test_closed_forms():
    assert flowrvae.anomaly_score([0.5] * 25, [0.5] * 25) == pytest.approx(25 * math.log(2))
    assert flowrvae.anomaly_score([1, 0], [0.9, 0.2]) == pytest.approx(0.3285, abs=1e-4)
    assert flowrvae.roc_auc([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0]) == 0.75
    assert flowrvae.pr_auc([0.9, 0.8], [0, 1]) == 0.5
    r = flowrvae.prf([1, 1, 1, 1], [1, 0, 1, 0])
    assert (r["precision"], r["recall"]) == (0.5, 1.0)
    assert flowrvae.pdf("beta", [1, 1], 0, 1, 0.3) == pytest.approx(1.0)


def test_kfold_partition():
    folds = flowrvae.kfold_split(10, 5, seed=3)
    assert len(folds) == 5
    seen = sorted(i for _, val in folds for i in val)
    assert seen == list(range(10))


def test_errors_map_to_python():
    with pytest.raises(ValueError):
        flowrvae.roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(flowrvae.DataError):
        flowrvae.fit_family("gamma", [1.0] * 200)
    with pytest.raises(flowrvae.NumericError):
        flowrvae.anomaly_score([float("nan")], [0.5])


def test_gamma_fit():
    import random

    rng = random.Random(5)
    x = [rng.gammavariate(2.0, 1.0) for _ in range(3000)]
    fit = flowrvae.fit_family("gamma", x)
    assert fit["family"] == "gamma"
    assert 1.7 < fit["params"][0] < 2.3


def test_pipeline(tmp_path):
    d = str(tmp_path) + "/"
    flowrvae.synth(d + "train.binetflow", seed=1, windows=40)
    flowrvae.synth(d + "test.binetflow", seed=2, windows=20, subnet=1)
    assert flowrvae.preprocess([d + "train.binetflow"], d + "train.csv") > 0
    summary = flowrvae.train(d + "train.csv", d + "model.json",
                             {"epochs": 5, "hidden": 8, "latent": 4, "batch_size": 8, "seed": 1})
    assert summary["arch"] == "rvae"
    assert flowrvae.score(d + "model.json", d + "train.csv", d + "scores.csv") > 0
    fits = flowrvae.fit_detector(d + "scores.csv", d + "detector.json", min_samples=20)
    assert fits["normal"]["best"]["family"] in {"gamma", "genlogistic", "foldcauchy", "mielke", "beta"}
    n = flowrvae.detect(d + "model.json", d + "detector.json", [d + "test.binetflow"], d + "decisions.csv")
    records = flowrvae.stream(d + "model.json", d + "detector.json", [d + "test.binetflow"])
    assert len(records) == n
    report = flowrvae.evaluate(d + "decisions.csv")
    assert 0.0 <= report["f1"] <= 1.0
    assert report["n_windows_evaluated"] == n
