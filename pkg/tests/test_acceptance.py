"""Exit criteria for the package, one test per criterion.

Each test records a PASS/FAIL line; ``conftest.py`` prints them together in
the terminal summary.  Run just these with ``pytest -m acceptance``.
"""

import math
import time

import numpy as np
import pytest

from mobpat import som, synth
from mobpat.cli import dispatch
from mobpat.matrices import TimeBinning, TimeOrientedMatrix, build_all, decompose_supervised
from mobpat.predict import MODEL_KINDS, ModelSpec, RnnModel, build_flow_map, evaluate_split, rnn_gradient_check
from mobpat.predict.evaluate import predict_labels

pytestmark = pytest.mark.acceptance

RESULTS: dict[int, str] = {}


def record(number, title, ok, detail, started):
    RESULTS[number] = f"{'PASS' if ok else 'FAIL'}  [{number}] {title}: {detail} ({time.perf_counter() - started:.1f}s)"
    assert ok, RESULTS[number]


def binned(cfg, d):
    return build_all(d, TimeBinning(cfg.start, cfg.bin_seconds, cfg.n_bins), cfg.bin_seconds)


def test_worked_decomposition():
    t0 = time.perf_counter()
    row = np.array([[2, 2, 2, 3, 2, 41, 41, 2, 3, 5]])
    x, y = decompose_supervised(TimeOrientedMatrix(row, TimeBinning(0, 3600, 10)), 9)
    ok = x.tolist() == [[2, 2, 2, 3, 2, 41, 41, 2, 3]] and y.tolist() == [5]
    record(1, "decomposition", ok, f"features={x[0].tolist()} label={int(y[0])}", t0)


def test_gradient_correctness():
    t0 = time.perf_counter()
    errors = []
    for seed in range(5):
        model = RnnModel.initialize(32, 13, seed=seed)
        rng = np.random.default_rng(100 + seed)
        example = (rng.integers(0, 13, size=8), int(rng.integers(0, 13)))
        errors.append(rnn_gradient_check(model, example, epsilon=1e-4, n_checks=20, seed=seed))
    elapsed = time.perf_counter() - t0
    ok = max(errors) < 1e-3 and elapsed < 10
    record(2, "BPTT gradient check", ok, f"max rel err {max(errors):.2e} < 1e-3 over 5 seeds", t0)


def test_som_convergence():
    t0 = time.perf_counter()
    ratios, pre_ratios, purities = [], [], []
    for seed in range(5):
        x, labels = synth.make_blobs(seed=seed)
        res = som.train(som.init_grid(8, 8, x, seed), x, som.TrainSchedule(epochs=50, sigma0=4.0, seed=seed))
        # the trace holds one entry per epoch; its first entry is the starting point
        ratios.append(res.qe_trace[-1] / res.qe_trace[0])
        pre_ratios.append(res.qe_trace[-1] / res.initial_qe)
        purities.append(som.cluster_purity(som.assign_and_aggregate(res.grid, x).bmus, labels))
    elapsed = time.perf_counter() - t0
    ok = max(ratios) < 0.5 and min(purities) >= 0.95 and elapsed < 30
    detail = (
        f"final/first-epoch QE max {max(ratios):.3f} < 0.5, purity min {min(purities):.3f} >= 0.95"
        f" (final/pre-training QE max {max(pre_ratios):.3f})"
    )
    record(3, "SOM convergence", ok, detail, t0)


def test_outlier_recall():
    t0 = time.perf_counter()
    tps, fps = [], []
    for seed in range(10):
        cfg = synth.SynthConfig(n_regular=200, n_outstanding=4, seed=seed)
        d, truth = synth.generate(cfg)
        freq, spent, _, _ = binned(cfg, d)
        x = som.build_features(freq, spent)
        side = som.default_grid_side(len(x))
        res = som.train(som.init_grid(side, side, x, seed), x, som.TrainSchedule(epochs=50, sigma0=side / 2, seed=seed))
        flagged = som.detect_outstanding(som.compute_umatrix(res.grid), som.assign_and_aggregate(res.grid, x), k=2.0)
        ids = d.object_ids
        found = {ids[obj] for obj, _, _ in flagged}
        tps.append(len(found & set(truth.outstanding)))
        fps.append(len(found - set(truth.outstanding)))
    elapsed = time.perf_counter() - t0
    ok = np.mean(tps) >= 3 and np.mean(fps) <= 1 and elapsed < 60
    record(4, "outlier recall", ok, f"mean TP {np.mean(tps):.1f}/4, mean FP {np.mean(fps):.1f} over 10 seeds", t0)


def test_predictor_ordering():
    t0 = time.perf_counter()
    cfg = synth.SynthConfig(n_regular=200, days=6, seed=2)
    d, truth = synth.generate(cfg)
    _, _, tom, _ = binned(cfg, d)
    n_classes = cfg.n_locations + 1
    specs = [ModelSpec.of(kind, seed=0) for kind in MODEL_KINDS]
    report, _, test = evaluate_split(specs, tom, 5 * cfg.bins_per_day, width=8, n_classes=n_classes)
    acc = report.accuracy
    n = len(test)

    def sigma(p):
        return math.sqrt(p * (1 - p) / n)

    chance = 1 / n_classes
    bayes = synth.bayes_optimal_accuracy(truth.markov, synth.state_distribution(test.inputs[:, -1], n_classes))
    ceiling = bayes + 3 * sigma(bayes)
    ordered = acc["rnn"] >= acc["most_frequent"] >= acc["uniform"]
    chance_ok = abs(acc["uniform"] - chance) <= 3 * sigma(chance)
    over = [k for k, v in acc.items() if v > ceiling]
    elapsed = time.perf_counter() - t0
    ok = ordered and chance_ok and not over and elapsed < 120
    detail = (
        f"rnn {acc['rnn']:.3f} >= most_frequent {acc['most_frequent']:.3f} >= uniform {acc['uniform']:.3f}"
        f" (chance {chance:.3f}+-{3 * sigma(chance):.3f}); best {max(acc.values()):.3f} <= bayes+3s {ceiling:.3f}"
    )
    record(5, "predictor ordering", ok, detail, t0)


def test_flow_map_fidelity():
    t0 = time.perf_counter()
    routes = ((1, 5, 0.2), (2, 6, 0.2), (3, 7, 0.2), (4, 8, 0.2))
    hits = 0
    for seed in range(5):
        cfg = synth.SynthConfig(n_regular=200, days=6, routes=routes, seed=seed)
        d, _ = synth.generate(cfg)
        _, _, tom, _ = binned(cfg, d)
        last_day = (cfg.days - 1) * cfg.bins_per_day
        target = last_day + cfg.evening_bin + 1
        _, models, _ = evaluate_split([ModelSpec.of("rnn", seed=seed)], tom, last_day, 8, n_classes=cfg.n_locations + 1)
        window = tom.cells[:, target - 8 : target]
        predicted = predict_labels(models["rnn"], window)
        flow = build_flow_map(tom, target - 1, predictions=predicted, n_locations=cfg.n_locations)
        hits += {(a, b) for a, b, _ in flow.top_edges(4)} == {(o, dest) for o, dest, _ in routes}
    elapsed = time.perf_counter() - t0
    ok = hits >= 4 and elapsed < 120
    record(6, "flow-map fidelity", ok, f"top-4 predicted edges = planted routes on {hits}/5 seeds (need 4)", t0)


def test_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(1000):
        rows, cols, dim = (int(v) for v in rng.integers(1, 7, size=3))
        weights = rng.integers(-3, 4, size=(rows * cols, dim)).astype(float)
        x = rng.integers(-3, 4, size=dim).astype(float)
        dists = [sum((w - v) ** 2 for w, v in zip(node, x)) for node in weights.tolist()]
        expected = divmod(dists.index(min(dists)), cols)
        mismatches += som.best_matching_unit(som.SomGrid(rows, cols, weights), x) != expected
    worst = 0.0
    for _ in range(200):
        rows, cols, dim = (int(v) for v in rng.integers(1, 9, size=3))
        weights = rng.normal(size=(rows * cols, dim))
        w = weights.reshape(rows, cols, dim)
        u = som.compute_umatrix(som.SomGrid(rows, cols, weights)).values
        for r in range(rows):
            for c in range(cols):
                nbrs = [(r + a, c + b) for a, b in ((-1, 0), (1, 0), (0, -1), (0, 1)) if 0 <= r + a < rows and 0 <= c + b < cols]
                direct = sum(math.dist(w[r, c], w[p, q]) for p, q in nbrs) / len(nbrs) if nbrs else 0.0
                worst = max(worst, abs(u[r, c] - direct))
    ok = mismatches == 0 and worst < 1e-9
    record(7, "oracle equivalence", ok, f"BMU mismatches {mismatches}/1000, U-matrix max diff {worst:.1e}", t0)


def test_pipeline_determinism(tmp_path, monkeypatch):
    t0 = time.perf_counter()
    monkeypatch.setenv("MOBPAT_LOG", "quiet")
    cfg = tmp_path / "pop.cfg"
    cfg.write_text("n_regular = 60\nn_outstanding = 2\ndays = 5\noutstanding_active_days = 4\nroutes = 1>5:0.2\n")
    work = tmp_path / "run"
    data = ["--in", str(work / "d.csv"), "--locations", str(work / "d.locations.csv"), "--session-timeout", "3600"]
    steps = [
        ["synth", "--config", str(cfg), "--seed", "3", "--out", str(work / "d.csv")],
        ["cluster", *data, "--seed", "3", "--out-dir", str(work / "cluster")],
        ["predict", *data, "--seed", "3", "--models", "rnn,knn,most_frequent,uniform", "--epochs", "5",
         "--split-time", str(1430438400 + 4 * 86400), "--out-dir", str(work / "predict")],
        ["render", "--kind", "flowmap", "--in", str(work / "predict" / "flow_predicted.json"),
         "--locations", str(work / "d.locations.csv"), "--out", str(work / "flow.svg")],
    ]

    def run():
        for argv in steps:
            assert dispatch(argv) == 0, argv
        out = {str(p.relative_to(work)): p.read_bytes() for p in sorted(work.rglob("*")) if p.is_file()}
        for p in sorted(work.rglob("*"), reverse=True):
            p.unlink() if p.is_file() else p.rmdir()
        return out

    first, second = run(), run()
    differing = sorted(k for k in first if first[k] != second.get(k))
    kinds = sorted({name.rsplit(".", 1)[-1] for name in first})
    ok = first.keys() == second.keys() and not differing and {"csv", "json", "svg"} <= set(kinds)
    record(8, "pipeline determinism", ok, f"{len(first)} files ({', '.join(kinds)}), {len(differing)} differ", t0)
