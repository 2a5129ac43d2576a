import json

import numpy as np
import pytest

from nested_metaseg import meta
from nested_metaseg.errors import DegenerateError, ValidationError
from nested_metaseg.metrics import MetricsTable
from nested_metaseg.rng import rng_for

from conftest import auroc_pairs, newton_logistic, qr_least_squares


def make_table(features: np.ndarray, target: np.ndarray, names=None) -> MetricsTable:
    n, d = features.shape
    names = names or [f"f{i}" for i in range(d)]
    return MetricsTable(
        feature_names=list(names),
        image_ids=[f"i{k}" for k in range(n)],
        segment_ids=np.arange(1, n + 1),
        predicted_class=np.zeros(n, dtype=np.int64),
        features=features.astype(np.float64),
        has_ground_truth=np.ones(n, dtype=bool),
        iou=target.astype(np.float64),
        iou_adj=target.astype(np.float64),
    )


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def test_split_sizes_and_partition():
    splits = meta.split_resample(4, runs=3, seed=1)
    assert len(splits) == 3
    for train, val in splits:
        assert len(train) == 2 and len(val) == 2
        assert sorted([*train, *val]) == [0, 1, 2, 3]
    train, val = meta.split_resample(7, runs=1, seed=0)[0]
    assert len(train) == 4 and len(val) == 3  # odd count: train gets the extra


def test_split_determinism():
    a = meta.split_resample(20, runs=10, seed=42)
    b = meta.split_resample(20, runs=10, seed=42)
    for (ta, va), (tb, vb) in zip(a, b):
        assert np.array_equal(ta, tb) and np.array_equal(va, vb)
    c = meta.split_resample(20, runs=10, seed=43)
    assert any(not np.array_equal(ta, tc) for (ta, _), (tc, _) in zip(a, c))


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------

def test_logistic_separable_perfect_training_accuracy():
    x = np.linspace(-2, 2, 40).reshape(-1, 1)
    y = (x[:, 0] > 0).astype(float)
    model = meta.fit_logistic(x, y)
    assert meta.accuracy(model.scores(x), y) == 1.0


def test_logistic_single_class_degenerate():
    x = np.random.default_rng(0).random((10, 2))
    with pytest.raises(DegenerateError):
        meta.fit_logistic(x, np.ones(10))


def test_logistic_coin_flip_accuracy_near_majority():
    rng = rng_for(11, 0)
    x = rng.normal(size=(2000, 3))
    y = (rng.random(2000) < 0.5).astype(float)
    model = meta.fit_logistic(x[:1000], y[:1000])
    acc = meta.accuracy(model.scores(x[1000:]), y[1000:])
    majority = max(y[1000:].mean(), 1 - y[1000:].mean())
    assert abs(acc - majority) < 0.05


def test_logistic_recovers_planted_coefficients():
    rng = rng_for(7, 0)
    n = 20000
    x = rng.normal(size=(n, 2))
    w_true = np.array([1.2, -0.8])
    b_true = 0.3
    p = 1.0 / (1.0 + np.exp(-(x @ w_true + b_true)))
    y = (rng.random(n) < p).astype(float)
    model = meta.fit_logistic(x, y)
    coef, bias = model.raw_coefficients()
    # against the independent Newton solver on the same data
    z = np.hstack([x, np.ones((n, 1))])
    theta_newton = newton_logistic(z, y)
    assert np.allclose(coef, theta_newton[:2], atol=1e-5)
    assert abs(bias - theta_newton[2]) < 1e-5
    # and against the planted generator within 5% relative error
    assert np.all(np.abs(coef - w_true) / np.abs(w_true) < 0.05)


def test_logistic_standardization_invariance():
    rng = rng_for(3, 0)
    x = rng.normal(size=(300, 2))
    y = (x[:, 0] - 0.5 * x[:, 1] + 0.2 * rng.normal(size=300) > 0).astype(float)
    scaled = x.copy()
    scaled[:, 0] *= 1000.0
    m1 = meta.fit_logistic(x[:200], y[:200])
    m2 = meta.fit_logistic(scaled[:200], y[:200])
    s1 = m1.scores(x[200:])
    s2 = m2.scores(scaled[200:])
    assert np.allclose(s1, s2, atol=1e-6)


# ---------------------------------------------------------------------------
# linear regression
# ---------------------------------------------------------------------------

def test_linear_exact_fit():
    rng = rng_for(5, 0)
    x = rng.random((30, 3))
    y = 0.2 * x[:, 0] - 0.1 * x[:, 1] + 0.4  # in [0,1] so clamping is inert
    model = meta.fit_linear(x, y)
    stats = meta.evaluate(model, x, y)
    assert abs(stats["r2"] - 1.0) < 1e-10
    assert stats["sigma"] < 1e-8


def test_linear_constant_target():
    x = np.random.default_rng(1).random((20, 4))
    model = meta.fit_linear(x, np.full(20, 0.5))
    w, b = model.layers[0]
    assert np.abs(w).max() < 1e-6
    assert abs(b[0] - 0.5) < 1e-9
    assert meta.evaluate(model, x, np.full(20, 0.5))["r2"] == 0.0


def test_linear_matches_qr_oracle():
    rng = rng_for(9, 0)
    for _ in range(50):
        x = rng.normal(size=(20, 5))
        y = rng.normal(size=20)
        model = meta.fit_linear(x, y)
        z = np.hstack([model.scaler.transform(x), np.ones((20, 1))])
        theta = qr_least_squares(z, y)
        w, b = model.layers[0]
        ours = np.append(w[:, 0], b[0])
        assert np.allclose(ours, theta, atol=1e-8)


def test_linear_predictions_clamped():
    x = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0.0, 0.6, 1.2, 1.8])  # exact line exceeding the IoU range
    model = meta.fit_linear(x, y)
    scores = model.scores(np.array([[5.0], [-2.0]]))
    assert scores.max() <= 1.0 and scores.min() >= 0.0


def test_linear_ss_identity():
    rng = rng_for(13, 0)
    x = rng.normal(size=(40, 3))
    y = x @ np.array([0.3, -0.2, 0.1]) + 0.05 * rng.normal(size=40)
    model = meta.fit_linear(x, y)
    z = np.hstack([model.scaler.transform(x), np.ones((40, 1))])
    w, b = model.layers[0]
    pred = z @ np.append(w[:, 0], b[0])
    ss_res = ((y - pred) ** 2).sum()
    ss_exp = ((pred - y.mean()) ** 2).sum()
    ss_tot = ((y - y.mean()) ** 2).sum()
    assert abs(ss_tot - (ss_res + ss_exp)) < 1e-8


# ---------------------------------------------------------------------------
# perceptron
# ---------------------------------------------------------------------------

def _fd_gradient(layers, Z, y, task, l2, h=1e-5):
    grads = []
    for w, b in layers:
        gw = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            w[idx] += h
            up, _ = meta.mlp_loss_grad(layers, Z, y, task, l2)
            w[idx] -= 2 * h
            down, _ = meta.mlp_loss_grad(layers, Z, y, task, l2)
            w[idx] += h
            gw[idx] = (up - down) / (2 * h)
        gb = np.zeros_like(b)
        for idx in np.ndindex(b.shape):
            b[idx] += h
            up, _ = meta.mlp_loss_grad(layers, Z, y, task, l2)
            b[idx] -= 2 * h
            down, _ = meta.mlp_loss_grad(layers, Z, y, task, l2)
            b[idx] += h
            gb[idx] = (up - down) / (2 * h)
        grads.append((gw, gb))
    return grads


def test_mlp_gradient_matches_finite_differences():
    rng = rng_for(21, 0)
    for task in ("classify", "regress"):
        Z = rng.normal(size=(10, 3))
        y = (rng.random(10) < 0.5).astype(float) if task == "classify" else rng.random(10)
        layers = meta._mlp_init(3, rng)
        loss, analytic = meta.mlp_loss_grad(layers, Z, y, task, l2=0.005)
        assert np.isfinite(loss)
        numeric = _fd_gradient(layers, Z, y, task, 0.005)
        for (ga_w, ga_b), (gn_w, gn_b) in zip(analytic, numeric):
            for a, n in ((ga_w, gn_w), (ga_b, gn_b)):
                rel = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-4)
                assert rel.max() < 1e-4


def test_mlp_architecture_fixed():
    rng = rng_for(2, 0)
    x = rng.normal(size=(50, 4))
    y = (rng.random(50) < 0.5).astype(float)
    model = meta.fit_mlp(x, y, "classify", config=meta.MLPConfig(epochs=5))
    shapes = [w.shape for w, _ in model.layers]
    assert shapes == [(4, 61), (61, 61), (61, 1)]


def test_mlp_heavy_l2_shrinks_weights():
    rng = rng_for(4, 0)
    x = rng.normal(size=(60, 3))
    y = rng.random(60)
    model = meta.fit_mlp(x, y, "regress", config=meta.MLPConfig(l2=1e3, seed=0))
    for w, _ in model.layers:
        assert np.abs(w).max() <= 1e-2
    # predictions collapse toward the bias-only output
    spread = model.scores(x).max() - model.scores(x).min()
    assert spread < 0.05


def test_mlp_learns_xor():
    rng = rng_for(6, 0)
    x = rng.uniform(-1.0, 1.0, size=(400, 2))
    y = ((x[:, 0] > 0) ^ (x[:, 1] > 0)).astype(float)
    model = meta.fit_mlp(x, y, "classify", config=meta.MLPConfig(seed=1))
    assert meta.accuracy(model.scores(x), y) >= 0.95


def test_mlp_deterministic_given_seed():
    rng = rng_for(8, 0)
    x = rng.normal(size=(30, 3))
    y = rng.random(30)
    cfg = meta.MLPConfig(epochs=50, seed=9)
    m1 = meta.fit_mlp(x, y, "regress", config=cfg)
    m2 = meta.fit_mlp(x, y, "regress", config=cfg)
    for (w1, b1), (w2, b2) in zip(m1.layers, m2.layers):
        assert np.array_equal(w1, w2) and np.array_equal(b1, b2)


def test_mlp_single_class_degenerate():
    x = np.random.default_rng(0).random((10, 2))
    with pytest.raises(DegenerateError):
        meta.fit_mlp(x, np.zeros(10), "classify")


# ---------------------------------------------------------------------------
# evaluation metrics
# ---------------------------------------------------------------------------

def test_auroc_perfect_and_constant():
    labels = np.array([0, 0, 1, 1, 1])
    assert meta.auroc(np.array([0.1, 0.2, 0.7, 0.8, 0.9]), labels) == 1.0
    assert meta.auroc(np.full(5, 0.4), labels) == 0.5
    assert meta.auroc(np.array([0.9, 0.8, 0.1, 0.2, 0.3]), labels) == 0.0


def test_auroc_hand_dataset_with_ties():
    scores = np.array([0.9, 0.8, 0.8, 0.5, 0.5, 0.1])
    labels = np.array([1, 0, 1, 1, 0, 0])
    assert abs(meta.auroc(scores, labels) - auroc_pairs(scores, labels)) < 1e-12


def test_auroc_matches_pair_counting_oracle(rng):
    for trial in range(100):
        n = int(rng.integers(4, 51))
        scores = np.round(rng.random(n), 2)  # coarse grid forces ties
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        ours = meta.auroc(scores, labels.astype(float))
        ref = auroc_pairs(scores, labels)
        assert abs(ours - ref) < 1e-12, f"trial {trial}"


def test_auroc_monotone_transform_invariance(rng):
    scores = rng.random(60)
    labels = rng.integers(0, 2, size=60).astype(float)
    labels[0], labels[1] = 0.0, 1.0
    base = meta.auroc(scores, labels)
    assert abs(meta.auroc(np.exp(3.0 * scores), labels) - base) < 1e-12
    assert abs(meta.auroc(scores * 100 - 7, labels) - base) < 1e-12


def test_regression_stats():
    y = np.array([0.0, 0.5, 1.0])
    sigma, r2 = meta.regression_stats(y, y)
    assert sigma == 0.0 and r2 == 1.0
    sigma, r2 = meta.regression_stats(np.full(3, y.mean()), y)
    assert r2 == 0.0


# ---------------------------------------------------------------------------
# protocol
# ---------------------------------------------------------------------------

def _labeled_dataset(rng, n=300, d=5):
    x = rng.normal(size=(n, d))
    signal = x[:, 0] - 0.7 * x[:, 1]
    target = np.clip(0.5 + 0.3 * signal + 0.1 * rng.normal(size=n), 0.0, 1.0)
    target[signal < -1.0] = 0.0
    return make_table(x, target)


def test_run_protocol_deterministic_and_complete():
    table = _labeled_dataset(rng_for(31, 0))
    sets = {"all": table.feature_names, "first": [table.feature_names[0]]}
    r1 = meta.run_protocol(table, ["logistic", "linear"], sets, runs=4, seed=5)
    r2 = meta.run_protocol(table, ["logistic", "linear"], sets, runs=4, seed=5)
    assert r1.to_json() == r2.to_json()
    assert len(r1.entries) == 4
    assert r1.runs == 4
    assert 0.0 <= r1.baseline_acc_mean <= 1.0
    clf = r1.entry("logistic", "all")
    assert set(clf["val_mean"]) == {"acc", "auroc"}
    assert len(clf["val_runs"]["acc"]) == 4  # per-run values, one per resample
    assert abs(np.mean(clf["val_runs"]["acc"]) - clf["val_mean"]["acc"]) < 1e-12
    reg = r1.entry("linear", "all")
    assert set(reg["val_mean"]) == {"sigma", "r2"}
    text = r1.format_text()
    assert "baseline" in text and "logistic" in text


def test_report_json_round_trip(tmp_path):
    table = _labeled_dataset(rng_for(33, 0), n=120)
    report = meta.run_protocol(table, ["linear"], {"all": table.feature_names}, runs=2, seed=1)
    path = tmp_path / "report.json"
    report.save(path)
    data = json.loads(path.read_text())
    assert data["runs"] == 2
    assert data["entries"][0]["kind"] == "linear"


def test_model_json_round_trip(tmp_path):
    table = _labeled_dataset(rng_for(35, 0), n=100)
    x = table.features
    y = table.iou_adj
    for model in (
        meta.fit_linear(x, y, table.feature_names),
        meta.fit_logistic(x, (y > 0).astype(float), table.feature_names),
        meta.fit_mlp(x, y, "regress", table.feature_names, meta.MLPConfig(epochs=20)),
    ):
        path = tmp_path / f"{model.kind}.json"
        model.save(path)
        loaded = meta.MetaModel.load(path)
        assert loaded.kind == model.kind
        assert loaded.feature_names == model.feature_names
        assert np.array_equal(loaded.scores(x[:7]), model.scores(x[:7]))


def test_zero_variance_feature_dropped():
    rng = rng_for(37, 0)
    x = rng.normal(size=(50, 3))
    x[:, 1] = 4.2
    y = (x[:, 0] > 0).astype(float)
    model = meta.fit_logistic(x, y)
    assert model.scaler.kept.tolist() == [0, 2]
    assert np.isfinite(model.scores(x)).all()


# ---------------------------------------------------------------------------
# greedy selection
# ---------------------------------------------------------------------------

def test_greedy_selects_planted_feature_first():
    rng = rng_for(41, 0)
    n = 200
    target = np.clip(rng.random(n), 0.0, 1.0)
    target[target < 0.2] = 0.0
    noise = rng.normal(size=(n, 8))
    feats = np.column_stack([noise[:, :4], target, noise[:, 4:]])
    table = make_table(feats, target)
    traj = meta.greedy_select(table, "r2", max_features=3, seed=2)
    assert traj[0]["feature"] == "f4"
    assert len(traj) == 3
    assert traj[0]["score"] > 0.99


def test_greedy_duplicate_feature_no_crash():
    rng = rng_for(43, 0)
    n = 150
    x = rng.normal(size=(n, 1))
    target = np.clip(0.5 + 0.4 * x[:, 0], 0.0, 1.0)
    feats = np.column_stack([x, x, rng.normal(size=n)])  # exact duplicate column
    table = make_table(feats, target, names=["a", "a_copy", "noise"])
    traj = meta.greedy_select(table, "r2", max_features=3, seed=0)
    assert len(traj) == 3
    assert traj[0]["feature"] in ("a", "a_copy")
    # adding the duplicate cannot improve the score meaningfully
    scores = [t["score"] for t in traj]
    dup_step = [t["feature"] for t in traj].index("a_copy" if traj[0]["feature"] == "a" else "a")
    if dup_step > 0:
        assert scores[dup_step] <= scores[dup_step - 1] + 1e-6


def test_greedy_order_invariant_under_feature_scaling():
    rng = rng_for(47, 0)
    n = 200
    x = rng.normal(size=(n, 4))
    target = np.clip(0.5 + 0.3 * x[:, 2] - 0.2 * x[:, 0] + 0.05 * rng.normal(size=n), 0.0, 1.0)
    base = make_table(x, target)
    scaled = x.copy()
    scaled[:, 2] *= 1000.0
    scaled[:, 0] *= 0.001
    rescaled = make_table(scaled, target)
    t1 = meta.greedy_select(base, "r2", max_features=4, seed=1)
    t2 = meta.greedy_select(rescaled, "r2", max_features=4, seed=1)
    assert [s["feature"] for s in t1] == [s["feature"] for s in t2]


def test_mlp_loss_decreases_over_epoch_checkpoints():
    # same seed means a longer run extends the shorter one's trajectory
    rng = rng_for(49, 0)
    x = rng.normal(size=(80, 3))
    y = np.clip(0.5 + 0.2 * x[:, 0] - 0.1 * x[:, 1], 0.0, 1.0)
    losses = []
    for epochs in (10, 40, 160, 640):
        model = meta.fit_mlp(x, y, "regress", config=meta.MLPConfig(epochs=epochs, seed=3))
        z = model.scaler.transform(x)
        loss, _ = meta.mlp_loss_grad(model.layers, z, y, "regress", 0.005)
        losses.append(loss)
    assert all(a > b for a, b in zip(losses, losses[1:])), losses


def test_greedy_full_length_and_acc_criterion():
    table = _labeled_dataset(rng_for(45, 0), n=160, d=4)
    traj = meta.greedy_select(table, "acc", max_features=4, seed=3,
                              logistic_config=meta.LogisticConfig(max_iter=200, tol=1e-6))
    assert len(traj) == 4
    assert len({t["feature"] for t in traj}) == 4
    with pytest.raises(ValidationError):
        meta.greedy_select(table, "mse", 2)
