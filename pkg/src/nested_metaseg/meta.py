"""Meta classification and regression on segment-wise metrics.

Predicts, per segment and without ground truth, whether the adjusted IoU is
zero (classification) or its value (regression). Solvers are deterministic
and self-contained: logistic regression by gradient descent with backtracking
line search, linear least squares by normal equations with a ridge jitter,
and a fixed two-hidden-layer perceptron trained full-batch with an
adaptive-moment optimizer. Features are standardized per training split.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateError, ValidationError
from .metrics import MetricsTable
from .rng import rng_for

logger = logging.getLogger(__name__)

CLASSIFIER_KINDS = ("logistic", "mlp-classifier")
REGRESSOR_KINDS = ("linear", "mlp-regressor")
MODEL_KINDS = CLASSIFIER_KINDS + REGRESSOR_KINDS

#: The perceptron architecture is fixed: two hidden layers of this width.
MLP_HIDDEN = 61


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-feature mean/std from a training split; zero-variance columns dropped."""

    mean: np.ndarray
    std: np.ndarray
    kept: np.ndarray  # indices into the model's feature list

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return (X[:, self.kept] - self.mean) / self.std


def fit_scaler(X: np.ndarray) -> Scaler:
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # a constant column can carry an O(eps) std from the mean's rounding
    kept = np.flatnonzero(std > 1e-12 * np.maximum(1.0, np.abs(mean)))
    if kept.size < X.shape[1]:
        logger.info("dropping %d zero-variance feature(s)", X.shape[1] - kept.size)
    return Scaler(mean=mean[kept], std=std[kept], kept=kept)


# ---------------------------------------------------------------------------
# model container
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class MetaModel:
    """A trained predictor over standardized metric vectors.

    ``layers`` holds (weights, bias) pairs; a single pair for the linear and
    logistic kinds, three for the perceptron kinds.
    """

    kind: str
    feature_names: list[str]
    scaler: Scaler
    layers: list[tuple[np.ndarray, np.ndarray]]
    config: dict = field(default_factory=dict)

    def scores(self, X: np.ndarray) -> np.ndarray:
        """Probability of the positive class, or the clamped regression value."""
        z = self.scaler.transform(X)
        if self.kind in ("logistic", "linear"):
            w, b = self.layers[0]
            out = z @ w[:, 0] + b[0]
        elif self.kind in ("mlp-classifier", "mlp-regressor"):
            out = _mlp_forward(self.layers, z)[0][:, 0]
        else:
            raise ValidationError(f"unknown model kind {self.kind!r}")
        if self.kind in CLASSIFIER_KINDS:
            return _sigmoid(out)
        return np.clip(out, 0.0, 1.0)  # IoU range

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "features": list(self.feature_names),
            "scaler": {
                "mean": self.scaler.mean.tolist(),
                "std": self.scaler.std.tolist(),
                "kept": self.scaler.kept.tolist(),
            },
            "layers": [{"weights": w.tolist(), "bias": b.tolist()} for w, b in self.layers],
            "config": self.config,
        }

    @classmethod
    def from_json(cls, data: dict) -> "MetaModel":
        scaler = Scaler(
            mean=np.asarray(data["scaler"]["mean"], dtype=np.float64),
            std=np.asarray(data["scaler"]["std"], dtype=np.float64),
            kept=np.asarray(data["scaler"]["kept"], dtype=np.intp),
        )
        layers = [
            (np.asarray(l["weights"], dtype=np.float64), np.asarray(l["bias"], dtype=np.float64))
            for l in data["layers"]
        ]
        return cls(
            kind=data["kind"],
            feature_names=list(data["features"]),
            scaler=scaler,
            layers=layers,
            config=dict(data.get("config", {})),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MetaModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def raw_coefficients(self) -> tuple[np.ndarray, float]:
        """Linear/logistic weights mapped back to raw (unstandardized) features."""
        if self.kind not in ("logistic", "linear"):
            raise ValidationError("raw coefficients are only defined for single-layer kinds")
        w, b = self.layers[0]
        w_std = w[:, 0] / self.scaler.std
        if self.feature_names:
            d = len(self.feature_names)
        else:
            d = int(self.scaler.kept.max()) + 1 if self.scaler.kept.size else 0
        coef = np.zeros(d)
        coef[self.scaler.kept] = w_std
        bias = float(b[0] - (w_std * self.scaler.mean).sum())
        return coef, bias


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# logistic regression (gradient descent + backtracking)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogisticConfig:
    max_iter: int = 10000
    tol: float = 1e-8          # on the gradient's max-norm
    armijo_c: float = 1e-4
    init_step: float = 1.0


def fit_logistic(X, y, feature_names=None, config: LogisticConfig | None = None) -> MetaModel:
    """Unregularized logistic regression on standardized features.

    Deterministic gradient descent with Armijo backtracking; the trial step
    comes from the Barzilai-Borwein secant estimate, which cuts the
    iteration count by orders of magnitude on ill-conditioned designs. Stops
    when the gradient max-norm falls below ``tol`` or after ``max_iter``
    steps (the cap is the accepted outcome on separable data, where the
    weights diverge).
    """
    cfg = config or LogisticConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValidationError(f"bad design: X {X.shape}, y {y.shape}")
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateError("logistic regression needs both classes in the training set")
    if not np.isin(classes, (0.0, 1.0)).all():
        raise ValidationError("labels must be 0/1")
    scaler = fit_scaler(X)
    Z = np.hstack([scaler.transform(X), np.ones((X.shape[0], 1))])
    n, d = Z.shape
    theta = np.zeros(d)

    def loss_at(t: np.ndarray) -> float:
        z = Z @ t
        return float(np.mean(np.logaddexp(0.0, z) - y * z))

    def grad_at(t: np.ndarray) -> np.ndarray:
        return Z.T @ (_sigmoid(Z @ t) - y) / n

    value = loss_at(theta)
    grad = grad_at(theta)
    step = cfg.init_step
    for _ in range(cfg.max_iter):
        gnorm = float(np.abs(grad).max())
        if gnorm <= cfg.tol:
            break
        gsq = float(grad @ grad)
        candidate = theta - step * grad
        cv = loss_at(candidate)
        while cv > value - cfg.armijo_c * step * gsq and step > 1e-18:
            step *= 0.5
            candidate = theta - step * grad
            cv = loss_at(candidate)
        new_grad = grad_at(candidate)
        # Barzilai-Borwein secant step for the next trial
        ds = candidate - theta
        dg = new_grad - grad
        curv = float(ds @ dg)
        step = min(float(ds @ ds) / curv, 1e8) if curv > 0 else min(step * 2.0, 1e8)
        theta, value, grad = candidate, cv, new_grad
    w = theta[:-1][:, None]
    b = theta[-1:]
    return MetaModel(
        kind="logistic",
        feature_names=list(feature_names or []),
        scaler=scaler,
        layers=[(w, b)],
        config={"max_iter": cfg.max_iter, "tol": cfg.tol},
    )


# ---------------------------------------------------------------------------
# linear least squares (normal equations)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearConfig:
    ridge: float = 1e-10  # jitter for rank safety only


def fit_linear(X, y, feature_names=None, config: LinearConfig | None = None) -> MetaModel:
    """Least squares on standardized features; predictions clamp to [0, 1]."""
    cfg = config or LinearConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValidationError(f"bad design: X {X.shape}, y {y.shape}")
    scaler = fit_scaler(X)
    Z = np.hstack([scaler.transform(X), np.ones((X.shape[0], 1))])
    a = Z.T @ Z + cfg.ridge * np.eye(Z.shape[1])
    theta = np.linalg.solve(a, Z.T @ y)
    return MetaModel(
        kind="linear",
        feature_names=list(feature_names or []),
        scaler=scaler,
        layers=[(theta[:-1][:, None], theta[-1:])],
        config={"ridge": cfg.ridge},
    )


# ---------------------------------------------------------------------------
# perceptron (two hidden layers, full-batch adaptive moments)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MLPConfig:
    epochs: int = 2000
    step: float = 1e-3
    l2: float = 0.005          # on weights, not biases
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def _mlp_init(d_in: int, rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    for fan_in, fan_out in ((d_in, MLP_HIDDEN), (MLP_HIDDEN, MLP_HIDDEN), (MLP_HIDDEN, 1)):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append((w, np.zeros(fan_out)))
    return layers


def _mlp_forward(layers, Z: np.ndarray):
    (w1, b1), (w2, b2), (w3, b3) = layers
    z1 = Z @ w1 + b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ w2 + b2
    h2 = np.maximum(z2, 0.0)
    z3 = h2 @ w3 + b3
    return z3, (z1, h1, z2, h2)


def mlp_loss_grad(layers, Z: np.ndarray, y: np.ndarray, task: str, l2: float):
    """Full loss and its gradient w.r.t. every parameter.

    Classification: mean binary cross-entropy on the sigmoid output.
    Regression:     mean squared error / 2 on the identity output.
    Both add (l2 / 2) * sum of squared weights (biases unpenalized).
    """
    (w1, b1), (w2, b2), (w3, b3) = layers
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    n = Z.shape[0]
    z3, (z1, h1, z2, h2) = _mlp_forward(layers, Z)
    if task == "classify":
        data_loss = float(np.mean(np.logaddexp(0.0, z3) - y * z3))
        dz3 = (_sigmoid(z3) - y) / n
    elif task == "regress":
        resid = z3 - y
        data_loss = float(np.mean(resid**2) / 2.0)
        dz3 = resid / n
    else:
        raise ValidationError(f"task must be 'classify' or 'regress', got {task!r}")
    penalty = 0.5 * l2 * (float((w1**2).sum()) + float((w2**2).sum()) + float((w3**2).sum()))

    gw3 = h2.T @ dz3 + l2 * w3
    gb3 = dz3.sum(axis=0)
    dh2 = dz3 @ w3.T
    dz2 = dh2 * (z2 > 0.0)
    gw2 = h1.T @ dz2 + l2 * w2
    gb2 = dz2.sum(axis=0)
    dh1 = dz2 @ w2.T
    dz1 = dh1 * (z1 > 0.0)
    gw1 = Z.T @ dz1 + l2 * w1
    gb1 = dz1.sum(axis=0)
    grads = [(gw1, gb1), (gw2, gb2), (gw3, gb3)]
    return data_loss + penalty, grads


def fit_mlp(X, y, task: str, feature_names=None, config: MLPConfig | None = None) -> MetaModel:
    """Train the fixed input->61->61->1 perceptron; deterministic given seed."""
    cfg = config or MLPConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValidationError(f"bad design: X {X.shape}, y {y.shape}")
    if task == "classify" and np.unique(y).size < 2:
        raise DegenerateError("classification needs both classes in the training set")
    scaler = fit_scaler(X)
    Z = scaler.transform(X)
    rng = rng_for(cfg.seed, stream=0)
    layers = _mlp_init(Z.shape[1], rng)
    m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]
    v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]
    b1c, b2c = 1.0, 1.0
    for _ in range(cfg.epochs):
        _, grads = mlp_loss_grad(layers, Z, y, task, cfg.l2)
        b1c *= cfg.beta1
        b2c *= cfg.beta2
        new_layers = []
        for li, ((w, b), (gw, gb)) in enumerate(zip(layers, grads)):
            mw = cfg.beta1 * m[li][0] + (1 - cfg.beta1) * gw
            mb = cfg.beta1 * m[li][1] + (1 - cfg.beta1) * gb
            vw = cfg.beta2 * v[li][0] + (1 - cfg.beta2) * gw**2
            vb = cfg.beta2 * v[li][1] + (1 - cfg.beta2) * gb**2
            m[li] = (mw, mb)
            v[li] = (vw, vb)
            mw_hat = mw / (1 - b1c)
            mb_hat = mb / (1 - b1c)
            vw_hat = vw / (1 - b2c)
            vb_hat = vb / (1 - b2c)
            new_layers.append(
                (
                    w - cfg.step * mw_hat / (np.sqrt(vw_hat) + cfg.eps),
                    b - cfg.step * mb_hat / (np.sqrt(vb_hat) + cfg.eps),
                )
            )
        layers = new_layers
    kind = "mlp-classifier" if task == "classify" else "mlp-regressor"
    return MetaModel(
        kind=kind,
        feature_names=list(feature_names or []),
        scaler=scaler,
        layers=layers,
        config={"epochs": cfg.epochs, "step": cfg.step, "l2": cfg.l2, "seed": cfg.seed},
    )


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def accuracy(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    return float(np.mean((np.asarray(scores) >= threshold) == (np.asarray(labels) == 1.0)))


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve via the rank formulation.

    Equivalent to (#concordant + 0.5 * #ties) / (positives * negatives);
    tied scores receive their average rank, so constant scores give 0.5.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1.0
    p = int(pos.sum())
    q = labels.size - p
    if p == 0 or q == 0:
        return float("nan")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    csum = np.cumsum(counts)
    avg_rank = (csum - counts + 1 + csum) / 2.0  # mean of the 1-based rank block
    ranks = avg_rank[inverse]
    return float((ranks[pos].sum() - p * (p + 1) / 2.0) / (p * q))


def regression_stats(pred: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(population std of residuals, R^2); R^2 is 0 for a zero-variance target."""
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    resid = pred - y
    sigma = float(np.std(resid))
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return sigma, 0.0
    return sigma, float(1.0 - (resid @ resid) / ss_tot)


def evaluate(model: MetaModel, X: np.ndarray, y: np.ndarray) -> dict[str, float]:
    """ACC/AUROC for classifier kinds, sigma/R^2 for regressor kinds."""
    scores = model.scores(X)
    if model.kind in CLASSIFIER_KINDS:
        return {"acc": accuracy(scores, y), "auroc": auroc(scores, y)}
    sigma, r2 = regression_stats(scores, y)
    return {"sigma": sigma, "r2": r2}


# ---------------------------------------------------------------------------
# resampling protocol
# ---------------------------------------------------------------------------

def split_resample(n: int, runs: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Independent half/half splits; with odd n the training half is larger."""
    if n < 2:
        raise DegenerateError(f"need at least 2 labeled records, have {n}")
    if runs < 1:
        raise ValidationError(f"runs must be >= 1, got {runs}")
    rng = rng_for(seed, stream=0)
    half = n - n // 2
    splits = []
    for _ in range(runs):
        perm = rng.permutation(n)
        train = np.sort(perm[:half])
        val = np.sort(perm[half:])
        splits.append((train, val))
    return splits


def _targets(table: MetricsTable, task: str) -> tuple[np.ndarray, np.ndarray]:
    mask = table.labeled_mask()
    if task == "classify":
        y = (table.iou_adj[mask] > 0.0).astype(np.float64)
    elif task == "regress":
        y = table.iou_adj[mask]
    else:
        raise ValidationError(f"task must be 'classify' or 'regress', got {task!r}")
    return table.features[mask], y


_KIND_TASK = {
    "logistic": "classify",
    "mlp-classifier": "classify",
    "linear": "regress",
    "mlp-regressor": "regress",
}


def fit_model(kind, X, y, names=None, logistic_config=None, linear_config=None, mlp_config=None):
    """Dispatch to the solver for a model kind."""
    if kind == "logistic":
        return fit_logistic(X, y, names, logistic_config)
    if kind == "linear":
        return fit_linear(X, y, names, linear_config)
    if kind == "mlp-classifier":
        return fit_mlp(X, y, "classify", names, mlp_config)
    if kind == "mlp-regressor":
        return fit_mlp(X, y, "regress", names, mlp_config)
    raise ValidationError(f"unknown model kind {kind!r}")


@dataclass(eq=False)
class EvalReport:
    """Per-run and aggregated scores for every (model kind, feature set)."""

    runs: int
    seed: int
    n_records: int
    split_sizes: tuple[int, int]
    baseline_acc_mean: float
    baseline_acc_std: float
    entries: list[dict]

    def to_json(self) -> dict:
        return {
            "runs": self.runs,
            "seed": self.seed,
            "records": self.n_records,
            "split_sizes": list(self.split_sizes),
            "baseline": {"acc_mean": self.baseline_acc_mean, "acc_std": self.baseline_acc_std},
            "entries": self.entries,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    def entry(self, kind: str, feature_set: str) -> dict:
        for e in self.entries:
            if e["kind"] == kind and e["feature_set"] == feature_set:
                return e
        raise ValidationError(f"no entry for ({kind!r}, {feature_set!r})")

    def format_text(self) -> str:
        lines = [
            f"records={self.n_records} runs={self.runs} seed={self.seed} "
            f"split={self.split_sizes[0]}/{self.split_sizes[1]}",
            f"baseline (always predict quality > 0): ACC {self.baseline_acc_mean:.4f} "
            f"(+/-{self.baseline_acc_std:.4f})",
            "",
        ]
        for e in self.entries:
            names = list(e["val_mean"])
            for split in ("train", "val"):
                cells = "  ".join(
                    f"{k}={e[f'{split}_mean'][k]:.4f}(+/-{e[f'{split}_std'][k]:.4f})" for k in names
                )
                lines.append(f"{e['kind']:<16} {e['feature_set']:<20} {split:<6} {cells}")
        return "\n".join(lines) + "\n"


def run_protocol(
    table: MetricsTable,
    model_kinds,
    feature_sets: dict[str, list[str]],
    runs: int = 10,
    seed: int = 0,
    logistic_config: LogisticConfig | None = None,
    linear_config: LinearConfig | None = None,
    mlp_config: MLPConfig | None = None,
) -> EvalReport:
    """Fit/evaluate every (kind, feature set) over ``runs`` resampled splits.

    Reports mean and population std of each metric on the training and
    validation halves, plus the trivial always-positive classification
    baseline. Perceptron runs derive their init seed from (seed, run).
    """
    mask = table.labeled_mask()
    n = int(mask.sum())
    splits = split_resample(n, runs, seed)
    y_cls = (table.iou_adj[mask] > 0.0).astype(np.float64)
    base_cfg = mlp_config or MLPConfig()

    baseline = np.array([float(np.mean(y_cls[val])) for _, val in splits])
    entries = []
    for kind in model_kinds:
        task = _KIND_TASK.get(kind)
        if task is None:
            raise ValidationError(f"unknown model kind {kind!r}")
        _, y_all = _targets(table, task)
        for set_name, names in feature_sets.items():
            cols = table.columns(names)[mask]
            per_split: dict[str, dict[str, list[float]]] = {"train": {}, "val": {}}
            for run, (train, val) in enumerate(splits):
                cfg = replace(base_cfg, seed=base_cfg.seed * 1000003 + seed * 1000 + run)
                model = fit_model(
                    kind, cols[train], y_all[train], names,
                    logistic_config=logistic_config,
                    linear_config=linear_config,
                    mlp_config=cfg,
                )
                for split_name, idx in (("train", train), ("val", val)):
                    for metric, value in evaluate(model, cols[idx], y_all[idx]).items():
                        per_split[split_name].setdefault(metric, []).append(value)
            entry = {"kind": kind, "feature_set": set_name, "features": list(names)}
            for split_name in ("train", "val"):
                entry[f"{split_name}_runs"] = {
                    k: [float(x) for x in v] for k, v in per_split[split_name].items()
                }
                entry[f"{split_name}_mean"] = {
                    k: float(np.mean(v)) for k, v in per_split[split_name].items()
                }
                entry[f"{split_name}_std"] = {
                    k: float(np.std(v)) for k, v in per_split[split_name].items()
                }
            entries.append(entry)
    return EvalReport(
        runs=runs,
        seed=seed,
        n_records=n,
        split_sizes=(len(splits[0][0]), len(splits[0][1])),
        baseline_acc_mean=float(baseline.mean()),
        baseline_acc_std=float(baseline.std()),
        entries=entries,
    )


# ---------------------------------------------------------------------------
# greedy forward selection
# ---------------------------------------------------------------------------

def greedy_select(
    table: MetricsTable,
    criterion: str,
    max_features: int,
    seed: int = 0,
    logistic_config: LogisticConfig | None = None,
    linear_config: LinearConfig | None = None,
) -> list[dict]:
    """Forward selection of features maximizing a validation criterion.

    ``criterion`` is "acc" (logistic models) or "r2" (linear models). One
    fixed split (from ``seed``) serves the whole selection pass; re-evaluate
    chosen subsets under :func:`run_protocol` for resampled statistics.
    Ties break toward catalog order. Returns one step dict per added feature:
    {"feature", "score"}.
    """
    if criterion == "acc":
        task, fit = "classify", (lambda X, y: fit_logistic(X, y, config=logistic_config))
        metric = "acc"
    elif criterion == "r2":
        task, fit = "regress", (lambda X, y: fit_linear(X, y, config=linear_config))
        metric = "r2"
    else:
        raise ValidationError(f"criterion must be 'acc' or 'r2', got {criterion!r}")
    if max_features < 1:
        raise ValidationError(f"max_features must be >= 1, got {max_features}")
    X, y = _targets(table, task)
    train, val = split_resample(X.shape[0], 1, seed)[0]
    if task == "classify" and np.unique(y[train]).size < 2:
        raise DegenerateError("training half holds a single class")
    names = table.feature_names
    remaining = list(range(len(names)))
    selected: list[int] = []
    trajectory: list[dict] = []
    for _ in range(min(max_features, len(names))):
        best_j = None
        best_score = -np.inf
        for j in remaining:
            cols = selected + [j]
            model = fit(X[train][:, cols], y[train])
            score = evaluate(model, X[val][:, cols], y[val])[metric]
            if score > best_score:
                best_score = score
                best_j = j
        selected.append(best_j)
        remaining.remove(best_j)
        trajectory.append({"feature": names[best_j], "score": float(best_score)})
    return trajectory
