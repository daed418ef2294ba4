"""Multi-class gradient-boosted decision trees over binned features.

One regression tree per class per round is fitted to the softmax gradients
and hessians of the current scores.  Split search is histogram-based:
feature values are mapped once to bin codes, candidate splits are the bin
upper edges, and the chosen split maximizes

    gain = 1/2 * (GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda))

with leaf weight -G/(H+lambda) scaled by the learning rate.  With enough
bins for every distinct value this reduces to exact greedy splitting.
Training is fully deterministic: histogram accumulation order is fixed, so
identical data and hyperparameters give byte-identical serialized models.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..ingest import CnrCategory, FeatureMatrix, Vocabulary

N_CATEGORIES = len(CnrCategory)

MODEL_FORMAT_VERSION = 1


class SchemaMismatchError(ValueError):
    """Prediction rows were encoded against a different feature schema."""


class ModelFormatError(ValueError):
    """A model file is corrupted or has an unsupported format version."""


@dataclass(frozen=True)
class GbmHyperParams:
    n_rounds: int = 200
    max_depth: int = 6
    learning_rate: float = 0.1
    min_child_weight: float = 1.0
    n_bins: int = 64
    l2_lambda: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_rounds < 0:
            raise ValueError(f"n_rounds must be >= 0: {self.n_rounds}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1: {self.max_depth}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must be in (0, 1]: {self.learning_rate}")
        if self.min_child_weight < 0.0:
            raise ValueError(f"min_child_weight must be >= 0: {self.min_child_weight}")
        if not 2 <= self.n_bins <= 256:
            raise ValueError(f"n_bins must be in [2, 256]: {self.n_bins}")
        if self.l2_lambda < 0.0:
            raise ValueError(f"l2_lambda must be >= 0: {self.l2_lambda}")


@dataclass
class Tree:
    """One regression tree, nodes in preorder; ``feature < 0`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf value for every row; rows go left when x <= threshold."""
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            active = np.nonzero(self.feature[node] >= 0)[0]
            if active.size == 0:
                return self.value[node]
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])

    @property
    def depth(self) -> int:
        def walk(i: int) -> int:
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)


@dataclass
class GbmModel:
    """A trained boosted ensemble plus everything needed to reuse it."""

    kind: str  # "classifier" or "regressor"
    n_classes: int
    hyperparams: GbmHyperParams
    base_score: np.ndarray
    trees: list[list[Tree]]  # [round][class]
    columns: tuple[str, ...]
    schema_hash: str
    vocab: Optional[Vocabulary]
    train_loss: list[float] = field(default_factory=list)

    @property
    def n_rounds_trained(self) -> int:
        return len(self.trees)


def _bin_edges(col: np.ndarray, n_bins: int) -> np.ndarray:
    """Ascending split candidates; bin b holds values <= edges[b]."""
    unique = np.unique(col)
    if unique.size <= 1:
        return np.empty(0)
    if unique.size <= n_bins:
        return (unique[:-1] + unique[1:]) / 2.0
    quantiles = np.quantile(col, np.linspace(0.0, 1.0, n_bins + 1)[1:-1])
    return np.unique(quantiles)


def _bin_codes(X: np.ndarray, edges_per_feature: list[np.ndarray]) -> np.ndarray:
    codes = np.empty(X.shape, dtype=np.uint8)
    for f, edges in enumerate(edges_per_feature):
        codes[:, f] = np.searchsorted(edges, X[:, f], side="left")
    return codes


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_loss(scores: np.ndarray, y: np.ndarray) -> float:
    shifted = scores - scores.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(lse - shifted[np.arange(len(y)), y]))


def _find_split(
    codes: np.ndarray,
    rows: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    g_sum: float,
    h_sum: float,
    edges_per_feature: list[np.ndarray],
    hp: GbmHyperParams,
) -> Optional[tuple[int, int, float]]:
    """Best (feature, bin, gain) over all histogram splits, or None.

    Ties resolve to the lowest feature id, then the lowest bin, so the
    search is order-deterministic.
    """
    lam = hp.l2_lambda
    parent = g_sum * g_sum / (h_sum + lam) if h_sum + lam > 0 else 0.0
    best: Optional[tuple[int, int, float]] = None
    best_gain = 0.0
    g_rows = g[rows]
    h_rows = h[rows]
    for f, edges in enumerate(edges_per_feature):
        n_bins_f = edges.size + 1
        if n_bins_f < 2:
            continue
        c = codes[rows, f]
        hist_g = np.bincount(c, weights=g_rows, minlength=n_bins_f)
        hist_h = np.bincount(c, weights=h_rows, minlength=n_bins_f)
        gl = np.cumsum(hist_g)[:-1]
        hl = np.cumsum(hist_h)[:-1]
        gr = g_sum - gl
        hr = h_sum - hl
        left_term = np.divide(gl * gl, hl + lam, out=np.zeros_like(gl), where=(hl + lam) > 0)
        right_term = np.divide(gr * gr, hr + lam, out=np.zeros_like(gr), where=(hr + lam) > 0)
        gains = 0.5 * (left_term + right_term - parent)
        gains[(hl < hp.min_child_weight) | (hr < hp.min_child_weight)] = -np.inf
        b = int(np.argmax(gains))
        if gains[b] > best_gain:
            best_gain = float(gains[b])
            best = (f, b, best_gain)
    return best


def _build_tree(
    codes: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    edges_per_feature: list[np.ndarray],
    hp: GbmHyperParams,
) -> tuple[Tree, np.ndarray]:
    """Grow one tree on (g, h); returns it plus the score update per row."""
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    update = np.zeros(codes.shape[0])

    def grow(rows: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)

        g_sum = float(g[rows].sum())
        h_sum = float(h[rows].sum())
        split = None
        if depth < hp.max_depth and rows.size >= 2:
            split = _find_split(codes, rows, g, h, g_sum, h_sum, edges_per_feature, hp)
        if split is None:
            leaf = -hp.learning_rate * g_sum / (h_sum + hp.l2_lambda)
            value[node] = leaf
            update[rows] = leaf
            return node
        f, b, _ = split
        threshold[node] = float(edges_per_feature[f][b])
        feature[node] = f
        mask = codes[rows, f] <= b
        left[node] = grow(rows[mask], depth + 1)
        right[node] = grow(rows[~mask], depth + 1)
        return node

    grow(np.arange(codes.shape[0]), 0)
    tree = Tree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=np.array(value, dtype=np.float64),
    )
    return tree, update


def _clipped_log_priors(counts: np.ndarray) -> np.ndarray:
    priors = counts / counts.sum()
    return np.log(np.clip(priors, 1e-12, None))


def train_gbm(train: FeatureMatrix, hp: GbmHyperParams = GbmHyperParams()) -> GbmModel:
    """Fit the 4-category classifier.

    Per-class base scores are the log label priors, so a zero-round model
    predicts the empirical class distribution.  Training log-loss after
    each round is recorded on the model.
    """
    if train.n_rows == 0:
        raise ValueError("training matrix is empty")
    if train.y is None:
        raise ValueError("training matrix carries no labels")
    y = train.y.astype(np.int64)
    counts = np.bincount(y, minlength=N_CATEGORIES).astype(float)
    if (counts > 0).sum() < 2:
        raise ValueError("training labels contain a single class")

    edges_per_feature = [_bin_edges(train.X[:, f], hp.n_bins) for f in range(train.X.shape[1])]
    codes = _bin_codes(train.X, edges_per_feature)
    base = _clipped_log_priors(counts)
    scores = np.tile(base, (train.n_rows, 1))
    one_hot = np.zeros((train.n_rows, N_CATEGORIES))
    one_hot[np.arange(train.n_rows), y] = 1.0

    losses = [_log_loss(scores, y)]
    all_trees: list[list[Tree]] = []
    for _ in range(hp.n_rounds):
        proba = _softmax(scores)
        grad = proba - one_hot
        hess = proba * (1.0 - proba)
        round_trees = []
        for k in range(N_CATEGORIES):
            tree, update = _build_tree(codes, grad[:, k], hess[:, k], edges_per_feature, hp)
            scores[:, k] += update
            round_trees.append(tree)
        all_trees.append(round_trees)
        losses.append(_log_loss(scores, y))

    return GbmModel(
        kind="classifier",
        n_classes=N_CATEGORIES,
        hyperparams=hp,
        base_score=base,
        trees=all_trees,
        columns=train.columns,
        schema_hash=train.schema_hash,
        vocab=train.vocab,
        train_loss=losses,
    )


def train_regressor(train: FeatureMatrix, hp: GbmHyperParams = GbmHyperParams()) -> GbmModel:
    """Fit a squared-error regressor on the raw dB target."""
    if train.n_rows == 0:
        raise ValueError("training matrix is empty")
    if train.y_cnr_db is None:
        raise ValueError("training matrix carries no regression target")
    y = train.y_cnr_db.astype(np.float64)

    edges_per_feature = [_bin_edges(train.X[:, f], hp.n_bins) for f in range(train.X.shape[1])]
    codes = _bin_codes(train.X, edges_per_feature)
    base = np.array([float(y.mean())])
    scores = np.full(train.n_rows, base[0])

    losses = [float(np.mean((scores - y) ** 2))]
    all_trees: list[list[Tree]] = []
    hess = np.ones(train.n_rows)
    for _ in range(hp.n_rounds):
        grad = scores - y
        tree, update = _build_tree(codes, grad, hess, edges_per_feature, hp)
        scores += update
        all_trees.append([tree])
        losses.append(float(np.mean((scores - y) ** 2)))

    return GbmModel(
        kind="regressor",
        n_classes=1,
        hyperparams=hp,
        base_score=base,
        trees=all_trees,
        columns=train.columns,
        schema_hash=train.schema_hash,
        vocab=train.vocab,
        train_loss=losses,
    )


def baseline_majority(train: FeatureMatrix) -> GbmModel:
    """A zero-tree classifier that always predicts the modal class
    (probability-wise, the empirical prior; argmax ties go to the worse
    category)."""
    if train.n_rows == 0:
        raise ValueError("training matrix is empty")
    if train.y is None:
        raise ValueError("training matrix carries no labels")
    counts = np.bincount(train.y.astype(np.int64), minlength=N_CATEGORIES).astype(float)
    return GbmModel(
        kind="classifier",
        n_classes=N_CATEGORIES,
        hyperparams=GbmHyperParams(n_rounds=0),
        base_score=_clipped_log_priors(counts),
        trees=[],
        columns=train.columns,
        schema_hash=train.schema_hash,
        vocab=train.vocab,
        train_loss=[],
    )


def _check_schema(model: GbmModel, matrix: FeatureMatrix) -> None:
    if matrix.schema_hash != model.schema_hash:
        raise SchemaMismatchError(
            "feature schema of the rows does not match the schema the model "
            f"was trained on (columns {matrix.columns} vs {model.columns})"
        )


def raw_scores(model: GbmModel, matrix: FeatureMatrix) -> np.ndarray:
    """Base scores plus summed leaf values, shape (n_rows, n_classes)."""
    _check_schema(model, matrix)
    scores = np.tile(model.base_score, (matrix.n_rows, 1))
    for round_trees in model.trees:
        for k, tree in enumerate(round_trees):
            scores[:, k] += tree.apply(matrix.X)
    return scores


def predict_proba(model: GbmModel, rows: FeatureMatrix) -> np.ndarray:
    """Per-row category distribution (rows sum to 1)."""
    if model.kind != "classifier":
        raise ValueError(f"predict_proba needs a classifier, got {model.kind!r}")
    return _softmax(raw_scores(model, rows))


def predict_labels(model: GbmModel, rows: FeatureMatrix) -> np.ndarray:
    """Integer category per row; probability ties resolve to the worse
    category so downstream switching logic errs on the safe side."""
    return np.argmax(predict_proba(model, rows), axis=1)


def predict_category(model: GbmModel, rows: FeatureMatrix) -> list[CnrCategory]:
    return [CnrCategory(int(k)) for k in predict_labels(model, rows)]


def predict_value(model: GbmModel, rows: FeatureMatrix) -> np.ndarray:
    """Regression output in dB, one value per row."""
    if model.kind != "regressor":
        raise ValueError(f"predict_value needs a regressor, got {model.kind!r}")
    return raw_scores(model, rows)[:, 0]


def _tree_to_jsonable(tree: Tree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": tree.value.tolist(),
    }


def _tree_from_jsonable(data: dict) -> Tree:
    try:
        tree = Tree(
            feature=np.array(data["feature"], dtype=np.int32),
            threshold=np.array(data["threshold"], dtype=np.float64),
            left=np.array(data["left"], dtype=np.int32),
            right=np.array(data["right"], dtype=np.int32),
            value=np.array(data["value"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"bad tree record: {exc}") from exc
    if not np.isfinite(tree.value).all():
        raise ModelFormatError("non-finite leaf value in model file")
    return tree


def model_to_jsonable(model: GbmModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "n_classes": model.n_classes,
        "hyperparams": dataclasses.asdict(model.hyperparams),
        "base_scores": model.base_score.tolist(),
        "columns": list(model.columns),
        "schema_hash": model.schema_hash,
        "vocab": None if model.vocab is None else model.vocab.to_jsonable(),
        "train_loss": model.train_loss,
        "trees": [[_tree_to_jsonable(t) for t in round_trees] for round_trees in model.trees],
    }


def model_from_jsonable(data: dict) -> GbmModel:
    version = data.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format_version {version!r}, expected {MODEL_FORMAT_VERSION}"
        )
    try:
        return GbmModel(
            kind=data["kind"],
            n_classes=int(data["n_classes"]),
            hyperparams=GbmHyperParams(**data["hyperparams"]),
            base_score=np.array(data["base_scores"], dtype=np.float64),
            trees=[[_tree_from_jsonable(t) for t in row] for row in data["trees"]],
            columns=tuple(data["columns"]),
            schema_hash=data["schema_hash"],
            vocab=None if data["vocab"] is None else Vocabulary.from_jsonable(data["vocab"]),
            train_loss=[float(x) for x in data["train_loss"]],
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"bad model file: {exc}") from exc


def save_model(model: GbmModel, path: str) -> None:
    """Versioned JSON serialization; identical models produce identical bytes."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_jsonable(model), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str) -> GbmModel:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ModelFormatError(f"{path}: expected a JSON object")
    return model_from_jsonable(data)
