"""Arc-level featurization, label building, binary classifiers and metrics.

Each arc becomes one 30-feature row: 3 arc features, 10 node features (tail
then head), 7 fractional-sample statistics (open/closed frequency plus a
five-bin histogram of strictly fractional relaxation values) and the arc's
bit in the 10 best feasible samples, zero-padded. Everything is normalized
into [0, 1] by per-instance maxima.

Training minimizes a class-weighted binary cross-entropy, either with a
full-batch gradient-descent logistic model or with stage-wise boosted
regression trees (second-order leaf values, depth cap, minimum leaf size).
Both trainers are deterministic and keep the loss monotone via backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .io import SolutionArchive
from .model import DataFormatError, Instance, SampleSet, StructuralError

N_FEATURES = 30
_EPS = 1e-12


# ---------------------------------------------------------------------------
# Features and labels


def featurize(instance: Instance, samples: SampleSet) -> np.ndarray:
    """One row per arc; deterministic and independent of accumulation order."""
    A = instance.n_arcs
    N = instance.node_count
    rows = np.zeros((A, N_FEATURES))

    cap = instance.capacity
    fixed = instance.fixed_cost
    var = instance.cost_matrix().mean(axis=0)
    rows[:, 0] = cap / max(cap.max(), _EPS)
    rows[:, 1] = var / max(var.max(), _EPS)
    rows[:, 2] = fixed / max(fixed.max(), _EPS)

    degree = np.array([len(instance.out_arcs[v]) + len(instance.in_arcs[v]) for v in range(N)], float)
    supply = np.zeros(N)
    for com in instance.commodities:
        supply[com.origin] += com.demand
        supply[com.destination] -= com.demand
    max_abs_supply = max(np.abs(supply).max(), _EPS)
    sign = np.where(supply > 1e-9, 1.0, np.where(supply < -1e-9, 0.0, 0.5))
    max_in = np.array(
        [cap[list(instance.in_arcs[v])].max() if instance.in_arcs[v] else 0.0 for v in range(N)]
    )
    max_out = np.array(
        [cap[list(instance.out_arcs[v])].max() if instance.out_arcs[v] else 0.0 for v in range(N)]
    )
    node_feats = np.column_stack([
        degree / max(degree.max(), _EPS),
        np.abs(supply) / max_abs_supply,
        sign,
        max_in / max(cap.max(), _EPS),
        max_out / max(cap.max(), _EPS),
    ])
    tails = np.array([a.tail for a in instance.arcs])
    heads = np.array([a.head for a in instance.arcs])
    rows[:, 3:8] = node_feats[tails]
    rows[:, 8:13] = node_feats[heads]

    if samples.fractional:
        mat = np.vstack(samples.fractional)
        if mat.shape[1] != A:
            raise StructuralError("fractional sample width mismatch")
        count = mat.shape[0]
        open_mask = mat >= 1.0 - 1e-6
        closed_mask = mat <= 1e-6
        rows[:, 13] = open_mask.sum(axis=0) / count
        rows[:, 14] = closed_mask.sum(axis=0) / count
        interior = ~(open_mask | closed_mask)
        bins = np.minimum((mat / 0.2).astype(int), 4)
        for b in range(5):
            rows[:, 15 + b] = ((bins == b) & interior).sum(axis=0) / count

    top = samples.feasible[:10]
    for i, sol in enumerate(top):
        rows[:, 20 + i] = sol.design

    return rows


def build_labels(archive: SolutionArchive, instance: Instance) -> np.ndarray:
    """1 = remove the arc: complement of the union of the top-3 designs."""
    if not archive.entries:
        raise DataFormatError("cannot build labels from an empty archive")
    merged = np.zeros(instance.n_arcs, dtype=np.int8)
    for entry in archive.entries[:3]:
        if entry.design.shape[0] != instance.n_arcs:
            raise StructuralError("archive design length mismatch")
        merged |= entry.design.astype(np.int8)
    return (1 - merged).astype(np.int8)


# ---------------------------------------------------------------------------
# Models


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, rows: np.ndarray) -> np.ndarray:
        out = np.empty(rows.shape[0])
        for i in range(rows.shape[0]):
            node = 0
            while self.feature[node] >= 0:
                if rows[i, self.feature[node]] < self.threshold[node]:
                    node = int(self.left[node])
                else:
                    node = int(self.right[node])
            out[i] = self.value[node]
        return out


@dataclass
class ClassifierModel:
    family: str  # linear | boosted_stumps
    w1: float
    w0: float
    threshold: float = 0.5
    weights: Optional[np.ndarray] = None
    bias: float = 0.0
    trees: list[Tree] = field(default_factory=list)
    base_score: float = 0.0
    shrinkage: float = 0.1
    degenerate: bool = False


@dataclass
class TrainParams:
    max_depth: int = 7
    stages: int = 100
    shrinkage: float = 0.1
    epochs: int = 500
    step: float = 0.1
    min_leaf: int = 20


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -60, 60)))


def weighted_loss(y: np.ndarray, p: np.ndarray, w1: float, w0: float) -> float:
    p = np.clip(p, _EPS, 1.0 - _EPS)
    return float(np.mean(-w1 * y * np.log(p) - w0 * (1 - y) * np.log(1 - p)))


def _fit_linear(rows, labels, w1, w0, hyper) -> tuple[np.ndarray, float, list[float]]:
    n, d = rows.shape
    w = np.zeros(d)
    b = 0.0
    y = labels.astype(float)
    losses = []
    step = hyper.step
    for _ in range(hyper.epochs):
        p = _sigmoid(rows @ w + b)
        loss = weighted_loss(y, p, w1, w0)
        losses.append(loss)
        g = w0 * (1 - y) * p - w1 * y * (1 - p)
        grad_w = rows.T @ g / n
        grad_b = float(g.mean())
        trial = step
        for _ in range(25):
            w_try = w - trial * grad_w
            b_try = b - trial * grad_b
            new_loss = weighted_loss(y, _sigmoid(rows @ w_try + b_try), w1, w0)
            if new_loss <= loss + 1e-15:
                w, b = w_try, b_try
                break
            trial *= 0.5
        else:
            break  # no descent direction left at float precision
    return w, b, losses


def _best_split(values: np.ndarray, resid: np.ndarray, min_leaf: int):
    """Best threshold by squared-error reduction; None when no valid split."""
    order = np.argsort(values, kind="mergesort")
    v = values[order]
    r = resid[order]
    n = len(v)
    if n < 2 * min_leaf:
        return None
    prefix = np.cumsum(r)
    total = prefix[-1]
    idx = np.arange(1, n)
    valid = (v[1:] > v[:-1] + 1e-12) & (idx >= min_leaf) & (n - idx >= min_leaf)
    if not np.any(valid):
        return None
    left_sum = prefix[:-1]
    nl = idx.astype(float)
    nr = float(n) - nl
    gain = left_sum**2 / nl + (total - left_sum) ** 2 / nr
    gain = np.where(valid, gain, -np.inf)
    i = int(np.argmax(gain))
    return float(gain[i]), (v[i] + v[i + 1]) / 2.0


def _fit_tree(rows, resid, hess, max_depth, min_leaf) -> Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def leaf(idx) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        denom = float(hess[idx].sum()) + _EPS
        value.append(float(np.clip(resid[idx].sum() / denom, -4.0, 4.0)))
        return node

    def grow(idx, depth) -> int:
        if depth >= max_depth or idx.size < 2 * min_leaf:
            return leaf(idx)
        best = None
        for f in range(rows.shape[1]):
            split = _best_split(rows[idx, f], resid[idx], min_leaf)
            if split is None:
                continue
            gain, thr = split
            if best is None or gain > best[0] + 1e-12:
                best = (gain, f, thr)
        if best is None:
            return leaf(idx)
        _, f, thr = best
        mask = rows[idx, f] < thr
        node = len(feature)
        feature.append(f)
        threshold.append(thr)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(rows.shape[0]), 0)
    return Tree(
        np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(value)
    )


def _fit_boosted(rows, labels, w1, w0, hyper) -> tuple[list[Tree], float, list[float]]:
    y = labels.astype(float)
    n_pos = float((w1 * y).sum())
    n_neg = float((w0 * (1 - y)).sum())
    base = float(np.log((n_pos + _EPS) / (n_neg + _EPS)))
    F = np.full(rows.shape[0], base)
    trees: list[Tree] = []
    losses = [weighted_loss(y, _sigmoid(F), w1, w0)]
    for _ in range(hyper.stages):
        p = _sigmoid(F)
        resid = w1 * y * (1 - p) - w0 * (1 - y) * p
        hess = p * (1 - p) * (w1 * y + w0 * (1 - y))
        tree = _fit_tree(rows, resid, hess, hyper.max_depth, hyper.min_leaf)
        step = tree.predict(rows)
        scale = hyper.shrinkage
        accepted = False
        for _ in range(4):
            new_loss = weighted_loss(y, _sigmoid(F + scale * step), w1, w0)
            if new_loss <= losses[-1] + 1e-15:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break
        F = F + scale * step
        tree.value = tree.value * (scale / hyper.shrinkage)
        trees.append(tree)
        losses.append(new_loss)
    return trees, base, losses


def train(
    family: str,
    rows: np.ndarray,
    labels: np.ndarray,
    w1: float,
    w0: float,
    hyper: Optional[TrainParams] = None,
) -> ClassifierModel:
    rows = np.asarray(rows, dtype=float)
    labels = np.asarray(labels).astype(np.int8)
    if rows.ndim != 2 or rows.shape[1] != N_FEATURES:
        raise StructuralError(f"feature rows must have {N_FEATURES} columns")
    if rows.shape[0] != labels.shape[0]:
        raise StructuralError("row/label count mismatch")
    if w1 <= 0 or w0 <= 0:
        raise StructuralError("class weights must be positive")
    if family not in ("linear", "boosted_stumps"):
        raise StructuralError(f"unknown model family {family!r}")
    hyper = hyper if hyper is not None else TrainParams()

    uniq = np.unique(labels)
    if uniq.size < 2:
        # Degenerate single-class data: constant model, flagged.
        only = int(uniq[0]) if uniq.size else 0
        bias = 30.0 if only == 1 else -30.0
        return ClassifierModel(
            family=family, w1=w1, w0=w0,
            weights=np.zeros(N_FEATURES), bias=bias,
            base_score=bias, trees=[], degenerate=True,
        )

    if family == "linear":
        weights, bias, losses = _fit_linear(rows, labels, w1, w0, hyper)
        model = ClassifierModel(family=family, w1=w1, w0=w0, weights=weights, bias=bias)
    else:
        trees, base, losses = _fit_boosted(rows, labels, w1, w0, hyper)
        model = ClassifierModel(
            family=family, w1=w1, w0=w0, trees=trees, base_score=base,
            shrinkage=hyper.shrinkage,
        )
    model.training_losses = losses  # kept for inspection; not serialized
    return model


def predict(model: ClassifierModel, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities in (0,1) and binary decisions (probability >= threshold)."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != N_FEATURES:
        raise StructuralError(f"feature rows must have {N_FEATURES} columns")
    if model.family == "linear" or (model.degenerate and not model.trees):
        z = rows @ model.weights + model.bias
    else:
        z = np.full(rows.shape[0], model.base_score)
        for tree in model.trees:
            z = z + model.shrinkage * tree.predict(rows)
    probs = np.clip(_sigmoid(z), _EPS, 1.0 - _EPS)
    decisions = (probs >= model.threshold).astype(np.int8)
    return probs, decisions


@dataclass
class ClassifierMetrics:
    balanced_accuracy: float
    fpr: float
    fnr: float
    tp: int
    fp: int
    tn: int
    fn: int
    degenerate: bool = False


def classifier_metrics(decisions, labels) -> ClassifierMetrics:
    d = np.asarray(decisions).astype(np.int8)
    y = np.asarray(labels).astype(np.int8)
    if d.shape != y.shape:
        raise StructuralError("decision/label length mismatch")
    tp = int(np.sum((d == 1) & (y == 1)))
    fp = int(np.sum((d == 1) & (y == 0)))
    tn = int(np.sum((d == 0) & (y == 0)))
    fn = int(np.sum((d == 0) & (y == 1)))
    degenerate = (tp + fn == 0) or (tn + fp == 0)
    recall_pos = tp / (tp + fn) if tp + fn else 1.0
    recall_neg = tn / (tn + fp) if tn + fp else 1.0
    fpr = fp / (fp + tn) if fp + tn else 0.0
    fnr = fn / (fn + tp) if fn + tp else 0.0
    return ClassifierMetrics(
        balanced_accuracy=(recall_pos + recall_neg) / 2.0,
        fpr=fpr, fnr=fnr, tp=tp, fp=fp, tn=tn, fn=fn, degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# Model files (text key-value)


def _f(v: float) -> str:
    return f"{float(v):.17g}"


def save_model(model: ClassifierModel, path: str) -> None:
    lines = [
        "# mcfnd model",
        f"family {model.family}",
        f"w1 {_f(model.w1)}",
        f"w0 {_f(model.w0)}",
        f"threshold {_f(model.threshold)}",
        f"degenerate {int(model.degenerate)}",
    ]
    if model.family == "linear" or (model.degenerate and not model.trees):
        lines.append(f"bias {_f(model.bias)}")
        weights = model.weights if model.weights is not None else np.zeros(N_FEATURES)
        lines.append("weights " + " ".join(_f(v) for v in weights))
    if model.family == "boosted_stumps":
        lines.append(f"base_score {_f(model.base_score)}")
        lines.append(f"shrinkage {_f(model.shrinkage)}")
        for tree in model.trees:
            lines.append(f"tree {len(tree.feature)}")
            for i in range(len(tree.feature)):
                lines.append(
                    f"node {int(tree.feature[i])} {_f(tree.threshold[i])} "
                    f"{int(tree.left[i])} {int(tree.right[i])} {_f(tree.value[i])}"
                )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path: str) -> ClassifierModel:
    fields: dict[str, str] = {}
    trees: list[Tree] = []
    pending: Optional[list[list[float]]] = None
    pending_count = 0
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            if key == "tree":
                if pending is not None and pending_count:
                    raise DataFormatError(f"line {lineno}: previous tree incomplete")
                pending = []
                pending_count = int(rest)
            elif key == "node":
                if pending is None:
                    raise DataFormatError(f"line {lineno}: node outside a tree")
                toks = rest.split()
                pending.append([float(t) for t in toks])
                pending_count -= 1
                if pending_count == 0:
                    arr = np.array(pending)
                    trees.append(
                        Tree(
                            arr[:, 0].astype(int), arr[:, 1],
                            arr[:, 2].astype(int), arr[:, 3].astype(int), arr[:, 4],
                        )
                    )
                    pending = None
            else:
                fields[key] = rest
    try:
        family = fields["family"]
        model = ClassifierModel(
            family=family,
            w1=float(fields["w1"]),
            w0=float(fields["w0"]),
            threshold=float(fields["threshold"]),
            degenerate=bool(int(fields.get("degenerate", "0"))),
        )
    except KeyError as exc:
        raise DataFormatError(f"model file missing field {exc}") from None
    if "bias" in fields:
        model.bias = float(fields["bias"])
    if "weights" in fields:
        model.weights = np.array([float(t) for t in fields["weights"].split()])
    if family == "boosted_stumps":
        model.base_score = float(fields.get("base_score", "0"))
        model.shrinkage = float(fields.get("shrinkage", "0.1"))
        model.trees = trees
    return model
