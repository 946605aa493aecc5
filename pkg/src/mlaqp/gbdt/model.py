"""Gradient-boosted regression trees over NaN-sparse meta-vectors."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InsufficientData, NonFiniteAnswer, NoValidSplit, WidthMismatch
from . import _backend

log = logging.getLogger(__name__)

FORMAT = "mlaqp.gbdt"
FORMAT_VERSION = 1

SQUARED = "squared"
PINBALL = "pinball"


def empirical_quantile(values: np.ndarray, t: float) -> float:
    """Smallest sample value whose empirical CDF exceeds ``t``."""
    s = np.sort(np.asarray(values, dtype=np.float64))
    k = min(int(math.floor(s.size * t + 1e-9)), s.size - 1)
    return float(s[k])


@dataclass(frozen=True)
class Loss:
    kind: str = SQUARED
    t: float | None = None

    def __post_init__(self):
        if self.kind == PINBALL:
            if self.t is None or not 0.0 < self.t < 1.0:
                raise ValueError(f"pinball level must lie strictly inside (0, 1), got {self.t!r}")
        elif self.kind == SQUARED:
            if self.t is not None:
                raise ValueError("squared loss takes no level")
        else:
            raise ValueError(f"unknown loss {self.kind!r}")

    @classmethod
    def squared(cls) -> "Loss":
        return cls(SQUARED)

    @classmethod
    def pinball(cls, t: float) -> "Loss":
        return cls(PINBALL, float(t))

    def base_score(self, y: np.ndarray) -> float:
        if self.kind == SQUARED:
            return math.fsum(y.tolist()) / y.size
        return empirical_quantile(y, self.t)

    def negative_gradient(self, y: np.ndarray, pred: np.ndarray) -> np.ndarray:
        if self.kind == SQUARED:
            return y - pred
        # subgradient t at y == pred
        return np.where(y >= pred, self.t, self.t - 1.0)

    def value(self, y: np.ndarray, pred: np.ndarray) -> float:
        r = y - pred
        if self.kind == SQUARED:
            return float(np.mean(r * r))
        return float(np.mean(np.where(r >= 0, self.t * r, (self.t - 1.0) * r)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "t": self.t}

    @classmethod
    def from_dict(cls, doc: dict) -> "Loss":
        return cls(doc["kind"], doc.get("t"))


@dataclass(frozen=True)
class GbdtConfig:
    rounds: int = 10_000
    learning_rate: float = 0.1
    max_depth: int = 6
    min_samples_leaf: int = 3
    early_stopping_rounds: int | None = 50
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.early_stopping_rounds is not None and self.early_stopping_rounds < 1:
            raise ValueError("early_stopping_rounds must be >= 1 or None")

    @classmethod
    def point(cls, **kw) -> "GbdtConfig":
        return replace(cls(), **kw)

    @classmethod
    def quantile(cls, **kw) -> "GbdtConfig":
        base = cls(rounds=1500, learning_rate=0.001, max_depth=5, min_samples_leaf=20,
                   early_stopping_rounds=None)
        return replace(base, **kw)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class RegressionTree:
    """Flat node arrays; leaves have ``feature == -1``.

    ``threshold`` is +inf for a presence split (present rows left, missing
    right).  Routing: missing goes the default way, otherwise ``x < threshold``
    goes left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        pos = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[pos]
            inner = f >= 0
            if not inner.any():
                return pos
            r, p = rows[inner], pos[inner]
            x = X[r, f[inner]]
            go_left = np.where(np.isnan(x), self.default_left[p] != 0, x < self.threshold[p])
            pos[inner] = np.where(go_left, self.left[p], self.right[p])

    def to_dict(self) -> dict:
        inner = self.feature >= 0
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if math.isinf(t) else t
                          for t in np.where(inner, self.threshold, 0.0).tolist()],
            "default_left": self.default_left.astype(int).tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": np.where(inner, 0.0, self.value).tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RegressionTree":
        return cls(
            np.asarray(doc["feature"], dtype=np.int64),
            np.array([math.inf if t is None else t for t in doc["threshold"]], dtype=np.float64),
            np.asarray(doc["default_left"], dtype=np.uint8),
            np.asarray(doc["left"], dtype=np.int64),
            np.asarray(doc["right"], dtype=np.int64),
            np.asarray(doc["value"], dtype=np.float64),
        )


@dataclass
class GbdtModel:
    base_score: float
    trees: list[RegressionTree]
    learning_rates: list[float]
    loss: Loss
    feature_width: int
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self._flat = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _flatten(self):
        if self._flat is None:
            feats, thrs, dls, ls, rs, vals, roots = [], [], [], [], [], [], []
            off = 0
            for t in self.trees:
                inner = t.feature >= 0
                feats.append(t.feature)
                thrs.append(t.threshold)
                dls.append(t.default_left)
                ls.append(np.where(inner, t.left + off, -1))
                rs.append(np.where(inner, t.right + off, -1))
                vals.append(t.value)
                roots.append(off)
                off += t.n_nodes

            def cat(parts, dtype):
                return np.ascontiguousarray(np.concatenate(parts) if parts else np.empty(0), dtype=dtype)

            arrays = (
                cat(feats, np.int64), cat(thrs, np.float64), cat(dls, np.uint8),
                cat(ls, np.int64), cat(rs, np.int64), cat(vals, np.float64),
                np.asarray(roots, dtype=np.int64), np.asarray(self.learning_rates, dtype=np.float64),
            )
            self._flat = (arrays, tuple(a.tolist() for a in arrays))
        return self._flat

    def predict_batch(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.feature_width:
            raise WidthMismatch(f"expected width {self.feature_width}, got {X.shape[-1] if X.ndim else 0}")
        arrays, _ = self._flatten()
        return _backend.kernels.predict_batch(X, *arrays, float(self.base_score))

    def predict(self, m) -> float:
        x = np.asarray(getattr(m, "values", m), dtype=np.float64)
        if x.ndim != 1 or x.size != self.feature_width:
            raise WidthMismatch(f"expected width {self.feature_width}, got {x.size}")
        if _backend.BACKEND == "cython":
            return float(self.predict_batch(x[None, :])[0])
        _, lists = self._flatten()
        return float(_backend.predict_one(x.tolist(), *lists, float(self.base_score)))

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "loss": self.loss.to_dict(),
            "base_score": self.base_score,
            "feature_width": self.feature_width,
            "learning_rates": list(self.learning_rates),
            "trees": [t.to_dict() for t in self.trees],
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GbdtModel":
        if doc.get("format") != FORMAT:
            raise ValueError("not a serialized gbdt model")
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported gbdt model version {doc.get('version')!r}")
        return cls(
            float(doc["base_score"]),
            [RegressionTree.from_dict(t) for t in doc["trees"]],
            [float(v) for v in doc["learning_rates"]],
            Loss.from_dict(doc["loss"]),
            int(doc["feature_width"]),
            doc.get("info", {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), allow_nan=False)

    @classmethod
    def loads(cls, text: str) -> "GbdtModel":
        return cls.from_dict(json.loads(text))


def predict(model: GbdtModel, m) -> float:
    return model.predict(m)


def _presorted(X: np.ndarray):
    orders, ptr = [], [0]
    for f in range(X.shape[1]):
        col = X[:, f]
        present = np.flatnonzero(~np.isnan(col))
        orders.append(present[np.argsort(col[present], kind="stable")])
        ptr.append(ptr[-1] + present.size)
    flat = np.concatenate(orders) if orders else np.empty(0, dtype=np.int64)
    return np.ascontiguousarray(flat, dtype=np.int64), np.asarray(ptr, dtype=np.int64)


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    # makes fitting independent of the caller's row order
    keys = [y] + [X[:, f] for f in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def _grow_tree(X, y, pred, g, order_flat, order_ptr, loss, cfg):
    n = X.shape[0]
    feature, threshold, dleft, left, right = [-1], [0.0], [0], [-1], [-1]
    node_of = np.zeros(n, dtype=np.int64)
    leaf_of = np.full(n, -1, dtype=np.int64)
    level = [0]
    kern = _backend.kernels
    for _ in range(cfg.max_depth):
        K = len(level)
        bf, bt, bl, _gain = kern.best_splits(X, g, order_flat, order_ptr, node_of, K,
                                             cfg.min_samples_leaf)
        nxt = []
        child_local = np.full((K, 2), -1, dtype=np.int64)
        for k, gid in enumerate(level):
            if bf[k] < 0:
                continue
            feature[gid], threshold[gid], dleft[gid] = int(bf[k]), float(bt[k]), int(bl[k])
            for side in (0, 1):
                cid = len(feature)
                feature.append(-1)
                threshold.append(0.0)
                dleft.append(0)
                left.append(-1)
                right.append(-1)
                if side == 0:
                    left[gid] = cid
                else:
                    right[gid] = cid
                child_local[k, side] = len(nxt)
                nxt.append(cid)
        live = np.flatnonzero(node_of >= 0)
        k_of = node_of[live]
        split = bf[k_of] >= 0
        done = live[~split]
        leaf_of[done] = np.asarray(level, dtype=np.int64)[node_of[done]]
        node_of[done] = -1
        rows = live[split]
        if rows.size:
            k_r = node_of[rows]
            x = X[rows, bf[k_r]]
            go_left = np.where(np.isnan(x), bl[k_r] != 0, x < bt[k_r])
            node_of[rows] = np.where(go_left, child_local[k_r, 0], child_local[k_r, 1])
        level = nxt
        if not level:
            break
    live = np.flatnonzero(node_of >= 0)
    if live.size:
        leaf_of[live] = np.asarray(level, dtype=np.int64)[node_of[live]]

    n_nodes = len(feature)
    value = np.zeros(n_nodes)
    if loss.kind == SQUARED:
        sums = np.bincount(leaf_of, weights=g, minlength=n_nodes)
        cnts = np.bincount(leaf_of, minlength=n_nodes)
        nz = cnts > 0
        value[nz] = sums[nz] / cnts[nz]
    else:
        resid = y - pred
        order = np.argsort(leaf_of, kind="stable")
        ids, starts = np.unique(leaf_of[order], return_index=True)
        bounds = list(starts) + [n]
        for j, lid in enumerate(ids):
            value[lid] = empirical_quantile(resid[order[bounds[j]:bounds[j + 1]]], loss.t)
    tree = RegressionTree(
        np.asarray(feature, dtype=np.int64), np.asarray(threshold, dtype=np.float64),
        np.asarray(dleft, dtype=np.uint8), np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64), value,
    )
    return tree, leaf_of


def fit(X, y, cfg: GbdtConfig | None = None, loss: Loss | None = None) -> GbdtModel:
    """Boost regression trees on the negative gradient of ``loss``.

    A constant target yields a model with zero trees.  With early stopping the
    model is trained on a seeded random ``1 - validation_fraction`` share of
    the rows and truncated to its best validation round.
    """
    cfg = cfg or GbdtConfig()
    loss = loss or Loss.squared()
    X = np.array(X, dtype=np.float64)
    y = np.array(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if not np.all(np.isfinite(y)):
        raise NonFiniteAnswer("targets must be finite")
    if np.isinf(X).any():
        raise ValueError("features must be finite or NaN")
    n, width = X.shape
    if n == 0 or n < 2 * cfg.min_samples_leaf:
        raise InsufficientData(f"{n} rows; need at least {max(1, 2 * cfg.min_samples_leaf)}")

    if np.all(y == y[0]):
        log.info("constant target; fitted a zero-tree model")
        return GbdtModel(float(y[0]), [], [], loss, width, {"rounds": 0, "constant_target": True})

    order = _canonical_order(X, y)
    X, y = np.ascontiguousarray(X[order]), y[order]

    Xv = yv = None
    esr = cfg.early_stopping_rounds
    if esr is not None:
        rng = np.random.default_rng(cfg.seed)
        perm = rng.permutation(n)
        n_val = max(1, int(round(n * cfg.validation_fraction)))
        if n - n_val >= 2 * cfg.min_samples_leaf:
            vi, ti = np.sort(perm[:n_val]), np.sort(perm[n_val:])
            Xv, yv = X[vi], y[vi]
            X, y = np.ascontiguousarray(X[ti]), y[ti]
        else:
            esr = None

    base = loss.base_score(y)
    order_flat, order_ptr = _presorted(X)
    pred = np.full(y.size, base)
    lr = float(cfg.learning_rate)
    trees: list[RegressionTree] = []
    if Xv is not None:
        pred_v = np.full(yv.size, base)
        best_loss, best_n = loss.value(yv, pred_v), 0
    for _ in range(cfg.rounds):
        g = np.ascontiguousarray(loss.negative_gradient(y, pred))
        tree, leaf_of = _grow_tree(X, y, pred, g, order_flat, order_ptr, loss, cfg)
        pred = pred + lr * tree.value[leaf_of]
        trees.append(tree)
        if Xv is not None:
            pred_v = pred_v + lr * tree.value[tree.apply(Xv)]
            cur = loss.value(yv, pred_v)
            if cur < best_loss:
                best_loss, best_n = cur, len(trees)
            elif len(trees) - best_n >= esr:
                break
        if loss.kind == SQUARED and tree.n_nodes == 1:
            # split gains are shift-invariant, so no later tree can split either
            break
    if Xv is not None:
        trees = trees[:best_n]
    info = {"rounds": len(trees), "train_rows": int(y.size)}
    if Xv is not None:
        info["validation_loss"] = best_loss
    return GbdtModel(base, trees, [lr] * len(trees), loss, width, info)


def find_best_split(values, gradients, min_samples_leaf: int = 1):
    """Best (threshold, default_left, gain) for one feature over one node.

    ``threshold`` is +inf for the presence split.  Raises NoValidSplit when no
    candidate separates the rows with positive gain.
    """
    x = np.ascontiguousarray(np.asarray(values, dtype=np.float64).reshape(-1, 1))
    g = np.ascontiguousarray(gradients, dtype=np.float64)
    if g.size != x.shape[0]:
        raise ValueError("values and gradients differ in length")
    present = np.flatnonzero(~np.isnan(x[:, 0]))
    if present.size == 0 or (present.size == x.shape[0] and np.all(x[present, 0] == x[present[0], 0])):
        raise NoValidSplit("all values identical")
    order_flat, order_ptr = _presorted(x)
    bf, bt, bl, bg = _backend.kernels.best_splits(
        x, g, order_flat, order_ptr, np.zeros(x.shape[0], dtype=np.int64), 1, int(min_samples_leaf))
    if bf[0] < 0:
        raise NoValidSplit("no split improves on the parent")
    return float(bt[0]), bool(bl[0]), float(bg[0])
