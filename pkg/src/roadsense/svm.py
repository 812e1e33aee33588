"""Soft-margin linear SVM: training, prediction and the model file format.

The primal problem solved is::

    min_{w,b}  1/2 |w|^2 + C * sum_i max(0, 1 - y_i (w . x_i + b))

with ``y = +1`` for pothole and ``-1`` for plain road, on z-scored
features. Training runs sequential minimal optimization on the dual with
second-order working-set selection; the bias stays unregularized through
the dual equality constraint and is re-fit exactly for the current weights
at every epoch boundary (one epoch = ``n`` pair updates). The best primal
iterate is kept, so the recorded objective history never increases.
Training stops when the duality gap certifies the primal objective to
within ``tol`` relative.

Model file layout (little-endian, 176 bytes)::

    offset  size  field
    0       4     magic  b"RSVM"
    4       4     uint32 version (currently 1)
    8       8     float64 C
    16      8     float64 tol
    24      48    float64[6] weights
    72      8     float64 bias
    80      48    float64[6] scaler mean
    128     48    float64[6] scaler std
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .features import N_FEATURES, Scaler, fit_scaler

POTHOLE = "pothole"
PLAIN = "plain"
# Reported class ids keep the legacy convention: 0 = pothole, 1 = plain road.
CLASS_ID = {POTHOLE: 0, PLAIN: 1}

DEFAULT_C = 1.0
DEFAULT_TOL = 1e-4
DEFAULT_MAX_EPOCHS = 10_000

MAGIC = b"RSVM"
VERSION = 1
_LAYOUT = struct.Struct("<4sI" + "d" * (2 + N_FEATURES + 1 + 2 * N_FEATURES))


class ModelError(ValueError):
    pass


class ModelVersionError(ModelError):
    pass


class NotTrainedError(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class LinearSvmModel:
    w: np.ndarray
    b: float
    scaler: Scaler
    c_param: float = DEFAULT_C
    tol: float = DEFAULT_TOL
    history: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(w)) and np.isfinite(self.b)):
            raise ModelError("weights and bias must be finite")
        if not self.c_param > 0:
            raise ModelError("C must be positive")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    def __eq__(self, other: object) -> bool:
        # training history is bookkeeping, not part of the model
        if not isinstance(other, LinearSvmModel):
            return NotImplemented
        return (
            np.array_equal(self.w, other.w)
            and self.b == other.b
            and self.scaler == other.scaler
            and self.c_param == other.c_param
            and self.tol == other.tol
        )

    __hash__ = None

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if not np.all(np.isfinite(X)):
            raise ModelError("non-finite feature value")
        return self.scaler.transform(X) @ self.w + self.b

    def objective(self, X: np.ndarray, y: np.ndarray) -> float:
        """Primal objective on raw (unscaled) features and +-1 labels."""
        return objective(self.w, self.b, self.scaler.transform(X), y, self.c_param)


def objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, C: float) -> float:
    hinge = np.maximum(0.0, 1.0 - y * (X @ w + b))
    return 0.5 * float(w @ w) + C * float(hinge.sum())


def subgradient(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, C: float) -> tuple[np.ndarray, float]:
    active = y * (X @ w + b) < 1.0
    ya = y[active]
    return w - C * (ya @ X[active]), -C * float(ya.sum())


def _signed_labels(labels) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.dtype == bool:
        return np.where(arr, 1.0, -1.0)
    if arr.dtype.kind in "US":
        if not np.all(np.isin(arr, (POTHOLE, PLAIN))):
            raise ModelError("labels must be 'pothole' or 'plain'")
        return np.where(arr == POTHOLE, 1.0, -1.0)
    arr = arr.astype(float)
    if not np.all(np.isin(arr, (-1.0, 1.0))):
        raise ModelError("numeric labels must be +1 (pothole) or -1 (plain)")
    return arr


def train(
    X: np.ndarray,
    labels,
    C: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    max_epochs: int = DEFAULT_MAX_EPOCHS,
) -> LinearSvmModel:
    """Fit scaler and weights.

    ``labels`` may be booleans (True = pothole), the strings
    ``"pothole"``/``"plain"``, or +-1. Stops once the relative duality gap
    drops below ``tol`` or after ``max_epochs``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ModelError("training data must be a non-empty 2-D array")
    if not np.all(np.isfinite(X)):
        raise ModelError("non-finite feature value in training data")
    y = _signed_labels(labels)
    if y.shape[0] != X.shape[0]:
        raise ModelError("features and labels differ in length")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ModelError("training needs at least one pothole and one plain example")
    if not C > 0 or not tol > 0 or max_epochs < 1:
        raise ModelError("C and tol must be positive and max_epochs >= 1")

    scaler = fit_scaler(X)
    Z = scaler.transform(X)
    w, b, history = _smo(Z, y, C, tol, max_epochs)
    return LinearSvmModel(w, b, scaler, C, tol, tuple(history))


def _smo(Z: np.ndarray, y: np.ndarray, C: float, tol: float, max_epochs: int):
    n, d = Z.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    grad = -np.ones(n)  # dual gradient: y_t w.z_t - 1
    sqnorm = np.einsum("ij,ij->i", Z, Z)
    pos = y > 0

    best_w, best_b = w.copy(), optimal_bias(Z @ w, y)
    best_obj = objective(best_w, best_b, Z, y, C)
    history = [best_obj]

    for _epoch in range(max_epochs):
        stalled = False
        for _ in range(n):
            up, low = _index_sets(alpha, pos, C)
            score = -y * grad
            i = int(np.flatnonzero(up)[np.argmax(score[up])])
            m = score[i]
            if m - score[low].min() < 1e-12:
                stalled = True
                break
            # second-order choice of j among violating low indices
            cand = np.flatnonzero(low & (score < m))
            a = sqnorm[i] + sqnorm[cand] - 2.0 * (Z[cand] @ Z[i])
            a = np.where(a > 1e-12, a, 1e-12)
            gap = m - score[cand]
            k = int(np.argmin(-(gap * gap) / a))
            j = int(cand[k])
            step = min(
                gap[k] / a[k],
                C - alpha[i] if y[i] > 0 else alpha[i],
                alpha[j] if y[j] > 0 else C - alpha[j],
            )
            if step <= 0:
                stalled = True
                break
            alpha[i] += y[i] * step
            alpha[j] -= y[j] * step
            # snap to the box so the index sets stay exact
            for t in (i, j):
                if alpha[t] < 1e-14 * C:
                    alpha[t] = 0.0
                elif alpha[t] > C * (1 - 1e-14):
                    alpha[t] = C
            dz = Z[i] - Z[j]
            w += step * dz
            grad += step * y * (Z @ dz)

        b = optimal_bias(Z @ w, y)
        primal = objective(w, b, Z, y, C)
        if primal < best_obj:
            best_obj, best_w, best_b = primal, w.copy(), b
        history.append(best_obj)
        dual = float(alpha.sum()) - 0.5 * float(w @ w)
        if stalled or best_obj - dual <= tol * max(abs(best_obj), 1e-12):
            break
    return best_w, best_b, history


def optimal_bias(scores: np.ndarray, y: np.ndarray) -> float:
    """Bias minimizing the summed hinge loss for fixed decision scores ``w.z``.

    The loss is convex and piecewise linear in ``b``; its minimum sits on a
    breakpoint ``y_k - s_k``. Ties resolve to the midpoint of the flat segment.
    """
    knots = np.unique(y - scores)
    pos = y > 0
    c = 1.0 - scores[pos]          # positive k contributes (c_k - b)+
    e = -1.0 - scores[~pos]        # negative k contributes (b - e_k)+
    c_sorted = np.sort(c)
    e_sorted = np.sort(e)
    c_suffix = np.concatenate([np.cumsum(c_sorted[::-1])[::-1], [0.0]])
    e_prefix = np.concatenate([[0.0], np.cumsum(e_sorted)])
    ic = np.searchsorted(c_sorted, knots, side="right")
    ie = np.searchsorted(e_sorted, knots, side="left")
    loss = (c_suffix[ic] - knots * (c.size - ic)) + (knots * ie - e_prefix[ie])
    best = loss.min()
    flat = knots[loss <= best + 1e-12 * max(1.0, abs(best))]
    return 0.5 * float(flat[0] + flat[-1])


def _index_sets(alpha: np.ndarray, pos: np.ndarray, C: float):
    below = alpha < C
    above = alpha > 0
    up = (pos & below) | (~pos & above)
    low = (pos & above) | (~pos & below)
    return up, low


def predict(model: LinearSvmModel | None, fv: np.ndarray) -> tuple[str, float]:
    if model is None:
        raise NotTrainedError("no trained model supplied")
    fv = np.asarray(fv, dtype=float).reshape(-1)
    margin = float(model.decision_function(fv))
    return (POTHOLE if margin > 0 else PLAIN), margin


def predict_many(model: LinearSvmModel, X: np.ndarray) -> np.ndarray:
    """Boolean pothole predictions for each row."""
    return model.decision_function(X) > 0


def serialize(m: LinearSvmModel) -> bytes:
    return _LAYOUT.pack(
        MAGIC, VERSION, m.c_param, m.tol, *m.w, m.b, *m.scaler.mean, *m.scaler.std
    )


def deserialize(data: bytes) -> LinearSvmModel:
    if len(data) < 8:
        raise ModelError(f"model payload truncated ({len(data)} bytes)")
    magic, version = struct.unpack_from("<4sI", data)
    if magic != MAGIC:
        raise ModelError("not a model file (bad magic)")
    if version != VERSION:
        raise ModelVersionError(f"unsupported model version {version}; expected {VERSION}")
    if len(data) != _LAYOUT.size:
        raise ModelError(f"model payload has {len(data)} bytes, expected {_LAYOUT.size}")
    vals = _LAYOUT.unpack(data)[2:]
    c_param, tol = vals[0], vals[1]
    w = np.array(vals[2 : 2 + N_FEATURES])
    b = vals[2 + N_FEATURES]
    rest = vals[3 + N_FEATURES :]
    scaler = Scaler(np.array(rest[:N_FEATURES]), np.array(rest[N_FEATURES:]))
    return LinearSvmModel(w, b, scaler, c_param, tol)


def cross_validate(
    X: np.ndarray,
    labels,
    folds: int = 5,
    seed: int = 0,
    C: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    max_epochs: int = DEFAULT_MAX_EPOCHS,
) -> tuple[list[float], np.ndarray]:
    """Stratified k-fold. Returns per-fold accuracy and out-of-fold predictions."""
    X = np.asarray(X, dtype=float)
    y = _signed_labels(labels) > 0
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(y), dtype=int)
    for cls in (True, False):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        fold_of[idx] = np.arange(idx.size) % folds
    oof = np.zeros(len(y), dtype=bool)
    accs = []
    for k in range(folds):
        test = fold_of == k
        if not test.any():
            continue
        model = train(X[~test], y[~test], C, tol, max_epochs)
        oof[test] = predict_many(model, X[test])
        accs.append(float(np.mean(oof[test] == y[test])))
    return accs, oof
