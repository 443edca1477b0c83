"""Polynomial-kernel C-SVM trained by sequential minimal optimization.

The solver is the maximal-violating-pair variant of SMO on the dual problem

    min 1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  sum_i a_i y_i = 0

with Q_ij = y_i y_j K(x_i, x_j). It is deterministic for a given row order:
ties in pair selection resolve toward the lower index and no randomness is
used. Multiclass classification composes one-vs-rest binary machines that
share a z-score scaler and an optional feature subset.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (ClassTooSmall, DimensionMismatch, NonFiniteFeature,
                     SingleClassInput)
from .selection import FeatureSubset, LabeledDataset, subset_from_json_dict, subset_to_json_dict

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class KernelParams:
    """K(u, v) = (gamma * <u, v> + coef0) ** degree; gamma=None means 1/dim."""

    degree: int = 3
    gamma: float | None = None
    coef0: float = 1.0

    def resolve_gamma(self, dim: int) -> float:
        return self.gamma if self.gamma is not None else 1.0 / dim


def kernel_matrix(kernel: KernelParams, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    g = kernel.resolve_gamma(A.shape[1])
    return (g * (A @ B.T) + kernel.coef0) ** kernel.degree


@dataclass
class BinarySvm:
    """A trained binary machine; alphas are the signed multipliers a_i * y_i."""

    support_vectors: np.ndarray
    alphas: np.ndarray
    bias: float
    kernel: KernelParams
    C: float

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        if len(self.support_vectors) == 0:
            return np.full(len(X), self.bias)
        return kernel_matrix(self.kernel, X, self.support_vectors) @ self.alphas + self.bias


@dataclass(frozen=True)
class Scaler:
    """Per-feature z-score parameters estimated on the training split."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std

    @staticmethod
    def fit(X: np.ndarray) -> "Scaler":
        std = np.std(X, axis=0)
        std = np.where(std > 0.0, std, 1.0)
        return Scaler(mean=np.mean(X, axis=0), std=std)


@dataclass
class SvmModel:
    """One-vs-rest composition over an ordered class list."""

    classes: list
    machines: list            # one BinarySvm per class
    scaler: Scaler
    feature_subset: FeatureSubset | None
    raw_dim: int
    provenance: dict = field(default_factory=dict)


def _check_finite(X: np.ndarray, what: str):
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature(f"{what} contains NaN or inf")


def train_binary_svm(X, y, C: float = 1.0, kernel: KernelParams | None = None,
                     tol: float = 1e-3, seed: int = 0,
                     max_iter: int | None = None) -> BinarySvm:
    """Solve the soft-margin dual by SMO until the KKT gap falls below tol.

    X is (n, dim) after any scaling, y holds -1/+1 labels. The returned bias
    is the midpoint of the feasible interval, so every training point
    satisfies its KKT case within tol.
    """
    del seed  # the solver is deterministic; kept for interface stability
    kernel = kernel or KernelParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_finite(X, "training features")
    if len(set(np.sign(y).tolist())) < 2:
        raise SingleClassInput("both +1 and -1 labels are required")
    if C <= 0 or tol <= 0:
        raise ValueError("C and tol must be positive")

    n = len(X)
    K = kernel_matrix(kernel, X, X)
    Q = (y[:, None] * y[None, :]) * K
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective at alpha = 0

    if max_iter is None:
        max_iter = max(20_000, 200 * n)

    pos, neg = y > 0, y < 0

    for _ in range(max_iter):
        viol = -y * grad
        up = (pos & (alpha < C - 1e-12)) | (neg & (alpha > 1e-12))
        low = (neg & (alpha < C - 1e-12)) | (pos & (alpha > 1e-12))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, viol, -np.inf)))
        j = int(np.argmin(np.where(low, viol, np.inf)))
        if viol[i] - viol[j] <= tol:
            break

        # two-variable analytic step (Platt's update; E_k = y_k * grad_k)
        s = y[i] * y[j]
        if s < 0:
            L = max(0.0, alpha[j] - alpha[i])
            H = min(C, C + alpha[j] - alpha[i])
        else:
            L = max(0.0, alpha[i] + alpha[j] - C)
            H = min(C, alpha[i] + alpha[j])
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        eta = max(eta, 1e-12)
        aj_new = alpha[j] + y[j] * (y[i] * grad[i] - y[j] * grad[j]) / eta
        aj_new = min(max(aj_new, L), H)
        ai_new = alpha[i] + s * (alpha[j] - aj_new)

        d_i, d_j = ai_new - alpha[i], aj_new - alpha[j]
        if abs(d_i) < 1e-15 and abs(d_j) < 1e-15:
            break
        grad += Q[:, i] * d_i + Q[:, j] * d_j
        alpha[i], alpha[j] = ai_new, aj_new
    else:
        log.warning("SMO hit max_iter=%d before reaching tol=%g", max_iter, tol)

    viol = -y * grad
    up = (pos & (alpha < C - 1e-12)) | (neg & (alpha > 1e-12))
    low = (neg & (alpha < C - 1e-12)) | (pos & (alpha > 1e-12))
    hi = viol[up].max() if up.any() else 0.0
    lo = viol[low].min() if low.any() else 0.0
    bias = float((hi + lo) / 2.0)

    sv = alpha > 1e-12
    return BinarySvm(support_vectors=X[sv].copy(), alphas=(alpha * y)[sv],
                     bias=bias, kernel=kernel, C=C)


def kkt_violations(machine: BinarySvm, X, y, tol: float) -> int:
    """Count training points whose KKT case fails at the given tolerance."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    f = machine.decision_values(X)
    # recover unsigned alphas for the training rows (non-SVs have alpha 0);
    # SVs preserve training order, so a forward scan with a sign check on the
    # signed multiplier is enough
    alpha = np.zeros(len(X))
    sv_index = 0
    for idx in range(len(X)):
        if sv_index < len(machine.support_vectors) and np.array_equal(
                X[idx], machine.support_vectors[sv_index]) and (
                np.sign(machine.alphas[sv_index]) == np.sign(y[idx])):
            alpha[idx] = abs(machine.alphas[sv_index])
            sv_index += 1
    margins = y * f
    bad = 0
    for a, m in zip(alpha, margins):
        if a <= 1e-12:
            ok = m >= 1.0 - tol
        elif a >= machine.C - 1e-9:
            ok = m <= 1.0 + tol
        else:
            ok = abs(m - 1.0) <= tol
        bad += 0 if ok else 1
    return bad


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    kernel: KernelParams = field(default_factory=KernelParams)
    tol: float = 1e-3


def train_multiclass(data: LabeledDataset, cfg: SvmConfig | None = None,
                     feature_subset: FeatureSubset | None = None,
                     class_order: list | None = None,
                     provenance: dict | None = None) -> SvmModel:
    """One-vs-rest machines over the dataset's classes.

    The feature subset (if any) is applied first, then a z-score scaler fit
    on the training rows; both are stored so predictions are self-contained.
    """
    cfg = cfg or SvmConfig()
    X = np.asarray(data.features, dtype=np.float64)
    _check_finite(X, "training features")
    raw_dim = X.shape[1]
    labels = list(data.labels)
    classes = class_order if class_order is not None else sorted(set(labels))
    if len(classes) < 2:
        raise SingleClassInput("need at least two classes")
    for c in classes:
        if labels.count(c) < 2:
            raise ClassTooSmall(f"class {c!r} has fewer than 2 rows")

    if feature_subset is not None:
        X = feature_subset.apply(X)
    scaler = Scaler.fit(X)
    Xs = scaler.apply(X)

    machines = []
    for c in classes:
        y = np.where(np.asarray([lab == c for lab in labels]), 1.0, -1.0)
        machines.append(train_binary_svm(Xs, y, C=cfg.C, kernel=cfg.kernel, tol=cfg.tol))

    return SvmModel(classes=list(classes), machines=machines, scaler=scaler,
                    feature_subset=feature_subset, raw_dim=raw_dim,
                    provenance=dict(provenance or {}))


def decision_matrix(model: SvmModel, X) -> np.ndarray:
    """(n, n_classes) one-vs-rest decision values for raw feature rows."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.raw_dim:
        raise DimensionMismatch(f"expected {model.raw_dim} features, got {X.shape[1]}")
    _check_finite(X, "query features")
    if model.feature_subset is not None:
        X = model.feature_subset.apply(X)
    Xs = model.scaler.apply(X)
    return np.column_stack([m.decision_values(Xs) for m in model.machines])


def predict(model: SvmModel, x):
    """Class with the highest decision value; ties go to the earlier class."""
    values = decision_matrix(model, x)
    if values.shape[0] == 1:
        return model.classes[int(np.argmax(values[0]))]
    return [model.classes[int(np.argmax(row))] for row in values]


def predict_level(model: SvmModel, x) -> int:
    """predict() for models trained on integer level labels."""
    out = predict(model, x)
    if isinstance(out, list):
        return [int(v) for v in out]
    return int(out)


# -- serialization ------------------------------------------------------------

def model_to_json_dict(model: SvmModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "svm_one_vs_rest",
        "classes": model.classes,
        "raw_dim": model.raw_dim,
        "scaler": {"mean": model.scaler.mean.tolist(), "std": model.scaler.std.tolist()},
        "feature_subset": (subset_to_json_dict(model.feature_subset)
                           if model.feature_subset is not None else None),
        "machines": [
            {
                "support_vectors": m.support_vectors.tolist(),
                "alphas": m.alphas.tolist(),
                "bias": m.bias,
                "kernel": {"degree": m.kernel.degree, "gamma": m.kernel.gamma,
                           "coef0": m.kernel.coef0},
                "C": m.C,
            }
            for m in model.machines
        ],
        "provenance": model.provenance,
    }


def model_from_json_dict(doc: dict) -> SvmModel:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {doc.get('format_version')}")
    subset = (subset_from_json_dict(doc["feature_subset"])
              if doc.get("feature_subset") else None)
    inner_dim = len(subset.indices) if subset is not None else doc["raw_dim"]
    machines = []
    for m in doc["machines"]:
        kp = KernelParams(degree=m["kernel"]["degree"], gamma=m["kernel"]["gamma"],
                          coef0=m["kernel"]["coef0"])
        sv = np.asarray(m["support_vectors"], dtype=np.float64).reshape(
            len(m["alphas"]), inner_dim)
        machines.append(BinarySvm(
            support_vectors=sv,
            alphas=np.asarray(m["alphas"], dtype=np.float64),
            bias=m["bias"], kernel=kp, C=m["C"]))
    scaler = Scaler(mean=np.asarray(doc["scaler"]["mean"], dtype=np.float64),
                    std=np.asarray(doc["scaler"]["std"], dtype=np.float64))
    return SvmModel(classes=doc["classes"], machines=machines, scaler=scaler,
                    feature_subset=subset, raw_dim=doc["raw_dim"],
                    provenance=doc.get("provenance", {}))


def save_model(path, model: SvmModel):
    with open(path, "w") as fh:
        json.dump(model_to_json_dict(model), fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> SvmModel:
    with open(path) as fh:
        return model_from_json_dict(json.load(fh))
