"""Ridge-regression readout and NMSE evaluation.

The output layer solves the regularized normal equations of the feature
matrix with an appended constant-1 column; a brute-force least-squares test
oracle cross-checks the factorization path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import RankDeficiencyError, ValidationError


@dataclass(frozen=True)
class ReadoutModel:
    """Trained linear readout; the last weight multiplies a constant-1 feature."""

    weights: np.ndarray
    ridge_lambda: float
    add_bias: bool = True

    @property
    def n_features(self) -> int:
        return len(self.weights) - (1 if self.add_bias else 0)


@dataclass(frozen=True)
class EvalReport:
    """Train/test errors of one fitted readout."""

    nmse_train: float
    nmse_test: float
    normal_residual: float


def _with_bias(x: np.ndarray, add_bias: bool) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"feature matrix must be 2-D, got shape {x.shape}")
    if not add_bias:
        return x
    return np.hstack([x, np.ones((x.shape[0], 1))])


def train_ridge(x: np.ndarray, y: np.ndarray, ridge_lambda: float,
                add_bias: bool = True, regularize_bias: bool = True) -> ReadoutModel:
    """Solve w = argmin ||Xw - y||^2 + lambda ||w||^2 via the normal equations.

    A constant-1 column is appended unless ``add_bias`` is false; with
    ``regularize_bias`` false the intercept weight is left out of the
    penalty. Cholesky plus one step of iterative refinement keeps the
    normal-equation residual below 1e-8 relative to ||X^T y||.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    if ridge_lambda < 0.0:
        raise ValidationError(f"lambda must be >= 0, got {ridge_lambda}")
    design = _with_bias(x, add_bias)
    rows, cols = design.shape
    if rows != len(y):
        raise ValidationError(f"{rows} feature rows vs {len(y)} targets")
    if not (np.all(np.isfinite(design)) and np.all(np.isfinite(y))):
        raise ValidationError("non-finite entries in training data")
    if rows < cols:
        warnings.warn(f"underdetermined fit: {rows} rows < {cols} columns",
                      stacklevel=2)

    gram = design.T @ design
    penalty = np.full(cols, ridge_lambda)
    if add_bias and not regularize_bias:
        penalty[-1] = 0.0
    gram[np.diag_indices(cols)] += penalty
    rhs = design.T @ y
    try:
        factor = cho_factor(gram, lower=True)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(
            "normal equations are singular; use a positive lambda") from exc
    w = cho_solve(factor, rhs)
    w += cho_solve(factor, rhs - gram @ w)  # one refinement pass

    residual = float(np.linalg.norm(gram @ w - rhs))
    bound = 1e-8 * float(np.linalg.norm(rhs))
    if residual > bound:
        raise RankDeficiencyError(
            f"normal-equation residual {residual:.3e} exceeds {bound:.3e}; "
            "the feature matrix is too ill-conditioned for this lambda")
    return ReadoutModel(weights=w, ridge_lambda=ridge_lambda, add_bias=add_bias)


def predict(model: ReadoutModel, x: np.ndarray) -> np.ndarray:
    """y_hat = X w, appending the bias column the model was trained with."""
    design = _with_bias(x, model.add_bias)
    if design.shape[1] != len(model.weights):
        raise ValidationError(
            f"model expects {model.n_features} features, got {design.shape[1] - (1 if model.add_bias else 0)}")
    return design @ model.weights


def nmse(pred: np.ndarray, target: np.ndarray,
         normalization: str = "variance") -> float:
    """Normalized mean square error sum((p-t)^2) / sum((t-mean t)^2).

    ``normalization="power"`` divides by sum(t^2) instead, for comparison
    with studies that normalize by signal power.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if len(pred) != len(target) or len(target) == 0:
        raise ValidationError(
            f"prediction length {len(pred)} vs target length {len(target)}")
    if normalization == "variance":
        denom = float(np.sum((target - target.mean()) ** 2))
    elif normalization == "power":
        denom = float(np.sum(target**2))
    else:
        raise ValidationError(f"unknown normalization {normalization!r}")
    if denom == 0.0:
        raise ValidationError("target is constant; NMSE normalization undefined")
    return float(np.sum((pred - target) ** 2)) / denom


def save_model(model: ReadoutModel, path) -> None:
    """One weight per line, preceded by a header with lambda and column count."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# ridge_lambda={model.ridge_lambda!r} "
                 f"columns={len(model.weights)} add_bias={int(model.add_bias)}\n")
        for w in model.weights:
            fh.write(f"{w!r}\n")


def load_model(path) -> ReadoutModel:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# ridge_lambda="):
            raise ValidationError(f"not a readout model file: {path}")
        fields = dict(item.split("=") for item in header[2:].split())
        weights = np.array([float(line) for line in fh if line.strip()])
    if len(weights) != int(fields["columns"]):
        raise ValidationError(f"expected {fields['columns']} weights, got {len(weights)}")
    return ReadoutModel(weights=weights,
                        ridge_lambda=float(fields["ridge_lambda"]),
                        add_bias=bool(int(fields.get("add_bias", "1"))))
