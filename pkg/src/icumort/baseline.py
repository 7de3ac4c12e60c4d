"""L2-regularized logistic regression on last-hour plus static features.

The comparison model sees the 13 channel values at hour 47 concatenated with
the 7 static features, exactly as standardized for the sequence model. It is
fit by full-batch gradient descent with the shared Adam kernel; the learning
rate holds at 0.1 for 300 iterations to cover distance, then decays
geometrically to 1e-8 over the remaining 200 so the iterate settles onto the
convex optimum instead of oscillating around it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adam import AdamState, adam_step
from .errors import ConfigError, DataError
from .featurize import FeatureTensor

N_LR_FEATURES = 20
MAX_ITERATIONS = 500
PLATEAU_ITERATIONS = 300
FINAL_LR_RATIO = 1e-7  # 0.1 decays to 1e-8 across the tail
GRAD_NORM_TOL = 1e-8


@dataclass
class LrModel:
    weights: np.ndarray  # (20,)
    bias: float
    lam: float


def last_hour_features(tensor: FeatureTensor) -> np.ndarray:
    """Hour-47 channel values concatenated with the static vector."""
    return np.concatenate([tensor.seq[-1], tensor.static])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lr_objective(weights: np.ndarray, bias: float, features: np.ndarray,
                 labels: np.ndarray, lam: float) -> float:
    """Mean BCE plus (lam/2)||w||^2; the bias is not penalized."""
    z = features @ weights + bias
    # log(1 + exp(-|z|)) form avoids overflow at large |z|.
    losses = np.logaddexp(0.0, -z) + (1.0 - labels) * z
    return float(np.mean(losses) + 0.5 * lam * np.dot(weights, weights))


def lr_gradients(weights: np.ndarray, bias: float, features: np.ndarray,
                 labels: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    p = _sigmoid(features @ weights + bias)
    residual = p - labels
    grad_w = features.T @ residual / labels.size + lam * weights
    grad_b = float(np.mean(residual))
    return grad_w, grad_b


def train_lr(features: np.ndarray, labels: np.ndarray, lam: float = 1.0
             ) -> LrModel:
    """Fit the baseline; deterministic (zero init, fixed schedule).

    Stops at the iteration cap or when the joint gradient norm drops below
    1e-8. Requires at least two samples and both classes present.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise ConfigError("features must be (n, d) aligned with labels")
    if features.shape[0] < 2:
        raise ConfigError("need at least two samples to fit")
    if len(set(labels.tolist())) < 2:
        raise DataError("labels are single-class; cannot fit a classifier")
    if lam < 0:
        raise ConfigError("lambda must be nonnegative")

    weights = np.zeros(features.shape[1])
    bias = np.zeros(1)
    params = {"w": weights, "b": bias}
    state = AdamState(lr=0.1)
    decay = FINAL_LR_RATIO ** (1.0 / (MAX_ITERATIONS - PLATEAU_ITERATIONS))
    for it in range(MAX_ITERATIONS):
        grad_w, grad_b = lr_gradients(weights, float(bias[0]), features,
                                      labels, lam)
        norm = float(np.sqrt(np.dot(grad_w, grad_w) + grad_b * grad_b))
        if norm < GRAD_NORM_TOL:
            break
        if it >= PLATEAU_ITERATIONS:
            state.lr *= decay
        adam_step(params, {"w": grad_w, "b": np.array([grad_b])}, state)
    return LrModel(weights=weights, bias=float(bias[0]), lam=lam)


def predict_lr(model: LrModel, features: np.ndarray) -> np.ndarray:
    """sigmoid(w.x + b) for one feature vector or a batch."""
    features = np.asarray(features, dtype=np.float64)
    return _sigmoid(features @ model.weights + model.bias)


_COEF_NAMES = [f"seq_c{i}_h47" for i in range(13)] + [
    "age_s", "cat_ss", "cat_us", "cat_med", "aids", "hem", "met",
]


def save_lr(model: LrModel, path: str | Path, seed: int) -> None:
    """Text checkpoint: 21 labeled coefficients plus lambda and seed."""
    lines = [f"lambda {model.lam:.17g}", f"seed {seed}"]
    for name, w in zip(_COEF_NAMES, model.weights):
        lines.append(f"{name} {w:.17g}")
    lines.append(f"bias {model.bias:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_lr(path: str | Path) -> LrModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing checkpoint file: expected {path}")
    values: dict[str, float] = {}
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        key, raw = line.split()
        values[key] = float(raw)
    try:
        weights = np.array([values[name] for name in _COEF_NAMES])
        return LrModel(weights=weights, bias=values["bias"], lam=values["lambda"])
    except KeyError as exc:
        raise DataError(f"{path}: missing coefficient {exc}") from exc
