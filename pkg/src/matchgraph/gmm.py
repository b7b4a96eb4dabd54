"""Diagonal-covariance Gaussian mixture estimated with EM.

This is the single clustering pass of the pipeline: a k-means++ seeded start
followed by plain EM. All responsibility math runs in log space; 128-D
Gaussians underflow in linear space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .parallel import seed_key

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class EmConfig:
    """Settings for train_gmm.

    variance_floor=None means the floor is derived from the training data as
    1e-6 times the per-dimension variance; pass a positive float to override
    with an absolute floor.
    """

    n_components: int
    max_iters: int = 100
    tol: float = 1e-5
    variance_floor: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError(f"n_components must be >= 1, got {self.n_components}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.variance_floor is not None and self.variance_floor <= 0:
            raise ValueError("variance_floor must be positive")


@dataclass(frozen=True, eq=False)
class GmmModel:
    """Mixture parameters: weights (K,), means (K, dim), variances (K, dim)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    train_log_likelihoods: tuple[float, ...] = field(default=())

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.asarray(self.means, dtype=np.float64)
        v = np.asarray(self.variances, dtype=np.float64)
        if w.ndim != 1 or m.ndim != 2 or v.shape != m.shape or w.shape[0] != m.shape[0]:
            raise ValueError(
                f"inconsistent parameter shapes: weights {w.shape}, "
                f"means {m.shape}, variances {v.shape}"
            )
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        if np.any(v <= 0):
            raise ValueError("variances must be strictly positive")
        for name, arr in (("weights", w), ("means", m), ("variances", v)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite value in {name}")
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _check_data(model: GmmModel, data: np.ndarray) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    if data.ndim != 2 or data.shape[1] != model.dim:
        raise ValueError(f"data must have shape (*, {model.dim}), got {data.shape}")
    return data


def log_joint(model: GmmModel, data: np.ndarray) -> np.ndarray:
    """log(w_k * N(x; mu_k, sigma2_k)) for every row and component, shape (F, K)."""
    data = _check_data(model, data)
    inv_var = 1.0 / model.variances
    # -0.5 * sum_d [(x_d - mu_kd)^2 / var_kd] expanded to use matmul
    quad = (
        (data**2) @ inv_var.T
        - 2.0 * (data @ (model.means * inv_var).T)
        + np.sum(model.means**2 * inv_var, axis=1)
    )
    log_norm = -0.5 * (model.dim * _LOG_2PI + np.sum(np.log(model.variances), axis=1))
    return np.log(model.weights) + log_norm - 0.5 * quad


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    peak = np.max(a, axis=axis, keepdims=True)
    out = peak + np.log(np.sum(np.exp(a - peak), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def posteriors(model: GmmModel, data: np.ndarray) -> np.ndarray:
    """Responsibility matrix gamma with rows summing to 1, shape (F, K)."""
    lj = log_joint(model, data)
    return np.exp(lj - _logsumexp(lj, axis=1)[:, None])


def soft_assign(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """Posterior responsibilities of one point, shape (K,)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.dim:
        raise ValueError(f"x must be a vector of length {model.dim}, got shape {x.shape}")
    return posteriors(model, x[None, :])[0]


def log_likelihood(model: GmmModel, data: np.ndarray) -> float:
    """Total log density of the data under the mixture."""
    return float(np.sum(_logsumexp(log_joint(model, data), axis=1)))


def _kmeans_pp_centers(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    centers = np.empty((k, data.shape[1]), dtype=np.float64)
    centers[0] = data[rng.integers(n)]
    closest = np.sum((data - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # remaining points coincide with a chosen center; pick uniformly
            centers[i] = data[rng.integers(n)]
        else:
            target = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), target))
            centers[i] = data[min(idx, n - 1)]
        closest = np.minimum(closest, np.sum((data - centers[i]) ** 2, axis=1))
    return centers


def train_gmm(data: np.ndarray, cfg: EmConfig) -> GmmModel:
    """Fit a diagonal GMM with k-means++ seeding followed by EM.

    Deterministic for fixed (data, cfg). Stops when the relative improvement
    of the average log-likelihood drops below cfg.tol or after cfg.max_iters.
    The per-iteration average log-likelihood trace is kept on the model.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError(f"training data must be a non-empty matrix, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise ValueError("training data contains non-finite values")
    n, dim = data.shape
    k = cfg.n_components
    if n < k:
        raise ValueError(f"need at least {k} rows to fit {k} components, got {n}")

    data_var = np.var(data, axis=0)
    if cfg.variance_floor is None:
        floor = np.maximum(1e-6 * data_var, 1e-12)
    else:
        floor = np.full(dim, cfg.variance_floor)

    rng = np.random.default_rng(seed_key(cfg.seed))
    means = _kmeans_pp_centers(data, k, rng)
    variances = np.maximum(np.tile(data_var, (k, 1)), floor)
    weights = np.full(k, 1.0 / k)
    model = GmmModel(weights=weights, means=means, variances=variances)

    history: list[float] = []
    prev_avg = -np.inf
    for _ in range(cfg.max_iters):
        lj = log_joint(model, data)
        log_norm = _logsumexp(lj, axis=1)
        avg_ll = float(np.mean(log_norm))
        history.append(avg_ll)

        gamma = np.exp(lj - log_norm[:, None])
        nk = gamma.sum(axis=0)
        safe_nk = np.maximum(nk, 1e-32)
        new_means = (gamma.T @ data) / safe_nk[:, None]
        sq = (gamma.T @ (data**2)) / safe_nk[:, None]
        new_vars = np.maximum(sq - new_means**2, floor)
        new_weights = np.maximum(nk, 1e-32)
        new_weights = new_weights / new_weights.sum()
        model = GmmModel(weights=new_weights, means=new_means, variances=new_vars)

        if np.isfinite(prev_avg) and (avg_ll - prev_avg) <= cfg.tol * abs(prev_avg):
            break
        prev_avg = avg_ll

    return GmmModel(
        weights=model.weights,
        means=model.means,
        variances=model.variances,
        train_log_likelihoods=tuple(history),
    )


def save_model(model: GmmModel, path) -> None:
    """Write the mixture as JSON with full float round-trip precision."""
    doc = {
        "version": 1,
        "K": model.n_components,
        "dim": model.dim,
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "variances": model.variances.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> GmmModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid GMM model file {path}: {exc}") from exc
    for key in ("version", "K", "dim", "weights", "means", "variances"):
        if key not in doc:
            raise FormatError(f"GMM model file {path} missing field {key!r}")
    if doc["version"] != 1:
        raise FormatError(f"unsupported GMM model version {doc['version']}")
    model = GmmModel(
        weights=np.array(doc["weights"], dtype=np.float64),
        means=np.array(doc["means"], dtype=np.float64),
        variances=np.array(doc["variances"], dtype=np.float64),
    )
    if model.n_components != doc["K"] or model.dim != doc["dim"]:
        raise FormatError(f"GMM model file {path} has inconsistent K/dim fields")
    return model
