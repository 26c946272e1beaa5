"""Central finite-difference oracle for the training gradient."""

import numpy as np

from traj_shapley.predictor import Batch, ModelParams, batch_nll, nll_gradient

STEP = 1e-5


def numeric_gradient(params: ModelParams, batch: Batch, step: float = STEP) -> np.ndarray:
    theta = params.to_vector()
    out = np.empty_like(theta)
    for k in range(len(theta)):
        up, down = theta.copy(), theta.copy()
        up[k] += step
        down[k] -= step
        out[k] = (batch_nll(ModelParams.from_vector(params.dims, up), batch)
                  - batch_nll(ModelParams.from_vector(params.dims, down), batch)) / (2 * step)
    return out


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max_k |a_k - n_k| / max(|a_k|, |n_k|), counting 0/0 as 0."""
    den = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.divide(np.abs(analytic - numeric), den, out=np.zeros_like(den), where=den > 0)
    return float(rel.max())


def check(params: ModelParams, batch: Batch) -> float:
    _, grad = nll_gradient(params, batch)
    return max_relative_error(grad.to_vector(), numeric_gradient(params, batch))


def random_setting(dims, seed: int) -> ModelParams:
    """Glorot weights plus small random biases, so no gradient block vanishes."""
    rng = np.random.default_rng(seed)
    base = ModelParams.init(dims, seed, scale=1.0).to_vector()
    return ModelParams.from_vector(dims, base + 0.1 * rng.normal(size=base.shape))
