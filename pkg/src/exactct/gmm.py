"""1D Gaussian mixtures fit by EM, component count chosen by BIC.

The wall-enhancement posterior used by the comb-sign pipeline models the HU
histogram inside the intestine mask and returns the per-voxel responsibility
of the identified wall component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .grids import BinaryMask, CtVolume, ProbabilityVolume

__all__ = ["GmmModel", "fit_gmm", "bic", "select_k_by_bic", "wall_posterior"]

VARIANCE_FLOOR = 0.25          # (0.5 HU)^2
DEFAULT_TOL = 1e-6             # relative log-likelihood gain
DEFAULT_MAX_ITER = 500
MAX_FIT_SAMPLES = 2_000_000    # seeded uniform subsample above this


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float
    n: int
    ll_trace: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if abs(w.sum() - 1.0) > 1e-9 or (w <= 0).any():
            raise ValueError(f"weights must be positive and sum to 1, got {w}")
        if not np.isfinite(self.log_likelihood):
            raise ValueError("log-likelihood must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "variances", np.asarray(self.variances, dtype=np.float64))

    @property
    def k(self) -> int:
        return self.weights.size


def _log_gauss(x, mean, var):
    return -0.5 * (np.log(2 * np.pi * var) + (x - mean) ** 2 / var)


def _component_log_densities(x, model_or_params):
    w, mu, var = model_or_params
    return np.log(w)[None, :] + _log_gauss(x[:, None], mu[None, :], var[None, :])


def _kmeanspp_means(x, k, rng):
    """Seeded k-means++ style spread of initial means."""
    means = [x[rng.integers(x.size)]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(means)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            means.append(x[rng.integers(x.size)])
            continue
        probs = d2 / total
        means.append(x[rng.choice(x.size, p=probs)])
    return np.array(means, dtype=np.float64)


def fit_gmm(samples, k: int, seed: int = 0, tol: float = DEFAULT_TOL,
            max_iter: int = DEFAULT_MAX_ITER) -> GmmModel:
    """EM fit of a k-component 1D Gaussian mixture; deterministic per seed."""
    # Sorting makes the fit (including the seeded init) independent of the
    # order in which samples arrive.
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if x.size < 2 * k:
        raise ValueError(f"need at least {2 * k} samples for k={k}, got {x.size}")

    rng = np.random.default_rng(seed)
    means = _kmeanspp_means(x, k, rng)
    var0 = max(x.var(), VARIANCE_FLOOR)
    variances = np.full(k, var0)
    weights = np.full(k, 1.0 / k)

    trace = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        log_dens = _component_log_densities(x, (weights, means, variances))
        log_norm = logsumexp(log_dens, axis=1)
        ll = float(log_norm.sum())
        trace.append(ll)
        resp = np.exp(log_dens - log_norm[:, None])

        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-300)
        weights = nk / x.size
        means = (resp * x[:, None]).sum(axis=0) / nk
        variances = (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / nk
        variances = np.maximum(variances, VARIANCE_FLOOR)
        # keep weights strictly positive for the model invariant
        weights = np.maximum(weights, 1e-12)
        weights = weights / weights.sum()

        if np.isfinite(prev_ll) and ll - prev_ll < tol * max(abs(ll), 1.0):
            break
        prev_ll = ll

    log_dens = _component_log_densities(x, (weights, means, variances))
    ll = float(logsumexp(log_dens, axis=1).sum())
    trace.append(ll)
    return GmmModel(weights, means, variances, ll, x.size, tuple(trace))


def bic(model: GmmModel, param_count: str = "parameters") -> float:
    """-2 ln L + p ln N.

    param_count='parameters' uses p = 3k - 1 (weights k-1, means k, variances k);
    param_count='components' uses the literal p = k.
    """
    if param_count == "parameters":
        p = 3 * model.k - 1
    elif param_count == "components":
        p = model.k
    else:
        raise ValueError(f"param_count must be 'parameters' or 'components', got {param_count!r}")
    return -2.0 * model.log_likelihood + p * np.log(model.n)


def select_k_by_bic(samples, k_range=range(1, 7), seed: int = 0,
                    param_count: str = "parameters") -> GmmModel:
    """Fit every k in k_range and return the BIC-minimizing model (ties -> smaller k)."""
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("k_range must be nonempty")
    best, best_bic = None, np.inf
    for k in ks:
        model = fit_gmm(samples, k, seed=seed)
        b = bic(model, param_count)
        if b < best_bic:
            best, best_bic = model, b
    return best


def _wall_component(model: GmmModel) -> int:
    """Among the two heaviest components, the wall is the brighter one."""
    if model.k == 1:
        return 0
    heavy = np.argsort(model.weights)[-2:]
    return int(heavy[np.argmax(model.means[heavy])])


def wall_posterior(vol: CtVolume, intestine: BinaryMask, seed: int = 0,
                   k_range=range(1, 7)) -> ProbabilityVolume:
    """Posterior responsibility of the wall component inside the intestine mask."""
    vol.require_same_grid(intestine, "intestine mask")
    inside = intestine.voxels
    if not inside.any():
        raise ValueError("intestine mask is empty")
    samples = vol.voxels[inside].astype(np.float64)
    if samples.size > MAX_FIT_SAMPLES:
        rng = np.random.default_rng(seed)
        samples = rng.choice(samples, size=MAX_FIT_SAMPLES, replace=False)

    model = select_k_by_bic(samples, k_range=k_range, seed=seed)
    widx = _wall_component(model)

    x = vol.voxels[inside].astype(np.float64)
    log_dens = _component_log_densities(x, (model.weights, model.means, model.variances))
    resp = np.exp(log_dens[:, widx] - logsumexp(log_dens, axis=1))

    out = np.zeros(vol.dims, dtype=np.float32)
    out[inside] = np.clip(resp, 0.0, 1.0)
    return ProbabilityVolume(out, vol.spacing, vol.affine)
