"""Sample paths of latent time series and realisations of latent spatial fields.

Randomness comes from :class:`SeedSpec`: a master seed plus a stream index.
Each ``(master_seed, stream_id)`` pair maps to its own PCG64 stream through
``numpy.random.SeedSequence(master_seed, spawn_key=(stream_id,))``, so
replications are independent of one another and of execution order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal
from scipy.spatial.distance import cdist

from .errors import FactorizationFailure, SpatialModel, TimeSeriesModel
from .models import BlockKind, Domain, LatentModel
from .moments import block_spatial_cov

#: Diagonal jitter for the spatial factorisation, as a fraction of the total sill.
JITTER = 1e-10
JITTER_ESCALATIONS = 3


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))


def _as_seed(seed: SeedSpec | int) -> SeedSpec:
    return seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))


def simulate_block(kind: BlockKind, values: Sequence[float], n: int,
                   rng: np.random.Generator) -> np.ndarray:
    if kind is BlockKind.WN:
        return rng.normal(0.0, np.sqrt(values[0]), n)
    if kind is BlockKind.QN:
        # sqrt(12) Q (U_t - U_{t-1}) has autocovariance (2Q^2, -Q^2, 0, ...) since Var(U) = 1/12
        u = rng.random(n + 1)
        return np.sqrt(12.0 * values[0]) * np.diff(u)
    if kind is BlockKind.DRIFT:
        return values[0] * np.arange(1, n + 1, dtype=float)
    if kind is BlockKind.RW:
        return np.cumsum(rng.normal(0.0, np.sqrt(values[0]), n))
    if kind is BlockKind.MA1:
        r, z2 = values
        e = rng.normal(0.0, np.sqrt(z2), n + 1)
        return e[1:] + r * e[:-1]
    if kind is BlockKind.AR1:
        rho, nu2 = values
        e = rng.normal(0.0, np.sqrt(nu2), n)
        e[0] *= 1.0 / np.sqrt(1 - rho * rho)  # stationary start
        return signal.lfilter([1.0], [1.0, -rho], e)
    raise SpatialModel(f"{kind} is a spatial block")


def simulate_time_series(model: LatentModel, theta: Sequence[float] | None, n: int,
                         seed: SeedSpec | int) -> np.ndarray:
    """Sum of independently simulated blocks, ``t = 1..n``."""
    if model.domain is Domain.SPATIAL:
        raise SpatialModel("use simulate_spatial_field for spatial models")
    if n < 1:
        raise ValueError("n must be >= 1")
    theta = model.theta if theta is None else theta
    rng = _as_seed(seed).generator()
    out = np.zeros(n)
    for kind, vals in model.split(theta):
        out += simulate_block(kind, vals, n, rng)
    return out


def spatial_covariance_matrix(model: LatentModel, theta: Sequence[float],
                              coords: np.ndarray) -> np.ndarray:
    d = cdist(coords, coords)
    return sum(block_spatial_cov(k, v, d) for k, v in model.split(theta))


def _factor(C: np.ndarray, sill: float) -> np.ndarray:
    jitters = [0.0] + [JITTER * sill * 10 ** i for i in range(JITTER_ESCALATIONS + 1)]
    for jit in jitters:
        try:
            return np.linalg.cholesky(C + jit * np.eye(len(C)))
        except np.linalg.LinAlgError:
            continue
    raise FactorizationFailure(f"covariance not positive definite after jitter {jitters[-1]:.3g}")


def simulate_spatial_field(model: LatentModel, theta: Sequence[float] | None,
                           coords: Sequence[Sequence[float]], seed: SeedSpec | int,
                           size: int | None = None) -> np.ndarray:
    """Zero-mean Gaussian field at ``coords`` with the model's covariance.

    Returns shape ``(len(coords),)``, or ``(size, len(coords))`` when ``size``
    is given.
    """
    if model.domain is not Domain.SPATIAL:
        raise TimeSeriesModel("simulate_spatial_field needs a spatial model")
    xy = np.atleast_2d(np.asarray(coords, dtype=float))
    if xy.size == 0 or xy.shape[1] != 2 or not np.all(np.isfinite(xy)):
        raise ValueError("coords must be a non-empty finite sequence of 2-D points")
    theta = model.theta if theta is None else np.asarray(theta, dtype=float)
    C = spatial_covariance_matrix(model, theta, xy)
    sill = float(sum(v[1] for _, v in model.split(theta)))
    L = _factor(C, sill)
    rng = _as_seed(seed).generator()
    z = rng.standard_normal((1 if size is None else size, len(xy)))
    draws = z @ L.T
    return draws[0] if size is None else draws
