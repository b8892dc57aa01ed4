"""Sample moments and minimum-distance estimators (GMWM and autocovariance GMM).

Both estimators minimise ``(m_hat - m(theta))^T W (m_hat - m(theta))`` over
the unconstrained reparametrisation of the model (log for positive
parameters, atanh for coefficients) with a multi-start Nelder-Mead search.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .errors import (
    InsufficientLags,
    InsufficientScales,
    LagTooLarge,
    SeriesTooShort,
    ZeroVarianceScale,
)
from .models import BlockKind, LatentModel, from_unconstrained, to_unconstrained, warn_if_unproven
from .moments import MomentKind, MomentVector, _require_stationary, block_acvf, wv_function


# ---------------------------------------------------------------------------
# sample moments

@dataclass(frozen=True, eq=False)
class WvEstimate:
    scales: np.ndarray
    values: np.ndarray
    num_coeffs: np.ndarray
    std_errors: np.ndarray

    @property
    def J(self) -> int:
        return len(self.values)

    @classmethod
    def from_values(cls, values: Sequence[float], n: int) -> "WvEstimate":
        """Wrap given wavelet variances as if estimated from a series of length ``n``."""
        values = np.asarray(values, dtype=float)
        J = len(values)
        tau = 2.0 ** np.arange(1, J + 1)
        M = n - tau + 1
        if np.any(M < 1):
            raise SeriesTooShort(f"n = {n} too short for {J} scales")
        return cls(tau, values, M, values * np.sqrt(2.0 / M))


def wv_estimate(series: Sequence[float], J: int) -> WvEstimate:
    """Haar wavelet variance at scales ``2**j``, all ``n - 2**j + 1`` full-overlap positions."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if J < 1:
        raise ValueError("J must be >= 1")
    if n < 2 ** J:
        raise SeriesTooShort(f"n = {n} < 2**J = {2 ** J}")
    cs = np.r_[0.0, np.cumsum(x - x.mean())]
    values, M = np.empty(J), np.empty(J)
    for j in range(1, J + 1):
        tau = 2 ** j
        m = tau // 2
        first = cs[m:n - m + 1] - cs[: n - tau + 1]
        second = cs[tau:] - cs[m:n - m + 1]
        w = (first - second) / tau
        values[j - 1] = np.mean(w * w)
        M[j - 1] = len(w)
    return WvEstimate(2.0 ** np.arange(1, J + 1), values, M, values * np.sqrt(2.0 / M))


def sample_acvf(series: Sequence[float], max_lag: int) -> MomentVector:
    """Mean-removed autocovariance with denominator ``n``."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if max_lag >= n:
        raise LagTooLarge(f"max_lag = {max_lag} needs n > {max_lag}, got {n}")
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    c = x - x.mean()
    vals = np.array([np.dot(c[: n - h], c[h:]) / n for h in range(max_lag + 1)])
    return MomentVector(MomentKind.ACVF, np.arange(max_lag + 1), vals)


def default_weights(estimate: WvEstimate | MomentVector) -> np.ndarray:
    """``diag(1/SE^2)`` for a wavelet-variance estimate, identity for autocovariances."""
    if isinstance(estimate, MomentVector):
        return np.eye(len(estimate))
    se = np.asarray(estimate.std_errors, dtype=float)
    zero = ~(se > 0)
    if np.any(zero):
        warnings.warn(f"zero standard error at scale index {np.flatnonzero(zero).tolist()}; "
                      "identity weight used there", ZeroVarianceScale, stacklevel=2)
    w = np.ones_like(se)
    w[~zero] = 1.0 / se[~zero] ** 2
    return np.diag(w)


# ---------------------------------------------------------------------------
# fitting

@dataclass(frozen=True)
class FitOptions:
    n_starts: int = 10
    max_iter: int = 2000
    xatol: float = 1e-9
    seed: int = 0
    perturbation: float = 1.0
    start: Sequence[float] | None = None
    engine: str = "compiled"
    polish: bool = True


@dataclass(frozen=True, eq=False)
class FitResult:
    theta_hat: np.ndarray
    objective_value: float
    iterations: int
    converged: bool
    start_points_used: int
    labels: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.labels, map(float, self.theta_hat)))


_BIG = 1e300


def _scipy_runner(target: np.ndarray, W: np.ndarray, moment: Callable, model: LatentModel,
                  opts: FitOptions):
    W = np.asarray(W, dtype=float)
    diag = np.allclose(W, np.diag(np.diag(W)))
    w = np.diag(W).copy()
    pos = model._positive_mask

    def obj(u):
        theta = np.empty_like(u)
        theta[pos] = np.exp(u[pos])
        theta[~pos] = np.tanh(u[~pos])
        r = target - moment(theta)
        val = float(np.dot(w * r, r)) if diag else float(r @ W @ r)
        return val if math.isfinite(val) else _BIG

    p = model.n_params

    def run(u, step):
        res = optimize.minimize(obj, u, method="Nelder-Mead",
                                options=dict(maxiter=opts.max_iter, xatol=opts.xatol, fatol=np.inf,
                                             initial_simplex=np.vstack([u, u + step * np.eye(p)]),
                                             adaptive=p > 4))
        return res.x, float(res.fun), int(res.nit)

    return run


def _compiled_runner(target: np.ndarray, W: np.ndarray, x: np.ndarray, mode: int,
                     model: LatentModel, opts: FitOptions):
    from . import _kernels

    W = np.ascontiguousarray(W, dtype=float)
    diag = bool(np.allclose(W, np.diag(np.diag(W))))
    args = (np.array([_kernels.KIND_CODES[k] for k in model.kinds], dtype=np.int64),
            np.asarray(model._offsets, dtype=np.int64),
            np.asarray(model._positive_mask, dtype=np.bool_),
            np.asarray(x, dtype=float), mode, np.asarray(target, dtype=float), W, diag)
    p = model.n_params

    def run(u, step):
        xb, fb, nit = _kernels.nelder_mead(np.asarray(u, dtype=float), float(step), int(opts.max_iter),
                                           float(opts.xatol), p > 4, *args)
        return xb, float(fb), int(nit)

    return run


def _runner(target, W, moment, x, mode, model, opts):
    if opts.engine == "compiled":
        return _compiled_runner(target, W, x, mode, model, opts)
    if opts.engine == "scipy":
        return _scipy_runner(target, W, moment, model, opts)
    raise ValueError(f"unknown engine {opts.engine!r}")


def _minimise(run: Callable, model: LatentModel, u0: np.ndarray, opts: FitOptions) -> FitResult:
    rng = np.random.default_rng(opts.seed)
    p = len(u0)
    starts = [u0] + [u0 + opts.perturbation * rng.standard_normal(p) for _ in range(opts.n_starts - 1)]
    best = None
    total_iter = 0
    for u in starts:
        res = run(u, 0.5)
        total_iter += res[2]
        if best is None or res[1] < best[1]:
            best = res
    if opts.polish:
        # restart from the best vertex: Nelder-Mead can stall on a collapsed simplex
        polish = run(best[0], 0.05)
        total_iter += polish[2]
        if polish[1] <= best[1]:
            best = polish
    theta = model.canonical_theta(from_unconstrained(model, best[0]))
    return FitResult(theta, best[1], total_iter, bool(best[2] < opts.max_iter),
                     len(starts), tuple(model.param_labels))


def _clip_pos(x: float, floor: float) -> float:
    return x if x > floor else floor


def _stationary_start(model: LatentModel, budget: float, sign: float) -> list:
    """Split a variance budget evenly over the stationary blocks."""
    kinds = model.kinds
    n_stat = sum(k.is_stationary for k in kinds) or 1
    share = budget / n_stat
    n_ar = sum(k is BlockKind.AR1 for k in kinds)
    rhos = iter(sorted(sign * np.linspace(0.5, 0.9, n_ar)) if n_ar > 1 else [sign * 0.5])
    out = []
    for k in kinds:
        if k is BlockKind.WN:
            out.append((share,))
        elif k is BlockKind.QN:
            out.append((share / 2,))
        elif k is BlockKind.MA1:
            r = 0.5 * sign
            out.append((r, share / (1 + r * r)))
        elif k is BlockKind.AR1:
            r = next(rhos)
            out.append((r, share * (1 - r * r)))
        else:
            out.append(None)
    return out


def heuristic_start_wv(model: LatentModel, wv: WvEstimate) -> np.ndarray:
    nu = np.asarray(wv.values, dtype=float)
    tau = np.asarray(wv.scales, dtype=float)
    floor = 1e-8 * max(float(np.max(nu)), 1e-300)
    sign = 1.0 if len(nu) < 2 or nu[1] > 0.5 * nu[0] else -1.0
    parts = _stationary_start(model, _clip_pos(2 * nu[0], floor), sign)
    kinds = model.kinds
    n_ns = sum(not k.is_stationary for k in kinds) or 1
    top = _clip_pos(nu[-1] / n_ns, floor)
    theta = []
    for k, vals in zip(kinds, parts):
        if k is BlockKind.RW:
            vals = (12 * top / tau[-1],)
        elif k is BlockKind.DRIFT:
            vals = (4 * math.sqrt(top) / tau[-1],)
        theta.extend(vals)
    return np.array(theta)


def heuristic_start_acvf(model: LatentModel, acvf_hat: MomentVector) -> np.ndarray:
    g = acvf_hat.values
    floor = 1e-8 * max(abs(g[0]), 1e-300)
    sign = 1.0 if len(g) < 2 or g[1] >= 0 else -1.0
    parts = _stationary_start(model, _clip_pos(g[0], floor), sign)
    return np.array([v for vals in parts for v in vals])


def _start_u(model: LatentModel, theta0: np.ndarray) -> np.ndarray:
    return to_unconstrained(model, model.canonical_theta(theta0))


def gmwm_fit(model: LatentModel, wv: WvEstimate, Omega: np.ndarray | None = None,
             options: FitOptions = FitOptions()) -> FitResult:
    """Generalized method of wavelet moments.

    Raises
    ------
    InsufficientScales
        Fewer scales than parameters.
    """
    p = model.n_params
    if wv.J < p:
        raise InsufficientScales(f"{wv.J} scales for {p} parameters")
    warn_if_unproven(model)
    Omega = default_weights(wv) if Omega is None else np.asarray(Omega, dtype=float)
    run = _runner(np.asarray(wv.values, dtype=float), Omega, wv_function(model, wv.J),
                  np.asarray(wv.scales, dtype=float), 0, model, options)
    start = heuristic_start_wv(model, wv) if options.start is None else np.asarray(options.start, dtype=float)
    return _minimise(run, model, _start_u(model, start), options)


def gmm_fit(model: LatentModel, acvf_hat: MomentVector, W: np.ndarray | None = None,
            options: FitOptions = FitOptions()) -> FitResult:
    """Minimum-distance fit of the model autocovariance to ``acvf_hat``.

    Raises
    ------
    NonstationaryBlock
        Drift or RW present.
    InsufficientLags
        Fewer lags than parameters.
    """
    _require_stationary(model)
    p = model.n_params
    if len(acvf_hat) < p:
        raise InsufficientLags(f"{len(acvf_hat)} lags for {p} parameters")
    warn_if_unproven(model)
    W = np.eye(len(acvf_hat)) if W is None else np.asarray(W, dtype=float)
    lags = np.asarray(acvf_hat.abscissae).astype(int)
    kinds, offsets = model.kinds, model._offsets
    widths = [len(b.values) for b in model.blocks]

    def moment(theta):
        return sum(block_acvf(k, theta[o:o + w], lags) for k, o, w in zip(kinds, offsets, widths))

    run = _runner(np.asarray(acvf_hat.values, dtype=float), W, moment, lags.astype(float), 1, model, options)
    start = heuristic_start_acvf(model, acvf_hat) if options.start is None else np.asarray(options.start, dtype=float)
    return _minimise(run, model, _start_u(model, start), options)


#: The largest default scale keeps at least ``2**MIN_BLOCKS_LOG2`` non-overlapping blocks.
MIN_BLOCKS_LOG2 = 6


def default_num_scales(n: int, p: int) -> int:
    """``max(p, floor(log2 n) - 6)`` capped at ``floor(log2 n)``.

    The diagonal default weights ignore the correlation between overlapping
    coefficients, which grows with the scale; stopping where ``n / tau_J``
    is still at least 64 keeps the noisiest scales out of the objective.
    """
    top = int(math.floor(math.log2(n)))
    return max(1, min(top, max(p, top - MIN_BLOCKS_LOG2)))


def fit_series(model: LatentModel, series: Sequence[float], estimator: str = "gmwm", *,
               J: int | None = None, lags: int | None = None, weights: str = "default",
               options: FitOptions = FitOptions()) -> FitResult:
    """Estimate ``model`` from a series with either estimator and its default moments."""
    x = np.asarray(series, dtype=float)
    if estimator == "gmwm":
        est = wv_estimate(x, default_num_scales(len(x), model.n_params) if J is None else J)
        Omega = np.eye(est.J) if weights == "identity" else None
        return gmwm_fit(model, est, Omega, options)
    if estimator == "gmm":
        acv = sample_acvf(x, model.n_params if lags is None else lags)
        return gmm_fit(model, acv, None, options)
    raise ValueError(f"unknown estimator {estimator!r}")
