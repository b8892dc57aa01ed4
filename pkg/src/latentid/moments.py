"""Theoretical second-order moments of latent models.

All time-series moments use unit sampling.  Spectral densities are two-sided
on ``f in [-1/2, 1/2]`` and normalised so that they integrate to the lag-0
autocovariance.

The Haar wavelet variance at level ``j`` uses the filter of width
``tau = 2**j`` whose first ``tau/2`` taps are ``+1/tau`` and last ``tau/2``
taps are ``-1/tau``.  Closed forms per block (``tau = 2**j``)::

    WN     sigma2 / tau
    QN     6 q2 / tau**2
    RW     gamma2 (tau**2 + 2) / (12 tau)
    Drift  omega**2 tau**2 / 16
    MA1    zeta2 ((1 + r)**2 tau - 6 r) / tau**2
    AR1    2 nu2 (m (1 - rho**2) - 3 rho + 4 rho**(m+1) - rho**(2m+1))
           / (tau**2 (1 - rho)**2 (1 - rho**2)),       m = tau / 2

Each is the quadratic form of the filter with the block's autocovariance
(or, for RW and Drift, the filter applied to the cumulative sum / ramp).
"""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import integrate

from .errors import NonstationaryBlock, ScaleOverflow, SpatialModel, TimeSeriesModel
from .models import BlockKind, Domain, LatentModel

#: Largest filter width accepted by :func:`wv_theoretical`.
MAX_TAU = 2 ** 30


class MomentKind(str, enum.Enum):
    ACVF = "Acvf"
    SDF = "Sdf"
    WV = "Wv"
    SPATIAL_COV = "SpatialCov"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, eq=False)
class MomentVector:
    kind: MomentKind
    abscissae: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.abscissae, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if a.shape != v.shape or a.ndim != 1:
            raise ValueError("abscissae and values must be 1-D and of equal length")
        object.__setattr__(self, "kind", MomentKind(self.kind))
        object.__setattr__(self, "abscissae", a)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MomentVector):
            return NotImplemented
        return (self.kind == other.kind and np.array_equal(self.abscissae, other.abscissae)
                and np.array_equal(self.values, other.values))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("kind,abscissa,value\n")
        for a, v in zip(self.abscissae, self.values):
            buf.write(f"{self.kind.value},{_fmt(a)},{_fmt(v)}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MomentVector":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].strip() != "kind,abscissa,value":
            raise ValueError("missing 'kind,abscissa,value' header")
        rows = [ln.split(",") for ln in lines[1:]]
        kinds = {r[0] for r in rows}
        if len(kinds) != 1:
            raise ValueError("a MomentVector CSV holds exactly one kind")
        return cls(MomentKind(kinds.pop()), [float(r[1]) for r in rows], [float(r[2]) for r in rows])


def _fmt(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2 ** 53 else repr(x)


def _require_time_series(model: LatentModel) -> None:
    if model.domain is Domain.SPATIAL:
        raise SpatialModel("operation is defined for time-series models only")


def _require_stationary(model: LatentModel) -> None:
    _require_time_series(model)
    bad = [k for k in model.kinds if not k.is_stationary]
    if bad:
        raise NonstationaryBlock(f"autocovariance/SDF undefined for {', '.join(map(str, bad))}")


# ---------------------------------------------------------------------------
# autocovariance

def block_acvf(kind: BlockKind, values: Sequence[float], lags: np.ndarray) -> np.ndarray:
    h = np.abs(np.asarray(lags))
    if kind is BlockKind.WN:
        return np.where(h == 0, values[0], 0.0)
    if kind is BlockKind.QN:
        q2 = values[0]
        return np.select([h == 0, h == 1], [2 * q2, -q2], 0.0)
    if kind is BlockKind.MA1:
        r, z2 = values
        return np.select([h == 0, h == 1], [(1 + r * r) * z2, r * z2], 0.0)
    if kind is BlockKind.AR1:
        rho, nu2 = values
        return rho ** h.astype(float) * nu2 / (1 - rho * rho)
    raise NonstationaryBlock(f"autocovariance undefined for {kind}")


def acvf(model: LatentModel, theta: Sequence[float], max_lag: int) -> MomentVector:
    """Autocovariance at lags ``0..max_lag`` (sum of block autocovariances)."""
    _require_stationary(model)
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    lags = np.arange(max_lag + 1)
    total = np.zeros(len(lags))
    for kind, vals in model.split(theta):
        total += block_acvf(kind, vals, lags)
    return MomentVector(MomentKind.ACVF, lags, total)


# ---------------------------------------------------------------------------
# spectral density

def block_sdf(kind: BlockKind, values: Sequence[float], freqs: np.ndarray) -> np.ndarray:
    f = np.asarray(freqs, dtype=float)
    if kind is BlockKind.WN:
        return np.full(f.shape, values[0])
    if kind is BlockKind.QN:
        return 4 * values[0] * np.sin(np.pi * f) ** 2
    if kind is BlockKind.MA1:
        r, z2 = values
        return z2 * (1 + 2 * r * np.cos(2 * np.pi * f) + r * r)
    if kind is BlockKind.AR1:
        rho, nu2 = values
        return nu2 / (1 - 2 * rho * np.cos(2 * np.pi * f) + rho * rho)
    raise NonstationaryBlock(f"SDF undefined for {kind}")


def sdf(model: LatentModel, theta: Sequence[float], freqs: Sequence[float]) -> MomentVector:
    _require_stationary(model)
    f = np.asarray(freqs, dtype=float)
    if np.any(f < 0) or np.any(f > 0.5):
        raise ValueError("frequencies must lie in [0, 1/2]")
    total = np.zeros(f.shape)
    for kind, vals in model.split(theta):
        total += block_sdf(kind, vals, f)
    return MomentVector(MomentKind.SDF, f, total)


def acvf_via_sdf(model: LatentModel, theta: Sequence[float], max_lag: int) -> np.ndarray:
    """Autocovariance recovered by integrating ``S(f) 2 cos(2 pi f h)`` over [0, 1/2]."""
    _require_stationary(model)
    parts = model.split(theta)

    def spec(f):
        return sum(block_sdf(k, v, f) for k, v in parts)

    out = np.empty(max_lag + 1)
    for h in range(max_lag + 1):
        out[h] = integrate.quad(lambda f: 2 * spec(f) * np.cos(2 * np.pi * f * h), 0, 0.5,
                                epsabs=1e-12, epsrel=1e-12, limit=400)[0]
    return out


# ---------------------------------------------------------------------------
# Haar wavelet variance

def haar_filter(j: int) -> np.ndarray:
    tau = 2 ** j
    return np.r_[np.full(tau // 2, 1.0 / tau), np.full(tau // 2, -1.0 / tau)]


def haar_autocorrelation(j: int) -> np.ndarray:
    """``c_k = sum_l h_l h_{l+k}`` for ``k = 0..tau-1``."""
    tau = 2 ** j
    k = np.arange(tau, dtype=float)
    return np.where(k <= tau // 2, tau - 3 * k, k - tau) / tau ** 2


def wv_quadratic_form(acvf_values: np.ndarray, j: int) -> float:
    """``h^T Gamma h`` for a stationary autocovariance sequence (lags 0..tau-1)."""
    c = haar_autocorrelation(j)
    g = np.asarray(acvf_values, dtype=float)[: len(c)]
    if len(g) < len(c):
        g = np.r_[g, np.zeros(len(c) - len(g))]
    return float(c[0] * g[0] + 2 * np.dot(c[1:], g[1:]))


def block_wv(kind: BlockKind, values: Sequence[float], tau: np.ndarray) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if kind is BlockKind.WN:
        return values[0] / tau
    if kind is BlockKind.QN:
        return 6 * values[0] / tau ** 2
    if kind is BlockKind.RW:
        return values[0] * (tau ** 2 + 2) / (12 * tau)
    if kind is BlockKind.DRIFT:
        return values[0] ** 2 * tau ** 2 / 16
    if kind is BlockKind.MA1:
        r, z2 = values
        return z2 * ((1 + r) ** 2 * tau - 6 * r) / tau ** 2
    if kind is BlockKind.AR1:
        rho, nu2 = values
        m = tau / 2
        num = m * (1 - rho * rho) - 3 * rho + 4 * rho ** (m + 1) - rho ** (tau + 1)
        return 2 * nu2 * num / (tau ** 2 * (1 - rho) ** 2 * (1 - rho * rho))
    raise SpatialModel(f"wavelet variance undefined for {kind}")


def _scales(J: int) -> np.ndarray:
    if J < 1:
        raise ValueError("need at least one scale")
    if 2 ** J > MAX_TAU:
        raise ScaleOverflow(f"tau_J = 2**{J} exceeds the cap {MAX_TAU}")
    return 2.0 ** np.arange(1, J + 1)


def wv_theoretical(model: LatentModel, theta: Sequence[float], J: int,
                   convention: Mapping[BlockKind, float] | None = None) -> MomentVector:
    """Model-implied Haar wavelet variance at scales ``tau_j = 2**j``, ``j = 1..J``.

    ``convention`` optionally multiplies individual block contributions
    (default 1 for every block).
    """
    _require_time_series(model)
    tau = _scales(J)
    total = np.zeros(J)
    for kind, vals in model.split(theta):
        c = 1.0 if convention is None else convention.get(kind, 1.0)
        total += c * block_wv(kind, vals, tau)
    return MomentVector(MomentKind.WV, tau, total)


def wv_function(model: LatentModel, J: int) -> Callable[[np.ndarray], np.ndarray]:
    """Fast ``theta -> wavelet variance`` closure used inside optimisers."""
    _require_time_series(model)
    tau = _scales(J)
    kinds = model.kinds
    offsets = model._offsets

    def f(theta):
        total = np.zeros(J)
        for kind, o in zip(kinds, offsets):
            if kind is BlockKind.AR1 or kind is BlockKind.MA1:
                total += block_wv(kind, (theta[o], theta[o + 1]), tau)
            else:
                total += block_wv(kind, (theta[o],), tau)
        return total

    return f


def haar_gain(f: np.ndarray, j: int) -> np.ndarray:
    """Squared gain ``|H_j(f)|^2 = 4 sin^4(pi f tau/2) / (tau^2 sin^2(pi f))``."""
    tau = 2 ** j
    f = np.asarray(f, dtype=float)
    s = np.sin(np.pi * f)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = 4 * np.sin(np.pi * f * tau / 2) ** 4 / (tau ** 2 * s ** 2)
    return np.where(s == 0, 0.0, g)


def wv_spectral(model: LatentModel, theta: Sequence[float], j: int) -> float:
    """Wavelet variance at level ``j`` by integrating the filter gain against the SDF."""
    _require_stationary(model)
    parts = model.split(theta)
    tau = 2 ** j

    def integrand(f):
        return 2 * haar_gain(f, j) * sum(block_sdf(k, v, f) for k, v in parts)

    # the gain vanishes at f = 2k/tau; splitting there keeps each piece smooth
    edges = np.unique(np.r_[np.arange(0, tau // 4 + 1) * 2.0 / tau, 0.5])
    edges = edges[edges <= 0.5]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(integrand, a, b, epsabs=1e-10 / len(edges), epsrel=1e-12, limit=200)[0]
    return total


# ---------------------------------------------------------------------------
# spatial covariance

def spatial_exponent(kind: BlockKind) -> int:
    if kind is BlockKind.SPATIAL_EXP:
        return 1
    if kind is BlockKind.SPATIAL_GAUSS:
        return 2
    raise TimeSeriesModel(f"{kind} is not a spatial block")


def block_spatial_cov(kind: BlockKind, values: Sequence[float], d: np.ndarray) -> np.ndarray:
    phi, s2 = values
    return s2 * np.exp(-(np.asarray(d, dtype=float) / phi) ** spatial_exponent(kind))


def spatial_cov(model: LatentModel, theta: Sequence[float], distances: Sequence[float]) -> MomentVector:
    if model.domain is not Domain.SPATIAL:
        raise TimeSeriesModel("spatial covariance needs a spatial model")
    d = np.asarray(distances, dtype=float)
    if np.any(d < 0) or np.any(np.diff(d) <= 0):
        raise ValueError("distances must be >= 0 and strictly increasing")
    total = np.zeros(d.shape)
    for kind, vals in model.split(theta):
        total += block_spatial_cov(kind, vals, d)
    return MomentVector(MomentKind.SPATIAL_COV, d, total)


# ---------------------------------------------------------------------------
# summability

def acvf_tail_bound(model: LatentModel, theta: Sequence[float], H: int) -> float:
    """Upper bound on ``sum_{h > H} |acvf(h)|``; exact for finite-support blocks."""
    _require_stationary(model)
    tail = 0.0
    for kind, vals in model.split(theta):
        if kind is BlockKind.AR1:
            rho, nu2 = vals
            a = abs(rho)
            tail += a ** (H + 1) / (1 - a) * nu2 / (1 - rho * rho)
        elif H < 1:
            tail += float(abs(block_acvf(kind, vals, np.array([1]))[0]))
    return tail


def acvf_tail_index(model: LatentModel, theta: Sequence[float], eps: float) -> int:
    """Smallest ``H`` whose analytic tail bound drops below ``eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    H = 0
    while acvf_tail_bound(model, theta, H) >= eps:
        H += 1
    return H
