"""Monte-Carlo consistency experiments, MSE tables and report emission.

A run simulates ``R`` replications at each sample size, fits every requested
estimator to each path and summarises the squared errors per
``(estimator, parameter, n)`` cell.  Replication ``r`` always draws from
stream ``r`` of the master seed, and results are written into slots keyed by
``(n, r)``, so the output does not depend on the thread count or on the
order in which replications finish.
"""
from __future__ import annotations

import io
import math
import os
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    InsufficientReplications,
    InsufficientScales,
    IoFailure,
    LatentModelError,
    NonstationaryBlock,
    UnprovenCompositionWarning,
)
from .estimators import FitOptions, default_num_scales, fit_series
from .models import LatentModel, ar1, build_model, ma1, parse_model_text, qn, warn_if_unproven, wn
from .simulate import SeedSpec, simulate_time_series

CSV_HEADER = "estimator,parameter,n,mse,bias,variance,ci_lo,ci_hi,log10_mse"
ESTIMATORS = ("gmwm", "gmm")

DEFAULT_SEED = 20180321
DEFAULT_SIZES = (2 ** 9, 2 ** 12, 2 ** 15)
DEFAULT_REPLICATIONS = 100
N_BOOT = 1000
CI_LEVEL = 0.95


# ---------------------------------------------------------------------------
# presets

def latent_model_1() -> LatentModel:
    """Two AR1 + WN + QN with rho = (0.9, 0.3), unit innovation variances, sigma2 = 1, Q2 = 0.5."""
    return build_model([ar1(0.9, 1.0), ar1(0.3, 1.0), wn(1.0), qn(0.5)])


def latent_model_2() -> LatentModel:
    """As :func:`latent_model_1` with the rho = 0.3 AR1 replaced by MA1(0.3, 1)."""
    return build_model([ar1(0.9, 1.0), ma1(0.3, 1.0), wn(1.0), qn(0.5)])


PRESETS = {"lm1": latent_model_1, "lm2": latent_model_2}


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class McConfig:
    model: LatentModel
    theta0: np.ndarray | None = None
    sample_sizes: tuple[int, ...] = DEFAULT_SIZES
    replications: int = DEFAULT_REPLICATIONS
    estimators: tuple[str, ...] = ESTIMATORS
    master_seed: int = DEFAULT_SEED
    output_dir: str | None = None
    fit_options: FitOptions = FitOptions()
    n_boot: int = N_BOOT

    def __post_init__(self):
        theta0 = self.model.theta if self.theta0 is None else np.asarray(self.theta0, dtype=float)
        if theta0.shape != (self.model.n_params,):
            raise ValueError(f"theta0 has {theta0.size} entries, model has {self.model.n_params}")
        object.__setattr__(self, "theta0", self.model.canonical_theta(theta0))
        sizes = tuple(int(n) for n in self.sample_sizes)
        object.__setattr__(self, "sample_sizes", sizes)
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.replications < 2:
            raise InsufficientReplications(f"R = {self.replications}, need at least 2")
        if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"sample sizes must be strictly increasing, got {sizes}")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown or not self.estimators:
            raise ValueError(f"estimators must be a non-empty subset of {ESTIMATORS}")
        p = self.model.n_params
        if "gmwm" in self.estimators:
            for n in sizes:
                if default_num_scales(n, p) < p:
                    raise InsufficientScales(f"n = {n} gives fewer than {p} scales")
        if "gmm" in self.estimators and not self.model.is_stationary:
            raise NonstationaryBlock("gmm needs a stationary model")
        if min(sizes) <= p:
            raise ValueError(f"sample sizes must exceed the number of parameters ({p})")


def _parse_list(value: str, conv):
    return tuple(conv(v) for v in re.split(r"[,\s]+", value.strip()) if v)


def _parse_int(value: str) -> int:
    value = value.strip()
    m = re.fullmatch(r"2\s*\*\*\s*(\d+)", value) or re.fullmatch(r"2\^(\d+)", value)
    return 2 ** int(m.group(1)) if m else int(value)


def parse_config_text(text: str, **overrides) -> McConfig:
    """Build an :class:`McConfig` from ``key = value`` lines and an optional ``[model]`` section.

    Recognised keys: ``preset`` (lm1 or lm2), ``sample_sizes``, ``replications``,
    ``estimators``, ``master_seed`` (alias ``seed``), ``output_dir``.  Lines under
    ``[model]`` use the block text format; their values define ``theta0``.
    Keyword ``overrides`` (non-None) replace the parsed values.
    """
    section = None
    settings: dict[str, str] = {}
    model_lines: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[(\w+)\]", line)
        if m:
            section = m.group(1).lower()
            if section not in ("model", "mc"):
                raise ValueError(f"line {lineno}: unknown section [{section}]")
            continue
        if section == "model":
            model_lines.append(line)
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key = value, got {line!r}")
        settings[key.strip().lower()] = value.strip()

    known = {"preset", "sample_sizes", "replications", "estimators", "master_seed", "seed", "output_dir"}
    bad = set(settings) - known
    if bad:
        raise ValueError(f"unknown config keys: {sorted(bad)}")
    if model_lines and "preset" in settings:
        raise ValueError("give either preset or a [model] section, not both")
    if model_lines:
        model = parse_model_text("\n".join(model_lines))
    else:
        name = settings.get("preset", "lm1").lower()
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        model = PRESETS[name]()

    kw: dict[str, object] = {}
    if "sample_sizes" in settings:
        kw["sample_sizes"] = _parse_list(settings["sample_sizes"], _parse_int)
    if "replications" in settings:
        kw["replications"] = int(settings["replications"])
    if "estimators" in settings:
        kw["estimators"] = _parse_list(settings["estimators"], lambda s: s.lower())
    seed = settings.get("master_seed", settings.get("seed"))
    if seed is not None:
        kw["master_seed"] = int(seed)
    if "output_dir" in settings:
        kw["output_dir"] = settings["output_dir"]
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return McConfig(model=model, **kw)


def load_config(path: str | os.PathLike, **overrides) -> McConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, **overrides)


# ---------------------------------------------------------------------------
# results

@dataclass(frozen=True)
class McRow:
    estimator: str
    parameter: str
    n: int
    mse: float
    bias: float
    variance: float
    ci_lo: float
    ci_hi: float

    @property
    def log10_mse(self) -> float:
        if self.mse > 0:
            return math.log10(self.mse)
        return -math.inf if self.mse == 0 else math.nan


@dataclass(eq=False)
class McResult:
    rows: list[McRow]
    monotone: dict[tuple[str, str], bool]
    notes: dict[tuple[str, str], str] = field(default_factory=dict)
    failures: dict[tuple[str, int], int] = field(default_factory=dict)
    estimates: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def estimators(self) -> list[str]:
        return list(dict.fromkeys(r.estimator for r in self.rows))

    @property
    def parameters(self) -> list[str]:
        return list(dict.fromkeys(r.parameter for r in self.rows))

    @property
    def sample_sizes(self) -> list[int]:
        return list(dict.fromkeys(r.n for r in self.rows))

    def cell(self, estimator: str, parameter: str, n: int) -> McRow:
        for r in self.rows:
            if (r.estimator, r.parameter, r.n) == (estimator, parameter, n):
                return r
        raise KeyError((estimator, parameter, n))

    def series(self, estimator: str, parameter: str) -> list[McRow]:
        return [r for r in self.rows if r.estimator == estimator and r.parameter == parameter]

    def all_monotone(self, estimator: str | None = None) -> bool:
        return all(v for (e, _), v in self.monotone.items() if estimator in (None, e))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for r in self.rows:
            nums = (r.mse, r.bias, r.variance, r.ci_lo, r.ci_hi, r.log10_mse)
            buf.write(",".join([r.estimator, r.parameter, str(r.n)] + [repr(float(v)) for v in nums]) + "\n")
        return buf.getvalue()

    def summary_text(self) -> str:
        lines = []
        for (est, par), flag in self.monotone.items():
            note = self.notes.get((est, par))
            mses = " ".join(f"{r.mse:.4g}" for r in self.series(est, par))
            lines.append(f"{est:5s} {par:10s} monotone={'yes' if flag else 'no '}  mse: {mses}"
                         + (f"  ({note})" if note else ""))
        total_fail = sum(self.failures.values())
        lines.append(f"failed fits: {total_fail}")
        return "\n".join(lines) + "\n"


def parse_mse_csv(text: str) -> list[McRow]:
    """Inverse of :meth:`McResult.to_csv` (the ``log10_mse`` column is recomputed)."""
    lines = text.split("\n")
    if lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected header {lines[0]!r}")
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        est, par, n, *nums = line.split(",")
        rows.append(McRow(est, par, int(n), *map(float, nums[:5])))
    return rows


def _monotone_flag(mse: np.ndarray) -> tuple[bool, str]:
    if np.any(~np.isfinite(mse)):
        return False, "missing cells"
    if np.all(mse == 0):
        return False, "degenerate: all MSE are zero"
    return bool(np.all(np.diff(mse) < 0)), ""


def summarize_mse(estimates: Mapping[str, np.ndarray] | np.ndarray, theta0: Sequence[float],
                  sample_sizes: Sequence[int], *, labels: Sequence[str] | None = None,
                  master_seed: int = DEFAULT_SEED, n_boot: int = N_BOOT,
                  level: float = CI_LEVEL) -> McResult:
    """MSE, bias and variance per cell plus bootstrap CIs and monotone flags.

    Parameters
    ----------
    estimates
        ``{estimator: array (N, R, p)}`` of fitted parameters; a bare array is
        taken as a single ``"gmwm"`` estimator.  NaN rows mark failed fits and
        are dropped from their cell.
    theta0
        Generating parameters, length ``p``.
    sample_sizes
        The ``N`` sample sizes, in the order of the first array axis.

    Raises
    ------
    InsufficientReplications
        A cell has fewer than two successful replications.
    """
    if not isinstance(estimates, Mapping):
        estimates = {"gmwm": estimates}
    theta0 = np.asarray(theta0, dtype=float)
    p = theta0.size
    labels = list(labels) if labels is not None else [f"theta{i + 1}" for i in range(p)]
    sizes = [int(n) for n in sample_sizes]
    alpha = 100 * (1 - level) / 2

    rows, monotone, notes, failures = [], {}, {}, {}
    cell_index = 0
    for est, arr in estimates.items():
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 3 or arr.shape[0] != len(sizes) or arr.shape[2] != p:
            raise ValueError(f"{est}: estimates must have shape ({len(sizes)}, R, {p}), got {arr.shape}")
        ok = np.all(np.isfinite(arr), axis=2)
        for i, n in enumerate(sizes):
            failures[(est, n)] = int(np.sum(~ok[i]))
        for k, label in enumerate(labels):
            for i, n in enumerate(sizes):
                x = arr[i, ok[i], k]
                if x.size < 2:
                    raise InsufficientReplications(f"{est}, n = {n}: {x.size} successful replications")
                err = x - theta0[k]
                sq = err * err
                mse = float(np.mean(sq))
                mean = float(np.mean(x))
                rng = np.random.default_rng(master_seed + cell_index)
                boot = sq[rng.integers(0, x.size, size=(n_boot, x.size))].mean(axis=1)
                lo, hi = np.percentile(boot, [alpha, 100 - alpha])
                rows.append(McRow(est, label, n, mse, mean - theta0[k], float(np.mean((x - mean) ** 2)),
                                  min(float(lo), mse), max(float(hi), mse)))
                cell_index += 1
            flag, note = _monotone_flag(np.array([r.mse for r in rows[-len(sizes):]]))
            monotone[(est, label)] = flag
            if note:
                notes[(est, label)] = note
    return McResult(rows, monotone, notes, failures, {e: np.asarray(a) for e, a in estimates.items()})


# ---------------------------------------------------------------------------
# running

def _fit_replication(config: McConfig, n: int, r: int) -> dict[str, np.ndarray]:
    x = simulate_time_series(config.model, config.theta0, n, SeedSpec(config.master_seed, r))
    out = {}
    for est in config.estimators:
        try:
            out[est] = fit_series(config.model, x, est, options=config.fit_options).theta_hat
        except (LatentModelError, ArithmeticError, ValueError):
            out[est] = np.full(config.model.n_params, np.nan)
    return out


def run_monte_carlo(config: McConfig, threads: int = 1, fit=None) -> McResult:
    """Simulate, fit and summarise every replication of ``config``.

    ``fit(config, n, r) -> {estimator: theta_hat}`` replaces the default
    simulate-and-fit step (used to stub the estimators in tests).
    """
    fit = _fit_replication if fit is None else fit
    p = config.model.n_params
    R = config.replications
    est = {e: np.full((len(config.sample_sizes), R, p), np.nan) for e in config.estimators}
    jobs = [(i, n, r) for i, n in enumerate(config.sample_sizes) for r in range(R)]

    def work(job):
        i, n, r = job
        return job, fit(config, n, r)

    with warnings.catch_warnings():
        warn_if_unproven(config.model)
        warnings.simplefilter("ignore", UnprovenCompositionWarning)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                done = list(pool.map(work, jobs))
        else:
            done = [work(j) for j in jobs]
    for (i, n, r), res in done:
        for e in config.estimators:
            est[e][i, r] = res[e]
    return summarize_mse(est, config.theta0, config.sample_sizes, labels=config.model.param_labels,
                         master_seed=config.master_seed, n_boot=config.n_boot)


# ---------------------------------------------------------------------------
# report

_COLORS = {"gmwm": "tab:green", "gmm": "tab:red"}


def plot_mse(result: McResult, path: str | os.PathLike) -> None:
    """One panel per parameter: log10 MSE against log2 n, one line per estimator, CI band shaded."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    params = result.parameters
    ncol = min(3, len(params))
    nrow = math.ceil(len(params) / ncol)
    with plt.rc_context({"svg.hashsalt": "latentid", "svg.fonttype": "none"}):
        fig, axes = plt.subplots(nrow, ncol, figsize=(4 * ncol, 3.2 * nrow), squeeze=False)
        for ax, par in zip(axes.flat, params):
            for est in result.estimators:
                rows = result.series(est, par)
                x = [math.log2(r.n) for r in rows]
                lo = [math.log10(r.ci_lo) if r.ci_lo > 0 else math.nan for r in rows]
                hi = [math.log10(r.ci_hi) if r.ci_hi > 0 else math.nan for r in rows]
                color = _COLORS.get(est)
                band = ax.fill_between(x, lo, hi, color="0.6", alpha=0.35, linewidth=0)
                band.set_gid(f"band-{est}-{par}")
                (line,) = ax.plot(x, [r.log10_mse for r in rows], marker="o", color=color, label=est)
                line.set_gid(f"series-{est}-{par}")
            ax.set_title(par)
            ax.set_xlabel("log2 n")
            ax.set_ylabel("log10 MSE")
            ax.legend(fontsize="small")
        for ax in list(axes.flat)[len(params):]:
            ax.set_visible(False)
        fig.tight_layout()
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)


def emit_report(result: McResult, out_dir: str | os.PathLike, formats: Sequence[str] = ("csv", "svg"),
                stem: str = "mse") -> list[Path]:
    """Write ``<stem>.csv`` and/or ``<stem>.svg`` / ``<stem>.png`` into ``out_dir``.

    Raises
    ------
    IoFailure
        The directory or a file cannot be written.
    """
    if not result.rows:
        raise ValueError("empty result")
    out = Path(out_dir)
    paths = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for fmt in formats:
            path = out / f"{stem}.{fmt}"
            if fmt == "csv":
                with open(path, "w", newline="\n") as fh:
                    fh.write(result.to_csv())
            elif fmt in ("svg", "png", "pdf"):
                plot_mse(result, path)
            else:
                raise ValueError(f"unknown report format {fmt!r}")
            paths.append(path)
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out}: {exc}") from exc
    return paths
