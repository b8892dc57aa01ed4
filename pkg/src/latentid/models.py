"""Latent model blocks, composition rules and parameter transforms.

A latent model is an ordered sum of mutually independent components
("blocks").  Time-series blocks are white noise (WN), quantization noise
(QN), a deterministic drift, a random walk (RW), an MA(1) and any number of
AR(1) processes.  Spatial blocks are exponential or Gaussian covariance
models; a spatial model sums blocks of a single family.

Parameter vectors follow the canonical block order produced by
:func:`build_model`: WN, QN, Drift, RW, MA1, then AR1 blocks sorted by
increasing ``rho`` (spatial blocks sorted by increasing ``phi``).

Text format (one block per line, ``#`` starts a comment)::

    WN    sigma2=1.0
    QN    q2=0.5
    AR1   rho=0.9 nu2=1.0
"""
from __future__ import annotations

import enum
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateRho,
    DuplicateSingletonBlock,
    HeterogeneousSpatial,
    MixedDomain,
    ModelParseError,
    ParamOutOfRange,
    UnprovenCompositionWarning,
)


class BlockKind(str, enum.Enum):
    WN = "WN"
    QN = "QN"
    DRIFT = "Drift"
    RW = "RW"
    MA1 = "MA1"
    AR1 = "AR1"
    SPATIAL_EXP = "SpatialExp"
    SPATIAL_GAUSS = "SpatialGauss"

    def __str__(self) -> str:
        return self.value

    @property
    def is_spatial(self) -> bool:
        return self in (BlockKind.SPATIAL_EXP, BlockKind.SPATIAL_GAUSS)

    @property
    def is_stationary(self) -> bool:
        return self not in (BlockKind.DRIFT, BlockKind.RW)


class Domain(str, enum.Enum):
    TIME_SERIES = "TimeSeries"
    SPATIAL = "Spatial"


POSITIVE = "positive"
UNIT = "unit"  # open interval (-1, 1)

#: Parameter names and their domains for each block kind, in storage order.
PARAM_SPEC: dict[BlockKind, tuple[tuple[str, str], ...]] = {
    BlockKind.WN: (("sigma2", POSITIVE),),
    BlockKind.QN: (("q2", POSITIVE),),
    BlockKind.DRIFT: (("omega", POSITIVE),),
    BlockKind.RW: (("gamma2", POSITIVE),),
    BlockKind.MA1: (("rho_ma", UNIT), ("zeta2", POSITIVE)),
    BlockKind.AR1: (("rho", UNIT), ("nu2", POSITIVE)),
    BlockKind.SPATIAL_EXP: (("phi", POSITIVE), ("sigma2", POSITIVE)),
    BlockKind.SPATIAL_GAUSS: (("phi", POSITIVE), ("sigma2", POSITIVE)),
}

SINGLETON_KINDS = (BlockKind.WN, BlockKind.QN, BlockKind.DRIFT, BlockKind.RW, BlockKind.MA1)
_KIND_RANK = {k: i for i, k in enumerate(
    (BlockKind.WN, BlockKind.QN, BlockKind.DRIFT, BlockKind.RW, BlockKind.MA1, BlockKind.AR1,
     BlockKind.SPATIAL_EXP, BlockKind.SPATIAL_GAUSS))}

_KIND_ALIASES = {
    "WN": BlockKind.WN, "WHITENOISE": BlockKind.WN,
    "QN": BlockKind.QN, "QUANTIZATION": BlockKind.QN,
    "DRIFT": BlockKind.DRIFT, "DR": BlockKind.DRIFT,
    "RW": BlockKind.RW, "RANDOMWALK": BlockKind.RW,
    "MA1": BlockKind.MA1, "MA": BlockKind.MA1,
    "AR1": BlockKind.AR1, "AR": BlockKind.AR1,
    "SPATIALEXP": BlockKind.SPATIAL_EXP, "EXP": BlockKind.SPATIAL_EXP,
    "SPATIALGAUSS": BlockKind.SPATIAL_GAUSS, "GAUSS": BlockKind.SPATIAL_GAUSS,
}


def _check_value(kind: BlockKind, name: str, domain: str, value: float) -> None:
    if not np.isfinite(value):
        raise ParamOutOfRange(f"{kind}.{name} must be finite, got {value!r}")
    if domain == POSITIVE and not value > 0:
        raise ParamOutOfRange(f"{kind}.{name} must be > 0, got {value!r}")
    if domain == UNIT and not -1 < value < 1:
        raise ParamOutOfRange(f"{kind}.{name} must lie in (-1, 1), got {value!r}")
    if kind is BlockKind.AR1 and name == "rho" and value == 0:
        raise ParamOutOfRange("AR1.rho must be nonzero")


@dataclass(frozen=True)
class BlockSpec:
    """One latent component: a kind plus its parameter values."""

    kind: BlockKind
    values: tuple[float, ...]

    def __post_init__(self):
        kind = BlockKind(self.kind)
        values = tuple(float(v) for v in self.values)
        spec = PARAM_SPEC[kind]
        if len(values) != len(spec):
            raise ParamOutOfRange(f"{kind} takes {len(spec)} parameter(s), got {len(values)}")
        for (name, domain), v in zip(spec, values):
            _check_value(kind, name, domain, v)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", values)

    @classmethod
    def make(cls, kind: str | BlockKind, **params: float) -> "BlockSpec":
        kind = _coerce_kind(kind)
        names = [n for n, _ in PARAM_SPEC[kind]]
        unknown = set(params) - set(names)
        if unknown:
            raise ModelParseError(f"unknown parameter(s) for {kind}: {sorted(unknown)}")
        missing = [n for n in names if n not in params]
        if missing:
            raise ModelParseError(f"missing parameter(s) for {kind}: {missing}")
        return cls(kind, tuple(params[n] for n in names))

    @property
    def params(self) -> dict[str, float]:
        return {n: v for (n, _), v in zip(PARAM_SPEC[self.kind], self.values)}

    def __str__(self) -> str:
        args = " ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.kind.value} {args}"


def wn(sigma2: float) -> BlockSpec:
    return BlockSpec(BlockKind.WN, (sigma2,))


def qn(q2: float) -> BlockSpec:
    return BlockSpec(BlockKind.QN, (q2,))


def drift(omega: float) -> BlockSpec:
    return BlockSpec(BlockKind.DRIFT, (omega,))


def rw(gamma2: float) -> BlockSpec:
    return BlockSpec(BlockKind.RW, (gamma2,))


def ma1(rho_ma: float, zeta2: float) -> BlockSpec:
    return BlockSpec(BlockKind.MA1, (rho_ma, zeta2))


def ar1(rho: float, nu2: float) -> BlockSpec:
    return BlockSpec(BlockKind.AR1, (rho, nu2))


def spatial_exp(phi: float, sigma2: float) -> BlockSpec:
    return BlockSpec(BlockKind.SPATIAL_EXP, (phi, sigma2))


def spatial_gauss(phi: float, sigma2: float) -> BlockSpec:
    return BlockSpec(BlockKind.SPATIAL_GAUSS, (phi, sigma2))


@dataclass(frozen=True)
class ParamSlot:
    block: int
    name: str
    label: str
    domain: str


@dataclass(frozen=True)
class LatentModel:
    """Validated, canonically ordered sum of blocks.

    ``input_order[i]`` is the position, in the list given to
    :func:`build_model`, of canonical block ``i``.
    """

    blocks: tuple[BlockSpec, ...]
    domain: Domain
    layout: tuple[ParamSlot, ...]
    input_order: tuple[int, ...] = field(default=(), compare=False)

    @property
    def n_params(self) -> int:
        return len(self.layout)

    @property
    def param_labels(self) -> list[str]:
        return [s.label for s in self.layout]

    @property
    def theta(self) -> np.ndarray:
        return np.array([v for b in self.blocks for v in b.values])

    @property
    def kinds(self) -> list[BlockKind]:
        return [b.kind for b in self.blocks]

    @property
    def is_stationary(self) -> bool:
        return all(k.is_stationary for k in self.kinds)

    @cached_property
    def _positive_mask(self) -> np.ndarray:
        return np.array([s.domain == POSITIVE for s in self.layout])

    @cached_property
    def _offsets(self) -> tuple[int, ...]:
        out, k = [], 0
        for b in self.blocks:
            out.append(k)
            k += len(b.values)
        return tuple(out)

    def split(self, theta: Sequence[float]) -> list[tuple[BlockKind, tuple[float, ...]]]:
        """Pair every block kind with its slice of ``theta`` (no validation)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"theta must have length {self.n_params}, got shape {theta.shape}")
        return [(b.kind, tuple(theta[o:o + len(b.values)]))
                for b, o in zip(self.blocks, self._offsets)]

    def with_theta(self, theta: Sequence[float]) -> "LatentModel":
        """Rebuild the model with new parameter values (re-validated and re-sorted)."""
        return build_model([BlockSpec(k, v) for k, v in self.split(theta)])

    def canonical_theta(self, theta: Sequence[float]) -> np.ndarray:
        """Reorder exchangeable blocks (AR1 by rho, spatial by phi) inside ``theta``.

        Used after optimisation, where the search may swap two AR1 components.
        """
        parts = self.split(theta)
        idx = [i for i, (k, _) in enumerate(parts) if k is BlockKind.AR1 or k.is_spatial]
        ordered = sorted((parts[i] for i in idx), key=lambda kv: kv[1][0])
        for i, kv in zip(idx, ordered):
            parts[i] = kv
        return np.array([v for _, vals in parts for v in vals])

    def __str__(self) -> str:
        return format_model(self)


def _coerce_kind(kind: str | BlockKind) -> BlockKind:
    if isinstance(kind, BlockKind):
        return kind
    try:
        return _KIND_ALIASES[str(kind).replace("_", "").upper()]
    except KeyError:
        raise ModelParseError(f"unknown block kind {kind!r}") from None


def _labels(blocks: Sequence[BlockSpec]) -> list[ParamSlot]:
    seen: Counter = Counter()
    slots = []
    for i, b in enumerate(blocks):
        seen[b.kind] += 1
        indexed = b.kind is BlockKind.AR1 or b.kind.is_spatial
        for name, domain in PARAM_SPEC[b.kind]:
            label = f"{name}_{seen[b.kind]}" if indexed else name
            slots.append(ParamSlot(i, name, label, domain))
    return slots


def build_model(blocks: Iterable[BlockSpec]) -> LatentModel:
    """Validate a list of blocks and return the canonical :class:`LatentModel`.

    Raises
    ------
    DuplicateSingletonBlock, DuplicateRho, MixedDomain, HeterogeneousSpatial,
    ParamOutOfRange
    """
    blocks = list(blocks)
    if not blocks:
        raise ValueError("a latent model needs at least one block")
    for b in blocks:
        if not isinstance(b, BlockSpec):
            raise TypeError(f"expected BlockSpec, got {type(b).__name__}")
    spatial = [b.kind.is_spatial for b in blocks]
    if any(spatial) and not all(spatial):
        raise MixedDomain("time-series and spatial blocks cannot be mixed")
    counts = Counter(b.kind for b in blocks)
    if all(spatial):
        if len(counts) > 1:
            raise HeterogeneousSpatial("spatial blocks must all be SpatialExp or all SpatialGauss")
        phis = [b.values[0] for b in blocks]
        if len(set(phis)) != len(phis):
            raise DuplicateRho("spatial blocks need pairwise distinct phi")
        domain = Domain.SPATIAL
    else:
        for k in SINGLETON_KINDS:
            if counts[k] > 1:
                raise DuplicateSingletonBlock(f"at most one {k} block is allowed")
        rhos = [b.values[0] for b in blocks if b.kind is BlockKind.AR1]
        if len(set(rhos)) != len(rhos):
            raise DuplicateRho("AR1 blocks need pairwise distinct rho")
        domain = Domain.TIME_SERIES

    order = sorted(range(len(blocks)), key=lambda i: (_KIND_RANK[blocks[i].kind],
                                                      blocks[i].values[0] if blocks[i].kind is BlockKind.AR1
                                                      or blocks[i].kind.is_spatial else 0.0))
    canon = tuple(blocks[i] for i in order)
    return LatentModel(canon, domain, tuple(_labels(canon)), tuple(order))


# ---------------------------------------------------------------------------
# classification

class IdentLabel(str, enum.Enum):
    MODEL1 = "Model1"
    MODEL2 = "Model2"
    MODEL3 = "Model3"
    MODEL4 = "Model4"
    MODEL5 = "Model5"
    MODEL6 = "Model6"
    UNPROVEN_CAUTION = "UnprovenCaution"
    NON_COMPOSITE = "NonComposite"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class IdentClass:
    label: IdentLabel
    notes: str = ""

    @property
    def proven(self) -> bool:
        return self.label not in (IdentLabel.UNPROVEN_CAUTION,)


_FAMILY_NOTES = {
    IdentLabel.MODEL1: "WN + QN + K AR1: covariance function injective for distinct nonzero rho",
    IdentLabel.MODEL2: "MA1 + K AR1: covariance function injective for distinct nonzero rho",
    IdentLabel.MODEL3: "homogeneous spatial sum: covariance function injective for distinct phi",
    IdentLabel.MODEL4: "K AR1: wavelet variance injective (determinant verified up to K = 4)",
    IdentLabel.MODEL5: "WN + QN + Drift + RW: wavelet variance injective",
    IdentLabel.MODEL6: "Drift + RW + MA1: wavelet variance injective",
    IdentLabel.NON_COMPOSITE: "single block",
}


def classify_model(model: LatentModel) -> IdentClass:
    """Map the multiset of block kinds to the identifiable family it belongs to."""
    counts = Counter(model.kinds)
    if len(model.blocks) == 1:
        return IdentClass(IdentLabel.NON_COMPOSITE, _FAMILY_NOTES[IdentLabel.NON_COMPOSITE])
    if model.domain is Domain.SPATIAL:
        return IdentClass(IdentLabel.MODEL3, _FAMILY_NOTES[IdentLabel.MODEL3])

    K = counts.pop(BlockKind.AR1, 0)
    others = frozenset(counts)
    label = None
    if K >= 1 and others == {BlockKind.WN, BlockKind.QN}:
        label = IdentLabel.MODEL1
    elif K >= 1 and others == {BlockKind.MA1}:
        label = IdentLabel.MODEL2
    elif K >= 2 and not others:
        label = IdentLabel.MODEL4
    elif K == 0 and others == {BlockKind.WN, BlockKind.QN, BlockKind.DRIFT, BlockKind.RW}:
        label = IdentLabel.MODEL5
    elif K == 0 and others == {BlockKind.DRIFT, BlockKind.RW, BlockKind.MA1}:
        label = IdentLabel.MODEL6
    if label is not None:
        return IdentClass(label, _FAMILY_NOTES[label])

    if BlockKind.MA1 in others and others & {BlockKind.WN, BlockKind.QN}:
        note = ("MA1 combined with WN and/or QN: the moment Jacobian is not clearly "
                "full rank, parameters may not be identifiable")
    else:
        note = "composition outside the families with a proven identifiability result"
    return IdentClass(IdentLabel.UNPROVEN_CAUTION, note)


def warn_if_unproven(model: LatentModel) -> IdentClass:
    cls = classify_model(model)
    if cls.label is IdentLabel.UNPROVEN_CAUTION:
        warnings.warn(cls.notes, UnprovenCompositionWarning, stacklevel=3)
    return cls


# ---------------------------------------------------------------------------
# transforms

def to_unconstrained(model: LatentModel, theta: Sequence[float]) -> np.ndarray:
    """log for positive parameters, atanh for coefficients in (-1, 1)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.n_params,):
        raise ValueError(f"theta must have length {model.n_params}")
    pos = model._positive_mask
    if np.any(theta[pos] <= 0) or np.any(np.abs(theta[~pos]) >= 1) or not np.all(np.isfinite(theta)):
        raise ParamOutOfRange(f"theta outside the parameter domain: {theta}")
    u = np.empty_like(theta)
    u[pos] = np.log(theta[pos])
    u[~pos] = np.arctanh(theta[~pos])
    return u


def from_unconstrained(model: LatentModel, u: Sequence[float]) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    pos = model._positive_mask
    theta = np.empty_like(u)
    theta[pos] = np.exp(u[pos])
    theta[~pos] = np.tanh(u[~pos])
    return theta


# ---------------------------------------------------------------------------
# text format

_ASSIGN = re.compile(r"\s*=\s*")


def parse_model_text(text: str) -> LatentModel:
    """Parse the one-block-per-line description into a model."""
    blocks = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = _ASSIGN.sub("=", line).split()
        params: dict[str, float] = {}
        for tok in tokens[1:]:
            key, sep, val = tok.partition("=")
            if not sep or not key:
                raise ModelParseError(f"line {lineno}: expected key=value, got {tok!r}")
            try:
                params[key] = float(val)
            except ValueError:
                raise ModelParseError(f"line {lineno}: bad number {val!r}") from None
        try:
            blocks.append(BlockSpec.make(tokens[0], **params))
        except ModelParseError as exc:
            raise ModelParseError(f"line {lineno}: {exc}") from None
    if not blocks:
        raise ModelParseError("no blocks in model description")
    return build_model(blocks)


def format_model(model: LatentModel, theta: Sequence[float] | None = None) -> str:
    if theta is not None:
        blocks = [BlockSpec(k, v) for k, v in model.split(theta)]
    else:
        blocks = list(model.blocks)
    return "\n".join(str(b) for b in blocks) + "\n"


def model_from_mapping(items: Iterable[Mapping[str, object]]) -> LatentModel:
    """Build from ``[{"kind": "AR1", "rho": 0.5, "nu2": 1}, ...]``."""
    blocks = []
    for item in items:
        item = dict(item)
        kind = item.pop("kind")
        blocks.append(BlockSpec.make(str(kind), **{k: float(v) for k, v in item.items()}))
    return build_model(blocks)
