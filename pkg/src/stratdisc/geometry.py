"""Domain boxes, strata and equivolume partitions.

Two stratum shapes are supported: axis-aligned boxes and triangular
prisms.  A prism is one half of a ``2b x b x ... x b`` bounding box cut
along the diagonal of its ``(x1, x2)`` rectangle; the ``lower`` half is
the convex hull of the rectangle corners ``(a1, a2)``, ``(a1+2b, a2)``
and ``(a1, a2+b)`` times an interval box in the remaining axes, the
``upper`` half is its complement.  Either half has volume ``b**dim``.

Everything downstream is driven by lower-corner volumes
``|S ∩ (-inf, x]|``: the probability that a point drawn uniformly from
stratum ``S`` lands below ``x`` in every coordinate is that volume over
``|S|``.  All sets are closed; shared boundaries have measure zero.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Literal, Sequence, Union

import numpy as np

Orientation = Literal["lower", "upper"]

#: probe points closer than this to any stratum boundary are not attributed
BOUNDARY_SKIP_TOL = 1e-9

#: relative tolerance for the volume-sum and equivolume checks
VOLUME_REL_TOL = 1e-12


class GeometryError(ValueError):
    """Malformed stratum, domain or partition structure."""


class InvalidPartitionError(GeometryError):
    """A partition failed validation.  Carries the validation report."""

    def __init__(self, message: str, report: "ValidationReport | None" = None):
        super().__init__(message)
        self.report = report


def _as_vector(values: Iterable[float], name: str) -> tuple[float, ...]:
    vec = tuple(float(v) for v in values)
    if not vec:
        raise GeometryError(f"{name} must have at least one coordinate")
    if any(not math.isfinite(v) for v in vec):
        raise GeometryError(f"{name} must be finite, got {vec}")
    return vec


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned box serving as the sampling domain K."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", _as_vector(self.lower, "lower"))
        object.__setattr__(self, "upper", _as_vector(self.upper, "upper"))
        if len(self.lower) != len(self.upper):
            raise GeometryError("lower and upper must have the same dimension")
        if any(u <= l for l, u in zip(self.lower, self.upper)):
            raise GeometryError("domain box must have positive extent on every axis")

    @classmethod
    def unit(cls, dim: int) -> "DomainBox":
        return cls((0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def volume(self) -> float:
        return math.prod(u - l for l, u in zip(self.lower, self.upper))

    def corner_volume(self, x: Sequence[float]) -> float:
        """Volume of ``K ∩ (-inf, x]``."""
        vol = 1.0
        for lo, up, xi in zip(self.lower, self.upper, x):
            vol *= max(0.0, min(float(xi), up) - lo)
        return vol

    def corner_fraction(self, x: Sequence[float]) -> float:
        return self.corner_volume(x) / self.volume()

    def contains(self, x: Sequence[float], tol: float = 0.0) -> bool:
        return all(lo - tol <= xi <= up + tol
                   for lo, up, xi in zip(self.lower, self.upper, x))


def _triangle_area_fraction(u, v, orientation: Orientation):
    """Corner area of a prism cross-section in normalized coordinates.

    ``u`` ranges over [0, 2] and ``v`` over [0, 1] (already clamped).
    Returns the area of the cross-section below-left of ``(u, v)``; the
    full upper/lower triangle has area 1.  Vectorizes over numpy inputs.
    """
    excess = np.maximum(0.0, u + 2.0 * v - 2.0)
    upper = 0.25 * excess * excess
    if orientation == "upper":
        return upper
    return u * v - upper


@dataclass(frozen=True)
class BoxStratum:
    """Axis-aligned box stratum given by its lower corner and side lengths."""

    lower: tuple[float, ...]
    sides: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", _as_vector(self.lower, "lower"))
        object.__setattr__(self, "sides", _as_vector(self.sides, "sides"))
        if len(self.lower) != len(self.sides):
            raise GeometryError("lower and sides must have the same dimension")
        if any(s <= 0 for s in self.sides):
            raise GeometryError(f"box sides must be positive, got {self.sides}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(l + s for l, s in zip(self.lower, self.sides))

    def bounding_box(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        return self.lower, self.upper

    def volume(self) -> float:
        return math.prod(self.sides)

    def corner_volume(self, x: Sequence[float]) -> float:
        vol = 1.0
        for lo, s, xi in zip(self.lower, self.sides, x):
            vol *= max(0.0, min(float(xi), lo + s) - lo)
        return vol

    def corner_fraction(self, x: Sequence[float]) -> float:
        return self.corner_volume(x) / self.volume()

    def margin(self, x: Sequence[float]) -> float:
        """Signed distance-like margin: positive inside, negative outside."""
        return min(min(xi - lo, lo + s - xi)
                   for lo, s, xi in zip(self.lower, self.sides, x))


@dataclass(frozen=True)
class TrianglePrismStratum:
    """Half of a ``2b x b x ... x b`` box cut along the (x1, x2) diagonal.

    The bounding box is ``[a1, a1+2b] x [a2, a2+b] x prod_k [ak, ak+b]``.
    The cut runs from ``(a1, a2+b)`` to ``(a1+2b, a2)``; ``lower`` keeps
    the half containing ``(a1, a2)``, ``upper`` the other one.
    """

    anchor: tuple[float, ...]
    halfwidth: float
    orientation: Orientation

    def __post_init__(self):
        object.__setattr__(self, "anchor", _as_vector(self.anchor, "anchor"))
        object.__setattr__(self, "halfwidth", float(self.halfwidth))
        if len(self.anchor) < 2:
            raise GeometryError("triangle prisms need dimension >= 2")
        if not (self.halfwidth > 0 and math.isfinite(self.halfwidth)):
            raise GeometryError(f"halfwidth must be positive, got {self.halfwidth}")
        if self.orientation not in ("lower", "upper"):
            raise GeometryError(f"orientation must be 'lower' or 'upper', got {self.orientation!r}")

    @property
    def dim(self) -> int:
        return len(self.anchor)

    @property
    def sides(self) -> tuple[float, ...]:
        b = self.halfwidth
        return (2.0 * b,) + (b,) * (self.dim - 1)

    def bounding_box(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        return self.anchor, tuple(a + s for a, s in zip(self.anchor, self.sides))

    def volume(self) -> float:
        return self.halfwidth ** self.dim

    def plane_corner_fraction(self, x1, x2):
        """Corner area of the (x1, x2) cross-section, in units of b^2.

        Accepts scalars or numpy arrays; used directly by the exact
        expectation engine.
        """
        b = self.halfwidth
        u = np.clip((np.asarray(x1, dtype=float) - self.anchor[0]) / b, 0.0, 2.0)
        v = np.clip((np.asarray(x2, dtype=float) - self.anchor[1]) / b, 0.0, 1.0)
        return _triangle_area_fraction(u, v, self.orientation)

    def corner_volume(self, x: Sequence[float]) -> float:
        b = self.halfwidth
        area = float(self.plane_corner_fraction(x[0], x[1])) * b * b
        for ak, xi in zip(self.anchor[2:], x[2:]):
            area *= max(0.0, min(float(xi), ak + b) - ak)
        return area

    def corner_fraction(self, x: Sequence[float]) -> float:
        return self.corner_volume(x) / self.volume()

    def diagonal_offset(self, x1, x2):
        """Signed offset from the cut plane, positive on the lower side."""
        a1, a2 = self.anchor[0], self.anchor[1]
        return (a1 + 2.0 * a2 + 2.0 * self.halfwidth) - (x1 + 2.0 * x2)

    def margin(self, x: Sequence[float]) -> float:
        b = self.halfwidth
        rect = min(x[0] - self.anchor[0], self.anchor[0] + 2 * b - x[0])
        for ak, xi in zip(self.anchor[1:], x[1:]):
            rect = min(rect, xi - ak, ak + b - xi)
        diag = self.diagonal_offset(x[0], x[1]) / math.sqrt(5.0)
        if self.orientation == "upper":
            diag = -diag
        return min(rect, diag)


Stratum = Union[BoxStratum, TrianglePrismStratum]


def _stratum_inside(stratum: Stratum, domain: DomainBox, tol: float) -> bool:
    lo, up = stratum.bounding_box()
    return all(l >= dl - tol and u <= du + tol
               for l, u, dl, du in zip(lo, up, domain.lower, domain.upper))


@dataclass(frozen=True)
class Partition:
    """A domain box with strata intended to tile it with equal volumes.

    Construction checks only cheap structure (dimensions, containment in
    the domain); the tiling invariants are checked by
    :func:`validate_partition`, so that defective candidates can still be
    built and diagnosed.
    """

    domain: DomainBox
    strata: tuple[Stratum, ...]

    def __post_init__(self):
        object.__setattr__(self, "strata", tuple(self.strata))
        if not self.strata:
            raise GeometryError("partition needs at least one stratum")
        d = self.domain.dim
        for i, s in enumerate(self.strata):
            if s.dim != d:
                raise GeometryError(f"stratum {i} has dimension {s.dim}, domain has {d}")
            if not _stratum_inside(s, self.domain, 1e-12):
                raise GeometryError(f"stratum {i} is not contained in the domain box")

    @property
    def n(self) -> int:
        return len(self.strata)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @cached_property
    def _box_arrays(self):
        """(indices, lowers, sides) of all box strata, stacked for numpy."""
        idx = [i for i, s in enumerate(self.strata) if isinstance(s, BoxStratum)]
        if not idx:
            shape = (0, self.dim)
            return np.array(idx, dtype=np.intp), np.empty(shape), np.empty(shape)
        lowers = np.array([self.strata[i].lower for i in idx])
        sides = np.array([self.strata[i].sides for i in idx])
        return np.array(idx, dtype=np.intp), lowers, sides

    @cached_property
    def _prisms(self) -> tuple[tuple[int, TrianglePrismStratum], ...]:
        return tuple((i, s) for i, s in enumerate(self.strata)
                     if isinstance(s, TrianglePrismStratum))

    @cached_property
    def _identity_hash(self) -> str:
        blob = json.dumps(partition_to_dict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def identity_hash(self) -> str:
        return self._identity_hash


@dataclass(frozen=True)
class ValidationIssue:
    kind: str                 # VolumeMismatch | NotEquivolume | CoverageGap | Overlap
    indices: tuple[int, ...]  # offending stratum indices, when known
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    issues: tuple[ValidationIssue, ...]
    probes_used: int
    probes_skipped: int

    def kinds(self) -> set[str]:
        return {issue.kind for issue in self.issues}


def _margins(partition: Partition, probes: np.ndarray) -> np.ndarray:
    """Margin of every probe (rows) against every stratum (columns)."""
    out = np.empty((probes.shape[0], partition.n))
    bidx, blo, bsides = partition._box_arrays
    if len(bidx):
        p = probes[:, None, :]
        m = np.minimum(p - blo[None], (blo + bsides)[None] - p).min(axis=2)
        out[:, bidx] = m
    for i, prism in partition._prisms:
        b = prism.halfwidth
        lo = np.asarray(prism.anchor)
        sides = np.asarray(prism.sides)
        rect = np.minimum(probes - lo[None], (lo + sides)[None] - probes).min(axis=1)
        diag = prism.diagonal_offset(probes[:, 0], probes[:, 1]) / math.sqrt(5.0)
        if prism.orientation == "upper":
            diag = -diag
        out[:, i] = np.minimum(rect, diag)
    return out


def validate_partition(partition: Partition, probe_count: int = 400,
                       seed: int = 0) -> ValidationReport:
    """Check the tiling invariants of a candidate partition.

    Volume sum and equivolume are exact checks (relative tolerance
    ``VOLUME_REL_TOL``); coverage is probabilistic: ``probe_count``
    pseudo-random points in the domain must each lie in exactly one
    stratum.  Probes within ``BOUNDARY_SKIP_TOL`` of any stratum
    boundary are skipped because closed strata legitimately share
    boundaries.
    """
    issues: list[ValidationIssue] = []
    n = partition.n
    k_vol = partition.domain.volume()
    vols = np.array([s.volume() for s in partition.strata])

    total = math.fsum(vols)
    if abs(total - k_vol) > VOLUME_REL_TOL * k_vol:
        issues.append(ValidationIssue(
            "VolumeMismatch", (),
            f"stratum volumes sum to {total!r}, domain volume is {k_vol!r}"))

    rel = vols * (n / k_vol) - 1.0
    bad = np.nonzero(np.abs(rel) >= VOLUME_REL_TOL)[0]
    if len(bad):
        issues.append(ValidationIssue(
            "NotEquivolume", tuple(int(i) for i in bad[:16]),
            f"{len(bad)} strata deviate from volume |K|/N by more than {VOLUME_REL_TOL}"))

    rng = np.random.Generator(np.random.Philox(
        key=np.array([seed & 0xFFFFFFFFFFFFFFFF, 0xBADDCAFE], dtype=np.uint64)))
    lo = np.asarray(partition.domain.lower)
    up = np.asarray(partition.domain.upper)
    probes = lo + (up - lo) * rng.random((probe_count, partition.dim))

    used = skipped = 0
    gap_probes: list[int] = []
    overlap_sets: set[tuple[int, ...]] = set()
    chunk = max(1, int(2_000_000 // max(n, 1)))
    for start in range(0, probe_count, chunk):
        block = probes[start:start + chunk]
        margins = _margins(partition, block)
        near = (np.abs(margins) < BOUNDARY_SKIP_TOL).any(axis=1)
        inside = margins > 0.0
        counts = inside.sum(axis=1)
        for j in range(block.shape[0]):
            if near[j]:
                skipped += 1
                continue
            used += 1
            if counts[j] == 0:
                gap_probes.append(start + j)
            elif counts[j] > 1:
                overlap_sets.add(tuple(int(i) for i in np.nonzero(inside[j])[0]))
    if gap_probes:
        locs = ", ".join(np.array2string(probes[i], precision=6) for i in gap_probes[:3])
        issues.append(ValidationIssue(
            "CoverageGap", (),
            f"{len(gap_probes)} of {used} probes hit no stratum (e.g. {locs})"))
    for group in sorted(overlap_sets):
        issues.append(ValidationIssue(
            "Overlap", group, f"strata {group} all contain a common probe point"))

    return ValidationReport(ok=not issues, issues=tuple(issues),
                            probes_used=used, probes_skipped=skipped)


# ---------------------------------------------------------------------------
# JSON partition files
# ---------------------------------------------------------------------------

def partition_to_dict(partition: Partition) -> dict:
    strata = []
    for s in partition.strata:
        if isinstance(s, BoxStratum):
            strata.append({"type": "box", "lower": list(s.lower), "sides": list(s.sides)})
        else:
            strata.append({"type": "prism", "anchor": list(s.anchor),
                           "b": s.halfwidth, "orientation": s.orientation})
    return {"domain": {"lower": list(partition.domain.lower),
                       "upper": list(partition.domain.upper)},
            "strata": strata}


def partition_from_dict(data: dict) -> Partition:
    try:
        domain = DomainBox(tuple(data["domain"]["lower"]), tuple(data["domain"]["upper"]))
        strata: list[Stratum] = []
        for entry in data["strata"]:
            kind = entry["type"]
            if kind == "box":
                strata.append(BoxStratum(tuple(entry["lower"]), tuple(entry["sides"])))
            elif kind == "prism":
                strata.append(TrianglePrismStratum(tuple(entry["anchor"]),
                                                   float(entry["b"]),
                                                   entry["orientation"]))
            else:
                raise GeometryError(f"unknown stratum type {kind!r}")
    except (KeyError, TypeError) as exc:
        raise GeometryError(f"malformed partition spec: {exc}") from exc
    return Partition(domain, tuple(strata))


def save_partition(partition: Partition, path) -> None:
    with open(path, "w") as fh:
        json.dump(partition_to_dict(partition), fh, indent=2)


def load_partition(path, probe_count: int = 400, seed: int = 0) -> Partition:
    """Load a partition spec file and validate it before acceptance."""
    with open(path) as fh:
        data = json.load(fh)
    partition = partition_from_dict(data)
    report = validate_partition(partition, probe_count=probe_count, seed=seed)
    if not report.ok:
        kinds = ", ".join(sorted(report.kinds()))
        raise InvalidPartitionError(f"partition file {path} failed validation: {kinds}",
                                    report=report)
    return partition
