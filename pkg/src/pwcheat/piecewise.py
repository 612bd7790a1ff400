"""Piecewise-constant functions on [0, 1] and the profile algebra built on them.

Two flavors: :class:`PiecewiseFunction` allows values of any sign (differences
of profiles, weight functions for moment integrals) while
:class:`ConductivityProfile` adds positivity bounds and canonical
normalization (adjacent equal values merged, zero-width pieces dropped).

Convention: the value at an interior breakpoint is the value of the piece to
its right.  Every integral-based quantity in the package is insensitive to
this measure-zero choice.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError

# Breakpoints closer than this are considered coincident during refinement.
BREAKPOINT_ATOL = 1e-12

DEFAULT_LOWER_BOUND = 1e-3
DEFAULT_UPPER_BOUND = 1e3


def _as_readonly(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float).copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PiecewiseFunction:
    """A piecewise-constant function on [0, 1], values unrestricted in sign."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", _as_readonly(self.breakpoints))
        object.__setattr__(self, "values", _as_readonly(self.values))
        b, v = self.breakpoints, self.values
        if b.ndim != 1 or v.ndim != 1 or b.size < 2 or v.size != b.size - 1:
            raise ValidationError(
                f"need n+1 breakpoints and n values, got {b.size} and {v.size}"
            )
        if not np.all(np.isfinite(b)) or not np.all(np.isfinite(v)):
            raise ValidationError("breakpoints and values must be finite")
        if b[0] != 0.0 or b[-1] != 1.0:
            raise ValidationError("breakpoints must span exactly [0, 1]")
        # Zero-width pieces are tolerated until normalization removes them.
        if np.any(np.diff(b) < 0):
            raise ValidationError("breakpoints must be sorted")

    @property
    def n_pieces(self) -> int:
        return self.values.size

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def value_at(self, x):
        """Evaluate at x in [0, 1]; right-limit value at interior breakpoints."""
        xs = np.asarray(x, dtype=float)
        if np.any(xs < 0.0) or np.any(xs > 1.0):
            raise ValidationError("evaluation point outside [0, 1]")
        idx = np.searchsorted(self.breakpoints, xs, side="right") - 1
        idx = np.clip(idx, 0, self.n_pieces - 1)
        out = self.values[idx]
        return float(out) if np.isscalar(x) or xs.ndim == 0 else out

    def normalized(self) -> "PiecewiseFunction":
        """Merge adjacent equal values; drop pieces narrower than the tolerance."""
        breaks, vals = _normalize_arrays(self.breakpoints, self.values)
        return PiecewiseFunction(breaks, vals)

    def __sub__(self, other: "PiecewiseFunction") -> "PiecewiseFunction":
        breaks, v1, v2 = refine_pair(self, other)
        breaks2, vals = _normalize_arrays(breaks, v1 - v2)
        return PiecewiseFunction(breaks2, vals)

    def integral(self) -> float:
        """Exact integral over [0, 1]."""
        return float(np.dot(self.widths, self.values))


def _normalize_arrays(breaks: np.ndarray, vals: np.ndarray):
    # Pass 1: drop pieces of (near) zero width.
    keep_b = [float(breaks[0])]
    keep_v: list[float] = []
    for i in range(vals.size):
        right = float(breaks[i + 1])
        if right - keep_b[-1] <= BREAKPOINT_ATOL:
            if i == vals.size - 1 and keep_v:
                keep_b[-1] = right
            continue
        keep_b.append(right)
        keep_v.append(float(vals[i]))
    if not keep_v:
        raise ValidationError("no piece of positive width")
    # Pass 2: merge runs of equal adjacent values.
    out_b = [keep_b[0]]
    out_v: list[float] = []
    for right, v in zip(keep_b[1:], keep_v):
        if out_v and v == out_v[-1]:
            out_b[-1] = right
        else:
            out_b.append(right)
            out_v.append(v)
    out_b[-1] = 1.0
    return np.array(out_b), np.array(out_v)


def _union_breakpoints(b1: np.ndarray, b2: np.ndarray) -> np.ndarray:
    merged = np.sort(np.concatenate([b1, b2]))
    keep = [merged[0]]
    for x in merged[1:]:
        if x - keep[-1] > BREAKPOINT_ATOL:
            keep.append(x)
    keep[0], keep[-1] = 0.0, 1.0
    return np.array(keep)


def refine_pair(p1: PiecewiseFunction, p2: PiecewiseFunction):
    """Common refinement: breakpoint union plus both value vectors on it."""
    breaks = _union_breakpoints(p1.breakpoints, p2.breakpoints)
    mids = 0.5 * (breaks[:-1] + breaks[1:])
    return breaks, p1.value_at(mids), p2.value_at(mids)


def distance(p1: PiecewiseFunction, p2: PiecewiseFunction, norm: str = "l1") -> float:
    """Exact L1 or Linf distance computed on the common refinement."""
    breaks, v1, v2 = refine_pair(p1, p2)
    diff = np.abs(v1 - v2)
    if norm.lower() == "l1":
        return float(np.dot(np.diff(breaks), diff))
    if norm.lower() == "linf":
        return float(diff.max())
    raise ValidationError(f"unknown norm {norm!r}, expected 'l1' or 'linf'")


@dataclass(frozen=True)
class ConductivityProfile(PiecewiseFunction):
    """Positive piecewise-constant conductivity with explicit bounds.

    Stored in canonical form: construction merges adjacent equal values and
    drops zero-width pieces, so equality of canonical JSON is bytewise.
    The reciprocal view ``1/a`` (squared slowness of the flux equation) is
    available via :meth:`reciprocal`.
    """

    c0: float = DEFAULT_LOWER_BOUND
    c1: float = DEFAULT_UPPER_BOUND

    def __post_init__(self):
        breaks, vals = _normalize_arrays(
            np.asarray(self.breakpoints, dtype=float),
            np.asarray(self.values, dtype=float),
        )
        object.__setattr__(self, "breakpoints", breaks)
        object.__setattr__(self, "values", vals)
        super().__post_init__()
        if not (0.0 < self.c0 <= self.c1):
            raise ValidationError("bounds must satisfy 0 < c0 <= c1")
        if np.any(self.values < self.c0) or np.any(self.values > self.c1):
            raise ValidationError(
                f"values must lie in [{self.c0}, {self.c1}]"
            )

    def reciprocal(self) -> "ConductivityProfile":
        """Pointwise 1/a with bounds flipped accordingly."""
        return ConductivityProfile(
            self.breakpoints, 1.0 / self.values, c0=1.0 / self.c1, c1=1.0 / self.c0
        )

    def harmonic_mean(self) -> float:
        """1 / integral(1/a); the steady-state conductance of the rod."""
        return 1.0 / float(np.dot(self.widths, 1.0 / self.values))

    def to_dict(self) -> dict:
        return {
            "breakpoints": [float(x) for x in self.breakpoints],
            "values": [float(v) for v in self.values],
            "c0": float(self.c0),
            "c1": float(self.c1),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConductivityProfile":
        try:
            breaks = d["breakpoints"]
            vals = d["values"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"profile dict missing field: {exc}") from exc
        return cls(
            breaks,
            vals,
            c0=float(d.get("c0", DEFAULT_LOWER_BOUND)),
            c1=float(d.get("c1", DEFAULT_UPPER_BOUND)),
        )

    @classmethod
    def constant(cls, value: float, **kwargs) -> "ConductivityProfile":
        return cls([0.0, 1.0], [value], **kwargs)


def format_float(x: float) -> str:
    """17 significant digits: lossless double round-trips, stable bytes."""
    return format(float(x), ".17g")


def profile_to_json(profile: ConductivityProfile) -> str:
    """Canonical JSON text; load->save round-trips byte-identically."""
    d = profile.to_dict()
    parts = [
        '"breakpoints": [%s]' % ", ".join(format_float(x) for x in d["breakpoints"]),
        '"values": [%s]' % ", ".join(format_float(v) for v in d["values"]),
        '"c0": %s' % format_float(d["c0"]),
        '"c1": %s' % format_float(d["c1"]),
    ]
    return "{" + ", ".join(parts) + "}\n"


def profile_from_json(text: str) -> ConductivityProfile:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid profile JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ValidationError("profile JSON must be an object")
    return ConductivityProfile.from_dict(d)
