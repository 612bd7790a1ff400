"""Transfer-function sample sets: the input data of the reconstruction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError
from .piecewise import format_float


@dataclass(frozen=True)
class TransferDataset:
    """Samples (lam_i, H_i, sigma_i) of the boundary transfer function.

    lam values are strictly increasing and positive; H and sigma strictly
    positive.  ``provenance`` records how the data were made (synthetic seed
    and noise level, or "external").
    """

    lam: np.ndarray
    H: np.ndarray
    sigma: np.ndarray
    provenance: dict = field(default_factory=lambda: {"kind": "external"})

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        H = np.asarray(self.H, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        for name, arr in (("lam", lam), ("H", H), ("sigma", sigma)):
            if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} must be a nonempty finite 1-D array")
        if H.size != lam.size or sigma.size != lam.size:
            raise ValidationError("lam, H, sigma must have equal length")
        if np.any(lam <= 0) or np.any(np.diff(lam) <= 0):
            raise ValidationError("lam must be distinct, positive, ascending")
        if np.any(H <= 0) or np.any(sigma <= 0):
            raise ValidationError("H and sigma must be strictly positive")
        for name, arr in (("lam", lam), ("H", H), ("sigma", sigma)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return int(self.lam.size)

    def to_csv(self, path, metadata: dict | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key, val in (metadata or {}).items():
                fh.write(f"# {key}: {val}\n")
            fh.write("lambda,H,sigma\n")
            for lam, h, s in zip(self.lam, self.H, self.sigma):
                fh.write(f"{format_float(lam)},{format_float(h)},{format_float(s)}\n")

    @classmethod
    def from_csv(cls, path, provenance: dict | None = None) -> "TransferDataset":
        rows = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if line.lower().startswith("lambda"):
                    continue
                parts = line.split(",")
                if len(parts) != 3:
                    raise ValidationError(f"bad dataset row: {line!r}")
                rows.append([float(p) for p in parts])
        if not rows:
            raise ValidationError("dataset file contains no samples")
        arr = np.array(rows)
        return cls(
            arr[:, 0], arr[:, 1], arr[:, 2],
            provenance=provenance or {"kind": "external"},
        )
