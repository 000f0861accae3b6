"""Per-pixel detection head maps.

A detector head emits seven channels at map scale: a text score map, a text
center-region score map, and five rotated-rectangle regression channels
(center x, center y, height, width, angle).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .grids import ShapeMismatchError

CHANNELS = ("text", "center", "x", "y", "h", "w", "theta")


@dataclass(frozen=True)
class GeometryMaps:
    text: np.ndarray
    center: np.ndarray
    x: np.ndarray
    y: np.ndarray
    h: np.ndarray
    w: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        shape = None
        for f in fields(self):
            arr = np.ascontiguousarray(getattr(self, f.name), dtype=np.float64)
            if arr.ndim != 2:
                raise ShapeMismatchError(f"map '{f.name}' must be 2-d, got shape {arr.shape}")
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise ShapeMismatchError(
                    f"map '{f.name}' shape {arr.shape} does not match {shape}")
            object.__setattr__(self, f.name, arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.text.shape

    def stack(self) -> np.ndarray:
        """Channels stacked to (7, H, W) in CHANNELS order."""
        return np.stack([getattr(self, name) for name in CHANNELS])

    @classmethod
    def from_stack(cls, arr) -> "GeometryMaps":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != len(CHANNELS):
            raise ShapeMismatchError(
                f"expected ({len(CHANNELS)}, H, W) stack, got shape {arr.shape}")
        return cls(**{name: arr[i] for i, name in enumerate(CHANNELS)})
