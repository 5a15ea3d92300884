"""Per-cell component fields shared by the component, network and index code."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from walkgrid.geoio import RasterLayer


class ComponentKind(str, enum.Enum):
    SWL = "SWL"
    SI = "SI"
    GS = "GS"
    NDVI = "NDVI"
    SLOPE = "SLOPE"
    PT = "PT"
    LUM = "LUM"
    ISO = "ISO"

    def __str__(self):
        return self.value


# Fixed processing/output order for all eight kinds.
KINDS = tuple(ComponentKind)


@dataclass
class ComponentField:
    kind: ComponentKind
    values: RasterLayer

    @property
    def grid(self):
        return self.values.grid

    def array(self) -> np.ndarray:
        return self.values.values

    def valid(self) -> np.ndarray:
        return self.values.valid_mask()
