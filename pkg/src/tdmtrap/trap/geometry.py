"""Planar electrode layouts built from axis-aligned rectangles in the z = 0 plane."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

ROLES = ("rf", "center_dc", "side_dc")


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Electrode:
    id: str
    role: str
    rects: tuple[tuple[float, float, float, float], ...]  # (x1, x2, y1, y2) in metres

    def __post_init__(self):
        if self.role not in ROLES:
            raise GeometryError(f"electrode {self.id}: unknown role {self.role!r}")
        if not self.rects:
            raise GeometryError(f"electrode {self.id} has no rectangles")
        rects = tuple(tuple(float(c) for c in r) for r in self.rects)
        for x1, x2, y1, y2 in rects:
            if not (x2 > x1 and y2 > y1):
                raise GeometryError(f"electrode {self.id}: rectangle with non-positive area")
        object.__setattr__(self, "rects", rects)
        arr = np.array(rects)
        if _any_overlap(arr, arr, same=True):
            raise GeometryError(f"electrode {self.id}: rectangles overlap")

    @property
    def area(self) -> float:
        return float(sum((x2 - x1) * (y2 - y1) for x1, x2, y1, y2 in self.rects))

    def contains(self, x: float, y: float) -> bool:
        return any(x1 < x < x2 and y1 < y < y2 for x1, x2, y1, y2 in self.rects)


def _any_overlap(a: np.ndarray, b: np.ndarray, same: bool = False) -> bool:
    ox = np.minimum(a[:, None, 1], b[None, :, 1]) - np.maximum(a[:, None, 0], b[None, :, 0])
    oy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 2], b[None, :, 2])
    hit = (ox > 0) & (oy > 0)
    if same:
        np.fill_diagonal(hit, False)
    return bool(hit.any())


@dataclass(frozen=True)
class Geometry:
    electrodes: tuple[Electrode, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "electrodes", tuple(self.electrodes))
        ids = [e.id for e in self.electrodes]
        if len(set(ids)) != len(ids):
            raise GeometryError("duplicate electrode ids")
        for i, e in enumerate(self.electrodes):
            for f in self.electrodes[i + 1:]:
                if _any_overlap(np.array(e.rects), np.array(f.rects)):
                    raise GeometryError(f"electrodes {e.id} and {f.id} overlap")

    def __getitem__(self, electrode_id: str) -> Electrode:
        for e in self.electrodes:
            if e.id == electrode_id:
                return e
        raise KeyError(electrode_id)

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.electrodes]

    def by_role(self, *roles: str) -> list[Electrode]:
        return [e for e in self.electrodes if e.role in roles]

    def rect_table(self) -> tuple[np.ndarray, np.ndarray]:
        """All rectangles as an ``(n_rect, 4)`` array plus the owning electrode index."""
        rects, owner = [], []
        for i, e in enumerate(self.electrodes):
            rects.extend(e.rects)
            owner.extend([i] * len(e.rects))
        return np.array(rects), np.array(owner)

    def to_dict(self, length_unit: float = 1.0) -> dict[str, Any]:
        return {
            "name": self.name,
            "length_unit": length_unit,
            "electrodes": [
                {"id": e.id, "role": e.role,
                 "rects": [[c / length_unit for c in r] for r in e.rects]}
                for e in self.electrodes
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Geometry":
        unit = float(d.get("length_unit", 1.0))
        try:
            electrodes = tuple(
                Electrode(str(e["id"]), str(e["role"]),
                          tuple(tuple(float(c) * unit for c in r) for r in e["rects"]))
                for e in d["electrodes"])
        except KeyError as exc:
            raise GeometryError(f"geometry entry missing {exc}") from None
        return cls(electrodes, str(d.get("name", "")))


def load_geometry(path: str | Path) -> Geometry:
    with open(path) as fh:
        return Geometry.from_dict(yaml.safe_load(fh))


def representative_geometry() -> Geometry:
    """The shipped five-wire layout with a loading hole and ten side electrodes."""
    text = resources.files("tdmtrap.data").joinpath("representative_trap.yaml").read_text()
    return Geometry.from_dict(yaml.safe_load(text))
