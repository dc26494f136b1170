"""Place-category division from UTM position and heading, group formation and
place-balanced batch sampling.

A record at (east, north, heading) falls in category
``(floor(east / M), floor(north / M), floor(heading / alpha))``. Categories are
then split into ``N * N * L`` groups by residues ``(e mod N, n mod N, h mod L)``
so that lattice-adjacent cells never share a group.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

log = logging.getLogger(__name__)

PITTS_YAW_VIEWS = 12


@dataclass(frozen=True)
class PlaceRecord:
    """One geo-tagged image. ``place`` carries a ready-made label (e.g. GSV-Cities)."""

    id: str
    east: float = math.nan
    north: float = math.nan
    heading: float | None = None
    frame: int | None = None
    source: str = ""
    place: str | None = None

    def __post_init__(self):
        if self.heading is not None:
            object.__setattr__(self, "heading", float(self.heading) % 360.0)

    @classmethod
    def from_dict(cls, d: dict) -> "PlaceRecord":
        known = {k: d[k] for k in ("id", "east", "north", "heading", "frame", "source", "place")
                 if k in d and d[k] is not None}
        if "id" not in known:
            raise ValueError(f"record without id: {d}")
        known["id"] = str(known["id"])
        for k in ("east", "north"):
            if k in known:
                known[k] = float(known[k])
        if "frame" in known:
            known["frame"] = int(known["frame"])
        return cls(**known)

    def to_dict(self) -> dict:
        out = {"id": self.id}
        if not math.isnan(self.east):
            out["east"] = self.east
        if not math.isnan(self.north):
            out["north"] = self.north
        for k in ("heading", "frame", "place"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        if self.source:
            out["source"] = self.source
        return out


GeoImageRecord = PlaceRecord


@dataclass(frozen=True)
class DivisionConfig:
    cell_m: float = 15.0
    alpha_deg: float = 60.0
    group_n: int = 3
    group_l: int = 2

    def __post_init__(self):
        if not self.cell_m > 0:
            raise ValueError("cell size must be positive")
        if not self.alpha_deg > 0:
            raise ValueError("angular bin width must be positive")
        bins = 360.0 / self.alpha_deg
        if abs(bins - round(bins)) > 1e-9:
            raise ValueError(f"angular bin width {self.alpha_deg} does not divide 360")
        if self.group_n < 1 or self.group_l < 1:
            raise ValueError("group lattice sizes must be >= 1")

    @property
    def n_heading_bins(self) -> int:
        return round(360.0 / self.alpha_deg)

    @property
    def n_groups(self) -> int:
        return self.group_n * self.group_n * self.group_l


# Pittsburgh and MSLS use 15 m / 60 deg with a 3x3x2 group lattice; SF-XL 10 m / 60 deg, 5x5x2.
PITTS_MSLS = DivisionConfig(15.0, 60.0, 3, 2)
SFXL = DivisionConfig(10.0, 60.0, 5, 2)


class CategoryLabel(NamedTuple):
    e: int
    n: int
    h: int


class Group(NamedTuple):
    e: int
    n: int
    h: int


def assign_category(r: PlaceRecord, cfg: DivisionConfig) -> CategoryLabel:
    if r.heading is None:
        raise ValueError(f"record {r.id} has no heading")
    if not (math.isfinite(r.east) and math.isfinite(r.north) and math.isfinite(r.heading)):
        raise ValueError(f"record {r.id} has non-finite coordinates")
    h = math.floor(r.heading / cfg.alpha_deg)
    # heading is wrapped into [0, 360); guard the float edge just below 360
    h = min(h, cfg.n_heading_bins - 1)
    return CategoryLabel(math.floor(r.east / cfg.cell_m), math.floor(r.north / cfg.cell_m), h)


def group_of(label: CategoryLabel, cfg: DivisionConfig) -> Group:
    return Group(label.e % cfg.group_n, label.n % cfg.group_n, label.h % cfg.group_l)


def group_index(g: Group, cfg: DivisionConfig) -> int:
    return (g.e * cfg.group_n + g.n) * cfg.group_l + g.h


def build_groups(labels, cfg: DivisionConfig) -> dict[CategoryLabel, Group]:
    return {CategoryLabel(*lab): group_of(CategoryLabel(*lab), cfg) for lab in labels}


def pitts_pseudo_yaw(view_index: int) -> float:
    """Pseudo heading of the Pittsburgh yaw view ``0..11``: 30 degrees apart."""
    if not 0 <= view_index < PITTS_YAW_VIEWS:
        raise ValueError(f"yaw view index must be in [0, {PITTS_YAW_VIEWS}), got {view_index}")
    return 30.0 * view_index


@dataclass(frozen=True)
class ManifestRow:
    record: PlaceRecord
    label: CategoryLabel | None
    group: Group | None

    @property
    def place_key(self) -> str:
        if self.label is None:
            return f"{self.record.source or 'pre'}:{self.record.place}"
        return f"{self.label.e}_{self.label.n}_{self.label.h}"

    def to_dict(self, cfg: DivisionConfig) -> dict:
        out = self.record.to_dict()
        if self.label is not None:
            out.update(e_i=self.label.e, n_j=self.label.n, h_k=self.label.h,
                       group=group_index(self.group, cfg))
        else:
            out["group"] = -1
        out["place_key"] = self.place_key
        return out


def divide(records, cfg: DivisionConfig) -> list[ManifestRow]:
    """Label every record; pre-labeled records keep their place and join group -1."""
    rows = []
    for r in records:
        if r.place is not None:
            rows.append(ManifestRow(r, None, None))
        else:
            lab = assign_category(r, cfg)
            rows.append(ManifestRow(r, lab, group_of(lab, cfg)))
    return rows


@dataclass(frozen=True)
class BatchSpec:
    step: int
    group: int
    places: tuple[str, ...]
    image_ids: tuple[tuple[str, ...], ...]

    @property
    def size(self) -> int:
        return sum(len(ids) for ids in self.image_ids)

    def to_dict(self) -> dict:
        return {"step": self.step, "group": self.group,
                "places": list(self.places), "images": [list(i) for i in self.image_ids]}


def _groups_to_places(rows: list[ManifestRow], cfg: DivisionConfig
                      ) -> dict[int, dict[str, list[str]]]:
    out: dict[int, dict[str, list[str]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        gid = -1 if row.group is None else group_index(row.group, cfg)
        out[gid][row.place_key].append(row.record.id)
    return {g: dict(p) for g, p in sorted(out.items())}


def sample_batches(rows: list[ManifestRow], cfg: DivisionConfig, places_per_batch: int = 120,
                   images_per_place: int = 4, seed: int = 0, steps: int | None = None,
                   warnings: list | None = None) -> Iterator[BatchSpec]:
    """Place-balanced batches drawn from one group at a time, groups in round robin.

    Groups with fewer than ``places_per_batch`` eligible places are skipped and
    reported through ``warnings`` (and the module logger).
    """
    rng = np.random.default_rng(seed)
    grouped = _groups_to_places(rows, cfg)
    eligible = {}
    for gid, places in grouped.items():
        ok = sorted(p for p, ids in places.items() if len(ids) >= images_per_place)
        if len(ok) < places_per_batch:
            msg = {"warning": "group_too_small", "group": gid, "eligible_places": len(ok),
                   "needed": places_per_batch}
            log.warning("skipping group %d: %d eligible places < %d", gid, len(ok),
                        places_per_batch)
            if warnings is not None:
                warnings.append(msg)
            continue
        eligible[gid] = ok
    if not eligible:
        return
    order = sorted(eligible)
    step = 0
    while steps is None or step < steps:
        gid = order[step % len(order)]
        chosen = rng.choice(len(eligible[gid]), size=places_per_batch, replace=False)
        places = tuple(eligible[gid][i] for i in sorted(chosen))
        images = tuple(
            tuple(sorted(str(i) for i in rng.choice(sorted(grouped[gid][p]),
                                                    size=images_per_place, replace=False)))
            for p in places
        )
        yield BatchSpec(step, gid, places, images)
        step += 1
