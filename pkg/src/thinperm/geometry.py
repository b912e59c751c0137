"""Parametric reference-cell and layer geometry.

The reference cell is Y = (0,1) x (-1,1); a solid region Y_s is carved out
of it and the remaining fluid region gets meshed.  Supported solid families:

* ``Disk``     -- a circular obstacle strictly inside the cell,
* ``Slabs``    -- two full-width slabs of thickness delta capping the top
                  and bottom of the cell (the fluid is the open channel
                  between them),
* ``Polygon``  -- a simple polygon strictly inside the fluid region,
* unions of a ``Slabs`` with obstacles (e.g. a slab-capped channel with an
  interior disk), and
* no solid at all.

The slab family covers the "fluid sealed inside the layer" situation (the
top/bottom cell faces carry no fluid trace) while disks/polygons leave the
faces open.  Unions of slabs with an obstacle realize the sealed case whose
interface normals still span the plane.
"""
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .errors import MeshingFailed

Point = Tuple[float, float]


@dataclass(frozen=True)
class Disk:
    """Circular solid obstacle."""

    center: Point
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise MeshingFailed(f"disk radius must be positive, got {self.radius}")

    def boundary_distance(self, pts):
        pts = np.atleast_2d(pts)
        return np.abs(np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1]) - self.radius)

    def signed_distance(self, pts):
        """Negative inside the solid."""
        pts = np.atleast_2d(pts)
        return np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1]) - self.radius

    def loop_points(self, h):
        """Closed polyline on the circle.

        The segment count is kept above 20 so facet normals of adjacent
        edges always differ by less than the 20 degree corner threshold.
        """
        m = int(max(np.ceil(2 * np.pi * self.radius / h), 20))
        m = 4 * int(np.ceil(m / 4))
        th = 2 * np.pi * np.arange(m) / m
        return np.column_stack(
            [self.center[0] + self.radius * np.cos(th), self.center[1] + self.radius * np.sin(th)]
        )

    def polygon_radius(self, angles, m):
        """Radius of the inscribed m-gon in direction ``angles``."""
        sector = 2 * np.pi / m
        a = np.mod(angles, sector) - sector / 2
        return self.radius * np.cos(sector / 2) / np.cos(a)

    def config(self):
        return {"type": "disk", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Slabs:
    """Two full-width solid slabs of thickness delta at the top and bottom
    of the cell; the fluid is the channel (0,1) x (-a, a) with a = 1 - delta."""

    delta: float

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise MeshingFailed(f"slab thickness must lie in (0, 1), got {self.delta}")

    @property
    def half_height(self):
        return 1.0 - self.delta

    def boundary_distance(self, pts):
        pts = np.atleast_2d(pts)
        a = self.half_height
        return np.minimum(np.abs(pts[:, 1] - a), np.abs(pts[:, 1] + a))

    def signed_distance(self, pts):
        pts = np.atleast_2d(pts)
        return self.half_height - np.abs(pts[:, 1])

    def config(self):
        return {"type": "slabs", "delta": self.delta}


@dataclass(frozen=True)
class Polygon:
    """Simple polygon solid obstacle, strictly inside the fluid region."""

    vertices: Tuple[Point, ...]

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise MeshingFailed("polygon needs at least 3 vertices")

    def _arrays(self):
        v = np.asarray(self.vertices, dtype=float)
        return v, np.roll(v, -1, axis=0)

    def boundary_distance(self, pts):
        pts = np.atleast_2d(pts)
        a, b = self._arrays()
        d = np.full(len(pts), np.inf)
        for p0, p1 in zip(a, b):
            seg = p1 - p0
            t = np.clip(((pts - p0) @ seg) / (seg @ seg), 0.0, 1.0)
            proj = p0 + t[:, None] * seg
            d = np.minimum(d, np.hypot(*(pts - proj).T))
        return d

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        a, b = self._arrays()
        inside = np.zeros(len(pts), dtype=bool)
        for p0, p1 in zip(a, b):
            cond = (p0[1] > pts[:, 1]) != (p1[1] > pts[:, 1])
            xin = (p1[0] - p0[0]) * (pts[:, 1] - p0[1]) / (p1[1] - p0[1] + 1e-300) + p0[0]
            inside ^= cond & (pts[:, 0] < xin)
        return inside

    def signed_distance(self, pts):
        d = self.boundary_distance(pts)
        return np.where(self.contains(pts), -d, d)

    def loop_points(self, h):
        a, b = self._arrays()
        pts = []
        for p0, p1 in zip(a, b):
            n = max(1, int(np.ceil(np.hypot(*(p1 - p0)) / h)))
            for t in np.arange(n) / n:
                pts.append(p0 + t * (p1 - p0))
        return np.asarray(pts)

    def corner_points(self):
        return np.asarray(self.vertices, dtype=float)

    def config(self):
        return {"type": "polygon", "vertices": [list(v) for v in self.vertices]}


SolidShape = Union[Disk, Slabs, Polygon]


@dataclass(frozen=True)
class CellGeometry:
    """Reference layer cell Y = (0,1)^(n-1) x (-1,1) with a solid region.

    ``solid_shape`` may be None, a single shape, or a tuple of shapes whose
    union is the solid (at most one Slabs plus interior obstacles).  Whether
    the top/bottom faces carry fluid is derived, never user supplied: the
    faces are sealed exactly when a slab pair is present.
    """

    solid_shape: Optional[Union[SolidShape, Tuple[SolidShape, ...]]] = None
    dim: int = 2

    def __post_init__(self):
        if self.dim != 2:
            raise MeshingFailed(f"only dim=2 is supported by the solvers, got {self.dim}")
        slabs = [p for p in self.parts if isinstance(p, Slabs)]
        if len(slabs) > 1:
            raise MeshingFailed("at most one slab pair is allowed")

    @property
    def parts(self) -> Tuple[SolidShape, ...]:
        s = self.solid_shape
        if s is None:
            return ()
        if isinstance(s, (tuple, list)):
            return tuple(s)
        return (s,)

    @property
    def slab(self) -> Optional[Slabs]:
        for p in self.parts:
            if isinstance(p, Slabs):
                return p
        return None

    @property
    def holes(self) -> Tuple[SolidShape, ...]:
        return tuple(p for p in self.parts if not isinstance(p, Slabs))

    @property
    def fluid_ybounds(self):
        a = self.slab.half_height if self.slab is not None else 1.0
        return (-a, a)

    @property
    def sn_empty(self) -> bool:
        """True when the solid seals the top and bottom cell faces."""
        return self.slab is not None

    @property
    def sn_class(self) -> str:
        return "empty" if self.sn_empty else "nonempty"

    def has_solid_boundary(self) -> bool:
        return len(self.parts) > 0

    def solid_boundary_distance(self, pts):
        pts = np.atleast_2d(pts)
        d = np.full(len(pts), np.inf)
        for p in self.parts:
            d = np.minimum(d, p.boundary_distance(pts))
        return d

    def validate_for_meshing(self, h):
        """Admissibility at mesh size h; raises MeshingFailed."""
        ylo, yhi = self.fluid_ybounds
        margin = max(1.5 * h, 1e-6)
        for hole in self.holes:
            if isinstance(hole, Disk):
                cx, cy = hole.center
                r = hole.radius
                if cx - r < margin or cx + r > 1.0 - margin:
                    raise MeshingFailed(
                        "disk exits the cell laterally without a periodic image "
                        f"(center {hole.center}, radius {r})"
                    )
                if cy - r < ylo + margin or cy + r > yhi - margin:
                    raise MeshingFailed(
                        f"disk touches the channel walls (center {hole.center}, radius {r})"
                    )
            else:
                v = hole.corner_points()
                if v[:, 0].min() < margin or v[:, 0].max() > 1.0 - margin:
                    raise MeshingFailed("polygon touches the lateral cell boundary")
                if v[:, 1].min() < ylo + margin or v[:, 1].max() > yhi - margin:
                    raise MeshingFailed("polygon touches the top/bottom of the fluid region")

    def config(self):
        if not self.parts:
            shape = {"type": "none"}
        elif len(self.parts) == 1:
            shape = self.parts[0].config()
        else:
            shape = {"type": "union", "parts": [p.config() for p in self.parts]}
        return {"dim": self.dim, "solid_shape": shape}

    @staticmethod
    def shape_from_config(cfg) -> Optional[Union[SolidShape, Tuple[SolidShape, ...]]]:
        kind = cfg.get("type", "none")
        if kind == "none":
            return None
        if kind == "disk":
            return Disk(center=tuple(cfg["center"]), radius=float(cfg["radius"]))
        if kind == "slabs":
            return Slabs(delta=float(cfg["delta"]))
        if kind == "polygon":
            return Polygon(vertices=tuple(tuple(v) for v in cfg["vertices"]))
        if kind == "capped_disk":
            return (
                Slabs(delta=float(cfg["delta"])),
                Disk(center=tuple(cfg["center"]), radius=float(cfg["radius"])),
            )
        if kind == "union":
            return tuple(CellGeometry.shape_from_config(p) for p in cfg["parts"])
        raise MeshingFailed(f"unknown solid shape type {kind!r}")

    @classmethod
    def from_config(cls, cfg):
        return cls(solid_shape=cls.shape_from_config(cfg["solid_shape"]), dim=int(cfg.get("dim", 2)))


@dataclass(frozen=True)
class LayerGeometry:
    """Thin layer: eps-periodic repetition of the scaled fluid cell across
    Sigma = (0, L_1) x ... with thickness 2*eps."""

    cell: CellGeometry
    eps: float
    sigma_lengths: Tuple[int, ...] = (1,)

    def __post_init__(self):
        if self.eps <= 0 or self.eps >= 1:
            raise MeshingFailed(f"eps must lie in (0, 1), got {self.eps}")
        m = 1.0 / self.eps
        if abs(m - round(m)) > 1e-9 * max(1.0, m):
            raise MeshingFailed(f"1/eps must be an integer, got eps={self.eps}")
        if len(self.sigma_lengths) != self.cell.dim - 1:
            raise MeshingFailed("sigma_lengths must have n-1 entries")
        for L in self.sigma_lengths:
            if int(L) != L or L <= 0:
                raise MeshingFailed(f"sigma lengths must be positive integers, got {L}")

    @property
    def inv_eps(self) -> int:
        return round(1.0 / self.eps)

    @property
    def n_cells(self) -> int:
        return int(self.sigma_lengths[0]) * self.inv_eps

    def config(self):
        cfg = self.cell.config()
        cfg.update({"sigma_lengths": [int(L) for L in self.sigma_lengths], "eps": self.eps})
        return cfg

    @classmethod
    def from_config(cls, cfg):
        return cls(
            cell=CellGeometry.from_config(cfg),
            eps=float(cfg["eps"]),
            sigma_lengths=tuple(int(L) for L in cfg.get("sigma_lengths", [1])),
        )
