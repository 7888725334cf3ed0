"""Bounded domains on uniform cell-centred grids.

A :class:`Domain` is a boolean mask over a box of cells of side ``h``.  The
lattice is anchored at the origin: cell ``i`` along an axis has centre
``(origin[k] + i + 0.5) * h``.  Anchoring the lattice this way makes
``D / R`` sampled with spacing ``h / R`` an exactly similar grid, which the
scaling checks downstream depend on.

Analytic kinds (ball, rectangle, convex polygon, L-shape, annulus) keep their
parameters so that distances to the boundary can be evaluated exactly; the
``mask`` kind falls back to grid distances.
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Sequence

import numpy as np
from scipy import ndimage, signal
from scipy.spatial import cKDTree
from scipy.special import gamma

KINDS = ("ball", "rectangle", "convex-polygon", "l-shape", "annulus", "mask")
CONVEX_KINDS = ("ball", "rectangle", "convex-polygon")


class DegenerateDomainError(ValueError):
    pass


def unit_ball_volume(d: int) -> float:
    """Volume ``omega_d`` of the unit ball in ``R^d``."""
    return math.pi ** (d / 2) / gamma(d / 2 + 1)


@dataclass(frozen=True)
class BetaCertificate:
    beta: float
    points: np.ndarray
    radii: tuple[float, ...]
    worst_ratio: float
    worst_point: np.ndarray | None = None
    worst_radius: float | None = None


# -- analytic predicates and distances ---------------------------------------


def _segments_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from points ``p`` (n, 2) to the closest of segments ``a[k]b[k]``."""
    ab = b - a
    ap = p[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("nkj,kj->nk", ap, ab) / np.einsum("kj,kj->k", ab, ab), 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(p[:, None, :] - closest, axis=-1).min(axis=1)


def _polygon_edges(vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return vertices, np.roll(vertices, -1, axis=0)


def _l_shape_vertices(params: dict[str, Any]) -> np.ndarray:
    s, n = params["size"], params["notch"]
    ox, oy = params.get("corner", (0.0, 0.0))
    pts = [(0, 0), (s, 0), (s, s - n), (s - n, s - n), (s - n, s), (0, s)]
    return np.array([(ox + x, oy + y) for x, y in pts], dtype=float)


def _contains_analytic(kind: str, params: dict[str, Any], x: np.ndarray) -> np.ndarray:
    if kind == "ball":
        c = np.asarray(params["center"], dtype=float)
        return np.sum((x - c) ** 2, axis=-1) < params["radius"] ** 2
    if kind == "rectangle":
        lo = np.asarray(params["lo"], dtype=float)
        hi = np.asarray(params["hi"], dtype=float)
        return np.all((x > lo) & (x < hi), axis=-1)
    if kind == "convex-polygon":
        v = np.asarray(params["vertices"], dtype=float)
        a, b = _polygon_edges(v)
        e = b - a
        rel = x[..., None, :] - a
        cross = e[:, 0] * rel[..., 1] - e[:, 1] * rel[..., 0]
        return np.all(cross > 0, axis=-1)
    if kind == "l-shape":
        s, n = params["size"], params["notch"]
        ox, oy = params.get("corner", (0.0, 0.0))
        u, w = x[..., 0] - ox, x[..., 1] - oy
        box = (u > 0) & (u < s) & (w > 0) & (w < s)
        notch = (u >= s - n) & (w >= s - n)
        return box & ~notch
    if kind == "annulus":
        c = np.asarray(params["center"], dtype=float)
        r2 = np.sum((x - c) ** 2, axis=-1)
        return (r2 > params["r_in"] ** 2) & (r2 < params["r_out"] ** 2)
    raise ValueError(f"no analytic predicate for kind {kind!r}")


def _distance_analytic(kind: str, params: dict[str, Any], x: np.ndarray) -> np.ndarray:
    """Unsigned distance to the analytic boundary for points inside the domain."""
    if kind == "ball":
        c = np.asarray(params["center"], dtype=float)
        return params["radius"] - np.linalg.norm(x - c, axis=-1)
    if kind == "rectangle":
        lo = np.asarray(params["lo"], dtype=float)
        hi = np.asarray(params["hi"], dtype=float)
        return np.minimum(x - lo, hi - x).min(axis=-1)
    if kind == "annulus":
        c = np.asarray(params["center"], dtype=float)
        r = np.linalg.norm(x - c, axis=-1)
        return np.minimum(params["r_out"] - r, r - params["r_in"])
    if kind == "convex-polygon":
        v = np.asarray(params["vertices"], dtype=float)
    elif kind == "l-shape":
        v = _l_shape_vertices(params)
    else:
        raise ValueError(f"no analytic distance for kind {kind!r}")
    a, b = _polygon_edges(v)
    flat = x.reshape(-1, 2)
    return _segments_distance(flat, a, b).reshape(x.shape[:-1])


def _analytic_bbox(kind: str, d: int, params: dict[str, Any]) -> tuple[np.ndarray, np.ndarray]:
    if kind == "ball":
        c = np.asarray(params["center"], dtype=float)
        return c - params["radius"], c + params["radius"]
    if kind == "annulus":
        c = np.asarray(params["center"], dtype=float)
        return c - params["r_out"], c + params["r_out"]
    if kind == "rectangle":
        return np.asarray(params["lo"], dtype=float), np.asarray(params["hi"], dtype=float)
    if kind == "convex-polygon":
        v = np.asarray(params["vertices"], dtype=float)
        return v.min(axis=0), v.max(axis=0)
    if kind == "l-shape":
        v = _l_shape_vertices(params)
        return v.min(axis=0), v.max(axis=0)
    raise ValueError(f"unknown analytic kind {kind!r}")


# -- the domain ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Domain:
    """Grid-mask representation of a bounded open connected set.

    Attributes
    ----------
    kind : str
        One of :data:`KINDS`.
    d : int
        Spatial dimension.
    h : float
        Cell size.
    origin : tuple of int
        Lattice index of the lower bounding-box corner (``lo = origin * h``).
    mask : ndarray of bool
        Interior indicator sampled at cell centres, shape ``(n_1, ..., n_d)``.
    params : dict
        Analytic parameters for the kind (empty for ``mask``).
    """

    kind: str
    d: int
    h: float
    origin: tuple[int, ...]
    mask: np.ndarray
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.mask.ndim != self.d or len(self.origin) != self.d:
            raise ValueError("mask / origin do not match dimension")
        if self.h <= 0:
            raise ValueError("cell size must be positive")
        if not self.mask.any():
            raise DegenerateDomainError("degenerate domain: empty interior")
        self.mask.setflags(write=False)

    # -- constructors ---------------------------------------------------------

    @classmethod
    def analytic(cls, kind: str, params: dict[str, Any], h: float, d: int | None = None,
                 margin: int = 2) -> Domain:
        """Sample an analytic kind on the origin-anchored lattice of spacing ``h``."""
        if d is None:
            d = len(params.get("center", params.get("lo", (0.0, 0.0))))
        lo, hi = _analytic_bbox(kind, d, params)
        i_lo = np.floor(lo / h).astype(int) - margin
        i_hi = np.ceil(hi / h).astype(int) + margin
        return cls._sample(kind, d, h, tuple(int(v) for v in i_lo), tuple(i_hi - i_lo), params)

    @classmethod
    def _sample(cls, kind: str, d: int, h: float, origin: tuple[int, ...],
                shape: tuple[int, ...], params: dict[str, Any]) -> Domain:
        axes = [(origin[k] + np.arange(shape[k]) + 0.5) * h for k in range(d)]
        centres = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        mask = _contains_analytic(kind, params, centres)
        return cls(kind, d, h, origin, mask, dict(params))

    @classmethod
    def ball(cls, radius: float = 1.0, h: float = 1 / 32, d: int = 2,
             center: Sequence[float] | None = None) -> Domain:
        c = [0.0] * d if center is None else [float(v) for v in center]
        return cls.analytic("ball", {"center": c, "radius": float(radius)}, h, d)

    @classmethod
    def rectangle(cls, lo: Sequence[float], hi: Sequence[float], h: float = 1 / 32) -> Domain:
        params = {"lo": [float(v) for v in lo], "hi": [float(v) for v in hi]}
        return cls.analytic("rectangle", params, h, len(params["lo"]))

    @classmethod
    def square(cls, side: float = 1.0, h: float = 1 / 32, d: int = 2) -> Domain:
        return cls.rectangle([-side / 2] * d, [side / 2] * d, h)

    @classmethod
    def convex_polygon(cls, vertices: Sequence[Sequence[float]], h: float = 1 / 32) -> Domain:
        v = np.asarray(vertices, dtype=float)
        area2 = np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if area2 < 0:
            v = v[::-1]
        return cls.analytic("convex-polygon", {"vertices": v.tolist()}, h, 2)

    @classmethod
    def ellipse(cls, a: float, b: float, h: float = 1 / 32, n_vertices: int = 256) -> Domain:
        """Ellipse with semi-axes ``a`` (x) and ``b`` (y), as a fine convex polygon."""
        t = 2 * np.pi * (np.arange(n_vertices) + 0.5) / n_vertices
        dom = cls.convex_polygon(np.column_stack([a * np.cos(t), b * np.sin(t)]), h)
        dom.params["ellipse"] = [float(a), float(b)]
        return dom

    @classmethod
    def l_shape(cls, size: float = 2.0, notch: float = 1.0, h: float = 1 / 32,
                corner: Sequence[float] = (0.0, 0.0)) -> Domain:
        params = {"size": float(size), "notch": float(notch), "corner": [float(c) for c in corner]}
        return cls.analytic("l-shape", params, h, 2)

    @classmethod
    def annulus(cls, r_in: float, r_out: float, h: float = 1 / 32, d: int = 2,
                center: Sequence[float] | None = None) -> Domain:
        c = [0.0] * d if center is None else [float(v) for v in center]
        params = {"center": c, "r_in": float(r_in), "r_out": float(r_out)}
        return cls.analytic("annulus", params, h, d)

    @classmethod
    def from_mask(cls, mask: np.ndarray, h: float, origin: Sequence[int] | None = None,
                  **params: Any) -> Domain:
        mask = np.asarray(mask, dtype=bool)
        origin = (0,) * mask.ndim if origin is None else tuple(int(o) for o in origin)
        padded, origin = _pad_mask(mask, origin)
        return cls("mask", mask.ndim, float(h), origin, padded, params)

    # -- derived quantities -----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mask.shape

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=float) * self.h

    @property
    def hi(self) -> np.ndarray:
        return (np.asarray(self.origin) + np.asarray(self.shape)) * self.h

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lo, self.hi

    @property
    def is_analytic(self) -> bool:
        return self.kind != "mask"

    @property
    def is_convex(self) -> bool:
        return self.kind in CONVEX_KINDS

    @cached_property
    def interior_index(self) -> np.ndarray:
        """Multi-indices (n_int, d) of interior cells in row-major order."""
        return np.argwhere(self.mask)

    @cached_property
    def interior_points(self) -> np.ndarray:
        return (self.interior_index + np.asarray(self.origin) + 0.5) * self.h

    @property
    def n_interior(self) -> int:
        return int(self.interior_index.shape[0])

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @property
    def measure(self) -> float:
        """Lebesgue measure as (cell count) * h^d."""
        return self.n_interior * self.cell_volume

    @cached_property
    def diameter(self) -> float:
        pts = self.interior_points
        extent = pts.max(axis=0) - pts.min(axis=0) + self.h
        return float(np.linalg.norm(extent))

    def is_connected(self) -> bool:
        _, n = ndimage.label(self.mask)
        return n == 1

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        """Lattice multi-index (relative to the mask) of the cell containing each point."""
        return np.floor(np.asarray(points, dtype=float) / self.h).astype(np.int64) - np.asarray(self.origin)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Membership of arbitrary points by the mask cell they fall into."""
        idx = self.cell_of(points)
        return self._mask_lookup(idx)

    def _mask_lookup(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx)
        shape = np.asarray(self.shape)
        inside = np.all((idx >= 0) & (idx < shape), axis=-1)
        out = np.zeros(idx.shape[:-1], dtype=bool)
        sel = idx[inside]
        out[inside] = self.mask[tuple(sel.T)]
        return out

    @cached_property
    def node_lookup(self) -> np.ndarray:
        """Array over the mask grid mapping cells to interior row numbers (-1 outside)."""
        table = np.full(self.shape, -1, dtype=np.int64)
        table[tuple(self.interior_index.T)] = np.arange(self.n_interior)
        return table

    def node_of(self, points: np.ndarray) -> np.ndarray:
        """Interior row index of the cell containing each point, or -1 outside."""
        idx = self.cell_of(points)
        shape = np.asarray(self.shape)
        inside = np.all((idx >= 0) & (idx < shape), axis=-1)
        out = np.full(idx.shape[:-1], -1, dtype=np.int64)
        out[inside] = self.node_lookup[tuple(idx[inside].T)]
        return out

    # -- boundary helpers --------------------------------------------------------

    @cached_property
    def _padded(self) -> tuple[np.ndarray, np.ndarray]:
        """Mask padded by one exterior layer and the matching origin."""
        return np.pad(self.mask, 1), np.asarray(self.origin) - 1

    @cached_property
    def boundary_exterior_cells(self) -> np.ndarray:
        """Centres of exterior cells face-adjacent to an interior cell."""
        padded, origin = self._padded
        grown = ndimage.binary_dilation(padded, structure=ndimage.generate_binary_structure(self.d, 1))
        ring = grown & ~padded
        return (np.argwhere(ring) + origin + 0.5) * self.h

    @cached_property
    def _exterior_tree(self) -> cKDTree:
        padded, origin = self._padded
        grown = ndimage.binary_dilation(padded, structure=ndimage.generate_binary_structure(self.d, self.d))
        ring = grown & ~padded
        return cKDTree((np.argwhere(ring) + origin + 0.5) * self.h)

    def grid_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance from points to the union of non-interior cells (as closed boxes)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tree = self._exterior_tree
        k = min(3 ** self.d * 2, tree.n)
        _, idx = tree.query(pts, k=k)
        idx = np.atleast_2d(idx).reshape(len(pts), -1)
        centres = tree.data[idx]
        gap = np.maximum(np.abs(pts[:, None, :] - centres) - self.h / 2, 0.0)
        dist = np.linalg.norm(gap, axis=-1).min(axis=1)
        return dist.reshape(np.shape(points)[:-1]) if np.ndim(points) > 1 else dist

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        """Vectorised distance to the boundary for points inside the domain."""
        pts = np.asarray(points, dtype=float)
        if self.is_analytic:
            return np.maximum(_distance_analytic(self.kind, self.params, pts), 0.0)
        return self.grid_distance(pts)

    # -- transforms ---------------------------------------------------------------

    def scaled(self, factor: float) -> Domain:
        """The similar domain ``D / factor`` on the similar grid of spacing ``h / factor``."""
        params = _scale_params(self.params, 1.0 / factor)
        return Domain(self.kind, self.d, self.h / factor, self.origin, self.mask.copy(), params)

    def with_mask(self, mask: np.ndarray, **params: Any) -> Domain:
        """A ``mask``-kind domain on the same lattice."""
        return Domain("mask", self.d, self.h, self.origin, np.asarray(mask, dtype=bool), params)

    def resampled(self, h: float) -> Domain:
        """Re-sample an analytic domain at a different cell size."""
        if not self.is_analytic:
            raise ValueError("mask domains cannot be re-sampled")
        extra = {k: v for k, v in self.params.items() if k == "ellipse"}
        dom = Domain.analytic(self.kind, {k: v for k, v in self.params.items() if k != "ellipse"}, h, self.d)
        dom.params.update(extra)
        return dom

    # -- serialisation ---------------------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        lo, hi = self.bbox
        out: dict[str, Any] = {
            "kind": self.kind,
            "d": self.d,
            "h": self.h,
            "bbox": [lo.tolist(), hi.tolist()],
            "params": _jsonable(self.params),
        }
        if self.kind == "mask":
            bits = np.packbits(self.mask.ravel(order="C"))
            out["mask"] = base64.b64encode(bits.tobytes()).decode("ascii")
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> Domain:
        d, h = int(obj["d"]), float(obj["h"])
        lo = np.asarray(obj["bbox"][0], dtype=float)
        hi = np.asarray(obj["bbox"][1], dtype=float)
        origin = tuple(int(v) for v in np.rint(lo / h))
        shape = tuple(int(v) for v in np.rint((hi - lo) / h))
        params = dict(obj.get("params", {}))
        kind = obj["kind"]
        if kind == "mask":
            raw = np.frombuffer(base64.b64decode(obj["mask"]), dtype=np.uint8)
            mask = np.unpackbits(raw)[: int(np.prod(shape))].reshape(shape).astype(bool)
            return cls("mask", d, h, origin, mask, params)
        return cls._sample(kind, d, h, origin, shape, params)


def _pad_mask(mask: np.ndarray, origin: tuple[int, ...]) -> tuple[np.ndarray, tuple[int, ...]]:
    # keep a one-cell exterior margin so bounding-box faces are exterior cells
    padded = np.pad(mask, 1)
    return padded, tuple(o - 1 for o in origin)


def _scale_params(params: dict[str, Any], s: float) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, val in params.items():
        if key in ("center", "lo", "hi", "corner", "vertices", "ellipse"):
            out[key] = (np.asarray(val, dtype=float) * s).tolist()
        elif key in ("radius", "r_in", "r_out", "size", "notch"):
            out[key] = float(val) * s
        else:
            out[key] = val
    return out


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# -- operations -------------------------------------------------------------------


def dist_to_boundary(domain: Domain, point: Sequence[float]) -> float:
    """Distance from an interior point to the boundary of ``domain``.

    Analytic kinds use the exact analytic distance; mask domains use the
    distance to the nearest non-interior cell, which is within ``h`` of the
    true value.
    """
    p = np.asarray(point, dtype=float).reshape(1, domain.d)
    inside = _contains_analytic(domain.kind, domain.params, p) if domain.is_analytic else domain.contains(p)
    if not inside[0]:
        raise ValueError(f"point {p[0].tolist()} is outside the domain")
    return float(domain.boundary_distance(p)[0])


def inradius(domain: Domain) -> float:
    """Largest distance to the boundary over interior cell centres."""
    if domain.n_interior == 0:
        raise DegenerateDomainError("degenerate domain")
    return float(domain.boundary_distance(domain.interior_points).max())


def _lattice_ball_offsets(r_cells: float, d: int) -> np.ndarray:
    m = int(math.floor(r_cells))
    axes = [np.arange(-m, m + 1)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    return grid[np.sum(grid.astype(float) ** 2, axis=1) <= r_cells ** 2]


def _ball_stencil(r_cells: float, d: int) -> np.ndarray:
    m = int(math.floor(r_cells))
    axes = [np.arange(-m, m + 1)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return np.sum(grid.astype(float) ** 2, axis=-1) <= r_cells ** 2


def exterior_density(domain: Domain, z: Sequence[float], r: float) -> float:
    """Fraction ``|D^c cap B_r(z)| / |B_r(z)|`` by counting lattice cells.

    Both measures count the lattice cells whose centres lie in ``B_r(z)``, so
    the ratio always lies in ``[0, 1]``.
    """
    if r <= 2 * domain.h:
        raise ValueError("radius under-resolved: need r > 2h")
    z = np.asarray(z, dtype=float)
    h = domain.h
    lo = np.ceil((z - r) / h - 0.5).astype(int)
    hi = np.floor((z + r) / h - 0.5).astype(int)
    axes = [np.arange(lo[k], hi[k] + 1) for k in range(domain.d)]
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.d)
    centres = (idx + 0.5) * h
    in_ball = np.sum((centres - z) ** 2, axis=1) <= r * r
    idx = idx[in_ball]
    if len(idx) == 0:
        raise ValueError("radius under-resolved: ball contains no cell centre")
    interior = domain._mask_lookup(idx - np.asarray(domain.origin))
    return float(1.0 - interior.sum() / len(idx))


def default_radii(domain: Domain, count: int = 8) -> list[float]:
    """Geometric radius sequence from ``4h`` to ``diam(D)``."""
    return np.geomspace(4 * domain.h, max(domain.diameter, 5 * domain.h), count).tolist()


def certify_beta(domain: Domain, radii: Sequence[float] | None = None) -> BetaCertificate:
    """Minimum exterior density over boundary-adjacent exterior cells and radii."""
    radii = default_radii(domain) if radii is None else list(radii)
    if not radii:
        raise ValueError("certify_beta needs at least one radius")
    h = domain.h
    for r in radii:
        if r <= 2 * h:
            raise ValueError("radius under-resolved: need r > 2h")
    points = domain.boundary_exterior_cells
    idx = np.rint(points / h - 0.5).astype(int) - np.asarray(domain.origin)
    worst, worst_pt, worst_r = 1.0, None, None
    for r in radii:
        stencil = _ball_stencil(r / h, domain.d)
        m = stencil.shape[0] // 2
        padded = np.pad(domain.mask.astype(float), m + 1)
        counts = signal.fftconvolve(padded, stencil.astype(float), mode="same")
        sel = tuple((idx + m + 1).T)
        ratio = 1.0 - np.rint(counts[sel]) / stencil.sum()
        k = int(np.argmin(ratio))
        if ratio[k] < worst:
            worst, worst_pt, worst_r = float(ratio[k]), points[k], float(r)
    return BetaCertificate(worst, points, tuple(float(r) for r in radii), worst, worst_pt, worst_r)


def lattice_count_in_ball(x0: Sequence[float], r: float, h: float, d: int) -> int:
    """Number of lattice cell centres ``(i + 1/2) h`` inside the closed ball ``B_r(x0)``."""
    x0 = np.asarray(x0, dtype=float)

    def count(level: int, prefix_sq: np.ndarray) -> int:
        rem = r * r - prefix_sq
        ok = rem >= 0
        rem = rem[ok]
        s = np.sqrt(rem)
        lo = np.ceil((x0[level] - s) / h - 0.5)
        hi = np.floor((x0[level] + s) / h - 0.5)
        if level == d - 1:
            return int(np.maximum(hi - lo + 1, 0).sum())
        total = 0
        for base, a, b in zip(prefix_sq[ok], lo, hi):
            if b < a:
                continue
            c = (np.arange(a, b + 1) + 0.5) * h - x0[level]
            total += count(level + 1, base + c * c)
        return total

    return count(0, np.zeros(1))


def cap_exterior_measure(domain: Domain, x0: Sequence[float], r: float) -> float:
    """``|B_r(x0) cap D^c|`` by cell counting; cells outside the box are exterior."""
    if r <= 0:
        raise ValueError("radius must be positive")
    x0 = np.asarray(x0, dtype=float)
    total = lattice_count_in_ball(x0, r, domain.h, domain.d)
    pts = domain.interior_points
    inside = int(np.count_nonzero(np.sum((pts - x0) ** 2, axis=1) <= r * r))
    return (total - inside) * domain.cell_volume
