"""Free-boundary extraction and sub-cell positivity for fields with a fat zero set.

A minimizer is exactly zero on a set of positive measure, so the
piecewise-linear interpolant of ``u`` has its level set glued to the zero
nodes.  Before contouring, zero nodes next to the positive set receive the
linear extrapolation of ``u`` from the positive side (layer by layer); on that
extended field edge-linear root placement recovers the free boundary of a
linear profile exactly, for any orientation.
"""

from __future__ import annotations

from dataclasses import dataclass
import weakref

import numpy as np
from scipy.spatial import cKDTree
from skimage import measure

from .grid import Grid, ScalarField, VectorField, interpolator, gradient, subsample_offsets


@dataclass
class FreeBoundary:
    """Extracted contour of ``{u > level}``.

    ``points``/``normals`` are the contour vertices (on cell edges) with unit
    normals pointing out of the positive set.  ``elements`` holds the
    vertex coordinates of each segment (2D) or triangle (3D), shape
    ``(m, dim, dim)``; in 1D each element is a single point of unit measure.
    """

    points: np.ndarray
    normals: np.ndarray
    length_or_area: float
    elements: np.ndarray
    element_normals: np.ndarray
    dim: int

    @property
    def empty(self) -> bool:
        return self.points.shape[0] == 0

    @property
    def centers(self) -> np.ndarray:
        return self.elements.mean(axis=1)

    @property
    def measures(self) -> np.ndarray:
        return _element_measures(self.elements)

    def __len__(self):
        return self.points.shape[0]


def _element_measures(el: np.ndarray) -> np.ndarray:
    if el.shape[0] == 0:
        return np.zeros(0)
    dim = el.shape[-1]
    if dim == 1:
        return np.ones(el.shape[0])
    if dim == 2:
        return np.linalg.norm(el[:, 1] - el[:, 0], axis=1)
    return 0.5 * np.linalg.norm(np.cross(el[:, 1] - el[:, 0], el[:, 2] - el[:, 0]), axis=1)


def empty_free_boundary(dim: int) -> FreeBoundary:
    z = np.zeros((0, dim))
    return FreeBoundary(z, z.copy(), 0.0, np.zeros((0, dim, dim)), z.copy(), dim)


EXT_LAYERS = 4


def signed_extension(values: np.ndarray, level: float) -> np.ndarray:
    """Replace values at nodes with ``u <= level`` by linear extrapolation from the positive side."""
    v = np.asarray(values, dtype=float)
    dim = v.ndim
    inside = v > level
    ext = v.copy()
    known = inside.copy()
    span = max(float(np.max(np.abs(v))), 1.0)
    cap = level - 1e-12 * span
    if not inside.any():
        return np.minimum(ext, cap)
    # enough layers that gradients sampled within two cells of the contour see no fill value
    for _ in range(max(dim, EXT_LAYERS)):
        total = np.zeros_like(v)
        count = np.zeros_like(v)
        for ax in range(dim):
            n = v.shape[ax]
            for step in (1, -1):
                # neighbor p = z + step*e, second neighbor pp = z + 2*step*e
                p = np.roll(ext, -step, axis=ax)
                pp = np.roll(ext, -2 * step, axis=ax)
                kp = np.roll(known, -step, axis=ax)
                kpp = np.roll(known, -2 * step, axis=ax)
                ok = ~known & kp & kpp
                idx = np.arange(n)
                valid_ax = (idx + 2 * step >= 0) & (idx + 2 * step < n)
                shape = [1] * dim
                shape[ax] = n
                ok &= valid_ax.reshape(shape)
                cand = 2.0 * p - pp
                total += np.where(ok, cand, 0.0)
                count += ok
        new = count > 0
        if not new.any():
            break
        ext[new] = np.minimum(total[new] / count[new], cap)
        known |= new
    rest = ~known
    if rest.any():
        ext[rest] = min(float(ext[known].min()), cap) - span
    return ext


def _orient(normals: np.ndarray, reference: np.ndarray) -> np.ndarray:
    flip = np.sum(normals * reference, axis=1) < 0
    normals = normals.copy()
    normals[flip] *= -1
    return normals


def _unit(vecs: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(vecs, axis=1, keepdims=True)
    return vecs / np.where(nrm > 0, nrm, 1.0)


class LevelSet:
    """Cached extended field, interpolators and contour for one (field, level) pair."""

    def __init__(self, u: ScalarField, level: float):
        if level <= 0:
            raise ValueError("level must be positive")
        self.field = u
        self.grid = u.grid
        self.level = float(level)
        self.ext = signed_extension(u.values, self.level)
        self._interp = interpolator(self.grid, self.ext)
        grad = gradient(ScalarField(self.grid, self.ext))
        self._grad_interp = interpolator(self.grid, grad.values)
        self._fb = None
        self._fraction = None

    def value(self, pts: np.ndarray) -> np.ndarray:
        pts = np.clip(np.asarray(pts, dtype=float).reshape(-1, self.grid.dim), self.grid.origin, self.grid.upper)
        return self._interp(pts)

    def positive(self, pts: np.ndarray) -> np.ndarray:
        return self.value(pts) > self.level

    def outward(self, pts: np.ndarray) -> np.ndarray:
        """-grad(ext)/|grad(ext)| at points (zero vector where the gradient vanishes)."""
        pts = np.clip(np.asarray(pts, dtype=float).reshape(-1, self.grid.dim), self.grid.origin, self.grid.upper)
        g = -self._grad_interp(pts)
        return _unit(g)

    @property
    def free_boundary(self) -> FreeBoundary:
        if self._fb is None:
            self._fb = self._extract()
        return self._fb

    def _extract(self) -> FreeBoundary:
        grid = self.grid
        e = self.ext - self.level
        if not np.any(e > 0) or not np.any(e < 0):
            return empty_free_boundary(grid.dim)
        if grid.dim == 1:
            s = np.sign(e)
            i = np.nonzero(s[:-1] * s[1:] < 0)[0]
            t = e[i] / (e[i] - e[i + 1])
            x = grid.axes[0][i] + t * grid.h[0]
            pts = x[:, None]
            nrm = np.where(e[i + 1] > e[i], -1.0, 1.0)[:, None]
            return FreeBoundary(pts, nrm, float(len(x)), pts[:, None, :].copy(), nrm.copy(), 1)
        if grid.dim == 2:
            contours = measure.find_contours(self.ext, self.level)
            segs, verts = [], []
            for c in contours:
                pts = grid.origin + c * grid.h
                verts.append(pts if not np.allclose(pts[0], pts[-1]) else pts[:-1])
                segs.append(np.stack([pts[:-1], pts[1:]], axis=1))
            elements = np.concatenate(segs) if segs else np.zeros((0, 2, 2))
            lengths = _element_measures(elements)
            elements = elements[lengths > 0]
            points = np.concatenate(verts) if verts else np.zeros((0, 2))
            d = elements[:, 1] - elements[:, 0]
            en = _unit(np.stack([d[:, 1], -d[:, 0]], axis=1))
        else:
            verts, faces, _, _ = measure.marching_cubes(self.ext, self.level, spacing=tuple(grid.h))
            points = verts + grid.origin
            elements = points[faces]
            area = _element_measures(elements)
            elements = elements[area > 0]
            en = _unit(np.cross(elements[:, 1] - elements[:, 0], elements[:, 2] - elements[:, 0]))
        en = _orient(en, self.outward(elements.mean(axis=1)))
        normals = self.outward(points)
        bad = np.linalg.norm(normals, axis=1) < 0.5
        if bad.any():
            tree = cKDTree(elements.mean(axis=1))
            _, j = tree.query(points[bad])
            normals[bad] = en[j]
        return FreeBoundary(points, normals, float(_element_measures(elements).sum()), elements, en, grid.dim)

    @property
    def fraction(self) -> np.ndarray:
        """Fraction of each node's dual cell where the interpolated extension exceeds the level."""
        if self._fraction is None:
            self._fraction = self._positivity_fraction()
        return self._fraction

    def _positivity_fraction(self) -> np.ndarray:
        grid = self.grid
        pos = self.ext > self.level
        frac = pos.astype(float)
        # nodes whose neighborhood straddles the level
        mixed = np.zeros_like(pos)
        for ax in range(grid.dim):
            for step in (1, -1):
                nb = np.roll(pos, step, axis=ax)
                sl = [slice(None)] * grid.dim
                sl[ax] = 0 if step == 1 else -1
                nb[tuple(sl)] = pos[tuple(sl)]
                mixed |= nb != pos
        if grid.dim > 1:
            # diagonal neighbors matter for corner cells; dilate once
            grown = mixed.copy()
            for ax in range(grid.dim):
                for step in (1, -1):
                    sh = np.roll(mixed, step, axis=ax)
                    sl = [slice(None)] * grid.dim
                    sl[ax] = 0 if step == 1 else -1
                    sh[tuple(sl)] = False
                    grown |= sh
            mixed = grown
        idx = np.argwhere(mixed)
        if idx.size:
            offs = subsample_offsets(grid.dim) * grid.h
            centers = grid.origin + idx * grid.h
            sub = (centers[:, None, :] + offs[None]).reshape(-1, grid.dim)
            vals = self.value(sub).reshape(idx.shape[0], -1)
            frac[tuple(idx.T)] = np.mean(vals > self.level, axis=1)
        return frac


_CACHE: dict[tuple[int, float], tuple[weakref.ref, LevelSet]] = {}


def level_set(u: ScalarField, level: float) -> LevelSet:
    key = (id(u), float(level))
    hit = _CACHE.get(key)
    if hit is not None and hit[0]() is u and hit[1].field.values is u.values:
        return hit[1]
    ls = LevelSet(u, level)
    if len(_CACHE) > 64:
        _CACHE.clear()
    _CACHE[key] = (weakref.ref(u), ls)
    return ls


def extract_free_boundary(u: ScalarField, level: float) -> FreeBoundary:
    """Contour of {u > level}: marching segments / squares / cubes on the extended field."""
    return level_set(u, level).free_boundary


def distance_to_free_boundary(fb: FreeBoundary, pts: np.ndarray) -> np.ndarray:
    if fb.empty:
        return np.full(len(pts), np.inf)
    cloud = np.concatenate([fb.points, fb.centers])
    d, _ = cKDTree(cloud).query(np.asarray(pts).reshape(-1, fb.dim))
    return d


def _clip_segments(el: np.ndarray, x0: np.ndarray, r: float):
    a = el[:, 0] - x0
    d = el[:, 1] - el[:, 0]
    A = np.sum(d * d, axis=1)
    B = 2 * np.sum(a * d, axis=1)
    C = np.sum(a * a, axis=1) - r * r
    disc = B * B - 4 * A * C
    t0 = np.zeros(len(el))
    t1 = np.zeros(len(el))
    ok = (disc > 0) & (A > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t0[ok] = np.clip((-B[ok] - sq[ok]) / (2 * A[ok]), 0.0, 1.0)
    t1[ok] = np.clip((-B[ok] + sq[ok]) / (2 * A[ok]), 0.0, 1.0)
    frac = np.maximum(t1 - t0, 0.0)
    mid = el[:, 0] + 0.5 * (t0 + t1)[:, None] * d
    return mid, frac * np.sqrt(A)


def _subdivide_triangles(el: np.ndarray, k: int = 4):
    """Split each triangle into k^2 congruent pieces; return centroids and areas."""
    a, b, c = el[:, 0], el[:, 1], el[:, 2]
    cents, areas = [], []
    area = _element_measures(el) / (k * k)
    for i in range(k):
        for j in range(k - i):
            # upright sub-triangle
            bary = np.array([(i + 1 / 3), (j + 1 / 3)]) / k
            cents.append(a + bary[0] * (b - a) + bary[1] * (c - a))
            areas.append(area)
            if i + j < k - 1:
                bary = np.array([(i + 2 / 3), (j + 2 / 3)]) / k
                cents.append(a + bary[0] * (b - a) + bary[1] * (c - a))
                areas.append(area)
    return np.stack(cents, axis=1), np.stack(areas, axis=1)


def elements_in_ball(fb: FreeBoundary, x0, r: float):
    """(centers, measures, normals) of the free-boundary pieces inside B_r(x0)."""
    x0 = np.asarray(x0, dtype=float).reshape(fb.dim)
    if fb.empty:
        z = np.zeros((0, fb.dim))
        return z, np.zeros(0), z
    el = fb.elements
    if fb.dim == 1:
        inside = np.abs(el[:, 0, 0] - x0[0]) < r
        return el[inside, 0], np.ones(int(inside.sum())), fb.element_normals[inside]
    if fb.dim == 2:
        mid, length = _clip_segments(el, x0, r)
        keep = length > 0
        return mid[keep], length[keep], fb.element_normals[keep]
    near = np.min(np.linalg.norm(el - x0, axis=2), axis=1) < r + np.max(np.linalg.norm(el[:, 1:] - el[:, :1], axis=2), axis=1)
    el = el[near]
    nrm = fb.element_normals[near]
    cents, areas = _subdivide_triangles(el)
    inside = np.linalg.norm(cents - x0, axis=2) < r
    m = np.sum(areas * inside, axis=1)
    keep = m > 0
    # area-weighted centroid of the retained pieces
    c = np.sum(cents * (areas * inside)[..., None], axis=1)[keep] / m[keep, None]
    return c, m[keep], nrm[keep]
