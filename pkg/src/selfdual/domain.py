"""Discrete domains, sampled fields, kernels and involutions.

The continuum objects (a bounded domain, an essentially bounded vector
field on it, an anti-symmetric Hamiltonian, a measure preserving
involution) are represented at grid level: the domain becomes N
equal-measure cells with midpoint representatives, so every permutation
of cell indices is automatically measure preserving and an involution is
simply a permutation that squares to the identity.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "DiscreteDomain",
    "SampledField",
    "BallRadius",
    "DualPointSet",
    "AntiSymmetricKernel",
    "Involution",
    "build_grid",
    "interval_grid",
    "box_grid",
    "symmetric_square_grid",
    "sample_field",
    "make_kernel",
    "compose_check",
    "ball_radius",
    "build_dual_points",
    "rotation_permutation",
    "swap_permutation",
    "read_field_csv",
    "write_field_csv",
    "load_domain_spec",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class DiscreteDomain:
    """N equal-measure cells with midpoint representatives.

    Attributes
    ----------
    points : (N, d) array of cell representatives.
    cell_measure : measure of a single cell, |domain| / N.
    dim : ambient dimension d.
    radius : largest Euclidean norm among the representatives.
    """

    points: np.ndarray
    cell_measure: float
    dim: int
    radius: float

    def __post_init__(self):
        pts = _readonly(np.atleast_2d(self.points))
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("need at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite grid point")
        if self.cell_measure <= 0:
            raise ValueError("cell_measure must be positive")
        # duplicate representatives make suprema and matching weights ill-posed
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("grid points must be pairwise distinct")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "dim", int(pts.shape[1]))
        object.__setattr__(self, "radius", float(np.linalg.norm(pts, axis=1).max()))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def total_measure(self) -> float:
        return self.cell_measure * self.n

    @property
    def mesh(self) -> float:
        """Linear cell size, cell_measure ** (1/d) for the cubic cells built here."""
        return float(self.cell_measure ** (1.0 / self.dim))


@dataclass(frozen=True)
class SampledField:
    """Vector field values at the domain representatives."""

    values: np.ndarray
    field_radius: float = field(init=False)

    def __post_init__(self):
        vals = _readonly(np.atleast_2d(self.values))
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite field value")
        object.__setattr__(self, "values", vals)
        object.__setattr__(
            self, "field_radius", float(np.linalg.norm(vals, axis=1).max())
        )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def check_pairing(dom: DiscreteDomain, fld: SampledField) -> None:
    if fld.n != dom.n or fld.dim != dom.dim:
        raise ValueError(
            f"field shape {fld.values.shape} does not match domain "
            f"({dom.n} points in R^{dom.dim})"
        )


@dataclass(frozen=True)
class BallRadius:
    """Radius of the ball containing both the domain and the field values."""

    value: float
    margin: float

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("radius must be positive")


def ball_radius(dom: DiscreteDomain, fld: SampledField, margin: float = 0.05) -> BallRadius:
    """R = (1 + margin) * max(domain radius, field radius).

    The margin keeps suprema off the ball boundary; the containment
    invariants only need margin >= 0.
    """
    if margin < 0:
        raise ValueError("margin must be non-negative")
    check_pairing(dom, fld)
    return BallRadius(float((1.0 + margin) * max(dom.radius, fld.field_radius)), margin)


@dataclass(frozen=True)
class DualPointSet:
    """Finite stand-in for the dual ball in all slope suprema.

    Contains the origin, every sampled field value and a shell of
    near-uniform sphere samples at radius R, so suprema attained in the
    data are exact and sphere-attained suprema are approximable.
    """

    pts: np.ndarray
    radius: float

    def __post_init__(self):
        pts = _readonly(np.atleast_2d(self.pts))
        norms = np.linalg.norm(pts, axis=1)
        if norms.max() > self.radius * (1 + 1e-12):
            raise ValueError("dual point outside the ball")
        if not (norms == 0).any():
            raise ValueError("dual point set must contain the origin")
        if norms.max() < 0.99 * self.radius:
            raise ValueError("dual point set needs a point of norm >= 0.99 R")
        object.__setattr__(self, "pts", pts)

    @property
    def m(self) -> int:
        return self.pts.shape[0]

    def covering_radius(self, samples: int = 4096, seed: int = 0) -> float:
        """Covering radius of the point set inside the ball of radius R.

        Exact in one dimension; estimated from a deterministic Monte Carlo
        sample otherwise (an under-estimate, adequate for reporting).
        """
        d = self.pts.shape[1]
        if d == 1:
            xs = np.sort(self.pts[:, 0])
            gaps = [xs[0] + self.radius, self.radius - xs[-1]]
            if len(xs) > 1:
                gaps.append(0.5 * np.diff(xs).max())
            return float(max(gaps))
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((samples, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.random(samples) ** (1.0 / d)
        probes = g * r[:, None]
        worst = 0.0
        for chunk in np.array_split(probes, max(1, samples // 512)):
            d2 = ((chunk[:, None, :] - self.pts[None, :, :]) ** 2).sum(axis=2)
            worst = max(worst, float(np.sqrt(d2.min(axis=1)).max()))
        return worst


def _sphere_samples(dim: int, m: int, radius: float, seed: int = 0) -> np.ndarray:
    if dim == 1:
        return np.array([[-radius], [radius]])
    if dim == 2:
        ang = 2.0 * np.pi * (np.arange(m) + 0.5) / m
        return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((m, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return radius * g


def build_dual_points(
    dom: DiscreteDomain,
    fld: SampledField,
    ball: BallRadius,
    sphere_points: int | None = None,
    seed: int = 0,
) -> DualPointSet:
    """Assemble {0} + sampled field values + sphere shell, duplicates dropped."""
    check_pairing(dom, fld)
    m = 64 * dom.dim if sphere_points is None else int(sphere_points)
    if m < 1:
        raise ValueError("need at least one sphere sample")
    pts = np.vstack(
        [
            np.zeros((1, dom.dim)),
            fld.values,
            _sphere_samples(dom.dim, m, ball.value, seed),
        ]
    )
    _, keep = np.unique(pts, axis=0, return_index=True)
    pts = pts[np.sort(keep)]
    return DualPointSet(pts, ball.value)


class AntiSymmetricKernel:
    """N x N table of Hamiltonian values with exact anti-symmetry.

    Only the strictly upper triangle is free; the matrix is materialised
    as T - T.T, which makes K[i, j] == -K[j, i] hold bit for bit and the
    diagonal identically zero.
    """

    __slots__ = ("matrix",)

    def __init__(self, upper: np.ndarray):
        upper = np.asarray(upper, dtype=float)
        if upper.ndim != 2 or upper.shape[0] != upper.shape[1]:
            raise ValueError("kernel table must be square")
        if not np.all(np.isfinite(upper)):
            raise ValueError("non-finite kernel entry")
        tri = np.triu(upper, k=1)
        mat = tri - tri.T
        mat.flags.writeable = False
        self.matrix = mat

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "AntiSymmetricKernel":
        """Anti-symmetrize an arbitrary square table, (M - M.T) / 2."""
        m = np.asarray(m, dtype=float)
        return cls(0.5 * (m - m.T))

    @classmethod
    def zero(cls, n: int) -> "AntiSymmetricKernel":
        return cls(np.zeros((n, n)))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __repr__(self) -> str:
        return f"AntiSymmetricKernel(n={self.n})"


def make_kernel(dom: DiscreteDomain, h: Callable) -> AntiSymmetricKernel:
    """Tabulate a pointwise rule H(x, y) on grid x grid, anti-symmetrized.

    The stored table is (H(x_i, x_j) - H(x_j, x_i)) / 2, which kills any
    symmetric component (constants in particular) and enforces the exact
    sign flip the solvers rely on.
    """
    vals = _tabulate_pairwise(dom.points, h)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite kernel value")
    return AntiSymmetricKernel.from_matrix(vals)


def _tabulate_pairwise(pts: np.ndarray, h: Callable) -> np.ndarray:
    n, d = pts.shape
    if d == 1:
        try:
            vals = np.asarray(h(pts[:, 0][:, None], pts[:, 0][None, :]), dtype=float)
            if vals.shape == (n, n):
                return vals
        except Exception:
            pass
    vals = np.empty((n, n))
    for i in range(n):
        xi = pts[i] if d > 1 else pts[i, 0]
        for j in range(n):
            xj = pts[j] if d > 1 else pts[j, 0]
            vals[i, j] = float(np.asarray(h(xi, xj)).reshape(()))
    return vals


class Involution:
    """Permutation of cell indices with sigma(sigma(i)) == i."""

    __slots__ = ("sigma",)

    def __init__(self, sigma: Sequence[int] | np.ndarray):
        sig = np.asarray(sigma, dtype=np.intp)
        if sig.ndim != 1:
            raise ValueError("sigma must be a flat index array")
        if not compose_check(sig):
            raise ValueError("not an involution")
        sig = sig.copy()
        sig.flags.writeable = False
        self.sigma = sig

    @classmethod
    def identity(cls, n: int) -> "Involution":
        return cls(np.arange(n))

    @classmethod
    def reversal(cls, n: int) -> "Involution":
        return cls(np.arange(n)[::-1])

    @classmethod
    def half_shift(cls, n: int) -> "Involution":
        """i paired with i + n/2; needs even n."""
        if n % 2:
            raise ValueError("half shift needs an even number of cells")
        return cls((np.arange(n) + n // 2) % n)

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[tuple[int, int]]) -> "Involution":
        sig = np.arange(n)
        for a, b in pairs:
            sig[a], sig[b] = b, a
        return cls(sig)

    @property
    def n(self) -> int:
        return self.sigma.shape[0]

    def pairs(self) -> list[tuple[int, int]]:
        """The 2-cycles, each listed once as (i, j) with i < j."""
        return [(int(i), int(j)) for i, j in enumerate(self.sigma) if i < j]

    def fixed_points(self) -> np.ndarray:
        return np.flatnonzero(self.sigma == np.arange(self.n))

    def __eq__(self, other) -> bool:
        return isinstance(other, Involution) and np.array_equal(self.sigma, other.sigma)

    def __repr__(self) -> str:
        return f"Involution({self.sigma.tolist()})"


def compose_check(sigma: Sequence[int] | np.ndarray) -> bool:
    """True iff the index array is a permutation that is its own inverse."""
    sig = np.asarray(sigma, dtype=np.intp)
    n = sig.shape[0]
    if n == 0 or sig.min() < 0 or sig.max() >= n:
        return n == 0
    if len(np.unique(sig)) != n:
        return False
    return bool(np.array_equal(sig[sig], np.arange(n)))


# ---------------------------------------------------------------------------
# grid builders


def interval_grid(a: float, b: float, n: int) -> DiscreteDomain:
    """Midpoints of n equal cells of [a, b]."""
    if n < 1:
        raise ValueError("need at least one cell")
    if not b > a:
        raise ValueError("interval extent must be positive")
    h = (b - a) / n
    pts = a + (np.arange(n) + 0.5) * h
    return DiscreteDomain(pts.reshape(-1, 1), h, 1, 0.0)


def box_grid(bounds: Sequence[Sequence[float]], cells: Sequence[int]) -> DiscreteDomain:
    """Midpoint grid of an axis-aligned box with per-axis cell counts."""
    bounds = [tuple(map(float, ab)) for ab in bounds]
    cells = [int(c) for c in cells]
    if len(bounds) != len(cells):
        raise ValueError("bounds and cells must have matching length")
    axes = []
    measure = 1.0
    for (a, b), c in zip(bounds, cells):
        if c < 1:
            raise ValueError("need at least one cell per axis")
        if not b > a:
            raise ValueError("box extent must be positive")
        h = (b - a) / c
        axes.append(a + (np.arange(c) + 0.5) * h)
        measure *= h
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return DiscreteDomain(pts, measure, len(bounds), 0.0)


def symmetric_square_grid(half_width: float, n: int) -> DiscreteDomain:
    """Point-symmetric n x n grid on the centered square [-a, a]^2.

    Coordinates are generated as a*(2k + 1 - n)/n, so the coordinate set
    is bit-exactly closed under negation; the product grid is therefore
    closed under x -> -x and under the quarter turn (x1, x2) -> (x2, -x1).
    """
    if n < 1:
        raise ValueError("need at least one cell per axis")
    if half_width <= 0:
        raise ValueError("square extent must be positive")
    coords = (2.0 * np.arange(n) + 1.0 - n) / n * half_width
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    measure = (2.0 * half_width / n) ** 2
    return DiscreteDomain(pts, measure, 2, 0.0)


def build_grid(spec: Mapping) -> DiscreteDomain:
    """Build a domain from a declarative spec.

    Supported kinds::

        {"kind": "interval", "bounds": [a, b], "cells": n}
        {"kind": "box", "bounds": [[a1, b1], ...], "cells": [n1, ...]}
        {"kind": "symmetric-square", "bounds": a, "cells": n}
    """
    kind = spec.get("kind")
    if kind == "interval":
        a, b = spec["bounds"]
        return interval_grid(float(a), float(b), int(spec["cells"]))
    if kind == "box":
        return box_grid(spec["bounds"], spec["cells"])
    if kind == "symmetric-square":
        bounds = spec["bounds"]
        if isinstance(bounds, (list, tuple)):
            lo, hi = map(float, bounds)
            if lo != -hi:
                raise ValueError("symmetric square bounds must be [-a, a]")
            half = hi
        else:
            half = float(bounds)
        return symmetric_square_grid(half, int(spec["cells"]))
    raise ValueError(f"unknown domain kind: {kind!r}")


def load_domain_spec(source: str | Path | Mapping) -> DiscreteDomain:
    if isinstance(source, Mapping):
        return build_grid(source)
    with open(source, "r", encoding="utf-8") as fh:
        return build_grid(json.load(fh))


def sample_field(dom: DiscreteDomain, f: Callable) -> SampledField:
    """Evaluate a pointwise rule at every representative."""
    vals = np.empty((dom.n, dom.dim))
    for i, p in enumerate(dom.points):
        v = np.asarray(f(p if dom.dim > 1 else p[0]), dtype=float)
        vals[i] = v.reshape(dom.dim)
    if not np.all(np.isfinite(vals)):
        raise ValueError("field rule produced a non-finite value")
    return SampledField(vals)


# ---------------------------------------------------------------------------
# structured permutations of symmetric grids


def _index_of_points(dom: DiscreteDomain, targets: np.ndarray) -> np.ndarray:
    """Exact lookup of target points among the grid representatives."""
    order = np.lexsort(dom.points.T[::-1])
    spts = dom.points[order]
    out = np.empty(len(targets), dtype=np.intp)
    for k, t in enumerate(targets):
        lo = np.searchsorted(spts[:, 0], t[0], side="left")
        hit = -1
        while lo < len(spts) and spts[lo, 0] == t[0]:
            if np.array_equal(spts[lo], t):
                hit = order[lo]
                break
            lo += 1
        if hit < 0:
            raise ValueError("grid is not closed under the requested map")
        out[k] = hit
    return out


def rotation_permutation(dom: DiscreteDomain) -> np.ndarray:
    """Index permutation of the quarter turn (x1, x2) -> (x2, -x1)."""
    if dom.dim != 2:
        raise ValueError("rotation map needs a planar grid")
    targets = np.stack([dom.points[:, 1], -dom.points[:, 0]], axis=1)
    return _index_of_points(dom, targets)


def swap_permutation(dom: DiscreteDomain) -> Involution:
    """Coordinate swap (x1, x2) -> (x2, x1) as a grid involution."""
    if dom.dim != 2:
        raise ValueError("swap map needs a planar grid")
    targets = dom.points[:, ::-1]
    return Involution(_index_of_points(dom, targets))


# ---------------------------------------------------------------------------
# file formats


def write_field_csv(path: str | Path, dom: DiscreteDomain, fld: SampledField) -> None:
    """One row per cell: x0..x{d-1}, u0..u{d-1}."""
    check_pairing(dom, fld)
    d = dom.dim
    header = [f"x{k}" for k in range(d)] + [f"u{k}" for k in range(d)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for p, v in zip(dom.points, fld.values):
            w.writerow([repr(float(c)) for c in p] + [repr(float(c)) for c in v])


def read_field_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read points and values back; pairing with a domain is the caller's job."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        d = sum(1 for c in header if c.startswith("x"))
        if d == 0 or len(header) != 2 * d:
            raise ValueError("field csv must have columns x0..x{d-1}, u0..u{d-1}")
        rows = [list(map(float, row)) for row in r if row]
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 * d:
        raise ValueError("malformed field csv")
    return data[:, :d], data[:, d:]
