"""Flat model domains, uniform meshes and grid functions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

DOMAIN_KINDS = ("circle", "torus2", "cylinder2", "solid_torus3")


@dataclass(frozen=True)
class ModelDomain:
    kind: str
    periodic_dims: tuple
    bounds: tuple  # ((lo, hi), ...) per dimension

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ParameterError(f"unknown domain kind {self.kind!r}")
        if len(self.periodic_dims) != len(self.bounds):
            raise ParameterError("periodic_dims and bounds differ in length")
        for lo, hi in self.bounds:
            if not hi > lo:
                raise ParameterError(f"empty interval ({lo}, {hi})")

    @property
    def d(self):
        return len(self.bounds)

    @property
    def lo(self):
        return np.array([b[0] for b in self.bounds], dtype=float)

    @property
    def hi(self):
        return np.array([b[1] for b in self.bounds], dtype=float)

    @property
    def lengths(self):
        return self.hi - self.lo

    @property
    def fully_periodic(self):
        return all(self.periodic_dims)

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    def wrap(self, x):
        """Reduce periodic coordinates into their fundamental interval."""
        x = np.array(x, dtype=float, copy=True)
        for i, per in enumerate(self.periodic_dims):
            if per:
                lo, hi = self.bounds[i]
                x[..., i] = lo + np.mod(x[..., i] - lo, hi - lo)
                # mod can return the upper endpoint through rounding
                x[..., i] = np.where(x[..., i] >= hi, lo, x[..., i])
        return x

    def contains(self, x, atol=1e-12):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo - atol) & (x <= self.hi + atol), axis=-1)

    def uniform(self, n, rng):
        return self.lo + rng.random((n, self.d)) * self.lengths

    def describe(self):
        return {"kind": self.kind, "periodic_dims": list(self.periodic_dims),
                "bounds": [list(b) for b in self.bounds]}

    @classmethod
    def from_description(cls, desc):
        return cls(desc["kind"], tuple(bool(p) for p in desc["periodic_dims"]),
                   tuple(tuple(float(v) for v in b) for b in desc["bounds"]))


def circle():
    return ModelDomain("circle", (True,), ((0.0, 1.0),))


def torus2():
    return ModelDomain("torus2", (True, True), ((0.0, 1.0), (0.0, 1.0)))


def cylinder2(vlo, vhi):
    return ModelDomain("cylinder2", (True, False), ((0.0, 1.0), (vlo, vhi)))


def solid_torus3(radius):
    return ModelDomain("solid_torus3", (True, False, False),
                       ((0.0, 2 * np.pi), (-radius, radius), (-radius, radius)))


@dataclass(frozen=True)
class Mesh:
    """Uniform partition of a model domain; flat indices follow C order."""

    domain: ModelDomain
    cells_per_dim: tuple

    def __post_init__(self):
        cpd = tuple(int(c) for c in np.atleast_1d(self.cells_per_dim))
        if len(cpd) == 1 and self.domain.d > 1:
            cpd = cpd * self.domain.d
        if len(cpd) != self.domain.d or min(cpd) < 1:
            raise ParameterError(f"cells_per_dim {self.cells_per_dim} incompatible with d={self.domain.d}")
        object.__setattr__(self, "cells_per_dim", cpd)

    @property
    def shape(self):
        return self.cells_per_dim

    @property
    def d(self):
        return self.domain.d

    @property
    def n_cells(self):
        return int(np.prod(self.cells_per_dim))

    @property
    def widths(self):
        return self.domain.lengths / np.array(self.cells_per_dim)

    @property
    def cell_volume(self):
        return float(np.prod(self.widths))

    def centers(self):
        axes = [self.domain.lo[i] + (np.arange(n) + 0.5) * self.widths[i]
                for i, n in enumerate(self.cells_per_dim)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def cell_lower_corners(self):
        return self.centers() - 0.5 * self.widths

    def multi_index(self, flat):
        return np.stack(np.unravel_index(np.asarray(flat), self.cells_per_dim), axis=-1)

    def index_of(self, points, clip=True):
        """Flat cell index of each point (periodic coordinates are wrapped).

        Points outside a bounded direction are clipped onto the boundary cell
        when `clip` is true, otherwise flagged with index -1.
        """
        pts = self.domain.wrap(points)
        rel = (pts - self.domain.lo) / self.widths
        idx = np.floor(rel).astype(np.int64)
        shape = np.array(self.cells_per_dim)
        outside = np.any((idx < 0) | (idx >= shape), axis=-1)
        idx = np.clip(idx, 0, shape - 1)
        flat = np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), self.cells_per_dim)
        if not clip:
            flat = np.where(outside, -1, flat)
        return flat

    def describe(self):
        return {"domain": self.domain.describe(), "cells_per_dim": list(self.cells_per_dim)}

    @classmethod
    def from_description(cls, desc):
        return cls(ModelDomain.from_description(desc["domain"]), tuple(desc["cells_per_dim"]))


@dataclass
class GridFunction:
    mesh: Mesh
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 1:
            self.values = self.values.ravel()
        if self.values.size != self.mesh.n_cells:
            raise ParameterError(f"grid function has {self.values.size} values, mesh has {self.mesh.n_cells} cells")

    def as_array(self):
        return self.values.reshape(self.mesh.shape)

    def __add__(self, other):
        return GridFunction(self.mesh, self.values + _vals(other))

    def __sub__(self, other):
        return GridFunction(self.mesh, self.values - _vals(other))

    def __mul__(self, c):
        return GridFunction(self.mesh, self.values * c)

    __rmul__ = __mul__


def _vals(other):
    return other.values if isinstance(other, GridFunction) else other


def periodic_bump_kernel(mesh, half_width):
    """Cell-sampled tensor bump of support half-width `half_width`, normalised to sum 1.

    Returned in FFT layout (origin at index 0) for periodic convolution.
    """
    k = np.ones(mesh.shape)
    for axis, n in enumerate(mesh.shape):
        offs = np.fft.fftfreq(n, d=1.0 / n) * mesh.widths[axis]
        prof = bump_profile(offs / half_width)
        if prof.sum() == 0:
            prof[0] = 1.0
        shape = [1] * mesh.d
        shape[axis] = n
        k = k * prof.reshape(shape)
    return k / k.sum()


def bump_profile(v):
    """exp(-1/(1-v^2)) on (-1, 1), zero outside (unnormalised)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    inside = np.abs(v) < 1
    out[inside] = np.exp(-1.0 / (1.0 - v[inside] ** 2))
    return out


def periodic_convolve(values, mesh, kernel):
    arr = np.asarray(values).reshape(mesh.shape)
    out = np.fft.ifftn(np.fft.fftn(arr) * np.fft.fftn(kernel))
    if not np.iscomplexobj(values):
        out = out.real
    return out.ravel()
