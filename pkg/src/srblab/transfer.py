"""Ulam discretisation of the transfer operator, SRB estimates and resolvent solves."""
from __future__ import annotations

import csv
import json
import os
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.stats import qmc

from .dynamics import MapFamily, orbit_batch
from .errors import MeanNotZeroError, NonConvergenceError, ParameterError
from .grid import Mesh

MAGIC = b"SRBULAM1"


@dataclass
class UlamOperator:
    """Column-stochastic matrix on the active cells of `mesh`.

    `active` lists the mesh cells kept after pruning (None means all cells).
    """

    mesh: Mesh
    matrix: sp.csr_matrix
    t: float
    samples_per_cell: int
    seed: int
    active: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def active_cells(self):
        return np.arange(self.mesh.n_cells) if self.active is None else self.active

    def to_full(self, v):
        v = np.asarray(v)
        if self.active is None or v.shape[0] == self.mesh.n_cells:
            return v
        out = np.zeros((self.mesh.n_cells,) + v.shape[1:], dtype=v.dtype)
        out[self.active] = v
        return out

    def restrict(self, v):
        v = np.asarray(v)
        if self.active is None or v.shape[0] == self.n:
            return v
        return v[self.active]

    def column_sums(self):
        return np.asarray(self.matrix.sum(axis=0)).ravel()


@dataclass
class SRBMeasure:
    """Either a cell-weight vector over a mesh or an empirical measure over orbit points."""

    kind: str
    weights: np.ndarray
    support_points: Optional[np.ndarray] = None
    residual: float = float("nan")
    mesh: Optional[Mesh] = None
    orbit_ids: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("ulam_vector", "empirical"):
            raise ParameterError(f"unknown measure kind {self.kind!r}")

    def density(self):
        """Cell weights divided by the cell volume."""
        if self.kind != "ulam_vector":
            raise ParameterError("density is defined for ulam_vector measures only")
        return self.weights / self.mesh.cell_volume


def _in_cell_samples(d, samples_per_cell, seed):
    # scrambled Halton points in the unit cube, shared by every cell
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # balance-property warning for non powers of two
        return qmc.Halton(d=d, scramble=True, seed=seed).random(samples_per_cell)


def _assemble_chunk(family, t, mesh, cells, unit, corners):
    pts = corners[cells][:, None, :] + unit[None, :, :] * mesh.widths
    pts = pts.reshape(-1, mesh.d)
    try:
        img = family.eval(t, pts)
    except Exception as exc:  # pragma: no cover - propagated with context
        raise RuntimeError(f"map evaluation failed in cells {cells[0]}..{cells[-1]}") from exc
    bad = ~np.all(np.isfinite(img), axis=-1)
    if bad.any():
        first = cells[np.flatnonzero(bad)[0] // unit.shape[0]]
        raise ParameterError(f"non-finite image of a sample point in cell {first}")
    rows = mesh.index_of(img)
    cols = np.repeat(cells, unit.shape[0])
    return rows, cols


def build_ulam(family: MapFamily, t, mesh: Mesh, samples_per_cell=64, seed=0, prune=None,
               chunk_points=2_000_000, n_threads=None) -> UlamOperator:
    """Ulam matrix: column j holds the landing distribution of cell j's sample points.

    For meshes with bounded directions, `prune` (default 3) rounds of restriction to the
    cells hit by the previous active set are applied; each keeps the matrix column-stochastic.
    """
    if samples_per_cell < 1:
        raise ParameterError("samples_per_cell must be positive")
    if mesh.domain != family.domain:
        raise ParameterError("mesh domain does not match the family domain")
    unit = _in_cell_samples(mesh.d, samples_per_cell, seed)
    corners = mesh.cell_lower_corners()
    n = mesh.n_cells
    per_chunk = max(1, chunk_points // samples_per_cell)
    chunks = [np.arange(s, min(s + per_chunk, n)) for s in range(0, n, per_chunk)]
    n_threads = n_threads or int(os.environ.get("SRBLAB_THREADS", "1"))
    job = lambda c: _assemble_chunk(family, t, mesh, c, unit, corners)  # noqa: E731
    if n_threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(n_threads) as ex:
            parts = list(ex.map(job, chunks))
    else:
        parts = [job(c) for c in chunks]
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    data = np.full(rows.size, 1.0 / samples_per_cell)
    M = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    M.sum_duplicates()
    active = None
    if prune is None:
        prune = 0 if mesh.domain.fully_periodic else 3
    if prune > 0:
        keep = np.arange(n)
        for _ in range(prune):
            sub = M[:, keep]
            hit = np.flatnonzero(np.asarray(sub.getnnz(axis=1)).ravel() > 0)
            if hit.size == keep.size:
                break
            keep = hit
        M = M[keep][:, keep].tocsr()
        active = keep
    return UlamOperator(mesh, M, t, samples_per_cell, seed, active,
                        meta={"family": family.name, "params": dict(family.params)})


# ---------------------------------------------------------------- SRB estimates

def second_eigenvalue_modulus(op: UlamOperator, n_iter=200, seed=0):
    """Deflated power estimate of |lambda_2| on the mean-zero subspace."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(op.n)
    w -= w.mean()
    w /= np.linalg.norm(w)
    burn = n_iter // 2
    log_growth = 0.0
    for k in range(n_iter):
        w = op.matrix @ w
        w -= w.mean()  # wash out roundoff along the invariant direction
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        if k >= burn:
            log_growth += np.log(nrm)
        w /= nrm
    return float(np.exp(log_growth / (n_iter - burn)))


def srb_ulam(op: UlamOperator, tol=1e-13, max_iter=200_000, gap_check=True) -> SRBMeasure:
    """Fixed vector of the Ulam matrix by power iteration from the uniform vector."""
    if not tol > 0:
        raise ParameterError("tol must be positive")
    L = op.matrix
    v = np.full(op.n, 1.0 / op.n)
    diff = np.inf
    for it in range(1, max_iter + 1):
        w = L @ v
        w /= w.sum()
        diff = 0.5 * np.abs(w - v).sum()
        v = w
        if diff < tol:
            break
    else:
        raise NonConvergenceError(f"power iteration stalled after {max_iter} steps (TV step {diff:.3e})",
                                  residual=float(np.abs(L @ v - v).sum()))
    v = np.clip(v, 0.0, None)
    v /= v.sum()
    meta = {"iterations": it}
    if gap_check:
        lam2 = second_eigenvalue_modulus(op)
        meta["lambda2"] = lam2
        if lam2 > 0.999:
            warnings.warn(f"second eigenvalue modulus {lam2:.6f} is ~1: fixed vector may not be unique",
                          RuntimeWarning, stacklevel=2)
    residual = float(np.abs(L @ v - v).sum())
    return SRBMeasure("ulam_vector", op.to_full(v), residual=residual, mesh=op.mesh, meta=meta)


def srb_birkhoff(family: MapFamily, t, n_orbits=100, n_steps=1000, burn_in=100, seed=0,
                 x0=None) -> SRBMeasure:
    """Equal-weight empirical measure over post-burn-in points of uniformly seeded orbits."""
    if n_orbits < 1 or n_steps < 1:
        raise ParameterError("n_orbits and n_steps must be positive")
    rng = np.random.default_rng(seed)
    if x0 is None:
        x0 = family.domain.uniform(n_orbits, rng)
    pts = orbit_batch(family, t, x0, n_steps, burn_in)  # (n_steps, n_orbits, d)
    pts = np.swapaxes(pts, 0, 1).reshape(-1, family.d)
    ids = np.repeat(np.arange(n_orbits), n_steps)
    w = np.full(pts.shape[0], 1.0 / pts.shape[0])
    return SRBMeasure("empirical", w, support_points=pts, orbit_ids=ids,
                      meta={"n_orbits": n_orbits, "n_steps": n_steps, "burn_in": burn_in, "seed": seed})


def push_lebesgue(op: UlamOperator, n) -> SRBMeasure:
    """L^n applied to the normalised uniform vector on the active cells."""
    if n < 0:
        raise ParameterError("n must be nonnegative")
    v = np.full(op.n, 1.0 / op.n)
    for _ in range(n):
        v = op.matrix @ v
    v /= v.sum()
    residual = float(np.abs(op.matrix @ v - v).sum())
    return SRBMeasure("ulam_vector", op.to_full(v), residual=residual, mesh=op.mesh, meta={"n": n})


def tv_distance(mu: SRBMeasure, nu: SRBMeasure):
    return 0.5 * float(np.abs(mu.weights - nu.weights).sum())


# ---------------------------------------------------------------- resolvent

def resolvent_apply(op: UlamOperator, rhs, rtol=1e-10, restart=60, maxiter=400, neumann_max=5000):
    """Solve (I - L) u = rhs on the mean-zero subspace; returns u with sum(u) = 0.

    Uses GMRES on the nonsingular system (I - L + w 1^T) u = rhs (w uniform), which
    forces 1^T u = 0, then falls back to the Neumann series when GMRES stalls.
    """
    rhs_in = np.asarray(rhs, dtype=float)
    b = op.restrict(rhs_in)
    nrm1 = np.abs(b).sum()
    if nrm1 == 0:
        return np.zeros_like(rhs_in)
    if abs(b.sum()) >= 1e-8 * nrm1:
        raise MeanNotZeroError(float(b.mean()))
    L = op.matrix
    n = op.n

    def matvec(u):
        return u - L @ u + u.sum() / n

    A = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
    history = []

    def residual(u):
        return float(np.abs(u - L @ u - b).sum() / nrm1)

    u, info = spla.gmres(A, b, rtol=min(rtol, 1e-12), atol=0.0, restart=restart, maxiter=maxiter,
                         callback=lambda r: history.append(float(r)), callback_type="pr_norm")
    u -= u.mean()
    res = residual(u)
    if res >= rtol:
        # Neumann series sum_k L^k b, continued from the GMRES iterate
        r = b - (u - L @ u)
        for _ in range(neumann_max):
            u = u + r
            r = L @ r
            if np.abs(r).sum() < 0.1 * rtol * nrm1:
                break
        u -= u.mean()
        res = residual(u)
        if res >= rtol:
            raise NonConvergenceError(f"resolvent solve stagnated at relative residual {res:.3e}",
                                      residual=res, history=history)
    return op.to_full(u) if rhs_in.shape[0] != n else u


# ---------------------------------------------------------------- persistence

def save_ulam(op: UlamOperator, path):
    """Little-endian triplet file: magic, header length, JSON header, nnz, rows, cols, values."""
    coo = op.matrix.tocoo()
    header = {"mesh": op.mesh.describe(), "t": op.t, "samples_per_cell": op.samples_per_cell,
              "seed": op.seed, "n": int(op.n),
              "active": None if op.active is None else [int(i) for i in op.active],
              "meta": op.meta}
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hb)))
        fh.write(hb)
        fh.write(struct.pack("<Q", coo.nnz))
        fh.write(coo.row.astype("<i4").tobytes())
        fh.write(coo.col.astype("<i4").tobytes())
        fh.write(coo.data.astype("<f8").tobytes())


def load_ulam(path) -> UlamOperator:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ParameterError(f"{path} is not an Ulam triplet file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        (nnz,) = struct.unpack("<Q", fh.read(8))
        rows = np.frombuffer(fh.read(4 * nnz), dtype="<i4")
        cols = np.frombuffer(fh.read(4 * nnz), dtype="<i4")
        vals = np.frombuffer(fh.read(8 * nnz), dtype="<f8")
    n = header["n"]
    M = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    active = None if header["active"] is None else np.asarray(header["active"], dtype=np.int64)
    return UlamOperator(Mesh.from_description(header["mesh"]), M, header["t"],
                        header["samples_per_cell"], header["seed"], active, header.get("meta", {}))


def export_measure_csv(measure: SRBMeasure, path):
    """CSV with one row per cell (multi-index, weight) or per support point."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if measure.kind == "ulam_vector":
            mesh = measure.mesh
            w.writerow([f"i{k}" for k in range(mesh.d)] + ["weight"])
            mi = mesh.multi_index(np.arange(mesh.n_cells))
            for idx, wt in zip(mi, measure.weights):
                w.writerow([int(i) for i in idx] + ["%.17g" % wt])
        else:
            d = measure.support_points.shape[1]
            w.writerow([f"x{k}" for k in range(d)] + ["weight"])
            for p, wt in zip(measure.support_points, measure.weights):
                w.writerow(["%.17g" % v for v in p] + ["%.17g" % wt])
