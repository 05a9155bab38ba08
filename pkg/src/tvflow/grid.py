"""Rectangular partitions, edge sets, and piecewise-constant fields.

A field assigns one ambient vector to every cell of a partition; an edge
field assigns one vector to every interior edge.  All norms and inner
products carry the measure weights explicitly: cells weigh by Lebesgue
measure, edges by the (k-1)-dimensional Hausdorff measure of the shared
boundary.  Dropping the weights would silently change every constant
downstream (the TV Lipschitz bound, the error-estimate constants, the inner
solver's stopping rule), so plain unweighted sums appear nowhere.

Sign convention: every edge stores its two cells as ``(a, b)`` with
``a < b`` and the sign of ``a`` is +1, so the discrete gradient on an edge
is ``u[a] - u[b]``.  The total variation is invariant under this choice; a
fixed convention just keeps the gradient deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridMismatchError(ValueError):
    """Operands live on different partitions or edge sets."""


# ---------------------------------------------------------------------------
# discretization containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RectPartition:
    """Rectangular cells covering a box domain.

    ``bounds`` has shape ``(n_cells, dim, 2)`` with per-axis (lo, hi);
    ``boundary_cells`` marks cells whose closure touches the domain boundary.
    Instances are immutable; builders guarantee positive measures and an
    exact cover.
    """

    dim: int
    bounds: np.ndarray
    measures: np.ndarray
    centers: np.ndarray
    boundary_cells: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.measures.shape[0]

    @property
    def min_cell_measure(self) -> float:
        return float(self.measures.min())

    @property
    def domain_measure(self) -> float:
        return float(self.measures.sum())


@dataclass(frozen=True)
class EdgeSet:
    """Interior edges of a partition with measures and the sign convention."""

    n_cells: int
    cells_a: np.ndarray
    cells_b: np.ndarray
    measures: np.ndarray

    @property
    def n_edges(self) -> int:
        return self.measures.shape[0]


@dataclass
class Field:
    """Piecewise-constant map: one length-l vector per cell."""

    partition: RectPartition
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.partition.n_cells:
            raise GridMismatchError(
                f"field values shape {self.values.shape} does not match "
                f"{self.partition.n_cells} cells")

    @property
    def l(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "Field":
        return Field(self.partition, self.values.copy())


@dataclass
class EdgeField:
    """Piecewise-constant map on interior edges: one vector per edge."""

    edges: EdgeSet
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.edges.n_edges:
            raise GridMismatchError(
                f"edge values shape {self.values.shape} does not match "
                f"{self.edges.n_edges} edges")

    @property
    def l(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "EdgeField":
        return EdgeField(self.edges, self.values.copy())


def _require_same_partition(u: Field, v: Field) -> None:
    if u.partition is not v.partition or u.values.shape != v.values.shape:
        raise GridMismatchError("fields live on different discretizations")


def _require_compatible(u: Field, edges: EdgeSet) -> None:
    if edges.n_cells != u.partition.n_cells:
        raise GridMismatchError(
            f"edge set built for {edges.n_cells} cells, field has "
            f"{u.partition.n_cells}")


# ---------------------------------------------------------------------------
# uniform builders
# ---------------------------------------------------------------------------

def build_uniform_1d(n_cells: int, length: float) -> tuple[RectPartition, EdgeSet]:
    """Uniform partition of (0, length) into ``n_cells`` intervals.

    Interior edges are the shared endpoints; their 0-dimensional Hausdorff
    measure is 1.
    """
    if n_cells < 1:
        raise ValueError("n_cells must be at least 1")
    if length <= 0:
        raise ValueError("length must be positive")
    h = length / n_cells
    idx = np.arange(n_cells)
    bounds = np.stack([idx * h, (idx + 1) * h], axis=1)[:, None, :]
    centers = ((idx + 0.5) * h)[:, None]
    measures = np.full(n_cells, h)
    boundary = np.zeros(n_cells, dtype=bool)
    boundary[0] = boundary[-1] = True
    part = RectPartition(dim=1, bounds=bounds, measures=measures,
                         centers=centers, boundary_cells=boundary)
    a = np.arange(n_cells - 1, dtype=np.int64)
    edges = EdgeSet(n_cells=n_cells, cells_a=a, cells_b=a + 1,
                    measures=np.ones(n_cells - 1))
    return part, edges


def build_uniform_2d(nx: int, ny: int, lx: float, ly: float) -> tuple[RectPartition, EdgeSet]:
    """Uniform nx-by-ny partition of (0, lx) x (0, ly).

    Cells are indexed x-major: cell ``(ix, iy)`` is ``ix * ny + iy``.  Only
    face-adjacent cells share an edge; corner contacts have zero length and
    are not edges.  An edge between x-neighbours is a vertical segment of
    length ly/ny, between y-neighbours a horizontal one of length lx/nx.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be at least 1")
    if lx <= 0 or ly <= 0:
        raise ValueError("domain lengths must be positive")
    dx, dy = lx / nx, ly / ny
    ix, iy = np.divmod(np.arange(nx * ny), ny)
    bounds = np.stack(
        [np.stack([ix * dx, (ix + 1) * dx], axis=1),
         np.stack([iy * dy, (iy + 1) * dy], axis=1)], axis=1)
    centers = np.stack([(ix + 0.5) * dx, (iy + 0.5) * dy], axis=1)
    measures = np.full(nx * ny, dx * dy)
    boundary = (ix == 0) | (ix == nx - 1) | (iy == 0) | (iy == ny - 1)
    part = RectPartition(dim=2, bounds=bounds, measures=measures,
                         centers=centers, boundary_cells=boundary)

    ea, eb, eh = [], [], []
    for cx in range(nx):
        for cy in range(ny):
            c = cx * ny + cy
            if cx + 1 < nx:
                ea.append(c); eb.append(c + ny); eh.append(dy)
            if cy + 1 < ny:
                ea.append(c); eb.append(c + 1); eh.append(dx)
    edges = EdgeSet(n_cells=nx * ny,
                    cells_a=np.array(ea, dtype=np.int64),
                    cells_b=np.array(eb, dtype=np.int64),
                    measures=np.array(eh, dtype=float))
    return part, edges


def constant_field(partition: RectPartition, value) -> Field:
    value = np.asarray(value, dtype=float)
    return Field(partition, np.tile(value, (partition.n_cells, 1)))


# ---------------------------------------------------------------------------
# gradient, adjoint, total variation
# ---------------------------------------------------------------------------

def discrete_gradient(u: Field, edges: EdgeSet) -> EdgeField:
    """Signed difference ``u[a] - u[b]`` on every interior edge."""
    _require_compatible(u, edges)
    return EdgeField(edges, u.values[edges.cells_a] - u.values[edges.cells_b])


def gradient_adjoint(z: EdgeField, partition: RectPartition) -> Field:
    """Adjoint of the discrete gradient w.r.t. the weighted inner products.

    Satisfies ``edge_inner(discrete_gradient(u), z) == h_delta_inner(u, adj(z))``
    for every u, z on the same discretization.
    """
    edges = z.edges
    if edges.n_cells != partition.n_cells:
        raise GridMismatchError("edge field does not match partition")
    out = np.zeros((partition.n_cells, z.l))
    w = edges.measures[:, None] * z.values
    np.add.at(out, edges.cells_a, w)
    np.subtract.at(out, edges.cells_b, w)
    out /= partition.measures[:, None]
    return Field(partition, out)


def discrete_tv(u: Field, edges: EdgeSet) -> float:
    """Total variation: sum over edges of |jump| times edge measure."""
    _require_compatible(u, edges)
    jumps = np.linalg.norm(u.values[edges.cells_a] - u.values[edges.cells_b], axis=1)
    return float(jumps @ edges.measures)


def lip_tv_upper(partition: RectPartition, edges: EdgeSet) -> float:
    """Upper bound for the Lipschitz constant of the total variation.

    Bounding each edge jump by the triangle inequality and applying
    Cauchy-Schwarz over cells gives

        |TV(u) - TV(v)| <= sqrt( sum_cells (sum of incident edge measures)^2
                                 / cell measure ) * |u - v|

    which is attained (hence equals the Lipschitz constant) whenever the
    cell-adjacency graph is bipartite, as it is for every rectangular grid.
    """
    if edges.n_cells != partition.n_cells:
        raise GridMismatchError("edge set does not match partition")
    s = np.zeros(partition.n_cells)
    np.add.at(s, edges.cells_a, edges.measures)
    np.add.at(s, edges.cells_b, edges.measures)
    return float(np.sqrt(np.sum(s * s / partition.measures)))


def facet(u: Field, edges: EdgeSet, tol: float = 1e-9) -> np.ndarray:
    """Boolean mask of edges across which ``u`` is constant within ``tol``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    _require_compatible(u, edges)
    jumps = np.linalg.norm(u.values[edges.cells_a] - u.values[edges.cells_b], axis=1)
    return jumps <= tol


# ---------------------------------------------------------------------------
# weighted norms and inner products
# ---------------------------------------------------------------------------

def _sqrt(x: float) -> float:
    # tiny negative round-off guard
    return float(np.sqrt(max(x, 0.0)))


def h_delta_inner(u: Field, v: Field) -> float:
    _require_same_partition(u, v)
    return float(np.einsum("i,ij,ij->", u.partition.measures, u.values, v.values))


def h_delta_norm(u: Field) -> float:
    return _sqrt(h_delta_inner(u, u))


def edge_inner(z: EdgeField, w: EdgeField) -> float:
    if z.edges is not w.edges or z.values.shape != w.values.shape:
        raise GridMismatchError("edge fields live on different edge sets")
    return float(np.einsum("i,ij,ij->", z.edges.measures, z.values, w.values))


def edge_norm(z: EdgeField) -> float:
    return _sqrt(edge_inner(z, z))


def h1_norm(z0: EdgeField, z1: Field) -> float:
    """Norm on pairs (edge part, cell part): edge part carries the edge
    measures, cell part the cell measures."""
    return _sqrt(edge_inner(z0, z0) + h_delta_inner(z1, z1))


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def write_field_csv(u: Field, path) -> None:
    """One row per cell: index, cell center coordinates, value components.

    Floats are written with 17 significant digits, which round-trips binary
    doubles exactly.
    """
    k = u.partition.dim
    header = ["cell"] + [f"c{i}" for i in range(k)] + [f"v{i}" for i in range(u.l)]
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for idx in range(u.partition.n_cells):
            row = [str(idx)]
            row += [f"{c:.17g}" for c in u.partition.centers[idx]]
            row += [f"{v:.17g}" for v in u.values[idx]]
            f.write(",".join(row) + "\n")


def read_field_csv(path, partition: RectPartition) -> Field:
    """Parse a field CSV written by :func:`write_field_csv`.

    Validates the row count and the cell centers against the partition.
    """
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().strip().split(",")
        k = partition.dim
        if header[: k + 1] != ["cell"] + [f"c{i}" for i in range(k)]:
            raise ValueError(f"unexpected CSV header in {path}")
        l = len(header) - 1 - k
        values = np.empty((partition.n_cells, l))
        n_rows = 0
        for line in f:
            parts = line.strip().split(",")
            idx = int(parts[0])
            centers = np.array([float(c) for c in parts[1:1 + k]])
            if not np.array_equal(centers, partition.centers[idx]):
                raise ValueError(f"cell {idx} center mismatch in {path}")
            values[idx] = [float(v) for v in parts[1 + k:]]
            n_rows += 1
    if n_rows != partition.n_cells:
        raise ValueError(f"{path} has {n_rows} rows, expected {partition.n_cells}")
    return Field(partition, values)
