"""Periodic finite-volume grids, cell-averaged fields, and field norms.

Values live cell-centered with shape ``(n, m)`` in 1D and ``(ny, nx, m)`` in
2D; ``m`` is the number of conserved components.  All solver code operates on
bare arrays of those shapes — :class:`StateField` is the boundary object used
for I/O, mass accounting, and error measurement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

__all__ = [
    "PeriodicGrid1D",
    "PeriodicGrid2D",
    "StateField",
    "periodic_index",
    "total_mass",
    "mass_drift",
    "discrete_l2_norm",
    "discrete_l2_error",
    "write_csv",
    "read_csv",
]


@dataclass(frozen=True)
class PeriodicGrid1D:
    """Uniform periodic mesh of ``n`` cells on ``[x_min, x_max)``."""

    n: int
    x_min: float = 0.0
    x_max: float = 1.0

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"need at least 3 cells, got n={self.n}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def ndim(self) -> int:
        return 1

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx

    @property
    def ncells(self) -> int:
        return self.n

    def cell_centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n) + 0.5) * self.dx

    def field_shape(self, m: int) -> tuple[int, ...]:
        return (self.n, m)


@dataclass(frozen=True)
class PeriodicGrid2D:
    """Uniform periodic mesh of ``nx * ny`` cells on ``[x_min,x_max) x [y_min,y_max)``."""

    nx: int
    ny: int
    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"need at least 3 cells per direction, got {self.nx}x{self.ny}")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("extent maxima must exceed minima")

    @property
    def ndim(self) -> int:
        return 2

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.ny

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy

    @property
    def ncells(self) -> int:
        return self.nx * self.ny

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid arrays ``(X, Y)``, each of shape ``(ny, nx)``."""
        x = self.x_min + (np.arange(self.nx) + 0.5) * self.dx
        y = self.y_min + (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y)

    def field_shape(self, m: int) -> tuple[int, ...]:
        return (self.ny, self.nx, m)


Grid = Union[PeriodicGrid1D, PeriodicGrid2D]


def periodic_index(i, n: int):
    """Wrap (array of) cell indices onto ``0..n-1``."""
    return np.asarray(i) % n


@dataclass
class StateField:
    """Cell-averaged conserved quantities on a periodic grid.

    ``values`` has shape ``grid.field_shape(m)``; entries must be finite on
    construction (solver-internal scratch arrays bypass this class).
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != self.grid.ndim + 1:
            raise ValueError(
                f"values must have shape {self.grid.ndim + 1 - 1}+1 dims "
                f"(cells..., m); got shape {self.values.shape}"
            )
        expect = self.grid.field_shape(self.values.shape[-1])
        if self.values.shape != expect:
            raise ValueError(f"values shape {self.values.shape} != grid shape {expect}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite entries")

    @property
    def m(self) -> int:
        return self.values.shape[-1]

    def copy(self) -> "StateField":
        return StateField(self.grid, self.values.copy())

    def with_values(self, values: np.ndarray) -> "StateField":
        return StateField(self.grid, values)


def total_mass(field: StateField) -> np.ndarray:
    """Per-component integral ``sum_i |cell| u_i``, shape ``(m,)``."""
    cells = field.values.reshape(-1, field.m)
    return field.grid.cell_volume * cells.sum(axis=0)


def mass_drift(u_n: StateField, u_np1: StateField) -> np.ndarray:
    """Relative per-component mass change ``|Δmass| / max(1, |mass_n|)``."""
    m0 = total_mass(u_n)
    m1 = total_mass(u_np1)
    return np.abs(m1 - m0) / np.maximum(1.0, np.abs(m0))


def discrete_l2_norm(values: np.ndarray, grid: Grid) -> float:
    """Volume-weighted l2 norm ``sqrt(sum |cell| v^2)`` of a field array."""
    return float(np.sqrt(grid.cell_volume) * np.linalg.norm(values.ravel()))


def discrete_l2_error(field: StateField, reference: Callable[..., np.ndarray],
                      component: int | None = None) -> float:
    """Discrete L2 distance between a field and a pointwise reference.

    ``reference`` is evaluated at cell centers: ``reference(x)`` in 1D,
    ``reference(x, y)`` in 2D, returning ``(..., m)`` (or ``(...)`` for a
    scalar reference of an m=1 field).  ``component`` restricts the error to
    one conserved component.
    """
    if field.grid.ndim == 1:
        ref = np.asarray(reference(field.grid.cell_centers()), dtype=float)
    else:
        X, Y = field.grid.cell_centers()
        ref = np.asarray(reference(X, Y), dtype=float)
    if ref.ndim == field.grid.ndim:  # scalar-valued reference
        ref = ref[..., None]
    diff = field.values - ref
    if component is not None:
        diff = diff[..., component : component + 1]
    return discrete_l2_norm(diff, field.grid)


# ---------------------------------------------------------------------------
# CSV snapshots: header  x[,y],u1,...,um  with full-precision values

def write_csv(field: StateField, path) -> None:
    m = field.m
    header = (["x"] if field.grid.ndim == 1 else ["x", "y"]) + [f"u{k+1}" for k in range(m)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        if field.grid.ndim == 1:
            xs = field.grid.cell_centers()
            for i, x in enumerate(xs):
                writer.writerow([f"{x:.17g}"] + [f"{v:.17g}" for v in field.values[i]])
        else:
            X, Y = field.grid.cell_centers()
            for iy in range(field.grid.ny):
                for ix in range(field.grid.nx):
                    writer.writerow(
                        [f"{X[iy, ix]:.17g}", f"{Y[iy, ix]:.17g}"]
                        + [f"{v:.17g}" for v in field.values[iy, ix]]
                    )


def read_csv(path, grid: Grid) -> StateField:
    """Read a snapshot written by :func:`write_csv` back onto ``grid``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        ncoord = 2 if header[:2] == ["x", "y"] else 1
        if ncoord != grid.ndim:
            raise ValueError(f"snapshot is {ncoord}D but grid is {grid.ndim}D")
        m = len(header) - ncoord
        rows = [[float(v) for v in row[ncoord:]] for row in reader if row]
    values = np.array(rows).reshape(grid.field_shape(m))
    return StateField(grid, values)
