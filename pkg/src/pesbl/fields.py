"""Space-time grids and sampled field containers.

A :class:`FieldSeries` holds a scalar quantity ``u`` sampled on a regular
space-time grid together with a provenance tag.  Fields serialize to a
self-describing plain-text container (header lines followed by CSV rows in
row-major order, time outermost) that every pipeline stage can read back.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError

PROVENANCES = ("clean", "noisy", "denoised", "simulated")


@dataclass(frozen=True)
class GridSpec:
    """Regular sampling grid: space (1D or 2D) crossed with time.

    Periodic grids sample ``nx`` points excluding the right endpoint
    (spacing ``(x_max - x_min) / nx``); non-periodic grids include both
    endpoints (spacing ``(x_max - x_min) / (nx - 1)``).  Time always
    includes both endpoints.
    """

    x_min: float
    x_max: float
    nx: int
    t_min: float
    t_max: float
    nt: int
    y_min: float | None = None
    y_max: float | None = None
    ny: int | None = None
    periodic: bool = False

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ConfigError("grid: x_max must exceed x_min")
        if not self.t_max > self.t_min:
            raise ConfigError("grid: t_max must exceed t_min")
        if self.nx < 8 or self.nt < 8:
            raise ConfigError("grid: nx and nt must be at least 8")
        ys = (self.y_min, self.y_max, self.ny)
        if any(v is not None for v in ys) and any(v is None for v in ys):
            raise ConfigError("grid: y_min, y_max, ny must be given together")
        if self.ny is not None:
            if self.ny < 8:
                raise ConfigError("grid: ny must be at least 8")
            if not self.y_max > self.y_min:
                raise ConfigError("grid: y_max must exceed y_min")

    @property
    def is_2d(self) -> bool:
        return self.ny is not None

    @property
    def shape(self) -> tuple[int, ...]:
        if self.is_2d:
            return (self.nt, self.ny, self.nx)
        return (self.nt, self.nx)

    @property
    def dx(self) -> float:
        n = self.nx if self.periodic else self.nx - 1
        return (self.x_max - self.x_min) / n

    @property
    def dy(self) -> float:
        if not self.is_2d:
            raise ConfigError("grid: no y axis on a 1D grid")
        n = self.ny if self.periodic else self.ny - 1
        return (self.y_max - self.y_min) / n

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / (self.nt - 1)

    def x(self) -> np.ndarray:
        if self.periodic:
            return self.x_min + self.dx * np.arange(self.nx)
        return np.linspace(self.x_min, self.x_max, self.nx)

    def y(self) -> np.ndarray:
        if not self.is_2d:
            raise ConfigError("grid: no y axis on a 1D grid")
        if self.periodic:
            return self.y_min + self.dy * np.arange(self.ny)
        return np.linspace(self.y_min, self.y_max, self.ny)

    def t(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.nt)

    def axis_spacing(self, axis: str) -> float:
        return {"t": self.dt, "x": self.dx, "y": self.dy if self.is_2d else None}[axis]

    def axis_index(self, axis: str) -> int:
        """Position of a named axis in the value array."""
        if axis == "t":
            return 0
        if axis == "x":
            return 2 if self.is_2d else 1
        if axis == "y":
            if not self.is_2d:
                raise ConfigError("grid: no y axis on a 1D grid")
            return 1
        raise ConfigError(f"grid: unknown axis {axis!r}")

    def coarsen(self, factor: int) -> "GridSpec":
        """Grid with roughly ``1/factor`` the points per space/time axis."""
        if factor < 1:
            raise ConfigError("coarsen: factor must be >= 1")
        if factor == 1:
            return self

        def shrink(n: int, periodic: bool) -> int:
            if periodic:
                m = max(8, n // factor)
                return m
            return max(8, (n - 1) // factor + 1)

        kw = dict(
            x_min=self.x_min, x_max=self.x_max, nx=shrink(self.nx, self.periodic),
            t_min=self.t_min, t_max=self.t_max, nt=shrink(self.nt, False),
            periodic=self.periodic,
        )
        if self.is_2d:
            kw.update(y_min=self.y_min, y_max=self.y_max, ny=shrink(self.ny, self.periodic))
        return GridSpec(**kw)


@dataclass
class FieldSeries:
    """Sampled solution over a grid, with provenance metadata."""

    grid: GridSpec
    values: np.ndarray
    provenance: str = "simulated"
    seed: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ConfigError(
                f"field values shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if self.provenance not in PROVENANCES:
            raise ConfigError(f"unknown provenance {self.provenance!r}")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("field values must all be finite")

    def with_values(self, values: np.ndarray, provenance: str | None = None) -> "FieldSeries":
        return FieldSeries(
            grid=self.grid,
            values=values,
            provenance=provenance or self.provenance,
            seed=self.seed,
        )

    def initial_slice(self) -> np.ndarray:
        """The field at the first time sample."""
        return self.values[0].copy()


def _format_grid(grid: GridSpec) -> str:
    parts = [
        f"x_min={grid.x_min!r}", f"x_max={grid.x_max!r}", f"nx={grid.nx}",
        f"t_min={grid.t_min!r}", f"t_max={grid.t_max!r}", f"nt={grid.nt}",
    ]
    if grid.is_2d:
        parts += [f"y_min={grid.y_min!r}", f"y_max={grid.y_max!r}", f"ny={grid.ny}"]
    parts.append(f"periodic={int(grid.periodic)}")
    return " ".join(parts)


def _parse_grid(text: str) -> GridSpec:
    kw: dict = {}
    for token in text.split():
        key, _, raw = token.partition("=")
        if key in ("nx", "nt", "ny"):
            kw[key] = int(raw)
        elif key == "periodic":
            kw[key] = bool(int(raw))
        else:
            kw[key] = float(raw)
    return GridSpec(**kw)


def write_field(fs: FieldSeries, path: str | Path) -> None:
    """Write a field to the text container format."""
    path = Path(path)
    lines = ["# fieldseries v1", f"# provenance: {fs.provenance}"]
    if fs.seed is not None:
        lines.append(f"# seed: {fs.seed}")
    lines.append(f"# grid: {_format_grid(fs.grid)}")
    rows = fs.values.reshape(-1, fs.grid.nx)
    body = "\n".join(",".join(format(v, ".17g") for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n" + body + "\n")


def read_field(path: str | Path) -> FieldSeries:
    """Read a field written by :func:`write_field`."""
    path = Path(path)
    provenance = "simulated"
    seed = None
    grid = None
    data_lines = []
    with open(path) as fh:
        first = fh.readline().strip()
        if first != "# fieldseries v1":
            raise ConfigError(f"{path}: not a fieldseries container")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, rest = line[1:].strip().partition(":")
                key, rest = key.strip(), rest.strip()
                if key == "provenance":
                    provenance = rest
                elif key == "seed":
                    seed = int(rest)
                elif key == "grid":
                    grid = _parse_grid(rest)
                continue
            data_lines.append(line)
    if grid is None:
        raise ConfigError(f"{path}: missing grid header")
    values = np.array([[float(v) for v in line.split(",")] for line in data_lines])
    values = values.reshape(grid.shape)
    return FieldSeries(grid=grid, values=values, provenance=provenance, seed=seed)


def resample(fs: FieldSeries, new_grid: GridSpec) -> FieldSeries:
    """Linear re-interpolation of a field onto a new grid over the same domain."""
    from scipy.interpolate import RegularGridInterpolator

    g = fs.grid
    if g.is_2d != new_grid.is_2d:
        raise ConfigError("resample: dimensionality mismatch")
    if g.is_2d:
        points = (g.t(), g.y(), g.x())
        tt, yy, xx = np.meshgrid(new_grid.t(), new_grid.y(), new_grid.x(), indexing="ij")
        query = np.stack([tt.ravel(), yy.ravel(), xx.ravel()], axis=-1)
    else:
        points = (g.t(), g.x())
        tt, xx = np.meshgrid(new_grid.t(), new_grid.x(), indexing="ij")
        query = np.stack([tt.ravel(), xx.ravel()], axis=-1)
    interp = RegularGridInterpolator(points, fs.values, method="linear",
                                     bounds_error=False, fill_value=None)
    vals = interp(query).reshape(new_grid.shape)
    return FieldSeries(grid=new_grid, values=vals, provenance=fs.provenance, seed=fs.seed)
