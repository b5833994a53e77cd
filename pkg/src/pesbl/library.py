"""Candidate-term library construction.

Terms are products of a polynomial power of ``u`` with a spatial-derivative
factor, ordered by increasing complexity: derivative blocks outermost, the
polynomial power inside each block.  The 1-based position of a term in this
ordering is its complexity index, which the learner penalizes quadratically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .fields import FieldSeries, GridSpec


@dataclass(frozen=True)
class TermSpec:
    """One candidate term: ``u**power`` times a derivative factor."""

    index: int            # 1-based position in the library ordering
    power: int
    deriv_order: int      # 0 for none; aggregates report their order (grad=1, lap=2)
    deriv_kind: str | None  # None for 1D x-derivatives, "grad"/"lap" for 2D sums
    name: str


def _name_1d(power: int, deriv: str) -> str:
    poly = {0: "", 1: "u", 2: "u^2", 3: "u^3"}[power]
    if not deriv:
        return poly or "1"
    return f"{poly}u_{deriv}"


def _name_2d(power: int, kind: str | None) -> str:
    poly = {0: "", 1: "u", 2: "u^2", 3: "u^3"}[power]
    if kind is None:
        return poly or "1"
    if kind == "grad":
        return "(u.grad)u" if power == 1 else (f"{poly}(u_x+u_y)" if poly else "u_x+u_y")
    base = "lap(u)"
    return f"{poly} {base}" if poly else base


def vocabulary(two_d: bool = False, max_power: int = 3) -> list[TermSpec]:
    """The ordered candidate vocabulary (16 terms in 1D, 12 in 2D)."""
    terms = []
    if two_d:
        blocks = [(None, 0), ("grad", 1), ("lap", 2)]
        for kind, order in blocks:
            for p in range(max_power + 1):
                terms.append(TermSpec(len(terms) + 1, p, order if kind else 0, kind,
                                      _name_2d(p, kind)))
    else:
        for deriv in ("", "x", "xx", "xxx"):
            for p in range(max_power + 1):
                terms.append(TermSpec(len(terms) + 1, p, len(deriv), None,
                                      _name_1d(p, deriv)))
    return terms


def term_by_name(name: str, two_d: bool = False) -> TermSpec:
    for term in vocabulary(two_d=two_d):
        if term.name == name:
            return term
    raise ConfigError(f"unknown library term {name!r} ({'2D' if two_d else '1D'} vocabulary)")


@dataclass
class Library:
    """Ordered candidate terms evaluated pointwise on a field."""

    terms: list[TermSpec]
    matrix: np.ndarray          # (n_samples, n_terms), column j evaluates term j
    field_shape: tuple[int, ...]
    grid: GridSpec

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    def column_fields(self) -> np.ndarray:
        """Columns reshaped back to the field geometry: (n_terms, *field_shape)."""
        return self.matrix.T.reshape((self.n_terms,) + self.field_shape)

    def index_of(self, name: str) -> int:
        for t in self.terms:
            if t.name == name:
                return t.index
        raise ConfigError(f"term {name!r} not in library")


def _check_grids(u: FieldSeries, derivs) -> None:
    for d in derivs:
        if d.grid != u.grid:
            raise ConfigError("library: derivative fields must share the data grid")


def build_library_1d(u: FieldSeries, u_x: FieldSeries, u_xx: FieldSeries,
                     u_xxx: FieldSeries, max_power: int = 3) -> Library:
    """The 16-term 1D library {1, u, u^2, u^3, u_x, uu_x, ..., u^3 u_xxx}."""
    if u.grid.is_2d:
        raise ConfigError("build_library_1d: expects a 1D grid")
    _check_grids(u, (u_x, u_xx, u_xxx))
    dmap = {0: None, 1: u_x.values, 2: u_xx.values, 3: u_xxx.values}
    terms = vocabulary(two_d=False, max_power=max_power)
    cols = []
    uu = u.values
    for term in terms:
        base = np.ones_like(uu) if term.deriv_order == 0 else dmap[term.deriv_order]
        col = base if term.power == 0 else uu**term.power * base
        cols.append(col.ravel())
    return Library(terms=terms, matrix=np.stack(cols, axis=1),
                   field_shape=u.values.shape, grid=u.grid)


def build_library_2d(u: FieldSeries, u_x: FieldSeries, u_y: FieldSeries,
                     u_xx: FieldSeries, u_yy: FieldSeries, max_power: int = 3) -> Library:
    """The 2D library of polynomial, gradient-sum, and Laplacian aggregates."""
    if not u.grid.is_2d:
        raise ConfigError("build_library_2d: expects a 2D grid")
    _check_grids(u, (u_x, u_y, u_xx, u_yy))
    agg = {None: None, "grad": u_x.values + u_y.values, "lap": u_xx.values + u_yy.values}
    terms = vocabulary(two_d=True, max_power=max_power)
    cols = []
    uu = u.values
    for term in terms:
        base = np.ones_like(uu) if term.deriv_kind is None else agg[term.deriv_kind]
        col = base if term.power == 0 else uu**term.power * base
        cols.append(col.ravel())
    return Library(terms=terms, matrix=np.stack(cols, axis=1),
                   field_shape=u.values.shape, grid=u.grid)


def term_complexity_sum(selected, m: int) -> float:
    """Complexity of a selected index set: ``2*sum(i^2)/M + 2*len`` (1-based indices)."""
    idx = np.asarray(sorted(selected), dtype=float)
    if idx.size == 0:
        return 0.0
    if np.any(idx < 1) or np.any(idx > m):
        raise ConfigError("term_complexity_sum: indices must lie in 1..M")
    return float(2.0 * np.sum(idx**2) / m + 2.0 * idx.size)
