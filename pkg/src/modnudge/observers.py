"""Interpolant/observation operators that feed the nudging terms.

Three families, all self-adjoint and non-expansive in L2:

* spectral projection -- keep modes with |k|_inf <= K_c, resolution
  H = L / (2 K_c);
* cell average -- mean over each cell of an m x m macro-grid,
  broadcast back, H = L / m;
* differential filter -- w_bar solving -H^2 lap(w_bar) + w_bar = w,
  i.e. the mode multiplier 1 / (1 + H^2 |k|^2).

The projections are idempotent; the filter is not, which is exactly
what makes the general-form analysis update differ from the shortcut
formula (see assimilate.verify_form_b).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import (
    Field,
    ScalarField,
    SpectralVectorField,
    TorusGrid,
    _readonly,
    h1_seminorm,
    inner,
    l2_norm,
    random_divfree_field,
)

SPECTRAL_PROJECTION = "spectral-projection"
CELL_AVERAGE = "cell-average"
DIFFERENTIAL_FILTER = "differential-filter"

KINDS = (SPECTRAL_PROJECTION, CELL_AVERAGE, DIFFERENTIAL_FILTER)


@dataclass(frozen=True)
class ObservationOperator:
    """One observation operator bound to a grid.

    `h` is the resolution length entering the convergence hypotheses;
    `idempotent` decides whether the explicit analysis update is exact.
    `scale` is the kind's native parameter (K_c, m, or H itself).
    """

    kind: str
    grid: TorusGrid
    h: float
    scale: float
    idempotent: bool
    multiplier: np.ndarray | None = field(default=None, repr=False, compare=False)
    mode_mask: np.ndarray | None = field(default=None, repr=False, compare=False)
    cells: int | None = None

    # -- application -----------------------------------------------------

    def apply(self, w: Field) -> Field:
        if w.grid != self.grid:
            raise ValueError("field and observation operator live on different grids")
        if self.kind == CELL_AVERAGE:
            vals = self._cell_average_values(w.values)
            if isinstance(w, ScalarField):
                return ScalarField.from_grid(self.grid, vals, w.time)
            return SpectralVectorField.from_grid(self.grid, vals, w.time)
        c = _readonly(w.coeffs * self.multiplier)
        if isinstance(w, ScalarField):
            return ScalarField(self.grid, c, w.time)
        return SpectralVectorField(self.grid, c, w.time)

    def apply_coeffs(self, c: np.ndarray) -> np.ndarray:
        """Array-level application on (..., n, n//2+1) coefficient blocks.

        The solver inner loops live on raw arrays; this is the same
        operator as `apply` without the field wrappers.
        """
        if self.kind == CELL_AVERAGE:
            return self.grid.to_coeffs(self._cell_average_values(self.grid.to_values(c)))
        return c * self.multiplier

    def _cell_average_values(self, vals: np.ndarray) -> np.ndarray:
        n, m = self.grid.n, self.cells
        b = n // m
        lead = vals.shape[:-2]
        blocks = vals.reshape(lead + (m, b, m, b))
        means = blocks.mean(axis=(-3, -1), keepdims=True)
        return np.broadcast_to(means, blocks.shape).reshape(vals.shape)

    @property
    def commutes_with_gradient(self) -> bool:
        """True when grad(I_H w) = I_H(grad w) mode by mode."""
        return self.kind != CELL_AVERAGE

    def observed_mode_mask(self) -> np.ndarray:
        if self.mode_mask is None:
            raise ValueError(f"{self.kind} has no sharp observed-mode set")
        return self.mode_mask


def make_spectral_projection(grid: TorusGrid, k_cutoff: int) -> ObservationOperator:
    if k_cutoff < 1:
        raise ValueError("spectral projection needs a cutoff of at least 1")
    mask = (np.abs(grid.kx_int)[:, None] <= k_cutoff) & (grid.ky_int[None, :] <= k_cutoff)
    h = grid.length / (2.0 * k_cutoff)
    return ObservationOperator(
        kind=SPECTRAL_PROJECTION,
        grid=grid,
        h=h,
        scale=float(k_cutoff),
        idempotent=True,
        multiplier=mask.astype(float),
        mode_mask=mask,
    )


def make_cell_average(grid: TorusGrid, m: int) -> ObservationOperator:
    if m < 1 or grid.n % m:
        raise ValueError(f"cell count m={m} must divide the grid size n={grid.n}")
    return ObservationOperator(
        kind=CELL_AVERAGE,
        grid=grid,
        h=grid.length / m,
        scale=float(m),
        idempotent=True,
        cells=m,
    )


def make_differential_filter(grid: TorusGrid, h: float) -> ObservationOperator:
    if not h > 0:
        raise ValueError("filter length must be positive")
    mult = 1.0 / (1.0 + h**2 * grid.k2)
    return ObservationOperator(
        kind=DIFFERENTIAL_FILTER,
        grid=grid,
        h=h,
        scale=h,
        idempotent=False,
        multiplier=mult,
    )


def make_operator(grid: TorusGrid, kind: str, scale: float) -> ObservationOperator:
    """Factory from (kind, scale) as they appear in run configs."""
    if kind == SPECTRAL_PROJECTION:
        return make_spectral_projection(grid, int(scale))
    if kind == CELL_AVERAGE:
        return make_cell_average(grid, int(scale))
    if kind == DIFFERENTIAL_FILTER:
        return make_differential_filter(grid, float(scale))
    raise ValueError(f"unknown observation operator kind {kind!r}; expected one of {KINDS}")


def idempotency_defect(op: ObservationOperator, w: Field) -> float:
    """|| I_H(I_H w) - I_H w || / ||w||."""
    once = op.apply(w)
    twice = op.apply(once)
    denom = l2_norm(w)
    if denom == 0:
        return 0.0
    return l2_norm(twice - once) / denom


# ---------------------------------------------------------------------------
# filter regularity properties
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterPropertyReport:
    """The four smoothing estimates of the differential filter.

    Each entry is (lhs, rhs) of the inequality as measured; `ok`
    aggregates them with `slack` of headroom.
    """

    l2_contraction: tuple[float, float]
    h1_contraction: tuple[float, float]
    approximation: tuple[float, float]  # ||w - w_bar|| <= (H/2) ||grad w||
    positivity: float  # (w, w_bar), must be > 0 for w != 0

    def ok(self, slack: float = 1e-12) -> bool:
        pairs = [self.l2_contraction, self.h1_contraction, self.approximation]
        fine = all(lhs <= rhs * (1 + slack) + slack for lhs, rhs in pairs)
        return fine and self.positivity > 0.0


def filter_property_report(op: ObservationOperator, w: Field) -> FilterPropertyReport:
    if op.kind != DIFFERENTIAL_FILTER:
        raise ValueError("the smoothing estimates are specific to the differential filter")
    wb = op.apply(w)
    return FilterPropertyReport(
        l2_contraction=(l2_norm(wb), l2_norm(w)),
        h1_contraction=(h1_seminorm(wb), h1_seminorm(w)),
        approximation=(l2_norm(w - wb), 0.5 * op.h * h1_seminorm(w)),
        positivity=inner(w, wb),
    )


# ---------------------------------------------------------------------------
# interpolation-constant estimation
# ---------------------------------------------------------------------------

_ANALYTIC_C1_BOUND = {
    SPECTRAL_PROJECTION: 1.0 / math.pi,
    CELL_AVERAGE: math.sqrt(2.0) / math.pi,  # Poincare on a square cell (diam / pi)
    DIFFERENTIAL_FILTER: 0.5,
}


@dataclass(frozen=True)
class ApproxConstants:
    """Empirical interpolation constant ||w - I_H w|| <= c1 H ||grad w||."""

    c1: float
    analytic_bound: float
    samples: int

    @property
    def within_bound(self) -> bool:
        return self.c1 <= self.analytic_bound * (1 + 1e-10)


def estimate_c1(
    op: ObservationOperator,
    rng: np.random.Generator,
    ensemble: int = 64,
) -> ApproxConstants:
    """Max of ||(I - I_H) w|| / (H ||grad w||) over random smooth fields."""
    if ensemble < 10:
        raise ValueError("need at least 10 sample fields for a meaningful estimate")
    worst = 0.0
    for _ in range(ensemble):
        w = random_divfree_field(op.grid, rng, decay=rng.uniform(0.2, 1.0))
        g = h1_seminorm(w)
        if g == 0:
            continue
        worst = max(worst, l2_norm(w - op.apply(w)) / (op.h * g))
    return ApproxConstants(c1=worst, analytic_bound=_ANALYTIC_C1_BOUND[op.kind], samples=ensemble)
