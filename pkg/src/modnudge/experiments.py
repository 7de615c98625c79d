"""Experiment drivers: convergence study, twin runs, sweeps, property suites.

Everything here is deterministic given (config, seed): random fields come
from one seeded generator, and the drivers return plain data structures
so the CLI layer can format them without recomputing anything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import condlab
from .assimilate import (
    check_energy_identity_2b,
    check_gradient_monotonicity,
    check_polarization_identity,
    step2a_explicit,
    step2a_implicit,
    step2b,
    verify_form_b,
)
from .config import RunConfig
from .manufactured import exact_solution, forcing as manufactured_forcing
from .observers import (
    ObservationOperator,
    filter_property_report,
    idempotency_defect,
    make_cell_average,
    make_differential_filter,
    make_operator,
    make_spectral_projection,
)
from .predictability import ErrorSeries, HorizonReport, default_epsilon, horizon_report
from .solvers import KrylovError
from .spectral import (
    LADYZHENSKAYA_CONST,
    SpectralVectorField,
    bump_localized_field,
    check_ladyzhenskaya,
    get_grid,
    h1_seminorm,
    l2_norm,
    random_divfree_field,
)
from .stepping import (
    ForecastState,
    SchemeConfig,
    StabilityLedger,
    TruthIntegrator,
    step1_forecast,
    step_standard_nudging,
    verify_momentum_residual,
)

OBS_ERROR_FLOOR = 1e-14  # below this, strict error decrease is not required

CONVERGE_SCHEMES = ("2a-explicit", "2a-implicit", "2b", "standard")


# ---------------------------------------------------------------------------
# one assimilation step, any scheme
# ---------------------------------------------------------------------------


@dataclass
class AdvanceRecord:
    """What one combined forecast/analysis step produced."""

    vtilde: SpectralVectorField  # pre-analysis state (equals v for fused/none)
    v: SpectralVectorField
    iterations: int
    residual: float


def advance(
    state: ForecastState,
    forcing_field: SpectralVectorField,
    u_obs: SpectralVectorField | None,
    op: ObservationOperator | None,
) -> AdvanceRecord:
    """Advance `state` one step in place and report the intermediate field.

    `u_obs` is the already-observed truth I_H u(t + k); it may be None
    only for the plain forecast.
    """
    cfg = state.config
    if cfg.scheme == "none" or cfg.chi == 0.0:
        res = step1_forecast(state, forcing_field)
        vtilde = v = res.v
        its, resid = res.iterations, res.residual
    elif cfg.scheme == "standard":
        res = step_standard_nudging(state, forcing_field, u_obs, op)
        vtilde = v = res.v
        its, resid = res.iterations, res.residual
    else:
        fres = step1_forecast(state, forcing_field)
        vtilde = fres.v
        if cfg.scheme == "2a-explicit":
            ares = step2a_explicit(vtilde, u_obs, op, cfg.k, cfg.chi)
        elif cfg.scheme == "2a-implicit":
            ares = step2a_implicit(vtilde, u_obs, op, cfg.k, cfg.chi, tol=cfg.analysis_tol)
        else:  # "2b"
            ares = step2b(vtilde, u_obs, op, cfg.k, cfg.chi, cfg.nu, tol=cfg.analysis_tol)
        v = ares.v
        its = fres.iterations + ares.iterations
        resid = max(fres.residual, ares.residual)
    state.time = v.time
    state.velocity = v
    return AdvanceRecord(vtilde=vtilde, v=v, iterations=its, residual=resid)


# ---------------------------------------------------------------------------
# temporal convergence against the closed-form solution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceTable:
    """(k, error at T, rate) rows for one scheme; rate pairs consecutive
    exact halvings only and is nan elsewhere."""

    scheme: str
    rows: tuple[tuple[float, float, float], ...]
    notes: tuple[str, ...] = ()

    @property
    def finest_rate(self) -> float:
        for k, err, rate in reversed(self.rows):
            if math.isfinite(rate):
                return rate
        return float("nan")


def manufactured_error(
    scheme: str,
    n: int,
    k: float,
    T: float,
    nu: float,
    chi: float,
    operator: str = "spectral-projection",
    operator_scale: float = 8.0,
    solver_tol: float = 1e-10,
) -> float:
    """L2 error at T of one run driven by the closed-form solution."""
    grid = get_grid(n)
    op = make_operator(grid, operator, operator_scale)
    cfg = SchemeConfig(k=k, nu=nu, chi=chi, scheme=scheme, solver_tol=solver_tol)
    state = ForecastState(0.0, exact_solution(grid, 0.0), cfg)
    nsteps = round(T / k)
    if abs(nsteps * k - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer number of steps k")
    for i in range(1, nsteps + 1):
        t1 = i * k
        f = manufactured_forcing(grid, t1, nu)
        u1 = exact_solution(grid, t1)
        advance(state, f, op.apply(u1), op)
    return l2_norm(state.velocity - exact_solution(grid, T))


def run_converge(
    cfg: RunConfig,
    k_list: Sequence[float] | None = None,
    schemes: Sequence[str] = CONVERGE_SCHEMES,
) -> dict[str, ConvergenceTable]:
    """One error-vs-k table per scheme, sharing the config's (n, nu, chi, T)."""
    ks = tuple(k_list if k_list is not None else cfg.k_list)
    tables: dict[str, ConvergenceTable] = {}
    for scheme in schemes:
        errors: list[float] = []
        notes: list[str] = []
        for k in ks:
            try:
                errors.append(
                    manufactured_error(
                        scheme,
                        n=cfg.n,
                        k=k,
                        T=cfg.T,
                        nu=cfg.nu,
                        chi=cfg.chi,
                        operator=cfg.operator,
                        operator_scale=cfg.operator_scale,
                        solver_tol=cfg.solver_tol,
                    )
                )
            except KrylovError as exc:
                errors.append(float("nan"))
                notes.append(f"k={k:g}: solve failed ({exc})")
        rows = []
        for i, (k, err) in enumerate(zip(ks, errors)):
            rate = float("nan")
            if i > 0 and abs(ks[i - 1] / k - 2.0) < 1e-9:
                prev = errors[i - 1]
                if err > 0 and math.isfinite(err) and math.isfinite(prev):
                    rate = math.log2(prev / err)
            rows.append((k, err, rate))
        tables[scheme] = ConvergenceTable(scheme, tuple(rows), tuple(notes))
    return tables


# ---------------------------------------------------------------------------
# twin experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwinVariant:
    name: str
    scheme: str
    chi: float


@dataclass
class VariantResult:
    variant: TwinVariant
    series: ErrorSeries  # relative L2 error, including t = 0
    ledger_rows: list[tuple]
    horizons: list[HorizonReport]
    decrease_checked: int = 0
    decrease_violations: int = 0

    @property
    def final_relative_error(self) -> float:
        return self.series.norms[-1]

    def mean_relative_error(self, t_from: float, t_to: float) -> float:
        times = self.series.times
        mask = (times >= t_from - 1e-12) & (times <= t_to + 1e-12)
        if not mask.any():
            raise ValueError("no samples inside the averaging window")
        return float(np.mean(self.series.norms[mask]))


@dataclass
class TwinResult:
    config: RunConfig
    times: np.ndarray
    truth_norms: np.ndarray
    epsilons: tuple[float, ...]
    windows: tuple[tuple[float, float], ...]
    variants: dict[str, VariantResult]


def _chi_tag(chi: float) -> str:
    return f"{chi:g}".replace("+", "")


def twin_variants(cfg: RunConfig, include_alternates: bool = False) -> tuple[TwinVariant, ...]:
    """chi sweep of the configured scheme, plus optional cross-scheme runs."""
    out: list[TwinVariant] = []
    for chi in cfg.chi_list:
        if chi == 0.0:
            out.append(TwinVariant("chi-0", "none", 0.0))
        else:
            out.append(TwinVariant(f"{cfg.scheme}-chi-{_chi_tag(chi)}", cfg.scheme, chi))
    if include_alternates:
        strong = max((c for c in cfg.chi_list if c > 0), default=cfg.chi)
        for scheme in ("standard", "2b"):
            if scheme != cfg.scheme:
                out.append(TwinVariant(f"{scheme}-chi-{_chi_tag(strong)}", scheme, strong))
    return tuple(out)


def twin_initial_fields(
    cfg: RunConfig,
) -> tuple[SpectralVectorField, SpectralVectorField, Callable[[float], SpectralVectorField]]:
    """(truth IC, perturbed assimilation IC, ramped low-mode forcing)."""
    grid = get_grid(cfg.n)
    rng = np.random.default_rng(cfg.seed)
    u0 = random_divfree_field(grid, rng, kmax=4, decay=0.7, normalize=1.0)
    base_forcing = random_divfree_field(grid, rng, kmax=2, normalize=cfg.forcing_amplitude)
    perturbation = random_divfree_field(grid, rng, kmax=8, normalize=1.0)
    v0 = u0 + cfg.k * perturbation

    def forcing_fn(t: float) -> SpectralVectorField:
        return base_forcing * min(1.0, t)

    return u0, v0, forcing_fn


def run_twin(
    cfg: RunConfig,
    variants: Sequence[TwinVariant] | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> TwinResult:
    """Synthetic-truth study: integrate truth once, assimilate its
    observations into every variant, and log errors plus the per-step
    identity residuals of the two-step runs."""
    grid = get_grid(cfg.n)
    op = make_operator(grid, cfg.operator, cfg.operator_scale)
    variants = tuple(variants if variants is not None else twin_variants(cfg))
    for var in variants:
        # mirror the config-level compatibility rule for variant schemes
        SchemeConfig(k=cfg.k, nu=cfg.nu, chi=var.chi, scheme=var.scheme)
        if var.scheme == "2a-explicit" and not op.idempotent:
            raise ValueError(
                f"variant {var.name!r} uses the explicit update with the "
                f"non-idempotent {op.kind!r} operator"
            )

    u0, v0, forcing_fn = twin_initial_fields(cfg)
    substeps = round(cfg.k / cfg.truth_step)
    truth = TruthIntegrator(u0, forcing_fn, cfg.truth_step, cfg.nu, solver_tol=cfg.solver_tol)

    states = {
        var.name: ForecastState(
            0.0,
            v0,
            SchemeConfig(
                k=cfg.k,
                nu=cfg.nu,
                chi=var.chi,
                scheme=var.scheme,
                solver_tol=cfg.solver_tol,
            ),
        )
        for var in variants
    }
    rel0 = l2_norm(u0 - v0) / l2_norm(u0)
    times = [0.0]
    truth_norms = [l2_norm(u0)]
    rels = {var.name: [rel0] for var in variants}
    ledgers: dict[str, list[tuple]] = {var.name: [] for var in variants}
    decrease = {var.name: [0, 0] for var in variants}  # [checked, violations]

    nsteps = cfg.steps
    for n in range(1, nsteps + 1):
        for _ in range(substeps):
            u_next = truth.step()
        u_norm = l2_norm(u_next)
        u_obs = op.apply(u_next)
        f_next = forcing_fn(u_next.time)
        for var in variants:
            state = states[var.name]
            if abs(state.time + cfg.k - u_next.time) > 1e-6 * cfg.k:
                raise RuntimeError("truth and assimilation clocks diverged")
            rec = advance(state, f_next, u_obs, op)
            e = u_next - rec.v
            err = l2_norm(e)
            rels[var.name].append(err / u_norm)
            two_step = var.scheme in ("2a-explicit", "2a-implicit") and var.chi > 0
            if two_step:
                etilde = u_next - rec.vtilde
                pol = check_polarization_identity(e, etilde, op, cfg.k, var.chi)
                formb = verify_form_b(rec.vtilde, rec.v, u_next, op, cfg.k, var.chi).residual_rel
                gm = (
                    check_gradient_monotonicity(e, etilde, op, cfg.k, var.chi)
                    if op.commutes_with_gradient
                    else float("nan")
                )
                if l2_norm(op.apply(e)) > OBS_ERROR_FLOOR:
                    decrease[var.name][0] += 1
                    if not err < l2_norm(etilde):
                        decrease[var.name][1] += 1
                errtilde, grad_etilde = l2_norm(etilde), h1_seminorm(etilde)
            else:
                pol = formb = gm = float("nan")
                errtilde, grad_etilde = err, h1_seminorm(e)
            ledgers[var.name].append(
                (cfg.n, state.time, err, errtilde, h1_seminorm(e), grad_etilde, pol, formb, gm)
            )
        times.append(states[variants[0].name].time)
        truth_norms.append(u_norm)
        if progress is not None:
            progress(n, nsteps)

    times_arr = np.asarray(times)
    truth_arr = np.asarray(truth_norms)
    epsilons = cfg.epsilons or (default_epsilon(truth_arr),)
    windows = cfg.horizon_windows()
    results: dict[str, VariantResult] = {}
    for var in variants:
        series = ErrorSeries(times_arr, np.asarray(rels[var.name]))
        horizons = [
            horizon_report(series, t1, t2, eps) for (t1, t2) in windows for eps in epsilons
        ]
        checked, violations = decrease[var.name]
        results[var.name] = VariantResult(
            variant=var,
            series=series,
            ledger_rows=ledgers[var.name],
            horizons=horizons,
            decrease_checked=checked,
            decrease_violations=violations,
        )
    return TwinResult(
        config=cfg,
        times=times_arr,
        truth_norms=truth_arr,
        epsilons=tuple(epsilons),
        windows=windows,
        variants=results,
    )


# ---------------------------------------------------------------------------
# 1D conditioning sweep
# ---------------------------------------------------------------------------


def run_condlab(cfg: RunConfig, method: str = "lanczos") -> list[condlab.SweepRow]:
    return condlab.condition_sweep(
        cfg.fem_n,
        cfg.fem_m,
        cfg.fem_kind,
        cfg.kchi_list,
        method=method,
        seed=cfg.seed,
    )


# ---------------------------------------------------------------------------
# property suites
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    hard: bool  # soft results are reported but never fail the run
    detail: str


@dataclass(frozen=True)
class PropsReport:
    results: tuple[PropertyResult, ...]
    seed: int
    count: int

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results if r.hard)


def _random_pair(grid, rng) -> tuple[SpectralVectorField, SpectralVectorField]:
    vt = random_divfree_field(grid, rng, decay=rng.uniform(0.2, 0.8))
    u = random_divfree_field(grid, rng, decay=rng.uniform(0.2, 0.8))
    return vt, u


def _random_projection(grid, rng) -> ObservationOperator:
    if rng.random() < 0.5:
        return make_spectral_projection(grid, int(rng.integers(2, grid.n // 4)))
    return make_cell_average(grid, int(rng.choice([2, 4, 8, 16])))


def run_props(seed: int = 0, count: int = 100, tamper: str | None = None) -> PropsReport:
    """Run every identity/property suite on `count` random instances.

    `tamper="gain"` perturbs the explicit update by 1e-3 so the
    equivalence suite must fail; it exists to prove the suite has teeth.
    """
    if count < 10:
        raise ValueError("need at least 10 instances per suite")
    if tamper not in (None, "gain"):
        raise ValueError(f"unknown tamper mode {tamper!r}; only 'gain' is supported")
    rng = np.random.default_rng(seed)
    grid = get_grid(32)
    grid64 = get_grid(64)
    gain_scale = 1.0 + 1e-3 if tamper == "gain" else 1.0
    results: list[PropertyResult] = []

    # differential-filter smoothing estimates
    worst_ok = True
    for _ in range(count):
        op = make_differential_filter(grid, float(rng.uniform(0.1, 1.0)))
        w = random_divfree_field(grid, rng, decay=rng.uniform(0.2, 0.8))
        worst_ok &= filter_property_report(op, w).ok(slack=1e-12)
    results.append(
        PropertyResult(
            "filter-smoothing",
            bool(worst_ok),
            True,
            f"{count} random fields, slack 1e-12",
        )
    )

    # projections are idempotent to rounding
    worst = 0.0
    for _ in range(count):
        op = _random_projection(grid, rng)
        w = random_divfree_field(grid, rng)
        worst = max(worst, idempotency_defect(op, w))
    results.append(
        PropertyResult(
            "projection-idempotency",
            worst <= 1e-12,
            True,
            f"max defect {worst:.3e}",
        )
    )

    # closed-form update == implicit solve for idempotent operators
    worst = 0.0
    for _ in range(count):
        op = _random_projection(grid, rng)
        vt, u = _random_pair(grid, rng)
        k = float(10.0 ** rng.uniform(-3, 0))
        chi = float(10.0 ** rng.uniform(-2, 4))
        u_obs = op.apply(u)
        expl = step2a_explicit(vt, u_obs, op, k, chi, gain_scale=gain_scale)
        impl = step2a_implicit(vt, u_obs, op, k, chi, tol=1e-13)
        worst = max(worst, l2_norm(expl.v - impl.v) / max(l2_norm(impl.v), 1e-300))
    results.append(
        PropertyResult(
            "explicit-implicit-equivalence",
            worst <= 1e-10,
            True,
            f"max relative deviation {worst:.3e}"
            + (" (gain tampered by 1e-3)" if tamper == "gain" else ""),
        )
    )

    # two-term update identity for the (non-idempotent) filter
    worst = 0.0
    nonzero_corrections = 0
    tol = 1e-12
    for _ in range(count):
        op = make_differential_filter(grid, float(rng.uniform(0.2, 1.0)))
        vt, u = _random_pair(grid, rng)
        k = float(10.0 ** rng.uniform(-3, 0))
        chi = float(10.0 ** rng.uniform(-1, 3))
        u_obs = op.apply(u)
        res = step2a_implicit(vt, u_obs, op, k, chi, tol=tol)
        rep = verify_form_b(vt, res.v, u, op, k, chi)
        worst = max(worst, rep.residual_rel)
        if rep.correction_rel > 1e-6:
            nonzero_corrections += 1
    results.append(
        PropertyResult(
            "update-identity-filter",
            worst <= 10.0 * tol and nonzero_corrections >= int(0.9 * count),
            True,
            f"max residual {worst:.3e}, correction > 1e-6 on "
            f"{nonzero_corrections}/{count}",
        )
    )

    # analysis step strictly decreases the error (polarization balance)
    worst = 0.0
    violations = 0
    for _ in range(count):
        op = _random_projection(grid, rng)
        vt, u = _random_pair(grid, rng)
        k = float(10.0 ** rng.uniform(-3, 0))
        chi = float(10.0 ** rng.uniform(-2, 4))
        v = step2a_explicit(vt, op.apply(u), op, k, chi).v
        e, etilde = u - v, u - vt
        worst = max(worst, check_polarization_identity(e, etilde, op, k, chi))
        if l2_norm(op.apply(e)) > OBS_ERROR_FLOOR and not l2_norm(e) < l2_norm(etilde):
            violations += 1
    results.append(
        PropertyResult(
            "error-decrease",
            worst <= 1e-11 and violations == 0,
            True,
            f"max identity residual {worst:.3e}, {violations} monotonicity violations",
        )
    )

    # gradient-norm balance under the spectral projection
    worst = 0.0
    for _ in range(count):
        op = make_spectral_projection(grid, int(rng.integers(2, grid.n // 4)))
        vt, u = _random_pair(grid, rng)
        k = float(10.0 ** rng.uniform(-3, 0))
        chi = float(10.0 ** rng.uniform(-2, 4))
        v = step2a_explicit(vt, op.apply(u), op, k, chi).v
        worst = max(worst, check_gradient_monotonicity(u - v, u - vt, op, k, chi))
    results.append(
        PropertyResult(
            "gradient-monotonicity",
            worst <= 1e-11,
            True,
            f"max identity residual {worst:.3e}",
        )
    )

    # viscous analysis variant's energy balance
    worst = 0.0
    for _ in range(count // 2):
        op = _random_projection(grid, rng)
        vt, u = _random_pair(grid, rng)
        k = float(10.0 ** rng.uniform(-3, 0))
        chi = float(10.0 ** rng.uniform(-2, 3))
        nu = float(10.0 ** rng.uniform(-3, 0))
        res = step2b(vt, op.apply(u), op, k, chi, nu, tol=1e-13)
        worst = max(worst, check_energy_identity_2b(u - res.v, u - vt, op, k, chi, nu))
    results.append(
        PropertyResult(
            "energy-identity-2b",
            worst <= 1e-10,
            True,
            f"max identity residual {worst:.3e}",
        )
    )

    # cumulative discrete energy budget over a short assimilation run
    budget_ok, budget_detail = _energy_budget_suite(rng)
    results.append(PropertyResult("energy-budget", budget_ok, True, budget_detail))

    # the momentum solve actually meets its advertised tolerance
    worst = 0.0
    state = ForecastState(
        0.0,
        random_divfree_field(grid, rng, kmax=6),
        SchemeConfig(k=0.02, nu=0.05, scheme="none", solver_tol=1e-10),
    )
    f = random_divfree_field(grid, rng, kmax=3, normalize=0.5)
    for _ in range(10):
        prev = state.velocity
        rec = advance(state, f, None, None)
        worst = max(worst, verify_momentum_residual(prev, rec.v, f, 0.02, 0.05))
    results.append(
        PropertyResult(
            "momentum-residual",
            worst <= 1e-9,
            True,
            f"max true relative residual {worst:.3e} over 10 steps",
        )
    )

    # L4 interpolation ratio on localized fields -- reported, never fatal
    worst = 0.0
    for _ in range(count):
        w = bump_localized_field(grid64, rng)
        worst = max(worst, check_ladyzhenskaya(w).ratio)
    bound = LADYZHENSKAYA_CONST * 1.05
    results.append(
        PropertyResult(
            "l4-interpolation-ratio",
            worst <= bound,
            False,
            f"max ratio {worst:.6f} vs bound {bound:.6f} (5% quadrature slack)",
        )
    )

    # nested 1D FEM observation is a projection after Schur reduction
    ops = condlab.assemble(64, 8, "nested-linear", k_chi=10.0)
    defect = condlab.idempotency_defect(ops, rng)
    results.append(
        PropertyResult(
            "fem-nested-projection",
            defect <= 1e-10,
            True,
            f"composed-projection defect {defect:.3e}",
        )
    )

    return PropsReport(tuple(results), seed=seed, count=count)


def _energy_budget_suite(rng) -> tuple[bool, str]:
    grid = get_grid(32)
    u0 = random_divfree_field(grid, rng, kmax=4)
    base = random_divfree_field(grid, rng, kmax=2, normalize=0.3)
    forcing_fn = lambda t: base * min(1.0, t)
    k, nu, chi = 0.02, 0.05, 10.0
    op = make_spectral_projection(grid, 4)
    truth = TruthIntegrator(u0, forcing_fn, k, nu)
    state = ForecastState(
        0.0, u0 + 0.1 * random_divfree_field(grid, rng), SchemeConfig(k=k, nu=nu, chi=chi)
    )
    ledger = StabilityLedger.start(state.velocity)
    steps = 25
    for _ in range(steps):
        u = truth.step()
        f = forcing_fn(u.time)
        prev = state.velocity
        res = step1_forecast(state, f)
        obs = op.apply(u)
        ana = step2a_explicit(res.v, obs, op, k, chi)
        state.time, state.velocity = ana.v.time, ana.v
        ledger.record_forecast(prev, res.v, f, k, nu)
        ledger.record_analysis(res.v, ana.v, obs, op, k, chi)
        if not ledger.satisfied():
            return False, f"budget violated at step {ledger.steps}, margin {ledger.margin():.3e}"
    return True, f"margin {ledger.margin():.3e} after {steps} steps"
