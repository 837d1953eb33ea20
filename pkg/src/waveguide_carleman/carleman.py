"""Weighted-inequality checkers.

Everything here evaluates both sides of one of the weighted estimates on
a concrete grid and reports the measured ratio:

* the anchored prefix-integral inequality with the bounded-regime weight
  (constant expected to stay bounded across the s sweep);
* its open-regime counterpart (ratio expected to decay like 1/s^2);
* the conjugated heat operator exp(-s*phi) H exp(s*phi) and its split
  into the stationary part M1 and the transport part M2, including the
  decomposition gap M - M1 - M2, which is a genuine first-order field and
  is reported rather than hidden;
* the two full Carleman estimates (bounded and open regime), each
  returning per-s empirical constants and an operational threshold s0.

All weighted integrands vanish at the two endpoint time levels by the
convention documented in :mod:`waveguide_carleman.weights`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (
    FULL,
    ScalarField,
    SpaceTimeGrid,
    gradient,
    integrate_values,
    laplacian,
    normal_derivative,
    prefix_integral_x1,
    time_derivative,
)
from .weights import WeightSystem

#: Guard threshold for exp(s*phi); beyond this the literal conjugation
#: overflows double precision.
OVERFLOW_GUARD = 700.0


class WeightOverflowError(RuntimeError):
    """s * weight exceeded the overflow guard at some node."""


@dataclass
class InequalityReport:
    """Measured sides of one inequality plus its sweep table.

    ``empirical_C`` is lhs / sum(rhs_terms) at the headline parameter
    values; ``sweep`` holds one row per swept s with the same quantities.
    ``verdict`` carries named booleans/thresholds decided by the checker.
    """

    name: str
    lam: float
    s: float
    lhs: float
    rhs_terms: dict[str, float]
    empirical_C: float
    sweep: list[dict] = field(default_factory=list)
    verdict: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"report: {self.name}",
            f"lambda: {self.lam!r}",
            f"s: {self.s!r}",
            f"lhs: {self.lhs!r}",
        ]
        for key in sorted(self.rhs_terms):
            lines.append(f"rhs.{key}: {self.rhs_terms[key]!r}")
        lines.append(f"empirical_C: {self.empirical_C!r}")
        for key in sorted(self.verdict):
            lines.append(f"verdict.{key}: {self.verdict[key]!r}")
        for note in self.notes:
            lines.append(f"note: {note}")
        if self.sweep:
            cols = list(self.sweep[0].keys())
            lines.append("sweep:")
            lines.append(",".join(cols))
            for row in self.sweep:
                lines.append(",".join(repr(row[c]) for c in cols))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        from pathlib import Path

        Path(path).write_text(self.to_text())


def _ratio(lhs: float, rhs: float) -> float:
    if rhs == 0.0:
        if lhs > 1e-14 * max(1.0, abs(lhs)):
            raise ValueError(
                f"weighted quadrature returned rhs=0 with lhs={lhs}; the weight "
                "cannot vanish on one side only"
            )
        return 0.0
    return lhs / rhs


def _weighted_Q_integral(grid: SpaceTimeGrid, core: np.ndarray, decay: np.ndarray,
                         sg: np.ndarray, power: int) -> float:
    """Integral over Q of decay * (s*g)^power * core, assembled on the
    interior time levels only (the endpoint levels carry weight zero)."""
    vals = np.zeros(grid.shape)
    factor = sg[1:-1] ** power if power != 0 else np.ones(grid.nt - 1)
    vals[1:-1] = decay[1:-1] * factor[:, None, None] * core[1:-1]
    return integrate_values(grid, vals, "Q")


def weighted_norm_I1(z: ScalarField, ws: WeightSystem, s: float | None = None) -> dict[str, float]:
    """The four weighted summands controlled by the bounded-regime
    estimate: (sg)^-1 (Lap z)^2, (sg)^-1 (z_t)^2, sg |grad z|^2 and
    (sg)^3 z^2, each integrated against exp(-2 s eta)."""
    if ws.params.regime != "bounded":
        raise ValueError("the weighted norm uses the bounded-regime weight")
    grid = z.grid
    s_val = ws.params.s if s is None else s
    decay = ws.decay(s_val)
    sg = s_val * ws.g

    lap = laplacian(z).values
    zt = time_derivative(z).values
    g1, g2 = gradient(z)
    grad_sq = g1.values**2 + g2.values**2

    terms = {
        "laplacian": _weighted_Q_integral(grid, lap**2, decay, sg, -1),
        "time": _weighted_Q_integral(grid, zt**2, decay, sg, -1),
        "gradient": _weighted_Q_integral(grid, grad_sq, decay, sg, 1),
        "zero_order": _weighted_Q_integral(grid, z.values**2, decay, sg, 3),
    }
    terms["total"] = sum(terms.values())
    return terms


# ---------------------------------------------------------------------------
# Anchored prefix-integral inequalities
# ---------------------------------------------------------------------------


def lemma_bounded_check(F: ScalarField, ws: WeightSystem, grid: SpaceTimeGrid,
                        s_values=None) -> InequalityReport:
    """Compare the weighted mass of the anchored prefix integral of F with
    the weighted mass of F itself, sweeping s.  The constant is expected
    to stay bounded across the sweep (s-uniform)."""
    if ws.params.regime != "bounded":
        raise ValueError("bounded-regime weight required")
    s_list = list(s_values) if s_values is not None else [1.0, 2.0, 4.0, 8.0, 16.0]

    G = prefix_integral_x1(F).values ** 2
    F2 = F.values**2

    sweep = []
    for s in s_list:
        decay = ws.decay(s)
        lhs = integrate_values(grid, G * decay, "Q")
        rhs = integrate_values(grid, F2 * decay, "Q")
        sweep.append(
            {"s": s, "lambda": ws.params.lam, "lhs": lhs, "rhs": rhs,
             "empirical_C": _ratio(lhs, rhs)}
        )

    ratios = [row["empirical_C"] for row in sweep]
    base = ratios[0]
    s_uniform = all(r <= 2.0 * base + 1e-15 for r in ratios)
    head = next((row for row in sweep if row["s"] == ws.params.s), sweep[0])
    return InequalityReport(
        name="prefix_integral_bounded",
        lam=ws.params.lam,
        s=head["s"],
        lhs=head["lhs"],
        rhs_terms={"quadrature": head["rhs"]},
        empirical_C=head["empirical_C"],
        sweep=sweep,
        verdict={"s_uniform": s_uniform, "max_over_sweep": max(ratios)},
    )


def lemma_open_check(F: ScalarField, ws: WeightSystem, grid: SpaceTimeGrid,
                     s_values=None) -> InequalityReport:
    """Open-regime counterpart: the ratio is expected to decay like 1/s^2,
    measured as the slope of log(ratio) against log(s)."""
    if ws.params.regime != "open":
        raise ValueError("open-regime weight required")
    s_list = list(s_values) if s_values is not None else [4.0, 8.0, 16.0, 32.0, 64.0]

    G = prefix_integral_x1(F).values ** 2
    F2 = F.values**2

    sweep = []
    for s in s_list:
        decay = ws.decay(s)
        lhs = integrate_values(grid, G * decay, "Q")
        rhs = integrate_values(grid, F2 * decay, "Q")
        ratio = _ratio(lhs, rhs)
        sweep.append(
            {"s": s, "lambda": ws.params.lam, "lhs": lhs, "rhs": rhs,
             "ratio": ratio, "ratio_times_s2": ratio * s * s}
        )

    positive = [(row["s"], row["ratio"]) for row in sweep if row["ratio"] > 0.0]
    if len(positive) >= 2:
        ss, rr = zip(*positive)
        slope = float(np.polyfit(np.log(ss), np.log(rr), 1)[0])
    else:
        slope = float("nan")
    kappa = float(np.min(ws.dpsi_dx1))
    head = sweep[0]
    return InequalityReport(
        name="prefix_integral_open",
        lam=ws.params.lam,
        s=head["s"],
        lhs=head["lhs"],
        rhs_terms={"quadrature": head["rhs"]},
        empirical_C=head["ratio"],
        sweep=sweep,
        verdict={
            "fitted_slope": slope,
            "slope_in_band": bool(-2.5 <= slope <= -1.5),
            "kappa": kappa,
        },
    )


def r_monotonicity_audit(ws: WeightSystem, grid: SpaceTimeGrid,
                         time_index: int | None = None) -> float:
    """Maximum of the comparison kernel r(x1, xi) = exp(-2s (eta(x1) -
    eta(xi))) over the two triangular regions where xi lies between the
    anchor and x1.  The constructed weights keep this at most 1; the value
    is scale-invariant in t, and one interior time level is scanned."""
    k = time_index if time_index is not None else (grid.nt // 2)
    if not (1 <= k <= grid.nt - 1):
        raise ValueError("time_index must be an interior level")
    s = ws.params.s
    ia = grid.alpha_index
    eta = ws.weight.values[k]  # (n1+2, n2+2)

    worst = -np.inf
    n1 = eta.shape[0]
    idx = np.arange(n1)
    for j in range(eta.shape[1]):
        col = eta[:, j]
        diff = col[:, None] - col[None, :]  # eta(x1) - eta(xi)
        right = (idx[:, None] >= ia) & (idx[None, :] >= ia) & (idx[None, :] <= idx[:, None])
        left = (idx[:, None] <= ia) & (idx[None, :] <= ia) & (idx[None, :] >= idx[:, None])
        mask = right | left
        r = np.exp(-2.0 * s * diff[mask])
        worst = max(worst, float(r.max()))
    return worst


# ---------------------------------------------------------------------------
# Conjugated operator
# ---------------------------------------------------------------------------


@dataclass
class ConjugatedDecomposition:
    """M w computed literally and by product-rule expansion, the split
    parts M1/M2, and the decomposition gap M_literal - (M1 + M2)."""

    M_literal: ScalarField
    M_expanded: ScalarField
    M1: ScalarField
    M2: ScalarField
    residual: ScalarField


def conjugated_operator(w: ScalarField, ws: WeightSystem,
                        s: float | None = None) -> ConjugatedDecomposition:
    """Evaluate M w = exp(-s phi) (d/dt - Lap)(exp(s phi) w) two ways and
    split it into the stationary and transport parts.

    The literal route exponentiates s*phi on the grid, so it is guarded
    against double-precision overflow.  Endpoint time levels use the
    stored placeholder weight (zero); their rows are convention-dominated
    and comparisons should restrict to interior times.
    """
    if ws.params.regime != "open":
        raise ValueError("the conjugated operator uses the open-regime weight")
    grid = w.grid
    s_val = ws.params.s if s is None else s
    phi = ws.weight.values

    peak = s_val * float(np.max(phi))
    if peak > OVERFLOW_GUARD:
        idx = np.unravel_index(int(np.argmax(phi)), phi.shape)
        raise WeightOverflowError(
            f"s*phi = {peak:.1f} exceeds {OVERFLOW_GUARD} at (time,x1,x2) index {idx}"
        )

    E = np.exp(s_val * phi)
    Einv = np.exp(-s_val * phi)
    Ew = ScalarField(grid, E * w.values, FULL)
    M_lit = (time_derivative(Ew).values - laplacian(Ew).values) * Einv

    phi_t = ws.weight_time_derivative()
    phi_x1, phi_x2 = ws.weight_gradient()
    phi_lap = ws.weight_laplacian()
    grad_phi_sq = phi_x1**2 + phi_x2**2

    wt = time_derivative(w).values
    wlap = laplacian(w).values
    w1, w2 = gradient(w)
    grad_dot = phi_x1 * w1.values + phi_x2 * w2.values

    M_exp = (
        wt
        + s_val * phi_t * w.values
        - wlap
        - 2.0 * s_val * grad_dot
        - (s_val**2 * grad_phi_sq + s_val * phi_lap) * w.values
    )

    M1 = -wlap - s_val**2 * grad_phi_sq * w.values - s_val * phi_t * w.values
    M2 = wt + 2.0 * s_val * grad_dot + s_val * phi_lap * w.values

    residual = M_lit - (M1 + M2)

    return ConjugatedDecomposition(
        M_literal=ScalarField(grid, M_lit, FULL),
        M_expanded=ScalarField(grid, M_exp, FULL),
        M1=ScalarField(grid, M1, FULL),
        M2=ScalarField(grid, M2, FULL),
        residual=ScalarField(grid, residual, FULL),
    )


# ---------------------------------------------------------------------------
# Full Carleman estimates
# ---------------------------------------------------------------------------


def _boundary_trace_tolerance(grid: SpaceTimeGrid) -> float:
    return 10.0 * max(grid.dx1, grid.dx2) ** 2


def _max_on_boundary(values: np.ndarray) -> float:
    return float(
        max(
            np.max(np.abs(values[:, 0, :])),
            np.max(np.abs(values[:, -1, :])),
            np.max(np.abs(values[:, :, 0])),
            np.max(np.abs(values[:, :, -1])),
        )
    )


def _find_s0(sweep: list[dict], key: str) -> float | None:
    """Smallest swept s beyond which the constant is non-increasing within
    10% at every subsequent step; None when no such point exists."""
    cs = [row[key] for row in sweep]
    ss = [row["s"] for row in sweep]
    for k0 in range(len(cs)):
        tail = cs[k0:]
        if all(tail[i + 1] <= 1.1 * tail[i] for i in range(len(tail) - 1)):
            return ss[k0]
    return None


def carleman_check_bounded(z: ScalarField, Pz: ScalarField, ws: WeightSystem,
                           grid: SpaceTimeGrid, s_values=None, lam_values=None,
                           boundary_tol: float | None = None) -> InequalityReport:
    """Empirical constant of the bounded-regime estimate for a field z
    vanishing on the whole space boundary.

    ``Pz`` is supplied by the caller (closed form for manufactured test
    fields, the differentiated-equation right-hand side for pipeline
    fields).  The right-hand side combines the weighted mass of Pz with
    the observation-wall flux term.  The sweep covers every (s, lambda)
    combination; the stabilization threshold s0 is found per lambda.
    """
    if ws.params.regime != "bounded":
        raise ValueError("bounded-regime weight required")
    tol = boundary_tol if boundary_tol is not None else _boundary_trace_tolerance(grid)
    trace_max = _max_on_boundary(z.values)
    if trace_max > tol:
        raise ValueError(
            f"z does not vanish on the space boundary: max trace {trace_max} > tol {tol}"
        )

    s_list = list(s_values) if s_values is not None else [2.0, 4.0, 8.0, 16.0, 32.0]
    lam_list = list(lam_values) if lam_values is not None else [ws.params.lam]
    obs = grid.domain.obs_segment
    dnu_z = normal_derivative(z, obs).values
    wall_j = -1 if obs == "x2_max" else 0

    sweep = []
    for lam in lam_list:
        if lam == ws.params.lam:
            ws_lam = ws
        else:
            from dataclasses import replace

            ws_lam = WeightSystem(replace(ws.params, lam=lam), grid,
                                  psi1_profile=ws.psi1_profile,
                                  psi2_profile=ws.psi2_profile)
        for s in s_list:
            terms = weighted_norm_I1(z, ws_lam, s=s)
            lhs = terms["total"]

            decay = ws_lam.decay(s)
            rhs_q = integrate_values(grid, decay * Pz.values**2, "Q")

            wall_decay = decay[:, :, wall_j]
            sg = s * ws_lam.g
            flux = np.zeros_like(dnu_z)
            flux[1:-1] = wall_decay[1:-1] * sg[1:-1, None] * dnu_z[1:-1] ** 2
            rhs_b = integrate_values(grid, flux, "boundary", segment=obs)

            sweep.append(
                {"s": s, "lambda": lam, "lhs": lhs, "rhs_source": rhs_q,
                 "rhs_boundary": rhs_b, "empirical_C": _ratio(lhs, rhs_q + rhs_b)}
            )

    s0_per_lam = {
        lam: _find_s0([row for row in sweep if row["lambda"] == lam], "empirical_C")
        for lam in lam_list
    }
    cs = [row["empirical_C"] for row in sweep]
    head_lam = ws.params.lam if ws.params.lam in lam_list else lam_list[0]
    head_rows = [row for row in sweep if row["lambda"] == head_lam]
    head = next((row for row in head_rows if row["s"] == ws.params.s), head_rows[0])
    return InequalityReport(
        name="carleman_bounded",
        lam=head_lam,
        s=head["s"],
        lhs=head["lhs"],
        rhs_terms={"source": head["rhs_source"], "boundary": head["rhs_boundary"]},
        empirical_C=head["empirical_C"],
        sweep=sweep,
        verdict={
            "s0": s0_per_lam[head_lam],
            "s0_per_lambda": s0_per_lam,
            "all_finite": bool(np.all(np.isfinite(cs))),
            "boundary_trace_max": trace_max,
        },
    )


def carleman_check_open(u: ScalarField, Hu: ScalarField, ws: WeightSystem,
                        grid: SpaceTimeGrid, s_values=None,
                        boundary_tol: float | None = None) -> InequalityReport:
    """Empirical constant of the open-regime estimate on the truncated
    domain, for u vanishing on the whole truncated boundary.

    The left side combines the weighted zero-order and gradient masses
    with the squared norms of the split conjugated parts; the right side
    is the observation-wall flux term weighted by the outward normal
    slope of psi, plus the weighted mass of Hu.
    """
    if ws.params.regime != "open":
        raise ValueError("open-regime weight required")
    tol = boundary_tol if boundary_tol is not None else _boundary_trace_tolerance(grid)
    trace_max = _max_on_boundary(u.values)
    if trace_max > tol:
        raise ValueError(
            f"u does not vanish on the truncated boundary: max trace {trace_max} > tol {tol}"
        )

    lam = ws.params.lam
    obs = grid.domain.obs_segment
    wall_j = -1 if obs == "x2_max" else 0
    dnu_psi = ws.obs_normal_psi()
    if np.min(dnu_psi) < 0.0:
        raise ValueError(
            "outward normal slope of psi is negative on the observation wall; "
            "the weight construction guarantees the opposite sign"
        )
    dnu_u = normal_derivative(u, obs).values
    g1, g2 = gradient(u)
    grad_sq = g1.values**2 + g2.values**2
    phi = ws.weight.values

    s_list = list(s_values) if s_values is not None else [4.0, 8.0, 16.0, 32.0]
    sweep = []
    for s in s_list:
        decay = ws.decay(s)
        half = ws.half_decay(s)

        zero_term = np.zeros(grid.shape)
        zero_term[1:-1] = decay[1:-1] * phi[1:-1] ** 3 * u.values[1:-1] ** 2
        lhs_zero = s**3 * lam**4 * integrate_values(grid, zero_term, "Q")

        grad_term = np.zeros(grid.shape)
        grad_term[1:-1] = decay[1:-1] * phi[1:-1] * grad_sq[1:-1]
        lhs_grad = s * lam * integrate_values(grid, grad_term, "Q")

        wbar = ScalarField(grid, half * u.values, FULL)
        parts = _split_parts(wbar, ws, s)
        lhs_m1 = integrate_values(grid, parts[0] ** 2, "Q")
        lhs_m2 = integrate_values(grid, parts[1] ** 2, "Q")
        lhs = lhs_zero + lhs_grad + lhs_m1 + lhs_m2

        flux = np.zeros_like(dnu_u)
        flux[1:-1] = (
            decay[1:-1, :, wall_j]
            * phi[1:-1, :, wall_j]
            * dnu_u[1:-1] ** 2
            * dnu_psi[None, :]
        )
        rhs_b = s * lam * integrate_values(grid, flux, "boundary", segment=obs)

        source = np.zeros(grid.shape)
        source[1:-1] = decay[1:-1] * Hu.values[1:-1] ** 2
        rhs_q = integrate_values(grid, source, "Q")

        sweep.append(
            {
                "s": s, "lambda": lam, "lhs_zero_order": lhs_zero,
                "lhs_gradient": lhs_grad, "lhs_M1": lhs_m1, "lhs_M2": lhs_m2,
                "lhs": lhs, "rhs_boundary": rhs_b, "rhs_source": rhs_q,
                "empirical_C": _ratio(lhs, rhs_b + rhs_q),
            }
        )

    s0 = _find_s0(sweep, "empirical_C")
    cs = [row["empirical_C"] for row in sweep]
    head = next((row for row in sweep if row["s"] == ws.params.s), sweep[0])
    return InequalityReport(
        name="carleman_open",
        lam=lam,
        s=head["s"],
        lhs=head["lhs"],
        rhs_terms={"source": head["rhs_source"], "boundary": head["rhs_boundary"]},
        empirical_C=head["empirical_C"],
        sweep=sweep,
        verdict={
            "s0": s0,
            "all_finite": bool(np.all(np.isfinite(cs))),
            "boundary_trace_max": trace_max,
        },
    )


def _split_parts(wbar: ScalarField, ws: WeightSystem, s: float) -> tuple[np.ndarray, np.ndarray]:
    """M1 and M2 applied to an already-conjugated field, with the weighted
    coefficients taken from the closed forms."""
    phi_t = ws.weight_time_derivative()
    phi_x1, phi_x2 = ws.weight_gradient()
    phi_lap = ws.weight_laplacian()
    grad_phi_sq = phi_x1**2 + phi_x2**2

    w1, w2 = gradient(wbar)
    m1 = (
        -laplacian(wbar).values
        - s**2 * grad_phi_sq * wbar.values
        - s * phi_t * wbar.values
    )
    m2 = (
        time_derivative(wbar).values
        + 2.0 * s * (phi_x1 * w1.values + phi_x2 * w2.values)
        + s * phi_lap * wbar.values
    )
    return m1, m2
