"""Both sides of the stability estimate, assembled from pipeline output.

The left side is the squared L2 mass of the potential mismatch q - q~
over a time window (eps, T - eps) x cross-section; the right side
combines the squared mismatch of the observed wall measurement
d/dnu d/dx1 (u~ - u) with the squared mixed Sobolev norm (H1 in time,
H2 in the cross-section) of the solution mismatch traced on the anchor
column x1 = alpha.  The reported empirical constant is their ratio.

Time windows are node-aligned, so shrinking eps never drops below a
larger window's value on a nonnegative integrand: window monotonicity
holds exactly, not just up to quadrature error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forward import ManufacturedPair, manufacture_pair, measurement
from .grid import (
    SECTION_TRACE,
    ScalarField,
    SpaceTimeGrid,
    integrate_values,
)


@dataclass
class StabilityReport:
    eps: float
    theta: float
    lhs: float
    rhs_boundary: float
    rhs_trace: float
    empirical_C_eps: float
    r_bound: float
    truncation_budget: float | None = None
    notes: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            "report: stability",
            f"eps: {self.eps!r}",
            f"theta: {self.theta!r}",
            f"lhs: {self.lhs!r}",
            f"rhs.boundary: {self.rhs_boundary!r}",
            f"rhs.trace: {self.rhs_trace!r}",
            f"empirical_C_eps: {self.empirical_C_eps!r}",
            f"r_bound: {self.r_bound!r}",
        ]
        if self.truncation_budget is not None:
            lines.append(f"truncation_budget: {self.truncation_budget!r}")
        for note in self.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines) + "\n"


def _second_derivative_1d(v: np.ndarray, d: float, axis: int) -> np.ndarray:
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[:-2] - 2.0 * v[1:-1] + v[2:]) / d**2
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / d**2
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / d**2
    return np.moveaxis(out, 0, axis)


def mixed_sobolev_norm(trace: ScalarField) -> float:
    """Squared H1-in-time / H2-in-cross-section norm of a (t, x2) trace:
    the time integral of ||v||^2 + ||v_x2||^2 + ||v_x2x2||^2 for the trace
    and its time derivative."""
    if trace.kind != SECTION_TRACE:
        raise ValueError("mixed Sobolev norm expects a cross-section trace")
    g = trace.grid
    v = trace.values
    vt = np.gradient(v, g.dt, axis=0, edge_order=2)

    def h2_density(a: np.ndarray) -> np.ndarray:
        a2 = np.gradient(a, g.dx2, axis=1, edge_order=2)
        a22 = _second_derivative_1d(a, g.dx2, 1)
        return a**2 + a2**2 + a22**2

    density = h2_density(v) + h2_density(vt)
    return integrate_values(g, density, "section_time")


def _window_indices(grid: SpaceTimeGrid, eps: float) -> tuple[int, int]:
    T = grid.domain.T
    if not (0.0 < eps < T / 2.0):
        raise ValueError(f"eps={eps} must lie in (0, T/2)")
    ia = int(round(eps / grid.dt))
    ib = grid.nt - ia
    if ib - ia < 1:
        raise ValueError(f"eps={eps} leaves no interior time window on this grid")
    return ia, ib


def _windowed_section_integral(grid: SpaceTimeGrid, values: np.ndarray,
                               ia: int, ib: int) -> float:
    """Trapezoid integral of (t, x2) values over the node-aligned window."""
    wt = np.full(ib - ia + 1, grid.dt)
    wt[0] = wt[-1] = 0.5 * grid.dt
    w2 = grid.trapezoid_weights("x2")
    return float(np.einsum("tj,t,j->", values[ia : ib + 1], wt, w2))


def assemble_stability(u: ScalarField, u_tilde: ScalarField, q: np.ndarray,
                       q_tilde: np.ndarray, grid: SpaceTimeGrid, eps: float,
                       theta: float = float("nan")) -> StabilityReport:
    """All three norms of the stability estimate for one solution pair."""
    ia, ib = _window_indices(grid, eps)
    dq = np.asarray(q_tilde, dtype=float) - np.asarray(q, dtype=float)
    lhs = _windowed_section_integral(grid, dq**2, ia, ib)

    meas_diff = measurement(u_tilde, grid).values - measurement(u, grid).values
    rhs_boundary = integrate_values(
        grid, meas_diff**2, "boundary", segment=grid.domain.obs_segment
    )

    iav = grid.alpha_index
    trace = ScalarField(
        grid, u_tilde.values[:, iav, :] - u.values[:, iav, :], SECTION_TRACE
    )
    rhs_trace = mixed_sobolev_norm(trace)

    rhs = rhs_boundary + rhs_trace
    empirical = 0.0 if rhs == 0.0 else lhs / rhs

    r_bound = float(
        max(
            np.sqrt(integrate_values(grid, np.asarray(q, dtype=float) ** 2, "section_time")),
            np.sqrt(integrate_values(grid, np.asarray(q_tilde, dtype=float) ** 2, "section_time")),
        )
    )

    budget = None
    if grid.domain.truncated:
        # Mass of both solutions in the outermost axial cell layers: a
        # proxy for what the truncation removed, kept out of C_eps.
        shell = u.values[:, [0, 1, -2, -1], :] ** 2 + u_tilde.values[:, [0, 1, -2, -1], :] ** 2
        wt = grid.trapezoid_weights("t")
        w2 = grid.trapezoid_weights("x2")
        budget = float(np.einsum("tij,t,j->", shell, wt, w2) * grid.dx1)

    return StabilityReport(
        eps=eps,
        theta=theta,
        lhs=lhs,
        rhs_boundary=rhs_boundary,
        rhs_trace=rhs_trace,
        empirical_C_eps=empirical,
        r_bound=r_bound,
        truncation_budget=budget,
    )


def perturbation_sweep(grid: SpaceTimeGrid, q: np.ndarray, dq: np.ndarray,
                       f: np.ndarray, theta_list, eps_list) -> list[StabilityReport]:
    """Stability reports over a grid of perturbation sizes and window
    margins.  The base solve is shared across the sweep; each theta adds
    one extra solve."""
    thetas = [float(t) for t in theta_list]
    epss = [float(e) for e in eps_list]
    if any(t <= 0 for t in thetas):
        raise ValueError("theta values must be positive")
    for e in epss:
        _window_indices(grid, e)  # validate early

    reports: list[StabilityReport] = []
    base: ManufacturedPair | None = None
    for theta in thetas:
        q_tilde = np.asarray(q, dtype=float) + theta * np.asarray(dq, dtype=float)
        if base is None:
            pair = manufacture_pair(grid, q, q_tilde, f)
            base = pair
        else:
            from .forward import PotentialSpec, solve_heat

            pot_tilde = PotentialSpec(grid, q_tilde, f)
            u_tilde = solve_heat(grid, pot_tilde, base.data)
            pair = ManufacturedPair(
                u=base.u, u_tilde=u_tilde, data=base.data, pot=base.pot,
                pot_tilde=pot_tilde, compat_residual=base.compat_residual,
                compat_residual_tilde=base.compat_residual_tilde,
            )
        for eps in epss:
            rep = assemble_stability(
                pair.u, pair.u_tilde, q, q_tilde, grid, eps, theta=theta
            )
            if not np.isfinite(rep.empirical_C_eps):
                rep.notes.append("non-finite empirical constant")
            reports.append(rep)
    return reports


def sweep_table(reports: list[StabilityReport]) -> str:
    """Comma-separated summary of a perturbation sweep."""
    lines = ["theta,eps,lhs,rhs_boundary,rhs_trace,empirical_C_eps"]
    for r in reports:
        lines.append(
            f"{r.theta!r},{r.eps!r},{r.lhs!r},{r.rhs_boundary!r},"
            f"{r.rhs_trace!r},{r.empirical_C_eps!r}"
        )
    return "\n".join(lines) + "\n"
