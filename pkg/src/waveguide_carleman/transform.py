"""Reduction chain from a pair of forward solutions to the axial
derivative field.

Given two solutions u (potential q f) and u~ (potential q~ f) sharing one
data set, the chain forms

    v = u - u~,   w = v / (f u~),   z = d/dx1 w,

together with the coefficient fields of the equation w satisfies,

    w_t - Lap(w) + A . grad(w) + a w = q~ - q,
    A = -2 grad(f u~) / (f u~),
    a = (d/dt(f u~) - Lap(f u~)) / (f u~) + q f,

and of the equation obtained by differentiating it axially,

    z_t - Lap(z) + A . grad(z) + a z + B1 z = B2 w_x2 + b w,
    B1 = -2 d/dx1( (f u~)_x1 / (f u~) ),
    B2 = +2 d/dx1( (f u~)_x2 / (f u~) ),
    b  = -d/dx1 a.

All coefficients are built from the discrete u~ with the grid stencils,
so the pipeline accepts arbitrary solver output; closed-form oracles are
test-side only.  z is obtained by differentiating w rather than by
solving its equation, which leaves that equation available as an
independent consistency check (`z_residual`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import PotentialSpec
from .grid import (
    FULL,
    ScalarField,
    SpaceTimeGrid,
    gradient,
    integrate_values,
    laplacian,
    prefix_integral_x1,
    time_derivative,
)


@dataclass
class TransformBundle:
    grid: SpaceTimeGrid
    v: ScalarField
    w: ScalarField
    z: ScalarField
    fu: ScalarField        # the positive denominator f * u~
    A1: ScalarField
    A2: ScalarField
    a_coef: ScalarField
    B1: ScalarField
    B2: ScalarField
    b_coef: ScalarField
    c1_floor: float        # min of f * u~ over the space-time grid


def build_bundle(u: ScalarField, u_tilde: ScalarField, pot: PotentialSpec) -> TransformBundle:
    """Assemble v, w, z and every coefficient field for one solution pair.

    ``pot`` must be the potential of the *q*-system (the one multiplying v
    in its equation).  Raises if the denominator f u~ is not strictly
    positive, naming the first offending node.
    """
    grid = u.grid
    if u_tilde.grid is not grid or pot.grid is not grid:
        raise ValueError("both fields and the potential must share one grid")

    m = pot.f[None, :, None] * u_tilde.values
    c1_floor = float(np.min(m))
    if c1_floor <= 0.0:
        idx = np.unravel_index(int(np.argmin(m)), m.shape)
        raise ValueError(
            f"f*u~ is not positive: min {c1_floor} at (time,x1,x2) index {idx}"
        )
    fu = ScalarField(grid, m, FULL)

    v = ScalarField(grid, u.values - u_tilde.values, FULL)
    w = ScalarField(grid, v.values / m, FULL)
    z = gradient(w)[0]

    dm1, dm2 = gradient(fu)
    A1 = ScalarField(grid, -2.0 * dm1.values / m, FULL)
    A2 = ScalarField(grid, -2.0 * dm2.values / m, FULL)

    V = pot.potential_values()
    a_vals = (time_derivative(fu).values - laplacian(fu).values) / m + V
    a_coef = ScalarField(grid, a_vals, FULL)

    ratio1 = ScalarField(grid, dm1.values / m, FULL)
    ratio2 = ScalarField(grid, dm2.values / m, FULL)
    B1 = ScalarField(grid, -2.0 * gradient(ratio1)[0].values, FULL)
    B2 = ScalarField(grid, 2.0 * gradient(ratio2)[0].values, FULL)
    b_coef = ScalarField(grid, -gradient(a_coef)[0].values, FULL)

    return TransformBundle(
        grid=grid, v=v, w=w, z=z, fu=fu,
        A1=A1, A2=A2, a_coef=a_coef, B1=B1, B2=B2, b_coef=b_coef,
        c1_floor=c1_floor,
    )


#: Default width of the boundary collar excluded from check norms, as a
#: fraction of each domain extent.
CORE_MARGIN = 0.1


def save_bundle(bundle: TransformBundle, directory) -> None:
    """Persist every member field of a bundle, one file pair per field."""
    from pathlib import Path

    from .grid import save_field

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("v", "w", "z", "fu", "A1", "A2", "a_coef", "B1", "B2", "b_coef"):
        save_field(getattr(bundle, name), directory / name)


def load_bundle(directory) -> TransformBundle:
    """Read back a persisted bundle; the denominator floor is recomputed."""
    from pathlib import Path

    from .grid import load_field

    directory = Path(directory)
    fields = {
        name: load_field(directory / name)
        for name in ("v", "w", "z", "fu", "A1", "A2", "a_coef", "B1", "B2", "b_coef")
    }
    grid = fields["v"].grid
    return TransformBundle(
        grid=grid, c1_floor=float(np.min(fields["fu"].values)), **fields
    )


def core_mask(grid: SpaceTimeGrid, margin: float = CORE_MARGIN) -> np.ndarray:
    """Boolean mask of the evaluation core for residual norms.

    Stencil errors are second order pointwise, but where one-sided edge
    stencils feed into a second differencing pass (coefficients of the
    differentiated equation near the caps) the local order drops by one.
    The check norms therefore integrate over a core that keeps a collar
    of fixed *physical* width (a fraction of each extent) away from the
    space-time boundary; being resolution-independent, the core is a
    fixed-domain norm and converges at the full interior order.
    """
    if not (0.0 <= margin < 0.5):
        raise ValueError("margin must lie in [0, 0.5)")
    d = grid.domain
    mask = np.zeros(grid.shape, dtype=bool)
    tm = (grid.t >= margin * d.T) & (grid.t <= (1.0 - margin) * d.T)
    m1 = np.abs(grid.x1) <= d.L * (1.0 - 2.0 * margin)
    m2 = (grid.x2 >= margin * d.h) & (grid.x2 <= (1.0 - margin) * d.h)
    mask[np.ix_(tm, m1, m2)] = True
    return mask


def _core_norms(grid: SpaceTimeGrid, diff: np.ndarray, mask: np.ndarray) -> tuple[float, float]:
    masked = np.where(mask, diff, 0.0)
    sup = float(np.max(np.abs(masked)))
    l2 = float(np.sqrt(integrate_values(grid, masked**2, "Q")))
    return sup, l2


def z_residual(bundle: TransformBundle,
               margin: float = CORE_MARGIN) -> tuple[ScalarField, float]:
    """Residual of the differentiated equation and its L2 norm.

    The residual field is evaluated with the grid stencils at every node;
    the reported norm integrates over the :func:`core_mask` region.
    """
    g = bundle.grid
    z, w = bundle.z, bundle.w
    dz1, dz2 = gradient(z)
    lhs = (
        time_derivative(z).values
        - laplacian(z).values
        + bundle.A1.values * dz1.values
        + bundle.A2.values * dz2.values
        + bundle.a_coef.values * z.values
        + bundle.B1.values * z.values
    )
    rhs = bundle.B2.values * gradient(w)[1].values + bundle.b_coef.values * w.values
    res = lhs - rhs
    _, norm = _core_norms(g, res, core_mask(g, margin))
    return ScalarField(g, res, FULL), norm


def ftc_representation_check(bundle: TransformBundle,
                             margin: float = CORE_MARGIN) -> dict[str, float]:
    """Rebuild w and its cross-section derivative from z by anchored
    prefix integration; report max and L2 reconstruction errors over the
    evaluation core."""
    g = bundle.grid
    ia = g.alpha_index
    mask = core_mask(g, margin)

    w_rec = prefix_integral_x1(bundle.z).values + bundle.w.values[:, ia : ia + 1, :]
    err_w, err_w_l2 = _core_norms(g, w_rec - bundle.w.values, mask)

    dw2 = gradient(bundle.w)[1]
    dz2 = gradient(bundle.z)[1]
    rec2 = prefix_integral_x1(dz2).values + dw2.values[:, ia : ia + 1, :]
    err_dw2, err_dw2_l2 = _core_norms(g, rec2 - dw2.values, mask)

    return {
        "w_error": err_w,
        "w_error_l2": err_w_l2,
        "dx2w_error": err_dw2,
        "dx2w_error_l2": err_dw2_l2,
    }


def rhs_identity_check(bundle: TransformBundle, pot: PotentialSpec,
                       pot_tilde: PotentialSpec,
                       margin: float = CORE_MARGIN) -> dict[str, float]:
    """Apply the w-operator and compare with the potential mismatch.

    P w := w_t - Lap(w) + A . grad(w) + a w should be independent of x1
    and equal q~ - q.  Returns the axial variation of P w and its
    deviation from the known mismatch (max and L2 over the core).
    """
    g = bundle.grid
    w = bundle.w
    dw1, dw2 = gradient(w)
    Pw = (
        time_derivative(w).values
        - laplacian(w).values
        + bundle.A1.values * dw1.values
        + bundle.A2.values * dw2.values
        + bundle.a_coef.values * w.values
    )
    target = (pot_tilde.q - pot.q)[:, None, :]
    mask = core_mask(g, margin)

    mismatch, mismatch_l2 = _core_norms(g, Pw - target, mask)

    counts = np.maximum(mask.sum(axis=1, keepdims=True), 1)
    mean_over_x1 = np.where(mask, Pw, 0.0).sum(axis=1, keepdims=True) / counts
    x1_var, x1_var_l2 = _core_norms(g, Pw - mean_over_x1, mask)

    return {
        "x1_variation": x1_var,
        "x1_variation_l2": x1_var_l2,
        "mismatch_vs_target": mismatch,
        "mismatch_vs_target_l2": mismatch_l2,
    }
