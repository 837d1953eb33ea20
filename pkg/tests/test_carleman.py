import numpy as np
import pytest

from waveguide_carleman import WaveguideDomain, WeightParams, assemble_weight, build_grid
from waveguide_carleman.carleman import (
    WeightOverflowError,
    carleman_check_bounded,
    carleman_check_open,
    conjugated_operator,
    lemma_bounded_check,
    lemma_open_check,
    r_monotonicity_audit,
    weighted_norm_I1,
)
from waveguide_carleman.grid import FULL, ScalarField, gradient, laplacian, time_derivative
from waveguide_carleman.synth import SpaceTimeBump, random_smooth_field
from waveguide_carleman.weights import SectionWeightProfile


@pytest.fixture
def ws(grid):
    return assemble_weight(WeightParams(lam=1.0, s=1.0), grid)


@pytest.fixture
def open_ws(open_grid):
    return assemble_weight(WeightParams(lam=0.5, s=1.0, regime="open"), open_grid)


class TestWeightedNorm:
    def test_zero_field_gives_zero_terms(self, grid, ws):
        z = ScalarField(grid, np.zeros(grid.shape), FULL)
        terms = weighted_norm_I1(z, ws)
        assert all(v == 0.0 for v in terms.values())

    def test_matches_hand_quadrature_on_debug_grid(self, domain):
        # explicit loops over every node reproduce the vectorized terms
        g = build_grid(domain, 4, 4, 4)
        ws = assemble_weight(WeightParams(lam=1.0, s=1.0), g)
        z = ScalarField(g, np.ones(g.shape), FULL)
        terms = weighted_norm_I1(z, ws)

        lap = laplacian(z).values
        zt = time_derivative(z).values
        g1, g2 = gradient(z)
        gsq = g1.values**2 + g2.values**2
        decay = ws.decay()
        sg = ws.params.s * ws.g

        wt = g.trapezoid_weights("t")
        w1 = g.trapezoid_weights("x1")
        w2 = g.trapezoid_weights("x2")
        hand = {"laplacian": 0.0, "time": 0.0, "gradient": 0.0, "zero_order": 0.0}
        for k in range(1, g.nt):
            for i in range(g.n1 + 2):
                for j in range(g.n2 + 2):
                    wq = wt[k] * w1[i] * w2[j] * decay[k, i, j]
                    hand["laplacian"] += wq * lap[k, i, j] ** 2 / sg[k]
                    hand["time"] += wq * zt[k, i, j] ** 2 / sg[k]
                    hand["gradient"] += wq * sg[k] * gsq[k, i, j]
                    hand["zero_order"] += wq * sg[k] ** 3
        for key, val in hand.items():
            assert terms[key] == pytest.approx(val, rel=1e-12), key

    def test_zero_order_term_scales_with_s_cubed_times_weight_ratio(self, grid, ws, rng):
        z = ScalarField(grid, rng.standard_normal(grid.shape), FULL)
        t1 = weighted_norm_I1(z, ws, s=1.0)["zero_order"]
        t2 = weighted_norm_I1(z, ws, s=2.0)["zero_order"]
        # direct recomputation of the weight ratio
        num = np.einsum(
            "tij,t,i,j->",
            ws.decay(2.0) * z.values**2 * (ws.g**3)[:, None, None],
            grid.trapezoid_weights("t"),
            grid.trapezoid_weights("x1"),
            grid.trapezoid_weights("x2"),
        )
        den = np.einsum(
            "tij,t,i,j->",
            ws.decay(1.0) * z.values**2 * (ws.g**3)[:, None, None],
            grid.trapezoid_weights("t"),
            grid.trapezoid_weights("x1"),
            grid.trapezoid_weights("x2"),
        )
        assert t2 / t1 == pytest.approx(8.0 * num / den, rel=1e-12)

    def test_regime_guard(self, grid, open_ws):
        z = ScalarField(grid, np.zeros(grid.shape), FULL)
        with pytest.raises(ValueError):
            weighted_norm_I1(z, open_ws)


class TestLemmaBounded:
    def test_zero_field(self, grid, ws):
        F = ScalarField(grid, np.zeros(grid.shape), FULL)
        rep = lemma_bounded_check(F, ws, grid)
        assert rep.empirical_C == 0.0

    def test_constant_field_crude_bound(self, grid, ws):
        # |prefix of 1|^2 <= (2L)^2, so the ratio cannot exceed 4
        F = ScalarField(grid, np.ones(grid.shape), FULL)
        rep = lemma_bounded_check(F, ws, grid, s_values=[1, 2, 4, 8, 16])
        assert all(row["empirical_C"] <= 4.0 for row in rep.sweep)

    def test_random_fields_are_s_uniform(self, grid, ws, rng):
        for _ in range(5):
            F = random_smooth_field(grid, rng)
            rep = lemma_bounded_check(F, ws, grid, s_values=[1, 2, 4, 8, 16])
            assert rep.verdict["s_uniform"]
            cs = [row["empirical_C"] for row in rep.sweep]
            assert max(cs) <= 2.0 * cs[0]

    def test_endpoint_supported_field_gives_zero_ratio(self, grid, ws):
        vals = np.zeros(grid.shape)
        vals[0] = 1.0  # weight vanishes at the endpoint levels
        F = ScalarField(grid, vals, FULL)
        rep = lemma_bounded_check(F, ws, grid)
        assert rep.empirical_C == 0.0

    def test_comparison_kernel_bounded_by_one(self, grid):
        for s in (1.0, 4.0, 16.0):
            ws = assemble_weight(WeightParams(lam=1.0, s=s), grid)
            assert r_monotonicity_audit(ws, grid) <= 1.0 + 1e-12


class TestLemmaOpen:
    def test_zero_field(self, open_grid, open_ws):
        F = ScalarField(open_grid, np.zeros(open_grid.shape), FULL)
        rep = lemma_open_check(F, open_ws, open_grid)
        assert rep.empirical_C == 0.0

    def test_slope_band_on_reference_configuration(self):
        d = WaveguideDomain(L=1.0, h=1.0, T=2.0, truncated=True)
        g = build_grid(d, 127, 7, 16)
        ws = assemble_weight(WeightParams(lam=1.1, s=4.0, regime="open"), g)
        for seed in (0, 1):
            F = random_smooth_field(g, np.random.default_rng(seed), anchored_right=True)
            rep = lemma_open_check(F, ws, g, s_values=[4, 8, 16, 32, 64])
            assert -2.5 <= rep.verdict["fitted_slope"] <= -1.5
            ref = rep.sweep[0]["ratio_times_s2"]
            assert all(row["ratio_times_s2"] <= 4.0 * ref for row in rep.sweep)

    def test_regime_guard(self, open_grid, ws):
        F = ScalarField(open_grid, np.zeros(open_grid.shape), FULL)
        with pytest.raises(ValueError):
            lemma_open_check(F, ws, open_grid)


class TestConjugatedOperator:
    def test_zero_field(self, open_grid, open_ws):
        w = ScalarField(open_grid, np.zeros(open_grid.shape), FULL)
        dec = conjugated_operator(w, open_ws)
        for f in (dec.M_literal, dec.M_expanded, dec.M1, dec.M2, dec.residual):
            assert np.max(np.abs(f.values)) == 0.0

    def test_s_zero_degenerates_exactly(self, open_grid, open_ws):
        bump = SpaceTimeBump(open_grid, amplitude=0.2)
        w = bump.field()
        dec = conjugated_operator(w, open_ws, s=0.0)
        assert np.max(np.abs(dec.residual.values)) == 0.0
        np.testing.assert_array_equal(dec.M1.values, -laplacian(w).values)
        np.testing.assert_array_equal(dec.M2.values, time_derivative(w).values)
        np.testing.assert_array_equal(dec.M_literal.values, dec.M_expanded.values)

    def test_overflow_guard_names_node(self, open_grid, open_ws):
        w = SpaceTimeBump(open_grid, amplitude=0.2).field()
        with pytest.raises(WeightOverflowError, match="index"):
            conjugated_operator(w, open_ws, s=1e6)

    def test_gap_matches_product_rule_oracle(self, open_domain):
        # the decomposition gap equals 2s*(phi_t w - 2 grad(phi).grad(w)
        # - lap(phi) w); all factors in closed form
        from waveguide_carleman.transform import core_mask

        for n, nt in ((16, 32), (32, 64)):
            g = build_grid(open_domain, n, n, nt)
            ws = assemble_weight(WeightParams(lam=0.25, s=0.5, regime="open"), g)
            bump = SpaceTimeBump(g, amplitude=0.1)
            w = bump.field()
            dec = conjugated_operator(w, ws, s=0.5)
            phi_t = ws.weight_time_derivative()
            p1, p2 = ws.weight_gradient()
            plap = ws.weight_laplacian()
            oracle = 2.0 * 0.5 * (
                phi_t * w.values
                - 2.0 * (p1 * bump.dx1_field() + p2 * bump.dx2_field())
                - plap * w.values
            )
            mask = core_mask(g)
            diff = np.max(np.abs(np.where(mask, dec.residual.values - oracle, 0.0)))
            assert diff <= 10.0 * (g.dx1**2 + g.dt**2)
            # the gap itself is a genuine nonzero field
            assert np.max(np.abs(np.where(mask, oracle, 0.0))) > 1e-3


class TestCarlemanBounded:
    def test_zero_field(self, grid, ws):
        z = ScalarField(grid, np.zeros(grid.shape), FULL)
        rep = carleman_check_bounded(z, z, ws, grid)
        assert rep.empirical_C == 0.0
        assert rep.verdict["all_finite"]

    def test_bump_suite_constant_behaviour(self, domain):
        g = build_grid(domain, 24, 24, 32)
        ws = assemble_weight(WeightParams(lam=1.0, s=4.0), g)
        bump = SpaceTimeBump(g, amplitude=1.0)
        rep = carleman_check_bounded(bump.field(), bump.heat_residual(), ws, g,
                                     s_values=[2, 4, 8, 16, 32])
        cs = [row["empirical_C"] for row in rep.sweep]
        assert all(np.isfinite(cs))
        assert rep.verdict["s0"] is not None
        s_list = [row["s"] for row in rep.sweep]
        k0 = s_list.index(rep.verdict["s0"])
        tail = cs[k0:]
        assert all(tail[i + 1] <= 1.1 * tail[i] for i in range(len(tail) - 1))

    def test_rejects_nonvanishing_trace(self, grid, ws):
        z = grid.sample(lambda t, x1, x2: 1.0 + 0 * t * x1 * x2)
        with pytest.raises(ValueError, match="vanish"):
            carleman_check_bounded(z, z, ws, grid)


class TestCarlemanOpen:
    def test_bump_finite_over_sweep(self, open_domain):
        g = build_grid(open_domain, 24, 24, 32)
        ws = assemble_weight(WeightParams(lam=1.0, s=4.0, regime="open"), g)
        bump = SpaceTimeBump(g, amplitude=1.0)
        rep = carleman_check_open(bump.field(), bump.heat_residual(), ws, g,
                                  s_values=[4, 8, 16, 32])
        assert rep.verdict["all_finite"]
        assert all(row["rhs_boundary"] > 0.0 for row in rep.sweep)

    def test_normal_slope_sign_audit(self, open_grid):
        # a profile sloping away from the observed wall must be refused
        ws = assemble_weight(
            WeightParams(lam=0.5, s=1.0, regime="open"),
            open_grid,
            psi2_profile=SectionWeightProfile(h=1.0, delta=1.5, obs_side="bottom"),
        )
        bump = SpaceTimeBump(open_grid, amplitude=0.5)
        with pytest.raises(ValueError, match="normal slope"):
            carleman_check_open(bump.field(), bump.heat_residual(), ws, open_grid)


class TestReportSerialization:
    def test_text_round_trip_structure(self, grid, ws, rng, tmp_path):
        F = random_smooth_field(grid, rng)
        rep = lemma_bounded_check(F, ws, grid, s_values=[1, 2])
        path = tmp_path / "report.txt"
        rep.write(path)
        text = path.read_text()
        assert "report: prefix_integral_bounded" in text
        assert "sweep:" in text
        assert "empirical_C" in text
        # deterministic serialization
        assert text == rep.to_text()
