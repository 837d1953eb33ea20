"""Command-line front end.

Subcommands::

    forward          run one forward solve (oracle or positive preset)
    check-weights    evaluate the weight assumptions in both regimes
    verify-lemmas    sweep the prefix-integral inequalities
    verify-carleman  sweep both full Carleman estimates
    stability        run the perturbation sweep and stability reports

Configuration is a flat key:value text file with section headers (see
``config_reference.txt``, regenerated into every output directory).  All
keys have documented defaults except ``scenario.name``.  Identical config
and seed produce byte-identical report files: no timestamps are written
and every random draw is seeded.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import carleman as carl
from . import forward as fwd
from . import stability as stab
from . import synth
from . import transform as trans
from . import weights as wts
from .grid import FULL, ScalarField, WaveguideDomain, build_grid, fit_convergence_order, gradient, save_field


class ConfigError(Exception):
    """Invalid or missing configuration; the message names the key."""


def _floats(text: str) -> list[float]:
    return [float(p) for p in text.replace(";", ",").split(",") if p.strip()]


# (section, key) -> (default value, parser, description).  A None default
# marks a required key.
_SPEC: dict[str, dict[str, tuple]] = {
    "scenario": {
        "name": (None, str, "label written into every report (required)"),
    },
    "domain": {
        "L": (1.0, float, "axial half-length (truncation radius in open mode)"),
        "h": (1.0, float, "cross-section height"),
        "T": (2.0, float, "final time"),
        "alpha": (0.0, float, "anchor abscissa in (-L, L)"),
        "obs_side": ("top", str, "observed lateral wall: top or bottom"),
    },
    "grid": {
        "n1": (32, int, "interior axial node count"),
        "n2": (32, int, "interior cross-section node count"),
        "nt": (64, int, "time step count"),
    },
    "weights": {
        "lambda": (1.0, float, "weight sharpness"),
        "s": (4.0, float, "headline large parameter"),
        "delta": (0.5, float, "cross-section profile offset"),
        "c1": (0.5, float, "axial profile floor"),
        "s_sweep": ([1.0, 2.0, 4.0, 8.0, 16.0, 32.0], _floats, "s values swept by checks"),
    },
    "open": {
        "n1": (127, int, "axial nodes for open-regime checks"),
        "n2": (7, int, "cross-section nodes for open-regime checks"),
        "nt": (32, int, "time steps for open-regime checks"),
        "lambda": (1.1, float, "weight sharpness for open-regime checks"),
        "s_sweep": ([4.0, 8.0, 16.0, 32.0, 64.0], _floats, "s sweep for the open inequality"),
    },
    "lemmas": {
        "seed": (1234, int, "seed for the random smooth test fields"),
        "draws": (3, int, "number of random fields per inequality"),
    },
    "forward": {
        "preset": ("oracle", str, "oracle (closed-form yardstick) or positive"),
        "q_amplitude": (0.4, float, "amplitude of the potential preset"),
    },
    "carleman": {
        "s_sweep": ([2.0, 4.0, 8.0, 16.0, 32.0], _floats, "s sweep for the bounded estimate"),
        "bump_amplitude": (1.0, float, "amplitude of the boundary-vanishing test bump"),
        "theta": (0.1, float, "perturbation size for the pipeline field"),
        "conj_lambda": (0.25, float, "weight sharpness for the conjugated-operator check"),
        "conj_s": (0.5, float, "large parameter for the conjugated-operator check"),
    },
    "stability": {
        "theta_list": ([0.1, 0.05, 0.025], _floats, "perturbation sizes"),
        "eps_list": ([0.25, 0.5], _floats, "time-window margins"),
        "q_amplitude": (0.4, float, "amplitude of the potential preset"),
        "f_bump": (0.5, float, "amplitude of the axial factor's cosine bump"),
    },
}


@dataclass
class ScenarioConfig:
    """Fully validated configuration with every default resolved."""

    values: dict[str, dict[str, object]] = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict[str, object]:
        return self.values[section]

    @classmethod
    def parse(cls, path: str | Path | None) -> "ScenarioConfig":
        raw = configparser.ConfigParser()
        raw.optionxform = str  # keys are case-sensitive
        if path is not None:
            read = raw.read(str(path))
            if not read:
                raise ConfigError(f"config file not found: {path}")

        values: dict[str, dict[str, object]] = {}
        for section, keys in _SPEC.items():
            values[section] = {}
            for key, (default, parser, _desc) in keys.items():
                if raw.has_option(section, key):
                    text = raw.get(section, key)
                    try:
                        values[section][key] = parser(text)
                    except (TypeError, ValueError) as exc:
                        raise ConfigError(f"invalid value for {section}.{key}: {text!r}") from exc
                elif default is None:
                    raise ConfigError(f"missing config key: {section}.{key}")
                else:
                    values[section][key] = default

        for section in raw.sections():
            if section not in _SPEC:
                raise ConfigError(f"unknown config section: {section}")
            for key, _ in raw.items(section):
                if key not in _SPEC[section]:
                    raise ConfigError(f"unknown config key: {section}.{key}")
        return cls(values)

    def domain(self, truncated: bool = False) -> WaveguideDomain:
        d = self["domain"]
        return WaveguideDomain(
            L=d["L"], h=d["h"], T=d["T"], alpha=d["alpha"],
            obs_side=d["obs_side"], truncated=truncated,
        )

    def grid(self):
        g = self["grid"]
        return build_grid(self.domain(False), g["n1"], g["n2"], g["nt"])

    def open_grid(self):
        g = self["open"]
        return build_grid(self.domain(True), g["n1"], g["n2"], g["nt"])

    def weight_params(self, regime: str = "bounded") -> wts.WeightParams:
        w = self["weights"]
        lam = w["lambda"] if regime == "bounded" else self["open"]["lambda"]
        return wts.WeightParams(
            lam=lam, s=w["s"], regime=regime, delta=w["delta"], c1=w["c1"]
        )


def write_reference(out_dir: Path) -> Path:
    """Document every config key and its default in the output directory."""
    lines = ["# configuration reference: every key with its default", ""]
    for section, keys in _SPEC.items():
        lines.append(f"[{section}]")
        for key, (default, _parser, desc) in keys.items():
            if default is None:
                shown = "<required>"
            elif isinstance(default, list):
                shown = ",".join(repr(v) for v in default)
            else:
                shown = repr(default)
            lines.append(f"{key}: {shown}")
            lines.append(f"# {desc}")
        lines.append("")
    path = out_dir / "config_reference.txt"
    path.write_text("\n".join(lines))
    return path


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_forward(cfg: ScenarioConfig, out: Path) -> int:
    grid = cfg.grid()
    preset = cfg["forward"]["preset"]
    if preset == "oracle":
        oracle = fwd.SeparableOracle(grid)
        u = oracle.solve()
        save_field(u, out / "u")
        err_fine = oracle.relative_l2_error()
        coarse = build_grid(grid.domain, max(grid.n1 // 2, 4), max(grid.n2 // 2, 4),
                            max(grid.nt // 2, 4))
        err_coarse = fwd.SeparableOracle(coarse).relative_l2_error()
        order = fit_convergence_order([coarse.dx1, grid.dx1], [err_coarse, err_fine])
        report = "\n".join(
            [
                "report: forward_oracle",
                f"scenario: {cfg['scenario']['name']}",
                f"relative_l2_error: {err_fine!r}",
                f"relative_l2_error_coarse: {err_coarse!r}",
                f"fitted_order: {order!r}",
            ]
        ) + "\n"
        (out / "forward_oracle.txt").write_text(report)
        print(report, end="")
        return 0
    if preset == "positive":
        q = synth.q_preset(grid, cfg["forward"]["q_amplitude"])
        pot = fwd.PotentialSpec(grid, q, synth.axial_factor(grid))
        data = fwd.positive_preset_data(grid, pot)
        u = fwd.solve_heat(grid, pot, data)
        save_field(u, out / "u")
        min_u = float(np.min(u.values))
        report = "\n".join(
            [
                "report: forward_positive",
                f"scenario: {cfg['scenario']['name']}",
                f"min_u: {min_u!r}",
                f"compatibility_residual: {fwd.compatibility_residual(data, pot)!r}",
            ]
        ) + "\n"
        (out / "forward_positive.txt").write_text(report)
        print(report, end="")
        return 0
    print(f"unknown forward preset: {preset}", file=sys.stderr)
    return 2


def cmd_check_weights(cfg: ScenarioConfig, out: Path) -> int:
    grid = cfg.grid()
    ws = wts.assemble_weight(cfg.weight_params("bounded"), grid)
    rep_b = wts.check_assumption_bounded(ws)
    (out / "assumptions_bounded.txt").write_text(rep_b.to_text())
    print(rep_b.to_text(), end="")

    ogrid = cfg.open_grid()
    wso = wts.assemble_weight(cfg.weight_params("open"), ogrid)
    rep_o = wts.check_assumption_open(wso, ogrid)
    (out / "assumptions_open.txt").write_text(rep_o.to_text())
    print(rep_o.to_text(), end="")

    return 0 if (rep_b.all_passed and rep_o.all_passed) else 1


def cmd_verify_lemmas(cfg: ScenarioConfig, out: Path, seed: int | None = None,
                      s_sweep: list[float] | None = None) -> int:
    rng_seed = seed if seed is not None else cfg["lemmas"]["seed"]
    draws = cfg["lemmas"]["draws"]
    ok = True

    grid = cfg.grid()
    ws = wts.assemble_weight(cfg.weight_params("bounded"), grid)
    sweep = s_sweep if s_sweep is not None else cfg["weights"]["s_sweep"]
    rng = np.random.default_rng(rng_seed)
    for k in range(draws):
        F = synth.random_smooth_field(grid, rng)
        rep = carl.lemma_bounded_check(F, ws, grid, s_values=sweep)
        rep.write(out / f"lemma_bounded_{k:02d}.txt")
        print(f"lemma_bounded draw {k}: max C {rep.verdict['max_over_sweep']!r} "
              f"s_uniform {rep.verdict['s_uniform']}")
        ok = ok and rep.verdict["s_uniform"]

    ogrid = cfg.open_grid()
    wso = wts.assemble_weight(cfg.weight_params("open"), ogrid)
    osweep = cfg["open"]["s_sweep"]
    orng = np.random.default_rng(rng_seed)
    for k in range(draws):
        F = synth.random_smooth_field(ogrid, orng, anchored_right=True)
        rep = carl.lemma_open_check(F, wso, ogrid, s_values=osweep)
        rep.write(out / f"lemma_open_{k:02d}.txt")
        print(f"lemma_open draw {k}: slope {rep.verdict['fitted_slope']!r} "
              f"in_band {rep.verdict['slope_in_band']}")
        ok = ok and rep.verdict["slope_in_band"]

    return 0 if ok else 1


def cmd_verify_carleman(cfg: ScenarioConfig, out: Path) -> int:
    ok = True
    grid = cfg.grid()
    ws = wts.assemble_weight(cfg.weight_params("bounded"), grid)
    sweep = cfg["carleman"]["s_sweep"]

    bump = synth.SpaceTimeBump(grid, amplitude=cfg["carleman"]["bump_amplitude"])
    rep_bump = carl.carleman_check_bounded(bump.field(), bump.heat_residual(), ws, grid,
                                           s_values=sweep)
    rep_bump.write(out / "carleman_bounded_bump.txt")
    print(f"carleman_bounded bump: s0 {rep_bump.verdict['s0']!r} "
          f"finite {rep_bump.verdict['all_finite']}")
    ok = ok and rep_bump.verdict["all_finite"] and rep_bump.verdict["s0"] is not None

    theta = cfg["carleman"]["theta"]
    q = synth.q_preset(grid, cfg["forward"]["q_amplitude"])
    pair = fwd.manufacture_pair(grid, q, q + theta * synth.dq_preset(grid),
                                synth.axial_factor(grid))
    bundle = trans.build_bundle(pair.u, pair.u_tilde, pair.pot)
    Pz = ScalarField(
        grid,
        bundle.B2.values * gradient(bundle.w)[1].values + bundle.b_coef.values * bundle.w.values,
        FULL,
    )
    rep_z = carl.carleman_check_bounded(bundle.z, Pz, ws, grid, s_values=sweep)
    rep_z.write(out / "carleman_bounded_pipeline.txt")
    print(f"carleman_bounded pipeline: s0 {rep_z.verdict['s0']!r} "
          f"finite {rep_z.verdict['all_finite']}")
    ok = ok and rep_z.verdict["all_finite"] and rep_z.verdict["s0"] is not None

    ogrid = cfg.open_grid()
    wso = wts.assemble_weight(cfg.weight_params("open"), ogrid)
    obump = synth.SpaceTimeBump(ogrid, amplitude=cfg["carleman"]["bump_amplitude"])
    rep_o = carl.carleman_check_open(obump.field(), obump.heat_residual(), wso, ogrid,
                                     s_values=cfg["open"]["s_sweep"][:-1])
    rep_o.write(out / "carleman_open_bump.txt")
    print(f"carleman_open bump: s0 {rep_o.verdict['s0']!r} "
          f"finite {rep_o.verdict['all_finite']}")
    ok = ok and rep_o.verdict["all_finite"]

    return 0 if ok else 1


def cmd_stability(cfg: ScenarioConfig, out: Path,
                  eps_list: list[float] | None = None) -> int:
    grid = cfg.grid()
    st = cfg["stability"]
    q = synth.q_preset(grid, st["q_amplitude"])
    dq = synth.dq_preset(grid)
    f = synth.axial_factor(grid, st["f_bump"])
    epss = eps_list if eps_list is not None else st["eps_list"]
    reports = stab.perturbation_sweep(grid, q, dq, f, st["theta_list"], epss)
    for i, rep in enumerate(reports):
        (out / f"stability_{i:02d}.txt").write_text(rep.to_text())
    (out / "stability_sweep.csv").write_text(stab.sweep_table(reports))
    print(stab.sweep_table(reports), end="")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="waveguide-carleman",
        description="forward solves and weighted-inequality checks for the "
                    "waveguide heat problem",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("forward", "check-weights", "verify-lemmas", "verify-carleman", "stability"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="path to the config file")
        p.add_argument("--out", type=str, default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override lemmas.seed")
        p.add_argument("--sweep-s", type=str, default=None,
                       help="comma-separated s values overriding weights.s_sweep")
        p.add_argument("--eps", type=str, default=None,
                       help="comma-separated window margins overriding stability.eps_list")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = ScenarioConfig.parse(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_reference(out)

    sweep = _floats(args.sweep_s) if args.sweep_s else None
    epss = _floats(args.eps) if args.eps else None

    if args.command == "forward":
        return cmd_forward(cfg, out)
    if args.command == "check-weights":
        return cmd_check_weights(cfg, out)
    if args.command == "verify-lemmas":
        return cmd_verify_lemmas(cfg, out, seed=args.seed, s_sweep=sweep)
    if args.command == "verify-carleman":
        return cmd_verify_carleman(cfg, out)
    if args.command == "stability":
        return cmd_stability(cfg, out, eps_list=epss)
    print(f"unknown command: {args.command}", file=sys.stderr)  # pragma: no cover
    return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
