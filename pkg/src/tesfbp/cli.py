"""Command-line front end: ``tesfbp {solve,perpetual,table1,basis-diag}``.

Configuration is a flat ``key = value`` file; ``--override key=value`` and
the dedicated flags take precedence. Every output file carries the full
configuration, either as a leading ``# config:`` line (CSV) or a JSON field.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .basis import eval_solution, generate_frequencies
from .diagnostics import gram_matrix, identity_self_test, ode_residual, tail_indicator
from .errors import ConfigError, TesError
from .nsbf import compute_nsbf_coefficients, eval_cs_all
from .russian import (RussianOptionSpec, SolverConfig, bsm_to_pqw, domain_length,
                      perpetual_solution, solve_fhro)
from .slp import build_coefficient_grid, compute_formal_powers
from .solver import TimeGrid

logger = logging.getLogger("tesfbp")

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2

TABLE1_HORIZONS = ("1/3", "7/12", "1", "2", "5", "10", "40", "100")
TABLE1_Y = (0.0, 0.1, 0.2)
# published values of u(y, T) at r=0.05, delta=0.03, sigma=0.3
TABLE1_REFERENCE = {
    "1/3": (1.1340, 1.0462, 1.0065),
    "7/12": (1.1744, 1.0771, 1.0208),
    "1": (1.2237, 1.1175, 1.0453),
    "2": (1.3078, 1.1891, 1.0968),
    "5": (1.4401, 1.3049, 1.1892),
    "10": (1.5508, 1.4029, 1.2712),
    "40": (1.6831, 1.5208, 1.3718),
    "100": (1.6904, 1.5273, 1.3775),
}


@dataclass
class RunConfig:
    r: float = 0.05
    delta: float = 0.03
    sigma: float = 0.3
    T: float = 1.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    out: str = "out"
    y_samples: tuple = (0.0, 0.1, 0.2)
    jobs: int = 1

    @property
    def spec(self) -> RussianOptionSpec:
        return RussianOptionSpec(self.r, self.delta, self.sigma, self.T)

    def echo(self) -> dict:
        d = asdict(self)
        d["y_samples"] = list(self.y_samples)
        return d

    def echo_line(self) -> str:
        return "# config: " + json.dumps(self.echo(), sort_keys=True)


def _parse_number(text: str, kind):
    text = text.strip()
    if "/" in text and kind is float:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return kind(text)


_TOP_KEYS = {"r": float, "delta": float, "sigma": float, "T": float, "out": str, "jobs": int}
_SOLVER_KEYS = {f.name: type(f.default) for f in fields(SolverConfig)}


def apply_settings(cfg: RunConfig, items: dict[str, str]) -> RunConfig:
    """Return ``cfg`` updated from string key/value pairs."""
    top, solver = {}, {}
    for key, raw in items.items():
        try:
            if key in _TOP_KEYS:
                top[key] = _parse_number(raw, _TOP_KEYS[key])
            elif key == "y_samples":
                top[key] = tuple(_parse_number(v, float) for v in raw.split(",") if v.strip())
            elif key in _SOLVER_KEYS:
                solver[key] = _parse_number(raw, _SOLVER_KEYS[key])
            else:
                raise ConfigError(f"unknown configuration key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return replace(cfg, solver=replace(cfg.solver, **solver), **top)


def read_config_file(path: str | Path) -> dict[str, str]:
    items = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        items[key.strip()] = value.strip()
    return items


def load_config(args: argparse.Namespace) -> RunConfig:
    items: dict[str, str] = {}
    if args.config:
        try:
            items.update(read_config_file(args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    for ov in args.override or []:
        if "=" not in ov:
            raise ConfigError(f"override must be key=value, got {ov!r}")
        key, value = ov.split("=", 1)
        items[key.strip()] = value.strip()
    if args.seed is not None:
        items["seed"] = str(args.seed)
    if args.horizon is not None:
        items["T"] = args.horizon
    if args.out is not None:
        items["out"] = args.out
    cfg = apply_settings(RunConfig(), items)
    try:
        cfg.spec
    except TesError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.12g}"


def write_csv(path: Path, cfg: RunConfig, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(cfg.echo_line() + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    sol = solve_fhro(cfg.spec, cfg.solver)
    res, T = sol.result, cfg.T

    tb = np.linspace(0, T, 201)
    write_csv(out / "boundary.csv", cfg, ["t", "s_K"], zip(tb, sol.boundary(tb)))
    ys = np.asarray(cfg.y_samples, dtype=float)
    write_csv(out / "value_slice.csv", cfg, ["y", "u_N"], zip(ys, sol.value_slice(ys)))

    L = sol.basis.L
    yg, tg = np.meshgrid(np.linspace(0, L, 41), np.linspace(T / 40, T, 40))
    surf = sol.value(yg.ravel(), tg.ravel())
    write_csv(out / "surface.csv", cfg, ["y", "t", "u_N"], zip(yg.ravel(), tg.ravel(), surf))

    grid = TimeGrid(cfg.solver.N_t, T)
    s_nodes = sol.boundary(grid.nodes)
    u_s = eval_solution(sol.basis, res.a_coeffs, s_nodes, grid.nodes)
    uy_s = eval_solution(sol.basis, res.a_coeffs, s_nodes, grid.nodes, "u_y")
    write_csv(out / "errors.csv", cfg, ["t", "abs_u_minus_1", "abs_u_y"],
              zip(grid.nodes, np.abs(u_s - 1), np.abs(uy_s)))

    rows = [("a", n, om, a) for n, (om, a) in enumerate(zip(sol.basis.omegas, res.a_coeffs))]
    rows += [("b", k, "", b) for k, b in enumerate(res.b_coeffs)]
    write_csv(out / "coefficients.csv", cfg, ["kind", "index", "omega", "coef"], rows)

    write_json(out / "summary.json", {
        "F": res.F, "I1": res.I1, "I2": res.I2, "I3": res.I3, "lambda": res.lam,
        "seed": cfg.solver.seed, "evaluations": res.evaluations,
        "converged": res.converged, "n_frequencies": int(sol.basis.size),
        "s_K_T": float(sol.boundary(T)), "b_inf": sol.perpetual.b_inf,
        "slope_condition_violation": sol.slope_violation,
        "value_slice": dict(zip(map(fmt, ys), map(float, sol.value_slice(ys)))),
        "config": cfg.echo(),
    })
    logger.info("F=%.3e after %d evaluations (%.1fs)", res.F, res.evaluations, res.wall_time)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_perpetual(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    perp = perpetual_solution(cfg.spec)
    write_json(out / "perpetual.json", {"d1": perp.d1, "d2": perp.d2, "x_star": perp.x_star,
                                        "b_inf": perp.b_inf, "config": cfg.echo()})
    ys = np.asarray(cfg.y_samples, dtype=float)
    write_csv(out / "perpetual.csv", cfg, ["y", "u_inf"], zip(ys, np.atleast_1d(perp.value(ys))))
    return EXIT_OK


def _table_row(args):
    cfg, label = args
    T = _parse_number(label, float)
    sol = solve_fhro(replace(cfg.spec, T=T), cfg.solver)
    return label, T, sol.value_slice(TABLE1_Y), sol.result.F, sol.result.converged


def cmd_table1(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    jobs = [(cfg, label) for label in TABLE1_HORIZONS]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(_table_row, jobs))
    else:
        results = [_table_row(j) for j in jobs]
    rows, ok = [], True
    for label, T, vals, F, conv in results:
        ok &= conv
        for y, v, ref in zip(TABLE1_Y, vals, TABLE1_REFERENCE[label]):
            rows.append((label, T, y, v, ref, v - ref, F, int(conv)))
    write_csv(out / "table1.csv", cfg,
              ["T_label", "T", "y", "u_N", "reference", "diff", "F", "converged"], rows)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_basis_diag(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    sc, spec = cfg.solver, cfg.spec
    perp = perpetual_solution(spec)
    p, q, w = bsm_to_pqw(spec)
    grid = build_coefficient_grid(p, q, w, domain_length(perp), n_mesh=sc.n_mesh)
    nsbf = compute_nsbf_coefficients(grid, compute_formal_powers(grid, 1), sc.M)
    omegas = generate_frequencies(sc.d, sc.delta_step, sc.cap, sc.frequency_scale(spec.T), sc.seed)
    per_omega = []
    for om in omegas:
        cs = eval_cs_all(grid, nsbf, om)
        per_omega.append({"omega": float(om),
                          "residual_c": ode_residual(grid, om, cs.c, cs.c_prime),
                          "residual_s": ode_residual(grid, om, cs.s, cs.s_prime)})
    tails = {str(m): tail_indicator(grid, nsbf, float(omegas[-1]), m)
             for m in range(10, sc.M + 1, 10)}
    gram = gram_matrix(sc.K, spec.T)
    ident = identity_self_test()
    worst = max(max(d["residual_c"], d["residual_s"]) for d in per_omega)
    write_json(out / "diagnostics.json", {
        "seed": sc.seed, "omegas": [float(o) for o in omegas],
        "ode_residuals": per_omega, "max_ode_residual": worst,
        "nsbf_tail": tails, "gram_deviation": float(np.max(np.abs(gram - np.eye(sc.K + 1)))),
        "identity_self_test": ident, "config": cfg.echo(),
    })
    passed = ident["passed"] and worst < 1e-4
    return EXIT_OK if passed else EXIT_CONFIG


COMMANDS = {"solve": cmd_solve, "perpetual": cmd_perpetual, "table1": cmd_table1,
            "basis-diag": cmd_basis_diag}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="frequency generator seed")
    common.add_argument("--horizon", help="option horizon T in years (fractions allowed)")
    common.add_argument("--override", action="append", metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="tesfbp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
