"""Command-line entry point ``hoclab``.

Subcommands: ``spectral``, ``evolve``, ``oracle``, ``check``, ``sweep``.
Exit codes: 0 success, 1 configuration error, 2 numerical or I/O failure,
3 acceptance failure.  ``HOC_OUT`` overrides ``--out``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import RunConfig, parse_config
from .errors import ConfigurationError, DomainError, HocError, ModelError, UnsupportedError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 1, 2, 3


class _Exit(Exception):
    def __init__(self, code: int, message: str = ""):
        super().__init__(message)
        self.code = code


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def _load_config(path: Optional[str], default: Optional[dict] = None) -> RunConfig:
    if path is None:
        return parse_config(default or {})
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"--config: cannot read {path}: {exc.strerror}") from exc
    return parse_config(text)


def _out_dir(args, cfg: Optional[RunConfig]) -> Optional[str]:
    env = os.environ.get("HOC_OUT")
    if env:
        return env
    if args.out:
        return args.out
    return cfg.output.directory if cfg is not None else None


def _write_json(directory: str, name: str, payload: dict) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, name)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return path


def cmd_spectral(args) -> int:
    from .scenario import _clean, build_model
    from .spectral import analyze

    cfg = _load_config(args.config)
    report = analyze(build_model(cfg), cfg.run.regime).report
    payload = _clean({"version": __version__, "spectral": report.to_dict(),
                      "config": cfg.model_dump(mode="json")})
    _say(args, json.dumps(payload["spectral"], indent=2, sort_keys=True))
    out = _out_dir(args, None)
    if out:
        _say(args, f"wrote {_write_json(out, 'summary.json', payload)}")
    return EXIT_OK


def cmd_evolve(args) -> int:
    from .scenario import run_scenario, write_outputs

    cfg = _load_config(args.config)
    res = run_scenario(cfg)
    paths = write_outputs(res, _out_dir(args, cfg))
    rep = res.spectrum.report
    _say(args, f"regime={rep.regime} lambda={rep.lam:.10g} alpha={rep.alpha}")
    for fit in res.fits:
        flag = "" if fit["reliable"] else "  (rate unreliable)"
        _say(args, f"fit {fit['series']}: {fit['kind']} rate {fit['rate']:.6g}, r2 {fit['r2']:.4f}{flag}")
    for p in paths:
        _say(args, f"wrote {p}")
    return EXIT_OK


_ORACLE_DEFAULT = {"model": {"canonical": "F"}, "grid": {"n_cells": 32},
                   "run": {"equation": "linear", "t_final": 5.0, "dt": 0.01}}


def cmd_oracle(args) -> int:
    from .core import Measure
    from .diagnostics import NormSpec, distance
    from .dynamics import evolve_conservative_measure, evolve_linear
    from .oracle import dense_generator, expm_propagate, from_coords, to_coords
    from .scenario import build_initial, build_model
    from .spectral import analyze

    cfg = _load_config(args.config, _ORACLE_DEFAULT)
    r = cfg.run
    if r.equation not in ("linear", "conservative"):
        raise ConfigurationError("run.equation: the oracle compares the linear or conservative flow")
    model = build_model(cfg)
    spectrum = analyze(model, r.regime)
    u0 = build_initial(cfg, model, spectrum)
    if r.equation == "linear":
        target, log = model, evolve_linear(model, u0, r.t_final, r.dt, scheme=r.scheme)
    else:
        if spectrum.cmodel is None:
            raise UnsupportedError("no conservative model in this regime")
        target = spectrum.cmodel
        log = evolve_conservative_measure(target, u0, r.t_final, r.dt, scheme=r.scheme)
    gen = dense_generator(target)
    ref = from_coords(expm_propagate(gen, to_coords(u0, model.grid), r.t_final), model.grid)
    tv = distance(log.final, ref, NormSpec("tv"), model.grid)
    payload = {"equation": r.equation, "n_cells": model.n, "t_final": r.t_final, "dt": r.dt,
               "tv_difference": tv, "reference_mass": ref.total_mass(model.grid)}
    _say(args, json.dumps(payload, indent=2, sort_keys=True))
    out = _out_dir(args, None)
    if out:
        _say(args, f"wrote {_write_json(out, 'oracle.json', payload)}")
    return EXIT_OK


def cmd_check(args) -> int:
    from .acceptance import run_all

    numbers = {int(x) for x in args.only.split(",")} if args.only else None
    results = run_all(numbers, seed=args.seed, echo=(None if args.quiet else print))
    passed = sum(r.passed for r in results)
    summary = {"passed": passed, "total": len(results),
               "criteria": [{"number": r.number, "title": r.title, "passed": r.passed,
                             "runtime": r.runtime,
                             "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail}
                                        for c in r.checks]} for r in results]}
    out = _out_dir(args, None)
    if out:
        _write_json(out, "acceptance.json", summary)
    print(f"{passed}/{len(results)} criteria passed")
    return EXIT_OK if passed == len(results) else EXIT_ACCEPTANCE


def _sweep_time(model, dts, t_final):
    from .core import Measure
    from .diagnostics import NormSpec, distance
    from .dynamics import evolve_linear

    rows = []
    for scheme in ("etd2", "etd4"):
        finals = [evolve_linear(model, Measure.uniform(model.grid), t_final, dt, scheme=scheme,
                                sample_stride=10 ** 9).final for dt in dts]
        diffs = [distance(a, b, NormSpec("tv"), model.grid) for a, b in zip(finals, finals[1:])]
        for i, d in enumerate(diffs):
            order = math.log2(diffs[i - 1] / d) if i > 0 and d > 0 else None
            rows.append({"scheme": scheme, "dt": dts[i], "dt_half": dts[i + 1], "difference": d, "order": order})
    return rows


def _sweep_grid(cfg, sizes):
    from .core import build_grid, discretize_model, quad
    from .spectral import analyze

    spec = cfg.model.to_spec()
    rows = []
    for n in sizes:
        grid = build_grid(spec.lo, spec.hi, n, cfg.grid.grading, cfg.grid.depth)
        model = discretize_model(spec, grid)
        rep = analyze(model, cfg.run.regime).report
        rows.append({"n_cells": n, "rho_estimate": rep.rho_fine if math.isfinite(rep.rho_fine) else None,
                     "lambda": rep.lam, "alpha": rep.alpha,
                     "q_over_a": quad(model.Q / model.a, grid), "residuals": rep.residuals})
    return rows


def cmd_sweep(args) -> int:
    from .scenario import _clean, build_model

    cfg = _load_config(args.config, {"model": {"canonical": "F"}})
    dts = [float(x) for x in args.dts.split(",")]
    sizes = [int(x) for x in args.sizes.split(",")]
    if len(dts) < 3 or sorted(dts, reverse=True) != dts:
        raise ConfigurationError("--dts: need at least three decreasing time steps")
    payload = _clean({"time": _sweep_time(build_model(cfg), dts, args.t_final),
                      "grid": _sweep_grid(cfg, sizes), "config": cfg.model_dump(mode="json")})
    for row in payload["time"]:
        order = "" if row["order"] is None else f"  order {row['order']:.2f}"
        _say(args, f"{row['scheme']} dt={row['dt']:<8g} |y(dt) - y(dt/2)| = {row['difference']:.3e}{order}")
    for row in payload["grid"]:
        _say(args, f"n={row['n_cells']:<6d} lambda={row['lambda']:.10g} alpha={row['alpha']} "
                   f"quad(Q/a)={row['q_over_a']:.8g}")
    out = _out_dir(args, None)
    if out:
        _say(args, f"wrote {_write_json(out, 'sweep.json', payload)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (HOC_OUT overrides)")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized invariant checks")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(prog="hoclab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hoclab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectral", parents=[common], help="spectral report only").set_defaults(func=cmd_spectral)
    sub.add_parser("evolve", parents=[common], help="full run with diagnostics").set_defaults(func=cmd_evolve)
    sub.add_parser("oracle", parents=[common], help="integrator vs matrix exponential").set_defaults(func=cmd_oracle)
    p = sub.add_parser("check", parents=[common], help="run the acceptance suite")
    p.add_argument("--only", metavar="N,M", help="comma-separated criterion numbers")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("sweep", parents=[common], help="dt and grid refinement studies")
    p.add_argument("--dts", default="0.2,0.1,0.05,0.025", help="decreasing time steps")
    p.add_argument("--sizes", default="128,256,512,1024", help="grid sizes")
    p.add_argument("--t-final", type=float, default=1.0, help="horizon of the time study")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ModelError, DomainError, UnsupportedError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HocError, OSError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
