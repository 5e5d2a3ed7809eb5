"""Command-line front end: simulate / fit / check-id / evaluate / replicate.

A JSON config file may hold one section per subcommand; explicit CLI flags
override file values.  Exit codes: 0 success, 2 configuration error,
3 data error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from .core import ConstraintMatrix, GraphicalMatrix, constraint_matrix_from_graph
from .errors import DataError, InputError, NumericalError
from .gibbs import CSP, FIXED_K, SamplerConfig
from .identify import (
    check_generic,
    check_multilayer,
    check_strict_corollary,
    check_two_layer,
)
from .pipeline import evaluate_to_file, fit_to_dir, replicate, simulate_to_dir

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_common(sp):
    sp.add_argument("--config", help="JSON config file with per-command sections")
    sp.add_argument("--seed", type=int, help="root random seed")
    sp.add_argument("--out", help="output directory or file")
    sp.add_argument("--jobs", type=int, default=1, help="worker pool size")
    sp.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sglcm",
        description="Sparse-graph latent class models: simulation, identifiability checks, Gibbs inference, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="draw a dataset from a two-layer truth")
    _add_common(sp)
    sp.add_argument("--truth", help="'reference' or a truth JSON path")
    sp.add_argument("--n", type=int, help="number of subjects")
    sp.add_argument("--header", action="store_true", help="write a header row")

    sp = sub.add_parser("fit", help="run the Gibbs sampler on a dataset CSV")
    _add_common(sp)
    sp.add_argument("--data", help="dataset CSV path")
    sp.add_argument("--header", action="store_true", help="dataset has a header row")
    sp.add_argument("--cardinality", type=int, help="declared constant cardinality")
    sp.add_argument("--mode", choices=[FIXED_K, CSP])
    sp.add_argument("--k-upper", type=int, dest="K")
    sp.add_argument("--b-classes", type=int, dest="B")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--burn-in", type=int, dest="burn_in")
    sp.add_argument("--thin", type=int)
    sp.add_argument("--v0", type=float)
    sp.add_argument("--a-sigma", type=float, dest="a_sigma")
    sp.add_argument("--b-sigma", type=float, dest="b_sigma")
    sp.add_argument("--alpha0", type=float, dest="alpha_csp")
    sp.add_argument("--theta-inf", type=float, dest="theta_inf")
    sp.add_argument("--mu0", type=float)
    sp.add_argument("--sigma0-sq", type=float, dest="sigma0_sq")
    sp.add_argument(
        "--no-positivity",
        action="store_true",
        help="drop the positivity constraint on active main effects",
    )

    sp = sub.add_parser("check-id", help="run identifiability checkers on matrix CSVs")
    _add_common(sp)
    sp.add_argument(
        "--check",
        choices=["corollary", "generic", "multilayer", "two-layer"],
        default="corollary",
    )
    sp.add_argument("--s-matrix", help="constraint matrix CSV (corollary/generic)")
    sp.add_argument(
        "--graph",
        action="append",
        help="graphical matrix CSV; repeat for stacked layers",
    )
    sp.add_argument(
        "--from-graph",
        action="store_true",
        help="derive the constraint matrix from --graph before checking",
    )
    sp.add_argument("--b-classes", type=int, dest="B", default=2)

    sp = sub.add_parser("evaluate", help="score a draws directory against a truth file")
    _add_common(sp)
    sp.add_argument("--draws", help="draws directory written by fit")
    sp.add_argument("--truth", help="truth JSON path")

    sp = sub.add_parser("replicate", help="replicated simulate->fit->evaluate study")
    _add_common(sp)
    sp.add_argument("--truth", default="reference")
    sp.add_argument("--n", type=int, action="append", dest="n_values", help="sample size; repeatable")
    sp.add_argument("--replications", type=int)
    sp.add_argument("--mode", choices=[FIXED_K, CSP])
    sp.add_argument("--k-upper", type=int, dest="K")
    sp.add_argument("--b-classes", type=int, dest="B")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--burn-in", type=int, dest="burn_in")
    sp.add_argument("--thin", type=int)
    return parser


def _load_config_section(args, section: str) -> dict:
    if not args.config:
        return {}
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"config file not found: {args.config}") from None
    except json.JSONDecodeError as err:
        raise InputError(f"config file is not valid JSON: {err}") from None
    sec = doc.get(section, {})
    if not isinstance(sec, dict):
        raise InputError(f"config section {section!r} must be an object")
    return sec


def _setting(args, cfg: dict, name: str, default=None, required: bool = False):
    """CLI flag wins, then config file, then default.

    store_true flags left at False defer to the config, so a file can turn
    them on; identity checks keep legitimate zero values from falling
    through.
    """
    v = getattr(args, name, None)
    if v is not None and v is not False:
        return v
    if name in cfg:
        return cfg[name]
    if required and default is None:
        raise InputError(f"missing required setting {name!r}")
    return default


def _sampler_config(args, cfg: dict) -> SamplerConfig:
    return SamplerConfig(
        K=int(_setting(args, cfg, "K", required=True)),
        B=int(_setting(args, cfg, "B", required=True)),
        iterations=int(_setting(args, cfg, "iterations", required=True)),
        burn_in=int(_setting(args, cfg, "burn_in", required=True)),
        thin=int(_setting(args, cfg, "thin", 1)),
        seed=int(_setting(args, cfg, "seed", required=True)),
        mode=_setting(args, cfg, "mode", FIXED_K),
        positivity_constraint=not bool(
            _setting(args, cfg, "no_positivity", False)
        ),
        mu0=float(_setting(args, cfg, "mu0", 0.0)),
        sigma0_sq=float(_setting(args, cfg, "sigma0_sq", 4.0)),
        v0=float(_setting(args, cfg, "v0", 0.1)),
        a_sigma=float(_setting(args, cfg, "a_sigma", 2.0)),
        b_sigma=float(_setting(args, cfg, "b_sigma", 2.0)),
        alpha_csp=float(_setting(args, cfg, "alpha_csp", 5.0)),
        theta_inf=float(_setting(args, cfg, "theta_inf", 0.07)),
    )


def cmd_simulate(args) -> int:
    cfg = _load_config_section(args, "simulate")
    out = _setting(args, cfg, "out", required=True)
    truth = _setting(args, cfg, "truth", "reference")
    n = int(_setting(args, cfg, "n", required=True))
    seed = _setting(args, cfg, "seed")
    if seed is None:
        raise InputError("simulate requires a seed")
    simulate_to_dir(
        truth, n=n, seed=int(seed), outdir=out,
        header=bool(_setting(args, cfg, "header", False)),
        jobs=max(1, int(args.jobs)),
    )
    if args.verbose:
        print(f"simulate: wrote {out}", file=sys.stderr)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _load_config_section(args, "fit")
    out = _setting(args, cfg, "out", required=True)
    data = _setting(args, cfg, "data", required=True)
    if _setting(args, cfg, "seed") is None:
        raise InputError("fit requires a seed")
    config = _sampler_config(args, cfg)
    card = _setting(args, cfg, "cardinality")
    fit_to_dir(
        data, config, out,
        header=bool(_setting(args, cfg, "header", False)),
        cardinality=None if card is None else int(card),
    )
    if args.verbose:
        print(f"fit: wrote {out}", file=sys.stderr)
    return EXIT_OK


def _verdict_payload(verdict) -> dict:
    return {
        "status": verdict.status,
        "witness": verdict.witness,
        "diagnostics": list(verdict.diagnostics),
    }


def cmd_check_id(args) -> int:
    cfg = _load_config_section(args, "check_id")
    out = _setting(args, cfg, "out", required=True)
    check = _setting(args, cfg, "check", "corollary")
    graphs = args.graph or cfg.get("graph") or []
    if isinstance(graphs, str):
        graphs = [graphs]
    if check == "multilayer":
        if not graphs:
            raise InputError("multilayer check needs at least one --graph")
        verdict = check_multilayer([GraphicalMatrix(sio.read_matrix_csv(g)) for g in graphs])
    elif check == "two-layer":
        if len(graphs) != 1:
            raise InputError("two-layer check needs exactly one --graph")
        verdict = check_two_layer(
            GraphicalMatrix(sio.read_matrix_csv(graphs[0])),
            B=int(_setting(args, cfg, "B", 2)),
        )
    else:
        if args.s_matrix or cfg.get("s_matrix"):
            S = ConstraintMatrix(sio.read_matrix_csv(_setting(args, cfg, "s_matrix")))
        elif graphs and (args.from_graph or cfg.get("from_graph")):
            S = constraint_matrix_from_graph(GraphicalMatrix(sio.read_matrix_csv(graphs[0])))
        else:
            raise InputError("corollary/generic checks need --s-matrix or --graph with --from-graph")
        verdict = check_strict_corollary(S) if check == "corollary" else check_generic(S)
    payload = _verdict_payload(verdict)
    sio.write_json_atomic(out, payload)
    print(json.dumps(payload))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config_section(args, "evaluate")
    out = _setting(args, cfg, "out", required=True)
    draws = _setting(args, cfg, "draws", required=True)
    truth = _setting(args, cfg, "truth", required=True)
    report = evaluate_to_file(draws, truth, out)
    if args.verbose:
        print(json.dumps(report.to_dict(), indent=2), file=sys.stderr)
    return EXIT_OK


def cmd_replicate(args) -> int:
    cfg = _load_config_section(args, "replicate")
    out = _setting(args, cfg, "out", required=True)
    seed = _setting(args, cfg, "seed")
    if seed is None:
        raise InputError("replicate requires a seed")
    n_values = args.n_values or cfg.get("n_values")
    if not n_values:
        raise InputError("replicate needs at least one --n")
    replications = int(_setting(args, cfg, "replications", required=True))
    config_kwargs = {
        "K": int(_setting(args, cfg, "K", required=True)),
        "B": int(_setting(args, cfg, "B", required=True)),
        "iterations": int(_setting(args, cfg, "iterations", required=True)),
        "burn_in": int(_setting(args, cfg, "burn_in", required=True)),
        "thin": int(_setting(args, cfg, "thin", 1)),
        "mode": _setting(args, cfg, "mode", CSP),
    }
    replicate(
        _setting(args, cfg, "truth", "reference"),
        n_values=[int(v) for v in n_values],
        replications=replications,
        config_kwargs=config_kwargs,
        root_seed=int(seed),
        jobs=max(1, int(args.jobs)),
        outdir=out,
    )
    if args.verbose:
        print(f"replicate: wrote {out}", file=sys.stderr)
    return EXIT_OK


_DISPATCH = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "check-id": cmd_check_id,
    "evaluate": cmd_evaluate,
    "replicate": cmd_replicate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except (InputError,) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as err:
        print(f"numerical abort: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
