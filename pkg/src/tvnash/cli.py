"""Command line entry point: ``tvnash {generate,bounds,run,compare,verify}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .cournot import generate_instance, summary as cournot_summary
from .engine import RunConfig, centralized_ne, run
from .errors import CertificateError, TvNashError
from .experiments import (
    PRESETS,
    _jsonable,
    bounds_report,
    certify,
    load_spec,
    preset,
    run_experiment,
)
from .game import estimate_constants, game_to_dict, load_game
from .network import parse_graph_spec
from .verify import SUITES, run_all


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON file with default option values")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--uncertified", action="store_true",
                   help="allow step sizes outside the certified region")
    return p


def _game_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--game", help="game JSON; a market game is generated when omitted")
    p.add_argument("--N", type=int, default=20, help="number of firms")
    p.add_argument("--m", type=int, default=7, help="number of markets")
    p.add_argument("--n-total", type=int, dest="n_total", help="total decision variables")
    p.add_argument("--unbounded", action="store_true", help="drop the capacity boxes")


def _graph_args(p: argparse.ArgumentParser, default: str | None = None) -> None:
    p.add_argument("--graph", default=default,
                   help="ring | ring-skip | complete | er:<p> | file:<path>")
    p.add_argument("--family-size", type=int, default=1, dest="family_size")
    p.add_argument("--schedule", choices=("fixed", "round_robin", "random"))
    p.add_argument("--fraction", type=float, default=0.99)
    p.add_argument("--theta", type=float)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="tvnash", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="draw a market game")
    g.add_argument("--N", type=int, default=20)
    g.add_argument("--m", type=int, default=7)
    g.add_argument("--n-total", type=int, dest="n_total")

    b = sub.add_parser("bounds", parents=[common], help="print step-size certificates")
    _game_args(b)
    _graph_args(b, "er:0.2")

    r = sub.add_parser("run", parents=[common], help="run one algorithm")
    _game_args(r)
    _graph_args(r)
    r.add_argument("--algorithm", choices=("alg1", "alg2", "unconstrained"), default="alg1")
    r.add_argument("--alpha", type=float)
    r.add_argument("--gamma", type=float)
    r.add_argument("--tau", type=float)
    r.add_argument("--max-iters", type=int, default=100_000, dest="max_iters")
    r.add_argument("--stop-tol", type=float, default=1e-10, dest="stop_tol")
    r.add_argument("--init", choices=("zeros", "random"), default="zeros")
    r.add_argument("--no-oracle", action="store_true", dest="no_oracle")

    c = sub.add_parser("compare", parents=[common], help="run an experiment preset")
    c.add_argument("--preset", choices=PRESETS)
    c.add_argument("--seeds", type=int, nargs="+")
    c.add_argument("--sizes", type=int, nargs="+")
    c.add_argument("--algorithms", nargs="*")
    c.add_argument("--max-iters", type=int, dest="max_iters")
    c.add_argument("--graph")

    v = sub.add_parser("verify", parents=[common], help="run the property suites")
    v.add_argument("--only", nargs="+", choices=sorted(SUITES))
    return parser


def _parse(parser: argparse.ArgumentParser, argv):
    args = parser.parse_args(argv)
    if args.config and args.command != "compare":
        doc = json.loads(Path(args.config).read_text())
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in doc.items()})
        args = parser.parse_args(argv)
    return args


def _load_game(args):
    if args.game:
        game = load_game(args.game)
    else:
        game = generate_instance(N=args.N, m=args.m, n_total=args.n_total, seed=args.seed).game
    return game.without_boxes() if args.unbounded else game


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(doc), indent=1)
    if out:
        path = Path(out)
        if path.suffix != ".json":
            path.mkdir(parents=True, exist_ok=True)
            path = path / "report.json"
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        print(f"wrote {path}")
    else:
        print(text)


def cmd_generate(args) -> int:
    inst = generate_instance(N=args.N, m=args.m, n_total=args.n_total, seed=args.seed)
    info = cournot_summary(inst)
    doc = {"game": game_to_dict(inst.game), "summary": info}
    lines = [f"N={info['N']} m={info['m']} n={info['n']}",
             f"mu={info['mu']:.6g} ell0={info['ell0']:.6g} ell={info['ell']:.6g}",
             f"ell0/mu={info['condition_ell0_over_mu']:.4g} "
             f"ell/mu={info['condition_ell_over_mu']:.4g}"]
    if args.out:
        path = Path(args.out)
        if path.suffix != ".json":
            path.mkdir(parents=True, exist_ok=True)
            path = path / "game.json"
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(doc), indent=1))
        print("\n".join(lines + [f"wrote {path}"]))
    else:
        print(json.dumps(_jsonable(doc), indent=1))
        print("\n".join(lines), file=sys.stderr)
    return 0


def cmd_bounds(args) -> int:
    game = _load_game(args)
    seq = parse_graph_spec(args.graph, game.num_agents, args.family_size, args.seed,
                           args.schedule)
    _emit(bounds_report(game, seq, args.fraction, args.theta), args.out)
    return 0


def cmd_run(args) -> int:
    game = _load_game(args)
    graph = args.graph or ("ring" if args.algorithm == "alg2" else "er:0.2")
    seq = parse_graph_spec(graph, game.num_agents, args.family_size, args.seed, args.schedule)
    k = estimate_constants(game)
    explicit = {key: getattr(args, key) for key in ("alpha", "gamma", "tau")
                if getattr(args, key) is not None}
    algo = args.algorithm
    if algo == "unconstrained":
        if "alpha" not in explicit:
            explicit["alpha"] = certify(game, seq, "alg1", k, args.fraction).alpha
        cert, steps = None, {"alpha": explicit["alpha"]}
    else:
        cert = certify(game, seq, algo, k, args.fraction, args.theta, explicit=explicit)
        steps = ({"alpha": cert.alpha} if algo == "alg1"
                 else {"gamma": cert.gamma, "tau": cert.tau})
    cfg = RunConfig(algo, **steps, max_iters=args.max_iters, stop_tol=args.stop_tol,
                    init=args.init, init_seed=args.seed, audit_contraction=True,
                    certificate=cert, uncertified=args.uncertified)
    x_star = None if args.no_oracle else centralized_ne(game, constants=k).x
    trace = run(game, seq, cfg, x_star)
    out = Path(args.out or "runs/run")
    trace.write(out, algo)
    info = {"config": cfg.to_dict(), "graph": graph, "family_size": args.family_size,
            "game": args.game or {"N": args.N, "m": args.m, "n_total": args.n_total},
            "unbounded": args.unbounded, "version": __version__, "seeds": {"all": args.seed}}
    (out / "manifest.json").write_text(json.dumps(_jsonable(info), indent=1))
    print(json.dumps(_jsonable({**trace.summary(), "out": str(out)}), indent=1))
    return 0 if trace.status != "Diverged" else 1


def cmd_compare(args) -> int:
    overrides = {"seeds": args.seeds, "sizes": args.sizes, "algorithms": args.algorithms,
                 "max_iters": args.max_iters, "graph": args.graph, "out": args.out,
                 "workers": args.workers if args.workers != 1 else None,
                 "uncertified": True if args.uncertified else None}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config:
        if args.preset:
            overrides["preset"] = args.preset
        spec = load_spec(args.config, **overrides)
    else:
        overrides.setdefault("seeds", [args.seed])
        overrides.setdefault("out", f"runs/{args.preset or 'fig1_compare'}")
        spec = preset(args.preset or "fig1_compare", **overrides)
    report = run_experiment(spec)
    for row in report["cells"]:
        hit = row["iters_to_1e-4"]
        print(f"{row['label']:<32} {row['status']:<9} iters={row['iters']:<7} "
              f"to1e-4={hit if hit is not None else '-':<7} final={row['final_dist']:.3e}")
    print(f"wrote {spec.out}")
    return 0


def cmd_verify(args) -> int:
    results = run_all(seed=args.seed, only=args.only)
    for r in results:
        print(r.line())
    if args.out:
        _emit({"suites": [r.__dict__ | {"passed": r.passed} for r in results]}, args.out)
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {"generate": cmd_generate, "bounds": cmd_bounds, "run": cmd_run,
            "compare": cmd_compare, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = _parse(parser, argv)
    try:
        return COMMANDS[args.command](args)
    except CertificateError as exc:
        print(f"certification failed ({exc.bound}): {exc}", file=sys.stderr)
        return 2
    except (TvNashError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
