"""Command-line interface.

Subcommands: fit-sdf, init-param, optimize, build-model, synthesize,
report, serve. Exit codes: 0 ok, 2 config error, 3 stage failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3

_STAGE_OF_COMMAND = {
    "fit-sdf": "sdf",
    "init-param": "param",
    "optimize": "boundaries",
    "build-model": "model",
}


def _add_pipeline_args(sub):
    sub.add_argument("--config", required=True, help="pipeline TOML config")
    sub.add_argument("--resume", action="store_true",
                     help="reuse existing stage artifacts")
    sub.add_argument("--stage", default=None,
                     help="stop after this stage (remesh/sdf/param/optimize/"
                          "boundaries/polish/model)")
    sub.add_argument("--seed", type=int, default=None, help="override the seed")
    sub.add_argument("--out", default=None, help="override the output directory")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="partspace",
        description="Part-based statistical shape spaces: analysis and synthesis",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for cmd, help_text in (
        ("fit-sdf", "run the pipeline through SDF fitting"),
        ("init-param", "run through the initial cross-parametrization"),
        ("optimize", "run through correspondence and boundary optimization"),
        ("build-model", "run the full pipeline and write the model container"),
    ):
        sub = subs.add_parser(cmd, help=help_text)
        _add_pipeline_args(sub)

    syn = subs.add_parser("synthesize", help="solve a part graph into a mesh")
    syn.add_argument("--container", required=True)
    syn.add_argument("--graph", required=True, help="part graph text file")
    syn.add_argument("--constraints", default=None, help="JSON constraint list")
    syn.add_argument("--out", required=True, help="output OBJ/PLY path")

    rep = subs.add_parser("report", help="write human-readable diagnostics")
    rep.add_argument("--container", required=True)
    rep.add_argument("--out", required=True)

    srv = subs.add_parser("serve", help="run the synthesis solve service")
    srv.add_argument("--container", required=True)
    srv.add_argument("--address", default="127.0.0.1:8760")
    return parser


def _run_pipeline_command(args, upto):
    from .config import ConfigError, load_config
    from .stages import StageError, run_pipeline

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out_dir = args.out
    upto = args.stage or upto
    try:
        state = run_pipeline(config, resume=args.resume, upto=upto)
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_STAGE
    except ValueError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    print("completed stages up to %r; artifacts in %s" % (upto, state.out_dir))
    return EXIT_OK


def _run_synthesize(args):
    from ..mesh import save_obj, save_ply
    from ..partmodel.graph import PartGraph, PartGraphError
    from ..synth import Constraint, SynthesisError, assemble_problem, solve_synthesis
    from .container import ModelContainer

    try:
        container = ModelContainer.load(args.container)
        graph = PartGraph.from_text(Path(args.graph).read_text())
        constraints = []
        if args.constraints:
            raw = json.loads(Path(args.constraints).read_text())
            constraints = [Constraint.from_dict(d) for d in raw]
        problem = assemble_problem(
            graph, container.part_models, container.pair_models,
            container.site_corrs, constraints=constraints,
            sigma_bdr_fraction=container.meta.get("sigmaBdrFraction", 1 / 3),
            rules=container.rules,
        )
        result = solve_synthesis(problem)
    except (OSError, json.JSONDecodeError, PartGraphError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except SynthesisError as exc:
        print("synthesis failed: %s" % exc, file=sys.stderr)
        return EXIT_STAGE
    out = Path(args.out)
    if out.suffix.lower() == ".ply":
        save_ply(out, result.mesh)
    else:
        save_obj(out, result.mesh)
    print("wrote %s (energy %.6g, %d alternations)"
          % (out, result.energy, result.iterations))
    return EXIT_OK


def _run_report(args):
    from .container import ModelContainer
    from .report import export_report

    try:
        container = ModelContainer.load(args.container)
    except (OSError, ValueError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    export_report(container, args.out)
    print("report written to %s" % args.out)
    return EXIT_OK


def _run_serve(args):
    from .service import serve

    host, _, port = args.address.rpartition(":")
    try:
        serve(args.container, host=host or "127.0.0.1", port=int(port))
    except (OSError, ValueError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main(argv=None):
    args = make_parser().parse_args(argv)
    if args.command in _STAGE_OF_COMMAND:
        return _run_pipeline_command(args, _STAGE_OF_COMMAND[args.command])
    if args.command == "synthesize":
        return _run_synthesize(args)
    if args.command == "report":
        return _run_report(args)
    if args.command == "serve":
        return _run_serve(args)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
