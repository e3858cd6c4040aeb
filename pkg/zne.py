"""Command line for zero-noise extrapolation runs, sweeps and the HTTP service."""
import argparse
import logging
import sys

from folding import DEFAULT_GAMMA, FOLD_METHODS
from runner import (
    DEFAULT_REPS,
    DEFAULT_SHOTS,
    DEFAULT_WORKERS,
    ENGINES,
    OBSERVABLES,
    RUN_METHODS,
    RunConfig,
    run,
    sweep,
    write_outputs,
)
from utils.exceptions import StageError, ZNEError
from utils.specs import CIRCUIT_FAMILIES, parse_methods, parse_qubit_range, parse_scales


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--noise-model", required=True, help="Calibration file (.csv or .json).")
    parser.add_argument("--scales", type=parse_scales, default=[1.0, 1.5, 2.0, 2.5],
                        help="Comma-separated scale factors λ (default: 1,1.5,2,2.5).")
    parser.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help="Noise-aware threshold coefficient.")
    parser.add_argument("--shots", type=int, default=DEFAULT_SHOTS)
    parser.add_argument("--reps", type=int, default=DEFAULT_REPS)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--engine", choices=ENGINES, default="auto")
    parser.add_argument("--no-map", action="store_true", help="Treat the circuit as already mapped to physical qubits.")
    parser.add_argument("--append-folds", action="store_true", help="Put noise-aware folds at the end of the circuit.")
    parser.add_argument("--no-readout", action="store_true", help="Disable readout error.")
    parser.add_argument("--observable", choices=OBSERVABLES, default="success")
    parser.add_argument("--extrapolations", type=parse_methods, default=["linear", "richardson"],
                        help="Comma-separated fits: linear, richardson, poly<d>.")
    parser.add_argument("--per-rep-fits", action="store_true")
    parser.add_argument("--workers", type=int, default=DEFAULT_WORKERS)
    parser.add_argument("--out", default="results.csv", help="CSV path; a .dat gnuplot file is written next to it.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zne", description="Zero-noise extrapolation with noise-aware folding.")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="Run one experiment.")
    run_parser.add_argument("--circuit", required=True, help="Circuit file, cnot-chain:N or bv:SECRET.")
    run_parser.add_argument("--fold", choices=RUN_METHODS, default="noise-aware")
    run_parser.add_argument("--target", help="Success bitstring (defaults to the ideal output).")
    run_parser.add_argument("--dump-matrix", help="Write the λ=1 error-rate matrix JSON here.")
    _add_common(run_parser)

    sweep_parser = commands.add_parser("sweep", help="Run every method over a range of qubit counts.")
    sweep_parser.add_argument("--qubits", type=parse_qubit_range, required=True, help="Qubit counts, e.g. 2..8.")
    sweep_parser.add_argument("--family", choices=CIRCUIT_FAMILIES, default="cnot-chain")
    sweep_parser.add_argument("--methods", type=parse_methods, default=["unmitigated", *FOLD_METHODS],
                              help="Comma-separated methods.")
    _add_common(sweep_parser)

    serve_parser = commands.add_parser("serve", help="Start the HTTP service.")
    serve_parser.add_argument("--host", default="0.0.0.0")
    serve_parser.add_argument("--port", type=int, default=7860)
    return parser


def _config(args: argparse.Namespace, **overrides) -> RunConfig:
    return RunConfig(
        noise_model=args.noise_model,
        scales=args.scales,
        gamma=args.gamma,
        shots=args.shots,
        reps=args.reps,
        seed=args.seed,
        engine=args.engine,
        map_circuit=not args.no_map,
        append_folds=args.append_folds,
        readout=not args.no_readout,
        observable=args.observable,
        extrapolations=args.extrapolations,
        per_rep_fits=args.per_rep_fits,
        workers=args.workers,
        **overrides,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    if args.command == "serve":
        import uvicorn
        uvicorn.run("app:app", host=args.host, port=args.port)
        return 0

    try:
        if args.command == "run":
            config = _config(args, circuit=args.circuit, method=args.fold,
                             target=args.target, dump_matrix=args.dump_matrix)
            results = [run(config)]
        else:
            config = _config(args, circuit=args.family)
            rows = sweep(config, args.qubits, args.methods, family=args.family)
            failures = [r for r in rows if r.error]
            for row in failures:
                print(f"warning: {row.method} at {row.qubits} qubits failed: {row.error}", file=sys.stderr)
            results = [r.result for r in rows if r.result is not None]
        write_outputs(results, args.out)
    except ValueError as e:
        parser.error(str(e))
    except StageError as e:
        print(f"error [{e.stage}]: {e.cause}", file=sys.stderr)
        return 1
    except ZNEError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    for result in results:
        print(
            f"{result.method} q={result.qubits} unmitigated={result.unmitigated} "
            f"linear={result.intercept('linear')} richardson={result.intercept('richardson')}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
