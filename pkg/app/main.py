import argparse
import logging
import sys

from app.config import EXIT_CONVERGENCE, EXIT_OK, EXIT_VALIDATION, EXIT_VERIFICATION
from app.components.runner import RunConfig, RunMode, run
from app.components.stamp import banner
from app.log import configure_logging
from app.utils.errors import (
    CollisionError,
    GaudinError,
    NoConvergenceError,
    SingularJacobianError,
    SpecParseError,
    VerificationError,
)
from app.utils.solver import ContinuationFamily

logger = logging.getLogger(__name__)


def _key_value(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _occupation(text):
    try:
        return tuple(int(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"occupation must be root indices, got {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gaudinlens",
        description="Solve Richardson-Gaudin and Dicke Bethe equations by xi-continuation and check them by exact diagonalization.",
    )
    parser.add_argument("--version", action="version", version=banner())
    parser.add_argument("--mode", required=True, choices=[m.value for m in RunMode])
    parser.add_argument("--spec", required=True, help="model spec file (verify: results file to re-check)")
    parser.add_argument("--out", help="result file path")
    parser.add_argument("--format", dest="fmt", choices=["structured", "tabular"], default="structured")
    parser.add_argument("--xi-steps", type=int, help="fixed number of xi steps (max step 1/xi-steps)")
    parser.add_argument("--newton-tol", type=float, default=1e-10)
    parser.add_argument("--boson-cutoff", type=int)
    parser.add_argument("--branch", help="branch id to keep, e.g. tda-0-1")
    parser.add_argument("--occupation", type=_occupation, help="TDA root indices, e.g. '0 0' or 0,2")
    parser.add_argument("--seed", type=int, default=0, help="seed for the degenerate-root lift")
    parser.add_argument("--parallel-branches", action="store_true")
    parser.add_argument("--family", choices=[f.value for f in ContinuationFamily], default=ContinuationFamily.ALL_COPIES_DEFORMED.value)
    parser.add_argument("--set", dest="overrides", type=_key_value, action="append", default=[], metavar="KEY=VALUE",
                        help="override g, G, hbar_omega, N, cutoff, newton_tol, initial_step, min_step, max_step, omega0")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad flags; 2 is reserved for non-convergence here
        return EXIT_VALIDATION if e.code else EXIT_OK
    configure_logging()
    try:
        config = RunConfig(
            mode=args.mode,
            spec_path=args.spec,
            out=args.out,
            fmt=args.fmt,
            overrides=dict(args.overrides),
            xi_steps=args.xi_steps,
            newton_tol=args.newton_tol,
            boson_cutoff=args.boson_cutoff,
            branch=args.branch,
            occupation=args.occupation,
            seed=args.seed,
            parallel_branches=args.parallel_branches,
            family=args.family,
        )
        return run(config)
    except VerificationError as e:
        logger.error("Verification failed: %s", e)
        return EXIT_VERIFICATION
    except (NoConvergenceError, CollisionError, SingularJacobianError) as e:
        logger.error("No convergence: %s", e)
        return EXIT_CONVERGENCE
    except (SpecParseError, GaudinError, FileNotFoundError, ValueError) as e:
        logger.error("Invalid input: %s", e)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
