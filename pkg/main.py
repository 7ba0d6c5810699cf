import argparse
import logging
import sys

from engine.errors import (AssemblyError, ConfigurationError, GeometryError, NumericalFailure,
                           OutputError)
from engine.steppers import SCHEMES
from experiments.config import EXPERIMENTS, build_config, load_config_file
from experiments.poisson import run_poisson_virus
from experiments.reaction_diffusion import (run_rd_peanut_convergence, run_rd_peanut_efficiency,
                                            run_rd_peanut_stability)
from experiments.stefan import run_stefan_square

log = logging.getLogger("main")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

RUNNERS = {
    "poisson_virus": run_poisson_virus,
    "rd_peanut_convergence": run_rd_peanut_convergence,
    "rd_peanut_stability": run_rd_peanut_stability,
    "rd_peanut_efficiency": run_rd_peanut_efficiency,
    "stefan_square": run_stefan_square,
}

# flag dest -> config key
FLAG_KEYS = {
    "n": "n",
    "dt": "dt",
    "t_end": "t_end",
    "scheme": "scheme",
    "krylov_tol": "krylov_tol",
    "cg_tol": "cg_tol",
    "out": "out_dir",
    "dump_every": "dump_every",
    "sweep": "sweep",
    "workers": "workers",
}


def build_parser():
    parser = argparse.ArgumentParser(
        description="Reaction-diffusion on irregular and moving domains with exponential integrators")
    parser.add_argument("--log-level", default="INFO",
                        choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value file; flags override it")
        p.add_argument("--n", type=int, help="grid nodes per axis")
        p.add_argument("--dt", type=float, help="time step")
        p.add_argument("--t-end", type=float, help="final time")
        p.add_argument("--scheme", choices=SCHEMES)
        p.add_argument("--krylov-tol", type=float)
        p.add_argument("--cg-tol", type=float)
        p.add_argument("--out", help="output directory")
        p.add_argument("--dump-every", type=int, help="steps between field dumps")
        p.add_argument("--sweep", help="comma-separated grid sizes")
        p.add_argument("--workers", type=int, help="threads for sweeps")
    return parser


def configure_logging(level):
    logging.basicConfig(level=getattr(logging, level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def run(argv=None):
    """Parse arguments, run one experiment, return the exit code"""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        file_values = load_config_file(args.config) if args.config else {}
        overrides = {key: getattr(args, dest) for dest, key in FLAG_KEYS.items()}
        cfg = build_config(args.experiment, file_values, overrides)
        log.info("Running %s", cfg.experiment)
        RUNNERS[cfg.experiment](cfg)
    except ConfigurationError as e:
        log.error("Configuration error: %s", e)
        return EXIT_CONFIG
    except (NumericalFailure, GeometryError, AssemblyError) as e:
        log.error("Numerical failure: %s", e)
        return EXIT_NUMERICAL
    except (OutputError, OSError) as e:
        log.error("I/O error: %s", e)
        return EXIT_IO
    log.info("Finished %s", cfg.experiment)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(run())
