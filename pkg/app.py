"""
Command-line entry point.

    python app.py simulate  configs/delayed_logistic.toml --T 20 --out runs/sim
    python app.py analyze   configs/delayed_logistic.toml --k-mode zero-section --out runs/analysis
    python app.py check     configs/cooperative.toml --suite monotone --seed 7 --out runs/check
    python app.py spectrum  configs/heat_decay.toml --out runs/spectrum

Exit codes: 0 success, 1 failed property, 2 configuration error,
3 numerical blowup, 4 zero-section requested but f(w, x, 0, 0) != 0.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from pfde.config import build_initial_segment, build_problem, load_settings, read_config
from pfde.errors import (
    CatalogError,
    ConfigError,
    FailedWitnessError,
    NumericalBlowupError,
    PFDEError,
    ShapeMismatchError,
    ZeroSectionError,
)
from pfde.harness import SUITES, run_suite
from pfde.reports import (
    RunManifest,
    build_analysis_report,
    check_frame,
    dump_state,
    load_state,
    matrix_frame,
    spectrum_frame,
    trajectory_frame,
    write_analysis_report,
    write_csv,
)
from pfde.solver import Integrator
from pfde.spectrum import KSampler, SamplerMode, SpectrumEstimator, SpectrumParams
from pfde.structure import DEFAULT_TOLERANCE, analyze_persistence, empirical_persistence

# Load environment variables from .env file
load_dotenv()

EXIT_OK = 0
EXIT_FAILED_PROPERTY = 1
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_ZERO_SECTION = 4


def _parse_times(raw: Optional[str]) -> Optional[list[float]]:
    if not raw:
        return None
    try:
        return [float(t) for t in raw.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--snapshots expects comma-separated times, got '{raw}'") from None


def _output_dir(raw) -> Path:
    out = Path(raw)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sampler(problem, mode: str, params: SpectrumParams, seed_segment) -> KSampler:
    if SamplerMode(mode) is SamplerMode.ZERO_SECTION:
        return KSampler.zero_section(problem, params.samples_per_dim)
    return KSampler.omega_limit(problem, seed_segment, params.transient, params.omega_samples,
                                params.omega_spacing)


def _spectrum_params(args) -> SpectrumParams:
    return SpectrumParams(horizon=args.horizon, window=args.window, norm=args.norm,
                          samples_per_dim=args.samples_per_dim, transient=args.transient)


# **************************************** Commands ********************************************

def cmd_simulate(args) -> int:
    config, raw = read_config(args.config)
    problem = build_problem(config)
    out = _output_dir(args.out)
    manifest = RunManifest.for_run("simulate", args.config, raw, out, seed=args.seed,
                                   T=args.T, snapshots=args.snapshots, restart=args.restart)
    digest = manifest.digest()
    manifest.write(out)

    omega, phi, offset = problem.driver, build_initial_segment(config, problem), 0.0
    if args.restart:
        omega, phi, step_index = load_state(args.restart, problem)
        offset = step_index * problem.step
        logging.info(f"[CLI] Restarting from {args.restart} at t={offset:g}")

    times = _parse_times(args.snapshots)
    if times is None:
        times = sorted(set(np.arange(0.0, args.T, 1.0).tolist()) | {args.T})
    integrator = Integrator(problem)
    try:
        trajectory = integrator(omega, phi, args.T, snapshot_times=times, progress=args.progress)
    except NumericalBlowupError as err:
        partial = getattr(err, "trajectory", None)
        if partial is not None:
            write_csv(out / "trajectory.csv", trajectory_frame(partial, time_offset=offset), digest)
        (out / "blowup.txt").write_text(f"manifest={digest}\nlast_time={err.last_time + offset!r}\n",
                                        encoding="utf-8")
        raise

    write_csv(out / "trajectory.csv", trajectory_frame(trajectory, times, time_offset=offset), digest)
    if args.dump:
        dump_state(out / "state.bin", problem, trajectory.state)
    return EXIT_OK


def cmd_analyze(args) -> int:
    config, raw = read_config(args.config)
    problem = build_problem(config)
    out = _output_dir(args.out)
    params = _spectrum_params(args)
    manifest = RunManifest.for_run("analyze", args.config, raw, out, seed=args.seed, k_mode=args.k_mode,
                                   tol=args.tol, horizon=args.horizon, window=args.window,
                                   empirical_trials=args.empirical_trials)
    digest = manifest.digest()
    manifest.write(out)

    sampler = _sampler(problem, args.k_mode, params, build_initial_segment(config, problem))
    result = analyze_persistence(problem, sampler, params, tol=args.tol, threads=args.threads)

    empirical = None
    if args.empirical_trials:
        empirical = empirical_persistence(problem, result.structure, result.verdict, args.empirical_trials,
                                          args.empirical_T, seed=args.seed)

    write_csv(out / "matrix.csv", matrix_frame(result), digest)
    write_csv(out / "spectrum.csv", spectrum_frame(result.spectra), digest)
    write_analysis_report(out / "report.json", build_analysis_report(result, digest, empirical))
    verdict = result.verdict
    print(f"uniformly_persistent={verdict.uniformly_persistent} "
          f"strictly_persistent_at_zero={verdict.strictly_persistent_at_zero} "
          f"inconclusive={verdict.inconclusive_reason or 'no'}")
    return EXIT_OK


def cmd_check(args) -> int:
    config, raw = read_config(args.config)
    problem = build_problem(config)
    out = _output_dir(args.out)
    manifest = RunManifest.for_run("check", args.config, raw, out, seed=args.seed, suite=args.suite,
                                   count=args.count)
    digest = manifest.digest()
    manifest.write(out)

    results = run_suite(problem, args.suite, seed=args.seed, threads=args.threads, count=args.count)
    write_csv(out / "check.csv", check_frame(results), digest)
    failed = [r for r in results if not r.passed]
    for r in failed:
        logging.error(f"[CLI] {r.check} case {r.case_id} failed: margin={r.worst_margin:.3g}"
                      + (f" at {r.witness}" if r.witness else ""))
    print(f"{args.suite}: {len(results) - len(failed)}/{len(results)} passed")
    return EXIT_FAILED_PROPERTY if failed else EXIT_OK


def cmd_spectrum(args) -> int:
    config, raw = read_config(args.config)
    problem = build_problem(config)
    out = _output_dir(args.out)
    params = _spectrum_params(args)
    species = [int(s) - 1 for s in args.species.split(",")] if args.species else list(range(problem.n))
    if any(s < 0 or s >= problem.n for s in species):
        raise ConfigError(f"--species must name species between 1 and {problem.n}")
    manifest = RunManifest.for_run("spectrum", args.config, raw, out, seed=args.seed, k_mode=args.k_mode,
                                   species=args.species, horizon=args.horizon, window=args.window)
    digest = manifest.digest()
    manifest.write(out)

    sampler = _sampler(problem, args.k_mode, params, build_initial_segment(config, problem))
    estimate = SpectrumEstimator(problem, params, threads=args.threads)(sampler, species)
    write_csv(out / "spectrum.csv", spectrum_frame([estimate]), digest)
    print(f"principal spectrum of species {[s + 1 for s in species]}: "
          f"[{estimate.lower:.6g}, {estimate.upper:.6g}]")
    return EXIT_OK


# **************************************** Parser **********************************************

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfde", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--threads", type=int, default=None, help="Worker cap (default PFDE_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="TOML problem configuration")
        p.add_argument("--out", default="out", help="Output directory")
        p.add_argument("--seed", type=int, default=0)

    def spectral(p):
        p.add_argument("--k-mode", choices=[m.value for m in SamplerMode], default="zero-section")
        p.add_argument("--horizon", type=float, default=20.0, help="Integration time per sample")
        p.add_argument("--window", type=float, default=2.0, help="Final regression window")
        p.add_argument("--norm", choices=["segment", "profile"], default="segment")
        p.add_argument("--samples-per-dim", type=int, default=16)
        p.add_argument("--transient", type=float, default=50.0, help="T_skip for omega-limit sampling")

    simulate = sub.add_parser("simulate", help="Integrate the system and export snapshots")
    common(simulate)
    simulate.add_argument("--T", type=float, required=True, help="Final time (multiple of 1/M)")
    simulate.add_argument("--snapshots", default=None, help="Comma-separated snapshot times")
    simulate.add_argument("--restart", default=None, help="Resume from a state dump")
    simulate.add_argument("--dump", action="store_true", help="Write state.bin at the final time")
    simulate.add_argument("--progress", action="store_true")
    simulate.set_defaults(handler=cmd_simulate)

    analyze = sub.add_parser("analyze", help="Block structure, principal spectra and persistence verdict")
    common(analyze)
    spectral(analyze)
    analyze.add_argument("--tol", type=float, default=DEFAULT_TOLERANCE)
    analyze.add_argument("--empirical-trials", type=int, default=0)
    analyze.add_argument("--empirical-T", type=float, default=60.0)
    analyze.set_defaults(handler=cmd_analyze)

    check = sub.add_parser("check", help="Run a numerical property suite")
    common(check)
    check.add_argument("--suite", choices=SUITES, required=True)
    check.add_argument("--count", type=int, default=None, help="Number of random cases")
    check.set_defaults(handler=cmd_check)

    spectrum = sub.add_parser("spectrum", help="Principal spectrum of a group of species")
    common(spectrum)
    spectral(spectrum)
    spectrum.add_argument("--species", default=None, help="Comma-separated 1-based species (default all)")
    spectrum.set_defaults(handler=cmd_spectrum)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings()
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=settings.log_level.upper(), format="%(asctime)s %(levelname)s %(message)s")
    if args.threads is None:
        args.threads = settings.threads

    try:
        return args.handler(args)
    except (ConfigError, CatalogError, ShapeMismatchError, ValidationError) as e:
        logging.error(f"[CLI] Configuration error: {e}")
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalBlowupError as e:
        logging.error(f"[CLI] Numerical blowup: {e}")
        print(f"numerical blowup after t={e.last_time:g}: {e}", file=sys.stderr)
        return EXIT_BLOWUP
    except ZeroSectionError as e:
        logging.error(f"[CLI] {e}")
        print(f"zero section unavailable: {e}", file=sys.stderr)
        return EXIT_ZERO_SECTION
    except FailedWitnessError as e:
        logging.error(f"[CLI] {e}")
        print(f"failed witness: {e}", file=sys.stderr)
        return EXIT_FAILED_PROPERTY
    except PFDEError as e:
        logging.error(f"[CLI] {e.code}: {e}")
        print(f"{e.code}: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
