"""Command-line entry: argument parsing, logging, config validation, experiment commands."""

from __future__ import annotations

import argparse
import logging
import sys
from importlib.metadata import PackageNotFoundError, version
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from electrosense.artifacts import (
    RunManifest,
    dumps,
    load_coeffs,
    load_msr,
    save_coeffs,
    save_gpt_matrix,
    save_image_csv,
    save_mask,
    save_msr,
    save_pgm,
    save_sparse_coeffs,
    save_trace,
    save_values,
    write_atomic,
)
from electrosense.config_loader import config, load_config, settings
from electrosense.constants import (
    BANNER_WIDTH,
    KEYBOARD_INTERRUPT_EXIT_CODE,
    LATTICE_MARGIN,
    LOG_BACKUP_COUNT,
    LOG_DATE_FORMAT,
    LOG_FORMAT,
    LOG_MAX_BYTES,
    MAX_GPT_ORDER,
    MAX_SCALE,
    MIN_MESH_NODES,
    MIN_SCALE,
    MIN_TABLE_DEPTH,
)
from electrosense.experiment import Experiment, shape_from_settings
from electrosense.features import (
    WaveletCoeffMatrix,
    band_energy_fraction,
    mask_error,
    nterm_curve,
    row_localization,
)
from electrosense.geometry import InvalidShapeError
from electrosense.imaging import (
    VARIANTS,
    BoundaryImage,
    image_by_diagonal,
    image_by_maximum,
    image_direct_msr,
    intensity_support,
    localization_score,
)
from electrosense.notifications import RunNotifier
from electrosense.recon import L1Problem, ReconResult, fista_l1, universal_mu
from electrosense.sensing import (
    FAR_FIELD,
    NEAR_FIELD,
    MsrMatrix,
    condition_number,
    singular_value_profile,
)
from electrosense.types import ScoreRecord, SparsityReport, StabilityReport

logger = logging.getLogger(__name__)

STABILITY_INDEX = 200

REQUIRED_SETTINGS = [
    "SHAPE",
    "CONDUCTIVITY",
    "MESH_NODES",
    "DOMAIN",
    "LAYOUT",
    "TRANSMITTERS_PER_AXIS",
    "STANDOFF",
    "FAR_FIELD_COUNT",
    "FAR_FIELD_RADIUS",
    "WAVELET",
    "SCALE",
    "LATTICE_DEPTH",
    "TABLE_DEPTH",
    "SMOOTHING_SAMPLES",
    "MASK_HALF_WIDTH",
    "GPT_ORDER",
    "NOISE_LEVEL",
    "SEED",
    "MU_SCALE",
    "MAX_ITERATIONS",
    "TOLERANCE",
    "IMAGING_VARIANT",
    "SCORE_QUANTILE",
    "SCORE_DISTANCE",
    "NTERM_FRACTIONS",
    "OUTPUT_DIR",
    "WORKERS",
    "APPRISE_URLS",
    "VERBOSE",
    "SHOW_FULL_ERRORS",
]


def package_version() -> str:
    try:
        return version("electrosense")
    except PackageNotFoundError:
        import electrosense

        return electrosense.__version__


def print_banner(command: str) -> None:
    inner = BANNER_WIDTH - 2
    print()
    print("╔" + "═" * inner + "╗")
    print("║" + f"  electrosense {command}".ljust(inner) + "║")
    print("║" + "  Wavelet imaging of conductivity inclusions".ljust(inner) + "║")
    print("╚" + "═" * inner + "╝")
    print()


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def validate_config() -> bool:
    errors: List[str] = []
    warnings: List[str] = []

    if config is None:
        print("\n✗ Configuration errors:")
        print("  - No configuration found; create config.py or pass --config PATH")
        return False

    for attr in REQUIRED_SETTINGS:
        if not hasattr(config, attr):
            errors.append(f"Missing required configuration: {attr}")

    if hasattr(config, "SHAPE"):
        if not isinstance(config.SHAPE, dict):
            errors.append("SHAPE must be a dictionary")
        else:
            try:
                shape_from_settings(config.SHAPE)
            except (InvalidShapeError, TypeError, ValueError) as e:
                errors.append(f"SHAPE is invalid: {e}")

    if hasattr(config, "CONDUCTIVITY"):
        k = config.CONDUCTIVITY
        if not _is_number(k):
            errors.append("CONDUCTIVITY must be a number")
        elif k <= 0 or k == 1:
            errors.append("CONDUCTIVITY must be > 0 and different from 1")

    if hasattr(config, "MESH_NODES"):
        m = config.MESH_NODES
        if not _is_int(m):
            errors.append("MESH_NODES must be an integer")
        elif m < MIN_MESH_NODES or m % 2:
            errors.append(f"MESH_NODES must be even and >= {MIN_MESH_NODES}")

    box_ok = False
    if hasattr(config, "DOMAIN"):
        box = config.DOMAIN
        if not isinstance(box, (list, tuple)) or len(box) != 4 or not all(_is_number(v) for v in box):
            errors.append("DOMAIN must be a list of four numbers (xmin, xmax, ymin, ymax)")
        elif not (box[0] < box[1] and box[2] < box[3]):
            errors.append("DOMAIN must satisfy xmin < xmax and ymin < ymax")
        else:
            box_ok = True

    if hasattr(config, "LAYOUT") and config.LAYOUT not in (NEAR_FIELD, FAR_FIELD):
        errors.append(f"LAYOUT must be {NEAR_FIELD!r} or {FAR_FIELD!r}")

    for name in ("TRANSMITTERS_PER_AXIS", "FAR_FIELD_COUNT", "MAX_ITERATIONS", "WORKERS"):
        if hasattr(config, name):
            value = getattr(config, name)
            if not _is_int(value):
                errors.append(f"{name} must be an integer")
            elif value < 1:
                errors.append(f"{name} must be >= 1")

    for name in ("STANDOFF", "FAR_FIELD_RADIUS", "SMOOTHING_SAMPLES", "TOLERANCE"):
        if hasattr(config, name):
            value = getattr(config, name)
            if not _is_number(value):
                errors.append(f"{name} must be a number")
            elif value <= 0:
                errors.append(f"{name} must be > 0")

    for name in ("NOISE_LEVEL", "MU_SCALE"):
        if hasattr(config, name):
            value = getattr(config, name)
            if not _is_number(value):
                errors.append(f"{name} must be a number")
            elif value < 0:
                errors.append(f"{name} must be >= 0")

    if hasattr(config, "WAVELET") and not isinstance(config.WAVELET, str):
        errors.append("WAVELET must be a string such as 'db6'")

    if hasattr(config, "SCALE"):
        if not _is_int(config.SCALE):
            errors.append("SCALE must be an integer")
        elif not MIN_SCALE <= config.SCALE <= MAX_SCALE:
            errors.append(f"SCALE must be in [{MIN_SCALE}, {MAX_SCALE}]")
        elif hasattr(config, "LATTICE_DEPTH"):
            if not _is_int(config.LATTICE_DEPTH):
                errors.append("LATTICE_DEPTH must be an integer")
            elif config.LATTICE_DEPTH < -config.SCALE + LATTICE_MARGIN:
                errors.append(f"LATTICE_DEPTH must be >= {-config.SCALE + LATTICE_MARGIN} at SCALE {config.SCALE}")

    if hasattr(config, "TABLE_DEPTH"):
        if not _is_int(config.TABLE_DEPTH):
            errors.append("TABLE_DEPTH must be an integer")
        elif config.TABLE_DEPTH < MIN_TABLE_DEPTH:
            errors.append(f"TABLE_DEPTH must be >= {MIN_TABLE_DEPTH}")

    if hasattr(config, "MASK_HALF_WIDTH"):
        if not _is_int(config.MASK_HALF_WIDTH):
            errors.append("MASK_HALF_WIDTH must be an integer")
        elif config.MASK_HALF_WIDTH < 0:
            errors.append("MASK_HALF_WIDTH must be >= 0")

    if hasattr(config, "GPT_ORDER"):
        if not _is_int(config.GPT_ORDER):
            errors.append("GPT_ORDER must be an integer")
        elif not 1 <= config.GPT_ORDER <= MAX_GPT_ORDER:
            errors.append(f"GPT_ORDER must be in [1, {MAX_GPT_ORDER}]")

    if hasattr(config, "SEED") and not _is_int(config.SEED):
        errors.append("SEED must be an integer")

    if hasattr(config, "IMAGING_VARIANT") and config.IMAGING_VARIANT not in VARIANTS:
        errors.append(f"IMAGING_VARIANT must be one of {', '.join(VARIANTS)}")

    if hasattr(config, "SCORE_QUANTILE"):
        q = config.SCORE_QUANTILE
        if not _is_number(q) or not 0 < q <= 0.5:
            errors.append("SCORE_QUANTILE must be a number in (0, 0.5]")
    if hasattr(config, "SCORE_DISTANCE"):
        d = config.SCORE_DISTANCE
        if not _is_number(d) or d < 1:
            errors.append("SCORE_DISTANCE must be a number >= 1 (pixels)")

    if hasattr(config, "NTERM_FRACTIONS"):
        fr = config.NTERM_FRACTIONS
        if not isinstance(fr, (list, tuple)) or not all(_is_number(v) and 0 < v <= 1 for v in fr):
            errors.append("NTERM_FRACTIONS must be a list of numbers in (0, 1]")

    if hasattr(config, "OUTPUT_DIR") and not isinstance(config.OUTPUT_DIR, str):
        errors.append("OUTPUT_DIR must be a string")

    if hasattr(config, "APPRISE_URLS") and not isinstance(config.APPRISE_URLS, list):
        errors.append("APPRISE_URLS must be a list")

    log_file = getattr(config, "LOG_FILE", None)
    if log_file is not None and not isinstance(log_file, str):
        errors.append("LOG_FILE must be a path string, or empty to log to stderr only")
    for name, minimum, check in (
        ("LOG_MAX_BYTES", 1, _is_number),
        ("LOG_BACKUP_COUNT", 0, _is_int),
    ):
        if not hasattr(config, name):
            continue
        value = getattr(config, name)
        if not check(value):
            errors.append(f"{name} must be {'an integer' if check is _is_int else 'a number'}")
        elif value < minimum:
            errors.append(f"{name} must be >= {minimum}")

    if box_ok and _is_number(getattr(config, "FAR_FIELD_RADIUS", None)):
        shape_spec = getattr(config, "SHAPE", {})
        center = shape_spec.get("center", (0.0, 0.0)) if isinstance(shape_spec, dict) else (0.0, 0.0)
        xmin, xmax, ymin, ymax = config.DOMAIN
        reach = max(abs(xmin - center[0]), abs(xmax - center[0]), abs(ymin - center[1]), abs(ymax - center[1]))
        if config.FAR_FIELD_RADIUS <= reach:
            warnings.append(
                "FAR_FIELD_RADIUS may place far-field transmitters inside DOMAIN; "
                "the diagnose command needs them outside"
            )

    if errors:
        print("\n✗ Configuration errors:")
        for error in errors:
            print(f"  - {error}")
        return False

    if warnings:
        print("\n⚠️  Configuration warnings:")
        for warning in warnings:
            print(f"  - {warning}")

    return True


def _log_handlers() -> List[logging.Handler]:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    log_file = (getattr(config, "LOG_FILE", None) or "").strip()
    if log_file:
        path = Path(log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(
            RotatingFileHandler(
                path,
                maxBytes=int(getattr(config, "LOG_MAX_BYTES", LOG_MAX_BYTES)),
                backupCount=int(getattr(config, "LOG_BACKUP_COUNT", LOG_BACKUP_COUNT)),
                encoding="utf-8",
            )
        )
    return handlers


def configure_logging(*, quiet: bool = False) -> None:
    """Route all records to stderr and, when LOG_FILE is set, a rotating file."""
    level = logging.WARNING if quiet else logging.DEBUG if config.VERBOSE else logging.INFO
    formatter = logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT)

    root = logging.getLogger()
    root.handlers.clear()
    root.setLevel(level)
    for handler in _log_handlers():
        handler.setFormatter(formatter)
        handler.setLevel(level)
        root.addHandler(handler)


def _reconstruct(exp: Experiment, V: MsrMatrix) -> Tuple[ReconResult, float, float]:
    op = exp.operator
    sigma = exp.noise.sigma(V)
    ns, nr = op.data_shape
    mu = universal_mu(sigma, ns, nr, exp.mask, scale=exp.mu_scale)
    problem = L1Problem.build(
        op,
        V,
        exp.mask,
        mu,
        max_iterations=int(config.MAX_ITERATIONS),
        tolerance=float(config.TOLERANCE),
    )
    with exp.stage("reconstruct"):
        result = fista_l1(problem)
    return result, mu, sigma


def _record(manifest: RunManifest, out: Path, *paths: Path) -> None:
    for path in paths:
        manifest.add_file(path, out)


def cmd_simulate(exp: Experiment, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    clean = exp.clean_msr
    noisy = exp.noisy_msr
    _record(
        manifest,
        out,
        save_msr(out / "msr_clean.csv", clean),
        save_msr(out / "msr_noisy.csv", noisy),
    )
    manifest.parameters.update({"layout": exp.system.layout, "noise_level": exp.noise.level})
    manifest.metrics.update({
        "shape": list(clean.shape),
        "msr_norm": float(np.linalg.norm(clean.values)),
        "sigma": exp.noise.sigma(clean),
    })


def cmd_features(exp: Experiment, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    X = exp.wavelet_matrix
    mask = exp.mask
    size = X.grid.size
    report: SparsityReport = {
        "scale": X.scale,
        "size": size,
        "nonzeros": X.nnz,
        "nonzero_fraction": X.nnz / float(size) ** 2,
        "nterm": nterm_curve(X, config.NTERM_FRACTIONS),
        "mask_half_width": mask.half_width,
        "mask_fraction": mask.fraction,
        "mask_bands": mask.bands,
        "mask_error": mask_error(X, mask),
        "band_energy": band_energy_fraction(X, mask),
        "row_localization": row_localization(X),
    }
    _record(
        manifest,
        out,
        save_coeffs(out / "coeffs_true.csv", X),
        save_gpt_matrix(out / "gpt.csv", exp.gpt),
        save_mask(out / "mask.csv", mask),
        write_atomic(out / "sparsity.json", dumps(report)),
    )
    manifest.parameters.update({"scale": X.scale, "gpt_order": exp.gpt.order})
    manifest.metrics.update(report)


def cmd_reconstruct(exp: Experiment, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    V = load_msr(args.msr) if args.msr else exp.noisy_msr
    result, mu, sigma = _reconstruct(exp, V)
    _record(
        manifest,
        out,
        save_sparse_coeffs(out / "coeffs_recon.csv", exp.grid, result.estimate),
        save_trace(out / "trace.csv", result.trace),
    )
    objectives = [row["objective"] for row in result.trace]
    manifest.parameters.update({
        "mu_scale": exp.mu_scale,
        "max_iterations": int(config.MAX_ITERATIONS),
        "tolerance": float(config.TOLERANCE),
        "input": "file" if args.msr else "simulated",
    })
    manifest.metrics.update({
        "mu": mu,
        "sigma": sigma,
        "residual": result.residual,
        "iterations": result.iterations,
        "converged": result.converged,
        "nonzeros": result.nonzeros,
        "objective": objectives[-1],
        "monotone": bool(np.all(np.diff(objectives) <= 0)),
    })


def _save_image(out: Path, img: BoundaryImage, name: str) -> List[Path]:
    return [save_pgm(out / f"image_{name}.pgm", img), save_image_csv(out / f"image_{name}.csv", img)]


def cmd_image(exp: Experiment, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    V: Optional[MsrMatrix] = None
    if args.coeffs:
        X = load_coeffs(args.coeffs, exp.grid)
        source = "coeffs"
    elif args.msr:
        V = load_msr(args.msr)
        result, mu, _ = _reconstruct(exp, V)
        X = WaveletCoeffMatrix(grid=exp.grid, matrix=result.estimate,
                               active=np.asarray(result.estimate.getnnz(axis=1) > 0))
        manifest.metrics.update({
            "mu": mu,
            "residual": result.residual,
            "iterations": result.iterations,
            "converged": result.converged,
        })
        source = "msr"
    else:
        X = exp.wavelet_matrix
        source = "true"

    images: Dict[str, BoundaryImage] = {
        "diagonal": image_by_diagonal(X),
        "maximum": image_by_maximum(X, exp.variant),
    }
    if exp.system.layout == NEAR_FIELD and not args.coeffs:
        images["direct"] = image_direct_msr(V if V is not None else exp.noisy_msr, exp.system)

    scores: List[ScoreRecord] = []
    support: Dict[str, int] = {}
    q = float(config.SCORE_QUANTILE)
    d = float(config.SCORE_DISTANCE)
    unit = exp.grid.pixel_size
    for name, img in images.items():
        _record(manifest, out, *_save_image(out, img, name))
        scores.append(localization_score(img, exp.shape, q, d, unit).to_record(img.method))
        support[name] = intensity_support(img)
        logger.info("%s image %sx%s: hit fraction %.3f", name, *img.shape, scores[-1]["hit_fraction"])

    manifest.parameters.update({"source": source, "variant": exp.variant, "score_unit": unit})
    manifest.metrics.update({
        "scores": scores,
        "intensity_support": support,
        "image_shapes": {name: list(img.shape) for name, img in images.items()},
    })


def cmd_diagnose(exp: Experiment, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    far = exp.wavelet_operator(exp.far_system)
    near = exp.wavelet_operator(exp.near_system)
    far_sv = singular_value_profile(far)
    near_sv = singular_value_profile(near)
    far_rel = far_sv / far_sv[0]
    near_rel = near_sv / near_sv[0]
    index = min(STABILITY_INDEX, far_rel.size - 1, near_rel.size - 1)
    far_value = float(far_rel[index])
    near_value = float(near_rel[index])
    report: StabilityReport = {
        "index": int(index),
        "far_relative": far_value,
        "near_relative": near_value,
        "ratio": near_value / far_value if far_value > 0 else float("inf"),
        "far_condition": condition_number(far),
        "near_condition": condition_number(near),
        "near_more_stable": near_value > far_value,
    }
    if not report["near_more_stable"]:
        logger.warning("Near-field layout is not more stable than far-field at index %s", index)
    _record(
        manifest,
        out,
        save_values(out / "singular_values_far.txt", far_rel),
        save_values(out / "singular_values_near.txt", near_rel),
        write_atomic(out / "stability.json", dumps(report)),
    )
    manifest.parameters.update({
        "far_transmitters": exp.far_system.shape[0],
        "near_transmitters": exp.near_system.shape[0],
    })
    manifest.metrics.update(report)


COMMANDS: Dict[str, Callable[[Experiment, argparse.Namespace, Path, RunManifest], None]] = {
    "simulate": cmd_simulate,
    "features": cmd_features,
    "reconstruct": cmd_reconstruct,
    "image": cmd_image,
    "diagnose": cmd_diagnose,
}


def run_command(args: argparse.Namespace, notifier: RunNotifier) -> int:
    exp = Experiment(config, seed=args.seed, mu_scale=args.mu_scale, variant=args.variant)
    out = Path(args.out or config.OUTPUT_DIR)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command=args.command,
        version=package_version(),
        config=settings(config),
        seed=exp.seed,
    )
    COMMANDS[args.command](exp, args, out, manifest)
    manifest.timings = dict(exp.timings)
    manifest_path = manifest.write(out)
    if not args.quiet:
        print(f"✓ {args.command} finished: {len(manifest.files)} file(s) in {out}")
        print(f"  Manifest: {manifest_path}")
    notifier.run_completed(args.command, str(out), manifest.metrics)
    return 0


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="Experiment configuration module.")
    common.add_argument("--seed", type=int, help="Noise seed (overrides config.SEED).")
    common.add_argument(
        "--mu-scale", type=float, help="Universal-threshold constant (overrides config.MU_SCALE)."
    )
    common.add_argument("--out", metavar="DIR", help="Output directory (overrides config.OUTPUT_DIR).")
    common.add_argument(
        "--variant",
        choices=VARIANTS,
        help="Imaging-by-maximum write index (overrides config.IMAGING_VARIANT).",
    )
    common.add_argument(
        "--verbose",
        action="store_true",
        help="Enable verbose logging (overrides config.VERBOSE).",
    )
    common.add_argument(
        "--quiet",
        action="store_true",
        help="Less console output; log warnings and errors only (unless --verbose).",
    )
    common.add_argument(
        "--no-notify",
        action="store_true",
        help="Do not send Apprise notifications for this run.",
    )
    return common


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Simulate electro-sensing data, reconstruct wavelet features of the "
        "inclusion and image its boundary.",
    )
    parser.add_argument("--version", action="store_true", help="Show version and exit.")
    common = _common_options()
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.add_parser("simulate", parents=[common], help="Simulate clean and noisy MSR data.")
    sub.add_parser(
        "features", parents=[common], help="Assemble wavelet and GPT feature matrices and the mask."
    )
    rec = sub.add_parser(
        "reconstruct", parents=[common], help="Estimate wavelet coefficients from MSR data."
    )
    rec.add_argument("--msr", metavar="PATH", help="MSR CSV (default: simulate from the config).")
    img = sub.add_parser("image", parents=[common], help="Image the boundary from coefficients.")
    source = img.add_mutually_exclusive_group()
    source.add_argument("--coeffs", metavar="PATH", help="Coefficient CSV to image.")
    source.add_argument("--msr", metavar="PATH", help="MSR CSV to reconstruct and image.")
    sub.add_parser(
        "diagnose", parents=[common], help="Compare far- and near-field singular value profiles."
    )
    return parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    global config
    args = _parse_args(argv)

    if getattr(args, "version", False):
        print(f"electrosense {package_version()}")
        return 0

    if not getattr(args, "command", None):
        print("✗ No command given. Run with --help to list commands.")
        return 1

    if args.config:
        try:
            config = load_config(path=args.config)
        except (ImportError, FileNotFoundError) as e:
            print(f"\n✗ {e}")
            return 1

    if not validate_config():
        print("\nPlease fix the configuration errors and try again.")
        return 1

    if args.verbose:
        config.VERBOSE = True
    if args.mu_scale is not None and args.mu_scale < 0:
        print("\n✗ --mu-scale must be >= 0")
        return 1
    quiet_log = args.quiet and not args.verbose

    configure_logging(quiet=quiet_log)
    if not args.quiet:
        print_banner(args.command)

    notifier = RunNotifier(getattr(config, "APPRISE_URLS", []), enabled=not args.no_notify)
    try:
        return run_command(args, notifier)
    except KeyboardInterrupt:
        print("\n\nInterrupted by user. Exiting...")
        return KEYBOARD_INTERRUPT_EXIT_CODE
    except Exception as e:
        logger.critical("%s failed: %s", args.command, e,
                        exc_info=bool(getattr(config, "SHOW_FULL_ERRORS", False)))
        print(f"\n✗ {args.command} failed: {e}")
        notifier.run_failed(args.command, e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
