"""Command-line entry point.

Subcommands: scan, generate, simulate, sweep, stats, batches. Logging goes
to stderr; machine-readable outputs go to files (or stdout where noted), so
stdout stays pipeable. Exit codes: 0 success, 1 runtime/I-O failure,
2 usage/argument error.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click

from .codecs import decode_file, encode_image
from .dataset import (
    SWEEP_AXES,
    DatasetManifest,
    ScanConfig,
    assemble_pretext_batches,
    assign_splits,
    generate,
    profile_for_axis,
    scan_and_filter,
    stats,
    sweep,
)
from .errors import CropforgeError
from .lens import DEFAULT_VIGNETTE_PARAMS, AberrationProfile

log = logging.getLogger("cropforge")


def _setup_logging() -> None:
    if not logging.getLogger().handlers:
        logging.basicConfig(
            stream=sys.stderr,
            level=logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )


def _cli_errors(fn):
    """Map engine errors to exit codes: usage-shaped -> 2, runtime -> 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValueError as exc:
            raise click.UsageError(str(exc)) from exc
        except (CropforgeError, OSError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _parse_triple(text: str, name: str) -> tuple[float, float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise click.UsageError(f"{name} needs three comma-separated numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise click.UsageError(f"{name}: {exc}") from exc


_PROFILE_DEFAULTS = {
    "tca_r": 1.0,
    "tca_g": 1.0,
    "tca_b": 1.0,
    "vignette": 0.0,
    "vignette_params": None,
    "distortion": 0.0,
    "saturation": 1.0,
}


def profile_options(fn):
    fn = click.option("--profile-json", type=click.Path(exists=True, dir_okay=False),
                      default=None,
                      help="Load the aberration profile from a JSON file; "
                           "explicitly given flags override its fields.")(fn)
    fn = click.option("--saturation", type=float, default=1.0, show_default=True,
                      help="Chroma scale about luma (1 = identity, 0 = grayscale).")(fn)
    fn = click.option("--distortion", type=float, default=0.0, show_default=True,
                      help="Radial distortion coefficient k1.")(fn)
    fn = click.option("--vignette-params", type=str, default=None, metavar="A,B,C",
                      help=f"Gain polynomial coefficients "
                           f"[default: {DEFAULT_VIGNETTE_PARAMS[0]},"
                           f"{DEFAULT_VIGNETTE_PARAMS[1]},{DEFAULT_VIGNETTE_PARAMS[2]}]")(fn)
    fn = click.option("--vignette", type=float, default=0.0, show_default=True,
                      help="Vignetting strength t (1 = fully applied).")(fn)
    fn = click.option("--tca-b", type=float, default=1.0, show_default=True,
                      help="Blue-channel magnification.")(fn)
    fn = click.option("--tca-g", type=float, default=1.0, show_default=True,
                      help="Green-channel magnification.")(fn)
    fn = click.option("--tca-r", type=float, default=1.0, show_default=True,
                      help="Red-channel magnification.")(fn)
    return fn


def build_profile(ctx: click.Context, params: dict) -> AberrationProfile:
    """Resolve profile JSON + flags (explicit flags win) into a profile."""
    base = {}
    if params.get("profile_json"):
        with open(params["profile_json"], encoding="utf-8") as fh:
            base = json.load(fh)
    from click.core import ParameterSource

    def explicit(name: str) -> bool:
        return ctx.get_parameter_source(name) == ParameterSource.COMMANDLINE

    tca = list(base.get("tca_scale", (1.0, 1.0, 1.0)))
    for i, flag in enumerate(("tca_r", "tca_g", "tca_b")):
        if explicit(flag):
            tca[i] = params[flag]
    strength = params["vignette"] if explicit("vignette") else base.get("vignette_strength", 0.0)
    if explicit("vignette_params") and params["vignette_params"] is not None:
        vparams = _parse_triple(params["vignette_params"], "--vignette-params")
    else:
        vparams = tuple(base.get("vignette_params", DEFAULT_VIGNETTE_PARAMS))
    k1 = params["distortion"] if explicit("distortion") else base.get("distortion_k1", 0.0)
    sat = params["saturation"] if explicit("saturation") else base.get("saturation", 1.0)
    return AberrationProfile(
        tca_scale=tuple(tca),
        vignette_strength=strength,
        vignette_params=vparams,
        distortion_k1=k1,
        saturation=sat,
    )


def _seed_option(fn):
    return click.option(
        "--seed", type=int, default=0, show_default=True, envvar="CROPFORGE_SEED",
        help="Master seed (env: CROPFORGE_SEED).",
    )(fn)


def _log_config(name: str, config: dict) -> None:
    payload = json.dumps(config, sort_keys=True, default=str)
    import hashlib

    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
    log.info("%s config %s digest %s", name, payload, digest)


@click.group()
@click.version_option(package_name="cropforge", prog_name="cropforge")
def main() -> None:
    """Deterministic crop-detection dataset engine and lens simulator."""
    _setup_logging()


@main.command()
@click.argument("input_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the manifest here instead of stdout.")
@click.option("--aspect-tol", type=float, default=0.002, show_default=True,
              help="Allowed deviation from the 1.5 aspect ratio.")
@_seed_option
@_cli_errors
def scan(input_dir: str, out: str | None, aspect_tol: float, seed: int) -> None:
    """Scan a corpus directory into a split-assigned dataset manifest."""
    config = ScanConfig(aspect_tolerance=aspect_tol)
    _log_config("scan", {"input_dir": input_dir, "seed": seed, **config.to_dict()})
    manifest = assign_splits(scan_and_filter(input_dir, seed, config))
    text = manifest.to_jsonl()
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")
        log.info("wrote manifest with %d entries to %s", len(manifest.entries), out)


def _resolve_manifest(manifest_path: str | None, input_dir: str | None,
                      seed: int, aspect_tol: float) -> DatasetManifest:
    if (manifest_path is None) == (input_dir is None):
        raise click.UsageError("exactly one of --manifest or --input is required")
    if manifest_path is not None:
        return DatasetManifest.load(manifest_path)
    config = ScanConfig(aspect_tolerance=aspect_tol)
    return assign_splits(scan_and_filter(input_dir, seed, config))


@main.command(name="generate")
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Use an existing manifest instead of scanning.")
@click.option("--input", "input_dir", type=click.Path(exists=True, file_okay=False),
              default=None, help="Corpus directory to scan and generate from.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--bit-depth", type=click.Choice(["8", "16"]), default="8",
              show_default=True)
@click.option("--aspect-tol", type=float, default=0.002, show_default=True)
@click.option("--resume", is_flag=True, help="Skip records whose meta.json exists.")
@click.option("--debug-provenance", is_flag=True,
              help="Record source dimensions and resize chains in the meta files.")
@profile_options
@_seed_option
@click.pass_context
@_cli_errors
def generate_cmd(ctx: click.Context, out_dir: str, manifest_path: str | None,
                 input_dir: str | None, workers: int, bit_depth: str,
                 aspect_tol: float, resume: bool, debug_provenance: bool,
                 seed: int, **profile_params) -> None:
    """Generate a dataset of sample records from a corpus or manifest."""
    profile = build_profile(ctx, profile_params)
    manifest = _resolve_manifest(manifest_path, input_dir, seed, aspect_tol)
    _log_config("generate", {
        "out_dir": out_dir, "seed": manifest.master_seed,
        "config_digest": manifest.config_digest, "workers": workers,
        "bit_depth": bit_depth, "resume": resume,
        "debug_provenance": debug_provenance, "profile": profile.to_dict(),
    })
    summary = generate(
        manifest, profile, out_dir, workers=workers, bit_depth=int(bit_depth),
        debug_provenance=debug_provenance, resume=resume,
    )
    log.info("generated %d samples into %s (%d failures)",
             summary["samples"], out_dir, len(summary["failures"]))


@main.command()
@click.argument("input_image", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_image", type=click.Path(dir_okay=False))
@click.option("--bit-depth", type=click.Choice(["8", "16"]), default="8",
              show_default=True)
@profile_options
@click.pass_context
@_cli_errors
def simulate(ctx: click.Context, input_image: str, output_image: str,
             bit_depth: str, **profile_params) -> None:
    """Apply an aberration profile to one image (output is PNG)."""
    from .lens import apply_profile

    profile = build_profile(ctx, profile_params)
    _log_config("simulate", {"input": input_image, "output": output_image,
                             "bit_depth": bit_depth, "profile": profile.to_dict()})
    img = decode_file(input_image)
    out = apply_profile(img, profile)
    Path(output_image).write_bytes(encode_image(out, int(bit_depth)))
    log.info("wrote %s", output_image)


@main.command(name="sweep")
@click.argument("out_root", type=click.Path(file_okay=False))
@click.option("--axis", type=click.Choice(SWEEP_AXES), required=True)
@click.option("--strengths", type=str, required=True,
              help="Comma-separated strength values, one dataset each.")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--input", "input_dir", type=click.Path(exists=True, file_okay=False),
              default=None)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--bit-depth", type=click.Choice(["8", "16"]), default="8",
              show_default=True)
@click.option("--aspect-tol", type=float, default=0.002, show_default=True)
@_seed_option
@_cli_errors
def sweep_cmd(out_root: str, axis: str, strengths: str, manifest_path: str | None,
              input_dir: str | None, workers: int, bit_depth: str,
              aspect_tol: float, seed: int) -> None:
    """Generate a family of datasets along one aberration axis."""
    try:
        values = [float(s) for s in strengths.split(",") if s.strip() != ""]
    except ValueError as exc:
        raise click.UsageError(f"--strengths: {exc}") from exc
    if not values:
        raise click.UsageError("--strengths must name at least one value")
    for v in values:
        profile_for_axis(axis, v)  # argument check before any work
    manifest = _resolve_manifest(manifest_path, input_dir, seed, aspect_tol)
    _log_config("sweep", {"out_root": out_root, "axis": axis, "strengths": values,
                          "seed": manifest.master_seed,
                          "config_digest": manifest.config_digest,
                          "workers": workers, "bit_depth": bit_depth})
    dirs = sweep(manifest, axis, values, out_root, workers=workers,
                 bit_depth=int(bit_depth))
    log.info("sweep wrote %d datasets under %s", len(dirs), out_root)


@main.command(name="stats")
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the summary JSON here instead of stdout.")
@_cli_errors
def stats_cmd(dataset_dir: str, out: str | None) -> None:
    """Summarize a generated dataset (counts, crop rate, histograms)."""
    report = stats(dataset_dir)
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")
        log.info("wrote stats to %s", out)


@main.command(name="batches")
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--batch-size", type=int, required=True,
              help="Positive multiple of 16.")
@click.option("--split", type=click.Choice(["train", "val", "test"]), default=None,
              help="Restrict to one split (default: all records).")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Write the batch index JSON here.")
@_cli_errors
def batches_cmd(dataset_dir: str, batch_size: int, split: str | None, out: str) -> None:
    """Assemble cyclically shifted patch batches for pretext training."""
    index = assemble_pretext_batches(dataset_dir, batch_size, split)
    Path(out).write_text(json.dumps(index, sort_keys=True, indent=2) + "\n",
                         encoding="utf-8")
    log.info("wrote %d batches of %d patches to %s",
             len(index["batches"]), batch_size, out)


if __name__ == "__main__":
    main()
