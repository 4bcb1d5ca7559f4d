"""Command-line entry point: ``sosinr simulate | estimate | evaluate``.

Exit codes: 0 success, 2 configuration error, 3 data-format error,
4 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    build_c0,
    build_geometry,
    build_grid,
    build_phantom,
    build_pixel_grid,
    build_pulse,
    build_seed,
    load_config,
    network_layers,
)
from .core import normalize_coords, pixel_positions
from .estimate import EstimationConfig, NumericalAbort, compose_sos, run_estimation
from .eval import cross_sections, emit_report, metrics_dict, write_cross_sections
from .inr import siren_forward, siren_init
from .io import FormatError, read_channel_data, read_map_csv, write_channel_data, write_map_csv, write_network
from .signal import analytic_signal
from .simulate import PhantomSpec, phantom_to_sos_grid, sample_scatterers, simulate_rf

EXIT_OK, EXIT_CONFIG, EXIT_FORMAT, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("sosinr")

CONFIG_HELP = """\
configuration keys (YAML; lengths in mm, frequencies in MHz):
  seed                                   64-bit unsigned integer (required)
  geometry.elements, geometry.pitch_mm   linear array (required)
  pulse.center_frequency_mhz, pulse.sampling_frequency_mhz (required),
  pulse.fractional_bandwidth, pulse.pulse_cycles
  grid.origin_mm [x, z], grid.n_lateral, grid.n_depth, grid.spacing_mm [dx, dz] (required)
  simulation.n_samples, simulation.scatterer_density_per_mm2
  phantoms[]: name, background_sos, inclusions[]: center_mm [x, z], diameter_mm, sos
  beamforming.f_number, beamforming.pixel_grid (grid mapping or null for the SoS grid)
  estimation.mode (inr | grid_baseline), estimation.epochs, estimation.alpha, estimation.lr,
  estimation.c0, estimation.clamp [min, max], estimation.phase_lag, estimation.checkpoint_every
  network.hidden_layers, network.hidden_units, network.omega, network.output_scale
"""


def _manifest(subcommand: str, args, cfg: dict, out: Path) -> dict:
    return {
        "subcommand": subcommand,
        "config_path": str(args.config) if getattr(args, "config", None) else None,
        "config": cfg,
        "output_dir": str(out),
        "seed": cfg.get("seed") if cfg else None,
        "tool_version": __version__,
    }


def _write_manifest(out: Path, manifest: dict):
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _resolve(args) -> dict:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "mode", None):
        cfg["estimation"]["mode"] = args.mode
    if getattr(args, "epochs", None) is not None:
        cfg["estimation"]["epochs"] = args.epochs
    return cfg


def cmd_simulate(args) -> int:
    cfg = _resolve(args)
    if not cfg["phantoms"]:
        raise ConfigError("phantoms: at least one phantom is required to simulate")
    out = Path(args.out)
    geom, pulse, grid, seed = build_geometry(cfg), build_pulse(cfg), build_grid(cfg), build_seed(cfg)
    # Build everything in a scratch directory first so a failure leaves no partial output.
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".sim-", dir=out.parent))
    try:
        for i, p in enumerate(cfg["phantoms"]):
            spec = build_phantom(cfg, i)
            truth = phantom_to_sos_grid(spec, grid)
            scat = sample_scatterers(spec, grid, seed)
            rf = simulate_rf(geom, pulse, truth, scat, cfg["simulation"]["n_samples"])
            d = tmp / p["name"]
            d.mkdir()
            write_channel_data(d / "channels.bin", rf, {"phantom": p, "seed": cfg["seed"]})
            write_map_csv(d / "truth_map.csv", truth)
            _write_manifest(d, _manifest("simulate", args, cfg, out / p["name"]))
            log.info("simulated %s", p["name"])
        _write_manifest(tmp, _manifest("simulate", args, cfg, out))
        out.mkdir(parents=True, exist_ok=True)
        for item in sorted(tmp.iterdir()):
            target = out / item.name
            if target.exists():
                shutil.rmtree(target) if target.is_dir() else target.unlink()
            shutil.move(str(item), str(target))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return EXIT_OK


def _phantom_from_data(data_dir: Path, cfg: dict) -> PhantomSpec | None:
    side = data_dir / "channels.json"
    if not side.exists():
        return None
    meta = json.loads(side.read_text()).get("metadata", {})
    p = meta.get("phantom")
    if p is None:
        return None
    tmp = dict(cfg, phantoms=[p])
    return build_phantom(tmp, 0)


def cmd_estimate(args) -> int:
    cfg = _resolve(args)
    data_dir = Path(args.data)
    out = Path(args.out)
    rf = read_channel_data(data_dir / "channels.bin")
    geom, grid, seed = build_geometry(cfg), build_grid(cfg), build_seed(cfg)
    if rf.rf.shape[:2] != (geom.element_count, geom.element_count):
        raise FormatError(f"channel data has {rf.rf.shape[:2]} traces, config expects {geom.element_count} elements",
                          data_dir / "channels.bin", 12)
    est = cfg["estimation"]
    ecfg = EstimationConfig(
        build_c0(cfg),
        mode=est["mode"],
        epochs=est["epochs"],
        alpha=est["alpha"],
        clamp=tuple(est["clamp"]),
        seed=seed,
        lr=est["lr"],
        f_number=cfg["beamforming"]["f_number"],
        output_scale=cfg["network"]["output_scale"],
        pixel_grid=build_pixel_grid(cfg),
        pe_lag=est["phase_lag"],
        threads=args.threads,
    )
    net = siren_init(network_layers(cfg), cfg["network"]["omega"], seed, cfg["network"]["output_scale"])
    out.mkdir(parents=True, exist_ok=True)

    every = est["checkpoint_every"]
    coords = normalize_coords(grid, pixel_positions(grid))
    ck = out / "checkpoints"
    if every:
        ck.mkdir(exist_ok=True)

    def checkpoint(epoch, params, breakdown):
        if (epoch + 1) % every:
            return
        if ecfg.mode == "inr":
            n = net.with_parameters(params)
            write_network(ck / f"network_{epoch + 1:05d}.bin", n)
            delta = siren_forward(n, coords)
        else:
            delta = ecfg.output_scale * params
        write_map_csv(ck / f"sos_map_{epoch + 1:05d}.csv", compose_sos(delta, ecfg.c0, ecfg.clamp))

    try:
        result = run_estimation(analytic_signal(rf), geom, grid, ecfg, net, checkpoint if every else None)
    except NumericalAbort as exc:
        diag = dict(exc.diagnostics, epoch=exc.epoch, message=str(exc))
        (out / "diagnostics.json").write_text(json.dumps(diag, indent=2, sort_keys=True) + "\n")
        raise

    truth_path = data_dir / "truth_map.csv"
    reference = read_map_csv(truth_path) if truth_path.exists() else build_c0(cfg)
    phantom = _phantom_from_data(data_dir, cfg)
    emit_report(result, reference, out, phantom, config=cfg)
    if result.net is not None:
        write_network(out / "network.bin", result.net)
    _write_manifest(out, _manifest("estimate", args, cfg, out))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    est_dir = Path(args.estimate)
    estimate = read_map_csv(est_dir / "sos_map.csv")
    truth = read_map_csv(args.truth)
    if estimate.grid.shape != truth.grid.shape:
        raise ValueError(f"grid mismatch: estimate {estimate.grid.shape} vs truth {truth.grid.shape}")
    out = Path(args.out) if args.out else est_dir
    out.mkdir(parents=True, exist_ok=True)
    phantom = None
    if args.config:
        cfg = _resolve(args)
        if cfg["phantoms"]:
            phantom = build_phantom(cfg, 0)
    metrics = metrics_dict(estimate, truth, phantom)
    if phantom is not None and phantom.inclusions:
        center = phantom.inclusions[0].center
    else:
        # Center of the reference's deviating region, else grid center.
        dev = np.argwhere(truth.values != np.median(truth.values))
        if dev.size:
            iz, ix = dev.mean(axis=0)
            center = (float(np.interp(ix, np.arange(truth.grid.n_lateral), truth.grid.x)),
                      float(np.interp(iz, np.arange(truth.grid.n_depth), truth.grid.z)))
        else:
            x0, x1, z0, z1 = truth.grid.extent
            center = ((x0 + x1) / 2, (z0 + z1) / 2)
    write_cross_sections(out / "cross_sections.csv", cross_sections(estimate, truth, center))
    (out / "evaluation.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sosinr",
        description="Speed-of-sound estimation with a sinusoidal implicit network and differentiable DAS.",
        epilog=CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--threads", type=int, default=1, help="worker thread cap")

    p = sub.add_parser("simulate", help="simulate channel data for every configured phantom",
                       epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--out", required=True, help="output directory (one subdirectory per phantom)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate the SoS map from a simulated data directory",
                       epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--data", required=True, help="directory holding channels.bin (and truth_map.csv)")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--mode", choices=["inr", "grid_baseline"], help="override estimation.mode")
    p.add_argument("--epochs", type=int, help="override estimation.epochs")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="RMSE and cross-sections of an existing estimate")
    common(p, config_required=False)
    p.add_argument("--estimate", required=True, help="report directory containing sos_map.csv")
    p.add_argument("--truth", required=True, help="reference map CSV")
    p.add_argument("--out", help="output directory (defaults to the estimate directory)")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "epochs", None) is not None and args.epochs < 1:
        print("error: --epochs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NumericalAbort as exc:
        print(f"numerical abort at epoch {exc.epoch}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
