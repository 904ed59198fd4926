"""Command-line entry point: ``zshim {simulate,sweep,train,psg}``.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical or
calibration failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .fields import CalibrationError
from .fileio import atomic_write, csv_text, mask_to_pgm, read_pgm, scale_pair, write_pgm
from .metrics import MetricError, auto_ghost_masks, GhostMetricMasks, psg, psg_background
from .scenario import (ConfigError, load_config, manifest, riro_stats, run_simulation,
                       run_sweep, run_training)
from .training import DegenerateDesignError

log = logging.getLogger("zshim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _resolve(args):
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output"] = args.out
    return cfg.replace(**changes) if changes else cfg


def _fmt(v):
    if isinstance(v, float) and np.isinf(v):
        return "inf"
    return v


def write_simulation(result, out):
    out = Path(out)
    cfg = result.config
    conds = list(result.magnitudes)
    for e in range(len(cfg.te_ms)):
        scaled = scale_pair(*(result.magnitudes[c][e] for c in conds))
        for c, img in zip(conds, scaled):
            write_pgm(out / f"magnitude_{c}_echo{e + 1}.pgm", img)
    peak = float(result.riro.values.max())
    riro_img = (np.rint(result.riro.values / peak * 65535).astype(np.uint16) if peak > 0
                else np.zeros(result.riro.shape, dtype=np.uint16))
    write_pgm(out / "riro_map.pgm", riro_img)
    for name, m in result.masks.items():
        mask_to_pgm(out / f"mask_{name}.pgm", m)

    rows = [[m["condition"], m["echo"], m["te_ms"], m["psg"], _fmt(m["snr"])]
            for m in result.metrics]
    atomic_write(out / "metrics.csv", csv_text(["condition", "echo", "te_ms", "psg", "snr"], rows))
    if result.controller is not None:
        from .controller import events_to_csv
        atomic_write(out / "controller_log.csv", events_to_csv(result.controller.events))
    std_obj, std_roi = riro_stats(result)
    atomic_write(out / "manifest.json", manifest(
        cfg, "simulate", riro_std_object_hz=std_obj, riro_std_roi_hz=std_roi,
        riro_corr_hz=result.riro_corr_hz))


def cmd_simulate(args):
    cfg = _resolve(args)
    result = run_simulation(cfg)
    write_simulation(result, cfg.output)
    for m in result.metrics:
        print(f"{m['condition']:>3} echo {m['echo']}: PSG = {m['psg']:.4f} %  "
              f"SNR = {_fmt(m['snr'])}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _resolve(args)
    try:
        std_list = [float(s) for s in args.std_list.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad --std-list {args.std_list!r}") from None
    rows = run_sweep(cfg, std_list)
    out = Path(cfg.output)
    atomic_write(out / "sweep.csv", csv_text(
        ["std_hz", "psg_off", "psg_on", "relative_reduction", "status"],
        [[r.std_hz, r.psg_off, r.psg_on, r.relative_reduction, r.status] for r in rows]))
    atomic_write(out / "manifest.json", manifest(cfg, "sweep", std_list=std_list))
    for r in rows:
        print(f"std {r.std_hz:g} Hz: PSG off {r.psg_off:.4f}  on {r.psg_on:.4f}  "
              f"reduction {r.relative_reduction:.2f} %  [{r.status}]")
    if any(r.status != "ok" for r in rows):
        log.error("calibration failed at std %g Hz; partial results written", rows[-1].std_hz)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_train(args):
    cfg = _resolve(args)
    res = run_training(cfg)
    out = Path(cfg.output)
    atomic_write(out / "shim_plan.txt", res.plan.to_text())
    atomic_write(out / "pressure_trace.csv", res.trace.to_csv())
    keys = list(res.quality[0])
    atomic_write(out / "training_quality.csv",
                 csv_text(keys, [[q[k] for k in keys] for q in res.quality]))
    atomic_write(out / "manifest.json", manifest(cfg, "train"))
    worst_s = max(abs(q["gz_static_error"]) for q in res.quality)
    worst_r = max(abs(q["rigo_max_error"]) for q in res.quality)
    print(f"{len(res.plan)} slices; max |error| gz_static {worst_s:.3e} Hz/mm, "
          f"rigo_max {worst_r:.3e} Hz/mm per unit pressure")
    return EXIT_OK


def _read_mask(path, shape):
    m = read_pgm(path) > 0
    if m.shape != shape:
        raise ConfigError(f"mask {path} has shape {m.shape}, image has {shape}")
    return m


def cmd_psg(args):
    img = read_pgm(args.image).astype(float)
    obj = _read_mask(args.object, img.shape)
    if args.background:
        roi = _read_mask(args.roi, img.shape) if args.roi else obj
        value = psg_background(img, roi, _read_mask(args.background, img.shape))
    elif args.above or args.below:
        if not (args.above and args.below):
            raise ConfigError("--above and --below must be given together")
        masks = GhostMetricMasks(obj, _read_mask(args.above, img.shape),
                                 _read_mask(args.below, img.shape))
        value = psg(img, masks)
    else:
        value = psg(img, auto_ghost_masks(obj, margin_px=args.margin))
    print(repr(float(value)))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="zshim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("--config", required=True,
                        help="config file, or a bundled name (phantom, invivo)")
        sp.add_argument("--out", help="output directory (overrides 'output')")
        sp.add_argument("--seed", type=int, help="random seed (overrides 'seed')")

    sp = sub.add_parser("simulate", help="simulate images with and without correction")
    scenario_args(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="PSG reduction versus in-plane RIRO std")
    scenario_args(sp)
    sp.add_argument("--std-list", default="0.25,0.5,1.0,1.5,2.1",
                    help='comma-separated std values in Hz, e.g. "0.5,1.0,2.1"')
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("train", help="run the synthetic training session, write the shim plan")
    scenario_args(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("psg", help="percent signal ghosting of a PGM image")
    sp.add_argument("--image", required=True)
    sp.add_argument("--object", required=True, help="object mask (PGM, nonzero = inside)")
    sp.add_argument("--above")
    sp.add_argument("--below")
    sp.add_argument("--background", help="background mask; selects the background variant")
    sp.add_argument("--roi", help="denominator ROI for the background variant")
    sp.add_argument("--margin", type=int, default=2)
    sp.set_defaults(func=cmd_psg)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (CalibrationError, MetricError, DegenerateDesignError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
