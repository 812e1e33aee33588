"""Command-line entry point: simulate, train, detect, evaluate, mask-stats, report, compare.

Exit status is 0 on success, 1 on bad data or other domain errors, 2 on
usage errors. Diagnostics go to stderr; data goes to files or stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import compare as cmp
from . import detectors, features, ingest, registry, simulator, svm, vision

log = logging.getLogger("roadsense")


class CliError(Exception):
    """A domain failure reported with exit status 1."""


def _positive(kind=float):
    def parse(text: str):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
        return v

    parse.__name__ = f"positive {kind.__name__}"
    return parse


def _non_negative(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _fraction(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {text}")
    return v


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CliError(f"input file not found: {path}") from None
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise CliError(f"input file not found: {path}") from None
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_log(path: str) -> ingest.SampleStream:
    return ingest.parse_log(_read_text(path))


def _load_model(path: str) -> svm.LinearSvmModel:
    return svm.deserialize(_read_bytes(path))


def cmd_simulate(args) -> None:
    if args.profile:
        profile = simulator.RoadProfile.from_json(_read_text(args.profile))
    else:
        profile = simulator.default_profile(args.potholes, args.length, args.seed, args.noise)
    cfg = simulator.SimConfig(speed=args.speed, rate=args.rate, seed=args.seed)
    stream = simulator.simulate(profile, cfg)
    _emit(ingest.write_log(stream), args.output)
    if args.profile_out:
        Path(args.profile_out).write_text(profile.to_json() + "\n", encoding="utf-8")
    if args.track_out:
        track = simulator.synthetic_track(stream, args.speed, (args.origin_lat, args.origin_lon))
        lines = ["t,lat,lon"] + [f"{t!r},{la!r},{lo!r}" for t, la, lo in track.tolist()]
        Path(args.track_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    log.info("simulated %d samples, %d potholes", len(stream), len(profile.potholes))


def _training_set(args, stream):
    windows = features.labeled_windows(stream, args.window, args.hop, args.negatives)
    X, y = features.feature_matrix(windows)
    return windows, X, y


def cmd_train(args) -> None:
    stream = _load_log(args.log)
    _windows, X, y = _training_set(args, stream)
    model = svm.train(X, y, C=args.C, tol=args.tol, max_epochs=args.max_epochs)
    Path(args.output).write_bytes(svm.serialize(model))
    if args.features_out:
        Path(args.features_out).write_text(features.write_feature_csv(X, y), encoding="utf-8")
    acc = float(np.mean(svm.predict_many(model, X) == y))
    log.info(
        "trained on %d windows (%d pothole); training accuracy %.1f%%; objective %.6g",
        len(y), int(y.sum()), 100 * acc, model.history[-1] if model.history else float("nan"),
    )


def _read_track(path: str) -> np.ndarray:
    rows = []
    for n, line in enumerate(_read_text(path).splitlines(), start=1):
        parts = [p.strip() for p in line.split(",")]
        if not line.strip() or (n == 1 and parts[0] == "t"):
            continue
        try:
            rows.append([float(p) for p in parts[:3]])
        except ValueError:
            raise CliError(f"{path}:{n}: expected t,lat,lon") from None
    return np.array(rows).reshape(-1, 3)


def cmd_detect(args) -> None:
    model = _load_model(args.model)
    stream = _load_log(args.input)
    events = detectors.detect_svm_stream(model, stream, args.window, args.refractory)
    if args.gps:
        events = detectors.attach_locations(events, _read_track(args.gps))
    _emit(detectors.events_to_csv(events), args.output)
    log.info("%d events", len(events))


def cmd_evaluate(args) -> None:
    model = _load_model(args.model)
    stream = _load_log(args.log)
    n_pos = len(features.flag_onsets(stream))
    if n_pos == 0:
        raise CliError(f"{args.log} has no flagged samples; evaluation needs ground truth")
    negatives = None if args.all_negatives else n_pos
    windows = features.labeled_windows(stream, args.window, args.hop, negatives)
    X, y = features.feature_matrix(windows)
    if args.cv:
        fold_acc, pred = svm.cross_validate(X, y, args.cv, args.seed, model.c_param, model.tol)
        heading = f"{args.cv}-fold cross-validation, mean fold accuracy {100 * np.mean(fold_acc):.1f}%"
    else:
        pred = svm.predict_many(model, X)
        heading = "model evaluated on labeled windows"
    cm = detectors.evaluate(y, pred)
    report = {**cm.to_dict(), "windows": len(y)}
    if args.cv:
        report["fold_accuracy"] = fold_acc
    text = f"{heading} ({len(y)} windows)\n" + detectors.render_confusion(cm) + "\n" + json.dumps(report, sort_keys=True) + "\n"
    _emit(text, args.output)
    if args.json:
        Path(args.json).write_text(json.dumps(report, sort_keys=True) + "\n", encoding="utf-8")


def cmd_mask_stats(args) -> None:
    if not Path(args.mask).exists():
        raise CliError(f"input file not found: {args.mask}")
    if args.edges:
        img = vision.read_gray(args.mask)
        if args.night:
            img = vision.log_stretch(img)
        mask = vision.edge_mask(img, high=args.canny_high, k=args.dilate)
    else:
        mask = vision.read_mask(args.mask)
    if args.rectify:
        rect = json.loads(_read_text(args.rectify))
        try:
            H = vision.homography_from_points(rect["src"], rect["dst"])
            mask = vision.warp_mask(mask, H, int(rect["width"]), int(rect["height"]))
        except KeyError as exc:
            raise CliError(f"{args.rectify}: missing field {exc}") from None
    stats = vision.mask_stats(mask, args.line_y, args.sev_low, args.sev_high)
    if args.m_per_px and stats["length_px"] is not None:
        stats["length_m"] = stats["length_px"] * args.m_per_px
        stats["width_m"] = stats["width_px"] * args.m_per_px
    if args.register:
        if args.lat is None or args.lon is None:
            raise CliError("--register needs --lat and --lon")
        if not stats["gated"] and not args.ungated:
            stats["registered"] = None
            log.info("mask does not touch gate row %d; not registered", stats["gate_row"])
        else:
            seen = datetime.fromisoformat(args.time) if args.time else datetime.now(timezone.utc)
            rec = registry.PotholeRecord(
                lat=args.lat,
                lon=args.lon,
                area=stats["area_ratio"],
                area_unit="frame",
                length_m=stats.get("length_m"),
                width_m=stats.get("width_m"),
                severity=stats["severity"],
                image_ref=args.image_ref,
                first_seen=seen,
            )
            result = registry.PotholeStore(args.register).upsert(rec, args.radius, args.geom_tol)
            stats["registered"] = {"id": result.id, "created": result.created}
    _emit(json.dumps(stats, sort_keys=True) + "\n", args.output)


def cmd_report(args) -> None:
    if not Path(args.store).exists():
        raise CliError(f"store not found: {args.store}")
    store = registry.PotholeStore(args.store)
    if args.format == "geojson":
        _emit(json.dumps(registry.to_geojson(store), indent=2) + "\n", args.output)
    else:
        _emit(registry.render_table(store), args.output)
    if args.geojson:
        Path(args.geojson).write_text(json.dumps(registry.to_geojson(store), indent=2) + "\n", encoding="utf-8")


def cmd_compare(args) -> None:
    stream = _load_log(args.log)
    model = _load_model(args.model) if args.model else None
    sweep = cmp.parse_sweep(args.sweep) if args.sweep else None
    try:
        rows = cmp.compare_detectors(stream, sweep, model, args.window, args.refractory, args.allow_unlabeled)
    except cmp.GroundTruthError as exc:
        raise CliError(f"{args.log}: {exc}") from None
    _emit(cmp.render_sweep(rows), args.output)
    if args.json:
        Path(args.json).write_text(cmp.sweep_json(rows) + "\n", encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="roadsense", description=__doc__.splitlines()[0], formatter_class=fmt)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def window_opts(sp, hop=True):
        sp.add_argument("--window", type=_positive(), default=features.DEFAULT_WINDOW, help="window length, seconds")
        if hop:
            sp.add_argument("--hop", type=_positive(), default=features.DEFAULT_HOP, help="window hop, seconds")

    s = sub.add_parser("simulate", help="generate a labeled synthetic IMU log", formatter_class=fmt)
    s.add_argument("--profile", help="road profile JSON; overrides --potholes/--length/--noise")
    s.add_argument("--potholes", type=int, default=26, help="number of potholes for a generated profile")
    s.add_argument("--length", type=_positive(), default=2000.0, help="road length, meters")
    s.add_argument("--noise", type=_non_negative, default=0.3, help="surface noise sigma, m/s^2")
    s.add_argument("--speed", type=_positive(), default=10.0, help="vehicle speed, m/s")
    s.add_argument("--rate", type=_positive(), default=50.0, help="sample rate, Hz")
    s.add_argument("--seed", type=int, default=0, help="seed for profile and noise")
    s.add_argument("-o", "--output", default="-", help="log CSV path ('-' for stdout)")
    s.add_argument("--profile-out", help="also write the road profile JSON here")
    s.add_argument("--track-out", help="also write a synthetic t,lat,lon track here")
    s.add_argument("--origin-lat", type=float, default=0.0, help="track start latitude")
    s.add_argument("--origin-lon", type=float, default=0.0, help="track start longitude")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("train", help="train the linear SVM from a labeled log", formatter_class=fmt)
    s.add_argument("log", help="labeled log CSV")
    s.add_argument("-o", "--output", required=True, help="model file to write")
    s.add_argument("--C", type=_positive(), default=svm.DEFAULT_C, help="soft-margin penalty")
    s.add_argument("--tol", type=_positive(), default=svm.DEFAULT_TOL, help="relative optimality tolerance")
    s.add_argument("--max-epochs", type=_positive(int), default=svm.DEFAULT_MAX_EPOCHS, help="epoch cap")
    s.add_argument("--negatives", type=_positive(int), default=None, help="thin flag-free windows to this many (default: all)")
    s.add_argument("--features-out", help="write the feature matrix CSV here")
    window_opts(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("detect", help="run the streaming SVM detector over a log", formatter_class=fmt)
    s.add_argument("model", help="model file")
    s.add_argument("--input", required=True, help="log CSV to scan")
    s.add_argument("--refractory", type=_non_negative, default=detectors.DEFAULT_REFRACTORY, help="dead time after an event, seconds")
    s.add_argument("--gps", help="t,lat,lon CSV for nearest-timestamp event locations")
    s.add_argument("-o", "--output", default="-", help="event CSV path")
    window_opts(s, hop=False)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("evaluate", help="confusion matrix of a model on labeled windows", formatter_class=fmt)
    s.add_argument("model", help="model file")
    s.add_argument("log", help="labeled log CSV")
    s.add_argument("--all-negatives", action="store_true", help="use every flag-free window instead of one per pothole")
    s.add_argument("--cv", type=_positive(int), default=None, help="k-fold cross-validation with the model's C and tol instead of scoring the model")
    s.add_argument("--seed", type=int, default=0, help="fold assignment seed for --cv")
    s.add_argument("--json", help="also write the JSON summary here")
    s.add_argument("-o", "--output", default="-", help="report path")
    window_opts(s)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("mask-stats", help="area, count, gating and severity of a pothole mask", formatter_class=fmt)
    s.add_argument("mask", help="PBM/PGM mask (or grayscale frame with --edges)")
    s.add_argument("--edges", action="store_true", help="input is a grayscale frame; build the mask with Canny + dilation")
    s.add_argument("--night", action="store_true", help="log-stretch the frame before edge detection")
    s.add_argument("--canny-high", type=_fraction, default=vision.CANNY_HIGH, help="Canny high threshold (fraction of peak gradient); low = high/2")
    s.add_argument("--dilate", type=_positive(int), default=3, help="dilation kernel size (odd)")
    s.add_argument("--line-y", type=int, default=None, help="gating row (default: middle row)")
    s.add_argument("--sev-low", type=float, default=vision.SEVERITY_LOW, help="area below this is 'low'")
    s.add_argument("--sev-high", type=float, default=vision.SEVERITY_HIGH, help="area at or above this is 'high'")
    s.add_argument("--rectify", help="JSON {src, dst, width, height} for a bird's-eye warp before measuring")
    s.add_argument("--m-per-px", type=_positive(), default=None, help="ground scale of a rectified mask, meters per pixel")
    s.add_argument("--register", help="upsert the result into this registry store")
    s.add_argument("--lat", type=float, help="latitude for --register")
    s.add_argument("--lon", type=float, help="longitude for --register")
    s.add_argument("--time", help="ISO-8601 sighting time for --register (default: now)")
    s.add_argument("--image-ref", help="opaque image reference stored with the record")
    s.add_argument("--ungated", action="store_true", help="register even if the mask misses the gate row")
    s.add_argument("--radius", type=_positive(), default=registry.DEFAULT_RADIUS_M, help="duplicate search radius, meters")
    s.add_argument("--geom-tol", type=_fraction, default=registry.DEFAULT_GEOM_TOL, help="relative geometry tolerance for duplicates")
    s.add_argument("-o", "--output", default="-", help="JSON output path")
    s.set_defaults(func=cmd_mask_stats)

    s = sub.add_parser("report", help="print the pothole registry", formatter_class=fmt)
    s.add_argument("store", help="registry JSON-lines file")
    s.add_argument("--format", choices=("table", "geojson"), default="table", help="stdout format")
    s.add_argument("--geojson", help="also write GeoJSON points here")
    s.add_argument("-o", "--output", default="-", help="output path")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("compare", help="sweep baseline thresholds (and the SVM) against ground truth", formatter_class=fmt)
    s.add_argument("log", help="labeled log CSV")
    s.add_argument("--model", help="include the SVM detector with this model")
    s.add_argument(
        "--sweep", action="append", metavar="METHOD=T1,T2",
        help="thresholds in m/s^2 per method; repeatable. Default grid: "
        + "; ".join(f"{m}={','.join(f'{t:g}' for t in ts)}" for m, ts in cmp.DEFAULT_SWEEP.items())
        + f". Fixed: stdev_z window {detectors.STDEV_Z_WIN} s, g_zero min duration {detectors.G_ZERO_MIN_DUR} s",
    )
    s.add_argument("--refractory", type=_non_negative, default=detectors.DEFAULT_REFRACTORY, help="SVM dead time, seconds")
    s.add_argument("--allow-unlabeled", action="store_true", help="score a log without any flags (every event is a false alarm)")
    s.add_argument("--json", help="also write rows as JSON here")
    s.add_argument("-o", "--output", default="-", help="table output path")
    window_opts(s, hop=False)
    s.set_defaults(func=cmd_compare)
    return p


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except (CliError, ValueError, registry.RegistryError, OSError) as exc:
        print(f"roadsense {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())
