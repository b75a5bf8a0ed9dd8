"""Batch command-line driver.

Subcommands ``attack``, ``calibrate``, ``evaluate`` and ``randomness`` read a
JSON-lines manifest (one ``{"image_path", "label_map_path", "class_id"}``
object per line, paths relative to the manifest) and write PNG/JSON/CSV
outputs. Exit codes: 0 success, 1 usage error, 2 I/O error, 3 oracle error.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from colorfool import __version__
from colorfool.attack import COLORFOOL, SEMANTICADV, VARIANTS, AttackConfig, attack
from colorfool.colorspace import check_rgb, srgb_to_lab
from colorfool.defenses import DEFAULT_GRID, FilterSpec, codec_id, parse_grid
from colorfool.evaluation import (
    DEFAULT_FPR,
    DetectionThreshold,
    build_report,
    calibrate,
    min_calibration_size,
    randomness_study,
)
from colorfool.oracle import OracleError, cached, oracle_from_spec
from colorfool.regions import LabelMapError, decompose, load_category_mapping, load_label_map
from colorfool.semanticadv import semanticadv_attack

log = logging.getLogger("colorfool")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_ORACLE = 0, 1, 2, 3

FALLBACK_WARNING = "no label map; whole image treated as one non-sensitive region"


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ManifestRecord:
    image_path: Path
    label_map_path: Path | None = None
    class_id: int | None = None

    @property
    def stem(self):
        return self.image_path.stem


def load_manifest(path):
    path = Path(path)
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            image = path.parent / row["image_path"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise UsageError(f"{path}:{lineno}: bad manifest record ({exc})") from None
        if not image.is_file():
            raise FileNotFoundError(f"{path}:{lineno}: image not found: {image}")
        label_map = row.get("label_map_path")
        records.append(
            ManifestRecord(
                image,
                None if label_map is None else path.parent / label_map,
                row.get("class_id"),
            )
        )
    if not records:
        raise UsageError(f"{path}: manifest is empty")
    stems = [r.stem for r in records]
    if len(set(stems)) != len(stems):
        raise UsageError(f"{path}: image file stems must be unique")
    return records


def read_image(path):
    try:
        with Image.open(path) as im:
            return check_rgb(np.array(im.convert("RGB")))
    except UnidentifiedImageError as exc:
        raise OSError(f"cannot decode image {path}") from exc


def write_png(path, img):
    Image.fromarray(img, "RGB").save(path, format="PNG")


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def config_block(args, **extra):
    config = {
        "variant": getattr(args, "variant", None),
        "trials": getattr(args, "trials", None),
        "seed": getattr(args, "seed", None),
        "oracle": args.oracle,
        "filters": [str(f) for f in getattr(args, "filter_grid", ())],
        "category_map": getattr(args, "category_map", None),
        **extra,
    }
    digest = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()
    return {
        "seed": config["seed"],
        "config_hash": digest,
        "codec": codec_id(),
        "version": __version__,
    }


def make_oracle(args):
    return cached(oracle_from_spec(args.oracle, pool_size=max(1, args.workers)))


def _regions_for(record, rgb, mapping, variant, warnings):
    if variant != COLORFOOL:
        return None
    if record.label_map_path is None:
        warnings.append(FALLBACK_WARNING)
        return None
    labels = load_label_map(record.label_map_path)
    return decompose(srgb_to_lab(rgb), labels, mapping)


def run_attack(rgb, regions, oracle, cfg):
    if cfg.variant == SEMANTICADV:
        return semanticadv_attack(rgb, oracle, cfg)
    return attack(rgb, regions, oracle, cfg)


def cmd_attack(args):
    records = load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mapping = load_category_mapping(args.category_map)
    repro = config_block(args)

    with make_oracle(args) as oracle:

        def work(item):
            index, record = item
            rgb = read_image(record.image_path)
            warnings = []
            regions = _regions_for(record, rgb, mapping, args.variant, warnings)
            cfg = AttackConfig(args.trials, args.seed ^ index, args.variant)
            result = run_attack(rgb, regions, oracle, cfg)
            name = f"{record.stem}.adv.png"
            write_png(out / name, result.adversarial)
            doc = {
                "image": str(record.image_path),
                "label_map": None if record.label_map_path is None else str(record.label_map_path),
                "output": name,
                "variant": cfg.variant,
                "seed": cfg.seed,
                "max_trials": cfg.max_trials,
                "trials_used": result.trials_used,
                "success": result.success,
                "original_class": result.original_class,
                "final_class": result.final_class,
                "class_id": record.class_id,
                "queries": result.queries,
                "warnings": warnings,
                "reproducibility": repro,
            }
            write_json(out / f"{record.stem}.record.json", doc)
            log.info("%s: success=%s trials=%d", record.stem, result.success, result.trials_used)
            return result.success

        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            outcomes = list(pool.map(work, enumerate(records)))
    log.info("attacked %d images, %d succeeded", len(outcomes), sum(outcomes))
    return EXIT_OK


def cmd_calibrate(args):
    records = load_manifest(args.manifest)
    needed = min_calibration_size(args.fpr)
    if len(records) < needed:
        raise UsageError(f"calibration needs at least {needed} clean images, got {len(records)}")
    images = [read_image(r.image_path) for r in records]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with make_oracle(args) as oracle:
        thresholds = {str(spec): calibrate(images, oracle, spec, args.fpr).tau for spec in args.filter_grid}
        name = oracle.name
    write_json(
        out / "thresholds.json",
        {
            "oracle": name,
            "fpr": args.fpr,
            "n_images": len(images),
            "thresholds": thresholds,
            "reproducibility": config_block(args, fpr=args.fpr),
        },
    )
    return EXIT_OK


def load_thresholds(path):
    doc = json.loads(Path(path).read_text())
    return [
        DetectionThreshold(FilterSpec.parse(key), doc.get("oracle", ""), float(tau))
        for key, tau in sorted(doc["thresholds"].items())
    ]


def _find_adversarial(adv_dir, stem):
    for name in (f"{stem}.adv.png", f"{stem}.png"):
        if (adv_dir / name).is_file():
            return adv_dir / name
    return None


def cmd_evaluate(args):
    records = load_manifest(args.manifest)
    adv_dir = Path(args.adv_dir)
    pairs = [(r, _find_adversarial(adv_dir, r.stem)) for r in records]
    missing = [r.stem for r, p in pairs if p is None]
    if missing:
        raise FileNotFoundError(f"no adversarial image in {adv_dir} for: {', '.join(missing)}")

    trials = []
    for r, _ in pairs:
        record_path = adv_dir / f"{r.stem}.record.json"
        trials.append(json.loads(record_path.read_text())["trials_used"] if record_path.is_file() else None)

    thresholds = load_thresholds(args.thresholds) if args.thresholds else []
    names = [r.stem for r, _ in pairs]
    clean = [read_image(r.image_path) for r, _ in pairs]
    adv = [read_image(p) for _, p in pairs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    test_oracles = [cached(oracle_from_spec(spec)) for spec in args.test_oracle]
    try:
        with make_oracle(args) as oracle:
            report = build_report(
                names, clean, adv, oracle,
                grid=args.filter_grid,
                thresholds=thresholds,
                test_oracles=test_oracles,
                trials=trials,
                metadata={
                    "oracle": oracle.name,
                    "reproducibility": config_block(args, test_oracles=args.test_oracle),
                },
            )
    finally:
        for t in test_oracles:
            t.close()
    (out / "report.csv").write_text(report.to_csv())
    (out / "summary.json").write_text(report.to_json())
    return EXIT_OK


def cmd_randomness(args):
    rgb = read_image(args.image)
    regions = None
    warnings = []
    if args.variant == COLORFOOL:
        if args.label_map:
            mapping = load_category_mapping(args.category_map)
            regions = decompose(srgb_to_lab(rgb), load_label_map(args.label_map), mapping)
        else:
            warnings.append(FALLBACK_WARNING)
    cfg = AttackConfig(args.trials, args.seed, args.variant)
    with make_oracle(args) as oracle:
        stats = randomness_study(rgb, regions, oracle, args.runs, cfg, attack_fn=run_attack)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = stats.to_dict()
    doc["image"] = str(args.image)
    doc["warnings"] = warnings
    doc["reproducibility"] = config_block(args, runs=args.runs, image=str(args.image))
    write_json(out / "randomness.json", doc)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _filter_grid(text):
    try:
        return parse_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    parser = _Parser(prog="colorfool", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, attack_opts=True):
        p.add_argument("--oracle", required=True, help="ref:<weights file> or remote:<endpoint>")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--filters", dest="filter_grid", type=_filter_grid, default=DEFAULT_GRID,
                       help="comma list of kind:param (default: full grid)")
        if attack_opts:
            p.add_argument("--variant", choices=VARIANTS, default=COLORFOOL)
            p.add_argument("--trials", type=int, default=1000)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--category-map", default=None, help="JSON label-id to category map")

    p = sub.add_parser("attack", help="generate adversarial images")
    p.add_argument("--manifest", required=True)
    common(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("calibrate", help="calibrate detection thresholds on clean images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fpr", type=float, default=DEFAULT_FPR)
    common(p, attack_opts=False)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="score adversarial images")
    p.add_argument("--manifest", required=True, help="clean-image manifest")
    p.add_argument("--adv-dir", required=True)
    p.add_argument("--thresholds", default=None, help="thresholds.json from calibrate")
    p.add_argument("--test-oracle", action="append", default=[],
                   help="unseen oracle for transferability (repeatable)")
    common(p, attack_opts=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("randomness", help="repeat an attack on one image with many seeds")
    p.add_argument("--image", required=True)
    p.add_argument("--label-map", default=None)
    p.add_argument("--runs", type=int, default=500)
    common(p)
    p.set_defaults(func=cmd_randomness)
    return parser


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("COLORFOOL_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        if getattr(args, "trials", 1) < 1:
            raise UsageError("--trials must be >= 1")
        if getattr(args, "runs", 1) < 1:
            raise UsageError("--runs must be >= 1")
        return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except OracleError as exc:
        log.error("oracle error: %s", exc)
        return EXIT_ORACLE
    except (OSError, LabelMapError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
