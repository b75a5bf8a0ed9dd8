"""Attack metrics, filter-based adversarial detection and reports.

Detection compares the oracle's probability vector on an image with the one
on its filtered copy. The L1 gap is flagged when it exceeds a threshold
calibrated on clean images for a fixed false-positive budget.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from colorfool.attack import attack

DEFAULT_FPR = 0.05


@dataclass(frozen=True)
class DetectionThreshold:
    filter: object
    oracle: str
    tau: float

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError("tau must be non-negative")


@dataclass(frozen=True)
class Detection:
    flags: dict
    gaps: dict

    @property
    def any(self):
        return any(self.flags.values())


def l1_prob_gap(oracle, img, filter_spec):
    """L1 distance between predictions on ``img`` and on ``filter_spec(img)``."""
    p = oracle.predict(img)
    q = oracle.predict(filter_spec(img))
    if p.shape != q.shape:
        raise ValueError("oracle returned vectors of different lengths")
    return float(np.abs(p - q).sum())


def min_calibration_size(fpr=DEFAULT_FPR):
    return math.ceil(round(1.0 / fpr, 9))


def threshold_from_gaps(gaps, fpr=DEFAULT_FPR):
    """Smallest observed gap with at most ``fpr`` of the gaps strictly above it."""
    gaps = np.sort(np.asarray(gaps, dtype=np.float64))
    n = gaps.size
    if n < min_calibration_size(fpr):
        raise ValueError(
            f"need at least {min_calibration_size(fpr)} clean images to calibrate "
            f"at FPR {fpr}, got {n}"
        )
    allowed = math.floor(round(fpr * n, 9))
    return float(gaps[n - 1 - allowed])


def calibrate(clean_images, oracle, filter_spec, fpr=DEFAULT_FPR):
    clean_images = list(clean_images)
    if len(clean_images) < min_calibration_size(fpr):
        raise ValueError(
            f"need at least {min_calibration_size(fpr)} clean images to calibrate, "
            f"got {len(clean_images)}"
        )
    gaps = [l1_prob_gap(oracle, img, filter_spec) for img in clean_images]
    return DetectionThreshold(filter_spec, oracle.name, threshold_from_gaps(gaps, fpr))


def detect(img, oracle, thresholds):
    """Flag ``img`` per filter when its gap is strictly above the threshold."""
    flags, gaps = {}, {}
    for th in thresholds:
        key = str(th.filter)
        gap = l1_prob_gap(oracle, img, th.filter)
        gaps[key] = gap
        flags[key] = gap > th.tau
    return Detection(flags, gaps)


def _fraction(flags):
    flags = list(flags)
    if not flags:
        raise ValueError("cannot compute a rate over zero images")
    return sum(bool(f) for f in flags) / len(flags)


def success_rate(results):
    return _fraction(r.success for r in results)


def transferability(adv_images, clean_images, test_oracle):
    """Fraction of pairs whose top-1 under ``test_oracle`` differs."""
    adv_images, clean_images = list(adv_images), list(clean_images)
    if len(adv_images) != len(clean_images):
        raise ValueError("adversarial and clean lists differ in length")
    return _fraction(
        test_oracle.classify(a) != test_oracle.classify(c)
        for a, c in zip(adv_images, clean_images)
    )


def robustness_after_filter(adv_images, clean_classes, oracle, grid):
    """Success rate after each filter, plus the lowest one.

    Returns ``(per_filter, worst)`` where ``per_filter`` maps ``"kind:param"``
    to a success rate and ``worst`` is the minimum over the grid.
    """
    adv_images, clean_classes = list(adv_images), list(clean_classes)
    if len(adv_images) != len(clean_classes):
        raise ValueError("adversarial images and clean classes differ in length")
    per_filter = {
        str(spec): _fraction(
            oracle.classify(spec(img)) != y for img, y in zip(adv_images, clean_classes)
        )
        for spec in grid
    }
    return per_filter, min(per_filter.values())


def undetectability(adv_images, oracle, thresholds):
    """Fraction of images no filter flags, plus the per-filter fractions."""
    detections = [detect(img, oracle, thresholds) for img in adv_images]
    overall = _fraction(not d.any for d in detections)
    per_filter = {
        str(th.filter): _fraction(not d.flags[str(th.filter)] for d in detections)
        for th in thresholds
    }
    return overall, per_filter


# -- reports ---------------------------------------------------------------


@dataclass
class ImageRecord:
    name: str
    clean_class: int
    adv_class: int
    trials: int | None = None
    filtered_class: dict = field(default_factory=dict)
    detected: dict = field(default_factory=dict)
    transfer: dict = field(default_factory=dict)
    quality: float | None = None

    @property
    def success(self):
        return self.adv_class != self.clean_class


@dataclass
class EvalReport:
    records: list
    filters: list = field(default_factory=list)
    test_oracles: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def success_rate(self):
        return _fraction(r.success for r in self.records)

    def robustness(self):
        return {
            f: _fraction(r.filtered_class[f] != r.clean_class for r in self.records)
            for f in self.filters
        }

    def undetectability(self):
        overall = _fraction(not any(r.detected.values()) for r in self.records)
        per_filter = {
            f: _fraction(not r.detected[f] for r in self.records)
            for f in self.filters
            if all(f in r.detected for r in self.records)
        }
        return overall, per_filter

    def transferability(self):
        return {
            o: _fraction(r.transfer[o][0] != r.transfer[o][1] for r in self.records)
            for o in self.test_oracles
        }

    def summary(self):
        robustness = self.robustness()
        out = {"n_images": len(self.records), "success_rate": self.success_rate()}
        if robustness:
            worst = min(robustness, key=lambda f: (robustness[f], f))
            out["robustness"] = {
                "per_filter": robustness,
                "worst_case_sr": robustness[worst],
                "worst_filter": worst,
            }
        if any(r.detected for r in self.records):
            overall, per_filter = self.undetectability()
            out["undetectability"] = {"any_filter": overall, "per_filter": per_filter}
        if self.test_oracles:
            out["transferability"] = self.transferability()
        qualities = [r.quality for r in self.records if r.quality is not None]
        if qualities:
            out["mean_quality"] = float(np.mean(qualities))
        out["metadata"] = self.metadata
        return out

    def csv_columns(self):
        cols = ["name", "clean_class", "adv_class", "success", "trials"]
        cols += [f"filtered_class[{f}]" for f in self.filters]
        cols += [f"detected[{f}]" for f in self.filters]
        for o in self.test_oracles:
            cols += [f"transfer_clean[{o}]", f"transfer_adv[{o}]"]
        cols.append("quality")
        return cols

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.csv_columns())
        for r in self.records:
            row = [r.name, r.clean_class, r.adv_class, int(r.success),
                   "" if r.trials is None else r.trials]
            row += [r.filtered_class.get(f, "") for f in self.filters]
            row += ["" if f not in r.detected else int(r.detected[f]) for f in self.filters]
            for o in self.test_oracles:
                row += list(r.transfer[o])
            row.append("" if r.quality is None else r.quality)
            writer.writerow(row)
        return buf.getvalue()

    def to_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def build_report(names, clean_images, adv_images, oracle, grid=(), thresholds=(),
                 test_oracles=(), trials=None, metadata=None):
    """Query every oracle once per image and filter and collect records."""
    thresholds = {str(th.filter): th for th in thresholds}
    filters = [str(spec) for spec in grid]
    records = []
    for i, (name, clean, adv) in enumerate(zip(names, clean_images, adv_images)):
        record = ImageRecord(
            name=name,
            clean_class=oracle.classify(clean),
            adv_class=oracle.classify(adv),
            trials=None if trials is None else trials[i],
        )
        for spec in grid:
            key = str(spec)
            filtered = spec(adv)
            record.filtered_class[key] = oracle.classify(filtered)
            th = thresholds.get(key)
            if th is not None:
                gap = float(np.abs(oracle.predict(adv) - oracle.predict(filtered)).sum())
                record.detected[key] = gap > th.tau
        for test in test_oracles:
            record.transfer[test.name] = (test.classify(clean), test.classify(adv))
        records.append(record)
    return EvalReport(
        records,
        filters=filters,
        test_oracles=[t.name for t in test_oracles],
        metadata=dict(metadata or {}),
    )


# -- randomness analysis ----------------------------------------------------


@dataclass(frozen=True)
class RunLog:
    seed: int
    success: bool
    trials_used: int
    final_class: int


@dataclass
class RandomnessStats:
    runs: list
    success_rate: float
    trials: dict
    distinct_final_classes: int
    final_classes: list

    def to_dict(self):
        return {
            "n_runs": len(self.runs),
            "success_rate": self.success_rate,
            "trials": self.trials,
            "distinct_final_classes": self.distinct_final_classes,
            "final_classes": self.final_classes,
            "runs": [vars(r) for r in self.runs],
        }


def trial_quartiles(values):
    values = np.asarray(values, dtype=np.float64)
    q = np.percentile(values, [0, 25, 50, 75, 100])
    return {
        "min": float(q[0]),
        "q25": float(q[1]),
        "median": float(q[2]),
        "q75": float(q[3]),
        "max": float(q[4]),
    }


def randomness_study(img, regions, oracle, runs, cfg, attack_fn=attack):
    """Repeat an attack with seeds ``cfg.seed + i`` for ``i < runs``.

    Trial statistics cover all runs; the distinct-class count covers the
    successful runs only.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    logs = []
    for i in range(runs):
        run_cfg = replace(cfg, seed=cfg.seed + i)
        result = attack_fn(img, regions, oracle, run_cfg)
        logs.append(RunLog(run_cfg.seed, bool(result.success), result.trials_used,
                           int(result.final_class)))
    finals = sorted({log.final_class for log in logs if log.success})
    return RandomnessStats(
        runs=logs,
        success_rate=_fraction(log.success for log in logs),
        trials=trial_quartiles([log.trials_used for log in logs]),
        distinct_final_classes=len(finals),
        final_classes=finals,
    )

