import csv
import io
import json

import numpy as np
import pytest

from colorfool import toy
from colorfool.attack import AttackConfig, AttackResult
from colorfool.defenses import FilterSpec
from colorfool.evaluation import (
    DetectionThreshold,
    EvalReport,
    ImageRecord,
    build_report,
    calibrate,
    detect,
    l1_prob_gap,
    randomness_study,
    robustness_after_filter,
    success_rate,
    threshold_from_gaps,
    transferability,
    undetectability,
)
from colorfool.oracle import FunctionOracle, ReferenceClassifier
from colorfool.regions import decompose, load_category_mapping
from colorfool.colorspace import srgb_to_lab

REQ1 = FilterSpec("requantize", 1)
MED3 = FilterSpec("median", 3)


def binary_image(rng, shape=(6, 6)):
    return (rng.integers(0, 2, shape + (3,)) * 255).astype(np.uint8)


def table_oracle(table, default=(1.0, 0.0, 0.0)):
    """Oracle that looks up the probability vector by image bytes."""
    return FunctionOracle(lambda img: np.array(table.get(img.tobytes(), default)))


def result(success):
    return AttackResult(np.zeros((1, 1, 3), np.uint8), success, 1, 0, 1 if success else 0)


def test_gap_zero_for_identity_filter(rng):
    img = binary_image(rng)
    np.testing.assert_array_equal(REQ1(img), img)
    oracle = ReferenceClassifier(rng.normal(size=(3, 24)))
    assert l1_prob_gap(oracle, img, REQ1) == 0.0


def test_gap_two_for_disjoint_one_hot():
    img = np.full((3, 3, 3), 100, np.uint8)
    oracle = FunctionOracle(lambda x: np.array([1.0, 0.0]) if (x == 100).all() else np.array([0.0, 1.0]))
    assert l1_prob_gap(oracle, img, REQ1) == 2.0


def test_gap_hand_sum():
    img = np.full((3, 3, 3), 100, np.uint8)
    table = {img.tobytes(): (0.5, 0.3, 0.2), REQ1(img).tobytes(): (0.4, 0.4, 0.2)}
    assert l1_prob_gap(table_oracle(table), img, REQ1) == pytest.approx(0.2, abs=1e-12)


def test_threshold_constant_gaps():
    tau = threshold_from_gaps([0.1] * 20)
    assert tau == 0.1
    assert sum(g > tau for g in [0.1] * 20) == 0


def test_threshold_nearest_rank():
    gaps = list(range(1, 101))
    tau = threshold_from_gaps(gaps)
    assert tau == 95
    assert sum(g > tau for g in gaps) / len(gaps) == 0.05


def test_threshold_matches_sort_oracle(rng):
    for n in (20, 21, 37, 199, 200, 1000):
        gaps = rng.choice(np.round(rng.uniform(0, 2, 50), 3), size=n)
        ordered = sorted(gaps)
        brute = min(g for g in ordered if sum(x > g for x in ordered) <= 0.05 * n)
        assert threshold_from_gaps(gaps) == brute


def test_threshold_needs_twenty():
    with pytest.raises(ValueError, match="at least 20"):
        threshold_from_gaps([0.0] * 19)


def test_calibrate_with_oracle(rng):
    images = [rng.integers(0, 256, (8, 8, 3), dtype=np.uint8) for _ in range(40)]
    oracle = ReferenceClassifier(rng.normal(size=(4, 24)) * 3)
    th = calibrate(images, oracle, MED3)
    gaps = [l1_prob_gap(oracle, img, MED3) for img in images]
    assert th.tau == threshold_from_gaps(gaps)
    assert sum(g > th.tau for g in gaps) <= 2
    assert th.oracle == oracle.name and th.filter == MED3
    with pytest.raises(ValueError):
        calibrate(images[:5], oracle, MED3)


def test_detect_strict_boundary():
    img = np.full((3, 3, 3), 100, np.uint8)
    table = {img.tobytes(): (0.5, 0.3, 0.2), REQ1(img).tobytes(): (0.4, 0.4, 0.2)}
    oracle = table_oracle(table)
    gap = l1_prob_gap(oracle, img, REQ1)
    at = detect(img, oracle, [DetectionThreshold(REQ1, "t", gap)])
    assert at.flags == {"requantize:1": False} and not at.any
    below = detect(img, oracle, [DetectionThreshold(REQ1, "t", gap - 1e-9)])
    assert below.flags == {"requantize:1": True} and below.any


def test_detect_any_is_disjunction():
    img = np.full((3, 3, 3), 100, np.uint8)
    table = {img.tobytes(): (0.5, 0.3, 0.2), REQ1(img).tobytes(): (0.4, 0.4, 0.2)}
    oracle = table_oracle(table)
    ths = [DetectionThreshold(REQ1, "t", 0.1), DetectionThreshold(MED3, "t", 0.0)]
    d = detect(img, oracle, ths)
    assert d.flags == {"requantize:1": True, "median:3": False}
    assert d.any
    zero = detect(img, oracle, [DetectionThreshold(MED3, "t", 0.0)])
    assert not zero.any


def test_success_rate():
    assert success_rate([result(True)] * 4) == 1.0
    assert success_rate([result(False)] * 4) == 0.0
    assert success_rate([result(True)] * 3 + [result(False)]) == 0.75
    with pytest.raises(ValueError):
        success_rate([])


def test_transferability_cases():
    a = np.full((2, 2, 3), 10, np.uint8)
    b = np.full((2, 2, 3), 200, np.uint8)
    c = np.full((2, 2, 3), 30, np.uint8)
    oracle = FunctionOracle(lambda x: np.array([1.0, 0.0]) if x.mean() < 100 else np.array([0.0, 1.0]))
    assert transferability([a, c], [a, c], oracle) == 0.0
    # a -> b flips, c -> c does not
    assert transferability([b, c], [a, c], oracle) == 0.5
    with pytest.raises(ValueError):
        transferability([a], [a, c], oracle)


def test_transferability_same_oracle_equals_sr():
    rgbs = [s for s, _ in toy.scenes(6, seed=3)]
    oracle = toy.template_classifier()
    from colorfool.attack import attack

    results = [attack(x, None, oracle, AttackConfig(500, seed=i, variant="colorfool-r")) for i, x in enumerate(rgbs)]
    assert all(r.success for r in results)
    assert transferability([r.adversarial for r in results], rgbs, oracle) == success_rate(results)


def test_robustness_restoring_filter_is_worst(rng):
    clean_cls = [0, 0, 0]
    advs = [rng.integers(1, 255, (6, 6, 3), dtype=np.uint8) | 1 for _ in range(3)]
    # odd pixels => adversarial class 1; requantize:1 maps to {0,255} and restores class 0
    def predict(img):
        return np.array([1.0, 0.0]) if np.isin(img, (0, 255)).all() else np.array([0.0, 1.0])

    oracle = FunctionOracle(predict)
    per_filter, worst = robustness_after_filter(advs, clean_cls, oracle, [REQ1, MED3])
    assert per_filter == {"requantize:1": 0.0, "median:3": 1.0}
    assert worst == 0.0
    single, worst_single = robustness_after_filter(advs, clean_cls, oracle, [MED3])
    assert worst_single == single["median:3"] == 1.0


def test_undetectability_extremes():
    imgs = [np.full((3, 3, 3), v, np.uint8) for v in (10, 20, 30, 40)]
    originals = {i.tobytes() for i in imgs}
    spec = FilterSpec("requantize", 1)
    th = [DetectionThreshold(spec, "t", 0.5)]
    never = FunctionOracle(lambda x: np.array([0.5, 0.5]))
    assert undetectability(imgs, never, th) == (1.0, {"requantize:1": 1.0})
    always = FunctionOracle(lambda x: np.array([1.0, 0.0]) if x.tobytes() in originals else np.array([0.0, 1.0]))
    assert undetectability(imgs, always, th) == (0.0, {"requantize:1": 0.0})


def test_undetectability_one_of_four():
    imgs = [np.full((2, 2, 3), v, np.uint8) for v in (10, 20, 30, 40)]
    target = imgs[2].tobytes()

    def predict(x):
        return np.array([0.0, 1.0]) if x.tobytes() == target else np.array([1.0, 0.0])

    spec = FilterSpec("requantize", 1)
    overall, per = undetectability(imgs, FunctionOracle(predict), [DetectionThreshold(spec, "t", 0.5)])
    assert overall == 0.75 and per == {"requantize:1": 0.75}


def _record(i, flips, detected):
    return ImageRecord(
        name=f"img{i}", clean_class=0, adv_class=1 if flips[0] else 0, trials=i + 1,
        filtered_class={"median:3": int(flips[1]), "jpeg:75": int(flips[2])},
        detected={"median:3": detected[0], "jpeg:75": detected[1]},
        transfer={"other": (2, 2 if not flips[3] else 5)},
    )


def test_report_summary_and_csv():
    records = [
        _record(0, (True, True, False, True), (False, False)),
        _record(1, (True, False, False, False), (True, False)),
        _record(2, (False, False, True, False), (False, False)),
        _record(3, (True, True, True, True), (False, True)),
    ]
    report = EvalReport(records, ["median:3", "jpeg:75"], ["other"], {"k": "v"})
    s = report.summary()
    assert s["success_rate"] == 0.75
    assert s["robustness"]["per_filter"] == {"median:3": 0.5, "jpeg:75": 0.5}
    assert s["robustness"]["worst_case_sr"] == 0.5
    assert s["undetectability"] == {"any_filter": 0.5, "per_filter": {"median:3": 0.75, "jpeg:75": 0.75}}
    assert s["transferability"] == {"other": 0.5}
    rows = list(csv.DictReader(io.StringIO(report.to_csv())))
    assert len(rows) == 4
    assert rows[1]["detected[median:3]"] == "1" and rows[1]["success"] == "1"
    assert json.loads(report.to_json())["metadata"] == {"k": "v"}


def test_build_report_consistent_with_functions(rng):
    pairs = toy.scenes(5, seed=9)
    clean = [p[0] for p in pairs]
    adv = [np.clip(c.astype(int) + rng.integers(-60, 60, 3), 0, 255).astype(np.uint8) for c in clean]
    oracle = toy.template_classifier()
    grid = [MED3, FilterSpec("jpeg", 50)]
    ths = [DetectionThreshold(spec, oracle.name, 0.05) for spec in grid]
    other = ReferenceClassifier(rng.normal(size=(3, 24)), name="other")
    report = build_report([f"x{i}" for i in range(5)], clean, adv, oracle, grid, ths, [other])
    s = report.summary()
    clean_cls = [oracle.classify(c) for c in clean]
    per, worst = robustness_after_filter(adv, clean_cls, oracle, grid)
    assert s["robustness"]["per_filter"] == per and s["robustness"]["worst_case_sr"] == worst
    overall, per_det = undetectability(adv, oracle, ths)
    assert s["undetectability"] == {"any_filter": overall, "per_filter": per_det}
    assert s["transferability"] == {"other": transferability(adv, clean, other)}


def test_randomness_always_fooled_first_trial():
    rgb, _ = toy.scenes(1, seed=1)[0]
    calls = []

    def predict(x):
        # each run queries the clean image, then trial 1
        calls.append(1)
        return np.array([1.0, 0.0]) if len(calls) % 2 else np.array([0.0, 1.0])

    oracle = FunctionOracle(predict)
    stats = randomness_study(rgb, None, oracle, 10, AttackConfig(50, seed=0, variant="colorfool-r"))
    assert stats.success_rate == 1.0
    assert stats.trials == {"min": 1.0, "q25": 1.0, "median": 1.0, "q75": 1.0, "max": 1.0}
    assert stats.distinct_final_classes == 1
    assert [r.seed for r in stats.runs] == list(range(10))


def test_randomness_constant_oracle():
    rgb, _ = toy.scenes(1, seed=1)[0]
    stats = randomness_study(rgb, None, toy.constant_oracle(), 10, AttackConfig(20, variant="colorfool-r"))
    assert stats.success_rate == 0.0
    assert set(stats.trials.values()) == {20.0}
    assert stats.distinct_final_classes == 0


def test_randomness_two_foils():
    rgb, labels = toy.scenes(1, seed=2)[0]
    rs = decompose(srgb_to_lab(rgb), labels, load_category_mapping())
    oracle = toy.mean_shift_oracle(rgb, threshold=4.0)
    stats = randomness_study(rgb, rs, oracle, 30, AttackConfig(200, seed=100))
    finals = {r.final_class for r in stats.runs if r.success}
    assert stats.distinct_final_classes == len(finals) <= 2
    assert finals <= {1, 2}
    with pytest.raises(ValueError):
        randomness_study(rgb, rs, oracle, 0, AttackConfig(10))
