import numpy as np
import pytest

from detection import DetectionSet
from errors import DataError
from metrics import (
    HistoryEntry,
    MatchResult,
    average_precision,
    evaluate,
    map50,
    match,
    pr_curve,
    prf1,
    read_metrics,
    read_pr_curve,
    sequence_mse,
    sweep,
    write_metrics,
    write_pr_curve,
)

GT_A = [0.0, 0.0, 10.0, 10.0]
GT_B = [20.0, 20.0, 30.0, 30.0]


def dets(boxes, scores):
    return DetectionSet(np.array(boxes, dtype=float), np.array(scores, dtype=float))


def test_match_takes_best_unmatched_gt():
    result = match(dets([GT_A, [1, 1, 10, 10], [50, 50, 60, 60]], [0.9, 0.8, 0.7]), np.array([GT_A]))
    assert (result.tp, result.fp, result.fn) == (1, 2, 0)
    assert result.matched == [0, None, None]


def test_match_without_detections_or_gts():
    assert match(DetectionSet.empty(), np.array([GT_A])).fn == 1
    assert match(dets([GT_A], [0.5]), np.zeros((0, 4))).fp == 1


def test_prf1():
    assert prf1(MatchResult(4, 1, 1)) == pytest.approx((0.8, 0.8, 0.8))
    assert prf1(MatchResult(0, 0, 0)) == (0.0, 0.0, 0.0)


def test_average_precision_with_one_false_positive():
    frame = (dets([GT_A, [50, 50, 60, 60], GT_B], [0.9, 0.8, 0.7]), np.array([GT_A, GT_B]))
    assert map50([frame]) == pytest.approx(5 / 6)


def test_perfect_detections_score_one():
    frames = [(dets([GT_A, GT_B], [0.9, 0.6]), np.array([GT_A, GT_B])), (dets([GT_A], [0.8]), np.array([GT_A]))]
    assert map50(frames) == pytest.approx(1.0)


def test_no_detections_score_zero():
    assert map50([(DetectionSet.empty(), np.array([GT_A]))]) == 0.0
    assert average_precision(sweep([])) == 0.0


def test_pr_curve_has_one_row_per_distinct_score():
    frame = (dets([GT_A, [50, 50, 60, 60], GT_B], [0.9, 0.9, 0.4]), np.array([GT_A, GT_B]))
    curve = pr_curve(sweep([frame]))
    assert [p.threshold for p in curve] == [0.9, 0.4]
    assert curve[0].precision == pytest.approx(0.5)
    assert curve[-1].recall == pytest.approx(1.0)


def test_pr_curve_csv_round_trip(tmp_path):
    frame = (dets([GT_A, GT_B], [0.9, 0.3]), np.array([GT_A]))
    curve = pr_curve(sweep([frame]))
    path = write_pr_curve(curve, tmp_path / "pr_curve.csv")
    assert path.read_text().splitlines()[0] == "threshold,precision,recall"
    assert read_pr_curve(path) == curve


def test_read_pr_curve_rejects_other_files(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(DataError):
        read_pr_curve(path)
    with pytest.raises(DataError):
        read_pr_curve(tmp_path / "missing.csv")


def test_sequence_mse():
    assert sequence_mse(np.full((3, 4, 4), 7.0)) == 0.0
    frames = np.stack([np.zeros((4, 4)), np.ones((4, 4)), np.zeros((4, 4))])
    assert sequence_mse(frames) == pytest.approx(1.0)
    with pytest.raises(DataError):
        sequence_mse(np.zeros((1, 4, 4)))


def test_evaluate_picks_best_f1_operating_point():
    frame = (dets([GT_A, [50, 50, 60, 60]], [0.9, 0.2]), np.array([GT_A]))
    report, curve = evaluate([frame], conf_thresh=0.001)
    assert report.map50 == pytest.approx(1.0)
    assert report.pr_at_best_f1.f1 == pytest.approx(1.0)
    assert report.pr_at_best_f1.conf == 0.9
    assert report.pr_at_conf.precision == pytest.approx(0.5)
    assert len(curve) == 2


def test_metrics_file_round_trip(tmp_path):
    report, _ = evaluate([(dets([GT_A], [0.9]), np.array([GT_A]))], conf_thresh=0.5)
    report.history.append(HistoryEntry(epoch=1, step=3, loss=0.5, map50=1.0, f1=1.0))
    path = write_metrics(report, tmp_path / "metrics.json")
    assert read_metrics(path) == report
    with pytest.raises(DataError):
        read_metrics(tmp_path / "nope.json")
