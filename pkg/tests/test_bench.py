"""Tests for the experiment harness: config, splits, runs, reports."""

import dataclasses

import numpy as np
import pytest

from conftest import write_cohort
from ecgid.bench import (
    ExperimentReport,
    PipelineConfig,
    aux_eval_split,
    cohort_matrix,
    config_to_text,
    fit_pipeline_state,
    parse_config,
    parse_report_csv,
    render_report,
    run_pipeline,
    split_protocol,
    state_fingerprint,
    sweep_top_n,
    _split_indices,
)
from ecgid.errors import (
    EmptyCohort,
    InvariantViolation,
    MalformedFile,
)
from ecgid.features import FeatureMatrix


@pytest.fixture(scope="module")
def small_manifest(tmp_path_factory):
    d = tmp_path_factory.mktemp("cohort3")
    return write_cohort(str(d), n_subjects=3, seed=5)


@pytest.fixture(scope="module")
def fused_manifest(tmp_path_factory):
    d = tmp_path_factory.mktemp("cohort4")
    return write_cohort(str(d), n_subjects=4, seed=11)


def toy_matrix(per_subject_rows, layout="toy"):
    """per_subject_rows: list of (sid, condition, n_rows); values encode the
    global row ordinal so chronology is checkable."""
    vals, sids, conds = [], [], []
    at = 0
    for sid, cond, n in per_subject_rows:
        for _ in range(n):
            vals.append([float(at)])
            sids.append(sid)
            conds.append(cond)
            at += 1
    return FeatureMatrix(np.array(vals), tuple(sids), tuple(conds), layout)


# ===== config =============================================================

def test_config_round_trip():
    cfg = PipelineConfig(stage="ac", n_lags=40, window_s=1.0,
                         reduction="pca", normalize=True, classifier="knn",
                         knn_k=3, max_beats_per_subject=50)
    back = parse_config(config_to_text(cfg))
    assert back == cfg


def test_config_parse_ignores_comments_and_blanks():
    cfg = parse_config("# comment\n\nstage=cwt\n normalize = on \n")
    assert cfg.stage == "cwt"
    assert cfg.normalize is True


def test_config_parse_rejects_bad_lines():
    with pytest.raises(MalformedFile):
        parse_config("stage qrs30\n")
    with pytest.raises(MalformedFile):
        parse_config("no_such_key=1\n")
    with pytest.raises(MalformedFile):
        parse_config("top_n=abc\n")


def test_config_validation():
    with pytest.raises(InvariantViolation):
        PipelineConfig(stage="nope")
    with pytest.raises(InvariantViolation):
        PipelineConfig(reduction="lda")
    with pytest.raises(InvariantViolation):
        PipelineConfig(classifier="forest")
    with pytest.raises(InvariantViolation):
        PipelineConfig(lam=1.5)
    with pytest.raises(InvariantViolation):
        PipelineConfig(stage="ac", n_lags=200, window_s=1.0)


def test_pipeline_ids():
    assert PipelineConfig(stage="qrs30", reduction="pca").pipeline_id \
        == "qrs30+pca+svm"
    assert PipelineConfig(stage="fused_kl", lam=0.3, top_n=200,
                          normalize=True).pipeline_id \
        == "fused_kl(0.3,200)+zscore+svm"
    assert PipelineConfig(stage="ac", n_lags=80,
                          classifier="knn").pipeline_id == "ac(80,1)+knn1"


# ===== protocol split =====================================================

def test_split_indices_arithmetic():
    tr, te = _split_indices(10, "rest_rest")
    assert list(tr) == list(range(7)) and list(te) == [7, 8, 9]
    tr, te = _split_indices(10, "ex_first70")
    assert list(tr) == list(range(7)) and list(te) == [7, 8, 9]
    tr, te = _split_indices(10, "ex_last70")
    assert list(tr) == [3, 4, 5, 6, 7, 8, 9] and list(te) == [0, 1, 2]


def test_split_rest_rest_chronological():
    m = toy_matrix([("s00", "rest", 20), ("s01", "rest", 20)])
    split = split_protocol(m, "rest_rest")
    assert split.n_subjects == 2
    assert split.train.n_rows == 28 and split.test.n_rows == 12
    s0_train = [v for v, s in zip(split.train.values[:, 0],
                                  split.train.subject_ids) if s == "s00"]
    assert s0_train == [float(i) for i in range(14)]
    s0_test = [v for v, s in zip(split.test.values[:, 0],
                                 split.test.subject_ids) if s == "s00"]
    assert s0_test == [float(i) for i in range(14, 20)]


def test_split_ex_last70_takes_late_rows_for_training():
    m = toy_matrix([("s00", "post_exercise", 20)])
    split = split_protocol(m, "ex_last70")
    assert list(split.train.values[:, 0]) == [float(i) for i in range(6, 20)]
    assert list(split.test.values[:, 0]) == [float(i) for i in range(6)]


def test_split_rest_ex_whole_conditions():
    m = toy_matrix([("s00", "rest", 15), ("s00", "post_exercise", 12),
                    ("s01", "rest", 15), ("s01", "post_exercise", 12)])
    split = split_protocol(m, "rest_ex")
    assert split.train.n_rows == 30 and split.test.n_rows == 24
    assert set(split.train.conditions) == {"rest"}
    assert set(split.test.conditions) == {"post_exercise"}


def test_split_drops_short_subjects_with_counter():
    # 10 rest rows give only 7 training rows, below the 10-row floor
    m = toy_matrix([("s00", "rest", 30), ("s01", "rest", 10)])
    split = split_protocol(m, "rest_rest")
    assert split.dropped_subjects == ("s01",)
    assert split.n_subjects == 1
    assert set(split.train.subject_ids) == {"s00"}


def test_split_empty_cohort_raises():
    m = toy_matrix([("s00", "rest", 10), ("s01", "rest", 9)])
    with pytest.raises(EmptyCohort):
        split_protocol(m, "rest_rest")


def test_split_unknown_protocol():
    m = toy_matrix([("s00", "rest", 30)])
    with pytest.raises(InvariantViolation):
        split_protocol(m, "kfold")


def test_aux_eval_split_partitions():
    subjects = ["s%02d" % i for i in range(9)]
    aux, eval_ = aux_eval_split(subjects, seed=7)
    assert len(aux) == 4 and len(eval_) == 5
    assert sorted(aux + eval_) == subjects
    assert aux_eval_split(subjects, seed=7) == (aux, eval_)
    assert aux_eval_split(subjects, seed=8) != (aux, eval_)


# ===== pipeline runs ======================================================

def test_run_pipeline_qrs30_rest_rest(small_manifest):
    cfg = PipelineConfig(stage="qrs30", reduction="pca")
    report = run_pipeline(small_manifest, cfg, "rest_rest", seed=1)
    assert report.pipeline == "qrs30+pca+svm"
    assert report.protocol == "rest_rest"
    assert report.n_subjects == 3
    assert report.train_beats >= 30 and report.test_beats >= 9
    assert 0.0 <= report.test_accuracy <= 1.0
    # three well-separated synthetic subjects at rest are easy
    assert report.test_accuracy >= 0.8
    assert report.train_accuracy >= 0.8
    assert report.converged
    assert sum(n for (_, _, n) in report.confusion) == report.test_beats


def test_run_pipeline_deterministic_and_cacheable(small_manifest):
    cfg = PipelineConfig(stage="qrs30", reduction="pca")
    cache = {}
    a = run_pipeline(small_manifest, cfg, "rest_rest", seed=1, cache=cache)
    b = run_pipeline(small_manifest, cfg, "rest_rest", seed=1, cache=cache)
    c = run_pipeline(small_manifest, cfg, "rest_rest", seed=1)
    assert a == b == c


def test_run_pipeline_knn(small_manifest):
    cfg = PipelineConfig(stage="qrs30", classifier="knn", knn_k=1)
    report = run_pipeline(small_manifest, cfg, "rest_rest", seed=1)
    assert report.converged
    assert report.pipeline == "qrs30+knn1"
    assert 0.0 <= report.test_accuracy <= 1.0


def test_run_pipeline_rest_ex_uses_whole_conditions(small_manifest):
    cfg = PipelineConfig(stage="beat300", normalize=True)
    cache = {}
    report = run_pipeline(small_manifest, cfg, "rest_ex", seed=1, cache=cache)
    rest_rows, _ = cohort_matrix(small_manifest, cfg, "rest_rest", 1, cache)
    assert report.train_beats == rest_rows.n_rows
    assert report.test_beats >= 3


def test_run_pipeline_band_variant(small_manifest):
    cfg = PipelineConfig(stage="bandpass10_40+beat300", normalize=True)
    report = run_pipeline(small_manifest, cfg, "rest_rest", seed=1)
    assert report.pipeline == "bandpass10_40+beat300+zscore+svm"
    assert report.train_beats >= 30


def test_run_pipeline_unknown_protocol(small_manifest):
    with pytest.raises(InvariantViolation):
        run_pipeline(small_manifest, PipelineConfig(), "loocv", seed=1)


def test_fused_kl_run_and_sweep(fused_manifest):
    cfg = PipelineConfig(stage="fused_kl", lam=0.3, top_n=20, normalize=True,
                         max_beats_per_subject=15)
    cache = {}
    report = run_pipeline(fused_manifest, cfg, "rest_ex", seed=2, cache=cache)
    # two of four subjects are held out for evaluation
    assert report.n_subjects == 2
    assert report.pipeline == "fused_kl(0.3,20)+zscore+svm"

    reports = sweep_top_n(fused_manifest, cfg, "rest_ex", 2, [10, 20],
                          cache=cache)
    assert [r.pipeline for r in reports] == [
        "fused_kl(0.3,10)+zscore+svm", "fused_kl(0.3,20)+zscore+svm"]
    assert reports[1] == report  # same config, same seed, shared cache


def test_sweep_requires_fused_kl(small_manifest):
    with pytest.raises(InvariantViolation):
        sweep_top_n(small_manifest, PipelineConfig(stage="qrs30"),
                    "rest_rest", 1, [10])


def test_no_leakage_fingerprint(small_manifest):
    cfg = PipelineConfig(stage="qrs30", normalize=True, reduction="pca")
    cache = {}
    report = run_pipeline(small_manifest, cfg, "rest_rest", seed=3,
                          cache=cache)
    matrix, _ = cohort_matrix(small_manifest, cfg, "rest_rest", 3, cache)
    split = split_protocol(matrix, "rest_rest")
    state = fit_pipeline_state(split.train, cfg, seed=3)
    assert state_fingerprint(state) == report.state_fingerprint

    # corrupt every test row; the fitted state must not move
    sid = np.array(matrix.subject_ids)
    cond = np.array(matrix.conditions)
    poisoned = matrix.values.copy()
    rng = np.random.default_rng(0)
    for s in sorted(set(matrix.subject_ids)):
        rows = np.flatnonzero((sid == s) & (cond == "rest"))
        n_train = int(np.floor(0.7 * rows.size))
        poisoned[rows[n_train:]] = rng.normal(size=(rows.size - n_train,
                                                    matrix.dim))
    poisoned_m = FeatureMatrix(poisoned, matrix.subject_ids,
                               matrix.conditions, matrix.layout_id)
    split_p = split_protocol(poisoned_m, "rest_rest")
    state_p = fit_pipeline_state(split_p.train, cfg, seed=3)
    assert state_fingerprint(state_p) == report.state_fingerprint


# ===== reports ============================================================

def fake_report(pipeline="qrs30+pca+svm", protocol="rest_rest",
                train=0.95, test=0.921, majority=1.0, n_test=10):
    return ExperimentReport(
        pipeline=pipeline, protocol=protocol, train_accuracy=train,
        test_accuracy=test, subject_majority_accuracy=majority,
        n_subjects=2, train_beats=20, test_beats=n_test, skipped_beats=0,
        dropped_subjects=(), converged=True, seed=0,
        confusion=(("s00", "s00", n_test),), state_fingerprint="ab12")


def test_render_report_csv_formatting():
    text = render_report([fake_report()], "csv")
    lines = text.strip().split("\n")
    assert lines[0] == ("pipeline,protocol,train_acc_pct,test_acc_pct,"
                        "subjects,train_beats,test_beats,skipped_beats,"
                        "converged,subject_majority_acc_pct")
    assert lines[1].startswith("qrs30+pca+svm,rest_rest,95.0%,92.1%,")


def test_render_report_sorted_and_parse_back():
    reports = [fake_report(pipeline="cwt+svm", protocol="rest_rest"),
               fake_report(pipeline="ac(80,1)+svm", protocol="rest_ex"),
               fake_report(pipeline="ac(80,1)+svm", protocol="rest_rest")]
    text = render_report(reports, "csv")
    rows = parse_report_csv(text)
    assert [(r["pipeline"], r["protocol"]) for r in rows] == [
        ("ac(80,1)+svm", "rest_ex"), ("ac(80,1)+svm", "rest_rest"),
        ("cwt+svm", "rest_rest")]


def test_render_report_quotes_comma_pipeline_ids():
    rep = fake_report(pipeline="fused_kl(0.3,200)+zscore+svm")
    rows = parse_report_csv(render_report([rep], "csv"))
    assert rows[0]["pipeline"] == "fused_kl(0.3,200)+zscore+svm"


def test_render_report_markdown():
    text = render_report([fake_report()], "markdown")
    lines = text.strip().split("\n")
    assert lines[0].startswith("| pipeline | protocol |")
    assert len(lines) == 3
    assert "95.0%" in lines[2]


def test_render_report_validations():
    with pytest.raises(InvariantViolation):
        render_report([], "csv")
    with pytest.raises(InvariantViolation):
        render_report([fake_report()], "html")


def test_report_invariants():
    with pytest.raises(InvariantViolation):
        fake_report(test=1.5)
    with pytest.raises(InvariantViolation):
        dataclasses.replace(fake_report(), test_beats=99)


def test_parse_report_rejects_wrong_header():
    with pytest.raises(MalformedFile):
        parse_report_csv("a,b,c\n1,2,3\n")
