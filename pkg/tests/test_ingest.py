"""Generator geometry, record/manifest round trips, and validation errors."""

import dataclasses

import numpy as np
import pytest

from ecgid.errors import (
    InvariantViolation,
    MalformedFile,
    NonFiniteSample,
    TooShort,
)
from ecgid.ingest import (
    CONDITIONS,
    DatasetManifest,
    EcgRecord,
    Wave,
    build_cohort,
    generate_subject_params,
    load_manifest,
    load_record,
    save_manifest,
    save_record,
    synthesize_record,
)

FS = 300.0


def clean_params(rest_hr=60.0, ex_hr=100.0, jitter=0.0):
    """Grid-friendly params: fixed waves, no jitter unless asked."""
    waves = {
        "P": Wave(0.15, -0.22, 0.020),
        "Q": Wave(-0.10, -0.05, 0.009),
        "R": Wave(1.2, 0.0, 0.011),
        "S": Wave(-0.15, 0.05, 0.009),
        "T": Wave(0.30, 0.28, 0.038),
    }
    return dataclasses.replace(
        generate_subject_params("sX", 0),
        waves=waves, rest_hr_bpm=rest_hr, ex_hr_bpm=ex_hr, hr_jitter_frac=jitter,
    )


# ===== parameter generation ==============================================

def test_params_deterministic_and_distinct():
    a1 = generate_subject_params("s01", 7)
    a2 = generate_subject_params("s01", 7)
    b = generate_subject_params("s02", 7)
    c = generate_subject_params("s01", 8)
    assert a1 == a2
    assert a1 != b and a1 != c


def test_params_within_ranges():
    for i in range(30):
        p = generate_subject_params("s%02d" % i, 123)
        assert 64.0 <= p.rest_hr_bpm <= 76.0
        assert 90.0 <= p.ex_hr_bpm <= 150.0
        assert 0.9 <= p.waves["R"].amplitude_mv <= 1.8
        assert -0.24 <= p.waves["P"].center_frac <= -0.20
        assert 0.255 <= p.waves["T"].center_frac <= 0.305
        assert p.waves["Q"].amplitude_mv < 0 and p.waves["S"].amplitude_mv < 0


def test_params_invariants_enforced():
    p = clean_params()
    bad = dict(p.waves)
    bad["P"] = Wave(0.15, 0.10, 0.02)  # P center after R
    with pytest.raises(InvariantViolation):
        dataclasses.replace(p, waves=bad)
    weak = dict(p.waves)
    weak["R"] = Wave(0.2, 0.0, 0.011)  # R no longer dominant over T
    with pytest.raises(InvariantViolation):
        dataclasses.replace(p, waves=weak)
    with pytest.raises(InvariantViolation):
        dataclasses.replace(p, ex_hr_bpm=50.0)  # below rest HR


# ===== beat grid ==========================================================

def test_hr60_gives_one_peak_per_second_on_grid():
    rec, truth = synthesize_record(clean_params(), "rest", 10.0, False, 5)
    # first R at 0.5 s, period exactly 1 s, beats placed strictly before 9.5 s
    assert truth.tolist() == [150, 450, 750, 1050, 1350, 1650, 1950, 2250, 2550]
    for r in truth:
        local = rec.samples[r - 5:r + 6]
        assert abs(int(np.argmax(local)) - 5) <= 1
        assert rec.samples[r] > 1.0  # R amplitude 1.2 dominates


def test_truth_matches_signal_argmax_with_jitter_and_noise():
    params = clean_params(jitter=0.03)
    rec, truth = synthesize_record(params, "rest", 20.0, True, 11)
    assert len(truth) >= 18
    for r in truth:
        local = rec.samples[r - 5:r + 6]
        assert abs(int(np.argmax(local)) - 5) <= 1


def test_synthesis_deterministic_per_seed():
    p = clean_params(jitter=0.03)
    r1, t1 = synthesize_record(p, "rest", 10.0, True, 42)
    r2, t2 = synthesize_record(p, "rest", 10.0, True, 42)
    r3, t3 = synthesize_record(p, "rest", 10.0, True, 43)
    assert np.array_equal(r1.samples, r2.samples) and np.array_equal(t1, t2)
    assert not np.array_equal(r1.samples, r3.samples)


def test_noise_off_baseline_is_flat_between_beats():
    rec, truth = synthesize_record(clean_params(), "rest", 10.0, False, 5)
    # midway between T end and next P start the model is a sum of far tails
    probe = truth[:-1] + 180  # 0.6 s after R at HR 60
    assert np.all(np.abs(rec.samples[probe]) < 1e-3)


# ===== exercise geometry ==================================================

def test_exercise_amplitude_factors_exact():
    p = clean_params()
    waves = dict(p.waves)
    waves["P"] = dataclasses.replace(waves["P"],
                                     amplitude_mv=waves["P"].amplitude_mv * 1.3)
    waves["T"] = dataclasses.replace(waves["T"],
                                     amplitude_mv=waves["T"].amplitude_mv * 0.6)
    pre_scaled = dataclasses.replace(p, waves=waves)
    rec_a, _ = synthesize_record(p, "post_exercise", 10.0, False, 9)
    rec_b, _ = synthesize_record(pre_scaled, "post_exercise", 10.0, False, 9,
                                 p_factor=1.0, t_factor=1.0)
    assert np.allclose(rec_a.samples, rec_b.samples, rtol=0, atol=1e-12)


def test_qrs_window_identical_across_conditions():
    # HR 60 and 100 both put beats on integer samples with zero jitter, and
    # QRS offsets use the rest period in both conditions, so the windows match
    p = clean_params(rest_hr=60.0, ex_hr=100.0)
    rest, truth_r = synthesize_record(p, "rest", 10.0, False, 3)
    ex, truth_e = synthesize_record(p, "post_exercise", 10.0, False, 3)
    # +/-15 samples covers Q through S but stays clear of the compressed
    # exercise T wave, whose tail reaches past +20 samples
    w_rest = rest.samples[truth_r[3] - 15:truth_r[3] + 16]
    w_ex = ex.samples[truth_e[3] - 15:truth_e[3] + 16]
    assert np.allclose(w_rest, w_ex, rtol=0, atol=1e-5)


def test_p_and_t_positions_compress_with_period():
    p = clean_params(rest_hr=60.0, ex_hr=100.0)
    rest, tr = synthesize_record(p, "rest", 10.0, False, 3)
    ex, te = synthesize_record(p, "post_exercise", 10.0, False, 3)
    # T at +0.28 * period: 84 samples at rest, 50.4 at exercise
    r, e = tr[3], te[3]
    t_rest = int(np.argmax(rest.samples[r + 40:r + 150])) + 40
    t_ex = int(np.argmax(ex.samples[e + 25:e + 90])) + 25
    assert abs(t_rest - 84) <= 1
    assert abs(t_ex - 50) <= 1
    # P at -0.22 * period: 66 samples at rest, 39.6 at exercise
    assert abs(int(np.argmax(rest.samples[r - 90:r - 40])) + (r - 90) - (r - 66)) <= 1
    assert abs(int(np.argmax(ex.samples[e - 60:e - 25])) + (e - 60) - (e - 40)) <= 1


# ===== record round trip ==================================================

def test_record_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(77)
    samples = rng.standard_normal(10_000) * 1.7
    rec = EcgRecord("s01", "rest", FS, samples)
    path = tmp_path / "s01_rest.txt"
    save_record(rec, path)
    back = load_record(path, "s01", "rest")
    assert back.sampling_rate_hz == FS
    assert np.array_equal(back.samples, samples)


def test_record_validation_errors(tmp_path):
    with pytest.raises(TooShort):
        EcgRecord("s", "rest", FS, np.zeros(100))
    with pytest.raises(NonFiniteSample):
        EcgRecord("s", "rest", FS, np.full(1000, np.nan))
    with pytest.raises(InvariantViolation):
        EcgRecord("s", "nap", FS, np.zeros(1000))
    with pytest.raises(InvariantViolation):
        EcgRecord("s", "rest", 60.0, np.zeros(1000))  # under Nyquist bound


def test_load_record_error_paths(tmp_path):
    bad_header = tmp_path / "a.txt"
    bad_header.write_text("hello\n1.0\n")
    with pytest.raises(MalformedFile):
        load_record(bad_header, "s", "rest")

    bad_line = tmp_path / "b.txt"
    bad_line.write_text("fs=300\n" + "0.1\n" * 700 + "oops\n")
    with pytest.raises(MalformedFile) as exc:
        load_record(bad_line, "s", "rest")
    assert "line 702" in str(exc.value)

    non_finite = tmp_path / "c.txt"
    non_finite.write_text("fs=300\n" + "0.1\n" * 700 + "nan\n")
    with pytest.raises(NonFiniteSample):
        load_record(non_finite, "s", "rest")

    short = tmp_path / "d.txt"
    short.write_text("fs=300\n" + "0.1\n" * 100)
    with pytest.raises(TooShort):
        load_record(short, "s", "rest")


# ===== manifest ===========================================================

def test_manifest_round_trip_with_seed(tmp_path):
    m = DatasetManifest(
        (
            ("s01", "rest", "s01_rest.txt", 300.0),
            ("s01", "post_exercise", "s01_ex.txt", 150.0),
            ("s02", "rest", "s02_rest.txt", 300.0),
        ),
        seed=424242,
    )
    path = tmp_path / "manifest.csv"
    save_manifest(m, path)
    back = load_manifest(path)
    assert back.entries == m.entries
    assert back.seed == 424242
    assert back.subject_ids == ["s01", "s02"]


def test_manifest_validation():
    with pytest.raises(InvariantViolation):
        DatasetManifest(())
    with pytest.raises(InvariantViolation):  # s02 lacks a rest entry
        DatasetManifest((
            ("s01", "rest", "a.txt", 10.0),
            ("s02", "post_exercise", "b.txt", 10.0),
        ))
    with pytest.raises(InvariantViolation):  # duplicate triple
        DatasetManifest((
            ("s01", "rest", "a.txt", 10.0),
            ("s01", "rest", "a.txt", 12.0),
        ))


def test_manifest_malformed_lines(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("s01,rest,a.txt\n")
    with pytest.raises(MalformedFile) as exc:
        load_manifest(p)
    assert "line 1" in str(exc.value)
    p.write_text("s01,rest,a.txt,ten\n")
    with pytest.raises(MalformedFile):
        load_manifest(p)


# ===== cohort builder =====================================================

def test_build_cohort_shape_and_determinism():
    cohort = build_cohort(3, seed=99, rest_duration_s=10.0, ex_duration_s=8.0,
                          noise_on=False)
    assert len(cohort) == 6
    ids = [rec.subject_id for rec, _ in cohort]
    conds = [rec.condition for rec, _ in cohort]
    assert ids == ["s01", "s01", "s02", "s02", "s03", "s03"]
    assert conds == ["rest", "post_exercise"] * 3
    again = build_cohort(3, seed=99, rest_duration_s=10.0, ex_duration_s=8.0,
                         noise_on=False)
    for (r1, t1), (r2, t2) in zip(cohort, again):
        assert np.array_equal(r1.samples, r2.samples)
        assert np.array_equal(t1, t2)
    assert all(c in CONDITIONS for c in conds)
