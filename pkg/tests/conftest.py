"""Shared synthesis helpers for the test suite."""

import dataclasses
import os

from ecgid.ingest import (
    DatasetManifest,
    Wave,
    build_cohort,
    generate_subject_params,
    save_manifest,
    save_record,
)

FS = 300.0


def write_cohort(dirpath, n_subjects, seed, rest_s=30.0, ex_s=20.0,
                 noise_on=True):
    """Synthesize a cohort into a directory; returns the manifest path."""
    cohort = build_cohort(n_subjects, seed, rest_duration_s=rest_s,
                          ex_duration_s=ex_s, noise_on=noise_on)
    entries = []
    for record, _truth in cohort:
        rel = "%s_%s.txt" % (record.subject_id, record.condition)
        save_record(record, os.path.join(dirpath, rel))
        entries.append((record.subject_id, record.condition, rel,
                        record.duration_s))
    path = os.path.join(dirpath, "manifest.txt")
    save_manifest(DatasetManifest(tuple(entries), seed=seed), path)
    return path


def fixed_params(rest_hr=60.0, ex_hr=100.0, jitter=0.0):
    """Deterministic wave set on a grid-friendly heart rate."""
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


def match_peaks(detected, truth, tol):
    """Greedy one-to-one matching; returns (true_pos, n_detected, n_truth)."""
    used = set()
    tp = 0
    for t in truth:
        best = None
        for i, d in enumerate(detected):
            if i in used or abs(int(d) - int(t)) > tol:
                continue
            if best is None or abs(int(d) - int(t)) < abs(int(detected[best]) - int(t)):
                best = i
        if best is not None:
            used.add(best)
            tp += 1
    return tp, len(detected), len(truth)
