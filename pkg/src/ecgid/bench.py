"""Experiment harness: pipeline configuration, train/test protocols,
end-to-end runs over a cohort manifest, and report rendering.

A pipeline is preprocess -> detect -> featurize -> (select / normalize /
reduce, fitted on training or auxiliary rows only) -> classify. Everything
downstream of featurization is fitted exclusively on training data; the
fitted state is fingerprinted so leakage is testable.
"""

import csv
import hashlib
import io
import os
from dataclasses import dataclass, fields, replace

import numpy as np

from . import classify as _classify
from . import features as _features
from . import select as _select
from .detect import QrsDetection, detect_r_peaks
from .dsp import preprocess_ecg
from .errors import (
    EcgidError,
    EmptyCohort,
    InvariantViolation,
    MalformedFile,
    StageFailure,
)
from .ingest import EcgRecord, derive_seed, load_manifest, load_record

PROTOCOLS = ("rest_rest", "ex_first70", "ex_last70", "rest_ex")
STAGES = ("qrs30", "beat300", "pqrst240", "bandpass10_40+beat300",
          "stft", "cwt", "ac", "ac_beat", "fused", "fused_kl")
REDUCTIONS = ("none", "pca")
CLASSIFIERS = ("svm", "knn")
TRAIN_FRACTION = 0.7
MIN_TRAIN_ROWS = 10
MIN_TEST_ROWS = 3

REPORT_COLUMNS = ("pipeline", "protocol", "train_acc_pct", "test_acc_pct",
                  "subjects", "train_beats", "test_beats", "skipped_beats",
                  "converged", "subject_majority_acc_pct")


# ===== configuration ======================================================

@dataclass(frozen=True)
class PipelineConfig:
    """Everything one experiment needs besides the data and the protocol."""

    stage: str = "qrs30"
    n_lags: int = 80
    window_s: float = 1.0
    lam: float = 0.3
    top_n: int = 200
    reduction: str = "none"
    variance_retained: float = 0.99
    normalize: bool = False
    classifier: str = "svm"
    c: float = 100.0
    gamma: float = 1.0
    tol: float = 1e-3
    max_epochs: int = 200
    knn_k: int = 1
    lo_hz: float = 0.5
    hi_hz: float = 40.0
    max_beats_per_subject: int = 120

    def __post_init__(self):
        if self.stage not in STAGES:
            raise InvariantViolation("unknown stage %r (one of %s)"
                                     % (self.stage, ", ".join(STAGES)))
        if self.reduction not in REDUCTIONS:
            raise InvariantViolation("unknown reduction %r" % (self.reduction,))
        if self.classifier not in CLASSIFIERS:
            raise InvariantViolation("unknown classifier %r" % (self.classifier,))
        if not 0 <= self.lam <= 1:
            raise InvariantViolation("lam must lie in [0, 1]")
        if self.stage == "ac" and not self.n_lags < self.window_s * 300.0 / 2:
            raise InvariantViolation(
                "ac needs n_lags < window_s * fs / 2 at fs = 300")
        if self.max_beats_per_subject < 1:
            raise InvariantViolation("max_beats_per_subject must be >= 1")

    @property
    def stage_id(self):
        if self.stage == "ac":
            return "ac(%d,%g)" % (self.n_lags, self.window_s)
        if self.stage == "fused_kl":
            return "fused_kl(%g,%d)" % (self.lam, self.top_n)
        return self.stage

    @property
    def pipeline_id(self):
        parts = [self.stage_id]
        if self.normalize:
            parts.append("zscore")
        if self.reduction == "pca":
            parts.append("pca")
        parts.append(self.classifier if self.classifier == "svm"
                     else "knn%d" % self.knn_k)
        return "+".join(parts)


_BOOL_WORDS = {"1": True, "0": False, "true": True, "false": False,
               "on": True, "off": False}


def parse_config(text):
    """Build a PipelineConfig from flat `key=value` lines.

    Blank lines and `#` comments are ignored; unknown keys are rejected.
    """
    types = {f.name: f.type for f in fields(PipelineConfig)}
    values = {}
    for i, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MalformedFile("config line %d: expected key=value, got %r"
                                % (i, line))
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in types:
            raise MalformedFile("config line %d: unknown key %r" % (i, key))
        try:
            if types[key] is bool or types[key] == "bool":
                values[key] = _BOOL_WORDS[val.lower()]
            elif types[key] is int or types[key] == "int":
                values[key] = int(val)
            elif types[key] is float or types[key] == "float":
                values[key] = float(val)
            else:
                values[key] = val
        except (KeyError, ValueError):
            raise MalformedFile("config line %d: bad value %r for %s"
                                % (i, val, key))
    return PipelineConfig(**values)


def config_to_text(config):
    """Inverse of parse_config (up to formatting)."""
    lines = []
    for f in fields(PipelineConfig):
        val = getattr(config, f.name)
        if isinstance(val, bool):
            val = "on" if val else "off"
        lines.append("%s=%s" % (f.name, val))
    return "\n".join(lines) + "\n"


# ===== protocol split =====================================================

@dataclass(frozen=True)
class SplitResult:
    train: object
    test: object
    n_subjects: int
    dropped_subjects: tuple


def _split_indices(n, protocol):
    """(train index array, test index array) over n chronological rows."""
    n_train = int(np.floor(TRAIN_FRACTION * n))
    if protocol in ("rest_rest", "ex_first70"):
        return np.arange(0, n_train), np.arange(n_train, n)
    if protocol == "ex_last70":
        return np.arange(n - n_train, n), np.arange(0, n - n_train)
    raise InvariantViolation("protocol %r has no fraction split" % (protocol,))


def split_protocol(m, protocol):
    """Per-subject chronological train/test split.

    rest_rest: first 70% of rest rows train, last 30% test.
    ex_first70: same over post-exercise rows.
    ex_last70: last 70% of post-exercise rows train, first 30% test.
    rest_ex: all rest rows train, all post-exercise rows test.
    Subjects with < 10 train or < 3 test rows are dropped (counted).
    """
    if protocol not in PROTOCOLS:
        raise InvariantViolation("unknown protocol %r (one of %s)"
                                 % (protocol, ", ".join(PROTOCOLS)))
    sid = np.array(m.subject_ids)
    cond = np.array(m.conditions)
    train_idx, test_idx, dropped = [], [], []
    for s in sorted(set(m.subject_ids)):
        if protocol == "rest_ex":
            tr = np.flatnonzero((sid == s) & (cond == "rest"))
            te = np.flatnonzero((sid == s) & (cond == "post_exercise"))
        else:
            want = "rest" if protocol == "rest_rest" else "post_exercise"
            rows = np.flatnonzero((sid == s) & (cond == want))
            tr_local, te_local = _split_indices(rows.size, protocol)
            tr, te = rows[tr_local], rows[te_local]
        if tr.size < MIN_TRAIN_ROWS or te.size < MIN_TEST_ROWS:
            dropped.append(s)
            continue
        train_idx.append(tr)
        test_idx.append(te)
    if not train_idx:
        raise EmptyCohort("no subject kept %d train / %d test rows under %s"
                          % (MIN_TRAIN_ROWS, MIN_TEST_ROWS, protocol))
    train = _features.take_rows(m, np.concatenate(train_idx))
    test = _features.take_rows(m, np.concatenate(test_idx))
    return SplitResult(train, test, len(train_idx), tuple(dropped))


# ===== cohort featurization (cached) ======================================

def _truncate_detection(det, n):
    if len(det) <= n:
        return det
    return QrsDetection(det.r_peaks[:n], det.qrs_onsets[:n],
                        det.qrs_offsets[:n], det.fs_hz)


def _cache_get(cache, key, build):
    if cache is None:
        return build()
    if key not in cache:
        cache[key] = build()
    return cache[key]


def _manifest(cache, manifest_path):
    path = os.path.abspath(manifest_path)
    return _cache_get(cache, ("manifest", path), lambda: load_manifest(path))


def _record(cache, manifest_path, sid, cond):
    path = os.path.abspath(manifest_path)
    man = _manifest(cache, manifest_path)
    rel = {(s, c): r for (s, c, r, _) in man.entries}[(sid, cond)]
    full = os.path.join(os.path.dirname(path), rel)
    return _cache_get(cache, ("record", path, sid, cond),
                      lambda: load_record(full, sid, cond))


def _preprocessed(cache, manifest_path, sid, cond, lo, hi):
    def build():
        rec = _record(cache, manifest_path, sid, cond)
        samples = preprocess_ecg(rec.samples, rec.sampling_rate_hz, lo, hi)
        return EcgRecord(sid, cond, rec.sampling_rate_hz, samples)
    path = os.path.abspath(manifest_path)
    return _cache_get(cache, ("pre", path, sid, cond, lo, hi), build)


def _detection(cache, manifest_path, sid, cond, lo, hi):
    def build():
        rec = _preprocessed(cache, manifest_path, sid, cond, lo, hi)
        return detect_r_peaks(rec.samples, rec.sampling_rate_hz)
    path = os.path.abspath(manifest_path)
    return _cache_get(cache, ("det", path, sid, cond, lo, hi), build)


def _stage_key(config):
    if config.stage == "ac":
        return ("ac", config.n_lags, config.window_s)
    if config.stage in ("fused", "fused_kl"):
        return ("fused",)
    return (config.stage,)


def _record_stage_matrix(cache, manifest_path, sid, cond, config):
    """Stage features for one record, capped at max_beats_per_subject."""
    key = ("stage", os.path.abspath(manifest_path), sid, cond,
           _stage_key(config), config.lo_hz, config.hi_hz,
           config.max_beats_per_subject)

    def build():
        rec = _preprocessed(cache, manifest_path, sid, cond,
                            config.lo_hz, config.hi_hz)
        det = _detection(cache, manifest_path, sid, cond,
                         config.lo_hz, config.hi_hz)
        det = _truncate_detection(det, config.max_beats_per_subject)
        stage = config.stage
        try:
            if stage == "qrs30":
                return _features.qrs_features(rec, det)
            if stage == "beat300":
                return _features.beat_features(rec, det)
            if stage == "pqrst240":
                return _features.pqrst_features(rec, det)
            if stage == "bandpass10_40+beat300":
                raw = _record(cache, manifest_path, sid, cond)
                narrow = EcgRecord(sid, cond, raw.sampling_rate_hz,
                                   preprocess_ecg(raw.samples,
                                                  raw.sampling_rate_hz,
                                                  10.0, 40.0))
                return _features.beat_features(narrow, det)
            if stage == "stft":
                return _features.stft_features(rec, det)
            if stage == "cwt":
                return _features.cwt_features(rec, det)
            if stage == "ac":
                return _features.ac_features(rec, det, n_lags=config.n_lags,
                                             window_s=config.window_s)
            if stage == "ac_beat":
                return _features.ac_beat_features(rec, det,
                                                  n_lags=config.n_lags)
            return _features.fused_features(rec, det)
        except EcgidError as exc:
            raise StageFailure("subject %s/%s at stage %s: %s"
                               % (sid, cond, stage, exc)) from exc

    return _cache_get(cache, key, build)


def _required_entries(manifest, protocol, config, seed):
    """(sid, cond) pairs a run actually needs, in deterministic order."""
    base = {"rest_rest": ("rest",),
            "ex_first70": ("post_exercise",),
            "ex_last70": ("post_exercise",),
            "rest_ex": ("rest", "post_exercise")}[protocol]
    subjects = manifest.subject_ids
    if config.stage == "fused_kl":
        aux, eval_ = aux_eval_split(subjects, seed)
        pairs = [(s, c) for s in aux for c in ("rest", "post_exercise")]
        pairs += [(s, c) for s in eval_ for c in base]
    else:
        pairs = [(s, c) for s in subjects for c in base]
    have = {(s, c) for (s, c, _, _) in manifest.entries}
    missing = [p for p in pairs if p not in have]
    if missing:
        raise EmptyCohort("manifest lacks required records: %s"
                          % sorted(missing)[:5])
    return sorted(pairs)


def aux_eval_split(subjects, seed):
    """Split subject ids into (auxiliary half, evaluation half) by a seeded
    permutation; the auxiliary half fits selection weights only."""
    subjects = sorted(subjects)
    rng = np.random.default_rng(derive_seed("aux_split", seed))
    perm = rng.permutation(len(subjects))
    n_aux = len(subjects) // 2
    aux = sorted(subjects[i] for i in perm[:n_aux])
    eval_ = sorted(subjects[i] for i in perm[n_aux:])
    return tuple(aux), tuple(eval_)


def cohort_matrix(manifest_path, config, protocol, seed, cache=None):
    """Featurize every required record and stack the rows.

    Returns (matrix, skipped_beats). Rows are chronological per record;
    records are ordered by (subject, condition).
    """
    man = _manifest(cache, manifest_path)
    parts = []
    for sid, cond in _required_entries(man, protocol, config, seed):
        parts.append(_record_stage_matrix(cache, manifest_path, sid, cond,
                                          config))
    matrix = _features.concat_matrices(parts)
    return matrix, int(sum(p.skipped for p in parts))


# ===== fitting and prediction =============================================

@dataclass(frozen=True)
class FittedState:
    """Everything learned from training (and auxiliary) rows only."""

    config: PipelineConfig
    selection: object = None
    zscore: object = None
    pca: object = None
    svm: object = None
    knn_train: object = None


def fit_pipeline_state(train, config, seed, selection=None):
    """Fit z-score, PCA, and the classifier on training rows only."""
    m = train
    zparams = None
    if config.normalize:
        zparams = _features.zscore_fit(m)
        m = _features.zscore_apply(zparams, m)
    pmodel = None
    if config.reduction == "pca":
        pmodel = _select.pca_fit(m, config.variance_retained)
        m = _select.pca_transform(pmodel, m)
    if config.classifier == "svm":
        model = _classify.svm_train(m, c=config.c, gamma=config.gamma,
                                    tol=config.tol,
                                    max_epochs=config.max_epochs,
                                    seed=derive_seed("svm", seed))
        return FittedState(config, selection, zparams, pmodel, model, None)
    return FittedState(config, selection, zparams, pmodel, None, m)


def transform_features(state, m):
    """Apply the fitted z-score and PCA stages (selection is applied at the
    cohort level before splitting)."""
    if state.zscore is not None:
        m = _features.zscore_apply(state.zscore, m)
    if state.pca is not None:
        m = _select.pca_transform(state.pca, m)
    return m


def predict_with_state(state, m):
    t = transform_features(state, m)
    if state.svm is not None:
        return _classify.svm_predict(state.svm, t)
    return _classify.knn_predict(state.knn_train, t, k=state.config.knn_k)


def state_fingerprint(state):
    """Stable digest of every fitted parameter; equal fingerprints mean the
    training phase saw identical data."""
    h = hashlib.sha256()

    def put(tag, arr):
        h.update(tag.encode("utf-8"))
        h.update(np.ascontiguousarray(arr, dtype=float).tobytes())

    sel = state.selection
    if sel is not None:
        put("sel.w", sel.w)
        put("sel.idx", np.array(sel.selected, dtype=float))
    if state.zscore is not None:
        put("z.mean", state.zscore.mean)
        put("z.std", state.zscore.std)
    if state.pca is not None:
        put("pca.mean", state.pca.mean)
        put("pca.comp", state.pca.components[:state.pca.k])
        h.update(b"pca.k%d" % state.pca.k)
    if state.svm is not None:
        for pair in state.svm.pairs:
            h.update(("pair:%s|%s" % (pair.label_pos, pair.label_neg))
                     .encode("utf-8"))
            put("sv", state.svm.support_rows(pair))
            put("coef", pair.coef)
            put("bias", np.array([pair.bias]))
    if state.knn_train is not None:
        put("knn.x", state.knn_train.values)
        h.update("|".join(state.knn_train.subject_ids).encode("utf-8"))
    return h.hexdigest()


# ===== reports ============================================================

@dataclass(frozen=True)
class ExperimentReport:
    """One pipeline x protocol outcome plus diagnostics."""

    pipeline: str
    protocol: str
    train_accuracy: float
    test_accuracy: float
    subject_majority_accuracy: float
    n_subjects: int
    train_beats: int
    test_beats: int
    skipped_beats: int
    dropped_subjects: tuple
    converged: bool
    seed: int
    confusion: tuple
    state_fingerprint: str

    def __post_init__(self):
        for acc in (self.train_accuracy, self.test_accuracy,
                    self.subject_majority_accuracy):
            if not 0.0 <= acc <= 1.0:
                raise InvariantViolation("accuracy %r outside [0, 1]" % acc)
        total = sum(n for (_, _, n) in self.confusion)
        if total != self.test_beats:
            raise InvariantViolation(
                "confusion counts sum %d, test beats %d"
                % (total, self.test_beats))
        if any(n <= 0 for (_, _, n) in self.confusion):
            raise InvariantViolation("confusion counts must be positive")


def _confusion(pred, truth):
    counts = {}
    for p, t in zip(pred.labels, truth):
        counts[(t, p)] = counts.get((t, p), 0) + 1
    return tuple(sorted((t, p, n) for (t, p), n in counts.items()))


def subject_majority_accuracy(pred, truth):
    """Fraction of subjects whose modal predicted label is their own;
    modal ties break to the ascending label."""
    per = {}
    for p, t in zip(pred.labels, truth):
        per.setdefault(t, []).append(p)
    hits = 0
    for t, preds in per.items():
        modal = sorted(set(preds), key=lambda lab: (-preds.count(lab), lab))[0]
        hits += int(modal == t)
    return hits / len(per)


def run_pipeline(manifest_path, config, protocol, seed, cache=None):
    """Execute one experiment end to end.

    Parameters
    ----------
    manifest_path : str
        Cohort manifest written by the generator (or hand-built).
    config : PipelineConfig
    protocol : str
        One of rest_rest, ex_first70, ex_last70, rest_ex.
    seed : int
        Seeds the auxiliary split and the SVM working-set order.
    cache : dict, optional
        Reused across runs to share loaded records, detections, and stage
        features; holds no fitted state, so sharing cannot leak.

    Returns
    -------
    ExperimentReport
    """
    if protocol not in PROTOCOLS:
        raise InvariantViolation("unknown protocol %r (one of %s)"
                                 % (protocol, ", ".join(PROTOCOLS)))
    matrix, skipped = cohort_matrix(manifest_path, config, protocol, seed,
                                    cache)
    selection = None
    if config.stage == "fused_kl":
        man = _manifest(cache, manifest_path)
        aux_sids, eval_sids = aux_eval_split(man.subject_ids, seed)
        sid = np.array(matrix.subject_ids)
        aux_rows = np.flatnonzero(np.isin(sid, aux_sids))
        eval_rows = np.flatnonzero(np.isin(sid, eval_sids))
        aux = _features.take_rows(matrix, aux_rows)
        selection = _select.select_features(aux, config.lam, config.top_n)
        matrix = _select.apply_selection(selection,
                                         _features.take_rows(matrix, eval_rows))
    split = split_protocol(matrix, protocol)
    state = fit_pipeline_state(split.train, config, seed, selection)
    train_pred = predict_with_state(state, split.train)
    test_pred = predict_with_state(state, split.test)
    converged = state.svm.all_converged if state.svm is not None else True
    return ExperimentReport(
        pipeline=config.pipeline_id,
        protocol=protocol,
        train_accuracy=_classify.accuracy(train_pred, split.train.subject_ids),
        test_accuracy=_classify.accuracy(test_pred, split.test.subject_ids),
        subject_majority_accuracy=subject_majority_accuracy(
            test_pred, split.test.subject_ids),
        n_subjects=split.n_subjects,
        train_beats=split.train.n_rows,
        test_beats=split.test.n_rows,
        skipped_beats=skipped,
        dropped_subjects=split.dropped_subjects,
        converged=converged,
        seed=seed,
        confusion=_confusion(test_pred, split.test.subject_ids),
        state_fingerprint=state_fingerprint(state),
    )


def sweep_top_n(manifest_path, config, protocol, seed, top_n_values,
                cache=None):
    """Re-run a fused_kl pipeline across retained-feature counts, sharing
    the featurization cache."""
    if config.stage != "fused_kl":
        raise InvariantViolation("sweep applies to the fused_kl stage")
    cache = {} if cache is None else cache
    reports = []
    for top_n in top_n_values:
        cfg = replace(config, top_n=int(top_n))
        reports.append(run_pipeline(manifest_path, cfg, protocol, seed,
                                    cache))
    return reports


def render_report(reports, fmt="csv"):
    """Render reports as CSV or a Markdown table.

    Rows are sorted by (pipeline, protocol); accuracies print as
    percentages with one decimal.
    """
    if not reports:
        raise InvariantViolation("no reports to render")
    if fmt not in ("csv", "markdown"):
        raise InvariantViolation("format must be csv or markdown")
    rows = []
    for r in sorted(reports, key=lambda r: (r.pipeline, r.protocol)):
        rows.append((r.pipeline, r.protocol,
                     "%.1f%%" % (100.0 * r.train_accuracy),
                     "%.1f%%" % (100.0 * r.test_accuracy),
                     str(r.n_subjects), str(r.train_beats),
                     str(r.test_beats), str(r.skipped_beats),
                     "1" if r.converged else "0",
                     "%.1f%%" % (100.0 * r.subject_majority_accuracy)))
    return render_rows(rows, fmt)


def render_rows(rows, fmt):
    """Render pre-formatted report rows (tuples of strings)."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        writer.writerows(rows)
        return buf.getvalue()
    lines = ["| " + " | ".join(REPORT_COLUMNS) + " |",
             "|" + "|".join(" --- " for _ in REPORT_COLUMNS) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def parse_report_csv(text):
    """Read a rendered CSV back into row dicts (for report merging)."""
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or tuple(rows[0]) != REPORT_COLUMNS:
        raise MalformedFile("report header mismatch: %r" % (rows[:1],))
    return [dict(zip(REPORT_COLUMNS, row)) for row in rows[1:]]
