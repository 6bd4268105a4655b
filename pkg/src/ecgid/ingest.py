"""Load, store, and synthesize labeled single-lead ECG recordings.

Synthetic records are sum-of-Gaussians beat trains. Wave geometry is stored
as fractions of the beat period; P and T scale with the actual (condition +
jitter) period while Q/R/S always use the subject's rest period, so exercise
compresses P/T toward the R peak but leaves QRS shape untouched. Exercise
additionally scales P amplitude up and T amplitude down by fixed factors.
"""

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    InvariantViolation,
    IoFailure,
    MalformedFile,
    NonFiniteSample,
    TooShort,
)

CONDITIONS = ("rest", "post_exercise")

# exercise morphology: P grows, T shrinks, QRS untouched
EX_P_FACTOR = 1.3
EX_T_FACTOR = 0.6

WAVE_ORDER = ("P", "Q", "R", "S", "T")


@dataclass(frozen=True)
class EcgRecord:
    """One subject's single-lead recording under one condition."""

    subject_id: str
    condition: str
    sampling_rate_hz: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", s)
        if self.condition not in CONDITIONS:
            raise InvariantViolation("unknown condition %r" % (self.condition,))
        if not self.sampling_rate_hz > 2 * 40:
            raise InvariantViolation(
                "sampling rate %g below Nyquist bound for the 40 Hz cutoff"
                % self.sampling_rate_hz
            )
        if s.size < 2 * self.sampling_rate_hz:
            raise TooShort(
                "record has %d samples, need at least 2 s (%d)"
                % (s.size, int(2 * self.sampling_rate_hz))
            )
        if not np.all(np.isfinite(s)):
            raise NonFiniteSample("record contains NaN or infinite samples")

    @property
    def duration_s(self):
        return self.samples.size / self.sampling_rate_hz


@dataclass(frozen=True)
class Wave:
    """One Gaussian wave: amplitude in mV, center/width as beat fractions."""

    amplitude_mv: float
    center_frac: float
    width_frac: float


@dataclass(frozen=True)
class GeneratorParams:
    """Per-subject synthesis parameters."""

    waves: dict  # name -> Wave, for P, Q, R, S, T
    rest_hr_bpm: float
    ex_hr_bpm: float
    hr_jitter_frac: float
    baseline_mv: float
    powerline_mv: float
    white_mv: float

    def __post_init__(self):
        missing = [w for w in WAVE_ORDER if w not in self.waves]
        if missing:
            raise InvariantViolation("missing waves %r" % (missing,))
        centers = [self.waves[w].center_frac for w in WAVE_ORDER]
        if not all(a < b for a, b in zip(centers, centers[1:])):
            raise InvariantViolation("wave centers must be strictly ordered P<Q<R<S<T")
        r_amp = self.waves["R"].amplitude_mv
        others = [abs(self.waves[w].amplitude_mv) for w in WAVE_ORDER if w != "R"]
        if not all(r_amp > o for o in others):
            raise InvariantViolation("R amplitude must dominate every other wave")
        if not self.ex_hr_bpm > self.rest_hr_bpm:
            raise InvariantViolation("exercise HR must exceed rest HR")
        if self.hr_jitter_frac < 0:
            raise InvariantViolation("jitter fraction must be >= 0")


def derive_seed(*parts):
    """Stable 64-bit seed from arbitrary labeled parts (order-sensitive)."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def generate_subject_params(subject_id, cohort_seed):
    """Deterministic per-subject wave parameters.

    Draws from fixed physiological ranges; distinct subject ids give
    distinct parameter tuples with probability ~1. Rest heart rate is near
    70 bpm, exercise heart rate uniform in [90, 150].
    """
    rng = np.random.default_rng(derive_seed("params", cohort_seed, subject_id))
    u = rng.uniform
    waves = {
        "P": Wave(u(0.10, 0.22), -0.22 + u(-0.02, 0.02), u(0.016, 0.026)),
        "Q": Wave(-u(0.06, 0.16), -0.05 + u(-0.006, 0.006), u(0.007, 0.011)),
        "R": Wave(u(0.9, 1.8), 0.0, u(0.009, 0.014)),
        "S": Wave(-u(0.08, 0.22), 0.05 + u(-0.006, 0.006), u(0.007, 0.011)),
        "T": Wave(u(0.18, 0.40), 0.28 + u(-0.025, 0.025), u(0.030, 0.045)),
    }
    return GeneratorParams(
        waves=waves,
        rest_hr_bpm=u(64.0, 76.0),
        ex_hr_bpm=u(90.0, 150.0),
        hr_jitter_frac=0.03,
        baseline_mv=u(0.03, 0.08),
        powerline_mv=u(0.01, 0.03),
        white_mv=u(0.004, 0.012),
    )


def _add_gaussian(samples, fs_hz, amp, mu_s, sigma_s):
    # accumulate only within +/- 6 sigma; contributions beyond are < 2e-8 amp
    if amp == 0.0 or sigma_s <= 0.0:
        return
    lo = max(0, int(np.floor((mu_s - 6 * sigma_s) * fs_hz)))
    hi = min(samples.size, int(np.ceil((mu_s + 6 * sigma_s) * fs_hz)) + 1)
    if hi <= lo:
        return
    t = np.arange(lo, hi) / fs_hz
    samples[lo:hi] += amp * np.exp(-((t - mu_s) ** 2) / (2.0 * sigma_s ** 2))


def synthesize_record(params, condition, duration_s, noise_on, rng_seed,
                      fs_hz=300.0, p_factor=EX_P_FACTOR, t_factor=EX_T_FACTOR):
    """Synthesize one record; returns (EcgRecord, ground-truth R indices).

    Parameters
    ----------
    params : GeneratorParams
    condition : str
        "rest" or "post_exercise"; the latter raises heart rate to
        params.ex_hr_bpm and applies the P/T amplitude factors.
    duration_s : float
        Record length in seconds (>= 2).
    noise_on : bool
        Adds 0.25 Hz baseline wander, 50 Hz powerline, and white noise at
        the parameterized levels.
    rng_seed : int
        Seeds beat jitter, noise phases, and white noise; identical inputs
        give bit-identical output.

    Returns
    -------
    (EcgRecord, numpy.ndarray of int)
        Record plus analytic R-peak sample indices for oracle use.
    """
    if condition not in CONDITIONS:
        raise InvariantViolation("unknown condition %r" % (condition,))
    if duration_s < 2:
        raise InvariantViolation("duration must be >= 2 s")
    rng = np.random.default_rng(rng_seed)
    n = int(round(duration_s * fs_hz))
    samples = np.zeros(n)

    hr = params.ex_hr_bpm if condition == "post_exercise" else params.rest_hr_bpm
    base_period = 60.0 / hr
    rest_ref_period = 60.0 / params.rest_hr_bpm
    p_amp_factor = p_factor if condition == "post_exercise" else 1.0
    t_amp_factor = t_factor if condition == "post_exercise" else 1.0

    # beat grid: jittered periods, first R at 0.5 s, last beat fully inside
    r_times = []
    periods = []
    t_r = 0.5
    while t_r < duration_s - 0.5:
        r_times.append(t_r)
        period = base_period * (1.0 + params.hr_jitter_frac *
                                float(np.clip(rng.standard_normal(), -2.5, 2.5)))
        periods.append(period)
        t_r += period

    for k, t_k in enumerate(r_times):
        gap_after = periods[k]
        gap_before = periods[k - 1] if k > 0 else periods[0]
        for name in WAVE_ORDER:
            w = params.waves[name]
            if name in ("Q", "R", "S"):
                scale = rest_ref_period  # QRS geometry pinned to rest period
                amp = w.amplitude_mv
            elif name == "P":
                scale = gap_before  # P compresses with the gap it occupies
                amp = w.amplitude_mv * p_amp_factor
            else:
                scale = gap_after
                amp = w.amplitude_mv * t_amp_factor
            _add_gaussian(samples, fs_hz, amp,
                          t_k + w.center_frac * scale, w.width_frac * scale)

    if noise_on:
        t = np.arange(n) / fs_hz
        ph1, ph2 = rng.uniform(0, 2 * np.pi, size=2)
        samples += params.baseline_mv * np.sin(2 * np.pi * 0.25 * t + ph1)
        samples += params.powerline_mv * np.sin(2 * np.pi * 50.0 * t + ph2)
        samples += params.white_mv * rng.standard_normal(n)

    record = EcgRecord("synthetic", condition, fs_hz, samples)
    truth = np.array([int(round(t_k * fs_hz)) for t_k in r_times], dtype=int)
    return record, truth


def build_cohort(n_subjects, seed, rest_duration_s=300.0, ex_duration_s=150.0,
                 noise_on=True):
    """Synthesize a full cohort in memory.

    Returns a list of (EcgRecord, truth_r_indices) with two records per
    subject (rest then post_exercise); records carry real subject ids.
    """
    out = []
    for i in range(n_subjects):
        sid = "s%02d" % (i + 1)
        params = generate_subject_params(sid, seed)
        for condition, dur in (("rest", rest_duration_s),
                               ("post_exercise", ex_duration_s)):
            rec, truth = synthesize_record(
                params, condition, dur, noise_on,
                rng_seed=derive_seed("record", seed, sid, condition))
            out.append((replace(rec, subject_id=sid), truth))
    return out


# ===== record files =======================================================

def save_record(record, path):
    """Write the record format: `fs=<int>` header, one amplitude per line."""
    fs = record.sampling_rate_hz
    if fs != int(fs):
        raise InvariantViolation("record format requires an integer sampling rate")
    lines = ["fs=%d" % int(fs)]
    lines.extend(repr(float(v)) for v in record.samples.tolist())
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines))
            fh.write("\n")
    except OSError as exc:
        raise IoFailure("cannot write %s: %s" % (path, exc)) from exc


def load_record(path, subject_id, condition):
    """Parse a record file; lossless for values written by save_record."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = text.split("\n")
    if not lines or not lines[0].startswith("fs="):
        raise MalformedFile("%s line 1: expected `fs=<int>` header" % path)
    try:
        fs = int(lines[0][3:])
    except ValueError:
        raise MalformedFile("%s line 1: bad sampling rate %r" % (path, lines[0]))
    values = []
    for i, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        try:
            v = float(line)
        except ValueError:
            raise MalformedFile("%s line %d: non-numeric sample %r" % (path, i, line))
        if not np.isfinite(v):
            raise NonFiniteSample("%s line %d: non-finite sample %r" % (path, i, line))
        values.append(v)
    if len(values) < 2 * fs:
        raise TooShort(
            "%s: %d samples is under the 2 s minimum (%d)" % (path, len(values), 2 * fs)
        )
    return EcgRecord(subject_id, condition, float(fs), np.array(values))


# ===== manifests ==========================================================

@dataclass(frozen=True)
class DatasetManifest:
    """Cohort index: (subject_id, condition, relative_path, duration_s) rows."""

    entries: tuple
    seed: object = None  # int for synthetic cohorts, else None

    def __post_init__(self):
        if not self.entries:
            raise InvariantViolation("manifest has no entries")
        triples = [(s, c, p) for (s, c, p, _) in self.entries]
        if len(set(triples)) != len(triples):
            raise InvariantViolation("duplicate (subject, condition, path) entry")
        subjects = {s for (s, _, _, _) in self.entries}
        with_rest = {s for (s, c, _, _) in self.entries if c == "rest"}
        if subjects - with_rest:
            raise InvariantViolation(
                "subjects without a rest entry: %s" % sorted(subjects - with_rest)
            )
        for (_, c, _, _) in self.entries:
            if c not in CONDITIONS:
                raise InvariantViolation("unknown condition %r" % (c,))

    @property
    def subject_ids(self):
        return sorted({s for (s, _, _, _) in self.entries})


def save_manifest(manifest, path):
    lines = []
    if manifest.seed is not None:
        lines.append("# seed=%d" % manifest.seed)
    for (sid, cond, rel, dur) in manifest.entries:
        lines.append("%s,%s,%s,%s" % (sid, cond, rel, repr(float(dur))))
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines))
            fh.write("\n")
    except OSError as exc:
        raise IoFailure("cannot write %s: %s" % (path, exc)) from exc


def load_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    entries = []
    seed = None
    for i, line in enumerate(text.split("\n"), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            # comments are ignored as entries; a `# seed=<int>` directive is
            # still read back so synthetic cohorts stay reproducible
            body = line[1:].strip()
            if body.startswith("seed="):
                try:
                    seed = int(body[5:])
                except ValueError:
                    raise MalformedFile("%s line %d: bad seed directive" % (path, i))
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise MalformedFile(
                "%s line %d: expected subject_id,condition,relative_path,duration_s"
                % (path, i)
            )
        sid, cond, rel, dur_text = (p.strip() for p in parts)
        try:
            dur = float(dur_text)
        except ValueError:
            raise MalformedFile("%s line %d: bad duration %r" % (path, i, dur_text))
        entries.append((sid, cond, rel, dur))
    return DatasetManifest(tuple(entries), seed)
