"""QRS detection: derivative, squaring, moving-window integration, and an
adaptive dual-threshold peak decision with search-back.

Thresholds are estimated from the data itself (running signal/noise level
means), so detection is invariant to positive rescaling of the input. Each
integrator peak is confirmed against the 5-15 Hz filtered waveform, then the
R fiducial is refined to the extremum of the preprocessed input, removing
the integrator's group delay before segmentation.
"""

from dataclasses import dataclass

import numpy as np

from .dsp import design_butterworth_bandpass, filter_zero_phase
from .errors import (
    InvariantViolation,
    NoBeatsFound,
    SignalTooShort,
    WindowTooLong,
)

# fractional width bounds, in samples at 300 Hz (scaled for other rates)
QRS_WIDTH_MIN_300 = 10
QRS_WIDTH_MAX_300 = 50
REFRACTORY_S = 0.2
INTEGRATION_WINDOW_S = 0.15
REFINE_HALF_S = 0.05
SEARCHBACK_RR_FACTOR = 1.66


@dataclass(frozen=True)
class QrsDetection:
    """Accepted beats: R indices with QRS onset/offset boundaries."""

    r_peaks: np.ndarray
    qrs_onsets: np.ndarray
    qrs_offsets: np.ndarray
    fs_hz: float

    def __post_init__(self):
        r = np.asarray(self.r_peaks, dtype=int)
        on = np.asarray(self.qrs_onsets, dtype=int)
        off = np.asarray(self.qrs_offsets, dtype=int)
        object.__setattr__(self, "r_peaks", r)
        object.__setattr__(self, "qrs_onsets", on)
        object.__setattr__(self, "qrs_offsets", off)
        if not (r.size == on.size == off.size):
            raise InvariantViolation("peak/onset/offset arrays differ in length")
        if r.size and np.any(np.diff(r) < REFRACTORY_S * self.fs_hz):
            raise InvariantViolation("peaks violate the 0.2 s refractory spacing")
        if np.any(on >= r) or np.any(off <= r):
            raise InvariantViolation("onset/offset must bracket each R peak")
        widths = off - on
        w_min, w_max = qrs_width_bounds(self.fs_hz)
        if r.size and (widths.min() < w_min or widths.max() > w_max):
            raise InvariantViolation(
                "QRS width outside plausibility band [%d, %d]" % (w_min, w_max)
            )

    def __len__(self):
        return int(self.r_peaks.size)


def qrs_width_bounds(fs_hz):
    return (int(round(QRS_WIDTH_MIN_300 * fs_hz / 300.0)),
            int(round(QRS_WIDTH_MAX_300 * fs_hz / 300.0)))


def pt_bandpass(x, fs_hz):
    """Zero-phase order-4 band-pass over the 5-15 Hz QRS energy band."""
    coeffs = design_butterworth_bandpass(4, 5.0, 15.0, fs_hz)
    return filter_zero_phase(coeffs, np.asarray(x, dtype=float))


def derivative_filter(x):
    """Five-point slope estimator y[n] = (2x[n]+x[n-1]-x[n-3]-2x[n-4])/8."""
    x = np.asarray(x, dtype=float)
    if x.size < 5:
        raise SignalTooShort("derivative filter needs >= 5 samples")
    kernel = np.array([2.0, 1.0, 0.0, -1.0, -2.0]) / 8.0
    return np.convolve(x, kernel, mode="full")[: x.size]


def square_signal(x):
    x = np.asarray(x, dtype=float)
    return x * x


def moving_window_integrate(x, window_n):
    """Trailing mean over the last window_n samples, zero-initialized."""
    x = np.asarray(x, dtype=float)
    if window_n < 1:
        raise InvariantViolation("window must be a positive integer")
    if window_n > x.size:
        raise WindowTooLong(
            "window %d exceeds signal length %d" % (window_n, x.size)
        )
    kernel = np.full(window_n, 1.0 / window_n)
    return np.convolve(x, kernel, mode="full")[: x.size]


def _local_maxima(y):
    # strict rise then non-rise; flat signals produce no candidates
    idx = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])) + 1
    return idx


def _clamp_width(onset, offset, r, n, w_min, w_max):
    """Clamp [onset, offset] to the width band; None when it exits the record."""
    width = offset - onset
    if width > w_max:
        left = r - onset
        scale = w_max / width
        new_left = max(1, int(np.floor(left * scale)))
        new_right = w_max - new_left
        if new_right < 1:
            new_right = 1
            new_left = w_max - 1
        onset, offset = r - new_left, r + new_right
    elif width < w_min:
        need = w_min - width
        grow_right = min(need, (n - 1) - offset)
        offset += grow_right
        onset -= need - grow_right
    if onset < 0 or offset > n - 1 or not (onset < r < offset):
        return None
    return onset, offset


def detect_r_peaks(x, fs_hz):
    """Run the full detection chain on a preprocessed ECG.

    Parameters
    ----------
    x : array_like
        Preprocessed (0.5-40 Hz band-passed) ECG samples, >= 2 s.
    fs_hz : float
        Sampling rate.

    Returns
    -------
    QrsDetection
        Strictly increasing R indices with onset/offset boundaries, each
        refined to the extremum of `x` within +/-0.05 s of the filtered-
        domain fiducial.

    Raises
    ------
    NoBeatsFound
        Fewer than two beats survive acceptance and boundary clamping.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    init_n = int(round(2 * fs_hz))
    if n < init_n:
        raise SignalTooShort("detection needs at least 2 s of signal")

    filtered = pt_bandpass(x, fs_hz)
    window_n = int(round(INTEGRATION_WINDOW_S * fs_hz))
    mwi = moving_window_integrate(square_signal(derivative_filter(filtered)), window_n)
    abs_f = np.abs(filtered)

    # running level estimates, initialized from the first two seconds
    spki = float(np.max(mwi[:init_n]))
    npki = float(np.mean(mwi[:init_n]))
    spkf = float(np.max(abs_f[:init_n]))
    npkf = float(np.mean(abs_f[:init_n]))

    refractory_n = REFRACTORY_S * fs_hz
    candidates = _local_maxima(mwi)
    fpeaks = np.array([
        np.max(abs_f[max(0, i - window_n):i + 1]) for i in candidates
    ]) if candidates.size else np.zeros(0)

    accepted = []        # decision-point indices into mwi
    accepted_thr = []    # primary integrator threshold at acceptance time
    accepted_set = set()
    rr_history = []

    def rr_average():
        if not rr_history:
            return None
        recent = rr_history[-8:]
        return float(np.mean(recent))

    def accept(pos, pki, fpk, weight):
        nonlocal spki, spkf
        spki = weight * pki + (1 - weight) * spki
        spkf = weight * fpk + (1 - weight) * spkf
        if accepted:
            rr_history.append(pos - accepted[-1])
        accepted.append(pos)
        accepted_thr.append(npki + 0.25 * (spki - npki))
        accepted_set.add(pos)

    for ci, i in enumerate(candidates):
        pki = mwi[i]
        fpk = fpeaks[ci]
        thr1 = npki + 0.25 * (spki - npki)
        thrf1 = npkf + 0.25 * (spkf - npkf)

        # search-back: a long gap means a beat was likely missed; rescan the
        # gap's candidates against the halved thresholds
        rr_avg = rr_average()
        if accepted and rr_avg is not None and \
                (i - accepted[-1]) > SEARCHBACK_RR_FACTOR * rr_avg:
            best = None
            for cj in range(ci):
                j = candidates[cj]
                if j <= accepted[-1] + refractory_n or j in accepted_set:
                    continue
                if mwi[j] > 0.5 * thr1 and fpeaks[cj] > 0.5 * thrf1:
                    if best is None or mwi[j] > mwi[best[0]]:
                        best = (j, cj)
            if best is not None:
                j, cj = best
                accept(int(j), mwi[j], fpeaks[cj], weight=0.25)

        if accepted and i - accepted[-1] < refractory_n:
            continue
        if pki > thr1 and fpk > thrf1:
            accept(int(i), pki, fpk, weight=0.125)
        else:
            npki = 0.125 * pki + 0.875 * npki
            npkf = 0.125 * fpk + 0.875 * npkf

    # refine decision points: filtered-domain fiducial inside the integrator
    # window, then the preprocessed-signal extremum within +/-0.05 s
    refine_half = int(round(REFINE_HALF_S * fs_hz))
    w_min, w_max = qrs_width_bounds(fs_hz)
    beats = []
    abs_x = np.abs(x)
    for pos, thr in zip(accepted, accepted_thr):
        a = max(0, pos - window_n)
        j = a + int(np.argmax(abs_f[a:pos + 1]))
        lo = max(0, j - refine_half)
        hi = min(n, j + refine_half + 1)
        r = lo + int(np.argmax(abs_x[lo:hi]))

        k = r - 1
        while k >= 0 and mwi[k] >= thr:
            k -= 1
        onset = k
        k = r + 1
        while k < n and mwi[k] >= thr:
            k += 1
        offset = k
        clamped = _clamp_width(onset, offset, r, n, w_min, w_max)
        if clamped is None:
            continue
        beats.append((r, clamped[0], clamped[1]))

    # refinement can only shrink inter-peak gaps slightly; drop any beat that
    # lands inside the refractory window of the previous kept beat
    kept = []
    for beat in beats:
        if kept and beat[0] - kept[-1][0] < refractory_n:
            continue
        kept.append(beat)

    if len(kept) < 2:
        raise NoBeatsFound("fewer than 2 beats accepted")
    r_peaks = np.array([b[0] for b in kept], dtype=int)
    onsets = np.array([b[1] for b in kept], dtype=int)
    offsets = np.array([b[2] for b in kept], dtype=int)
    return QrsDetection(r_peaks, onsets, offsets, float(fs_hz))
