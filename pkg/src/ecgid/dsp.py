"""Shared numerical primitives.

IIR Butterworth band-pass design (analog prototype, frequency pre-warping,
bilinear transform), zero-phase filtering, Hamming windows, and framewise
magnitude spectra.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidBand, SignalTooShort


@dataclass(frozen=True)
class FilterCoefficients:
    """Digital IIR transfer function b(z)/a(z) with design metadata.

    Invariants checked on construction: a[0] is exactly 1 and every pole
    lies strictly inside the unit circle (radius < 1 - 1e-8).
    """

    numerator: np.ndarray
    denominator: np.ndarray
    order: int
    lo_hz: float
    hi_hz: float
    fs_hz: float

    def __post_init__(self):
        b = np.asarray(self.numerator, dtype=float)
        a = np.asarray(self.denominator, dtype=float)
        object.__setattr__(self, "numerator", b)
        object.__setattr__(self, "denominator", a)
        if a[0] != 1.0:
            raise InvalidBand("denominator must be normalized to a[0] = 1")
        roots = np.roots(a)
        if roots.size and np.max(np.abs(roots)) >= 1.0 - 1e-8:
            raise InvalidBand("unstable design: pole on or outside the unit circle")

    def magnitude_at(self, f_hz):
        """|H(e^{j 2 pi f / fs})| evaluated directly on the unit circle."""
        f = np.atleast_1d(np.asarray(f_hz, dtype=float))
        z = np.exp(2j * np.pi * f / self.fs_hz)
        num = np.polyval(self.numerator, z)
        den = np.polyval(self.denominator, z)
        mag = np.abs(num / den)
        return mag if np.ndim(f_hz) else float(mag[0])


def design_butterworth_bandpass(order, lo_hz, hi_hz, fs_hz):
    """Design a digital Butterworth band-pass filter.

    Construction: analog low-pass prototype of order ``order/2``, low-pass to
    band-pass transform, then bilinear transform with frequency pre-warping.
    ``order`` is the final band-pass polynomial order and must be even.

    Parameters
    ----------
    order : int
        Final band-pass order (even, positive).
    lo_hz, hi_hz : float
        Cut-off frequencies; magnitude is ~1/sqrt(2) at each.
    fs_hz : float
        Sampling rate; requires 0 < lo_hz < hi_hz < fs_hz / 2.

    Returns
    -------
    FilterCoefficients
    """
    if order <= 0 or order % 2 != 0:
        raise InvalidBand("order must be a positive even integer, got %r" % (order,))
    if not (0 < lo_hz < hi_hz < fs_hz / 2):
        raise InvalidBand(
            "need 0 < lo < hi < fs/2, got lo=%g hi=%g fs=%g" % (lo_hz, hi_hz, fs_hz)
        )
    m = order // 2

    # pre-warp the band edges so the bilinear transform lands them exactly
    w1 = 2.0 * fs_hz * np.tan(np.pi * lo_hz / fs_hz)
    w2 = 2.0 * fs_hz * np.tan(np.pi * hi_hz / fs_hz)
    bw = w2 - w1
    w0sq = w1 * w2

    # analog low-pass prototype poles on the unit circle, left half plane
    k = np.arange(1, m + 1)
    p_lp = np.exp(1j * np.pi * (2 * k + m - 1) / (2 * m))

    # low-pass -> band-pass: each prototype pole splits into a conjugate pair
    half = p_lp * bw / 2.0
    root = np.sqrt(half ** 2 - w0sq + 0j)
    poles = np.concatenate([half + root, half - root])

    # H(s) = bw^m * s^m / prod(s - p); bilinear s = 2 fs (z-1)/(z+1)
    fs2 = 2.0 * fs_hz
    z_poles = (fs2 + poles) / (fs2 - poles)
    z_zeros = np.concatenate([np.ones(m), -np.ones(m)])
    gain = (bw ** m) * (fs2 ** m) / np.prod(fs2 - poles)

    b = np.real(gain) * np.real(np.poly(z_zeros))
    a = np.real(np.poly(z_poles))
    a = a / a[0]
    a[0] = 1.0
    return FilterCoefficients(b, a, order, float(lo_hz), float(hi_hz), float(fs_hz))


def filter_zero_phase(coeffs, x):
    """Apply a filter forward and backward for zero net phase.

    The input is extended with 3 x order reflected samples on each side
    before filtering and trimmed afterwards, so startup transients do not
    reach the signal. Output length equals input length.
    """
    x = np.asarray(x, dtype=float)
    pad = 3 * coeffs.order
    if x.size <= pad:
        raise SignalTooShort(
            "need more than %d samples for zero-phase filtering, got %d"
            % (pad, x.size)
        )
    left = x[pad:0:-1]
    right = x[-2:-pad - 2:-1]
    ext = np.concatenate([left, x, right])
    b, a = coeffs.numerator, coeffs.denominator
    y = lfilter(b, a, ext)
    y = lfilter(b, a, y[::-1])[::-1]
    return y[pad:pad + x.size]


def preprocess_ecg(x, fs_hz, lo_hz=0.5, hi_hz=40.0, order=4):
    """Standard front-end: zero-phase order-4 band-pass, default 0.5-40 Hz."""
    coeffs = design_butterworth_bandpass(order, lo_hz, hi_hz, fs_hz)
    return filter_zero_phase(coeffs, np.asarray(x, dtype=float))


def hamming_window(n):
    """Hamming window w[k] = 0.54 - 0.46 cos(2 pi k / (n-1)); n=1 gives [1.0]."""
    if n < 1:
        raise InvalidBand("window length must be >= 1")
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / (n - 1))


@dataclass(frozen=True)
class SpectralFrame:
    """One-sided magnitude spectrum of a single frame."""

    magnitudes: np.ndarray
    frame_start_index: int
    nfft: int

    def __post_init__(self):
        m = np.asarray(self.magnitudes, dtype=float)
        object.__setattr__(self, "magnitudes", m)
        if m.size != self.nfft // 2 + 1:
            raise InvalidBand(
                "one-sided spectrum needs nfft/2+1 = %d bins, got %d"
                % (self.nfft // 2 + 1, m.size)
            )
        if np.any(m < 0):
            raise InvalidBand("magnitudes must be non-negative")


def frame_magnitude_spectrum(frame, nfft, frame_start_index=0):
    """Zero-pad ``frame`` to ``nfft`` and return one-sided DFT magnitudes.

    Bins 0..nfft/2 of the discrete Fourier transform; nfft must be even and
    at least the frame length.
    """
    frame = np.asarray(frame, dtype=float)
    if frame.size == 0:
        raise SignalTooShort("empty frame")
    if nfft % 2 != 0 or nfft < frame.size:
        raise InvalidBand("nfft must be even and >= frame length")
    mags = np.abs(np.fft.rfft(frame, n=nfft))
    return SpectralFrame(mags, frame_start_index, nfft)
