"""One-sided FFT amplitude spectra of probe signals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .snapshot import DT_RTOL, TimeSeries, write_columns_csv


@dataclass(frozen=True, eq=False)
class Spectrum:
    frequencies: np.ndarray
    amplitudes: np.ndarray

    def to_csv(self, path, header="frequency_hz,amplitude"):
        write_columns_csv(path, header, [self.frequencies, self.amplitudes])


def sampling_interval(times) -> float:
    t = np.asarray(times, dtype=float)
    steps = np.diff(t)
    if steps.size == 0 or np.any(steps <= 0):
        raise ValueError("times must be strictly increasing")
    if np.max(np.abs(steps - steps.mean())) > 1e3 * DT_RTOL * steps.mean():
        raise ValueError("non-uniform sampling")
    return float((t[-1] - t[0]) / (t.size - 1))


def amplitude_spectrum(ts: TimeSeries) -> Spectrum:
    """``|fft(x - mean)| / (N // 2)`` for bins ``1 .. N // 2``.

    A unit-amplitude sinusoid on a bin frequency reads as amplitude 1.
    """
    n = len(ts)
    if n < 4:
        raise ValueError("need at least 4 samples, got %d" % n)
    dt = sampling_interval(ts.times)
    x = ts.values - ts.values.mean()
    n_freq = n // 2
    X = np.fft.rfft(x)
    k = np.arange(1, n_freq + 1)
    return Spectrum(k / (n * dt), np.abs(X[k]) / n_freq)


def dominant_frequency(spec: Spectrum) -> float:
    """Frequency of the largest amplitude; ties resolve to the lowest frequency."""
    if spec.frequencies.size == 0:
        raise ValueError("empty spectrum")
    return float(spec.frequencies[int(np.argmax(spec.amplitudes))])
