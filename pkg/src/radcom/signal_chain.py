"""IF-signal synthesis and the range-detection pipeline of the ego radar.

Frames are synthesized at ``cfg.oversample`` times the ADC rate so that the
anti-alias Chebyshev filter acts on out-of-band interference before
decimation.  Every stage after synthesis is linear, which lets the
Monte-Carlo paths integrate chirps before filtering (see :func:`coherent_if`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from .config import (
    BOLTZMANN,
    SPEED_OF_LIGHT,
    RadarConfig,
    doppler_delay,
    link_budget_constants,
    max_range,
    max_velocity,
    range_resolution,
)


@dataclass(frozen=True)
class Target:
    d: float
    v: float = 0.0
    rcs: float = 100.0


@dataclass(frozen=True)
class Interferer:
    """A facing radar with identical chirp parameters.

    ``tau`` is the start of its chirp sequence relative to the ego radar's.
    """

    d: float
    v: float = 0.0
    tau: float = 0.0


@dataclass(frozen=True)
class IFFrame:
    """Chirps x samples matrix.  Real-valued unless the receiver is IQ."""

    samples: np.ndarray
    sample_rate: float

    @property
    def n_chirps(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


class Detection(NamedTuple):
    bin: int
    range_m: float
    power: float


@dataclass
class DetectionReport:
    detections: List[Detection]
    spectrum: np.ndarray
    threshold: np.ndarray
    frequencies: np.ndarray
    ranges: np.ndarray

    @property
    def detected_ranges(self) -> np.ndarray:
        return np.array([det.range_m for det in self.detections])


class Tone(NamedTuple):
    amplitude: float
    frequency: float
    chirps: np.ndarray  # boolean mask over the N chirps


def noise_variance(cfg: RadarConfig) -> float:
    """Thermal noise power over the ADC bandwidth, including the noise figure."""
    return BOLTZMANN * cfg.T_noise * (1 / (2 * cfg.T_s)) * 10 ** (cfg.NF / 10)


def interference_gate(cfg: RadarConfig) -> Tuple[float, float]:
    """Arrival offsets whose beat tone reaches the ADC.

    A real-sampling receiver folds negative beat frequencies into the band
    and leaks a further ``T/(2 B_r T_s)`` of negative offsets through its
    imperfect low-pass filter; an IQ receiver only sees positive ones.
    """
    half = cfg.T / (2 * cfg.radar_bw * cfg.T_s)
    if cfg.iq_sampling:
        return 0.0, half
    return -2 * half, half


def _validate_scene(cfg, targets, interferers):
    vmax = max_velocity(cfg)
    for tgt in targets:
        if not (tgt.d > 0 and tgt.rcs > 0 and abs(tgt.v) <= vmax):
            raise ValueError(f"invalid target {tgt}")
    for itf in interferers:
        if not (itf.d > 0 and abs(itf.v) <= vmax and abs(itf.tau) <= cfg.T_f):
            raise ValueError(f"invalid interferer {itf}")


def _interferer_tone(cfg: RadarConfig, itf: Interferer, amplitude: float) -> Optional[Tone]:
    lo, hi = interference_gate(cfg)
    arrival = itf.tau + itf.d / SPEED_OF_LIGHT - doppler_delay(cfg, itf.v)
    chirps = np.zeros(cfg.N, dtype=bool)
    offset = None
    ego = np.arange(cfg.N)
    # the interfering radar repeats every frame; neighbouring frames can overlap too
    for base in (arrival - cfg.T_f, arrival, arrival + cfg.T_f):
        q = int(np.ceil((lo - base) / cfg.T - 1e-12))
        a = base + q * cfg.T
        if a > hi or abs(q) > cfg.N - 1:
            continue
        # interferer chirp j = k + q overlaps ego chirp k
        chirps |= (ego + q >= 0) & (ego + q < cfg.N)
        offset = a
    if offset is None or not chirps.any():
        return None
    return Tone(amplitude, cfg.chirp_slope * offset, chirps)


def scene_tones(cfg: RadarConfig, targets: Sequence[Target],
                interferers: Sequence[Interferer]) -> List[Tone]:
    """Beat tones present at the mixer output for a scene."""
    _validate_scene(cfg, targets, interferers)
    tones = []
    for tgt in targets:
        gamma, _ = link_budget_constants(cfg, tgt.rcs)
        amp = np.sqrt(gamma * cfg.P_tx * tgt.d ** -4)
        delay = 2 * tgt.d / SPEED_OF_LIGHT - 2 * doppler_delay(cfg, tgt.v)
        tones.append(Tone(amp, cfg.chirp_slope * delay, np.ones(cfg.N, dtype=bool)))
    _, gamma_int = link_budget_constants(cfg, 1.0)
    for itf in interferers:
        amp = np.sqrt(gamma_int * cfg.P_tx * itf.d ** -2)
        tone = _interferer_tone(cfg, itf, amp)
        if tone is not None:
            tones.append(tone)
    return tones


def scene_noise_variance(cfg: RadarConfig, targets: Sequence[Target]) -> float:
    """N0 at the ADC output; a fixed ``snr_db`` is referenced to the strongest target."""
    if cfg.snr_db is None or not targets:
        return noise_variance(cfg)
    powers = [link_budget_constants(cfg, t.rcs)[0] * cfg.P_tx * t.d ** -4 for t in targets]
    return max(powers) / 10 ** (cfg.snr_db / 10)


def _time_axis(cfg: RadarConfig) -> np.ndarray:
    n = np.arange(cfg.samples_per_chirp * cfg.oversample)
    return n * (cfg.T_s / cfg.oversample)


def _complex_noise(rng, shape, variance):
    scale = np.sqrt(variance / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize_frame(cfg: RadarConfig, targets: Sequence[Target] = (),
                     interferers: Sequence[Interferer] = (),
                     noise_seed: Optional[int] = 0) -> IFFrame:
    """Oversampled IF frame of the ego radar (N chirps).

    ``noise_seed=None`` gives a noiseless frame.
    """
    t = _time_axis(cfg)
    x = np.zeros((cfg.N, t.size), dtype=complex)
    for tone in scene_tones(cfg, targets, interferers):
        x[tone.chirps] += tone.amplitude * np.exp(2j * np.pi * tone.frequency * t)
    if noise_seed is not None:
        rng = np.random.default_rng(noise_seed)
        # noise bandwidth grows with the synthesis rate; the LPF brings it back to N0
        x += _complex_noise(rng, x.shape, scene_noise_variance(cfg, targets) * cfg.oversample)
    if not cfg.iq_sampling:
        x = x.real.copy()
    return IFFrame(x, cfg.oversample / cfg.T_s)


@lru_cache(maxsize=32)
def _lpf_sos(order: int, ripple_db: float, cutoff: float, fs: float) -> np.ndarray:
    return signal.cheby1(order, ripple_db, cutoff, fs=fs, output="sos")


def lowpass_response(cfg: RadarConfig, freqs, fs: Optional[float] = None) -> np.ndarray:
    """Complex response of the ADC low-pass at ``freqs`` (Hz)."""
    fs = fs or cfg.oversample / cfg.T_s
    sos = _lpf_sos(cfg.lpf_order, cfg.lpf_ripple_db, 1 / (2 * cfg.T_s), fs)
    _, h = signal.sosfreqz(sos, worN=np.atleast_1d(np.asarray(freqs, dtype=float)), fs=fs)
    return h + 10 ** (-cfg.lpf_stopband_db / 20)


def _lowpass(x: np.ndarray, cfg: RadarConfig, fs: float) -> np.ndarray:
    cutoff = 1 / (2 * cfg.T_s)
    if not cutoff < fs / 2:
        raise ValueError("lowpass input must be sampled above the ADC rate")
    factor = int(round(fs * cfg.T_s))
    sos = _lpf_sos(cfg.lpf_order, cfg.lpf_ripple_db, cutoff, fs)
    # finite stopband rejection: a small fraction of the input bypasses the filter
    y = signal.sosfilt(sos, x, axis=-1) + 10 ** (-cfg.lpf_stopband_db / 20) * x
    return y[..., ::factor]


def lowpass_filter(frame: IFFrame, cfg: RadarConfig) -> IFFrame:
    """Chebyshev-I anti-alias filter per chirp, then decimation to the ADC rate."""
    y = _lowpass(frame.samples, cfg, frame.sample_rate)
    return IFFrame(y, 1 / cfg.T_s)


@lru_cache(maxsize=8)
def _window(n: int) -> np.ndarray:
    w = signal.windows.blackmanharris(n, sym=False)
    w.setflags(write=False)
    return w


def _spectrum_1d(x: np.ndarray, padding: int = 1) -> np.ndarray:
    """Power spectrum (positive beat frequencies) of an already integrated chirp."""
    n = x.shape[-1]
    nfft = n * padding
    xw = x * _window(n)
    if np.iscomplexobj(xw):
        X = np.fft.fft(xw, nfft, axis=-1)[..., : nfft // 2 + 1]
    else:
        X = np.fft.rfft(xw, nfft, axis=-1)
    return X.real ** 2 + X.imag ** 2


def range_spectrum(frame: IFFrame, padding: int = 1) -> np.ndarray:
    """Windowed range FFT, coherently summed over chirps, as power per bin."""
    # coherent summation commutes with the (linear) window and FFT
    return _spectrum_1d(frame.samples.sum(axis=0), padding)


def goca_threshold(spectrum: np.ndarray, training: int = 50, guard: int = 2,
                   scale: float = 1.0) -> np.ndarray:
    """Greatest-of cell-averaging threshold; edge cells use whichever side exists."""
    p = np.asarray(spectrum, dtype=float)
    per_side = training // 2
    if p.size < training + 2 * guard + 1:
        raise ValueError(f"spectrum of {p.size} cells is shorter than the CFAR window")
    n = p.size
    cs = np.concatenate(([0.0], np.cumsum(p)))
    i = np.arange(n)
    lead0 = np.clip(i - guard - per_side, 0, n)
    lead1 = np.clip(i - guard, 0, n)
    lag0 = np.clip(i + guard + 1, 0, n)
    lag1 = np.clip(i + guard + 1 + per_side, 0, n)
    n_lead = lead1 - lead0
    n_lag = lag1 - lag0
    with np.errstate(invalid="ignore", divide="ignore"):
        lead = np.where(n_lead > 0, (cs[lead1] - cs[lead0]) / n_lead, -np.inf)
        lag = np.where(n_lag > 0, (cs[lag1] - cs[lag0]) / n_lag, -np.inf)
    return scale * np.maximum(lead, lag)


def local_maxima(p: np.ndarray) -> np.ndarray:
    mask = np.ones(p.size, dtype=bool)
    mask[1:] &= p[1:] > p[:-1]
    mask[:-1] &= p[:-1] >= p[1:]
    return mask


def goca_cfar(spectrum: np.ndarray, training: int = 50, guard: int = 2,
              scale: float = 1.0) -> np.ndarray:
    """Indices of local maxima above the GoCA threshold."""
    p = np.asarray(spectrum, dtype=float)
    thr = goca_threshold(p, training, guard, scale)
    return np.flatnonzero((p > thr) & local_maxima(p))


def bin_ranges(cfg: RadarConfig, n_bins: int) -> np.ndarray:
    nfft = cfg.samples_per_chirp * cfg.fft_padding
    b = np.arange(n_bins)
    return b * SPEED_OF_LIGHT * cfg.T / (2 * cfg.radar_bw * nfft * cfg.T_s)


def bin_frequencies(cfg: RadarConfig, n_bins: int) -> np.ndarray:
    nfft = cfg.samples_per_chirp * cfg.fft_padding
    return np.arange(n_bins) / (nfft * cfg.T_s)


def coherent_if(cfg: RadarConfig, targets: Sequence[Target] = (),
                interferers: Sequence[Interferer] = ()) -> np.ndarray:
    """Noiseless ADC output summed over the N chirps (filtered, decimated).

    Equal to ``lowpass_filter(synthesize_frame(..., noise_seed=None)).samples.sum(0)``
    but built from one chirp-length vector per tone.
    """
    t = _time_axis(cfg)
    acc = np.zeros(t.size, dtype=complex)
    for tone in scene_tones(cfg, targets, interferers):
        acc += tone.chirps.sum() * tone.amplitude * np.exp(2j * np.pi * tone.frequency * t)
    if not cfg.iq_sampling:
        acc = acc.real
    return _lowpass(acc, cfg, cfg.oversample / cfg.T_s)


def coherent_noise(cfg: RadarConfig, rng: np.random.Generator, n0: float) -> np.ndarray:
    """Filtered noise summed over N chirps: one draw with N times the variance."""
    n = cfg.samples_per_chirp * cfg.oversample
    w = _complex_noise(rng, n, cfg.N * n0 * cfg.oversample)
    if not cfg.iq_sampling:
        w = w.real
    return _lowpass(w, cfg, cfg.oversample / cfg.T_s)


def report_from_coherent(cfg: RadarConfig, x: np.ndarray) -> DetectionReport:
    spectrum = _spectrum_1d(x, cfg.fft_padding)
    return _report(cfg, spectrum)


def _report(cfg: RadarConfig, spectrum: np.ndarray) -> DetectionReport:
    thr = goca_threshold(spectrum, cfg.cfar_training, cfg.cfar_guard, cfg.cfar_scale)
    hits = np.flatnonzero((spectrum > thr) & local_maxima(spectrum))
    ranges = bin_ranges(cfg, spectrum.size)
    dets = [Detection(int(b), float(ranges[b]), float(spectrum[b])) for b in hits]
    return DetectionReport(dets, spectrum, thr, bin_frequencies(cfg, spectrum.size), ranges)


def detect(cfg: RadarConfig, targets: Sequence[Target] = (),
           interferers: Sequence[Interferer] = (), seed: Optional[int] = 0,
           fast: bool = True) -> DetectionReport:
    """Synthesize, filter, integrate and threshold one frame.

    ``fast`` integrates chirps before filtering (same distribution, one
    chirp of work); ``fast=False`` runs the frame-level pipeline.
    """
    if fast:
        x = coherent_if(cfg, targets, interferers)
        if seed is not None:
            rng = np.random.default_rng(seed)
            x = x + coherent_noise(cfg, rng, scene_noise_variance(cfg, targets))
        return report_from_coherent(cfg, x)
    frame = lowpass_filter(synthesize_frame(cfg, targets, interferers, seed), cfg)
    return _report(cfg, range_spectrum(frame, cfg.fft_padding))


def frame_false_alarm_statistic(cfg: RadarConfig, rng: np.random.Generator) -> float:
    """Largest local-maximum-to-GoCA-mean ratio in one noise-only frame."""
    x = coherent_noise(cfg, rng, noise_variance(cfg))
    p = _spectrum_1d(x, cfg.fft_padding)
    ref = goca_threshold(p, cfg.cfar_training, cfg.cfar_guard, 1.0)
    ratio = np.where(local_maxima(p), p / ref, 0.0)
    return float(ratio.max())


def calibrate_cfar_scale(cfg: RadarConfig, frames: int = 100_000,
                         rate: float = 1e-4, seed: int = 0) -> float:
    """CFAR scale giving ``rate`` false alarms per noise-only frame (empirical quantile)."""
    rng = np.random.default_rng(seed)
    stats = np.array([frame_false_alarm_statistic(cfg, rng) for _ in range(frames)])
    return float(np.quantile(stats, 1 - rate))
