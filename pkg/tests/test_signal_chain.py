import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import signal

from radcom.config import RadarConfig, max_velocity, range_resolution
from radcom.signal_chain import (
    IFFrame,
    Interferer,
    Target,
    detect,
    goca_cfar,
    goca_threshold,
    lowpass_filter,
    lowpass_response,
    noise_variance,
    range_spectrum,
    scene_tones,
    synthesize_frame,
)


def peak_bin(spec):
    return int(np.argmax(spec))


def test_noise_variance_oracles(cfg):
    assert noise_variance(cfg.replace(NF=0.0)) == pytest.approx(2.00194105e-13, rel=1e-8)
    ratio = noise_variance(cfg) / noise_variance(cfg.replace(NF=0.0))
    assert ratio == pytest.approx(2.8183829, rel=1e-6)
    assert noise_variance(cfg) == pytest.approx(5.642236484717638e-13, rel=1e-9)


def test_fixed_snr_override_sets_noise_relative_to_target(cfg):
    c = cfg.replace(snr_db=10.0, N=4)
    frame = synthesize_frame(c, [Target(70.0)], noise_seed=None)
    noisy = synthesize_frame(c, [Target(70.0)], noise_seed=3)
    sig = np.mean(np.abs(frame.samples) ** 2)
    # real sampling halves both powers; oversampled noise carries 4x the ADC-band power
    noise = np.mean(np.abs(noisy.samples - frame.samples) ** 2) / c.oversample
    assert 10 * np.log10(sig / noise) == pytest.approx(10.0, abs=0.2)


def test_empty_noiseless_frame_is_zero(cfg):
    frame = synthesize_frame(cfg.replace(N=3), noise_seed=None)
    assert frame.samples.shape == (3, 2000 * cfg.oversample)
    assert not frame.samples.any()


def test_target_tone_at_70m(cfg):
    c = cfg.replace(N=2)
    frame = lowpass_filter(synthesize_frame(c, [Target(70.0)], noise_seed=None), c)
    assert frame.n_samples == 2000 and frame.sample_rate == pytest.approx(1e8)
    spec = range_spectrum(frame)
    f_peak = peak_bin(spec) / (c.samples_per_chirp * c.T_s)
    assert abs(f_peak - 23.33e6) <= 1 / c.T


def test_ghost_tone_and_power_ratio(cfg):
    tones = scene_tones(cfg, [Target(70.0)], [Interferer(70.0, tau=0.0)])
    target, ghost = tones
    assert ghost.frequency == pytest.approx(11.67e6, rel=1e-3)
    assert (ghost.amplitude / target.amplitude) ** 2 == pytest.approx(4 * math.pi * 70 ** 2 / 100)
    c = cfg.replace(N=2)
    frame = lowpass_filter(synthesize_frame(c, [Target(70.0)], [Interferer(70.0, tau=0.0)],
                                            noise_seed=None), c)
    spec = range_spectrum(frame)
    lo, hi = spec[200:300], spec[400:500]
    ratio_db = 10 * np.log10(lo.max() / hi.max())
    # both tones sit in the passband (<= 1 dB ripple) and off bin centres (<= 1 dB scalloping)
    assert ratio_db == pytest.approx(27.894, abs=2.0)


def _tone_gain(c, freq, complex_tone=True):
    fs = c.oversample / c.T_s
    n = np.arange(c.samples_per_chirp * c.oversample)
    x = np.exp(2j * np.pi * freq * n / fs)
    frame = lowpass_filter(IFFrame(x[None, :], fs), c)
    y = frame.samples[0, 500:]  # skip the filter transient
    return np.sqrt(np.mean(np.abs(y) ** 2))


def test_lowpass_passband_and_dc(cfg):
    assert 20 * np.log10(_tone_gain(cfg, 10e6)) == pytest.approx(0.0, abs=cfg.lpf_ripple_db + 0.01)
    h0 = abs(lowpass_response(cfg, 0.0)[0])
    assert _tone_gain(cfg, 0.0) == pytest.approx(h0, rel=1e-6)


def test_lowpass_attenuation_at_twice_cutoff(cfg):
    measured_db = 20 * np.log10(_tone_gain(cfg, 100e6))
    fs = cfg.oversample / cfg.T_s
    sos = signal.cheby1(13, 1.0, 50e6, fs=fs, output="sos")
    _, h = signal.sosfreqz(sos, worN=[100e6], fs=fs)
    oracle_db = 20 * np.log10(abs(h[0] + 10 ** (-65 / 20)))
    assert measured_db == pytest.approx(oracle_db, abs=0.1)
    assert measured_db <= -60.0


def test_bin_centre_tone_sidelobes(cfg):
    n = cfg.samples_per_chirp
    k = 300
    x = np.exp(2j * np.pi * k * np.arange(n) / n)
    spec = range_spectrum(IFFrame(x[None, :], 1 / cfg.T_s))
    assert peak_bin(spec) == k
    rel = 10 * np.log10(spec / spec[k] + 1e-300)
    far = np.r_[rel[: k - 4], rel[k + 5:]]
    assert far.max() <= -92.0


def test_zero_frame_zero_spectrum(cfg):
    spec = range_spectrum(IFFrame(np.zeros((4, 2000)), 1e8))
    assert spec.shape == (1001,) and not spec.any()


def test_coherent_integration_gain(cfg):
    n, N = 2000, 16
    k = 250
    tone = np.exp(2j * np.pi * k * np.arange(n) / n)
    one = range_spectrum(IFFrame(tone[None, :], 1e8))
    many = range_spectrum(IFFrame(np.tile(tone, (N, 1)), 1e8))
    assert many[k] == pytest.approx(N ** 2 * one[k])
    rng = np.random.default_rng(0)
    floors = []
    for chirps in (1, N):
        w = rng.standard_normal((200, chirps, n)) + 1j * rng.standard_normal((200, chirps, n))
        floors.append(np.mean([range_spectrum(IFFrame(f, 1e8))[600:900].mean() for f in w]))
    assert floors[1] / floors[0] == pytest.approx(N, rel=0.05)


def _goca_reference(p, training, guard, scale):
    half = training // 2
    out = []
    for i in range(len(p)):
        lead = p[max(0, i - guard - half): max(0, i - guard)]
        lag = p[i + guard + 1: i + guard + 1 + half]
        means = [seg.mean() for seg in (lead, lag) if len(seg)]
        out.append(scale * max(means))
    return np.array(out)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=1e3), min_size=60, max_size=200),
       st.sampled_from([(50, 2), (10, 0), (20, 3)]))
def test_goca_threshold_matches_loop(values, window):
    p = np.array(values)
    training, guard = window
    np.testing.assert_allclose(goca_threshold(p, training, guard, 2.0),
                               _goca_reference(p, training, guard, 2.0), rtol=1e-9, atol=1e-9)


def test_goca_cases():
    flat = np.ones(300)
    assert goca_cfar(flat, 50, 2, 1.5).size == 0
    spiky = np.ones(300)
    spiky[120] = 100.0
    assert goca_cfar(spiky, 50, 2, 10.0).tolist() == [120]
    spiky[220] = 100.0
    assert goca_cfar(spiky, 50, 2, 10.0).tolist() == [120, 220]
    with pytest.raises(ValueError):
        goca_cfar(np.ones(40), 50, 2, 1.0)


def test_detect_single_target(cfg):
    rep = detect(cfg, [Target(70.0)], seed=1)
    assert len(rep.detections) == 1
    assert abs(rep.detections[0].range_m - 70.0) <= 0.15


def test_detect_ghost(cfg):
    rep = detect(cfg, [Target(70.0)], [Interferer(70.0, tau=0.0)], seed=1)
    ranges = rep.detected_ranges
    assert np.any(np.abs(ranges - 70.0) < 0.5)
    assert np.any(np.abs(ranges - 35.0) < 0.5)


def test_fast_path_matches_frame_pipeline(cfg):
    c = cfg.replace(N=8)
    scene = ([Target(70.0), Target(120.0, v=10.0)], [Interferer(60.0, tau=-2.5e-6)])
    a = detect(c, *scene, seed=None, fast=True)
    b = detect(c, *scene, seed=None, fast=False)
    np.testing.assert_allclose(a.spectrum, b.spectrum, rtol=1e-8, atol=1e-12 * a.spectrum.max())


def test_interferer_only_in_overlapping_chirps(cfg):
    c = cfg.replace(N=10)
    # one chirp late: chirp k of the ego sees chirp k-1 of the interferer
    (tone,) = scene_tones(c, [], [Interferer(30.0, tau=c.T - 0.5e-6)])
    assert tone.chirps.sum() == c.N - 1


def test_noise_only_false_alarms(cfg):
    alarms = sum(len(detect(cfg, seed=s).detections) for s in range(100))
    assert alarms <= 2


def test_distance_doubling_moves_bin_and_drops_12db(cfg):
    cell = range_resolution(cfg)
    d1, d2 = 200 * cell, 400 * cell  # bin centres
    r1 = detect(cfg, [Target(d1)], seed=None)
    r2 = detect(cfg, [Target(d2)], seed=None)
    assert peak_bin(r1.spectrum) == 200 and peak_bin(r2.spectrum) == 400
    f1, f2 = 200 / (2000 * cfg.T_s), 400 / (2000 * cfg.T_s)
    filt = 20 * np.log10(abs(lowpass_response(cfg, f2)[0]) / abs(lowpass_response(cfg, f1)[0]))
    drop = 10 * np.log10(r2.spectrum.max() / r1.spectrum.max())
    assert drop == pytest.approx(-40 * np.log10(2) + filt, abs=0.05)


@given(st.floats(min_value=0.5, max_value=48.0))
def test_approaching_target_lowers_beat(v):
    cfg = RadarConfig()
    (still,) = scene_tones(cfg, [Target(70.0)], [])
    (moving,) = scene_tones(cfg, [Target(70.0, v=v)], [])
    assert moving.frequency < still.frequency


def test_no_ghost_outside_vulnerable_period(cfg):
    for tau in np.arange(1.25e-6, 17e-6, 0.5e-6):
        rep = detect(cfg, [Target(70.0)], [Interferer(70.0, tau=float(tau))], seed=5)
        assert np.all(np.abs(rep.detected_ranges - 70.0) <= 3 * range_resolution(cfg)), tau


def test_iq_sampling_rejects_negative_offsets(cfg):
    scene = ([Target(70.0)], [Interferer(70.0, tau=-1.5e-6)])
    assert len(scene_tones(cfg, *scene)) == 2
    assert len(scene_tones(cfg.replace(iq_sampling=True), *scene)) == 1
    iq = detect(cfg.replace(iq_sampling=True), *scene, seed=2)
    assert len(iq.detections) == 1


def test_detection_is_deterministic(cfg):
    scene = ([Target(90.0)], [Interferer(40.0, tau=0.3e-6)])
    a, b = detect(cfg, *scene, seed=9), detect(cfg, *scene, seed=9)
    np.testing.assert_array_equal(a.spectrum, b.spectrum)
    assert a.detections == b.detections


def test_invalid_scene(cfg):
    with pytest.raises(ValueError):
        detect(cfg, [Target(-1.0)])
    with pytest.raises(ValueError):
        detect(cfg, [Target(10.0, v=max_velocity(cfg) * 1.5)])
    with pytest.raises(ValueError):
        detect(cfg, [], [Interferer(10.0, tau=0.05)])
