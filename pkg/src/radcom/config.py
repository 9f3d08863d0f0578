"""Radar/communication parameter container and closed-form radar quantities."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

SPEED_OF_LIGHT = 299_792_458.0
BOLTZMANN = 1.380649e-23

# Empirical GoCA-CFAR scale (15.7 dB) giving ~1e-4 false alarms per noise-only
# frame at the default receiver settings.  Regenerate with
# signal_chain.calibrate_cfar_scale(cfg, frames=100_000, seed=12345).
DEFAULT_CFAR_SCALE = 37.17


class ConfigError(ValueError):
    """Raised when a configuration violates a parameter constraint."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class RadarConfig:
    """Chirp, frame, RF, receiver and communication parameters.

    ``B_r`` is an optional explicit radar bandwidth.  When left as ``None``
    the radar band is what remains of ``B`` after the communication
    sub-band, which occupies ``2 * B_c`` of RF spectrum (a baseband signal of
    width ``B_c`` is mixed up double-sided).  Use :attr:`radar_bw` for the
    effective value.
    """

    f_c: float = 77e9
    B: float = 1e9
    B_c: float = 0.0
    B_r: Optional[float] = None
    T: float = 20e-6
    T_s: float = 1e-8
    N: int = 99
    T_f: float = 20e-3
    K: int = 10
    P_tx: float = 10 ** (11 / 10) * 1e-3
    G_tx: float = 10 ** (24 / 10)
    G_rx: float = 10 ** (24 / 10)
    T_noise: float = 290.0
    NF: float = 4.5
    lpf_order: int = 13
    lpf_ripple_db: float = 1.0
    lpf_stopband_db: float = 65.0
    oversample: int = 4
    iq_sampling: bool = False
    snr_db: Optional[float] = None
    fft_padding: int = 1
    cfar_training: int = 50
    cfar_guard: int = 2
    cfar_scale: float = DEFAULT_CFAR_SCALE
    slot_time: float = 10e-6
    backoff_window: int = 6
    packet_bits: int = 4800
    bits_per_symbol: int = 4
    clock_offset: float = 0.0

    def __post_init__(self):
        positive = ("f_c", "B", "T", "T_s", "T_f", "P_tx", "G_tx", "G_rx",
                    "T_noise", "slot_time")
        for name in positive:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(name, f"must be a positive finite number, got {value!r}")
        integral = ("N", "K", "lpf_order", "oversample", "fft_padding", "cfar_training",
                    "backoff_window", "packet_bits", "bits_per_symbol")
        for name in integral:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(name, f"must be a positive integer, got {value!r}")
        if self.B_c < 0:
            raise ConfigError("B_c", "must be non-negative")
        if self.B_r is not None and not self.B_r > 0:
            raise ConfigError("B_r", "must be positive")
        if self.radar_bw <= 0:
            raise ConfigError("B_c", "communication band leaves no radar bandwidth")
        if self.radar_bw + self.B_c > self.B * (1 + 1e-12):
            raise ConfigError("B_r", "B_r + B_c must not exceed B")
        if not self.B_c < 1 / (2 * self.T_s):
            raise ConfigError("B_c", f"must be below the ADC bandwidth 1/(2 T_s) = {1 / (2 * self.T_s):.6g} Hz")
        if not self.N * self.T < self.T_f:
            raise ConfigError("N", "chirp sequence N*T must be shorter than the frame T_f")
        if self.K * (self.N + 1) * self.T > self.T_f * (1 + 1e-9):
            raise ConfigError("K", "K*(N+1)*T must fit in the frame T_f")
        if self.cfar_training % 2:
            raise ConfigError("cfar_training", "must be even (split across both sides)")
        if isinstance(self.cfar_guard, bool) or not isinstance(self.cfar_guard, int) \
                or self.cfar_guard < 0:
            raise ConfigError("cfar_guard", "must be a non-negative integer")
        if not self.cfar_scale > 0:
            raise ConfigError("cfar_scale", "must be positive")
        if self.NF < 0:
            raise ConfigError("NF", "noise figure must be >= 0 dB")
        for name in ("lpf_ripple_db", "lpf_stopband_db"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive (dB)")
        if self.clock_offset < 0:
            raise ConfigError("clock_offset", "must be non-negative")
        if self.oversample < 2:
            raise ConfigError("oversample", "synthesis needs at least 2x the ADC rate")

    @property
    def radar_bw(self) -> float:
        if self.B_r is not None:
            return self.B_r
        return self.B - 2 * self.B_c

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def samples_per_chirp(self) -> int:
        # tolerant floor: T/T_s is 2000 up to rounding error
        return int(math.floor(self.T / self.T_s + 1e-9))

    @property
    def chirp_slope(self) -> float:
        return self.radar_bw / self.T

    def replace(self, **changes) -> "RadarConfig":
        """Copy with changes.  A derived ``B_r`` follows new ``B``/``B_c`` values."""
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path) -> RadarConfig:
    """Read a flat JSON object of :class:`RadarConfig` fields."""
    text = Path(path).read_text()
    if not text.strip():
        raise ConfigError("<file>", f"{path} is empty")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("<file>", "top level must be an object of key/value pairs")
    known = {f.name for f in dataclasses.fields(RadarConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(unknown[0], f"unknown key(s): {', '.join(unknown)}")
    for name in ("N", "K", "lpf_order", "oversample", "fft_padding", "cfar_training",
                 "cfar_guard", "backoff_window", "packet_bits", "bits_per_symbol"):
        if name in raw and isinstance(raw[name], float) and raw[name].is_integer():
            raw[name] = int(raw[name])
    try:
        return RadarConfig(**raw)
    except TypeError as exc:
        raise ConfigError("<file>", str(exc)) from exc


def max_range(cfg: RadarConfig) -> float:
    return SPEED_OF_LIGHT * cfg.T / (4 * cfg.radar_bw * cfg.T_s)


def max_velocity(cfg: RadarConfig) -> float:
    return SPEED_OF_LIGHT / (4 * cfg.f_c * cfg.T)


def range_resolution(cfg: RadarConfig) -> float:
    return SPEED_OF_LIGHT / (2 * cfg.radar_bw)


def beat_frequency(cfg: RadarConfig, d: float) -> float:
    """IF tone of a stationary target at range ``d``."""
    if not 0 <= d <= max_range(cfg) * (1 + 1e-12):
        raise ValueError(f"range {d} m outside [0, {max_range(cfg):.6g}] m")
    return 2 * d * cfg.radar_bw / (SPEED_OF_LIGHT * cfg.T)


def doppler_delay(cfg: RadarConfig, v: float) -> float:
    """Doppler shift expressed as a time shift; positive for approaching targets."""
    if abs(v) > max_velocity(cfg) * (1 + 1e-12):
        raise ValueError(f"|v| = {abs(v)} m/s exceeds v_max = {max_velocity(cfg):.6g} m/s")
    return cfg.T * v * cfg.f_c / (cfg.radar_bw * SPEED_OF_LIGHT)


def link_budget_constants(cfg: RadarConfig, rcs: float) -> Tuple[float, float]:
    """Return (target constant, direct-path interference constant)."""
    if not rcs > 0:
        raise ValueError("rcs must be positive")
    lam2 = cfg.wavelength ** 2
    gains = cfg.G_tx * cfg.G_rx
    gamma = gains * rcs * lam2 / (4 * math.pi) ** 3
    gamma_int = gains * lam2 / (4 * math.pi) ** 2
    return gamma, gamma_int

