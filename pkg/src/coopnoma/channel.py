"""Terrestrial and air-to-ground link gains, BS antenna pattern, noise power.

Two channel modes are available:

``"3gpp"``
    UMa path-loss, LoS probability and log-normal shadowing (TR 38.901) for
    ground links with Rayleigh block fading; UMa-AV (TR 36.777) for the
    aerial links, which are frequency-flat and carry no small-scale fading.
``"simple"``
    Deterministic log-distance path-loss (exponent 3.5 ground, 2.2 aerial)
    referenced to free space at 1 m, no shadowing or fading.

All gains returned here are linear power ratios that already include the
BS antenna gain. Distances in metres, frequencies in Hz, heights in metres.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, InputDomainError

SPEED_OF_LIGHT = 299792458.0
DIPOLE_DIRECTIVITY = 1.641  # half-wave dipole, 2.15 dBi
_GAIN_FLOOR = 1e-20


@dataclass(frozen=True)
class ChannelConfig:
    carrier_freq: float = 2e9
    noise_psd: float = -164.0          # dBm/Hz, noise figure included
    rb_bandwidth: float = 180e3
    bs_height: float = 25.0
    ue_height: float = 1.5
    uav_altitude: float = 60.0
    antenna_elements: int = 10
    downtilt: float = 10.0             # degrees below the horizon
    mode: str = "3gpp"
    shadowing: bool = True
    fading: bool = True
    force_los: bool | None = None      # aerial links only; None draws the state
    uav_altitude_min: float = 22.5
    uav_altitude_max: float = 300.0

    def __post_init__(self):
        if self.mode not in ("3gpp", "simple"):
            raise ConfigError(f"channel.mode must be '3gpp' or 'simple', got {self.mode!r}")
        for name in ("carrier_freq", "rb_bandwidth", "bs_height", "ue_height",
                     "uav_altitude", "antenna_elements"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"channel.{name} must be positive, got {value!r}")
        if not np.isfinite(self.noise_psd):
            raise ConfigError("channel.noise_psd must be finite")

    @classmethod
    def from_mapping(cls, values: dict) -> "ChannelConfig":
        """Build from a flat mapping; unknown keys raise :class:`ConfigError`."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown channel key 'channel.{key}'")
            kwargs[key] = raw
        return cls(**kwargs)


def noise_power(cfg: ChannelConfig) -> float:
    """Thermal noise power over one RB, in watts."""
    return 10 ** (cfg.noise_psd / 10) / 1000 * cfg.rb_bandwidth


# -- 3GPP TR 38.901 UMa (ground UEs) ----------------------------------------

def uma_los_probability(d2d, h_ut=1.5):
    d2d = np.asarray(d2d, float)
    c = 0.0 if h_ut <= 13 else ((h_ut - 13) / 10) ** 1.5
    far = (18 / d2d + np.exp(-d2d / 63) * (1 - 18 / d2d)) * (
        1 + c * 5 / 4 * (d2d / 100) ** 3 * np.exp(-d2d / 150))
    return np.where(d2d <= 18, 1.0, far)


def uma_breakpoint(h_bs, h_ut, fc):
    """Effective breakpoint distance d'_BP (environment height 1 m)."""
    return 4 * (h_bs - 1.0) * (h_ut - 1.0) * fc / SPEED_OF_LIGHT


def uma_pathloss(d2d, h_bs, h_ut, fc, los):
    """UMa path-loss in dB; NLoS is floored by the LoS value."""
    d2d = np.asarray(d2d, float)
    d3d = np.hypot(d2d, h_bs - h_ut)
    fc_ghz = fc / 1e9
    dbp = uma_breakpoint(h_bs, h_ut, fc)
    pl1 = 28.0 + 22 * np.log10(d3d) + 20 * np.log10(fc_ghz)
    pl2 = (28.0 + 40 * np.log10(d3d) + 20 * np.log10(fc_ghz)
           - 9 * np.log10(dbp ** 2 + (h_bs - h_ut) ** 2))
    pl_los = np.where(d2d <= dbp, pl1, pl2)
    pl_nlos = 13.54 + 39.08 * np.log10(d3d) + 20 * np.log10(fc_ghz) - 0.6 * (h_ut - 1.5)
    return np.where(los, pl_los, np.maximum(pl_los, pl_nlos))


def uma_shadow_std(los):
    return 4.0 if los else 6.0


# -- 3GPP TR 36.777 UMa-AV (aerial UE) --------------------------------------

def uma_av_los_probability(d2d, h_uav):
    d2d = np.asarray(d2d, float)
    if h_uav > 100:
        return np.ones_like(d2d)
    lh = math.log10(h_uav)
    p1 = 4300 * lh - 3800
    d1 = max(460 * lh - 700, 18.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        far = d1 / d2d + np.exp(-d2d / p1) * (1 - d1 / d2d)
    return np.where(d2d <= d1, 1.0, far)


def uma_av_pathloss(d3d, h_uav, fc, los):
    d3d = np.asarray(d3d, float)
    fc_ghz = fc / 1e9
    pl_los = 28.0 + 22 * np.log10(d3d) + 20 * np.log10(fc_ghz)
    pl_nlos = (-17.5 + (46 - 7 * math.log10(h_uav)) * np.log10(d3d)
               + 20 * np.log10(40 * math.pi * fc_ghz / 3))
    return np.where(los, pl_los, pl_nlos)


def uma_av_shadow_std(h_uav, los):
    return 4.64 * math.exp(-0.0066 * h_uav) if los else 6.0


def _simple_pathloss(d3d, fc, exponent):
    fspl_1m = 20 * math.log10(4 * math.pi * fc / SPEED_OF_LIGHT)
    return fspl_1m + 10 * exponent * np.log10(d3d)


# -- BS antenna ---------------------------------------------------------------

def dipole_pattern(elevation_deg):
    """Normalised power pattern of a vertical half-wave dipole (1 at the horizon)."""
    th = np.radians(np.asarray(elevation_deg, float))
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.cos(np.pi / 2 * np.sin(th)) / np.cos(th)
    return np.nan_to_num(e ** 2)


def array_factor(elevation_deg, n_elements=10, steer_deg=-10.0):
    """Power array factor of a vertical ULA with half-wavelength spacing, divided by N.

    Equals ``n_elements`` at the steering angle.
    """
    th = np.radians(np.asarray(elevation_deg, float))
    psi = np.pi * (np.sin(th) - math.sin(math.radians(steer_deg)))
    k = np.arange(n_elements)
    af = np.exp(1j * np.multiply.outer(psi, k)).sum(axis=-1)
    return np.abs(af) ** 2 / n_elements


def antenna_gain(cfg: ChannelConfig, elevation_deg):
    """BS antenna gain in dB toward ``elevation_deg`` (positive above the horizon).

    Omnidirectional in azimuth; the main beam points at ``-cfg.downtilt``.
    """
    lin = (DIPOLE_DIRECTIVITY * dipole_pattern(elevation_deg)
           * array_factor(elevation_deg, cfg.antenna_elements, -cfg.downtilt))
    return 10 * np.log10(np.maximum(lin, _GAIN_FLOOR))


def elevation_angle(bs_pos, target_pos):
    """Elevation (degrees) of ``target_pos`` seen from ``bs_pos``; both 3D."""
    bs = np.asarray(bs_pos, float)
    tg = np.asarray(target_pos, float)
    d2d = math.hypot(tg[0] - bs[0], tg[1] - bs[1])
    return math.degrees(math.atan2(tg[2] - bs[2], d2d))


# -- link gains ---------------------------------------------------------------

def _geometry(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    d2d = math.hypot(a[0] - b[0], a[1] - b[1])
    d3d = math.sqrt(d2d ** 2 + (a[2] - b[2]) ** 2)
    return d2d, d3d


def terrestrial_gain(cfg: ChannelConfig, ue_pos, bs_pos, rng: np.random.Generator) -> float:
    """Linear power gain of one ground UE -> BS link on one RB."""
    d2d, d3d = _geometry(ue_pos, bs_pos)
    if d2d <= 0:
        raise InputDomainError("ground UE and BS share a horizontal position")
    g_ant = antenna_gain(cfg, elevation_angle(bs_pos, ue_pos))
    if cfg.mode == "simple":
        return float(10 ** ((g_ant - _simple_pathloss(d3d, cfg.carrier_freq, 3.5)) / 10))
    h_ut = float(np.asarray(ue_pos)[2])
    h_bs = float(np.asarray(bs_pos)[2])
    los = bool(rng.random() < uma_los_probability(d2d, h_ut))
    pl = float(uma_pathloss(d2d, h_bs, h_ut, cfg.carrier_freq, los))
    shadow = rng.normal(0.0, uma_shadow_std(los)) if cfg.shadowing else 0.0
    fade = rng.exponential(1.0) if cfg.fading else 1.0
    return float(10 ** ((g_ant - pl + shadow) / 10) * fade)


def a2g_gain(cfg: ChannelConfig, uav_pos, bs_pos, rng: np.random.Generator) -> float:
    """Frequency-flat linear power gain ``|f_j|^2`` of the UAV -> BS link."""
    h = float(np.asarray(uav_pos)[2])
    if not (cfg.uav_altitude_min <= h <= cfg.uav_altitude_max):
        raise ConfigError(
            f"UAV altitude {h} m outside the aerial model range "
            f"[{cfg.uav_altitude_min}, {cfg.uav_altitude_max}] m")
    d2d, d3d = _geometry(uav_pos, bs_pos)
    g_ant = antenna_gain(cfg, elevation_angle(bs_pos, uav_pos))
    if cfg.mode == "simple":
        return float(10 ** ((g_ant - _simple_pathloss(d3d, cfg.carrier_freq, 2.2)) / 10))
    if cfg.force_los is None:
        los = bool(rng.random() < uma_av_los_probability(d2d, h))
    else:
        los = bool(cfg.force_los)
    pl = float(uma_av_pathloss(d3d, h, cfg.carrier_freq, los))
    shadow = rng.normal(0.0, uma_av_shadow_std(h, los)) if cfg.shadowing else 0.0
    return float(10 ** ((g_ant - pl + shadow) / 10))
