"""Parametric encoder: rate and quality as functions of (rf, resolution, fps, SI/TI).

Stands in for a real encoder plus a perceptual metric.  Bitrate follows a
power law in pixel count and frame rate and halves every six rate-factor
steps; quality is a product of rate-factor, spatial, and temporal terms whose
exponents grow with SI, so busy content loses more when downscaled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import CodecConfig
from .traces import SI_MAX, TI_MAX

RF_MIN, RF_MAX = 0, 51
RESOLUTIONS = ("1440p", "1080p", "720p", "540p")
FRAME_RATES = (60, 50, 40, 30, 20, 10, 0)
MAX_FPS = 60

PIXELS = {
    "1440p": 2560 * 1440,
    "1080p": 1920 * 1080,
    "720p": 1280 * 720,
    "540p": 960 * 540,
}
PIXEL_FRACTION = {r: PIXELS[r] / PIXELS["1440p"] for r in RESOLUTIONS}


class EncoderConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    rate_factor: int
    resolution: str
    frame_rate: int

    def __post_init__(self):
        if not (isinstance(self.rate_factor, (int, np.integer))
                and RF_MIN <= self.rate_factor <= RF_MAX):
            raise EncoderConfigError(f"rate factor {self.rate_factor!r} outside [0, 51]")
        if self.resolution not in PIXELS:
            raise EncoderConfigError(f"unknown resolution {self.resolution!r}")
        if self.frame_rate not in FRAME_RATES:
            raise EncoderConfigError(f"frame rate {self.frame_rate!r} not in {FRAME_RATES}")
        object.__setattr__(self, "rate_factor", int(self.rate_factor))


@dataclass(frozen=True)
class EncodedFrame:
    frame_id: int
    capture_time: float
    size: int
    quality: float
    config: EncoderConfig
    keyframe: bool = False


def frame_count(frame_rate: float, interval: float) -> int:
    # the epsilon keeps 30 fps * 0.1 s at 3 frames despite float rounding
    return int(math.floor(frame_rate * interval + 1e-9))


class RateQualityModel:
    def __init__(self, cfg: CodecConfig | None = None):
        self.cfg = cfg or CodecConfig()
        c = self.cfg
        if min(c.b_s, c.b_t, c.cq_min, c.ds_min, c.k_t, c.halving) <= 0:
            raise ValueError("rate/quality exponents must be positive")

    def reference_bitrate(self, si: float, ti: float) -> float:
        """kbps at rf_ref, 1440p, 60 fps; linear in SI + TI."""
        c = self.cfg
        x = min(max((si + ti) / (SI_MAX + TI_MAX), 0.0), 1.0)
        return c.rref_min + (c.rref_max - c.rref_min) * x

    def quality_exponents(self, si: float) -> tuple[float, float]:
        c = self.cfg
        x = min(max(si / SI_MAX, 0.0), 1.0)
        return c.cq_min + (c.cq_max - c.cq_min) * x, c.ds_min + (c.ds_max - c.ds_min) * x

    def bitrate(self, rf: float, resolution: str, frame_rate: float, si: float, ti: float) -> float:
        """Continuous-rf form of :meth:`model_bitrate`, usable for sweeps."""
        if frame_rate <= 0:
            return 0.0
        c = self.cfg
        return (self.reference_bitrate(si, ti)
                * PIXEL_FRACTION[resolution] ** c.b_s
                * (frame_rate / MAX_FPS) ** c.b_t
                * 2.0 ** ((c.rf_ref - rf) / c.halving))

    def quality(self, rf: float, resolution: str, frame_rate: float, si: float, ti: float) -> float:
        if frame_rate <= 0:
            return 0.0
        k = self.cfg.k_t
        temporal = (1 - math.exp(-k * frame_rate / MAX_FPS)) / (1 - math.exp(-k))
        return self.spatial_quality(rf, resolution, si) * temporal

    def spatial_quality(self, rf: float, resolution: str, si: float) -> float:
        """Quality at full frame rate; depends only on rf, resolution and SI."""
        cq, ds = self.quality_exponents(si)
        rf_term = max((RF_MAX - rf) / RF_MAX, 0.0)
        return 100.0 * rf_term ** cq * PIXEL_FRACTION[resolution] ** ds

    def model_bitrate(self, cfg: EncoderConfig, si: float, ti: float) -> float:
        return self.bitrate(cfg.rate_factor, cfg.resolution, cfg.frame_rate, si, ti)

    def model_quality(self, cfg: EncoderConfig, si: float, ti: float) -> float:
        return self.quality(cfg.rate_factor, cfg.resolution, cfg.frame_rate, si, ti)

    def rate_factor_for(self, target_kbps: float, resolution: str, frame_rate: float,
                        si: float, ti: float) -> int:
        """Integer rf whose modelled bitrate is closest (in log) to the target."""
        if frame_rate <= 0 or target_kbps <= 0:
            return RF_MAX
        c = self.cfg
        at_ref = self.bitrate(c.rf_ref, resolution, frame_rate, si, ti)
        rf = c.rf_ref - c.halving * math.log2(target_kbps / at_ref)
        return int(min(max(round(rf), RF_MIN), RF_MAX))

    def encode_interval(self, cfg: EncoderConfig, si: float, ti: float, start: float,
                        interval: float, rng: np.random.Generator, first_frame_id: int = 0,
                        restart: bool = False, sigma: float | None = None) -> list[EncodedFrame]:
        """Synthetic frames for one interval at evenly spaced capture times.

        ``restart`` inflates the first frame into a keyframe.
        """
        if interval <= 0:
            raise ValueError("interval must be positive")
        n = frame_count(cfg.frame_rate, interval)
        if n == 0:
            return []
        sigma = self.cfg.noise_sigma if sigma is None else sigma
        mean_size = self.model_bitrate(cfg, si, ti) * 1000.0 / 8.0 * interval / n
        noise = np.exp(sigma * rng.standard_normal(n) - 0.5 * sigma * sigma) if sigma > 0 else np.ones(n)
        q = self.model_quality(cfg, si, ti)
        frames = []
        for i in range(n):
            size = mean_size * noise[i]
            key = restart and i == 0
            if key:
                size *= self.cfg.keyframe_factor
            frames.append(EncodedFrame(first_frame_id + i, start + i * interval / n,
                                       max(1, int(round(size))), q, cfg, keyframe=key))
        return frames


_DEFAULT = RateQualityModel()


def model_bitrate(cfg: EncoderConfig, si: float, ti: float,
                  model: RateQualityModel | None = None) -> float:
    return (model or _DEFAULT).model_bitrate(cfg, si, ti)


def model_quality(cfg: EncoderConfig, si: float, ti: float,
                  model: RateQualityModel | None = None) -> float:
    return (model or _DEFAULT).model_quality(cfg, si, ti)


def encode_interval(cfg: EncoderConfig, si: float, ti: float, interval: float, rng_seed: int,
                    start: float = 0.0, model: RateQualityModel | None = None,
                    sigma: float | None = None) -> list[EncodedFrame]:
    rng = np.random.default_rng(rng_seed)
    return (model or _DEFAULT).encode_interval(cfg, si, ti, start, interval, rng, sigma=sigma)


def crossover_bitrate(model: RateQualityModel, si: float, ti: float, high: str = "1080p",
                      low: str = "720p", frame_rate: int = 30, n: int = 20001) -> float | None:
    """Bitrate where the ``high`` and ``low`` quality-vs-bitrate curves cross.

    Sweeps rf densely at both resolutions and interpolates quality on a
    common log-bitrate grid; returns None when the curves never cross.
    """
    rfs = np.linspace(RF_MIN, RF_MAX - 1e-6, n)
    curves = {}
    for res in (high, low):
        r = np.array([model.bitrate(x, res, frame_rate, si, ti) for x in rfs])
        qv = np.array([model.quality(x, res, frame_rate, si, ti) for x in rfs])
        curves[res] = (np.log(r[::-1]), qv[::-1])
    lo = max(curves[high][0][0], curves[low][0][0])
    hi = min(curves[high][0][-1], curves[low][0][-1])
    grid = np.linspace(lo, hi, n)
    diff = np.interp(grid, *curves[high]) - np.interp(grid, *curves[low])
    sign = np.sign(diff)
    idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    if len(idx) == 0:
        return None
    i = idx[0]
    x = grid[i] - diff[i] * (grid[i + 1] - grid[i]) / (diff[i + 1] - diff[i])
    return float(math.exp(x))
