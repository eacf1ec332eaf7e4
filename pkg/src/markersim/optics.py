"""Post-trace optics: diffraction kernel, gamma encoding, quantization.

The diffraction point-spread function is the Airy pattern of a circular
aperture.  Because its first-zero radius is comparable to the pixel pitch,
the pattern is box-filtered over one pixel (supersampled quadrature) and
sampled at integer pitch multiples to obtain a discrete convolution kernel,
which is then normalized to unit sum (diffraction redistributes energy, it
does not absorb it).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.special import j1 as _bessel_j1

from .camera import CameraRig
from .errors import ConfigurationError, DomainError

# ratio between the first zero of J1 and pi: first_zero = pi * AIRY_ZERO_FACTOR
AIRY_ZERO_FACTOR = 1.2196698912665045

MAX_KERNEL_RADIUS = 25
KERNEL_ENERGY_FRACTION = 0.999


def airy_psf(r, airy_radius_um: float):
    """Relative Airy intensity at radial distance ``r`` (um), peak = 1."""
    if airy_radius_um <= 0:
        raise DomainError("airy radius must be positive")
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise DomainError("radial distance must be non-negative")
    x = np.pi * r / (airy_radius_um / AIRY_ZERO_FACTOR)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = (2.0 * _bessel_j1(x) / x) ** 2
    g = np.where(x == 0.0, 1.0, g)
    return float(g) if g.ndim == 0 else g


def airy_radius(rig: CameraRig) -> float:
    """First-zero radius of the Airy disk on the sensor, in micrometres.

    The angular radius 2 r_z lambda / d is promoted to a sensor-plane length
    by the focal length, collapsing to 2 r_z lambda N.
    """
    lam_um = rig.wavelength_nm * 1e-3
    return 2.0 * AIRY_ZERO_FACTOR * lam_um * rig.lens.f_number


@dataclass(frozen=True)
class DiffractionKernel:
    """Odd-sided square tap grid, normalized to unit sum."""

    taps: np.ndarray = field(repr=False)
    pitch_um: float
    airy_radius_um: float

    def __post_init__(self) -> None:
        t = np.asarray(self.taps, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] % 2 == 0:
            raise ConfigurationError("kernel taps must form an odd-sided square grid")
        if abs(t.sum() - 1.0) > 1e-6:
            raise ConfigurationError("kernel taps must sum to 1")
        if (
            np.abs(t - t.T).max() > 1e-9
            or np.abs(t - t[::-1, :]).max() > 1e-9
            or np.abs(t - t[:, ::-1]).max() > 1e-9
        ):
            raise ConfigurationError("kernel taps must be 4-fold symmetric")
        t.setflags(write=False)
        object.__setattr__(self, "taps", t)

    @property
    def radius(self) -> int:
        return self.taps.shape[0] // 2


def build_kernel(rig: CameraRig, supersample: int = 32) -> DiffractionKernel:
    """Box-filtered, pitch-sampled Airy kernel for this camera.

    Each tap integrates the Airy pattern over one pixel footprint with an
    n x n midpoint rule (n >= 16).  The Airy tails decay too slowly for a
    fixed energy fraction alone to bound the support, so the support is
    first cut at output significance: a tap below half an output
    quantization step cannot change any quantized pixel.  Within that
    support the smallest block holding 99.9% of the energy is kept and
    normalized to unit sum.
    """
    if supersample < 16:
        raise ConfigurationError("quadrature needs at least 16x16 points per tap")
    delta = rig.sensor.pixel_pitch_um
    r_a = airy_radius(rig)

    # midpoint offsets are symmetric about 0, which makes the tap grid
    # 4-fold symmetric by construction
    offs = (np.arange(supersample) + 0.5) / supersample - 0.5
    qx, qy = np.meshgrid(offs * delta, offs * delta)

    grid = np.arange(-MAX_KERNEL_RADIUS, MAX_KERNEL_RADIUS + 1)
    ix, iy = np.meshgrid(grid, grid)
    px = ix[:, :, None] * delta + qx.ravel()[None, None, :]
    py = iy[:, :, None] * delta + qy.ravel()[None, None, :]
    r = np.hypot(px, py)
    taps = airy_psf(r, r_a).mean(axis=2)

    total = taps.sum()
    center = MAX_KERNEL_RADIUS
    floor = total / (2.0 * (rig.sensor.levels - 1))
    support = 0
    for radius in range(1, MAX_KERNEL_RADIUS + 1):
        ring = taps[center - radius : center + radius + 1, center - radius : center + radius + 1].copy()
        ring[1:-1, 1:-1] = 0.0
        if ring.max() >= floor:
            support = radius
    if support == MAX_KERNEL_RADIUS:
        # significant taps still arriving at the grid rim
        raise ConfigurationError(
            f"diffraction kernel radius exceeds {MAX_KERNEL_RADIUS} taps "
            f"(airy radius {r_a:.2f} um vs pitch {delta:.2f} um)"
        )
    kept = taps[center - support : center + support + 1, center - support : center + support + 1]
    for radius in range(support + 1):
        lo, hi = support - radius, support + radius + 1
        block = kept[lo:hi, lo:hi]
        if block.sum() >= KERNEL_ENERGY_FRACTION * kept.sum():
            return DiffractionKernel(block / block.sum(), delta, r_a)
    raise ConfigurationError("unreachable: full support holds all collected energy")


def convolve(image: np.ndarray, kernel: DiffractionKernel) -> np.ndarray:
    """2D convolution with edge replication; output matches input size."""
    taps = kernel.taps
    if abs(taps.sum() - 1.0) > 1e-6:
        raise ConfigurationError("kernel is not normalized")
    return ndimage.convolve(np.asarray(image, dtype=np.float64), taps, mode="nearest")


def gamma_rec709(linear):
    """Rec. 709 transfer function on linear intensity clamped to [0, 1]."""
    x = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    encoded = np.where(x <= 0.018, 4.5 * x, 1.099 * np.power(x, 0.45) - 0.099)
    return float(encoded) if encoded.ndim == 0 else encoded


def inverse_gamma_rec709(encoded):
    """Inverse of ``gamma_rec709`` (branch point at 4.5 * 0.018 = 0.081)."""
    y = np.clip(np.asarray(encoded, dtype=np.float64), 0.0, 1.0)
    with np.errstate(invalid="ignore"):
        linear = np.where(y <= 0.081, y / 4.5, np.power((y + 0.099) / 1.099, 1.0 / 0.45))
    return float(linear) if linear.ndim == 0 else linear


def quantize(encoded, bit_depth: int):
    """Round-half-away-from-zero to integer levels [0, 2^bit_depth - 1]."""
    if bit_depth not in (8, 10, 12):
        raise ConfigurationError("bit depth must be one of 8, 10, 12")
    x = np.asarray(encoded, dtype=np.float64)
    levels = (1 << bit_depth) - 1
    q = np.clip(np.floor(x * levels + 0.5), 0, levels)
    if q.ndim == 0:
        return int(q)
    return q.astype(np.uint8 if bit_depth == 8 else np.uint16)
