"""User mobility and AP/IRS/user geometry.

Scalar helpers take and return :class:`Location3D`; the ``*_batch``
variants operate on ``(..., 3)`` arrays and are what the simulation loops
use. Both share one implementation so a given rng stream produces the same
trajectory either way.
"""

import math
from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Raised when an angle formula leaves its valid domain."""


@dataclass(frozen=True)
class Location3D:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite location {self}")

    def as_array(self):
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class MobilityParams:
    """Random-walk parameters: speed ~ U(speed_min, speed_max) in m/s,
    heading ~ U(heading_min, heading_max) in radians from +x,
    Gaussian position jitter with std ``uncertainty_std`` metres."""

    speed_min: float
    speed_max: float
    heading_min: float
    heading_max: float
    slot_duration: float
    uncertainty_std: float

    def __post_init__(self):
        if self.speed_min > self.speed_max:
            raise ValueError("speed_min must not exceed speed_max")
        if self.heading_min > self.heading_max:
            raise ValueError("heading_min must not exceed heading_max")
        if self.slot_duration <= 0:
            raise ValueError("slot_duration must be positive")
        if self.uncertainty_std < 0:
            raise ValueError("uncertainty_std must be non-negative")


@dataclass(frozen=True)
class SpawnRegion:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"empty spawn region {self}")


@dataclass(frozen=True)
class AngleTriple:
    sin_theta: float
    cos_xi: float
    sin_xi: float

    def phase_factors(self):
        """(sin(theta)cos(xi), sin(theta)sin(xi)): the y-axis and z-axis progressions."""
        return self.sin_theta * self.cos_xi, self.sin_theta * self.sin_xi


def sample_initial_locations(region, shape, rng):
    """Uniform positions in ``region`` on the ground plane, array of ``shape + (3,)``."""
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    out = np.zeros(shape + (3,))
    out[..., 0] = rng.uniform(region.x_min, region.x_max, size=shape)
    out[..., 1] = rng.uniform(region.y_min, region.y_max, size=shape)
    return out


def sample_initial_location(region, rng):
    return Location3D.from_array(sample_initial_locations(region, (), rng))


def step_mobility_batch(locs, params, rng):
    """Advance every location in ``locs`` (``(..., 3)``) by one slot.

    Only the horizontal jitter is applied; z stays pinned to the ground.
    """
    locs = np.asarray(locs, dtype=np.float64)
    shape = locs.shape[:-1]
    speed = rng.uniform(params.speed_min, params.speed_max, size=shape)
    heading = rng.uniform(params.heading_min, params.heading_max, size=shape)
    jitter = rng.normal(0.0, 1.0, size=shape + (2,)) * params.uncertainty_std
    out = locs.copy()
    out[..., 0] += speed * np.cos(heading) * params.slot_duration + jitter[..., 0]
    out[..., 1] += speed * np.sin(heading) * params.slot_duration + jitter[..., 1]
    out[..., 2] = 0.0
    return out


def step_mobility(loc, params, rng):
    if loc.z != 0:
        raise ValueError("user locations must lie on the ground plane (z = 0)")
    return Location3D.from_array(step_mobility_batch(loc.as_array(), params, rng))


def ap_irs_distance(loc_ap, loc_irs):
    return float(np.linalg.norm(_arr(loc_ap) - _arr(loc_irs)))


def irs_user_distance(loc_irs, loc_user):
    """Horizontal (x-y) distance between the IRS and a user; height is ignored."""
    a, b = _arr(loc_irs), _arr(loc_user)
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def irs_user_distance_batch(loc_irs, locs):
    locs = np.asarray(locs)
    return np.hypot(loc_irs[0] - locs[..., 0], loc_irs[1] - locs[..., 1])


def ap_irs_angles(loc_ap, loc_irs, d_ai):
    if d_ai <= 0:
        raise GeometryError("AP and IRS coincide")
    a, i = _arr(loc_ap), _arr(loc_irs)
    return AngleTriple(abs(i[2] - a[2]) / d_ai, abs(i[1]) / d_ai, abs(a[0]) / d_ai)


def irs_user_angles(loc_irs, loc_user, d_iu):
    a = irs_user_angles_batch(_arr(loc_irs), _arr(loc_user), np.asarray(d_iu, dtype=np.float64))
    return AngleTriple(float(a[0]), float(a[1]), float(a[2]))


def irs_user_angles_batch(loc_irs, locs, d_iu):
    """Angle triples for many users; returns an array of shape ``(3,) + d_iu.shape``.

    ``d_iu`` is whichever IRS-user distance the caller uses for the angle
    formulas (horizontal or slant range). Raises :class:`GeometryError` if
    any sin(theta) would exceed 1.
    """
    locs = np.asarray(locs)
    d_iu = np.asarray(d_iu, dtype=np.float64)
    if np.any(d_iu <= 0):
        raise GeometryError("user located at the IRS foot point (zero distance)")
    sin_theta = abs(loc_irs[2]) / d_iu
    if np.any(sin_theta > 1.0 + 1e-12):
        worst = float(np.max(sin_theta))
        raise GeometryError(f"sin(theta) = {worst:.4g} > 1: user too close to the IRS for the angle model")
    sin_theta = np.minimum(sin_theta, 1.0)
    cos_xi = np.abs(locs[..., 1] - loc_irs[1]) / d_iu
    sin_xi = np.abs(locs[..., 0]) / d_iu
    return np.stack([sin_theta, cos_xi, sin_xi])


def _arr(loc):
    return loc.as_array() if isinstance(loc, Location3D) else np.asarray(loc, dtype=np.float64)
