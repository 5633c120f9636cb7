"""Bulk Richardson number between profile levels and stability classes."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

G0 = 9.80665  # standard gravity, m/s^2

TURBULENT_BELOW = 0.25
STABLE_ABOVE = 1.0


@dataclass(frozen=True)
class ProfileLevel:
    z: float
    theta: float
    u: float
    v: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"potential temperature must be positive, got {self.theta}")


class StabilityClass(str, enum.Enum):
    TURBULENCE_PRONE = "turbulence-prone"
    TRANSITIONAL = "transitional"
    STABLE = "stable"


def compute_ri(lower: ProfileLevel, upper: ProfileLevel, g: float = G0) -> float:
    """Ri = (g / theta_mean) * dtheta/dz / (du/dz**2 + dv/dz**2) over one layer.

    Returns ``math.inf`` when the layer has no shear at all.
    """
    dz = upper.z - lower.z
    if not dz > 0:
        raise ValueError(f"upper level must be above lower level (dz={dz})")
    theta_mean = 0.5 * (lower.theta + upper.theta)
    dtheta = (upper.theta - lower.theta) / dz
    du = (upper.u - lower.u) / dz
    dv = (upper.v - lower.v) / dz
    shear2 = du * du + dv * dv
    if shear2 == 0:
        return math.inf
    return (g / theta_mean) * dtheta / shear2


def ri_from_gradients(theta_mean: float, dtheta_dz: float, du_dz: float, dv_dz: float,
                      g: float = G0) -> float:
    """Same quantity as :func:`compute_ri` from already-known gradients."""
    shear2 = du_dz * du_dz + dv_dz * dv_dz
    if shear2 == 0:
        return math.inf
    return (g / theta_mean) * dtheta_dz / shear2


def classify(ri: float) -> StabilityClass:
    if math.isinf(ri) or ri > STABLE_ABOVE:
        return StabilityClass.STABLE
    if ri < TURBULENT_BELOW:
        return StabilityClass.TURBULENCE_PRONE
    return StabilityClass.TRANSITIONAL


def profile_ri(profile: Sequence[ProfileLevel], g: float = G0) -> list[tuple[float, float]]:
    """One (mid-height, Ri) pair per adjacent level pair."""
    if len(profile) < 2:
        raise ValueError("a profile needs at least two levels")
    for a, b in zip(profile, profile[1:]):
        if not b.z > a.z:
            raise ValueError("profile heights must be strictly increasing")
    return [(0.5 * (a.z + b.z), compute_ri(a, b, g)) for a, b in zip(profile, profile[1:])]
