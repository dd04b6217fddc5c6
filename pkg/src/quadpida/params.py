"""Physical constants of the simulated quadcopter."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np


@dataclass(frozen=True)
class QuadParams:
    """Rigid-body and rotor constants of the desk-scale vehicle.

    ``b`` maps squared rotor speed to thrust and is only used to recover
    per-rotor speeds for the gyroscopic disturbance; it is not part of the
    published parameter set and is configurable.
    """

    m: float = 0.8        # mass, kg
    l: float = 0.2        # arm length, m
    g: float = 9.81       # gravitational acceleration, m/s^2
    c: float = 3.00e-5    # force-to-torque coefficient, kg m^2
    ixx: float = 2.28e-2  # body inertia about x, kg m^2
    iyy: float = 3.10e-2  # body inertia about y, kg m^2
    izz: float = 4.40e-2  # body inertia about z, kg m^2
    im: float = 8.30e-5   # rotor inertia, kg m^2
    b: float = 3.0e-5     # rotor thrust coefficient, N s^2/rad^2

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(
                    f"QuadParams.{f.name} must be strictly positive and finite, got {value!r}"
                )

    @property
    def fmax(self) -> float:
        """Per-rotor thrust ceiling: twice the hover weight."""
        return 2.0 * self.m * self.g

    @property
    def hover_thrust(self) -> float:
        """Total thrust that balances gravity at level attitude."""
        return self.m * self.g

    def as_array(self) -> np.ndarray:
        """Flat layout consumed by the simulation backends."""
        return np.array(
            [self.m, self.l, self.g, self.c, self.ixx, self.iyy, self.izz,
             self.im, self.b, self.fmax],
            dtype=np.float64,
        )
