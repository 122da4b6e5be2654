"""Core quantities in recoil units.

Everything in this package is expressed in lattice recoil units:

    hbar = 1,  k_L = 1,  omega_rec = hbar * k_L**2 / (2 m) = 1,

which fixes the atomic mass to m = 1/2.  Momenta are quoted in units of
hbar*k_L, so a plane wave |p> carries kinetic energy p**2 (in omega_rec)
and the first diffraction orders |+-2 hbar k_L> sit at 4 omega_rec.
Times are in 1/omega_rec, accelerations in omega_rec**2 / k_L.

The lattice drive couples momentum classes through the factor

    C(t) = cos[(4 + Delta(t)) t] + epsilon,

where Delta(t) is the (fictitious) two-photon detuning relative to the
four-photon resonance and epsilon the polarization imbalance of the
retro-reflected beams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .exceptions import BoundViolation, OutOfZone

# Four-photon resonance of the +-2 hbar k_L doublet, in omega_rec.
RESONANCE = 4.0

# Default band for detuning protocols, in omega_rec.
DEFAULT_DETUNING_BOUND = 4.0


def carrier_factor(t, delta, epsilon=0.0):
    """Time-dependent drive factor C(t) = cos[(4 + Delta(t)) t] + epsilon."""
    return np.cos((RESONANCE + delta) * t) + epsilon


@dataclass(frozen=True)
class PulseEnvelope:
    """Two-photon Rabi frequency envelope Omega(t).

    Parameters
    ----------
    shape : {'gaussian', 'box'}
        gaussian: Omega_R * exp(-(t - t0)**2 / (2 tau**2)), truncated to
        the support window (default t0 +- 6 tau).
        box: Omega_R on [t0, t0 + tau], zero elsewhere.
    peak : float
        Peak Rabi frequency Omega_R [omega_rec].
    width : float
        tau [1/omega_rec].
    center : float
        t0 [1/omega_rec].  For the box shape this is the leading edge.
    support : (float, float), optional
        Override of the truncation window.
    """

    shape: str
    peak: float
    width: float
    center: float = 0.0
    support: tuple[float, float] | None = None

    def __post_init__(self):
        if self.shape not in ("gaussian", "box"):
            raise ValueError(f"unknown envelope shape {self.shape!r}")
        if self.peak < 0:
            raise ValueError("peak Rabi frequency must be non-negative")
        if self.width <= 0:
            raise ValueError("envelope width must be positive")
        if self.support is None:
            if self.shape == "gaussian":
                win = (self.center - 6 * self.width, self.center + 6 * self.width)
            else:
                win = (self.center, self.center + self.width)
            object.__setattr__(self, "support", win)
        elif self.support[1] <= self.support[0]:
            raise ValueError("support window must have positive duration")

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.support
        inside = (t >= lo) & (t <= hi)
        if self.shape == "gaussian":
            val = self.peak * np.exp(-((t - self.center) ** 2) / (2 * self.width**2))
        else:
            inside = inside & (t >= self.center) & (t <= self.center + self.width)
            val = np.full_like(t, self.peak)
        return np.where(inside, val, 0.0)

    def area(self):
        """Integral of Omega(t) over the full (untruncated) pulse."""
        if self.shape == "gaussian":
            return self.peak * self.width * math.sqrt(2 * math.pi)
        return self.peak * self.width

    def scaled(self, factor):
        """Same envelope with the peak multiplied by `factor`."""
        return PulseEnvelope(self.shape, self.peak * factor, self.width,
                             self.center, self.support)


@dataclass(frozen=True)
class ConstantDetuning:
    """Delta(t) = value."""

    value: float
    bound: float = DEFAULT_DETUNING_BOUND

    def __post_init__(self):
        if abs(self.value) > self.bound:
            raise BoundViolation(
                f"constant detuning {self.value} exceeds bound {self.bound}")

    def evaluate(self, t, check=True):
        t = np.asarray(t, dtype=float)
        return np.full_like(t, self.value)


@dataclass(frozen=True)
class LinearDetuning:
    """Linear sweep Delta(t) = (alpha / width) * (t - center) + beta.

    `center` and `width` reference the pulse the sweep belongs to; alpha
    is the dimensionless slope per pulse width and beta the value at the
    pulse center.
    """

    alpha: float
    beta: float
    width: float
    center: float = 0.0
    bound: float = DEFAULT_DETUNING_BOUND

    def evaluate(self, t, check=True):
        t = np.asarray(t, dtype=float)
        val = (self.alpha / self.width) * (t - self.center) + self.beta
        if check and np.any(np.abs(val) > self.bound + 1e-12):
            worst = float(np.max(np.abs(val)))
            raise BoundViolation(
                f"linear sweep reaches |Delta|={worst:.4g} > bound {self.bound}")
        return val


@dataclass(frozen=True)
class KnotDetuning:
    """Detuning through ordered (t, Delta) knots, natural cubic spline.

    Evaluation clamps the interpolant to [-bound, +bound], so spline
    overshoot between in-band knots never leaves the band.  Knot values
    themselves must be in-band.
    """

    times: tuple[float, ...]
    values: tuple[float, ...]
    bound: float = DEFAULT_DETUNING_BOUND
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        if len(times) != len(values):
            raise ValueError("knot times and values differ in length")
        if len(times) < 2:
            raise ValueError("need at least two knots")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("knot times must be strictly increasing")
        if any(abs(v) > self.bound for v in values):
            raise BoundViolation(
                f"knot values exceed |Delta| <= {self.bound}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        spline = CubicSpline(times, values, bc_type="natural")
        object.__setattr__(self, "_spline", spline)

    def evaluate(self, t, check=True):
        t = np.asarray(t, dtype=float)
        return np.clip(self._spline(t), -self.bound, self.bound)


# Any of the concrete protocol flavors above.
DetuningProtocol = ConstantDetuning | LinearDetuning | KnotDetuning


def fixed_rate_sweep(width, center=0.0, bound=DEFAULT_DETUNING_BOUND):
    """The fixed-rate sweep Delta(t) = (t - t0 + tau) / (2.5 tau).

    Zero at the leading 1-sigma point t0 - tau; alpha = beta = 0.4 in the
    linear-sweep parameterization.
    """
    return LinearDetuning(alpha=0.4, beta=0.4, width=width, center=center,
                          bound=bound)


def doppler_sweep_2024(width, center=0.0, bound=DEFAULT_DETUNING_BOUND):
    """Named preset Delta(t) = (t - t0 + 0.9 tau) / (5 tau)."""
    return LinearDetuning(alpha=0.2, beta=0.18, width=width, center=center,
                          bound=bound)


@dataclass(frozen=True)
class GaussianWavePacket:
    """Momentum-space Gaussian amplitude around p0 with width sigma_p.

    psi(p) = (2 pi sigma_p**2)**(-1/4) * exp(-(p - p0)**2 / (4 sigma_p**2)),
    normalized so that integral |psi|**2 dp = 1.  The packet must fit in
    the first zone: |p0| + 6 sigma_p < 1.
    """

    p0: float = 0.0
    sigma_p: float = 0.05

    def __post_init__(self):
        if self.sigma_p <= 0:
            raise ValueError("sigma_p must be positive")
        if abs(self.p0) + 6 * self.sigma_p >= 1.0:
            raise OutOfZone(
                f"|p0| + 6 sigma_p = {abs(self.p0) + 6 * self.sigma_p:.3f} "
                "reaches the zone edge at 1 hbar k_L")

    def amplitude(self, p):
        p = np.asarray(p, dtype=float)
        norm = (2 * math.pi * self.sigma_p**2) ** (-0.25)
        return norm * np.exp(-((p - self.p0) ** 2) / (4 * self.sigma_p**2))

    def density(self, p):
        amp = self.amplitude(p)
        return amp * amp

    def momentum_quadrature(self, n_nodes=64):
        """Gauss-Legendre nodes/weights for integrals against |psi|**2.

        Returns (p, w) on [p0 - 6 sigma_p, p0 + 6 sigma_p] with the
        density folded into the weights and renormalized to unit total,
        so sum(w * f(p)) approximates integral |psi(p)|**2 f(p) dp and
        sum(w) == 1 exactly despite the tail truncation.
        """
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        lo = self.p0 - 6 * self.sigma_p
        hi = self.p0 + 6 * self.sigma_p
        p = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        weights = 0.5 * (hi - lo) * w * self.density(p)
        return p, weights / weights.sum()


@dataclass(frozen=True)
class PolarizationError:
    """Residual polarization imbalance epsilon in [0, 1]."""

    epsilon: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")

    @classmethod
    def from_waveplate_angle(cls, theta):
        """epsilon = |cos(2 (pi/4 + theta))| for a waveplate offset theta."""
        return cls(abs(math.cos(2 * (math.pi / 4 + theta))))
