"""Experiment parameters and analytic Stern-Gerlach wavepackets.

All quantities are CGS. The magnet field is ``B_z = a0 + a1 * z`` inside the
magnet, which acts for ``0 <= t <= tau``; the spin-up (down) packet is pushed
towards positive (negative) ``z`` while spreading like a free Gaussian.
"""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, fields

SQRT_2PI = math.sqrt(2.0 * math.pi)


class InvalidParameterError(ValueError):
    """A physical parameter is out of its allowed range.

    ``field`` names the offending parameter so callers can report it.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class PhysicalParams:
    """Beam and magnet parameters (defaults: silver atoms)."""

    mass: float = 1.80e-22  # g
    mu: float = 9.27e-21  # g cm^2 s^-2 G^-1
    a0: float = 0.0  # G
    a1: float = 1.0e4  # G / cm
    delta_r0: float = 1.0e-3  # cm
    v0: float = 1.0e4  # cm / s
    tau: float = 1.0e-3  # s
    hbar: float = 1.05e-27  # erg s
    magnet_length: float = 10.0  # cm

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise InvalidParameterError(f.name, f"expected a number, got {value!r}")
            if not math.isfinite(value):
                raise InvalidParameterError(f.name, "must be finite")
        for name in ("mass", "delta_r0", "hbar"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(name, "must be strictly positive")
        for name in ("a1", "v0", "tau", "magnet_length"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(name, "must be non-negative")
        if self.v0 > 0 and self.magnet_length > 0:
            flight = self.magnet_length / self.v0
            if not math.isclose(flight, self.tau, rel_tol=1e-9):
                warnings.warn(
                    f"tau={self.tau!r} s differs from magnet_length/v0={flight!r} s",
                    stacklevel=3,
                )

    def replace(self, **changes) -> "PhysicalParams":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return PhysicalParams(**values)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class DerivedConstants:
    """Diffusion rate ``k`` [1/s], half acceleration ``alpha`` [cm/s^2] and
    ``beta = 2 alpha / delta_r0^2`` [1/(cm s^2)]."""

    k: float
    alpha: float
    beta: float


@dataclass(frozen=True)
class PacketValue:
    amplitude: complex
    center: float
    spread: float


def derive_constants(params: PhysicalParams) -> DerivedConstants:
    if params.mass <= 0:
        raise InvalidParameterError("mass", "must be strictly positive")
    if params.delta_r0 <= 0:
        raise InvalidParameterError("delta_r0", "must be strictly positive")
    m, d2 = params.mass, params.delta_r0**2
    return DerivedConstants(
        k=params.hbar / (2.0 * m * d2),
        alpha=params.a1 * params.mu / (2.0 * m),
        beta=params.a1 * params.mu / (m * d2),
    )


def spread_at(params: PhysicalParams, t: float) -> float:
    """Width of a packet after spreading for a time ``t``."""
    kt = derive_constants(params).k * t
    return params.delta_r0 * math.sqrt(1.0 + kt * kt)


def _check_spin(spin: int) -> None:
    if spin not in (1, -1):
        raise ValueError(f"spin must be +1 or -1, got {spin!r}")


def log_packet_z(params: PhysicalParams, z: float, t: float, spin: int) -> complex:
    """Complex logarithm of the in-magnet packet along the field axis.

    Written with the complex width ``delta_r0**2 * (1 + i k t)``; its real and
    imaginary parts reproduce the usual modulus/phase form (Gaussian of width
    ``spread_at(t)``, chirp, ``-arctan(k t)/2`` Gouy phase), plus the linear
    Zeeman phase ``spin * mu * t * (a0 + a1 z) / hbar`` and the cubic
    ``-mu^2 a1^2 t^3 / (6 m hbar)`` phase. The prefactor is
    ``(sqrt(2 pi) * spread)**-0.5`` so that ``|psi|^2`` integrates to one.
    Working in logs keeps far-tail values representable.
    """
    _check_spin(spin)
    dc = derive_constants(params)
    width = params.delta_r0**2 * complex(1.0, dc.k * t)
    shift = z - spin * dc.alpha * t * t
    zeeman = spin * params.mu * t * (params.a0 + params.a1 * z) / params.hbar
    cubic = params.mu**2 * params.a1**2 * t**3 / (6.0 * params.mass * params.hbar)
    norm = -0.5 * cmath.log(SQRT_2PI * params.delta_r0 * complex(1.0, dc.k * t))
    return norm - shift * shift / (4.0 * width) + 1j * (zeeman - cubic)


def packet_z(params: PhysicalParams, z: float, t: float, spin: int) -> PacketValue:
    """In-magnet packet for spin ``+1``/``-1`` along the magnet axis, ``0 <= t <= tau``."""
    if not 0.0 <= t <= params.tau:
        raise ValueError(f"t={t!r} outside the magnet interval [0, {params.tau!r}]")
    dc = derive_constants(params)
    return PacketValue(
        amplitude=cmath.exp(log_packet_z(params, z, t, spin)),
        center=spin * dc.alpha * t * t,
        spread=spread_at(params, t),
    )


def log_packet_free(params: PhysicalParams, u: float, t: float, v_drift: float) -> complex:
    dc = derive_constants(params)
    width = params.delta_r0**2 * complex(1.0, dc.k * t)
    k0 = params.mass * v_drift / params.hbar
    shift = u - v_drift * t
    norm = -0.5 * cmath.log(SQRT_2PI * params.delta_r0 * complex(1.0, dc.k * t))
    plane = k0 * u - params.hbar * k0 * k0 * t / (2.0 * params.mass)
    return norm - shift * shift / (4.0 * width) + 1j * plane


def packet_free(params: PhysicalParams, u: float, t: float, v_drift: float) -> PacketValue:
    """Field-free Gaussian factor: ``v_drift = v0`` along the beam, ``0`` across it."""
    if t < 0:
        raise ValueError(f"t={t!r} must be non-negative")
    return PacketValue(
        amplitude=cmath.exp(log_packet_free(params, u, t, v_drift)),
        center=v_drift * t,
        spread=spread_at(params, t),
    )


def exit_speed(params: PhysicalParams) -> float:
    return 2.0 * derive_constants(params).alpha * params.tau


def post_magnet_center(params: PhysicalParams, spin: int, t: float) -> float:
    """Center of the spin branch after the magnet, moving at its exit speed."""
    _check_spin(spin)
    if t < params.tau:
        raise ValueError(f"t={t!r} is still inside the magnet (tau={params.tau!r})")
    alpha = derive_constants(params).alpha
    tau = params.tau
    return spin * (alpha * tau * tau + 2.0 * alpha * tau * (t - tau))


def screen_pattern(params: PhysicalParams, distance: float = 100.0) -> dict:
    """Spot separation and spot width on a screen ``distance`` cm past the magnet."""
    t = params.tau + distance / params.v0
    up = post_magnet_center(params, +1, t)
    down = post_magnet_center(params, -1, t)
    return {
        "distance": distance,
        "time": t,
        "separation": up - down,
        "spot_size": spread_at(params, t),
        "exit_speed": exit_speed(params),
        "exit_center": post_magnet_center(params, +1, params.tau),
    }
