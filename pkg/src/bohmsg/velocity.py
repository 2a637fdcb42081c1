"""Bohmian velocity fields along the magnet axes.

Inside the magnets every particle moves with

    v_i = k^2 t / (1 + k^2 t^2) * z_i  +  R_i * (2 alpha t - k^2 alpha t^3 / (1 + k^2 t^2))

where ``R_i`` is the signed average of the branch spins ``s_i`` with weights
``w_b * exp(beta t^2 / (1 + k^2 t^2) * sum_j s_j z_j / 2)``. The exponents
reach several hundred for millimetre offsets near the magnet exit, so the
weights are normalised in log space.

``numeric_velocity_oracle`` recomputes the same field from the packets
themselves (density and current by finite differences) at extended precision
and is used to certify the closed form.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import mpmath
import numpy as np

from .physics import DerivedConstants, PhysicalParams, derive_constants, spread_at
from .states import BranchState


class NodeProximityError(ArithmeticError):
    """The density cannot be divided by at the requested point."""


@dataclass(frozen=True)
class PhaseSpacePoint:
    coords: tuple[float, ...]
    t: float

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))
        if self.t < 0:
            raise ValueError(f"t={self.t!r} must be non-negative")


def _time_factors(t, dc: DerivedConstants):
    g = 1.0 + dc.k * dc.k * t * t
    diffusion = dc.k * dc.k * t / g
    exponent_rate = 0.5 * dc.beta * t * t / g
    drift = 2.0 * dc.alpha * t - dc.k * dc.k * dc.alpha * t**3 / g
    return diffusion, exponent_rate, drift


def _signed_sums(coords: np.ndarray, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``sum_j P[b, j] * coords[:, j]`` as an unevaluated pair ``hi + lo``.

    Each partial sum goes through an error-free two-sum, so ``hi + lo`` is the
    exact total up to a rounding in ``lo``. Shapes ``(B, N)``.
    """
    terms = P[:, :, None] * coords.T[None, :, :]  # (B, n, N), exact for +-1 signs
    hi = terms[:, 0].copy()
    lo = np.zeros_like(hi)
    for j in range(1, terms.shape[1]):
        b = terms[:, j]
        total = hi + b
        bv = total - hi
        lo += (hi - (total - bv)) + (b - bv)
        hi = total
    return hi, lo


def _sign_groups(state: BranchState) -> list[tuple[np.ndarray, np.ndarray]]:
    P = state.pattern_array
    return [(np.flatnonzero(P[:, i] > 0), np.flatnonzero(P[:, i] < 0)) for i in range(P.shape[1])]


def _group_lse(logits: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """log-sum-exp over the rows ``idx``; a single row comes back unchanged."""
    if idx.size == 0:
        return np.full(logits.shape[1], -np.inf)
    g = logits[idx]
    top = g.max(axis=0)
    # below -700 a branch weighs < 1e-304 of the group top; clipping avoids subnormals
    return top + np.log(np.exp(np.maximum(g - top, -700.0)).sum(axis=0))


def branch_ratios(state: BranchState, coords: np.ndarray, t, dc: DerivedConstants) -> np.ndarray:
    """``R_i`` for a batch of configurations.

    ``coords`` has shape ``(N, n)`` and ``t`` is a scalar or shape ``(N,)``.
    """
    _, rate, _ = _time_factors(np.asarray(t, dtype=float), dc)
    P = state.pattern_array
    logw = np.log(state.weight_array)[:, None]
    # Logits are formed relative to the leading branch from the exact signed
    # sums before scaling by the rate. Branches tied in exact arithmetic then
    # stay tied; rounding at the raw logit scale (hundreds) would swamp the
    # small diffusion velocity next to such ties. All operations are
    # elementwise, so a row's result does not depend on the batch it is in.
    hi, lo = _signed_sums(coords, P)
    rate = np.broadcast_to(rate, (coords.shape[0],))
    lead = np.argmax(logw + rate * hi, axis=0)
    cols = np.arange(coords.shape[0])
    offset = (hi - hi[lead, cols]) + (lo - lo[lead, cols])
    logits = (logw - logw[lead, 0]) + rate * offset
    # R_i = (S+ - S-) / (S+ + S-) with S+- the weight of branches where
    # particle i is up / down, evaluated as tanh of half the log ratio so
    # that near-balanced sums keep their relative accuracy
    out = np.empty((P.shape[1], coords.shape[0]))
    for i, (up, down) in enumerate(_sign_groups(state)):
        with np.errstate(invalid="ignore"):
            out[i] = np.tanh(0.5 * (_group_lse(logits, up) - _group_lse(logits, down)))
    return out.T


def velocity_batch(state: BranchState, coords: np.ndarray, t, dc: DerivedConstants) -> np.ndarray:
    """Magnet-axis velocities for ``N`` configurations at once, shape ``(N, n)``."""
    coords = np.asarray(coords, dtype=float)
    t = np.asarray(t, dtype=float)
    R = branch_ratios(state, coords, t, dc)
    if np.any(np.abs(R) > 1.0 + 1e-12):
        raise FloatingPointError("branch ratio left [-1, 1]")
    diffusion, _, drift = _time_factors(t, dc)
    return np.reshape(diffusion, (-1, 1)) * coords + R * np.reshape(drift, (-1, 1))


def branch_velocity(state: BranchState, p: PhaseSpacePoint, dc: DerivedConstants) -> np.ndarray:
    """Velocity of each particle along its magnet axis at one configuration."""
    if len(p.coords) != state.n_particles:
        raise ValueError(
            f"state has {state.n_particles} particles but the point has {len(p.coords)} coordinates"
        )
    return velocity_batch(state, np.asarray([p.coords]), p.t, dc)[0]


def transverse_velocity(u, t, dc: DerivedConstants, v_drift: float = 0.0):
    """Field-free velocity across (``v_drift = 0``) or along (``v_drift = v0``) the beam."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    g = 1.0 + dc.k * dc.k * t * t
    return v_drift + dc.k * dc.k * t / g * (u - v_drift * t)


def transverse_position(u0, t, dc: DerivedConstants, v_drift: float = 0.0):
    """Closed-form solution of :func:`transverse_velocity` from ``u0`` at ``t = 0``."""
    return v_drift * t + u0 * np.sqrt(1.0 + (dc.k * t) ** 2)


# -- finite-difference oracle ------------------------------------------------

ORACLE_DPS = 40
FD_STEP = 1e-6  # central-difference step in units of the current packet width


@functools.lru_cache(maxsize=65536)
def _mp_log_packet(params: PhysicalParams, z: float, t: float, spin: int, dps: int):
    """log of the in-magnet packet in mpmath, mirroring ``physics.log_packet_z``."""
    with mpmath.workdps(dps):
        mpf = mpmath.mpf
        m, hbar, mu = mpf(params.mass), mpf(params.hbar), mpf(params.mu)
        a0, a1, d0 = mpf(params.a0), mpf(params.a1), mpf(params.delta_r0)
        z, t = mpf(z), mpf(t)
        k = hbar / (2 * m * d0**2)
        alpha = a1 * mu / (2 * m)
        width = d0**2 * mpmath.mpc(1, k * t)
        shift = z - spin * alpha * t**2
        norm = -mpmath.log(mpmath.sqrt(2 * mpmath.pi) * d0 * mpmath.mpc(1, k * t)) / 2
        phase = spin * mu * t * (a0 + a1 * z) / hbar - mu**2 * a1**2 * t**3 / (6 * m * hbar)
        return norm - shift**2 / (4 * width) + mpmath.mpc(0, 1) * phase


def numeric_velocity_oracle(
    state: BranchState,
    params: PhysicalParams,
    p: PhaseSpacePoint,
    dps: int = ORACLE_DPS,
) -> np.ndarray:
    """``J / rho`` along each magnet axis from the full multi-particle packet.

    Each branch amplitude is ``sqrt(w_b) * prod_i psi_{s_bi}(z_i, t)``. The
    density is ``sum_b |amp_b|^2`` and the current on particle ``i`` is
    ``(hbar/m) sum_b Im(conj(amp_b) d_i amp_b)``, with ``d_i`` a central
    difference of step ``FD_STEP * spread_at(t)``. Differences are taken on
    the complex log-amplitude, where the packets are quadratic in ``z``, and
    everything runs at ``dps`` decimal digits so that the large spin-independent
    phases cancel cleanly.
    """
    n = state.n_particles
    if len(p.coords) != n:
        raise ValueError(f"state has {n} particles but the point has {len(p.coords)} coordinates")
    if not 0.0 <= p.t <= params.tau:
        raise ValueError(f"t={p.t!r} outside the magnet interval")
    h = FD_STEP * spread_at(params, p.t)
    with mpmath.workdps(dps):
        log_amp = {}
        grad = {}
        for i, z in enumerate(p.coords):
            for spin in (1, -1):
                log_amp[i, spin] = _mp_log_packet(params, z, p.t, spin, dps)
                up = _mp_log_packet(params, z + h, p.t, spin, dps)
                down = _mp_log_packet(params, z - h, p.t, spin, dps)
                step = mpmath.mpf(z + h) - mpmath.mpf(z - h)
                grad[i, spin] = (up - down) / step
        log_rho = [
            mpmath.log(w) + 2 * mpmath.fsum(log_amp[i, s].real for i, s in enumerate(pattern))
            for w, pattern in zip(state.weights, state.patterns)
        ]
        top = max(log_rho)
        if not mpmath.isfinite(top):
            raise NodeProximityError(f"density at {p.coords} is not representable")
        weights = [mpmath.exp(lr - top) for lr in log_rho]
        total = mpmath.fsum(weights)
        out = np.empty(n)
        for i in range(n):
            current = mpmath.fsum(
                wb * grad[i, pattern[i]].imag for wb, pattern in zip(weights, state.patterns)
            )
            out[i] = float(params.hbar / mpmath.mpf(params.mass) * current / total)
    return out


def max_relative_deviation(
    state: BranchState,
    params: PhysicalParams,
    points: Sequence[PhaseSpacePoint],
    floor: float = 1e-9,
) -> float:
    """Largest ``|closed - oracle| / |oracle|`` over ``points``.

    ``floor`` (cm/s) bounds the denominator away from zero at points where a
    velocity vanishes by symmetry, e.g. the origin of an odd-sized grid.
    """
    dc = derive_constants(params)
    worst = 0.0
    for p in points:
        ref = numeric_velocity_oracle(state, params, p)
        got = branch_velocity(state, p, dc)
        worst = max(worst, float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), floor))))
    return worst


def oracle_grid(params: PhysicalParams, n_particles: int, t: float, per_axis: int = 10,
                half_width: float = 3.0) -> list[PhaseSpacePoint]:
    """Tensor grid of ``per_axis`` points per particle within ``+-half_width`` packet widths."""
    axis = np.linspace(-half_width, half_width, per_axis) * spread_at(params, t)
    mesh = np.stack(np.meshgrid(*([axis] * n_particles), indexing="ij"), axis=-1)
    return [PhaseSpacePoint(tuple(c), t) for c in mesh.reshape(-1, n_particles)]
