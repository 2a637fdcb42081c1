"""Trajectory integration through the magnets and outcome classification.

Only the magnet-axis coordinate of each particle is integrated; the other two
coordinates follow closed-form free spreading. The integrator is an adaptive
Dormand-Prince 5(4) pair vectorised over a batch of independent trajectories:
every row keeps its own time and step size, so a trajectory's result does not
depend on which other trajectories share its batch.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .physics import PhysicalParams, derive_constants
from .states import BranchState
from .velocity import velocity_batch


class StiffnessError(RuntimeError):
    """The step size underflowed; carries the last accepted point."""

    def __init__(self, message: str, t: float, coords):
        super().__init__(message)
        self.t = t
        self.coords = tuple(coords)


@dataclass(frozen=True)
class StepControl:
    rtol: float = 1e-8
    atol_scale: float = 1e-12  # absolute tolerance in units of delta_r0
    max_step_fraction: float = 1.0 / 200  # of tau
    min_step: float = 1e-15  # s
    n_out: int = 201  # uniformly spaced output times, both ends included

    def __post_init__(self):
        if self.rtol <= 0 or self.atol_scale <= 0:
            raise ValueError("tolerances must be positive")
        if self.n_out < 2:
            raise ValueError("need at least the initial and final output times")

    def halved(self) -> "StepControl":
        return StepControl(self.rtol / 2, self.atol_scale / 2, self.max_step_fraction,
                           self.min_step, self.n_out)


@dataclass(frozen=True)
class Trajectory:
    """Path sampled at uniformly spaced times from 0 to tau."""

    t: np.ndarray
    coords: np.ndarray  # shape (len(t), n_particles)
    params: PhysicalParams
    params_hash: str

    @property
    def samples(self) -> list[tuple[float, tuple[float, ...]]]:
        return [(float(t), tuple(float(c) for c in row)) for t, row in zip(self.t, self.coords)]

    @property
    def final(self) -> np.ndarray:
        return self.coords[-1]


@dataclass(frozen=True)
class Outcome:
    signs: tuple[int, ...]
    ambiguous: bool = False
    diagnostic: str = ""

    @property
    def product(self) -> int:
        return math.prod(self.signs)


@dataclass
class BatchResult:
    """Output of :func:`integrate_batch`.

    ``final`` holds the coordinates at tau (last accepted point for rows that
    failed); ``path`` is filled only when requested.
    """

    t: np.ndarray
    final: np.ndarray
    failed: np.ndarray
    failed_t: np.ndarray
    path: np.ndarray | None = None
    n_steps: np.ndarray = field(default=None)


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array(_A[6] + [0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

_SAFETY, _MIN_FACTOR, _MAX_FACTOR = 0.9, 0.2, 5.0


def _rms(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(x * x, axis=1))


def integrate_batch(
    state: BranchState,
    initial,
    params: PhysicalParams,
    step_ctrl: StepControl = StepControl(),
    keep_path: bool = False,
) -> BatchResult:
    """Integrate ``N`` trajectories of the same state from ``t = 0`` to ``tau``.

    ``initial`` has shape ``(N, n_particles)``. Rows whose step size drops
    below ``step_ctrl.min_step`` are stopped and flagged in ``failed``.
    """
    y = np.array(initial, dtype=float, ndmin=2)
    if y.shape[1] != state.n_particles:
        raise ValueError(f"expected {state.n_particles} coordinates per row, got {y.shape[1]}")
    if params.tau <= 0:
        raise ValueError("tau must be positive")
    if not np.all(np.isfinite(y)):
        raise ValueError("initial coordinates must be finite")
    dc = derive_constants(params)
    N, n = y.shape
    tau = params.tau
    grid = tau * np.arange(step_ctrl.n_out) / (step_ctrl.n_out - 1)
    grid[-1] = tau
    atol = step_ctrl.atol_scale * params.delta_r0
    rtol = step_ctrl.rtol
    max_step = step_ctrl.max_step_fraction * tau

    def f(tt, yy):
        return velocity_batch(state, yy, tt, dc)

    t = np.zeros(N)
    nxt = np.ones(N, dtype=int)  # index of the next output time
    path = None
    if keep_path:
        path = np.empty((N, step_ctrl.n_out, n))
        path[:, 0] = y
    failed = np.zeros(N, dtype=bool)
    n_steps = np.zeros(N, dtype=int)

    # starting step (Hairer, Norsett & Wanner, II.4)
    k1 = f(t, y)
    scale = atol + rtol * np.abs(y)
    d0, d1 = _rms(y / scale), _rms(k1 / scale)
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6 * tau, 0.01 * d0 / np.maximum(d1, 1e-300))
    h0 = np.minimum(h0, max_step)
    k_probe = f(t + h0, y + h0[:, None] * k1)
    d2 = _rms((k_probe - k1) / scale) / h0
    big = np.maximum(d1, d2)
    h1 = np.where(big <= 1e-15, np.maximum(1e-6 * tau, h0 * 1e-3), (0.01 / np.maximum(big, 1e-300)) ** 0.2)
    h = np.minimum(np.minimum(100 * h0, h1), max_step)

    active = np.arange(N)
    while active.size:
        ta, ya, ha, ka = t[active], y[active], h[active], k1[active]
        target = grid[nxt[active]]
        remaining = target - ta
        land = ha >= remaining * (1 - 1e-3)
        ha = np.where(land, remaining, ha)
        if np.any(ha < step_ctrl.min_step):
            bad = active[ha < step_ctrl.min_step]
            failed[bad] = True
            keep = ha >= step_ctrl.min_step
            active = active[keep]
            if not active.size:
                break
            ta, ya, ha, ka, target, land = ta[keep], ya[keep], ha[keep], ka[keep], target[keep], land[keep]

        hh = ha[:, None]
        ks = [ka]
        for i in range(1, 7):
            dy = sum(a * k for a, k in zip(_A[i], ks) if a != 0.0)
            ks.append(f(ta + _C[i] * ha, ya + hh * dy))
        y_new = ya + hh * sum(b * k for b, k in zip(_B, ks) if b != 0.0)
        err = hh * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
        scale = atol + rtol * np.maximum(np.abs(ya), np.abs(y_new))
        norm = _rms(err / scale)
        ok = norm <= 1.0
        with np.errstate(divide="ignore"):
            factor = _SAFETY * np.where(norm > 0, norm, 1e-300) ** -0.2
        factor = np.clip(factor, _MIN_FACTOR, np.where(ok, _MAX_FACTOR, 1.0))

        acc = active[ok]
        t_new = np.where(land, target, ta + ha)
        t[acc] = t_new[ok]
        y[acc] = y_new[ok]
        k1[acc] = ks[6][ok]
        n_steps[acc] += 1
        h[active] = np.minimum(ha * factor, max_step)

        landed = acc[land[ok]]
        if keep_path and landed.size:
            path[landed, nxt[landed]] = y[landed]
        nxt[landed] += 1
        active = active[nxt[active] < step_ctrl.n_out]

    return BatchResult(t=grid, final=y, failed=failed, failed_t=np.where(failed, t, tau),
                       path=path, n_steps=n_steps)


def params_digest(state: BranchState, params: PhysicalParams, initial, step_ctrl: StepControl) -> str:
    blob = json.dumps(
        {
            "params": params.as_dict(),
            "weights": list(state.weights),
            "patterns": [list(p) for p in state.patterns],
            "initial": [float(x) for x in initial],
            "step_ctrl": [step_ctrl.rtol, step_ctrl.atol_scale, step_ctrl.max_step_fraction,
                          step_ctrl.min_step, step_ctrl.n_out],
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def integrate(
    state: BranchState,
    initial,
    params: PhysicalParams,
    step_ctrl: StepControl = StepControl(),
) -> Trajectory:
    """Integrate a single trajectory from its magnet-axis coordinates at ``t = 0``."""
    initial = np.asarray(initial, dtype=float)
    res = integrate_batch(state, initial[None, :], params, step_ctrl, keep_path=True)
    if res.failed[0]:
        t_last = float(res.failed_t[0])
        raise StiffnessError(
            f"step size fell below {step_ctrl.min_step:g} s at t={t_last!r}",
            t_last,
            res.final[0],
        )
    return Trajectory(res.t, res.path[0], params, params_digest(state, params, initial, step_ctrl))


def classification_threshold(params: PhysicalParams) -> float:
    """Final |z| below which an outcome is withheld: 0.1% of the basin centre."""
    return 1e-3 * derive_constants(params).alpha * params.tau**2


def classify_final(final: np.ndarray, params: PhysicalParams) -> tuple[np.ndarray, np.ndarray]:
    """Signs and ambiguity flags for an ``(N, n)`` array of coordinates at tau."""
    final = np.asarray(final, dtype=float)
    eps = classification_threshold(params)
    signs = np.where(final > 0, 1, -1)
    ambiguous = np.any(np.abs(final) < eps, axis=1)
    return signs, ambiguous


def classify(traj: Trajectory) -> Outcome:
    if not math.isclose(float(traj.t[-1]), traj.params.tau, rel_tol=1e-12):
        raise ValueError("trajectory does not reach tau")
    signs, ambiguous = classify_final(traj.final[None, :], traj.params)
    return Outcome(tuple(int(s) for s in signs[0]), bool(ambiguous[0]))
