"""Maximally entangled spin states as weighted sign-pattern branches.

A branch is a joint measurement outcome (one ``+1``/``-1`` per particle) with
its Born weight. Relative phases between branches never reach the density or
the velocity field, so only the weights are kept.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

MERMIN_SETTINGS = ("xyy", "yxy", "yyx", "xxx")
MERMIN_EIGENVALUES = {"xyy": +1, "yxy": +1, "yyx": +1, "xxx": -1}

GHZ4_SETTINGS = ("xxxx", "yxyx", "yxxy", "xxyy")
GHZ4_EIGENVALUES = {"xxxx": -1, "yxyx": -1, "yxxy": -1, "xxyy": +1}

# local magnet angle (from the local reference axis) for the x / y measurements
LETTER_ANGLES = {"x": 0.0, "y": math.pi / 2}


@dataclass(frozen=True)
class MagnetAxis:
    """Magnet orientation in a particle's transverse plane, measured from its
    local Z reference."""

    angle: float = 0.0

    def __post_init__(self):
        angle = math.fmod(float(self.angle), TWO_PI) % TWO_PI
        object.__setattr__(self, "angle", 0.0 if angle >= TWO_PI else angle)


@dataclass(frozen=True)
class MeasurementConfig:
    """One magnet axis per particle.

    ``frames`` holds the orientation of each particle's local reference axis
    in a common lab frame; it only matters where the state depends on the
    relative angle between magnets (the singlet).
    """

    axes: tuple[MagnetAxis, ...]
    frames: tuple[float, ...] = ()

    def __post_init__(self):
        axes = tuple(a if isinstance(a, MagnetAxis) else MagnetAxis(a) for a in self.axes)
        object.__setattr__(self, "axes", axes)
        if not 2 <= len(axes) <= 4:
            raise ValueError(f"need 2 to 4 particles, got {len(axes)}")
        frames = tuple(self.frames) or (0.0,) * len(axes)
        if len(frames) != len(axes):
            raise ValueError("frames and axes must have the same length")
        object.__setattr__(self, "frames", frames)

    @property
    def n_particles(self) -> int:
        return len(self.axes)

    def lab_angles(self) -> tuple[float, ...]:
        return tuple(f + a.angle for f, a in zip(self.frames, self.axes))


@dataclass(frozen=True)
class BranchState:
    weights: tuple[float, ...]
    patterns: tuple[tuple[int, ...], ...]
    label: str = ""
    _arrays: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.patterns:
            raise ValueError("a state needs at least one branch")
        n = len(self.patterns[0])
        if len(self.weights) != len(self.patterns):
            raise ValueError("weights and patterns must have the same length")
        if any(len(p) != n for p in self.patterns):
            raise ValueError("all patterns must have the same length")
        if any(s not in (1, -1) for p in self.patterns for s in p):
            raise ValueError("pattern entries must be +1 or -1")
        if len(set(self.patterns)) != len(self.patterns):
            raise ValueError("patterns must be distinct")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be non-negative")
        if abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {math.fsum(self.weights)!r}, not 1")
        object.__setattr__(
            self,
            "_arrays",
            (np.asarray(self.weights, dtype=float), np.asarray(self.patterns, dtype=float)),
        )

    @property
    def n_particles(self) -> int:
        return len(self.patterns[0])

    @property
    def weight_array(self) -> np.ndarray:
        return self._arrays[0]

    @property
    def pattern_array(self) -> np.ndarray:
        return self._arrays[1]

    @classmethod
    def from_weights(cls, pairs, label: str = "") -> "BranchState":
        """Build from ``(weight, pattern)`` pairs, dropping zero-weight branches."""
        kept = [(float(w), tuple(int(s) for s in p)) for w, p in pairs if w > 0]
        return cls(tuple(w for w, _ in kept), tuple(p for _, p in kept), label)


def singlet_branches(theta: float) -> BranchState:
    """Singlet pair measured with magnets at relative angle ``theta``."""
    s2 = math.sin(theta / 2) ** 2
    c2 = math.cos(theta / 2) ** 2
    return BranchState.from_weights(
        [(s2 / 2, (1, 1)), (c2 / 2, (1, -1)), (c2 / 2, (-1, 1)), (s2 / 2, (-1, -1))],
        label=f"singlet(theta={theta!r})",
    )


def _equal_weight_state(n: int, eigenvalue: int, label: str) -> BranchState:
    patterns = [p for p in itertools.product((1, -1), repeat=n) if math.prod(p) == eigenvalue]
    w = 1.0 / len(patterns)
    return BranchState(tuple(w for _ in patterns), tuple(patterns), label)


def mermin_branches(setting: str) -> BranchState:
    """Three-particle state for one of the product observables ``xyy``, ``yxy``,
    ``yyx``, ``xxx``: equal weight on every pattern whose sign product is
    that observable's eigenvalue."""
    if setting not in MERMIN_EIGENVALUES:
        raise ValueError(f"unknown Mermin setting {setting!r}; expected one of {MERMIN_SETTINGS}")
    return _equal_weight_state(3, MERMIN_EIGENVALUES[setting], f"mermin({setting})")


def ghz4_branches(setting: str) -> BranchState:
    """Four-particle state for ``xxxx``, ``yxyx``, ``yxxy`` or ``xxyy``."""
    if setting not in GHZ4_EIGENVALUES:
        raise ValueError(f"unknown GHZ-4 setting {setting!r}; expected one of {GHZ4_SETTINGS}")
    return _equal_weight_state(4, GHZ4_EIGENVALUES[setting], f"ghz4({setting})")


def born_distribution(state: BranchState) -> dict[tuple[int, ...], float]:
    """Outcome probability for every sign pattern (absent branches get 0)."""
    dist = {p: 0.0 for p in itertools.product((1, -1), repeat=state.n_particles)}
    for w, p in zip(state.weights, state.patterns):
        dist[p] = w
    return dist


def correlation(dist: dict[tuple[int, ...], float]) -> float:
    return math.fsum(p * math.prod(pattern) for pattern, p in dist.items())


def axis_coordinate(y, z, axis: MagnetAxis | float, sense: int = 1):
    """Initial coordinate along a magnet axis rotated by ``axis.angle`` from Z.

    ``sense=-1`` rotates the other way round the beam. Works elementwise on
    arrays.
    """
    angle = axis.angle if isinstance(axis, MagnetAxis) else float(axis)
    if sense not in (1, -1):
        raise ValueError("sense must be +1 or -1")
    return z * math.cos(angle) + sense * y * math.sin(angle)


def setting_config(setting: str) -> MeasurementConfig:
    """Magnet axes for a Mermin / GHZ setting string such as ``"yxxy"``."""
    return MeasurementConfig(tuple(MagnetAxis(LETTER_ANGLES[c]) for c in setting))


def state_for(config: MeasurementConfig, setting: str | None = None) -> BranchState:
    """Entangled state seen by the magnets in ``config``.

    Two particles are the singlet at the lab-frame angle between the magnets;
    three and four particles need the product-observable ``setting``.
    """
    if config.n_particles == 2:
        lab = config.lab_angles()
        return singlet_branches(lab[1] - lab[0])
    if setting is None:
        raise ValueError("three- and four-particle states need a setting")
    if config.n_particles == 3:
        return mermin_branches(setting)
    return ghz4_branches(setting)


def permute(state: BranchState, order: Sequence[int]) -> BranchState:
    """Relabel particles: new particle ``j`` is old particle ``order[j]``."""
    patterns = tuple(tuple(p[i] for i in order) for p in state.patterns)
    return BranchState(state.weights, patterns, state.label)
