"""Reference systems with known extremal norms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .matnum import expm
from .model import SwitchedSystem

__all__ = [
    "example1",
    "example2",
    "v_beta",
    "supgap_system",
    "supgap_B",
    "supgap_tangency",
    "SupgapCurve",
    "supgap_curve",
    "sample_pair",
]


def example1():
    """Two rotations with damping in complementary coordinates; rho = 0."""
    A1 = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
    A2 = np.array([[0.0, 0.0, 1.0], [0.0, -1.0, 0.0], [-1.0, 0.0, 0.0]])
    return SwitchedSystem(3, (A1, A2))


def example2(alpha=2.0):
    """Coordinate decays plus a damped rotation; max(|x1|, |x2|) is extremal for alpha >= 1."""
    A1 = np.diag([-1.0, 0.0])
    A2 = np.diag([0.0, -1.0])
    A3 = np.array([[-alpha, 1.0], [-1.0, -alpha]])
    return SwitchedSystem(2, (A1, A2, A3))


def v_beta(x, beta):
    x = np.asarray(x, dtype=float)
    return np.maximum(np.abs(x[..., 0]), beta * np.abs(x[..., 1]))


def supgap_B(alpha):
    return np.array([[-alpha, 3.0], [-0.6, 0.7]])


def supgap_system(alpha=None):
    if alpha is None:
        alpha = supgap_tangency().alpha
    A = np.array([[0.0, 0.0], [0.0, -1.0]])
    return SwitchedSystem(2, (A, supgap_B(alpha)))


def _first_x1_max(alpha):
    """Time and value of the first local max of x1 along e^{tB}(-1, 0)."""
    B = supgap_B(alpha)
    x0 = np.array([-1.0, 0.0])
    rate = lambda t: float((B @ (expm(B, t) @ x0))[0])
    ts = np.linspace(1e-3, 10.0, 1001)
    prev = rate(ts[0])
    for a, b in zip(ts[:-1], ts[1:]):
        cur = rate(b)
        if prev > 0 >= cur:
            t = brentq(rate, a, b, xtol=1e-15, rtol=1e-15)
            return t, float((expm(B, t) @ x0)[0])
        prev = cur
    raise ValueError("no local maximum of x1 found")


@dataclass(frozen=True)
class Tangency:
    alpha: float
    time: float
    point: np.ndarray


def supgap_tangency(bracket=(0.5, 1.5)):
    """alpha at which the B-arc from (-1, 0) touches the line x1 = 1 tangentially."""
    alpha = brentq(lambda a: _first_x1_max(a)[1] - 1.0, *bracket, xtol=1e-15, rtol=1e-15)
    t, _ = _first_x1_max(alpha)
    p = expm(supgap_B(alpha), t) @ np.array([-1.0, 0.0])
    return Tangency(float(alpha), float(t), p)


@dataclass(frozen=True)
class SupgapCurve:
    alpha: float
    b_arc: np.ndarray
    a_segment: np.ndarray

    @property
    def points(self):
        half = np.vstack([self.b_arc, self.a_segment])
        return np.vstack([half, -half])


def supgap_curve(samples=200):
    """Closed curve glued from a B-arc, a vertical A-segment and their antipodes."""
    tan = supgap_tangency()
    B = supgap_B(tan.alpha)
    ts = np.linspace(0.0, tan.time, samples)
    arc = np.array([expm(B, t) @ np.array([-1.0, 0.0]) for t in ts])
    ys = np.linspace(tan.point[1], 0.0, samples)
    seg = np.column_stack([np.ones(samples), ys])
    return SupgapCurve(tan.alpha, arc, seg)


def sample_pair():
    """A rank-one pair found by random search; its extremal cycle is a single attracting four-bang orbit.

    The instance is untuned: shift it by its exponent before cycle work.
    """
    A = np.array([[0.1737, 0.8821, -0.4847],
                  [-1.3639, 0.7486, 0.0989],
                  [0.6837, -1.3816, 0.1816]])
    b = np.array([-0.6255, 0.8066, -0.5807])
    c = np.array([-0.6074, -0.5857, 1.2637])
    return SwitchedSystem.from_pair(A, b, c)
