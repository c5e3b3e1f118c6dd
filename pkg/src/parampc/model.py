"""Affinely parameter-dependent discrete-time linear models.

A model has dynamics ``x+ = A(theta) x + B u + E d`` with
``A(theta) = base + sum_p theta_p * deltas[p]`` and output ``y = C x + D u``.
The two case-study builders (heat exchanger and mass-spring-damper) live
here as well, with their physical constants as defaults.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _frozen(a, ndim=2):
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _boxes(intervals, name):
    arr = np.array(intervals, dtype=float).reshape(-1, 2)
    if np.any(arr[:, 0] > arr[:, 1]):
        raise ValueError(f"{name}: every interval needs lower <= upper")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ParametricMatrix:
    """``base + sum_p theta_p * deltas[p]``."""

    base: np.ndarray
    deltas: tuple

    def __post_init__(self):
        base = _frozen(self.base)
        deltas = tuple(_frozen(d) for d in self.deltas)
        if len(deltas) < 1:
            raise ValueError("at least one parameter direction is required")
        for d in deltas:
            if d.shape != base.shape:
                raise ValueError(
                    f"delta shape {d.shape} does not match base shape {base.shape}")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "deltas", deltas)

    @property
    def n_theta(self) -> int:
        return len(self.deltas)

    @property
    def shape(self):
        return self.base.shape

    def __call__(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.n_theta,):
            raise ValueError(
                f"theta has {theta.size} components, expected {self.n_theta}")
        out = self.base.copy()
        for t, d in zip(theta, self.deltas):
            out += t * d
        return out

    def scaled(self, factor: float, shift=None) -> "ParametricMatrix":
        """``shift + factor * self`` (shift added to the base only)."""
        base = factor * self.base
        if shift is not None:
            base = base + shift
        return ParametricMatrix(base, tuple(factor * d for d in self.deltas))


@dataclass(frozen=True)
class ParametricModel:
    """Discrete-time model with an affinely parameterized state matrix.

    Boxes are arrays of shape (k, 2) holding ``[lower, upper]`` per component.
    ``disturbance`` is the constant value of the exogenous input ``d`` (empty
    when ``e`` has no columns).
    """

    a: ParametricMatrix
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray
    ts: float
    theta_box: np.ndarray
    state_box: np.ndarray
    input_box: np.ndarray
    disturbance: np.ndarray = field(default_factory=lambda: np.zeros(0))
    name: str = "custom"

    def __post_init__(self):
        n = self.a.shape[0]
        if self.a.shape != (n, n):
            raise ValueError("state matrix must be square")
        b = _frozen(self.b)
        c = _frozen(self.c)
        e = _frozen(np.reshape(self.e, (n, -1)) if np.size(self.e) else np.zeros((n, 0)))
        d = _frozen(np.reshape(self.d, (c.shape[0], b.shape[1])) if np.size(self.d)
                    else np.zeros((c.shape[0], b.shape[1])))
        if b.shape[0] != n:
            raise ValueError(f"B has {b.shape[0]} rows, expected {n}")
        if c.shape[1] != n:
            raise ValueError(f"C has {c.shape[1]} columns, expected {n}")
        if not self.ts > 0:
            raise ValueError("sampling time must be positive")
        dist = _frozen(np.atleast_1d(self.disturbance) if np.size(self.disturbance)
                       else np.zeros(e.shape[1]), ndim=1)
        if dist.shape != (e.shape[1],):
            raise ValueError(
                f"disturbance has {dist.size} entries, E has {e.shape[1]} columns")
        theta_box = _boxes(self.theta_box, "theta_box")
        state_box = _boxes(self.state_box, "state_box")
        input_box = _boxes(self.input_box, "input_box")
        if theta_box.shape[0] != self.a.n_theta:
            raise ValueError("theta_box needs one interval per parameter")
        if state_box.shape[0] != n:
            raise ValueError("state_box needs one interval per state")
        if input_box.shape[0] != b.shape[1]:
            raise ValueError("input_box needs one interval per input")
        for name, val in [("b", b), ("c", c), ("d", d), ("e", e),
                          ("disturbance", dist), ("theta_box", theta_box),
                          ("state_box", state_box), ("input_box", input_box)]:
            object.__setattr__(self, name, val)
        object.__setattr__(self, "ts", float(self.ts))

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def q(self) -> int:
        return self.c.shape[0]

    @property
    def r(self) -> int:
        return self.e.shape[1]

    @property
    def n_theta(self) -> int:
        return self.a.n_theta

    def step(self, x, u, theta):
        """One step of the true plant at ``theta``."""
        x_next = eval_a(self, theta) @ x + self.b @ u
        if self.r:
            x_next = x_next + self.e @ self.disturbance
        return x_next

    def output(self, x, u):
        return self.c @ x + self.d @ u

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "a": {"base": self.a.base.tolist(),
                  "deltas": [d.tolist() for d in self.a.deltas]},
            "b": self.b.tolist(),
            "c": self.c.tolist(),
            "d": self.d.tolist(),
            "e": self.e.tolist(),
            "ts": self.ts,
            "theta_box": self.theta_box.tolist(),
            "state_box": self.state_box.tolist(),
            "input_box": self.input_box.tolist(),
            "disturbance": self.disturbance.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ParametricModel":
        try:
            a = ParametricMatrix(np.array(doc["a"]["base"], dtype=float),
                                 tuple(np.array(d, dtype=float) for d in doc["a"]["deltas"]))
            n = a.shape[0]
            b = np.array(doc["b"], dtype=float).reshape(n, -1)
            c = np.array(doc["c"], dtype=float).reshape(-1, n)
            return cls(
                a=a,
                b=b,
                c=c,
                d=np.array(doc.get("d", np.zeros((c.shape[0], b.shape[1]))), dtype=float),
                e=np.array(doc.get("e", np.zeros((n, 0))), dtype=float),
                ts=float(doc["ts"]),
                theta_box=doc.get("theta_box", [[0.0, 1.0]] * a.n_theta),
                state_box=doc["state_box"],
                input_box=doc["input_box"],
                disturbance=np.array(doc.get("disturbance", []), dtype=float),
                name=doc.get("name", "custom"),
            )
        except KeyError as exc:
            raise ValueError(f"model document is missing field {exc}") from None


def eval_a(model, theta) -> np.ndarray:
    """State matrix at ``theta``. Accepts a model or a ParametricMatrix.

    No box check: the affine formula is valid for any theta.
    """
    pm = model.a if isinstance(model, ParametricModel) else model
    return pm(theta)


def decompose_from_endpoints(a_at_min, a_at_max) -> ParametricMatrix:
    """Single-parameter decomposition on theta in [0, 1]."""
    lo = np.asarray(a_at_min, dtype=float)
    hi = np.asarray(a_at_max, dtype=float)
    if lo.ndim != 2 or lo.shape[0] != lo.shape[1] or lo.shape != hi.shape:
        raise ValueError(
            f"endpoint matrices must be square and equal-sized, got {lo.shape} and {hi.shape}")
    return ParametricMatrix(lo, (hi - lo,))


def discretize_euler(a_c: ParametricMatrix, b_c, e_c, ts: float):
    """Forward-Euler discretization: ``(I + ts*A_c(theta), ts*B_c, ts*E_c)``."""
    if not ts > 0:
        raise ValueError("sampling time must be positive")
    n = a_c.shape[0]
    b_c = np.asarray(b_c, dtype=float).reshape(n, -1)
    e_c = np.asarray(e_c, dtype=float).reshape(n, -1) if np.size(e_c) else np.zeros((n, 0))
    return a_c.scaled(ts, shift=np.eye(n)), ts * b_c, ts * e_c


@dataclass(frozen=True)
class HexParams:
    """Counter-flow heat exchanger constants (SI-consistent, litres)."""

    volume: float = 1000.0
    heat_capacity: float = 1.0
    flow_hot: float = 2.5
    flow_cold: float = 2.0
    transfer_coeff: float = 1.0
    area_min: float = 2.0
    area_max: float = 5.0
    t_hot_bounds: tuple = (45.0, 70.0)
    t_cold_bounds: tuple = (25.0, 45.0)
    t_hot_in_bounds: tuple = (60.0, 80.0)
    t_cold_in: float = 25.0
    ts: float = 10.0

    def __post_init__(self):
        if not self.area_min < self.area_max:
            raise ValueError("area_min must be below area_max")
        for name in ("volume", "heat_capacity", "flow_hot", "flow_cold",
                     "transfer_coeff", "area_min", "ts"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def alpha(self, theta: float) -> float:
        area = self.area_min + theta * (self.area_max - self.area_min)
        return self.transfer_coeff * area / (self.heat_capacity * self.volume)


def _hex_continuous(p: HexParams, alpha: float) -> np.ndarray:
    return np.array([
        [-p.flow_hot / p.volume - alpha, alpha],
        [alpha, -p.flow_cold / p.volume - alpha],
    ])


def build_hex(p: HexParams = HexParams()) -> ParametricModel:
    """Heat exchanger: state [T_h, T_c], input T_h_in, disturbance T_c_in.

    Tracked output is the cold-side outlet temperature.
    """
    a_c = decompose_from_endpoints(_hex_continuous(p, p.alpha(0.0)),
                                   _hex_continuous(p, p.alpha(1.0)))
    b_c = np.array([[p.flow_hot / p.volume], [0.0]])
    e_c = np.array([[0.0], [p.flow_cold / p.volume]])
    a, b, e = discretize_euler(a_c, b_c, e_c, p.ts)
    return ParametricModel(
        a=a, b=b,
        c=np.array([[0.0, 1.0]]),
        d=np.zeros((1, 1)),
        e=e,
        ts=p.ts,
        theta_box=[[0.0, 1.0]],
        state_box=[p.t_hot_bounds, p.t_cold_bounds],
        input_box=[p.t_hot_in_bounds],
        disturbance=[p.t_cold_in],
        name="hex",
    )


@dataclass(frozen=True)
class MsdParams:
    """Mass-spring-damper with the spring stiffness as design parameter."""

    mass: float = 2.0
    damping: float = 3.109
    k_min: float = 500.0
    k_max: float = 2000.0
    input_gain: float = 3.717
    z_bounds: tuple = (-0.1, 0.1)
    zdot_bounds: tuple = (-0.5, 0.5)
    u_bounds: tuple = (-5.0, 5.0)
    ts: float = 0.01

    def __post_init__(self):
        if not self.k_min < self.k_max:
            raise ValueError("k_min must be below k_max")
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not self.ts > 0:
            raise ValueError("ts must be positive")

    def stiffness(self, theta: float) -> float:
        return self.k_min + theta * (self.k_max - self.k_min)


def build_msd(p: MsdParams = MsdParams()) -> ParametricModel:
    """Mass-spring-damper: state [z, dz/dt], input voltage, output z."""
    base = np.array([
        [1.0, p.ts],
        [-p.k_min / p.mass * p.ts, 1.0 - p.damping / p.mass * p.ts],
    ])
    delta = np.zeros((2, 2))
    delta[1, 0] = -(p.k_max - p.k_min) / p.mass * p.ts
    return ParametricModel(
        a=ParametricMatrix(base, (delta,)),
        b=np.array([[0.0], [p.ts * p.input_gain / p.mass]]),
        c=np.array([[1.0, 0.0]]),
        d=np.zeros((1, 1)),
        e=np.zeros((2, 0)),
        ts=p.ts,
        theta_box=[[0.0, 1.0]],
        state_box=[p.z_bounds, p.zdot_bounds],
        input_box=[p.u_bounds],
        name="msd",
    )
