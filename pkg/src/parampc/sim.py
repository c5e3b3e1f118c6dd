"""Closed-loop simulation of the parametric plant and error metrics.

Controllers are callables ``controller(x, theta, ref_window, step) -> u``
that return the input to apply at the current step. The plant always uses
the exact ``A(theta_true)``; only the controllers approximate.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import qp as qpmod
from .condense import condense_exact, condense_model
from .frechet import (ControllerState, build_method2_constraints, build_parametric_cost,
                      method2_factor, neumann_norm, solve_method2)
from .mccormick import build_method1_qp, solve_method1
from .model import ParametricModel, eval_a
from .qp import QpError
from .tracking import TrackingWeights, condensed_qp

log = logging.getLogger(__name__)

METHODS = ("exact", "m1", "m2-inv", "m2-ni")


class SimulationError(RuntimeError):
    """A controller failed hard; ``trace`` holds the steps completed so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class ReferenceProfile:
    """Piecewise-constant output reference: ``(start_time, value)`` segments."""

    segments: tuple

    def __post_init__(self):
        segs = tuple((float(t), np.atleast_1d(np.asarray(v, dtype=float)))
                     for t, v in self.segments)
        if not segs:
            raise ValueError("reference needs at least one segment")
        if segs[0][0] != 0.0:
            raise ValueError("first reference segment must start at t=0")
        times = [t for t, _ in segs]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("segment start times must be strictly increasing")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def parse(cls, text: str) -> "ReferenceProfile":
        """From ``"t0:v0,t1:v1,..."`` (scalar outputs)."""
        segs = []
        for item in text.split(","):
            t, v = item.split(":")
            segs.append((float(t), float(v)))
        return cls(tuple(segs))

    def to_text(self) -> str:
        return ",".join(f"{t!r}:{float(v[0])!r}" for t, v in self.segments)

    def value_at(self, t: float) -> np.ndarray:
        val = self.segments[0][1]
        for start, v in self.segments:
            if t + 1e-9 >= start:
                val = v
            else:
                break
        return val

    def window(self, k: int, N: int, ts: float) -> np.ndarray:
        """Preview for the predicted outputs ``y_{k+1}..y_{k+N}``, shape (N, q)."""
        return np.vstack([self.value_at((k + i) * ts) for i in range(1, N + 1)])


@dataclass
class SimulationTrace:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    references: np.ndarray
    fallback_events: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    @property
    def input_variation(self) -> float:
        return total_variation(self.inputs)

    def header(self):
        n, m, q = self.states.shape[1], self.inputs.shape[1], self.outputs.shape[1]
        return (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
                + [f"y{i + 1}" for i in range(q)] + [f"r{i + 1}" for i in range(q)] + ["fallback"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.header())
        events = set(self.fallback_events)
        for k in range(len(self)):
            row = [self.times[k], *self.states[k], *self.inputs[k], *self.outputs[k],
                   *self.references[k]]
            wr.writerow([repr(float(v)) for v in row] + [int(k in events)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SimulationTrace":
        rows = list(csv.reader(io.StringIO(text)))
        head, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))

        def cols(prefix):
            idx = [i for i, h in enumerate(head) if h[0] == prefix and h[1:].isdigit()]
            return body[:, idx]

        fb = body[:, head.index("fallback")]
        return cls(body[:, 0], cols("x"), cols("u"), cols("y"), cols("r"),
                   [int(k) for k in np.flatnonzero(fb)])


@dataclass(frozen=True)
class ErrorMetrics:
    rmse: float
    maxae: float
    nrmse: float


def total_variation(inputs) -> float:
    inputs = np.asarray(inputs, dtype=float)
    if len(inputs) < 2:
        return 0.0
    return float(np.abs(np.diff(inputs, axis=0)).sum())


def compute_metrics(trace: SimulationTrace, baseline: SimulationTrace) -> ErrorMetrics:
    """RMSE, maximum absolute error and range-normalized RMSE of the outputs.

    NRMSE is NaN when the baseline output is flat.
    """
    if trace.outputs.shape != baseline.outputs.shape:
        raise ValueError(
            f"trace shapes differ: {trace.outputs.shape} vs {baseline.outputs.shape}")
    diff = trace.outputs - baseline.outputs
    rmse = float(np.sqrt(np.mean(diff ** 2)))
    maxae = float(np.abs(diff).max())
    span = float(baseline.outputs.max() - baseline.outputs.min())
    nrmse = rmse / span if span > 0.0 else float("nan")
    return ErrorMetrics(rmse, maxae, nrmse)


class Controller:
    """Base class: subclasses implement ``control``."""

    name = "controller"

    def __init__(self, model: ParametricModel, N: int, weights: TrackingWeights,
                 state_constraints: bool = False):
        self.model = model
        self.N = N
        self.weights = weights
        self.state_constraints = state_constraints

    @property
    def fallback_count(self) -> int:
        return 0

    def __call__(self, x, theta, ref_window, step=None):
        return self.control(np.asarray(x, dtype=float), float(theta), ref_window, step)


class ExactController(Controller):
    """Per-step condensed QP with the exact prediction matrices at ``theta``."""

    name = "exact"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._cache = {}

    def _prepared(self, theta):
        if theta not in self._cache:
            cs = condense_exact(eval_a(self.model, theta), self.model.b, self.model.e, self.N)
            lower, _ = qpmod.factor_hessian(
                condensed_qp(cs, self.weights, self.model, np.zeros(self.model.n),
                             np.zeros((self.N, self.model.q))).h)
            self._cache[theta] = (cs, qpmod.inverse_factor(lower))
        return self._cache[theta]

    def qp_at(self, x, theta, ref_window):
        cs, _ = self._prepared(theta)
        return condensed_qp(cs, self.weights, self.model, x, ref_window, self.state_constraints)

    def control(self, x, theta, ref_window, step=None):
        _, j = self._prepared(theta)
        prob = self.qp_at(x, theta, ref_window)
        sol = qpmod.solve_factored(j, prob.f, prob.g, prob.rhs)
        if not sol.ok:
            raise QpError(f"exact condensed QP {sol.status.value}", sol)
        return sol.z_opt[:self.model.m].copy()


class Method1Controller(Controller):
    """McCormick-relaxed lifted QP, solved online at ``(x, theta)``."""

    name = "m1"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.aqp = build_method1_qp(self.model, self.N, self.weights, self.state_constraints)

    def control(self, x, theta, ref_window, step=None):
        u0, _, _ = solve_method1(self.aqp, x, [theta] * self.model.n_theta, ref_window)
        return u0


class Method2Controller(Controller):
    """Frechet-expanded QP (``inv`` or ``ni`` variant) with fallback."""

    def __init__(self, model, N, weights, state_constraints=False, variant="inv", order=1):
        super().__init__(model, N, weights, state_constraints)
        self.variant = variant
        self.order = order
        self.name = f"m2-{variant}"
        cs = condense_model(model, N, sensitivities=True)
        self.cost = build_parametric_cost(cs, weights, order)
        self.constraints = build_method2_constraints(model, cs, weights.ref_lift.shape[1],
                                                     state_constraints)
        self.state = ControllerState()
        self._factors = {}

    @property
    def fallback_count(self) -> int:
        return self.state.fallback_count

    def expansion_norm(self, theta) -> float:
        return neumann_norm(self.cost.h0, self.cost.dh, theta)

    def control(self, x, theta, ref_window, step=None):
        if theta not in self._factors:
            self._factors[theta] = method2_factor(self.cost, theta, self.variant)
        # a None factor makes solve_method2 fall back (or raise on the first step)
        return solve_method2(self.cost, self.constraints, x, theta, self.state, self.variant,
                             d=self.model.disturbance, ref_window=ref_window,
                             factor=self._factors[theta], step=step)


def make_controller(method: str, model: ParametricModel, N: int, weights: TrackingWeights,
                    state_constraints: bool = False, order: int = 1) -> Controller:
    if method == "exact":
        return ExactController(model, N, weights, state_constraints)
    if method == "m1":
        return Method1Controller(model, N, weights, state_constraints)
    if method in ("m2-inv", "m2-ni"):
        return Method2Controller(model, N, weights, state_constraints,
                                 variant=method.split("-")[1], order=order)
    raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")


def _check_box(name, value, box):
    value = np.atleast_1d(value)
    if np.any(value < box[:, 0] - 1e-12) or np.any(value > box[:, 1] + 1e-12):
        raise ValueError(f"{name} {value.tolist()} outside its box {box.tolist()}")


def run_closed_loop(model: ParametricModel, controller, theta_true, x0,
                    ref: ReferenceProfile, T_steps: int) -> SimulationTrace:
    """Simulate ``T_steps`` steps; theta is constant over the run."""
    x = np.asarray(x0, dtype=float).reshape(model.n)
    theta = float(np.atleast_1d(theta_true)[0]) if model.n_theta == 1 else np.asarray(theta_true)
    _check_box("x0", x, model.state_box)
    _check_box("theta", np.atleast_1d(theta_true), model.theta_box)
    N = getattr(controller, "N", 1)
    times = np.arange(T_steps) * model.ts
    states = np.zeros((T_steps, model.n))
    inputs = np.zeros((T_steps, model.m))
    outputs = np.zeros((T_steps, model.q))
    refs = np.zeros((T_steps, model.q))
    events = []
    for k in range(T_steps):
        before = getattr(controller, "fallback_count", 0)
        try:
            u = np.asarray(controller(x, theta, ref.window(k, N, model.ts), k), dtype=float)
        except (QpError, np.linalg.LinAlgError) as exc:
            partial = SimulationTrace(times[:k], states[:k], inputs[:k], outputs[:k], refs[:k], events)
            raise SimulationError(f"controller failed at step {k}: {exc}", partial) from exc
        if getattr(controller, "fallback_count", 0) > before:
            events.append(k)
        states[k] = x
        inputs[k] = u
        outputs[k] = model.output(x, u)
        refs[k] = ref.value_at(times[k])
        x = model.step(x, u, theta)
    return SimulationTrace(times, states, inputs, outputs, refs, events)
