"""Run configuration and the experiment drivers behind the command line.

A :class:`RunConfig` is a flat JSON document. Fields left as ``None`` take
the case-study defaults when the config is resolved, so a dumped config
always carries explicit values and reloads to the same run.
"""
from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .cases import CASES, build_case
from .condense import condense_model
from .empc import PwaLaw, enumerate_regions
from .frechet import build_method2_constraints, build_parametric_cost, method2_mpqp
from .mccormick import build_method1_qp
from .model import ParametricModel
from .sim import (METHODS, ReferenceProfile, SimulationError, compute_metrics, make_controller,
                  run_closed_loop)
from .tracking import condensed_mpqp, tracking_weights

DEFAULT_SEED = 42
SEED_ENV = "PARAMPC_SEED"
REGION_METHODS = ("exact", "m1", "m2-ni")
METRICS_HEADER = ("case", "method", "theta", "rmse", "maxae", "nrmse", "regions", "tv_u")

# Reported reference RMSE per (case, method) at theta = 0.5 and theta = 1
REPORTED_RMSE = {
    ("msd", "m1"): (1.98e-4, 3.89e-5),
    ("msd", "m2-inv"): (5.13e-5, 6.06e-5),
    ("hex", "m1"): (4.43e-2, 2.08e-2),
    ("hex", "m2-inv"): (1.31e-1, 2.58e-1),
}
TABLE2_THETAS = (0.5, 1.0)
TABLE2_METHODS = ("m1", "m2-inv")
BRACKET_DECADES = 1.0


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    """Everything needed to reproduce a run.

    ``case`` is ``msd``, ``hex`` or the path of a JSON model document.
    ``methods`` and ``thetas`` are sweep lists; the bare method ``m2`` takes
    its variant from ``variant``.
    """

    case: str = "msd"
    methods: list = field(default_factory=lambda: ["exact"])
    thetas: list = field(default_factory=lambda: [0.5])
    horizon: int = None
    q_scale: float = None
    r_scale: float = None
    ts: float = None
    reference: str = None
    duration: float = None
    x0: list = None
    variant: str = "inv"
    order: int = 1
    state_constraints: bool = False
    output_dir: str = "out"
    seed: int = DEFAULT_SEED
    jobs: int = 1
    max_regions: int = 5000
    samples: int = 1000

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config", "expected a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown config field")
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON ({exc})") from None
        return cls.from_dict(doc)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def method_list(self) -> list:
        out = []
        for name in self.methods:
            name = f"m2-{self.variant}" if name == "m2" else name
            if name not in METHODS:
                raise ConfigError("method", f"unknown method {name!r}; expected one of "
                                  f"{', '.join(METHODS)} or m2")
            out.append(name)
        return out

    def validate(self) -> "RunConfig":
        if self.variant not in ("inv", "ni"):
            raise ConfigError("variant", f"expected 'inv' or 'ni', got {self.variant!r}")
        if self.order not in (1, 2):
            raise ConfigError("order", f"expected 1 or 2, got {self.order!r}")
        self.method_list()
        if not self.thetas:
            raise ConfigError("theta", "at least one value is required")
        for t in self.thetas:
            if not isinstance(t, (int, float)) or not 0.0 <= t <= 1.0:
                raise ConfigError("theta", f"value {t!r} outside [0, 1]")
        if self.horizon is not None and (not isinstance(self.horizon, int) or self.horizon < 1):
            raise ConfigError("horizon", f"must be an integer >= 1, got {self.horizon!r}")
        for name in ("q_scale", "r_scale", "ts", "duration"):
            val = getattr(self, name)
            if val is not None and not (isinstance(val, (int, float)) and val > 0):
                raise ConfigError(name, f"must be positive, got {val!r}")
        if not isinstance(self.jobs, int) or self.jobs < 1:
            raise ConfigError("jobs", f"must be an integer >= 1, got {self.jobs!r}")
        if not isinstance(self.seed, int):
            raise ConfigError("seed", f"must be an integer, got {self.seed!r}")
        if not isinstance(self.max_regions, int) or self.max_regions < 1:
            raise ConfigError("max_regions", "must be an integer >= 1")
        if not isinstance(self.samples, int) or self.samples < 1:
            raise ConfigError("samples", "must be an integer >= 1")
        if self.reference is not None:
            try:
                ReferenceProfile.parse(self.reference)
            except ValueError as exc:
                raise ConfigError("reference", str(exc)) from None
        return self

    def resolved(self) -> "RunConfig":
        """Copy with every case default filled in."""
        self.validate()
        model = load_model(self.case, self.ts)
        base = _case_defaults(self.case, model)
        doc = asdict(self)
        for key, val in base.items():
            if doc[key] is None:
                doc[key] = val
        doc["ts"] = model.ts
        out = RunConfig(**doc)
        if len(out.x0) != model.n:
            raise ConfigError("x0", f"expected {model.n} entries, got {len(out.x0)}")
        return out


def seed_from_env(default: int = DEFAULT_SEED) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(SEED_ENV, f"expected an integer, got {raw!r}") from None


def load_model(case: str, ts=None) -> ParametricModel:
    if case in CASES:
        return build_case(case, ts)
    if case.endswith(".json"):
        try:
            with open(case, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError("case", f"cannot read model file ({exc})") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("case", f"invalid model JSON ({exc})") from None
        try:
            if ts is not None:
                doc = dict(doc, ts=ts)
            return ParametricModel.from_dict(doc)
        except (ValueError, TypeError) as exc:
            raise ConfigError("case", f"invalid model document ({exc})") from None
    raise ConfigError("case", f"unknown case {case!r}; expected msd, hex or a .json model file")


def _case_defaults(case: str, model: ParametricModel) -> dict:
    if case in CASES:
        d = CASES[case]
        return {"horizon": d.horizon, "q_scale": d.q_scale, "r_scale": d.r_scale,
                "reference": d.reference.to_text(), "duration": d.duration,
                "x0": [float(v) for v in d.x0]}
    # custom model: hold the output at the box center from the box center
    x0 = model.state_box.mean(axis=1)
    y0 = model.c @ x0
    return {"horizon": 4, "q_scale": 1.0, "r_scale": 1e-2,
            "reference": f"0.0:{float(y0[0])!r}", "duration": 100 * model.ts,
            "x0": [float(v) for v in x0]}


@dataclass
class Setup:
    """Objects shared by all runs of one resolved config."""

    config: RunConfig
    model: ParametricModel
    weights: object
    reference: ReferenceProfile
    x0: np.ndarray
    steps: int

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "Setup":
        cfg = cfg.resolved()
        model = load_model(cfg.case, cfg.ts)
        weights = tracking_weights(model, cfg.horizon, cfg.q_scale, cfg.r_scale)
        ref = ReferenceProfile.parse(cfg.reference)
        if ref.segments[0][1].size != model.q:
            raise ConfigError("reference", "only single-output references are supported")
        steps = int(round(cfg.duration / model.ts))
        if steps < 1:
            raise ConfigError("duration", "shorter than one sampling period")
        return cls(cfg, model, weights, ref, np.asarray(cfg.x0, dtype=float), steps)

    def controller(self, method: str):
        return make_controller(method, self.model, self.config.horizon, self.weights,
                               self.config.state_constraints, order=self.config.order)

    def run(self, method: str, theta: float):
        ctrl = self.controller(method)
        try:
            trace = run_closed_loop(self.model, ctrl, theta, self.x0, self.reference, self.steps)
        except ValueError as exc:
            raise ConfigError("x0", str(exc)) from None
        return trace, ctrl

    def mpqp(self, method: str, theta: float):
        """Explicit mpQP data ``(h, f_map, f_off, g, b, e_mat, box)`` of ``method``.

        The reference preview is held at its initial value.
        """
        cfg, model, N = self.config, self.model, self.config.horizon
        ref = self.reference.window(0, N, model.ts)
        if method == "exact":
            cs = condense_model(model, N, theta=[theta] * model.n_theta)
            return condensed_mpqp(cs, self.weights, model, ref, cfg.state_constraints)
        if method == "m1":
            return build_method1_qp(model, N, self.weights, cfg.state_constraints).mpqp(ref)
        if method == "m2-ni":
            cs = condense_model(model, N, sensitivities=True)
            cost = build_parametric_cost(cs, self.weights, cfg.order)
            cons = build_method2_constraints(model, cs, self.weights.ref_lift.shape[1],
                                             cfg.state_constraints)
            return method2_mpqp(cost, cons, theta, model.state_box, model.disturbance, ref)
        raise ConfigError("method", f"{method!r} has no explicit mpQP form; use one of "
                          f"{', '.join(REGION_METHODS)}")

    def law(self, method: str, theta: float) -> PwaLaw:
        h, f_map, f_off, g, b, e_mat, box = self.mpqp(method, theta)
        return enumerate_regions(h, f_map, g, b, e_mat, box, f_off=f_off,
                                 max_regions=self.config.max_regions, seed=self.config.seed)


@dataclass
class RunResult:
    case: str
    method: str
    theta: float
    trace: object
    metrics: object
    regions: int = None
    fallback_count: int = 0

    def row(self) -> list:
        m = self.metrics
        return [self.case, self.method, repr(float(self.theta)), repr(m.rmse), repr(m.maxae),
                repr(m.nrmse), "" if self.regions is None else str(self.regions),
                repr(self.trace.input_variation)]


def case_label(cfg: RunConfig) -> str:
    return cfg.case if cfg.case in CASES else os.path.splitext(os.path.basename(cfg.case))[0]


def _run_theta(args):
    """Worker: exact baseline plus every requested method at one theta."""
    cfg, theta, with_regions = args
    setup = Setup.from_config(cfg)
    baseline, _ = setup.run("exact", theta)
    out = []
    for method in cfg.method_list():
        if method == "exact":
            trace, ctrl = baseline, None
        else:
            trace, ctrl = setup.run(method, theta)
        regions = None
        if with_regions and method in REGION_METHODS:
            regions = len(setup.law(method, theta))
        out.append(RunResult(case_label(cfg), method, theta, trace,
                             compute_metrics(trace, baseline), regions,
                             getattr(ctrl, "fallback_count", 0)))
    return out


def run_sweep(cfg: RunConfig, with_regions: bool = False) -> list:
    """All (theta, method) runs of ``cfg``, ordered by theta then method."""
    cfg = cfg.resolved()
    tasks = [(cfg, float(t), with_regions) for t in cfg.thetas]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(tasks))) as pool:
            chunks = list(pool.map(_run_theta, tasks))
    else:
        chunks = [_run_theta(t) for t in tasks]
    return [r for chunk in chunks for r in chunk]


def write_atomic(path: str, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def theta_tag(theta: float) -> str:
    return f"{theta:g}".replace(".", "p")


def trace_filename(result: RunResult) -> str:
    return f"trace_{result.case}_{result.method}_theta{theta_tag(result.theta)}.csv"


def metrics_csv(results) -> str:
    lines = [",".join(METRICS_HEADER)]
    lines += [",".join(r.row()) for r in results]
    return "\n".join(lines) + "\n"


def write_results(results, output_dir: str) -> list:
    paths = []
    for r in results:
        path = os.path.join(output_dir, trace_filename(r))
        write_atomic(path, r.trace.to_csv())
        paths.append(path)
    path = os.path.join(output_dir, "metrics.csv")
    write_atomic(path, metrics_csv(results))
    paths.append(path)
    return paths


def bracket(reported: float) -> tuple:
    """One decade either side of a reported value."""
    f = 10.0 ** BRACKET_DECADES
    return reported / f, reported * f


@dataclass
class Table2Row:
    case: str
    theta: float
    method: str
    rmse: float
    maxae: float
    nrmse: float
    tv_u: float
    regions: int
    reported: float
    low: float
    high: float

    @property
    def passed(self) -> bool:
        return self.low <= self.rmse <= self.high


@dataclass
class Table2:
    rows: list
    ordinal: list  # (case, theta, m1 rmse, m2 rmse, passed)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows) and all(o[-1] for o in self.ordinal)

    def format(self) -> str:
        head = (f"{'case':<5}{'theta':>6}  {'method':<8}{'RMSE':>11}{'MaxAE':>11}{'NRMSE':>11}"
                f"{'TV(u)':>11}{'regions':>9}{'ref RMSE':>11}  {'bracket':<21}{'ok':>4}")
        lines = [head, "-" * len(head)]
        for r in self.rows:
            regions = "-" if r.regions is None else str(r.regions)
            lines.append(
                f"{r.case:<5}{r.theta:>6g}  {r.method:<8}{r.rmse:>11.3e}{r.maxae:>11.3e}"
                f"{r.nrmse:>11.3e}{r.tv_u:>11.4g}{regions:>9}{r.reported:>11.3e}  "
                f"[{r.low:.2e}, {r.high:.2e}]{'PASS' if r.passed else 'FAIL':>6}")
        lines.append("")
        for case, theta, a, b, ok in self.ordinal:
            lines.append(f"ordinal {case} theta={theta:g}: m1 {a:.3e} < m2-inv {b:.3e}  "
                         f"{'PASS' if ok else 'FAIL'}")
        return "\n".join(lines) + "\n"


def table2(jobs: int = 1, with_regions: bool = True, seed: int = DEFAULT_SEED,
           cases=("msd", "hex")) -> Table2:
    """Both case studies, both methods, theta in {0.5, 1}, against the exact baseline."""
    results = []
    for case in cases:
        cfg = RunConfig(case=case, methods=list(TABLE2_METHODS), thetas=list(TABLE2_THETAS),
                        jobs=jobs, seed=seed)
        results += run_sweep(cfg, with_regions=with_regions)
    rows = []
    for r in results:
        reported = REPORTED_RMSE[(r.case, r.method)][TABLE2_THETAS.index(r.theta)]
        low, high = bracket(reported)
        rows.append(Table2Row(r.case, r.theta, r.method, r.metrics.rmse, r.metrics.maxae,
                              r.metrics.nrmse, r.trace.input_variation, r.regions, reported,
                              low, high))
    ordinal = []
    for case in cases:
        if case != "hex":
            continue
        for theta in TABLE2_THETAS:
            a = next(r.rmse for r in rows if (r.case, r.theta, r.method) == (case, theta, "m1"))
            b = next(r.rmse for r in rows
                     if (r.case, r.theta, r.method) == (case, theta, "m2-inv"))
            ordinal.append((case, theta, a, b, bool(a < b)))
    return Table2(rows, ordinal)


def long_format(traces: dict) -> str:
    """Traces keyed by run label as ``run,t,signal,value`` rows."""
    lines = ["run,t,signal,value"]
    for label, trace in traces.items():
        names = trace.header()[1:-1]
        data = np.hstack([trace.states, trace.inputs, trace.outputs, trace.references])
        for k, t in enumerate(trace.times):
            for j, name in enumerate(names):
                lines.append(f"{label},{float(t)!r},{name},{float(data[k, j])!r}")
            lines.append(f"{label},{float(t)!r},fallback,{int(k in trace.fallback_events)}")
    return "\n".join(lines) + "\n"


__all__ = [
    "ConfigError", "RunConfig", "Setup", "RunResult", "SimulationError", "run_sweep",
    "table2", "Table2", "write_results", "metrics_csv", "long_format", "seed_from_env",
    "load_model", "REPORTED_RMSE", "bracket",
]
