"""Batch experiments: identity suites and solver-versus-reference convergence studies.

A study is described by one JSON document (see :func:`load_config`) and run by
:func:`run`, which solves on every grid of the refinement list, compares each
solution with an independent reference, and writes ``<prefix>_report.json``
and ``<prefix>_data.csv``.

The CSV holds only deterministic quantities, so an unchanged config yields a
byte-identical file whatever the thread count; wall-clock times are kept in
the JSON report.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from convact import __version__
from convact.action import BarProblem, SdofProblem
from convact.convolution import (
    conv_commutativity_residual,
    conv_ibp_residual,
    conv_ibp_second_residual,
    convolve,
    titchmarsh_probe,
)
from convact.errors import ConfigError, SingularSystemError
from convact.fractional import HalfOperatorScheme, HalfScheme, half_energy_identity, half_ibp_residual
from convact.signals import (
    Constant,
    SineMode,
    Sinusoid,
    SpaceTimeGrid,
    Tabulated,
    TimeGrid,
    Zero,
    sample,
)
from convact.solver import (
    DEFAULT_MAX_FREE_NODES,
    certify_stationarity,
    classical_system,
    convolved_system,
    initial_traction_residual_bar,
    natural_condition_sdof,
    neumann_residual_bar,
    reference_bar_modal,
    reference_bar_timestep,
    reference_sdof,
    solve_bar,
    solve_sdof,
)

logger = logging.getLogger(__name__)


class ExperimentKind(enum.Enum):
    IDENTITIES = "identities"
    SDOF = "sdof"
    SDOF_DAMPED = "sdof_damped"
    BAR = "bar"
    BAR_VISCOELASTIC = "bar_viscoelastic"
    CLASSICAL_CONTRAST = "classical_contrast"


class ExperimentFailure(RuntimeError):
    """A solve or reference computation failed part-way through a study."""


STANDARD_METRICS = ("residual_sup", "oracle_error_sup", "natural_condition_error")

DEFAULT_GRIDS: dict[ExperimentKind, tuple[tuple[int, ...], ...]] = {
    ExperimentKind.IDENTITIES: ((128,), (256,), (512,)),
    ExperimentKind.SDOF: ((64,), (128,), (256,)),
    ExperimentKind.SDOF_DAMPED: ((128,), (256,), (512,)),
    ExperimentKind.BAR: ((8, 16), (16, 32), (24, 48)),
    ExperimentKind.BAR_VISCOELASTIC: ((8, 24), (16, 48), (32, 96)),
    ExperimentKind.CLASSICAL_CONTRAST: ((16,), (32,), (64,)),
}

# named problem presets; explicit fields in the config override them
PROBLEM_PRESETS: dict[str, dict[str, Any]] = {
    "cos": {"m": 1.0, "c": 0.0, "k": 1.0, "u0": 1.0, "v0": 0.0},
    "free_particle": {"m": 1.0, "c": 0.0, "k": 0.0, "u0": 0.0, "v0": 1.0},
    "critically_damped": {"m": 1.0, "c": 2.0, "k": 1.0, "u0": 1.0, "v0": 0.0},
    "standing_wave": {"rho": 1.0, "E": 1.0, "gamma": 0.0, "l": 1.0, "u0": {"preset": "sine_mode", "mode": 1}},
    "viscoelastic_wave": {
        "rho": 1.0, "E": 1.0, "gamma": 0.05, "l": 1.0, "u0": {"preset": "sine_mode", "mode": 1},
    },
}

DEFAULT_PRESET = {
    ExperimentKind.SDOF: "cos",
    ExperimentKind.SDOF_DAMPED: "critically_damped",
    ExperimentKind.BAR: "standing_wave",
    ExperimentKind.BAR_VISCOELASTIC: "viscoelastic_wave",
    ExperimentKind.CLASSICAL_CONTRAST: "cos",
}

_SDOF_FIELDS = {"m", "c", "k", "f", "u0", "v0", "f0"}
_BAR_FIELDS = {"rho", "E", "gamma", "l", "f", "u0", "v0", "u_hat", "p", "f_hat0", "p_hat0"}
_TOP_FIELDS = {"kind", "name", "problem", "grids", "t_final", "output", "seed", "max_free_nodes"}


# -- configuration ---------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """One refinement study.

    Attributes
    ----------
    kind : ExperimentKind
        Which pipeline to run.
    grids : tuple of tuple of int
        ``(n,)`` for time-only studies, ``(nx, nt)`` for the bar; strictly
        increasing in node count.
    problem : mapping
        Problem parameters after preset expansion (JSON-compatible values).
    t_final : float
        Length of the time interval.
    output : str
        File prefix for the artifacts.
    name : str
        Label used in the ``experiment`` column of the CSV.
    seed : int
        Reserved for stochastic presets; recorded in the report.
    max_free_nodes : int
        Dense-solve guard for the bar.
    """

    kind: ExperimentKind
    grids: tuple[tuple[int, ...], ...]
    problem: Mapping[str, Any] = field(default_factory=dict)
    t_final: float = 1.0
    output: str = ""
    name: str = ""
    seed: int = 0
    max_free_nodes: int = DEFAULT_MAX_FREE_NODES

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        object.__setattr__(self, "grids", tuple(tuple(int(v) for v in g) for g in self.grids))
        if not self.output:
            object.__setattr__(self, "output", self.kind.value)
        if not self.name:
            object.__setattr__(self, "name", self.output)
        object.__setattr__(self, "problem", _expand_problem(self.kind, dict(self.problem), ""))
        _validate_grids(self.kind, self.grids, lambda msg: ConfigError(f"field 'grids': {msg}"))
        if not self.t_final > 0:
            raise ConfigError(f"field 't_final': must be positive, got {self.t_final}")
        if self.max_free_nodes < 1:
            raise ConfigError(f"field 'max_free_nodes': must be positive, got {self.max_free_nodes}")

    @property
    def is_bar(self) -> bool:
        return self.kind in (ExperimentKind.BAR, ExperimentKind.BAR_VISCOELASTIC)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "name": self.name,
            "problem": dict(self.problem),
            "grids": [list(g) for g in self.grids],
            "t_final": self.t_final,
            "output": self.output,
            "seed": self.seed,
            "max_free_nodes": self.max_free_nodes,
        }


def _validate_grids(kind: ExperimentKind, grids, error: Callable[[str], Exception]) -> None:
    if not grids:
        raise error("grid list must be nonempty")
    width = 2 if kind in (ExperimentKind.BAR, ExperimentKind.BAR_VISCOELASTIC) else 1
    prev = 0
    for i, g in enumerate(grids):
        if len(g) != width:
            shape = "[nx, nt]" if width == 2 else "n"
            raise error(f"entry {i} must be {shape}, got {list(g)}")
        if min(g) < 2:
            raise error(f"entry {i} has fewer than 2 intervals: {list(g)}")
        nodes = math.prod(v + 1 for v in g)
        if nodes <= prev:
            raise error(f"entry {i} ({list(g)}) does not increase the resolution")
        prev = nodes


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


def _fail(text: str, key: str, message: str) -> ConfigError:
    line = _line_of(text, key) if text else None
    where = f"line {line}: " if line is not None else ""
    return ConfigError(f"{where}field '{key}': {message}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment description.

    Errors carry the offending field name and, when it can be located, the
    line number in ``text``.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("line 1: the config must be a JSON object")
    unknown = sorted(set(raw) - _TOP_FIELDS)
    if unknown:
        raise _fail(text, unknown[0], f"unknown field (allowed: {', '.join(sorted(_TOP_FIELDS))})")
    if "kind" not in raw:
        raise ConfigError("field 'kind': required")
    try:
        kind = ExperimentKind(raw["kind"])
    except ValueError:
        choices = ", ".join(k.value for k in ExperimentKind)
        raise _fail(text, "kind", f"unknown kind {raw['kind']!r} (expected one of {choices})") from None

    grids_raw = raw.get("grids", None)
    if grids_raw is None:
        grids = DEFAULT_GRIDS[kind]
    else:
        if not isinstance(grids_raw, list):
            raise _fail(text, "grids", "must be a list")
        grids = []
        for i, g in enumerate(grids_raw):
            entry = g if isinstance(g, list) else [g]
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in entry):
                raise _fail(text, "grids", f"entry {i} must hold integers, got {g!r}")
            grids.append(tuple(entry))
    _validate_grids(kind, grids, lambda msg: _fail(text, "grids", msg))

    t_final = _number(raw.get("t_final", 1.0), text, "t_final")
    if t_final <= 0:
        raise _fail(text, "t_final", f"must be positive, got {t_final}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise _fail(text, "seed", f"must be an integer, got {seed!r}")
    cap = raw.get("max_free_nodes", DEFAULT_MAX_FREE_NODES)
    if not isinstance(cap, int) or isinstance(cap, bool) or cap < 1:
        raise _fail(text, "max_free_nodes", f"must be a positive integer, got {cap!r}")
    for key in ("output", "name"):
        if key in raw and not isinstance(raw[key], str):
            raise _fail(text, key, "must be a string")

    problem = _expand_problem(kind, raw.get("problem", {}), text)
    config = ExperimentConfig(
        kind=kind,
        grids=tuple(grids),
        problem=problem,
        t_final=t_final,
        output=raw.get("output", ""),
        name=raw.get("name", ""),
        seed=seed,
        max_free_nodes=cap,
    )
    # build once so that bad parameters surface now, not halfway through a run
    try:
        build_problem(config, _first_grid(config))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise _fail(text, "problem", str(exc)) from None
    return config


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    """Read and validate a JSON experiment description from ``path``."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _number(value, text: str, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(text, key, f"must be a number, got {value!r}")
    return float(value)


def _expand_problem(kind: ExperimentKind, raw, text: str) -> dict[str, Any]:
    if kind is ExperimentKind.IDENTITIES:
        if raw:
            raise _fail(text, "problem", "the identity suite takes no problem parameters")
        return {}
    if not isinstance(raw, dict):
        raise _fail(text, "problem", "must be an object")
    raw = dict(raw)
    preset = raw.pop("preset", DEFAULT_PRESET[kind])
    if preset not in PROBLEM_PRESETS:
        raise _fail(text, "preset", f"unknown problem preset {preset!r} (known: {', '.join(PROBLEM_PRESETS)})")
    allowed = _BAR_FIELDS if kind in (ExperimentKind.BAR, ExperimentKind.BAR_VISCOELASTIC) else _SDOF_FIELDS
    base = dict(PROBLEM_PRESETS[preset])
    if not set(base) <= allowed:
        raise _fail(text, "preset", f"preset {preset!r} does not describe a {kind.value} problem")
    for key in raw:
        if key not in allowed:
            raise _fail(text, key, f"not a parameter of a {kind.value} problem (allowed: {', '.join(sorted(allowed))})")
    base.update(raw)
    scalars = ("rho", "E", "gamma", "l", "p_hat0") if allowed is _BAR_FIELDS else ("m", "c", "k", "u0", "v0", "f0")
    for key in scalars:
        if key in base:
            _number(base[key], text, key)

    c = base.get("c", 0.0)
    gamma = base.get("gamma", 0.0)
    if kind in (ExperimentKind.SDOF, ExperimentKind.CLASSICAL_CONTRAST) and c != 0:
        raise _fail(text, "c", f"a {kind.value} study is conservative; use sdof_damped for c > 0")
    if kind is ExperimentKind.SDOF_DAMPED and not c > 0:
        raise _fail(text, "c", "sdof_damped needs c > 0")
    if kind is ExperimentKind.BAR and gamma != 0:
        raise _fail(text, "gamma", "a bar study is elastic; use bar_viscoelastic for gamma > 0")
    if kind is ExperimentKind.BAR_VISCOELASTIC and not gamma > 0:
        raise _fail(text, "gamma", "bar_viscoelastic needs gamma > 0")
    base["preset"] = preset
    return base


# -- data presets ---------------------------------------------------------------------


def _time_function(spec, span: float, key: str):
    """Turn a JSON forcing description into a callable of time (or space)."""
    if spec is None:
        return None
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return Constant(float(spec)) if spec else Zero()
    if isinstance(spec, list):
        return Tabulated(tuple(spec), span)
    if not isinstance(spec, dict):
        raise ConfigError(f"field '{key}': expected a number, a list of samples or a preset object")
    spec = dict(spec)
    if "samples" in spec:
        return Tabulated(tuple(spec.pop("samples")), span)
    name = spec.pop("preset", None)
    builders = {
        "zero": lambda: Zero(),
        "constant": lambda: Constant(float(spec["value"])),
        "sinusoid": lambda: Sinusoid(
            float(spec["amplitude"]), float(spec["frequency"]), float(spec.get("phase", 0.0))
        ),
        "sine_mode": lambda: SineMode(
            int(spec.get("mode", 1)), float(spec.get("length", span)), float(spec.get("amplitude", 1.0))
        ),
    }
    if name is None:
        raise ConfigError(f"field '{key}': preset object needs 'preset' or 'samples'")
    if name not in builders:
        raise ConfigError(f"field '{key}': unknown preset {name!r} (known: {', '.join(builders)})")
    try:
        return builders[name]()
    except KeyError as exc:
        raise ConfigError(f"field '{key}': preset {name!r} needs {exc.args[0]!r}") from None


def _field_function(spec, key: str):
    if spec is None:
        return None
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        value = float(spec)
        return lambda X, S: np.full(np.broadcast(X, S).shape, value)
    raise ConfigError(f"field '{key}': distributed load must be a constant")


def _first_grid(config: ExperimentConfig):
    return make_grid(config, config.grids[0])


def make_grid(config: ExperimentConfig, resolution: tuple[int, ...]):
    if config.is_bar:
        l = float(config.problem.get("l", 1.0))
        return SpaceTimeGrid.uniform(l, config.t_final, *resolution)
    return TimeGrid(config.t_final, resolution[0])


def build_problem(config: ExperimentConfig, grid) -> SdofProblem | BarProblem | None:
    """Problem for one grid of the study, with natural impulses unless given explicitly."""
    prm = config.problem
    if config.kind is ExperimentKind.IDENTITIES:
        return None
    if not config.is_bar:
        p = SdofProblem(
            m=float(prm.get("m", 1.0)),
            c=float(prm.get("c", 0.0)),
            k=float(prm.get("k", 0.0)),
            f=_time_function(prm.get("f"), config.t_final, "f"),
            u0=float(prm.get("u0", 0.0)),
            v0=float(prm.get("v0", 0.0)),
        )
        if "f0" in prm:
            return dataclasses.replace(p, f0=float(prm["f0"]))
        return p.with_natural_impulse()
    l = float(prm.get("l", 1.0))
    p = BarProblem(
        rho=float(prm.get("rho", 1.0)),
        E=float(prm.get("E", 1.0)),
        gamma=float(prm.get("gamma", 0.0)),
        l=l,
        f=_field_function(prm.get("f"), "f"),
        u0=_time_function(prm.get("u0"), l, "u0"),
        v0=_time_function(prm.get("v0"), l, "v0"),
        u_hat=_time_function(prm.get("u_hat"), config.t_final, "u_hat"),
        p=_time_function(prm.get("p"), config.t_final, "p"),
    )
    if "f_hat0" in prm or "p_hat0" in prm:
        f_hat0 = _time_function(prm.get("f_hat0"), l, "f_hat0")
        return dataclasses.replace(p, f_hat0=f_hat0, p_hat0=float(prm.get("p_hat0", 0.0)))
    return p.with_natural_impulse(grid)


# -- report -----------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentRow:
    """One (experiment, grid) measurement.

    For identity rows the identity defect is both ``residual_sup`` and
    ``oracle_error_sup``, and ``natural_condition_error`` is 0.
    """

    experiment: str
    resolution: tuple[int, ...]
    residual_sup: float
    oracle_error_sup: float
    natural_condition_error: float
    runtime_ms: float
    extra: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in STANDARD_METRICS + ("runtime_ms",):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ExperimentFailure(f"{self.experiment} at {list(self.resolution)}: {name} is {value}")
        for name, value in self.extra.items():
            if not math.isfinite(value):
                raise ExperimentFailure(f"{self.experiment} at {list(self.resolution)}: {name} is {value}")

    @property
    def resolution_label(self) -> str:
        return "x".join(str(v) for v in self.resolution)

    def metric(self, name: str) -> float:
        if name in STANDARD_METRICS or name == "runtime_ms":
            return float(getattr(self, name))
        return float(self.extra[name])

    def to_dict(self) -> dict[str, Any]:
        out = {
            "experiment": self.experiment,
            "resolution": list(self.resolution),
            **{m: getattr(self, m) for m in STANDARD_METRICS},
            "runtime_ms": self.runtime_ms,
        }
        out.update(self.extra)
        return out


@dataclass(frozen=True)
class ConvergenceOrder:
    """Empirical order ``log(e_coarse / e_fine) / log(h_coarse / h_fine)`` of one metric.

    ``h`` is the time step, so for grids that double it is the plain
    ``log2`` ratio. ``order`` is ``None`` when either error is zero.
    """

    experiment: str
    metric: str
    coarse: tuple[int, ...]
    fine: tuple[int, ...]
    order: float | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "experiment": self.experiment,
            "metric": self.metric,
            "coarse": list(self.coarse),
            "fine": list(self.fine),
            "order": self.order,
        }


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    rows: tuple[ExperimentRow, ...]
    orders: tuple[ConvergenceOrder, ...]
    metrics: tuple[str, ...]

    def experiments(self) -> list[str]:
        return list(dict.fromkeys(r.experiment for r in self.rows))

    def series(self, experiment: str, metric: str) -> np.ndarray:
        return np.array([r.metric(metric) for r in self.rows if r.experiment == experiment])

    def order(self, experiment: str, metric: str) -> list[float | None]:
        return [o.order for o in self.orders if o.experiment == experiment and o.metric == metric]

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": __version__,
            "config": self.config.to_dict(),
            "metrics": list(self.metrics),
            "rows": [r.to_dict() for r in self.rows],
            "orders": [o.to_dict() for o in self.orders],
        }


def convergence_orders(rows: Sequence[ExperimentRow], metrics: Iterable[str]) -> tuple[ConvergenceOrder, ...]:
    out = []
    metrics = tuple(metrics)
    by_name: dict[str, list[ExperimentRow]] = {}
    for r in rows:
        by_name.setdefault(r.experiment, []).append(r)
    for name, series in by_name.items():
        for metric in metrics:
            for a, b in zip(series, series[1:]):
                ea, eb = a.metric(metric), b.metric(metric)
                ratio = b.resolution[-1] / a.resolution[-1]
                order = math.log(ea / eb) / math.log(ratio) if ea > 0 and eb > 0 else None
                out.append(ConvergenceOrder(name, metric, a.resolution, b.resolution, order))
    return tuple(out)


# -- pipelines ----------------------------------------------------------------------------


def _sup(a) -> float:
    return float(np.max(np.abs(a)))


def _identity_rows(n: int, t_final: float) -> list[tuple[str, float]]:
    grid = TimeGrid(t_final, n)
    s = sample(lambda s: s, grid)
    f1 = sample(lambda s: 1 + s - s**2, grid)
    f2 = sample(lambda s: np.sin(3 * s), grid)
    g = sample(lambda s: np.cos(2 * s) + s**3, grid)
    combo = 2.0 * f1 + (-3.0) * f2
    bilinear = _sup(
        convolve(combo, g).trace.values
        - (2.0 * convolve(f1, g).trace.values - 3.0 * convolve(f2, g).trace.values)
    )
    probes = [(f1, g), (f2, g), (g, g), (s, f1)]
    probe_failures = sum(not titchmarsh_probe(a, b, 1e-8) for a, b in probes)
    rows = [
        ("commutativity", conv_commutativity_residual(f1, g)),
        ("bilinearity", bilinear),
        ("conv_ibp", conv_ibp_residual(sample(np.cos, grid), sample(np.sin, grid))),
        ("conv_ibp_second", conv_ibp_second_residual(sample(np.exp, grid), sample(lambda s: 1 + s**2, grid))),
        ("titchmarsh_probe_failures", float(probe_failures)),
    ]
    s2 = sample(lambda s: s**2, grid)
    tests = {
        "1": sample(lambda s: np.ones_like(s), grid),
        "s": s,
        "s2": s2,
        "cos": sample(np.cos, grid),
    }
    for kind, tag in ((HalfScheme.GRUNWALD_LETNIKOV, "gl"), (HalfScheme.DIRECT_QUADRATURE, "direct")):
        scheme = HalfOperatorScheme(kind, grid)
        rows.append((f"half_ibp_{tag}", half_ibp_residual(s, s2, scheme)))
        for name, u in tests.items():
            lhs, rhs = half_energy_identity(u, scheme)
            rows.append((f"half_energy_{name}_{tag}", abs(lhs - rhs)))
    return rows


def _run_identities(config: ExperimentConfig, resolution, cap) -> list[ExperimentRow]:
    t0 = time.perf_counter()
    values = _identity_rows(resolution[0], config.t_final)
    elapsed = (time.perf_counter() - t0) * 1e3 / len(values)
    return [ExperimentRow(name, resolution, v, v, 0.0, elapsed) for name, v in values]


def _run_sdof(config: ExperimentConfig, resolution, cap) -> list[ExperimentRow]:
    grid = make_grid(config, resolution)
    p = build_problem(config, grid)
    t0 = time.perf_counter()
    rep = solve_sdof(p, grid)
    elapsed = (time.perf_counter() - t0) * 1e3
    ref = reference_sdof(p, grid)
    extra = {
        "condition_estimate": rep.condition_estimate,
        "system_size": float(rep.system_size),
        "reference_residual": certify_stationarity(p, ref),
    }
    return [
        ExperimentRow(
            config.name, resolution, rep.residual_sup, _sup(rep.solution.values - ref.values),
            abs(natural_condition_sdof(p, rep.solution)), elapsed, extra,
        )
    ]


def _bar_oracle(p: BarProblem, grid: SpaceTimeGrid):
    if p.gamma == 0:
        try:
            return reference_bar_modal(p, grid)
        except ValueError:
            pass
    return reference_bar_timestep(p, grid)


def _run_bar(config: ExperimentConfig, resolution, cap) -> list[ExperimentRow]:
    grid = make_grid(config, resolution)
    p = build_problem(config, grid)
    t0 = time.perf_counter()
    rep = solve_bar(p, grid, max_free_nodes=cap)
    elapsed = (time.perf_counter() - t0) * 1e3
    ref = _bar_oracle(p, grid)
    extra = {
        "condition_estimate": rep.condition_estimate,
        "system_size": float(rep.system_size),
    }
    if p.gamma:
        extra["initial_traction_error"] = abs(initial_traction_residual_bar(p, rep.solution))
    return [
        ExperimentRow(
            config.name, resolution, rep.residual_sup, _sup(rep.solution.values - ref.values),
            _sup(neumann_residual_bar(p, rep.solution).values), elapsed, extra,
        )
    ]


def _rank_deficiency(mat: np.ndarray) -> int:
    return int(mat.shape[1] - np.linalg.matrix_rank(mat))


def _run_contrast(config: ExperimentConfig, resolution, cap) -> list[ExperimentRow]:
    grid = make_grid(config, resolution)
    p = build_problem(config, grid)
    t0 = time.perf_counter()
    rep = solve_sdof(p, grid)
    elapsed = (time.perf_counter() - t0) * 1e3
    ref = reference_sdof(p, grid)
    conv_mat, _ = convolved_system(p, grid)
    cls_mat, _ = classical_system(p, grid)
    # the end-time datum is only ever read here, to show what the plain action needs
    end_mat, end_rhs = classical_system(p, grid, end_value=ref.at_end)
    cls_sol = np.linalg.solve(end_mat, end_rhs)
    extra = {
        "classical_rows": float(cls_mat.shape[0]),
        "classical_unknowns": float(cls_mat.shape[1]),
        "classical_rank_deficiency": float(_rank_deficiency(cls_mat)),
        "classical_with_end_rank_deficiency": float(_rank_deficiency(end_mat)),
        "classical_with_end_error": _sup(cls_sol - ref.values[1:]),
        "convolved_rows": float(conv_mat.shape[0]),
        "convolved_unknowns": float(conv_mat.shape[1]),
        "convolved_rank_deficiency": float(_rank_deficiency(conv_mat)),
    }
    return [
        ExperimentRow(
            config.name, resolution, rep.residual_sup, _sup(rep.solution.values - ref.values),
            abs(natural_condition_sdof(p, rep.solution)), elapsed, extra,
        )
    ]


_PIPELINES = {
    ExperimentKind.IDENTITIES: _run_identities,
    ExperimentKind.SDOF: _run_sdof,
    ExperimentKind.SDOF_DAMPED: _run_sdof,
    ExperimentKind.BAR: _run_bar,
    ExperimentKind.BAR_VISCOELASTIC: _run_bar,
    ExperimentKind.CLASSICAL_CONTRAST: _run_contrast,
}

_EXTRA_METRICS = {
    ExperimentKind.IDENTITIES: (),
    ExperimentKind.SDOF: ("reference_residual", "condition_estimate"),
    ExperimentKind.SDOF_DAMPED: ("reference_residual", "condition_estimate"),
    ExperimentKind.BAR: ("condition_estimate",),
    ExperimentKind.BAR_VISCOELASTIC: ("initial_traction_error", "condition_estimate"),
    ExperimentKind.CLASSICAL_CONTRAST: (
        "classical_rank_deficiency",
        "classical_with_end_rank_deficiency",
        "convolved_rank_deficiency",
    ),
}


def default_metrics(kind: ExperimentKind) -> tuple[str, ...]:
    """Metrics exported to ``<prefix>_data.csv`` for a study of this kind."""
    if kind is ExperimentKind.IDENTITIES:
        return ("residual_sup",)
    return STANDARD_METRICS + _EXTRA_METRICS[kind]


def resolve_threads(threads: int | None) -> int:
    """Explicit value, else ``CONVACT_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("CONVACT_THREADS", "").strip()
        if not env:
            return 1
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError(f"CONVACT_THREADS must be a positive integer, got {env!r}") from None
    if threads < 1:
        raise ConfigError(f"thread count must be positive, got {threads}")
    return threads


def run(
    config: ExperimentConfig,
    out_dir: str | os.PathLike | None = ".",
    threads: int | None = None,
    max_free_nodes: int | None = None,
) -> ExperimentReport:
    """Run every grid of ``config`` and write the report and CSV into ``out_dir``.

    Grids may be processed concurrently (``threads > 1``); each solve is
    restricted to one BLAS thread so results do not depend on the thread
    count. Pass ``out_dir=None`` to skip writing files.
    """
    threads = resolve_threads(threads)
    cap = config.max_free_nodes if max_free_nodes is None else max_free_nodes
    pipeline = _PIPELINES[config.kind]

    def one(resolution):
        logger.info("%s: grid %s", config.name, list(resolution))
        try:
            return pipeline(config, resolution, cap)
        except SingularSystemError as exc:
            raise ExperimentFailure(
                f"{config.name} at grid {list(resolution)}: {exc} (condition estimate {exc.condition_estimate:.3g})"
            ) from exc

    with threadpool_limits(limits=1):
        if threads == 1:
            results = [one(r) for r in config.grids]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(one, config.grids))

    # rows grouped by experiment, grids in config order
    flat = [row for rows in results for row in rows]
    names = list(dict.fromkeys(r.experiment for r in flat))
    rows = tuple(r for name in names for r in flat if r.experiment == name)
    metrics = default_metrics(config.kind)
    report = ExperimentReport(config, rows, convergence_orders(rows, metrics), metrics)
    if out_dir is not None:
        write_artifacts(report, out_dir)
    return report


# -- output ----------------------------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def plot_data_csv(report: ExperimentReport, metrics: Sequence[str] | None = None) -> str:
    if not report.rows:
        raise ValueError("report has no rows")
    metrics = report.metrics if metrics is None else tuple(metrics)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["experiment", "resolution", "metric", "value"])
    for row in report.rows:
        for m in metrics:
            writer.writerow([row.experiment, row.resolution_label, m, repr(row.metric(m))])
    return buf.getvalue()


def emit_plot_data(
    report: ExperimentReport, path: str | os.PathLike, metrics: Sequence[str] | None = None
) -> None:
    """Write long-format CSV (``experiment, resolution, metric, value``) to ``path``.

    ``metrics`` defaults to the report's own selection; an empty selection
    writes the header only. Resolutions are written as ``n`` or ``nx x nt``
    (``16x48``).
    """
    _atomic_write(Path(path), plot_data_csv(report, metrics))


def write_artifacts(report: ExperimentReport, out_dir: str | os.PathLike) -> tuple[Path, Path]:
    out = Path(out_dir)
    prefix = report.config.output
    json_path = out / f"{prefix}_report.json"
    csv_path = out / f"{prefix}_data.csv"
    _atomic_write(json_path, json.dumps(report.to_dict(), indent=2) + "\n")
    emit_plot_data(report, csv_path)
    return json_path, csv_path


def format_table(report: ExperimentReport) -> str:
    """Plain-text summary: one line per row, then the observed orders."""
    lines = [f"{'experiment':<28} {'grid':>8} {'residual':>10} {'oracle err':>10} {'natural':>10}"]
    for r in report.rows:
        lines.append(
            f"{r.experiment:<28} {r.resolution_label:>8} {r.residual_sup:10.3e} "
            f"{r.oracle_error_sup:10.3e} {r.natural_condition_error:10.3e}"
        )
    shown = [o for o in report.orders if o.metric in ("oracle_error_sup", "natural_condition_error")]
    if report.config.kind is ExperimentKind.IDENTITIES:
        shown = [o for o in report.orders if o.metric == "residual_sup"]
    if shown:
        lines.append("")
        lines.append("observed orders")
        for o in shown:
            value = "n/a" if o.order is None else f"{o.order:.2f}"
            coarse = "x".join(map(str, o.coarse))
            fine = "x".join(map(str, o.fine))
            lines.append(f"  {o.experiment:<26} {o.metric:<24} {coarse:>7} -> {fine:<7} {value}")
    return "\n".join(lines)
