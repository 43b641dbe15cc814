"""Command-line front end: ``geomgate verify | gate | sweep | trajectory``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from geomgate import __version__, dynamics, gate, geompath, model
from geomgate.model import MODEL_KINDS, QUBIT_LABELS, SystemParams

log = logging.getLogger("geomgate")

PHYSICS_KEYS = ("omega", "delta_large", "delta_small", "gamma_cav", "t_total")
NUMERIC_KEYS = ("n_max", "dt", "model_kind")
REQUIRED_KEYS = ("omega", "delta_large", "delta_small", "t_total")
FORMATS = ("json", "csv")
SWEEP_COLUMNS = ("phi_eg", "phi_ee", "fidelity", "max_excitation", "error_estimate", "status", "error")


class ConfigError(ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class MissingField(ConfigError):
    pass


class UnknownField(ConfigError):
    pass


class NonFiniteValue(ConfigError):
    pass


class InvalidValue(ConfigError):
    pass


class UsageError(Exception):
    """Bad command-line usage; exit status 2."""


class EmptyAxis(UsageError):
    pass


# -- config ----------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Run description as read from JSON; ``None`` means unset."""

    omega: float | None = None
    delta_large: float | None = None
    delta_small: float | None = None
    gamma_cav: float | None = None
    n_max: int | None = None
    t_total: float | None = None
    dt: float | None = None
    model_kind: str | None = None
    g: float | None = None
    preset: str | None = None
    output_path: str | None = None
    format: str | None = None


CONFIG_KEYS = tuple(f.name for f in fields(RunConfig))


def _number(key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidValue(f"{key}: expected a number, got {value!r}", key)
    if not math.isfinite(value):
        raise NonFiniteValue(f"{key}: value must be finite, got {value!r}", key)
    return float(value)


def _field_value(key, value):
    if value is None:
        return None
    if key == "n_max":
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and not math.isfinite(value):
                raise NonFiniteValue(f"n_max: value must be finite, got {value!r}", key)
            raise InvalidValue(f"n_max: expected an integer, got {value!r}", key)
        return value
    if key in ("model_kind", "preset", "output_path", "format"):
        if not isinstance(value, str):
            raise InvalidValue(f"{key}: expected a string, got {value!r}", key)
        allowed = {"model_kind": MODEL_KINDS, "preset": tuple(gate.PRESETS), "format": FORMATS}.get(key)
        if allowed and value not in allowed:
            raise InvalidValue(f"{key}: expected one of {allowed}, got {value!r}", key)
        return value
    return _number(key, value)


def config_from_mapping(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    for key in data:
        if key not in CONFIG_KEYS:
            raise UnknownField(f"unknown config key {key!r}", key)
    values = {k: _field_value(k, v) for k, v in data.items()}
    if values.get("g") not in (None, 1.0):
        raise InvalidValue("g: all frequencies are ratios to g, so g must be 1", "g")
    if values.get("preset") is None:
        for key in REQUIRED_KEYS:
            if values.get(key) is None:
                raise MissingField(f"missing required key {key!r} (no preset given)", key)
    config = RunConfig(**values)
    resolve_params(config, quiet=True)
    return config


def parse_config(text: str) -> RunConfig:
    """Strict JSON config parser; unknown keys and non-finite numbers are errors."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    return config_from_mapping(data)


def serialize(config: RunConfig) -> str:
    """Canonical JSON text; ``parse_config(serialize(c)) == c``."""
    data = {k: v for k, v in asdict(config).items() if v is not None}
    return json.dumps(data, indent=2) + "\n"


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(serialize(config).encode("utf-8")).hexdigest()


def resolve_params(config: RunConfig, *, quiet: bool = False) -> SystemParams:
    """SystemParams for a config.  With a preset, physics keys present in the
    config override the preset values and each override is logged."""
    given = {k: getattr(config, k) for k in PHYSICS_KEYS + NUMERIC_KEYS if getattr(config, k) is not None}
    try:
        if config.preset is not None:
            if not quiet:
                for key in PHYSICS_KEYS:
                    if key in given:
                        log.warning("preset %s: %s overridden to %r", config.preset, key, given[key])
            return gate.preset(config.preset, **given)
        return SystemParams(**given)
    except ValueError as exc:
        raise InvalidValue(str(exc)) from None


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text)


# -- formatting ------------------------------------------------------------------


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x) + 0.0:.12g}"


def provenance(config: RunConfig) -> dict:
    return {"tool": "geomgate", "version": __version__, "config_sha256": config_hash(config)}


def _csv_text(header: list[str], rows: list[list], config: RunConfig) -> str:
    meta = provenance(config)
    buf = io.StringIO()
    buf.write(f"# {meta['tool']} {meta['version']} config_sha256={meta['config_sha256']}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(x) for x in row])
    return buf.getvalue()


# -- gate ------------------------------------------------------------------------


def gate_output(config: RunConfig) -> str:
    params = resolve_params(config)
    for note in params.validity_notes():
        log.warning(note)
    report = gate.run_gate(params)
    if (config.format or "json") == "json":
        return json.dumps(report.to_dict(provenance(config)), indent=2) + "\n"
    rows = []
    for k, lab in enumerate(QUBIT_LABELS):
        a, c = report.residual_alpha[k], report.corrected_diagonal[k]
        rows.append([lab, report.phases[k], a.real, a.imag, report.cavity_purity[k], c.real, c.imag])
    header = ["state", "phase", "residual_re", "residual_im", "purity", "corrected_re", "corrected_im"]
    return _csv_text(header, rows, config)


# -- sweep -----------------------------------------------------------------------


SWEEPABLE = PHYSICS_KEYS + NUMERIC_KEYS


@dataclass(frozen=True)
class Axis:
    name: str
    values: tuple
    with_: tuple = ()  # (name, values) pairs varying together with this axis

    @property
    def columns(self) -> list[str]:
        return [self.name] + [n for n, _ in self.with_]


@dataclass(frozen=True)
class SweepSpec:
    base: RunConfig
    axes: tuple[Axis, ...]

    def points(self) -> list[dict]:
        grids = []
        for ax in self.axes:
            grids.append([
                {ax.name: ax.values[i], **{n: vals[i] for n, vals in ax.with_}}
                for i in range(len(ax.values))
            ])
        return [dict(kv for part in combo for kv in part.items()) for combo in itertools.product(*grids)]

    @property
    def columns(self) -> list[str]:
        return [c for ax in self.axes for c in ax.columns]


def _axis_values(name, entry):
    if "values" in entry and "linspace" in entry:
        raise ConfigError(f"axis {name!r}: give either values or linspace", name)
    if "linspace" in entry:
        ls = entry["linspace"]
        if not (isinstance(ls, list) and len(ls) == 3):
            raise ConfigError(f"axis {name!r}: linspace must be [start, stop, count]", name)
        start, stop = _number(name, ls[0]), _number(name, ls[1])
        count = ls[2]
        if isinstance(count, bool) or not isinstance(count, int) or count < 0:
            raise ConfigError(f"axis {name!r}: linspace count must be a non-negative integer", name)
        values = [float(v) for v in np.linspace(start, stop, count)]
    elif "values" in entry:
        values = entry["values"]
        if not isinstance(values, list):
            raise ConfigError(f"axis {name!r}: values must be a list", name)
    else:
        raise ConfigError(f"axis {name!r}: needs values or linspace", name)
    if not values:
        raise EmptyAxis(f"axis {name!r} has no values")
    return tuple(_field_value(name, v) for v in values)


def parse_sweep(text: str, base: RunConfig) -> SweepSpec:
    """Spec JSON: ``{"axes": [{"name": k, "values": [...] | "linspace": [a, b, n],
    "with": {k2: [...]}}, ...]}``; the grid is the product of the axes."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed sweep JSON: {exc}") from None
    if not isinstance(data, dict) or set(data) != {"axes"} or not isinstance(data["axes"], list):
        raise ConfigError('sweep spec must be an object with a single "axes" list')
    if not data["axes"]:
        raise EmptyAxis("sweep spec has no axes")
    axes, seen = [], set()
    for entry in data["axes"]:
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError("each axis needs a name")
        extra = set(entry) - {"name", "values", "linspace", "with"}
        if extra:
            raise UnknownField(f"unknown axis key {sorted(extra)[0]!r}", sorted(extra)[0])
        name = entry["name"]
        values = _axis_values(name, entry)
        co = []
        for other, vals in (entry.get("with") or {}).items():
            co_vals = _axis_values(other, {"values": vals})
            if len(co_vals) != len(values):
                raise ConfigError(f"axis {name!r}: co-varying {other!r} needs {len(values)} values", other)
            co.append((other, co_vals))
        for n in [name] + [n for n, _ in co]:
            if n not in SWEEPABLE:
                raise UnknownField(f"cannot sweep {n!r}; sweepable keys: {', '.join(SWEEPABLE)}", n)
            if n in seen:
                raise ConfigError(f"{n!r} appears on more than one axis", n)
            seen.add(n)
        axes.append(Axis(name, values, tuple(co)))
    return SweepSpec(base, tuple(axes))


def _sweep_point(args) -> list:
    index, base, point, columns = args
    row = [index] + [point[c] for c in columns]
    try:
        params = resolve_params(replace(base, **point), quiet=True)
    except ConfigError as exc:
        return row + [math.nan] * 5 + ["failed", type(exc).__name__]
    try:
        report, status, error = gate.run_gate(params), "ok", ""
    except gate.AmbiguousPhase as exc:
        report, status, error = exc.report, "failed", type(exc).__name__
    except Exception as exc:  # recorded in the row, the sweep goes on
        return row + [math.nan] * 5 + ["failed", type(exc).__name__]
    phi = gate.wrap_phase(gate.interaction_frame_phases(report, params))
    return row + [phi[2], phi[3], report.fidelity, report.max_excitation,
                  report.error_estimate, status, error]


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[list]:
    """One row per grid point, ascending point_index whatever the execution order.

    Phases are reported in the effective-Hamiltonian interaction frame and
    wrapped to (-pi, pi].
    """
    columns = spec.columns
    tasks = [(i, spec.base, p, columns) for i, p in enumerate(spec.points())]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]


def sweep_output(spec: SweepSpec, jobs: int) -> str:
    header = ["point_index"] + spec.columns + list(SWEEP_COLUMNS)
    return _csv_text(header, run_sweep(spec, jobs), spec.base)


# -- trajectory --------------------------------------------------------------------


def trajectory_output(config: RunConfig, branch: str, analytic: bool, samples: int) -> str:
    """Analytic: ``index,re,im`` of alpha(t) (2 alpha for ee).  Simulated:
    ``t,re_alpha,im_alpha,p_r,purity`` for one basis-state branch."""
    params = resolve_params(config)
    if samples < 2:
        raise UsageError("--samples must be at least 2")
    if analytic:
        scale = {"gg": 0, "ge": 1, "eg": 1, "ee": 2}[branch]
        ts = np.linspace(0.0, params.t_total, samples)
        path = geompath.DisplacementPath(scale * np.asarray(model.alpha_trajectory(params, ts)))
        meta = provenance(config)
        head = f"# {meta['tool']} {meta['version']} config_sha256={meta['config_sha256']}\n"
        return head + geompath.write_csv(path)
    res = gate.evolve_branch(params, branch, sample_every=gate._sample_stride(params, samples))
    levels = 3 if params.model_kind == "full" else 2
    rows = []
    r_pop = model.r_population_operator(params.n_max) if levels == 3 else None
    for t, psi in zip(res.times, res.samples):
        a = dynamics.cavity_amplitude(psi, params.n_max)
        p_r = float(np.sum(np.abs(psi) ** 2 * r_pop)) if r_pop is not None else 0.0
        pur = dynamics.purity(dynamics.reduced_cavity(psi, params.n_max))
        rows.append([t, a.real, a.imag, p_r, pur])
    return _csv_text(["t", "re_alpha", "im_alpha", "p_r", "purity"], rows, config)


# -- entry point -----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="geomgate", description="Geometric phase gate simulator for cavity QED.")
    p.add_argument("--version", action="version", version=f"geomgate {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    v = sub.add_parser("verify", help="run invariant checks and print a pass/fail summary")
    v.add_argument("--acceptance", action="store_true", help="run the full acceptance criteria (minutes)")

    def outputs(sp):
        sp.add_argument("--output", "-o", help="write here instead of the config's output_path or stdout")
        sp.add_argument("--format", choices=FORMATS, help="override the config format")

    g = sub.add_parser("gate", help="run the four basis states and emit a gate report")
    g.add_argument("--config", help="JSON run config")
    g.add_argument("--preset", choices=sorted(gate.PRESETS), help="named parameter set")
    outputs(g)

    s = sub.add_parser("sweep", help="parameter sweep, CSV output")
    s.add_argument("--config", required=True, help="base JSON run config")
    s.add_argument("--spec", required=True, help="JSON sweep spec")
    s.add_argument("--jobs", type=int, default=None, help="parallel points (default $GEOMGATE_JOBS or 1)")
    s.add_argument("--output", "-o", help="write here instead of the config's output_path or stdout")

    t = sub.add_parser("trajectory", help="cavity amplitude alpha(t) as CSV")
    t.add_argument("--config", required=True, help="JSON run config")
    t.add_argument("--branch", choices=QUBIT_LABELS, default="eg")
    t.add_argument("--analytic", action="store_true", help="closed-form alpha(t) as index,re,im")
    t.add_argument("--samples", type=int, default=400)
    t.add_argument("--output", "-o", help="write here instead of the config's output_path or stdout")
    return p


def _emit(text: str, target: str | None) -> None:
    if target:
        Path(target).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _jobs(arg: int | None) -> int:
    if arg is None:
        env = os.environ.get("GEOMGATE_JOBS", "1")
        try:
            arg = int(env)
        except ValueError:
            raise UsageError(f"GEOMGATE_JOBS must be an integer, got {env!r}") from None
    if arg < 1:
        raise UsageError("--jobs must be at least 1")
    return arg


def _verify(acceptance: bool) -> int:
    from geomgate import verify

    results = verify.run_acceptance() if acceptance else verify.run_quick()
    for r in results:
        print(r.line(), flush=True)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed} passed, {failed} failed")
    return 0 if failed == 0 else 1


def _dispatch(args) -> int:
    if args.command == "verify":
        return _verify(args.acceptance)
    if args.command == "gate":
        if args.config is None and args.preset is None:
            raise UsageError("gate needs --config or --preset")
        config = load_config(args.config) if args.config else RunConfig()
        if args.preset:
            config = replace(config, preset=args.preset)
        if args.format:
            config = replace(config, format=args.format)
        config_from_mapping({k: v for k, v in asdict(config).items() if v is not None})
        _emit(gate_output(config), args.output or config.output_path)
        return 0
    if args.command == "sweep":
        jobs = _jobs(args.jobs)
        base = load_config(args.config)
        try:
            spec_text = Path(args.spec).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read sweep spec {args.spec}: {exc.strerror or exc}") from None
        spec = parse_sweep(spec_text, base)
        _emit(sweep_output(spec, jobs), args.output or base.output_path)
        return 0
    if args.command == "trajectory":
        config = load_config(args.config)
        text = trajectory_output(config, args.branch, args.analytic, args.samples)
        _emit(text, args.output or config.output_path)
        return 0
    raise UsageError("missing subcommand; try --help")


def run_command(argv: list[str] | None = None) -> int:
    """Run the CLI; 0 ok, 1 runtime or config error, 2 usage error."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="geomgate: %(message)s", stream=sys.stderr)
    try:
        return _dispatch(args)
    except UsageError as exc:
        print(f"geomgate: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"geomgate: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
