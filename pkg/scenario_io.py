"""
Scenario configuration, batch/sweep execution and result files.

Scenario files are INI documents:

    [scenario]      name
    [plant]         m, U
    [surface]       kind = optimal | classic | nonsingular, plus its gains
    [perturbation]  kind = none | friction | harmonic | random_binary, plus its parameters
    [sim]           dt, t_end, x1_0, x2_0, seed
    [analysis]      band, eps_x1, eps_x2, eta, window  ("auto" = derive from the run)
    [sweep]         parameter, values   (optional, sweep files only)

See SCENARIO_CONFIG_README.md for the full key table and the report schema.
"""

import configparser
import contextlib
import io
import json
import logging
import os
import re
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import MISSING, dataclass, field, fields
from typing import Optional

import numpy as np
import pandas as pd

import analysis
from analysis import AnalysisSettings
import control
import dynamics
from errors import (
    EXIT_DIVERGED,
    EXIT_IO,
    EXIT_OK,
    DomainError,
    ScenarioError,
    SimulationDiverged,
)

logger = logging.getLogger(__name__)

AUTO = "auto"
NAME_PATTERN = re.compile(r"^[A-Za-z0-9_.=+-]+$")

SURFACE_TYPES = {
    "optimal": (control.Optimal, ("alpha",)),
    "classic": (control.Classic, ("beta", "q_over_p")),
    "nonsingular": (control.NonSingular, ("beta", "p_over_q")),
}

PERTURBATION_TYPES = {
    "none": (dynamics.NoPerturbation, ()),
    "friction": (dynamics.Friction, ("Fc", "sigma0")),
    "harmonic": (dynamics.Harmonic, ("A", "omega", "phase")),
    "random_binary": (dynamics.RandomBinary, ("A", "dwell", "seed")),
}

SECTION_KEYS = {
    "scenario": ("name",),
    "plant": ("m", "U"),
    "surface": None,
    "perturbation": None,
    "sim": ("dt", "t_end", "x1_0", "x2_0", "seed"),
    "analysis": ("band", "eps_x1", "eps_x2", "eta", "window"),
    "sweep": ("parameter", "values"),
}

# DomainError.field -> config key, where they differ
SIM_FIELD_KEYS = {"x1": "x1_0", "x2": "x2_0"}

# Keys holding integers; everything else is a float
INTEGER_KEYS = {("sim", "seed"), ("perturbation", "seed")}

SUMMARY_COLUMNS = [
    "name", "status", "mode", "settling_time", "reach_time",
    "crossings", "residual_amplitude", "error",
]
SWEEP_COLUMNS = ["name", "status", "mode", "settling_time", "crossings", "residual_amplitude"]

STATUS_EXIT_CODES = {"ok": EXIT_OK, "diverged": EXIT_DIVERGED, "io_error": EXIT_IO}


@dataclass(frozen=True)
class Scenario:
    name: str
    plant: dynamics.PlantParams = field(default_factory=dynamics.PlantParams)
    surface: object = field(default_factory=lambda: control.Optimal(0.6))
    perturbation: object = field(default_factory=dynamics.NoPerturbation)
    sim: dynamics.SimConfig = field(default_factory=dynamics.SimConfig)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)

    def __post_init__(self):
        if not self.name or not NAME_PATTERN.match(self.name):
            raise DomainError("name", f"must be a nonempty file-safe identifier, got {self.name!r}")
        dynamics.check_perturbation_bound(self.perturbation, self.plant)


@dataclass(frozen=True)
class SweepSpec:
    base: Scenario
    parameter: str
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise DomainError("values", "sweep needs at least one value")


# --- Number formatting ---

def fmt(value):
    """Shortest round-trip positional decimal; never exponent notation, never -0.0."""
    return np.format_float_positional(float(value) + 0.0, unique=True, trim="0")


def format_cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return fmt(value)
    return str(value)


# --- Parsing ---

def _new_parser():
    parser = configparser.ConfigParser(
        interpolation=None,
        comment_prefixes=("#", ";"),
        inline_comment_prefixes=("#", ";"),
    )
    parser.optionxform = str
    return parser


def _line_of(text, section, key=None):
    """1-based line of `key` inside `[section]` (or of the header itself)"""
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        header = re.match(r"^\[([^\]]+)\]", line)
        if header:
            current = header.group(1).strip()
            if key is None and current == section:
                return number
            continue
        if current == section and key is not None and re.match(rf"^{re.escape(key)}\s*[=:]", line):
            return number
    return None


class _Reader:
    """Typed access to one parsed document, raising ScenarioError with context"""

    def __init__(self, parser, text, source):
        self.parser = parser
        self.text = text
        self.source = source

    def error(self, message, section, key=None):
        line = _line_of(self.text, section, key)
        return ScenarioError(
            message, source=self.source, line=line,
            key=f"{section}.{key}" if key else section,
        )

    def has(self, section, key):
        return self.parser.has_section(section) and self.parser.has_option(section, key)

    def raw(self, section, key):
        return self.parser.get(section, key).strip()

    def number(self, section, key):
        value = self.raw(section, key)
        try:
            return float(value)
        except ValueError:
            raise self.error(f"expected a number, got {value!r}", section, key) from None

    def number_or(self, section, key, default):
        return self.number(section, key) if self.has(section, key) else default

    def integer(self, section, key):
        value = self.raw(section, key)
        try:
            return int(value)
        except ValueError:
            raise self.error(f"expected an integer, got {value!r}", section, key) from None

    def optional_number(self, section, key):
        if not self.has(section, key) or self.raw(section, key).lower() == AUTO:
            return None
        return self.number(section, key)

    def check_keys(self, section, allowed):
        if not self.parser.has_section(section):
            return
        for key in self.parser.options(section):
            if key not in allowed:
                raise self.error(f"unknown key (allowed: {', '.join(allowed) or 'none'})", section, key)

    def build(self, section, cls, keys):
        """Instantiate a parameter dataclass from `keys`; missing optional keys take the class defaults."""
        defaults = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key in keys:
            if not self.has(section, key):
                if defaults[key].default is MISSING:
                    raise self.error("required key is missing", section, key)
            elif (section, key) in INTEGER_KEYS:
                # auto leaves the class default (None) in place
                if self.raw(section, key).lower() != AUTO:
                    kwargs[key] = self.integer(section, key)
            else:
                kwargs[key] = self.number(section, key)
        try:
            return cls(**kwargs)
        except DomainError as e:
            raise self.error(str(e), section, e.field) from e


def _kind(reader, section, table, default):
    kind = reader.raw(section, "kind").lower() if reader.has(section, "kind") else default
    if kind not in table:
        raise reader.error(f"unknown kind {kind!r} (allowed: {', '.join(table)})", section, "kind")
    return kind


def _read_document(text, source):
    parser = _new_parser()
    try:
        parser.read_string(text, source=source or "<string>")
    except configparser.Error as e:
        line = getattr(e, "lineno", None)
        raise ScenarioError(f"malformed configuration: {e.message}", source=source, line=line) from e
    reader = _Reader(parser, text, source)
    for section in parser.sections():
        if section not in SECTION_KEYS:
            raise ScenarioError(
                f"unknown section [{section}] (allowed: {', '.join(SECTION_KEYS)})",
                source=source, line=_line_of(text, section),
            )
    return reader


def _scenario_from(reader, default_name=None):
    for section in ("scenario", "plant", "sim", "analysis", "sweep"):
        reader.check_keys(section, SECTION_KEYS[section])

    if reader.has("scenario", "name"):
        name = reader.raw("scenario", "name")
    elif default_name:
        name = default_name
    else:
        raise reader.error("required key is missing", "scenario", "name")

    plant = reader.build("plant", dynamics.PlantParams, SECTION_KEYS["plant"])

    surface_kind = _kind(reader, "surface", SURFACE_TYPES, "optimal")
    surface_cls, surface_keys = SURFACE_TYPES[surface_kind]
    reader.check_keys("surface", ("kind",) + surface_keys)
    if surface_kind == "optimal" and not reader.has("surface", "alpha"):
        surface = control.Optimal(0.6)
    else:
        surface = reader.build("surface", surface_cls, surface_keys)

    pert_kind = _kind(reader, "perturbation", PERTURBATION_TYPES, "none")
    pert_cls, pert_keys = PERTURBATION_TYPES[pert_kind]
    reader.check_keys("perturbation", ("kind",) + pert_keys)
    perturbation = reader.build("perturbation", pert_cls, pert_keys)
    try:
        dynamics.check_perturbation_bound(perturbation, plant)
    except DomainError as e:
        raise reader.error(str(e), "perturbation", e.field.split(".")[-1]) from e

    base = dynamics.SimConfig()
    try:
        initial = dynamics.State(
            reader.number_or("sim", "x1_0", base.initial.x1),
            reader.number_or("sim", "x2_0", base.initial.x2),
        )
        sim = dynamics.SimConfig(
            dt=reader.number_or("sim", "dt", base.dt),
            t_end=reader.number_or("sim", "t_end", base.t_end),
            initial=initial,
            seed=reader.integer("sim", "seed") if reader.has("sim", "seed") else base.seed,
        )
    except DomainError as e:
        raise reader.error(str(e), "sim", SIM_FIELD_KEYS.get(e.field, e.field)) from e

    defaults = AnalysisSettings()
    try:
        settings = AnalysisSettings(
            band=reader.optional_number("analysis", "band"),
            eps_x1=reader.number_or("analysis", "eps_x1", defaults.eps_x1),
            eps_x2=reader.number_or("analysis", "eps_x2", defaults.eps_x2),
            eta=reader.number_or("analysis", "eta", defaults.eta),
            window=reader.optional_number("analysis", "window"),
        )
        if settings.window is not None and settings.window >= sim.t_end:
            raise DomainError("window", f"must be < t_end ({sim.t_end}), got {settings.window}")
    except DomainError as e:
        raise reader.error(str(e), "analysis", e.field) from e

    try:
        return Scenario(
            name=name, plant=plant, surface=surface,
            perturbation=perturbation, sim=sim, analysis=settings,
        )
    except DomainError as e:
        raise reader.error(str(e), "scenario", e.field) from e


def _default_name(source):
    if not source:
        return None
    return os.path.splitext(os.path.basename(str(source)))[0]


def parse_scenario(text, source=None):
    """
    Validated Scenario from a configuration document.

    Unknown sections and keys are rejected; every omitted key takes its
    default. A missing [scenario] name falls back to the file stem of
    `source`. A [sweep] section is accepted and ignored here.
    """
    reader = _read_document(text, source)
    return _scenario_from(reader, _default_name(source))


def load_scenario(path):
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return parse_scenario(text, source=path)


def load_scenarios(config_dir):
    """Every *.cfg directly inside config_dir, in file name order"""
    names = sorted(n for n in os.listdir(config_dir) if n.endswith(".cfg"))
    scenarios = [load_scenario(os.path.join(config_dir, n)) for n in names]
    logger.info(f"Loaded {len(scenarios)} scenario(s) from {config_dir}")
    return scenarios


def _dump_value(section, key, value):
    if value is None:
        return AUTO
    if (section, key) in INTEGER_KEYS:
        return str(int(value))
    return fmt(value)


def _scenario_sections(scenario):
    surface_cls, surface_keys = SURFACE_TYPES[scenario.surface.kind]
    pert_cls, pert_keys = PERTURBATION_TYPES[scenario.perturbation.kind]
    settings = scenario.analysis
    return {
        "scenario": {"name": scenario.name},
        "plant": {"m": fmt(scenario.plant.m), "U": fmt(scenario.plant.U)},
        "surface": {"kind": scenario.surface.kind,
                    **{k: _dump_value("surface", k, getattr(scenario.surface, k)) for k in surface_keys}},
        "perturbation": {"kind": scenario.perturbation.kind,
                         **{k: _dump_value("perturbation", k, getattr(scenario.perturbation, k)) for k in pert_keys}},
        "sim": {
            "dt": fmt(scenario.sim.dt),
            "t_end": fmt(scenario.sim.t_end),
            "x1_0": fmt(scenario.sim.initial.x1),
            "x2_0": fmt(scenario.sim.initial.x2),
            "seed": str(int(scenario.sim.seed)),
        },
        "analysis": {
            "band": AUTO if settings.band is None else fmt(settings.band),
            "eps_x1": fmt(settings.eps_x1),
            "eps_x2": fmt(settings.eps_x2),
            "eta": fmt(settings.eta),
            "window": AUTO if settings.window is None else fmt(settings.window),
        },
    }


def normalize_dump(scenario):
    """Every key with defaults applied; parse_scenario(normalize_dump(sc)) == sc"""
    parser = _new_parser()
    parser.read_dict(_scenario_sections(scenario))
    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue().rstrip("\n") + "\n"


# --- Sweeps ---

def _is_integer_key(path):
    section, _, key = str(path).partition(".")
    return (section, key) in INTEGER_KEYS


def _format_value(value, integer=False):
    text = str(value).strip()
    try:
        return str(int(text)) if integer else fmt(float(text))
    except ValueError:
        return text


def apply_override(scenario, path, value):
    """
    Copy of `scenario` with one dotted-path key replaced (e.g. surface.alpha),
    revalidated and renamed <name>__<key>=<value>.
    """
    section, _, key = str(path).partition(".")
    if not key or section not in SECTION_KEYS or section in ("scenario", "sweep"):
        raise ScenarioError(f"cannot sweep over {path!r}; use <section>.<key>", key=str(path))
    formatted = _format_value(value, _is_integer_key(path))
    sections = _scenario_sections(scenario)
    sections[section][key] = formatted
    sections["scenario"]["name"] = f"{scenario.name}__{key}={formatted}"
    parser = _new_parser()
    parser.read_dict(sections)
    buffer = io.StringIO()
    parser.write(buffer)
    return parse_scenario(buffer.getvalue(), source=f"{scenario.name} [{path}={formatted}]")


def split_values(raw):
    return [v.strip() for v in str(raw).split(",") if v.strip()]


def parse_sweep(text, source=None, parameter=None, values=None):
    """
    SweepSpec from a scenario document. `parameter`/`values` override the
    document's [sweep] section; every substituted scenario is validated.
    """
    reader = _read_document(text, source)
    base = _scenario_from(reader, _default_name(source))
    if parameter is None and reader.has("sweep", "parameter"):
        parameter = reader.raw("sweep", "parameter")
    if values is None and reader.has("sweep", "values"):
        values = split_values(reader.raw("sweep", "values"))
    if not parameter:
        raise ScenarioError("sweep parameter not given (--param or [sweep] parameter)", source=source)
    if not values:
        raise ScenarioError("sweep values not given (--values or [sweep] values)", source=source)
    try:
        sweep = SweepSpec(base=base, parameter=parameter, values=values)
    except DomainError as e:
        raise ScenarioError(str(e), source=source, key="sweep.values") from e
    expand_sweep(sweep)
    return sweep


def load_sweep(path, parameter=None, values=None):
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return parse_sweep(text, source=path, parameter=parameter, values=values)


def expand_sweep(sweep):
    return [apply_override(sweep.base, sweep.parameter, v) for v in sweep.values]


# --- Running ---

def run_scenario(scenario):
    """Simulate and analyze one scenario; returns (Trajectory, ModeReport)."""
    logger.debug(f"Running scenario {scenario.name}")
    traj = dynamics.simulate(scenario.plant, scenario.surface, scenario.perturbation, scenario.sim)
    report = analysis.analyze(traj, scenario.analysis)
    logger.info(f"Scenario {scenario.name}: {report.mode.value}, settling_time={report.settling_time}")
    return traj, report


def report_document(scenario, traj, report):
    doc = {
        "scenario": scenario.name,
        "surface": scenario.surface.kind,
        "perturbation": scenario.perturbation.kind,
        "samples": len(traj),
    }
    doc.update(report.to_dict())
    return doc


def _atomic_write(path, write):
    """Write through a temp file in the target directory, then rename over `path`."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{os.path.basename(path)}.", suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_trajectory_csv(traj, path):
    frame = traj.to_frame()
    _atomic_write(path, lambda tmp: frame.to_csv(tmp, index=False, float_format=fmt, lineterminator="\n"))


def write_report_json(document, path):
    text = json.dumps(document, indent=2, sort_keys=True, allow_nan=False) + "\n"

    def write(tmp):
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)

    _atomic_write(path, write)


def write_table_csv(rows, columns, path):
    frame = pd.DataFrame([[format_cell(row.get(c)) for c in columns] for row in rows], columns=columns)
    _atomic_write(path, lambda tmp: frame.to_csv(tmp, index=False, lineterminator="\n"))


def execute_scenario(scenario, out_dir):
    """
    Run one scenario and write <name>.trajectory.csv and <name>.report.json.

    Returns a summary row; divergence and I/O failures are recorded in
    `status` instead of raised.
    """
    row = {"name": scenario.name, "status": "ok"}
    try:
        traj, report = run_scenario(scenario)
    except SimulationDiverged as e:
        logger.error(f"Scenario {scenario.name} diverged: {e}")
        row.update(status="diverged", error=str(e))
        return row

    row.update(
        mode=report.mode.value,
        settling_time=report.settling_time,
        reach_time=report.reach_time,
        crossings=len(report.crossings),
        residual_amplitude=report.residual_amplitude,
    )
    try:
        write_trajectory_csv(traj, os.path.join(out_dir, f"{scenario.name}.trajectory.csv"))
        write_report_json(report_document(scenario, traj, report),
                          os.path.join(out_dir, f"{scenario.name}.report.json"))
    except OSError as e:
        logger.error(f"Failed to write results for {scenario.name}: {e}")
        row.update(status="io_error", error=str(e))
    return row


def _check_unique(scenarios):
    seen = set()
    for scenario in scenarios:
        if scenario.name in seen:
            raise ScenarioError(f"duplicate scenario name {scenario.name!r} in batch", key="scenario.name")
        seen.add(scenario.name)


def _execute_all(scenarios, out_dir, workers):
    _check_unique(scenarios)
    os.makedirs(out_dir, exist_ok=True)
    workers = max(1, int(workers or 1))
    if workers == 1 or len(scenarios) <= 1:
        return [execute_scenario(sc, out_dir) for sc in scenarios]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="tsm-run") as pool:
        # map() yields in submission order
        return list(pool.map(lambda sc: execute_scenario(sc, out_dir), scenarios))


def run_batch(scenarios, out_dir, workers=1):
    """
    Run every scenario, then write summary.csv.

    Rows follow the input order whatever the execution order. Duplicate
    names are rejected before anything runs.
    """
    scenarios = list(scenarios)
    logger.info(f"Batch of {len(scenarios)} scenario(s) -> {out_dir} (workers={workers})")
    rows = _execute_all(scenarios, out_dir, workers)
    write_table_csv(rows, SUMMARY_COLUMNS, os.path.join(out_dir, "summary.csv"))
    return rows


def run_sweep(sweep, out_dir, workers=1):
    """One scenario per value; writes per-run files plus <base>.sweep.csv."""
    scenarios = expand_sweep(sweep)
    logger.info(f"Sweep {sweep.base.name} over {sweep.parameter}: {len(scenarios)} value(s)")
    rows = _execute_all(scenarios, out_dir, workers)
    for row, value in zip(rows, sweep.values):
        row[sweep.parameter] = _format_value(value, _is_integer_key(sweep.parameter))
    columns = ["name", sweep.parameter] + SWEEP_COLUMNS[1:]
    write_table_csv(rows, columns, os.path.join(out_dir, f"{sweep.base.name}.sweep.csv"))
    return rows


def exit_code(rows):
    """Highest exit code among the rows' statuses"""
    return max((STATUS_EXIT_CODES[row["status"]] for row in rows), default=EXIT_OK)


# --- Validation report ---

def check_scenario(scenario):
    """Existence-condition and perturbation-bound verdicts, as ordered (label, value) pairs."""
    plant = scenario.plant
    surface = scenario.surface
    amplitude = scenario.perturbation.amplitude
    verdicts = [("scenario", scenario.name), ("surface", surface.kind)]

    if isinstance(surface, control.Optimal):
        headroom = control.sliding_headroom(surface.alpha, plant.U)
        verdicts += [
            ("existence (alpha > 0.5)", "holds" if control.existence_condition(surface.alpha) else "fails"),
            ("expected regime", control.regime_for_alpha(surface.alpha)),
            ("Fuller class (0.25 <= alpha <= 0.5)", "yes" if control.in_fuller_class(surface.alpha) else "no"),
            ("sliding headroom U(1 - 1/(2 alpha))", fmt(headroom)),
            ("disturbance within headroom",
             "yes" if amplitude <= headroom else "no (sliding may be interrupted)"),
        ]
    else:
        classic = surface if isinstance(surface, control.Classic) else None
        if classic is not None:
            holds = control.classic_existence_condition(plant.U / plant.m, classic.beta)
            verdicts.append(("existence (beta^2 < 2 U/m)", "holds" if holds else "fails"))

    # Scenario construction already enforced the bound
    verdicts.append(("perturbation bound (|xi| < U)", f"holds ({fmt(amplitude)} < {fmt(plant.U)})"))
    return verdicts


def failure_message(rows) -> Optional[str]:
    failed = [r for r in rows if r["status"] != "ok"]
    if not failed:
        return None
    return "; ".join(f"{r['name']}: {r['status']}" for r in failed)
