"""Command line entry point: ``spinflow run | check | compare | info``.

Scenarios are INI files.  Every key is typed; unknown sections or keys are
errors, reported with their ``section.key`` path.  See ``scripts/*.ini`` and
the README for the schema.

Exit codes: 0 success, 1 check failure, 2 configuration error, 3 numerical halt.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import platform
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, checks
from .diagnostics import CSV_VERSION, record_classical, record_pauli, record_qa, write_records_csv
from .emfield import EMConfig, harmonic_trap, stern_gerlach, uniform_field
from .fieldkit import Constants, Grid, SnapshotError, fft_workers, integrate_volume, snapshot_read, snapshot_write
from .pauli import PauliState, StabilityError, initial_state, pauli_step, rk4_dt_limit
from .qa import ClassicalState, NumericalHalt, QAState, classical_limit_step, qa_step
from .spinor import angles_from_spinor, unit_vector

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_HALT = 0, 1, 2, 3


class ConfigError(ValueError):
    """Bad scenario file; ``key`` is the ``section.key`` path at fault."""

    def __init__(self, key, msg):
        super().__init__(f"{key}: {msg}")
        self.key = key


# ---------------------------------------------------------------- schema

def _float(text):
    v = float(text)
    if not np.isfinite(v) and text.strip().lower() not in ("inf", "+inf"):
        raise ValueError("not a finite number")
    return v


def _vector(n):
    def parse(text):
        parts = [p for p in text.replace(",", " ").split() if p]
        vals = [float(p) for p in parts]
        if len(vals) == 1 and n > 1:
            vals = vals * n
        if len(vals) != n:
            raise ValueError(f"expected {n} numbers, got {len(vals)}")
        return tuple(vals)
    return parse


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ValueError("expected yes/no")


def _choice(*options):
    def parse(text):
        t = text.strip().lower()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t
    return parse


def _int(text):
    return int(text)


# section -> key -> (parser, default); default None means optional with no value
SCHEMA = {
    "grid": {
        "n": (_vector(3), None),
        "half_width": (_vector(3), None),
        "offset": (_vector(3), (0.0, 0.0, 0.0)),
    },
    "constants": {
        "hbar": (_float, 1.0),
        "mass": (_float, 1.0),
        "charge": (_float, 1.0),
        "c": (_float, 1.0),
    },
    "initial": {
        "kind": (_choice("gaussian", "plane_wave", "vortex", "hopf_texture_weighted"), None),
        "center": (_vector(3), (0.0, 0.0, 0.0)),
        "sigma": (_vector(3), None),
        "k": (_vector(3), None),
        "spin": (_vector(2), None),
        "winding": (_int, None),
        "axis": (_int, None),
        "sigma_axis": (_float, None),
        "scale": (_float, None),
        "taper": (_vector(2), None),
    },
    "field": {
        "kind": (_choice("none", "uniform", "stern_gerlach", "harmonic", "zeeman"), "none"),
        "B0": (_float, 1.0),
        "b": (_float, 0.0),
        "B": (_vector(3), (0.0, 0.0, 1.0)),
        "omega": (_float, 1.0),
        "trap_axes": (_vector(3), (1.0, 1.0, 1.0)),
        "center": (_vector(3), (0.0, 0.0, 0.0)),
        "inner": (_float, 0.6),
        "outer": (_float, 0.9),
    },
    "solver": {
        "kind": (_choice("pauli", "qa", "classical"), None),
        "method": (_choice("auto", "strang", "rk4"), "auto"),
        "form": (_choice("auto", "potentials", "transport"), "auto"),
        "dt": (_float, None),
        "steps": (_int, None),
    },
    "output": {
        "dir": (str, "spinflow_run"),
        "every": (_int, 1),
        "snapshot_every": (_int, 0),
        "helicity": (_bool, False),
    },
}
REQUIRED = {("grid", "n"), ("grid", "half_width"), ("initial", "kind"), ("solver", "kind"),
            ("solver", "dt"), ("solver", "steps")}


@dataclass
class Scenario:
    """Parsed scenario: one dict of typed values per section."""

    sections: dict = field(default_factory=dict)
    source: str = ""

    def get(self, section, key):
        return self.sections[section][key]

    def echo(self):
        return {s: {k: (list(v) if isinstance(v, tuple) else v) for k, v in vals.items()}
                for s, vals in self.sections.items()}


def parse_config(text, source="<string>", overrides=None):
    """Parse and validate an INI scenario.  Raises :class:`ConfigError`."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError("<file>", str(err).splitlines()[0]) from None
    for path, value in (overrides or {}).items():
        sec, _, key = path.partition(".")
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, key, value)
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(sec, f"unknown section (known: {', '.join(SCHEMA)})")
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{sec}.{key}", "unknown key")
    out = {}
    for sec, keys in SCHEMA.items():
        out[sec] = {}
        for key, (parse, default) in keys.items():
            path = f"{sec}.{key}"
            if cp.has_option(sec, key):
                raw = cp.get(sec, key)
                try:
                    out[sec][key] = parse(raw)
                except ValueError as err:
                    raise ConfigError(path, f"cannot parse {raw!r} ({err})") from None
            elif (sec, key) in REQUIRED:
                raise ConfigError(path, "missing required key")
            elif default is not None:
                out[sec][key] = default
    sc = Scenario(out, source)
    _validate(sc)
    return sc


def load_config(path, overrides=None):
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError("<file>", f"cannot read {path}: {err.strerror}") from None
    return parse_config(text, str(path), overrides)


def _validate(sc: Scenario):
    n = sc.get("grid", "n")
    if any(v != int(v) or v < 4 for v in n):
        raise ConfigError("grid.n", "grid sizes must be integers >= 4")
    if min(sc.get("grid", "half_width")) <= 0:
        raise ConfigError("grid.half_width", "must be positive")
    for key in ("hbar", "mass", "c"):
        if sc.get("constants", key) <= 0:
            raise ConfigError(f"constants.{key}", "must be positive (the classical solver ignores hbar)")
    if sc.get("solver", "dt") <= 0:
        raise ConfigError("solver.dt", "must be positive")
    if sc.get("solver", "steps") < 0:
        raise ConfigError("solver.steps", "must be non-negative")
    if sc.get("output", "every") < 1:
        raise ConfigError("output.every", "must be at least 1")
    if sc.get("output", "snapshot_every") < 0:
        raise ConfigError("output.snapshot_every", "must be non-negative")
    f = sc.sections["field"]
    if not 0 < f["inner"] < f["outer"] <= 1:
        raise ConfigError("field.outer", "window needs 0 < inner < outer <= 1")


# ---------------------------------------------------------------- building blocks

def build_grid(sc: Scenario):
    dims = tuple(int(v) for v in sc.get("grid", "n"))
    return Grid.centered(dims, sc.get("grid", "half_width"), sc.get("grid", "offset"))


def build_constants(sc: Scenario):
    c = sc.sections["constants"]
    return Constants(hbar=c["hbar"], mass=c["mass"], charge=c["charge"], c=c["c"])


def build_field(sc: Scenario, grid: Grid, constants: Constants):
    f = sc.sections["field"]
    kind = f["kind"]
    win = dict(center=f["center"], inner=f["inner"], outer=f["outer"])
    if kind == "none":
        return EMConfig.none(grid)
    if kind == "uniform":
        return uniform_field(grid, f["B0"], **win)
    if kind == "stern_gerlach":
        return stern_gerlach(grid, f["B0"], f["b"], **win)
    if kind == "zeeman":
        return EMConfig.zeeman(grid, f["B"])
    axes = tuple(i for i, on in enumerate(f["trap_axes"]) if on)
    V = harmonic_trap(grid, f["omega"], constants.mass, f["center"], axes)
    return EMConfig.from_potentials(grid, V=V, label="harmonic")


def build_initial(sc: Scenario, grid: Grid, constants: Constants):
    params = {k: v for k, v in sc.sections["initial"].items() if k != "kind"}
    if "sigma" in params:
        sig = params["sigma"]
        params["sigma"] = sig[0] if len(set(sig)) == 1 else sig
    try:
        return initial_state(sc.get("initial", "kind"), grid, constants, **params)
    except ValueError as err:
        msg = str(err)
        key = "sigma" if "sigma" in msg else "k" if ("wavenumber" in msg or "plane-wave" in msg) else "kind"
        raise ConfigError(f"initial.{key}", str(err)) from None


def hydrodynamic_initial(sc: Scenario, grid: Grid, constants: Constants, psi):
    """QA potentials for the scenario's initial spinor.

    A Gaussian packet gets its smooth potentials directly (``S = hbar k.(q - c)``,
    uniform spin angles); read off the spinor, vacuum nodes would carry the
    placeholder S = 0.  S is used modulo pi hbar, which must be periodic.
    """
    if sc.get("initial", "kind") != "gaussian":
        return QAState.from_spinor(psi, grid, constants)
    ini = sc.sections["initial"]
    center = np.asarray(ini["center"]).reshape(3, 1, 1, 1)
    kvec = np.asarray(ini.get("k", (0.0, 0.0, 0.0))).reshape(3, 1, 1, 1)
    theta, phi = ini.get("spin", (0.0, 0.0))
    m = 2.0 * np.asarray(ini.get("k", (0.0, 0.0, 0.0))) * np.asarray(grid.lengths) / (2 * np.pi)
    if np.max(np.abs(m - np.round(m))) > 1e-6:
        raise ConfigError("initial.k", "hydrodynamic solvers need each k_i to be a multiple of pi / L_i "
                          "so that S is periodic modulo pi hbar")
    rho = np.sum(np.abs(psi) ** 2, axis=0)
    S = constants.hbar * np.sum(kvec * (grid.coords - center), axis=0)
    return QAState(grid, rho, S, np.full(grid.dims, float(theta)), np.full(grid.dims, float(phi)))


def _pauli_method(sc: Scenario, em: EMConfig, constants: Constants):
    method = sc.get("solver", "method")
    if method == "auto":
        method = "rk4" if em.has_vector_potential else "strang"
    if method == "strang" and em.has_vector_potential:
        raise ConfigError("solver.method", "strang needs a field without vector potential")
    if method == "rk4":
        limit = rk4_dt_limit(em, constants)
        if sc.get("solver", "dt") > limit:
            raise ConfigError("solver.dt", f"{sc.get('solver', 'dt'):.4g} exceeds the RK4 bound {limit:.4g}")
    return method


# ---------------------------------------------------------------- run

class _Runner:
    """Owns the state of one run and knows how to step, record and snapshot it."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.grid = build_grid(sc)
        self.k = build_constants(sc)
        self.em = build_field(sc, self.grid, self.k)
        self.kind = sc.get("solver", "kind")
        self.dt = sc.get("solver", "dt")
        self.helicity = sc.get("output", "helicity")
        psi = build_initial(sc, self.grid, self.k).psi
        if self.kind == "pauli":
            self.method = _pauli_method(sc, self.em, self.k)
            self.state = PauliState(self.grid, psi)
            self.cache = {}
        else:
            qa = hydrodynamic_initial(sc, self.grid, self.k, psi)
            if self.kind == "qa":
                self.form = sc.get("solver", "form")
                self.state = qa
            else:
                self.state = ClassicalState(self.grid, qa.rho, qa.S, qa.h(), 0.0, np.pi * self.k.hbar)

    def step(self):
        if self.kind == "pauli":
            self.state = pauli_step(self.state, self.em, self.dt, self.method, self.k, self.cache)
        elif self.kind == "qa":
            self.state = qa_step(self.state, self.em, self.dt, self.k, self.form)
        else:
            self.state = classical_limit_step(self.state, self.em, self.dt, self.k)

    def record(self):
        if self.kind == "pauli":
            return record_pauli(self.state, self.em, self.k, self.helicity)
        if self.kind == "qa":
            return record_qa(self.state, self.em, self.k, self.helicity)
        return record_classical(self.state, self.em, self.k)

    def fields(self):
        s = self.state
        if self.kind == "pauli":
            return {"psi": s.psi, "rho": s.rho}
        if self.kind == "qa":
            return {"rho": s.rho, "S": s.S, "theta": s.theta, "phi": s.phi}
        return {"rho": s.rho, "S": s.S, "h": s.h}


def _versions():
    return {"spinflow": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _tolerances():
    return {name: getattr(checks, name) for name in dir(checks) if name.startswith(("TOL_", "MIN_", "TIME_"))}


def run(sc: Scenario, out_dir=None, log=print):
    """Run a scenario; returns the exit code.  Outputs survive a numerical halt."""
    out = Path(out_dir or sc.get("output", "dir"))
    snaps = out / "snapshots"
    try:
        snaps.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ConfigError("output.dir", f"cannot create {out}: {err.strerror}") from None
    runner = _Runner(sc)
    every = sc.get("output", "every")
    snap_every = sc.get("output", "snapshot_every")
    steps = sc.get("solver", "steps")
    records, ticks = [], []
    status, halt = "completed", None

    def snapshot(n):
        name = f"step_{n:07d}.sfs"
        snapshot_write(snaps / name, runner.grid, runner.fields())
        ticks.append({"file": f"snapshots/{name}", "step": n, "time": runner.state.t})

    records.append(runner.record())
    snapshot(0)
    n = 0
    try:
        for n in range(1, steps + 1):
            runner.step()
            if n % every == 0:
                records.append(runner.record())
            if (snap_every and n % snap_every == 0) or n == steps:
                snapshot(n)
    except (NumericalHalt, StabilityError) as err:
        status = "halted"
        halt = {"reason": type(err).__name__, "message": str(err), "time": float(getattr(err, "time", np.nan)),
                "step": n}
        log(f"halted at t={halt['time']:.6g} (step {n}): {err}")
    write_records_csv(out / "diagnostics.csv", records,
                      [f"solver={runner.kind} dt={runner.dt!r} every={every}"])
    manifest = {
        "config": sc.echo(),
        "source": sc.source,
        "versions": _versions(),
        "threads": fft_workers(),
        "tolerances": _tolerances(),
        "csv_version": CSV_VERSION,
        "status": status,
        "halt": halt,
        "snapshots": ticks,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n")
    log(f"{status}: {len(records)} records, {len(ticks)} snapshots in {out}")
    return EXIT_HALT if halt else EXIT_OK


# ---------------------------------------------------------------- compare

def _derived(name, fields):
    """A named field from a snapshot, deriving rho and h when not stored.

    ``h`` of a spinor follows the angle convention on vacuum nodes, (0, 0, 1).
    """
    if name in fields:
        return fields[name]
    if name == "rho" and "psi" in fields:
        return np.sum(np.abs(fields["psi"]) ** 2, axis=0)
    if name == "h":
        if "psi" in fields:
            ang = angles_from_spinor(fields["psi"])
            return unit_vector(ang.theta, ang.phi)
        if "theta" in fields:
            return unit_vector(fields["theta"], fields["phi"])
    raise KeyError(name)


def _load_manifest(run_dir):
    path = Path(run_dir) / "manifest.json"
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(str(path), f"not a run directory ({err})") from None


def compare(dir_a, dir_b, fields=("rho", "h")):
    """Per-tick L2 and Linf distances between two runs; a list of row dicts."""
    ma, mb = _load_manifest(dir_a), _load_manifest(dir_b)
    steps_a = {t["step"]: t for t in ma["snapshots"]}
    steps_b = {t["step"]: t for t in mb["snapshots"]}
    common = sorted(set(steps_a) & set(steps_b))
    if not common:
        raise ValueError("runs share no snapshot ticks")
    rows = []
    for step in common:
        ga, fa = snapshot_read(Path(dir_a) / steps_a[step]["file"])
        gb, fb = snapshot_read(Path(dir_b) / steps_b[step]["file"])
        if ga.dims != gb.dims or not np.allclose(ga.spacing, gb.spacing) or not np.allclose(ga.origin, gb.origin):
            raise ValueError("runs use different grids")
        if abs(steps_a[step]["time"] - steps_b[step]["time"]) > 1e-12 * max(1.0, abs(steps_a[step]["time"])):
            raise ValueError(f"tick {step} is at different times in the two runs")
        for name in fields:
            try:
                a, b = _derived(name, fa), _derived(name, fb)
            except KeyError:
                raise ValueError(f"field {name!r} is not available in both runs") from None
            diff = np.abs(a - b)
            d2 = diff**2 if diff.ndim == 3 else np.sum(diff**2, axis=0)
            if name == "h":
                # a direction is meaningless in vacuum: weight by the density of run A
                # and the angle vacuum placeholder is skipped as well
                rho = _derived("rho", fa)
                w = np.where(rho > 1e-12 * rho.max(), rho, 0.0)
                l2 = np.sqrt(integrate_volume(w * d2, ga) / integrate_volume(w, ga))
                linf = np.max(np.sqrt(d2)[rho > 1e-6 * rho.max()])
            else:
                l2, linf = np.sqrt(integrate_volume(d2, ga)), np.max(diff)
            rows.append({"step": step, "time": steps_a[step]["time"], "field": name,
                         "l2": float(l2), "linf": float(linf)})
    return rows


def _write_rows(rows, fh):
    fh.write(f"# spinflow compare v{CSV_VERSION}\n")
    wr = csv.DictWriter(fh, fieldnames=["step", "time", "field", "l2", "linf"])
    wr.writeheader()
    for r in rows:
        wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


# ---------------------------------------------------------------- info

def info(path, log=print):
    p = Path(path)
    if p.is_dir():
        m = _load_manifest(p)
        log(f"run {p}: status={m['status']}, {len(m['snapshots'])} snapshots, versions {m['versions']}")
        if m["halt"]:
            log(f"  halt: {m['halt']['message']} at t={m['halt']['time']}")
        return
    grid, fields = snapshot_read(p)
    log(f"grid dims={grid.dims} spacing={tuple(round(s, 12) for s in grid.spacing)} "
        f"origin={tuple(round(o, 12) for o in grid.origin)}")
    for name, arr in fields.items():
        mag = np.abs(arr)
        log(f"  {name}: shape={arr.shape} dtype={arr.dtype} min|.|={mag.min():.6g} max|.|={mag.max():.6g}")


# ---------------------------------------------------------------- main

def _parser():
    ap = argparse.ArgumentParser(prog="spinflow", description="Pauli, QA and classical spin-fluid simulations.")
    ap.add_argument("--version", action="version", version=f"spinflow {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides output.dir)")
    r.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value")
    c = sub.add_parser("check", help="run an acceptance suite")
    c.add_argument("suite", nargs="?", default="all", choices=sorted(checks.SUITES))
    c.add_argument("--csv", help="also write the results to this CSV file")
    m = sub.add_parser("compare", help="distances between two runs")
    m.add_argument("dir_a")
    m.add_argument("dir_b")
    m.add_argument("--fields", default="rho,h", help="comma separated field names (default rho,h)")
    m.add_argument("--out", help="CSV path (default stdout)")
    i = sub.add_parser("info", help="describe a snapshot file or run directory")
    i.add_argument("path")
    return ap


def _overrides(items):
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(item, "override must look like section.key=value")
        out[key.strip()] = value.strip()
    return out


def main(argv=None):
    args = _parser().parse_args(argv)
    err = lambda msg: print(msg, file=sys.stderr)
    try:
        if args.command == "run":
            return run(load_config(args.config, _overrides(args.set)), args.out)
        if args.command == "check":
            report = checks.run_suite(args.suite, echo=lambda r: print(r.line(), flush=True))
            if args.csv:
                with open(args.csv, "w", newline="") as fh:
                    fh.write(f"# spinflow check v{CSV_VERSION} suite={args.suite}\n")
                    wr = csv.DictWriter(fh, fieldnames=list(asdict(report.results[0])))
                    wr.writeheader()
                    for r in report.results:
                        wr.writerow(asdict(r))
            failed = sum(not r.passed for r in report.results)
            print(f"{len(report.results) - failed}/{len(report.results)} checks passed")
            return EXIT_OK if report.passed else EXIT_FAIL
        if args.command == "compare":
            rows = compare(args.dir_a, args.dir_b, tuple(f.strip() for f in args.fields.split(",") if f.strip()))
            if args.out:
                with open(args.out, "w", newline="") as fh:
                    _write_rows(rows, fh)
            else:
                _write_rows(rows, sys.stdout)
            return EXIT_OK
        info(args.path)
        return EXIT_OK
    except ConfigError as e:
        err(f"config error: {e}")
        return EXIT_CONFIG
    except (ValueError, SnapshotError, OSError) as e:
        err(f"error: {e}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
