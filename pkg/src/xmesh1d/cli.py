"""
Command line front end
======================

    xmesh1d run <config> [--out DIR] [--svg]
    xmesh1d five-elem <config> [--out DIR]
    xmesh1d compare <dirA> <dirB> [--out DIR]

Configuration files hold one ``key = value`` pair per line; ``#`` starts a
comment. Recognised keys and their defaults:

    model        phase          phase | lip
    mesh         fixed          fixed | xmesh   (alias: mesh_mode)
    nc           5              elements per fully damaged width
    L lc E Gc sigc              material values (reference bar by default,
                                five-element bar in five-element mode)
    steps        200            load increments
    umax_factor  1.1            final elongation over wc
    zoom         none           none | default | lo,hi,n  (units of wc)
    out          xmesh1d_out    output directory
    svg          false          also write SVG plots
    five_elem    false          run the five-element study instead

``XMESH1D_OUT`` overrides the output directory of the file; ``--out``
overrides both.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import five_element as fe
from .mesh import PrevSnapshot, constraint_residuals
from .model import TABLE1, TABLE2, MaterialParams, ModelKind, derive, validity
from .quasistatic import MESH_MODES, History, LoadSchedule, run, xmesh_residuals
from .svg import LinePlot

ENV_OUT = "XMESH1D_OUT"
N_SNAPSHOTS = 10
FEAS_TOL = 1e-8

STEP_COLUMNS = ("step", "U", "sigma", "d0", "h0", "K", "Wd", "err2", "broken",
                "solver_status", "kkt_residual")
FIELD_COLUMNS = ("x", "u", "d")
RESIDUAL_COLUMNS = ("step", "U", "d0", "law", "max_hopti", "max_gradient_gap", "n_other",
                    "lam", "lam_ref")
STAGE_COLUMNS = ("U", "U_over_wc", "stage", "n_minima", "global_d0", "global_F", "interior_d0",
                 "interior_F")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class RunConfig:
    model: str = "phase"
    mesh_mode: str = "fixed"
    n_c: int = 5
    params: MaterialParams = TABLE1
    steps: int = 200
    umax_factor: float = 1.1
    zoom: tuple[float, float, int] | None = None
    out: str = "xmesh1d_out"
    emit_svg: bool = False
    five_elem: bool = False

    def schedule(self) -> LoadSchedule:
        return LoadSchedule(steps=self.steps, umax_factor=self.umax_factor, zoom=self.zoom)


_MATERIAL = tuple(f.name for f in fields(MaterialParams))
_KEYS = {"model", "mesh", "mesh_mode", "nc", "n_c", "steps", "umax_factor", "zoom", "out",
         "svg", "emit_svg", "five_elem"} | set(_MATERIAL)
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(v: str) -> bool:
    low = v.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _parse_zoom(v: str):
    low = v.lower()
    if low in ("", "none", "off"):
        return None
    if low == "default":
        return LoadSchedule.default(zoom=True).zoom
    parts = [p.strip() for p in v.split(",")]
    if len(parts) != 3:
        raise ValueError("zoom must be none, default or lo,hi,n")
    return float(parts[0]), float(parts[1]), int(parts[2])


def parse_config(text: str, five_elem: bool | None = None) -> RunConfig:
    """
    Parse ``key = value`` text into a validated :class:`RunConfig`.

    ``five_elem`` forces the study mode regardless of the file.

    Raises
    ------
    ConfigError
        With every syntax and semantic problem found, each tagged by line.
    """
    raw: dict[str, tuple[str, int]] = {}
    errors: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            errors.append(f"line {lineno}: expected key=value, got {body!r}")
            continue
        key, value = (p.strip() for p in body.split("=", 1))
        if key not in _KEYS:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        canon = {"mesh_mode": "mesh", "n_c": "nc", "emit_svg": "svg"}.get(key, key)
        if canon in raw:
            errors.append(f"line {lineno}: duplicate key {key!r} (first set on line {raw[canon][1]})")
            continue
        raw[canon] = (value, lineno)

    vals: dict = {}
    material: dict[str, float] = {}

    def conv(key, fn):
        if key not in raw:
            return
        value, lineno = raw[key]
        try:
            vals[key] = fn(value)
        except ValueError as exc:
            errors.append(f"line {lineno}: {key}: {exc}")

    conv("model", lambda v: ModelKind.parse(v).value)
    conv("mesh", lambda v: v.lower())
    conv("nc", int)
    conv("steps", int)
    conv("umax_factor", float)
    conv("zoom", _parse_zoom)
    conv("out", str)
    conv("svg", _parse_bool)
    conv("five_elem", _parse_bool)
    for name in _MATERIAL:
        if name in raw:
            value, lineno = raw[name]
            try:
                material[name] = float(value)
            except ValueError:
                errors.append(f"line {lineno}: {name}: expected a number, got {value!r}")

    # semantic checks, all collected before raising
    if "mesh" in vals and vals["mesh"] not in MESH_MODES:
        errors.append(f"mesh must be one of {', '.join(MESH_MODES)}, got {vals['mesh']!r}")
    if "nc" in vals and vals["nc"] < 1:
        errors.append("nc must be ≥ 1")
    if "steps" in vals and vals["steps"] < 1:
        errors.append("steps must be ≥ 1")
    if "umax_factor" in vals and not vals["umax_factor"] > 0:
        errors.append("umax_factor must be positive")
    for name, v in material.items():
        if not (math.isfinite(v) and v > 0):
            errors.append(f"{name} must be a positive finite number")
    if vals.get("zoom") is not None:
        lo, hi, n = vals["zoom"]
        if not (0 <= lo < hi) or n < 1:
            errors.append("zoom needs 0 <= lo < hi and n >= 1")
    if errors:
        raise ConfigError(errors)

    five = vals.get("five_elem", False) if five_elem is None else five_elem
    params = replace(TABLE2 if five else TABLE1, **material)
    cfg = RunConfig(
        model=vals.get("model", "phase"),
        mesh_mode=vals.get("mesh", "fixed"),
        n_c=vals.get("nc", 5),
        params=params,
        steps=vals.get("steps", 200),
        umax_factor=vals.get("umax_factor", 1.2 if five else 1.1),
        zoom=vals.get("zoom"),
        out=vals.get("out", "xmesh1d_out"),
        emit_svg=vals.get("svg", False),
        five_elem=five,
    )
    if not five:
        rep = validity(cfg.model, params)
        if not rep.ok:
            raise ConfigError([f"invalid bar configuration: {rep.describe()}"])
    elif abs(derive(params).gamma - 0.5) > 1e-12:
        raise ConfigError([f"five-element study needs gamma = 1/2, got {derive(params).gamma:.6g}"])
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def fmt(v) -> str:
    """17 significant digits for floats; integers and strings unchanged."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    return rows[0], rows[1:]


def snapshot_steps(n_rows: int, count: int = N_SNAPSHOTS) -> list[int]:
    """``count`` evenly spaced step numbers among ``1..n_rows``."""
    if n_rows <= count:
        return list(range(1, n_rows + 1))
    return sorted({int(round(v)) for v in np.linspace(1, n_rows, count)})


def _resolve_out(cfg: RunConfig, override: str | None) -> Path:
    if override:
        return Path(override)
    return Path(os.environ.get(ENV_OUT) or cfg.out)


class _Staging:
    """Write into a sibling temporary directory, move into place on success."""

    def __init__(self, target: Path):
        self.target = target

    def __enter__(self) -> Path:
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".xmesh1d-", dir=self.target.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        if self.target.exists():
            shutil.rmtree(self.target)
        os.replace(self.tmp, self.target)
        return False


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def check_snapshot(hist: History, k: int) -> None:
    """Re-validate one stored state against the feasibility report."""
    s = hist.steps[k]
    p = hist.steps[k - 1] if k > 0 else None
    prev = None
    if p is not None and np.any(p.d > 0.0) and hist.mode == "xmesh":
        prev = PrevSnapshot(p.x, p.d, p.h)
    rep = constraint_residuals(s.d, s.h, prev, hist.model, hist.params)
    if hist.mode == "fixed" and p is not None:
        rep.irr_current = p.d - s.d
    if not rep.feasible(FEAS_TOL, hist.params.L):
        raise RuntimeError(f"step {k}: stored state violates the constraints "
                           f"by {rep.max_violation(hist.params.L):.3e}")


def _step_rows(hist: History):
    for s in hist.steps[1:]:
        yield (s.step, s.U, s.sigma, s.d0, s.h0, s.K, s.Wd, s.err2, s.broken, s.status, s.kkt)


def _residual_rows(hist: History):
    p = hist.params
    for k, s in enumerate(hist.steps[1:], start=1):
        r = xmesh_residuals(s, hist.model, p, prev=hist.previous(k))
        hopti = r.hopti[np.isfinite(r.hopti)]
        gap = r.gradient_gap[np.isfinite(r.gradient_gap)]
        lam_ref = -0.5 * p.E * s.K ** 2 * (s.U / p.L) ** 2
        yield (s.step, s.U, s.d0, r.law, float(np.max(np.abs(hopti))) if hopti.size else 0.0,
               float(gap.max()) if gap.size else 0.0, r.n_other, s.lam, lam_ref)


def _plots(hist: History, out: Path, snaps: list[int]) -> None:
    tag = f"{hist.model.value} {hist.mode}, n_c={hist.n_c}"
    LinePlot(f"stress ({tag})", "U [m]", "sigma [Pa]").add(hist.U, hist.sigma).save(out / "sigma_U.svg")
    LinePlot(f"dissipated energy ({tag})", "U [m]", "Wd [J/m^2]").add(hist.U, hist.Wd) \
        .save(out / "Wd_U.svg")
    dplot = LinePlot(f"damage ({tag})", "x [m]", "d")
    uplot = LinePlot(f"displacement ({tag})", "x [m]", "u [m]")
    for k in snaps:
        x, u, d = hist.steps[k].full_fields()
        dplot.add(x, d, f"step {k}")
        uplot.add(x, u, f"step {k}")
    dplot.save(out / "d_x.svg")
    uplot.save(out / "u_x.svg")


def execute(cfg: RunConfig, out: str | None = None, svg: bool | None = None) -> int:
    """
    Run one configuration and write its artifacts.

    Returns 0 when every increment converged and 2 otherwise.
    """
    if cfg.five_elem:
        return execute_five_elem(cfg, out)
    emit_svg = cfg.emit_svg if svg is None else svg
    target = _resolve_out(cfg, out)
    hist = run(cfg.model, cfg.mesh_mode, cfg.params, cfg.n_c, cfg.schedule())
    n_rows = len(hist.steps) - 1
    snaps = snapshot_steps(n_rows)
    with _Staging(target) as tmp:
        write_csv(tmp / "steps.csv", STEP_COLUMNS, _step_rows(hist))
        for k in snaps:
            check_snapshot(hist, k)
            x, u, d = hist.steps[k].full_fields()
            write_csv(tmp / f"fields_{k}.csv", FIELD_COLUMNS, zip(x, u, d))
        if cfg.mesh_mode == "xmesh":
            write_csv(tmp / "residuals.csv", RESIDUAL_COLUMNS, _residual_rows(hist))
        if emit_svg:
            _plots(hist, tmp, snaps)
    return 0 if hist.all_converged else 2


def five_elem_rows(setup: fe.FiveElemSetup, U_values):
    wc = setup.wc
    for rep in fe.stage_sweep(U_values, setup):
        g = rep.global_min
        inner = min(rep.interior, key=lambda m: m.value) if rep.interior else None
        yield (rep.U, rep.U / wc, rep.stage, len(rep.minima), g.d0, g.value,
               inner.d0 if inner else float("nan"), inner.value if inner else float("nan"))


def execute_five_elem(cfg: RunConfig, out: str | None = None) -> int:
    """Stage sweep of the five-element study plus surface dumps per stage."""
    setup = fe.FiveElemSetup(cfg.params)
    target = _resolve_out(cfg, out)
    U_values = np.linspace(0.0, cfg.umax_factor * setup.wc, cfg.steps + 1)
    rows = list(five_elem_rows(setup, U_values))
    with _Staging(target) as tmp:
        write_csv(tmp / "stages.csv", STAGE_COLUMNS, rows)
        # one representative load per stage: the middle of its interval
        by_stage: dict[str, list[float]] = {}
        for r in rows:
            by_stage.setdefault(r[2], []).append(r[0])
        for label, Us in by_stage.items():
            U = Us[len(Us) // 2]
            fe.write_surface(tmp / f"surface_{label}.csv", U, setup)
            fe.write_profiles(tmp / f"profile_{label}.csv", U, setup)
        if cfg.emit_svg:
            plot = LinePlot("five-element reduced potential", "d0", "F [J/m^2]")
            d = np.linspace(0.0, 1.0, 401)
            for label, Us in by_stage.items():
                plot.add(d, fe.profile(d, Us[len(Us) // 2], setup), f"stage {label}")
            plot.save(tmp / "profiles.svg")
    return 0


@dataclass
class CompareReport:
    n_rows: int
    final_Wd: tuple[float, float]
    U_star: tuple[float | None, float | None]
    broken: tuple[bool, bool]
    max_sigma_gap: float
    max_err2_gap: float

    def lines(self) -> list[str]:
        def us(v):
            return "never" if v is None else fmt(v)
        return [
            f"rows: {self.n_rows}",
            f"final Wd: A={fmt(self.final_Wd[0])} B={fmt(self.final_Wd[1])}",
            f"broken: A={self.broken[0]} B={self.broken[1]}",
            f"U*: A={us(self.U_star[0])} B={us(self.U_star[1])}",
            f"max |sigma gap|: {fmt(self.max_sigma_gap)}",
            f"max |err2 gap|: {fmt(self.max_err2_gap)}",
        ]


def _load_steps(run_dir) -> dict[str, np.ndarray]:
    header, rows = read_csv(Path(run_dir) / "steps.csv")
    if tuple(header) != STEP_COLUMNS:
        raise ValueError(f"{run_dir}: unexpected steps.csv header")
    cols = list(zip(*rows)) if rows else [[] for _ in header]
    out = {}
    for name, col in zip(header, cols):
        out[name] = np.array(col, dtype=object if name == "solver_status" else float)
    return out


def compare(run_a, run_b, out: str | None = None) -> CompareReport:
    """
    Merge two completed runs with identical schedules.

    Writes ``compare.csv`` into ``out`` when given.
    """
    a, b = _load_steps(run_a), _load_steps(run_b)
    if a["U"].size != b["U"].size:
        raise ValueError(f"schedule mismatch: {a['U'].size} vs {b['U'].size} steps")
    if not np.allclose(a["U"], b["U"], rtol=1e-12, atol=0.0):
        raise ValueError("schedule mismatch: load values differ")

    def ustar(s):
        hit = np.flatnonzero(s["broken"] > 0)
        return float(s["U"][hit[0]]) if hit.size else None

    def gap(key):
        diff = np.abs(a[key] - b[key])
        diff = diff[np.isfinite(diff)]
        return float(diff.max()) if diff.size else 0.0

    rep = CompareReport(
        n_rows=int(a["U"].size),
        final_Wd=(float(a["Wd"][-1]), float(b["Wd"][-1])),
        U_star=(ustar(a), ustar(b)),
        broken=(bool(np.any(a["broken"] > 0)), bool(np.any(b["broken"] > 0))),
        max_sigma_gap=gap("sigma"),
        max_err2_gap=gap("err2"),
    )
    if out is not None:
        target = Path(out)
        with _Staging(target) as tmp:
            cols = ("step", "U", "sigma_a", "sigma_b", "d0_a", "d0_b", "Wd_a", "Wd_b",
                    "err2_a", "err2_b")
            rows = zip(a["step"].astype(int), a["U"], a["sigma"], b["sigma"], a["d0"], b["d0"],
                       a["Wd"], b["Wd"], a["err2"], b["err2"])
            write_csv(tmp / "compare.csv", cols, rows)
            (tmp / "summary.txt").write_text("\n".join(rep.lines()) + "\n")
    return rep


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="xmesh1d", description="Quasi-static damage runs on a 1D bar.")
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="quasi-static loading run")
    p_run.add_argument("config")
    p_run.add_argument("--out")
    p_run.add_argument("--svg", action="store_true", default=None)
    p_five = sub.add_parser("five-elem", help="five-element stage study")
    p_five.add_argument("config")
    p_five.add_argument("--out")
    p_five.add_argument("--svg", action="store_true", default=None)
    p_cmp = sub.add_parser("compare", help="merge two finished runs")
    p_cmp.add_argument("run_a")
    p_cmp.add_argument("run_b")
    p_cmp.add_argument("--out")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            rep = compare(args.run_a, args.run_b, args.out)
            print("\n".join(rep.lines()))
            return 0
        text = Path(args.config).read_text()
        if args.command == "five-elem":
            cfg = parse_config(text, five_elem=True)
            if args.svg:
                cfg = replace(cfg, emit_svg=True)
            return execute_five_elem(cfg, args.out)
        cfg = parse_config(text)
        return execute(cfg, args.out, args.svg)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
