"""Command-line entry point.

Exit codes: 0 success, 1 a check failed, 2 bad config or missing data,
3 integrator failure, 4 output directory not writable. Error lines on
stderr start with ``ERROR``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import dynamics as dyn
from . import experiments as ex
from .config import ConfigError, LoadedConfig, dump_defaults, load
from .correlations import TwoTimeResult
from .errors import DynBlockadeError, IntegratorFailure, TruncationWarning
from .fock_core import FockSpace, vacuum
from .observables import find_window_min, g2_equal, moments, validate_rate_law

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_INTEGRATOR, EXIT_OUTPUT = 0, 1, 2, 3, 4


class OutputDirError(DynBlockadeError):
    pass


class MissingDataError(DynBlockadeError):
    pass


def _err(message: str) -> None:
    print(f"ERROR {message}", file=sys.stderr)


# --- writers ------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_table(path: Path, columns: list[str], rows, header: dict[str, str]) -> None:
    """Comma-separated table with a ``#`` comment block; byte-stable for identical input."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in header.items():
            fh.write(f"# {key}: {value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_table(path) -> tuple[dict[str, str], list[str], np.ndarray]:
    header, lines = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                header[key.strip()] = value.strip()
            else:
                lines.append(line)
    reader = csv.reader(lines)
    columns = next(reader)
    data = np.array([[float(x) for x in row] for row in reader], dtype=float)
    return header, columns, data.reshape(-1, len(columns))


@dataclass
class RunManifest:
    name: str
    command: str
    config_sha256: str | None
    tolerances: dict
    dim: int | None
    files: list[str] = field(default_factory=list)
    checks: dict[str, bool] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    wall_time: float = 0.0
    started: str = ""

    def write(self, out_dir: Path) -> Path:
        doc = {
            "name": self.name,
            "command": self.command,
            "library_version": __version__,
            "config_sha256": self.config_sha256,
            "tolerances": self.tolerances,
            "dim": self.dim,
            "files": self.files,
            "checks": self.checks,
            "extra": self.extra,
            "wall_time_s": round(self.wall_time, 3),
            "started": self.started,
            "python": platform.python_version(),
        }
        path = out_dir / f"{self.name}.manifest.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _tolerances(rtol=dyn.RTOL, atol=dyn.ATOL) -> dict:
    return {"rtol": rtol, "atol": atol, "headroom": dyn.HEADROOM}


def _prepare_output(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OutputDirError(f"output directory {out} is not writable ({exc.strerror or exc})") from None
    return out


def _data_header(cfg: LoadedConfig | None, units: str) -> dict[str, str]:
    head = {"generator": f"dynblockade {__version__}"}
    if cfg is not None:
        head["config_sha256"] = cfg.sha256
        head["scenario"] = cfg.scenario.name
    head["units"] = units
    return head


def _apply_overrides(cfg: LoadedConfig, args) -> LoadedConfig:
    if getattr(args, "dim", None):
        cfg.scenario = cfg.scenario.with_(dim=args.dim)
        cfg.text += f"\n# override dim = {args.dim}\n"
    return cfg


def _load(args) -> LoadedConfig:
    return _apply_overrides(load(args.config), args)


# --- commands -----------------------------------------------------------------


def cmd_evolve(args) -> int:
    cfg = _load(args)
    out = _prepare_output(args.output)
    sc = cfg.scenario
    t0 = time.time()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TruncationWarning)
        traj = ex.run_scenario(sc)
    name = sc.name
    rows = zip(traj.t, traj.n, traj.psi.real, traj.psi.imag, traj.g2, traj.f, traj.drive.real, traj.pulse_flag)
    write_table(
        out / f"{name}.csv",
        ["t", "n", "re_psi", "im_psi", "g2", "f", "drive", "pulse"],
        rows,
        _data_header(cfg, "t in hbar/gamma; drive in gamma; pulse=1 marks post-pulse samples"),
    )
    t_s, g2_min, n_min = find_window_min(traj, sc.window())
    RunManifest(
        name=name,
        command="evolve",
        config_sha256=cfg.sha256,
        tolerances=_tolerances(),
        dim=sc.dim,
        files=[f"{name}.csv"],
        extra={
            "kind": sc.kind,
            "window": list(sc.window()),
            "t_s": t_s,
            "g2_ts": g2_min,
            "n_ts": n_min,
            "max_top_population": traj.max_top_population,
            "truncation_warning": bool(caught) or traj.truncation_warning,
        },
        wall_time=time.time() - t0,
        started=time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(t0)),
    ).write(out)
    print(f"wrote {out / (name + '.csv')} ({len(traj.t)} rows)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = _prepare_output(args.output)
    sc = cfg.scenario
    t0 = time.time()
    if "P0_grid" not in cfg.grids:
        raise ConfigError("sweep needs 'P0_grid'", None, args.config)
    if sc.kind == "colormap" or "alpha_grid" in cfg.grids:
        alphas = cfg.grids.get("alpha_grid", np.array([sc.alpha]))
        res = ex.run_fig3(alphas, cfg.grids["P0_grid"], base=sc, jobs=args.jobs, n_axis=cfg.grids.get("n_axis"))
    else:
        res = ex.run_fig2(cfg.grids["P0_grid"], base=sc, jobs=args.jobs)
        res.axes = {"alpha": np.array([sc.alpha]), "P0": res.axes["P0"]}
        for key in ("t_s", "g2_ts", "n_ts", "g0", "n0", "top_population", "converged"):
            setattr(res, key, getattr(res, key)[None, :])

    cols = ["alpha", "P0", "t_s", "n_ts", "g2_ts", "g0_conventional", "n_conventional", "converged"]
    rows = [[r[c] for c in cols] for r in res.rows()]
    files = [f"{sc.name}.csv"]
    head = _data_header(cfg, "alpha, P0 in gamma; t_s in hbar/gamma")
    write_table(out / files[0], cols, rows, head)
    if res.regridded:
        reg = res.regridded
        reg_rows = []
        for i, a in enumerate(res.axes["alpha"]):
            for j, n in enumerate(reg["n"]):
                reg_rows.append([a, n, reg["combined"][i, j], reg["continuous"][i, j]])
        files.append(f"{sc.name}.regrid.csv")
        write_table(out / files[1], ["alpha", "n", "g2_combined", "g2_continuous"], reg_rows, head)
    RunManifest(
        name=sc.name,
        command="sweep",
        config_sha256=cfg.sha256,
        tolerances=_tolerances(),
        dim=sc.dim,
        files=files,
        checks={"all_points_converged": bool(res.converged.all())},
        extra={"kind": sc.kind, "points": len(rows)},
        wall_time=time.time() - t0,
        started=time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(t0)),
    ).write(out)
    print(f"wrote {out / files[0]} ({len(rows)} rows)")
    return EXIT_OK


def cmd_two_time(args) -> int:
    cfg = _load(args)
    out = _prepare_output(args.output)
    sc = cfg.scenario
    t0 = time.time()
    res: TwoTimeResult = ex.run_two_time(sc)
    rows = zip(res.t, res.delay, res.g2, res.baseline)
    write_table(
        out / f"{sc.name}.csv",
        ["t", "tau", "g2", "g2_conventional"],
        rows,
        _data_header(cfg, f"t, tau in hbar/gamma; t_s = {res.t_s!r}"),
    )
    RunManifest(
        name=sc.name,
        command="two-time",
        config_sha256=cfg.sha256,
        tolerances=_tolerances(),
        dim=sc.dim,
        files=[f"{sc.name}.csv"],
        extra={"t_s": res.t_s, "g2_equal_ts": res.g2_equal_ts, "g0": res.baseline_g0, **res.meta},
        wall_time=time.time() - t0,
        started=time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(t0)),
    ).write(out)
    print(f"wrote {out / (sc.name + '.csv')} ({len(res.t)} rows)")
    return EXIT_OK


def cmd_steady(args) -> int:
    cfg = _load(args)
    out = _prepare_output(args.output)
    sc = cfg.scenario
    t0 = time.time()
    space = FockSpace(sc.dim)
    direct = dyn.steady_state_direct(space, sc.params, sc.P0)
    evolved = dyn.steady_state_by_evolution(space, sc.params, sc.P0)
    rows = []
    for label, rho in (("direct", direct), ("evolution", evolved)):
        n, psi, _, _ = moments(rho)
        rows.append([0 if label == "direct" else 1, n, psi.real, psi.imag, g2_equal(rho)])
    name = sc.name
    write_table(
        out / f"{name}.csv",
        ["method", "n", "re_psi", "im_psi", "g2"],
        rows,
        _data_header(cfg, "method 0 = null space, 1 = long-time evolution"),
    )
    dist = dyn.trace_distance(direct, evolved)
    RunManifest(
        name=name,
        command="steady",
        config_sha256=cfg.sha256,
        tolerances=_tolerances(),
        dim=sc.dim,
        files=[f"{name}.csv"],
        checks={"methods_agree": bool(dist < 1e-7)},
        extra={"trace_distance": dist},
        wall_time=time.time() - t0,
        started=time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(t0)),
    ).write(out)
    print(f"steady state n = {rows[0][1]:.10g}, g2 = {rows[0][4]:.10g}, trace distance between methods {dist:.3g}")
    return EXIT_OK


# --- verification suite -----------------------------------------------------------


def _vacuum(dim):
    return vacuum(FockSpace(dim))


def _check_rate_law(rtol, atol) -> tuple[bool, dict]:
    sc = ex.FIG1
    traj = dyn.evolve(_vacuum(sc.dim), sc.params, sc.schedule(), sc.t_end, sc.sample_dt, rtol=rtol, atol=atol)
    rep = validate_rate_law(traj)
    return rep.passed(1e-3), {"max_relative_error": rep.max_relative_error, "points": rep.n_points}


def _check_cycle(rtol, atol) -> tuple[bool, dict]:
    """Integrated rate law over one settled period.

    The reconstruction is anchored at the post-pulse g2, because a delta pulse
    on a non-coherent state makes g2 jump. The g0-anchored error is reported
    alongside but not gated on.
    """
    sc = ex.FIG1
    traj = dyn.evolve(_vacuum(sc.dim), sc.params, sc.schedule(), sc.t_end, sc.sample_dt, rtol=rtol, atol=atol)
    rep = ex.check_cycle_integral(traj, sc.warmup_periods)
    ok = rep.passed() and rep.cumulative_changes_sign
    return ok, {
        "normalized_residual": rep.normalized_residual,
        "end_error": rep.end_error,
        "reconstruction_error": rep.reconstruction_error,
        "reconstruction_error_from_g0": rep.literal_reconstruction_error,
        "pulse_jump": rep.pulse_jump,
        "cumulative_changes_sign": rep.cumulative_changes_sign,
    }


def _check_steady(rtol, atol) -> tuple[bool, dict]:
    worst = 0.0
    for alpha in (0.02, 1.0, 2.0):
        for P0 in (0.05, 0.5, 1.0):
            sc = ex.FIG3_MAP.with_(alpha=alpha, P0=P0)
            space = FockSpace(sc.dim)
            a = dyn.steady_state_direct(space, sc.params, P0)
            b = dyn.steady_state_by_evolution(space, sc.params, P0)
            worst = max(worst, dyn.trace_distance(a, b))
    return worst < 1e-7, {"max_trace_distance": worst}


def _check_convergence(rtol, atol) -> tuple[bool, dict]:
    rep = ex.convergence_ladder(ex.FIG1)
    return rep.passed, {"dims": list(rep.dims), "differences": [max(d.values()) for d in rep.differences]}


def _check_coherent(rtol, atol) -> tuple[bool, dict]:
    """Linear mode under the combined drive: the state stays a pure coherent state."""
    dev, purity = ex.linear_mode_check(ex.FIG1, rtol=rtol, atol=atol)
    return dev < 1e-6 and purity > 1 - 1e-8, {"max_g2_deviation": dev, "min_purity": purity}


CHECKS: dict[str, Callable] = {
    "rate-law": _check_rate_law,
    "cycle": _check_cycle,
    "steady": _check_steady,
    "convergence": _check_convergence,
    "coherent": _check_coherent,
}


def cmd_check(args) -> int:
    out = _prepare_output(args.output)
    names = args.only or list(CHECKS)
    rtol = args.rtol if args.rtol is not None else dyn.RTOL
    atol = args.atol if args.atol is not None else dyn.ATOL
    t0 = time.time()
    results, details = {}, {}
    for name in names:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            try:
                ok, info = CHECKS[name](rtol, atol)
            except IntegratorFailure as exc:
                ok, info = False, {"error": str(exc)}
        results[name] = bool(ok)
        details[name] = info
        print(f"{'PASS' if ok else 'FAIL'} {name} {json.dumps(info, sort_keys=True)}")
    report = {"checks": results, "details": details}
    (out / "check.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    RunManifest(
        name="check",
        command="check",
        config_sha256=None,
        tolerances=_tolerances(rtol, atol),
        dim=None,
        files=["check.json"],
        checks=results,
        wall_time=time.time() - t0,
        started=time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(t0)),
    ).write(out)
    failed = [n for n, ok in results.items() if not ok]
    if failed:
        _err(f"check failed: {', '.join(failed)}")
        return EXIT_CHECK
    return EXIT_OK


# --- plot scripts -------------------------------------------------------------


def _manifests(out: Path) -> list[dict]:
    docs = []
    for path in sorted(out.glob("*.manifest.json")):
        try:
            docs.append(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError):
            raise MissingDataError(f"unreadable manifest {path.name}") from None
    return docs


def _script_trace(files: list[str]) -> str:
    lines = [
        "set terminal pngcairo size 900,{h}".format(h=300 * len(files)),
        "set output 'traces.png'",
        "set datafile separator comma",
        f"set multiplot layout {len(files)},1",
        "set xlabel 't (hbar/gamma)'",
        "set ylabel 'g2(t,t)'",
    ]
    for f in files:
        lines.append(f"set title '{Path(f).stem}'")
        lines.append(f"plot '{f}' using 1:5 skip 0 with lines title 'g2', '' using 1:2 with lines axes x1y2 title 'n'")
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def _script_occupation(f: str) -> str:
    return "\n".join([
        "set terminal pngcairo size 700,500",
        f"set output '{Path(f).stem}.png'",
        "set datafile separator comma",
        "set logscale x",
        "set xlabel 'n'",
        "set ylabel 'g2'",
        f"plot '{f}' using 4:5 with points pt 7 title 'combined, g2(t_s,t_s)', \\",
        "     '' using 7:6 with points pt 5 title 'continuous, g2(0)'",
    ]) + "\n"


def _script_heatmap(f: str) -> str:
    return "\n".join([
        "set terminal pngcairo size 1000,450",
        f"set output '{Path(f).stem}.png'",
        "set datafile separator comma",
        "set logscale xy",
        "set xlabel 'n'",
        "set ylabel 'alpha (gamma)'",
        "set view map",
        "set multiplot layout 1,2",
        "set title 'combined drive'",
        f"splot '{f}' using 2:1:3 with points pt 5 palette notitle",
        "set title 'continuous drive'",
        f"splot '{f}' using 2:1:4 with points pt 5 palette notitle",
        "unset multiplot",
    ]) + "\n"


def _script_two_time(f: str) -> str:
    return "\n".join([
        "set terminal pngcairo size 700,500",
        f"set output '{Path(f).stem}.png'",
        "set datafile separator comma",
        "set xlabel 't - t_s (hbar/gamma)'",
        "set ylabel 'g2(t,t_s)'",
        f"plot '{f}' using 2:3 with lines title 'combined', '' using 2:4 with lines dt 2 title 'continuous'",
    ]) + "\n"


def cmd_plot_scripts(args) -> int:
    out = Path(args.output)
    if not out.is_dir():
        raise MissingDataError(f"no data directory {out}")
    docs = _manifests(out)
    if not docs:
        raise MissingDataError(f"no run manifests in {out}")
    missing = [f for d in docs for f in d["files"] if not (out / f).exists()]
    if missing:
        raise MissingDataError("missing data files: " + ", ".join(missing))
    if not os.access(out, os.W_OK):
        raise OutputDirError(f"output directory {out} is not writable")

    scripts: dict[str, str] = {}
    traces = [d["files"][0] for d in docs if d["command"] == "evolve"]
    if traces:
        scripts["traces.gp"] = _script_trace(traces)
    for d in docs:
        kind = d.get("extra", {}).get("kind")
        if d["command"] == "sweep":
            regrid = [f for f in d["files"] if f.endswith(".regrid.csv")]
            if kind == "colormap" and regrid:
                scripts[f"{d['name']}.gp"] = _script_heatmap(regrid[0])
            else:
                scripts[f"{d['name']}.gp"] = _script_occupation(d["files"][0])
        elif d["command"] == "two-time":
            scripts[f"{d['name']}.gp"] = _script_two_time(d["files"][0])
    if not scripts:
        raise MissingDataError("no plottable data (run evolve, sweep or two-time first)")
    for name, body in sorted(scripts.items()):
        (out / name).write_text(body, encoding="utf-8")
        print(f"wrote {out / name}")
    return EXIT_OK


# --- argument parsing -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="sweep worker processes (default: all cores)")
    common.add_argument("--dim", type=int, default=argparse.SUPPRESS, help="override the Fock-space dimension")
    common.add_argument("--seedless", action="store_true", default=argparse.SUPPRESS,
                        help="accepted for compatibility; nothing here is random")

    parser = argparse.ArgumentParser(prog="dynblockade", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--dump-defaults", metavar="NAME", help="print a preset config (fig1b, fig2, fig3, ...)")
    sub = parser.add_subparsers(dest="command")

    def with_config(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("config", help="scenario file")
        p.add_argument("-o", "--output", default="out", help="output directory (default: out)")
        p.set_defaults(func=func)
        return p

    with_config("evolve", cmd_evolve, "equal-time trajectory from the vacuum")
    with_config("sweep", cmd_sweep, "occupation sweep or (alpha, P0) colormap")
    with_config("two-time", cmd_two_time, "g2(t, t_s) around the window minimum")
    with_config("steady", cmd_steady, "steady state of the continuous drive, two methods")

    p = sub.add_parser("check", parents=[common], help="run the verification suite")
    p.add_argument("-o", "--output", default="out")
    p.add_argument("--only", action="append", choices=list(CHECKS), help="run only this check (repeatable)")
    p.add_argument("--rtol", type=float, help="integrator relative tolerance override")
    p.add_argument("--atol", type=float, help="integrator absolute tolerance override")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("plot-scripts", parents=[common], help="write gnuplot scripts for the emitted tables")
    p.add_argument("-o", "--output", default="out", help="directory holding the data files")
    p.set_defaults(func=cmd_plot_scripts)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.jobs = getattr(args, "jobs", None) or os.cpu_count() or 1
    args.dim = getattr(args, "dim", None)
    if args.dump_defaults:
        try:
            sys.stdout.write(dump_defaults(args.dump_defaults))
        except ConfigError as exc:
            _err(f"config: {exc.detail}")
            return EXIT_CONFIG
        return EXIT_OK
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(f"config {exc}")
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        _err(f"config {exc.filename}: file not found")
        return EXIT_CONFIG
    except MissingDataError as exc:
        _err(f"data {exc}")
        return EXIT_CONFIG
    except OutputDirError as exc:
        _err(f"output {exc}")
        return EXIT_OUTPUT
    except IntegratorFailure as exc:
        _err(f"integrator {exc}")
        return EXIT_INTEGRATOR
    except DynBlockadeError as exc:
        _err(f"run {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
