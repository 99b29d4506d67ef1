"""Experiment runner: reads an INI run configuration and writes CSV tables, SVG plots and a manifest.

Usage:
    python -m hdgml solve --config config/example1_p1_k50.ini --out runs/k50
    python -m hdgml lfa --config config/lfa_two_level.ini --out runs/lfa --threads 4
    python -m hdgml stability --config config/stability.ini --out runs/stability

Exit status: 0 on success, 1 for a malformed configuration or a failed run,
2 when PGMRES reached max_iter on some level.
"""

import argparse
import configparser
import hashlib
import json
import re
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import ValidationError

from hdgml.core.config import settings
from hdgml.core.exceptions import ConfigurationError, HDGError
from hdgml.core.logging import setup_logging
from hdgml.models.plan import SolveResult
from hdgml.models.system import LevelStack
from hdgml.schemas.run import (
    LfaConfig,
    MeshConfig,
    ProblemConfig,
    RunConfig,
    SolverConfig,
    StabilityConfig,
)
from hdgml.services.hdg import assemble_condensed, export_system, trace_error
from hdgml.services.lfa import (
    amplification_curves,
    sweep_smoother,
    sweep_three_level,
    sweep_two_level,
)
from hdgml.services.mesh import build_hierarchy_2d, export_mesh
from hdgml.services.multilevel import make_plan, pgmres_solve, stack_mesh_sizes
from hdgml.services.plotting import write_svg
from hdgml.services.problems import (
    BesselProblem,
    CaveConfig,
    PlaneWaveProblem,
    cave_subdomains,
    cells_for_ratio,
    coarsest_cells,
)
from hdgml.services.transfer import build_level_transfers, energy_stability_ratio

SECTIONS = {
    "run": RunConfig,
    "problem": ProblemConfig,
    "mesh": MeshConfig,
    "solver": SolverConfig,
    "lfa": LfaConfig,
    "stability": StabilityConfig,
}
RUN_KEYS = ("mode", "seed", "threads", "record_timing", "export_systems")
COMMAND_MODES = {
    "solve": ("solve",),
    "lfa": ("lfa-two-level", "lfa-three-level", "lfa-smoother", "lfa-gmres-experiment"),
    "stability": ("stability-check",),
}
TABLE_COLUMNS = ["level", "dofs", "iter", "seconds"]

_KEY = re.compile(r"^\s*([^=:\s][^=:]*?)\s*[=:]")


def _key_lines(text: str) -> Dict[Tuple[str, Optional[str]], int]:
    """(section, key) -> 1-based line number; key None marks the section header"""
    lines: Dict[Tuple[str, Optional[str]], int] = {}
    section = None
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip().lower()
            lines.setdefault((section, None), number)
            continue
        match = _KEY.match(raw)
        if section is not None and match:
            lines.setdefault((section, match.group(1).strip().lower()), number)
    return lines


def _error_line(loc: Sequence, lines: Dict[Tuple[str, Optional[str]], int]) -> Optional[int]:
    if not loc:
        return lines.get(("run", None))
    head = str(loc[0])
    if head in SECTIONS and head != "run":
        if len(loc) > 1:
            return lines.get((head, str(loc[1]))) or lines.get((head, None))
        return lines.get((head, None))
    return lines.get(("run", head)) or lines.get(("run", None))


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse an INI run configuration; every error carries the offending line when known"""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        line = getattr(e, "lineno", None)
        if line is None and getattr(e, "errors", None):
            line = e.errors[0][0]
        raise ConfigurationError(f"malformed configuration: {e.message.splitlines()[0]}", line=line)

    lines = _key_lines(text)
    data: Dict[str, Union[str, Dict[str, str]]] = {}
    for section in parser.sections():
        name = section.strip().lower()
        if name not in SECTIONS:
            raise ConfigurationError(
                f"unknown section [{section}]; expected one of {sorted(SECTIONS)}",
                line=lines.get((name, None)),
            )
        allowed = RUN_KEYS if name == "run" else tuple(SECTIONS[name].model_fields)
        values = {key: value for key, value in parser.items(section)}
        for key in values:
            if key not in allowed:
                raise ConfigurationError(f"unknown key {key!r} in [{section}]", line=lines.get((name, key)))
        if name == "run":
            data.update(values)
        else:
            data[name] = values

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        loc = tuple(str(part) for part in error["loc"])
        where = ".".join(loc) or "config"
        raise ConfigurationError(f"{where}: {error['msg']}", line=_error_line(loc, lines))


def load_config(path: Union[str, Path]) -> Tuple[RunConfig, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e.strerror}")
    return parse_config(text, source=str(path)), text


def emit_table(results: Sequence[SolveResult], record_timing: bool = True) -> str:
    """CSV with header level,dofs,iter,seconds, one row per result ordered by (level, dofs)"""
    if not results:
        raise ConfigurationError("emit_table needs at least one result row")
    rows = sorted(
        (
            {
                "level": int(result.level) if result.level is not None else 0,
                "dofs": int(result.n_dofs),
                "iter": int(result.iterations),
                "seconds": f"{result.seconds:.3f}" if record_timing else "",
            }
            for result in results
        ),
        key=lambda row: (row["level"], row["dofs"]),
    )
    return pd.DataFrame(rows, columns=TABLE_COLUMNS).to_csv(index=False, lineterminator="\n")


class ArtifactWriter:
    """Writes run outputs below one directory and remembers them for the manifest"""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.files: List[Path] = []

    def _track(self, path: Path) -> Path:
        if path not in self.files:
            self.files.append(path)
        return path

    def text(self, name: str, content: str) -> Path:
        path = self.out_dir / name
        path.write_text(content)
        return self._track(path)

    def frame(self, name: str, frame: pd.DataFrame) -> Path:
        return self.text(name, frame.to_csv(index=False, lineterminator="\n"))

    def svg(self, name: str, series, log_y: bool = False, **labels) -> Path:
        return self._track(write_svg(self.out_dir / name, series, log_y=log_y, **labels))

    def directory(self, path: Path):
        for item in sorted(path.rglob("*")):
            if item.is_file():
                self._track(item)

    def manifest(self, config: RunConfig, config_text: str, status: int) -> Path:
        payload = {
            "mode": config.mode,
            "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
            "seed": config.seed,
            "threads": config.threads,
            "version": settings.VERSION,
            "status": status,
            "files": sorted(p.relative_to(self.out_dir).as_posix() for p in self.files),
        }
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path


def build_problem(config: RunConfig):
    """Mixed-form problem of the run together with the cave layout (None for other kinds)"""
    problem = config.problem
    box = tuple(config.mesh.box)
    if problem.kind == "bessel":
        return BesselProblem(problem.kappa, box=box).to_mixed_form(), None
    if problem.kind == "plane-wave":
        return PlaneWaveProblem(problem.kappa, tuple(problem.direction), box=box).to_mixed_form(), None
    cave = CaveConfig(
        kappa3=problem.kappa,
        q1=problem.q1,
        q2=problem.q2,
        middle=tuple(problem.middle),
        inner=tuple(problem.inner),
        box=box,
    )
    return cave.to_mixed_form(), cave


def coarse_cells(config: RunConfig, kappa_max: float) -> int:
    """n0 from the config: explicit, from a kappa h0 / p ratio, or the power-of-two default"""
    mesh = config.mesh
    side = mesh.box[1] - mesh.box[0]
    if mesh.n0:
        return mesh.n0
    if mesh.coarse_ratio is not None:
        return cells_for_ratio(kappa_max, config.problem.p, mesh.coarse_ratio, side=side)
    return coarsest_cells(kappa_max, config.problem.p, side=side)


def _run_solve(config: RunConfig, writer: ArtifactWriter) -> int:
    problem, cave = build_problem(config)
    p = config.problem.p
    box = config.mesh.box
    n0 = coarse_cells(config, problem.kappa_max)
    counts = sorted(set(config.mesh.levels))
    hierarchy = build_hierarchy_2d(n0, counts[-1], box)
    if cave is not None:
        cave_subdomains(cave, hierarchy.coarsest)
    systems = [assemble_condensed(mesh, problem, p, level=level) for level, mesh in enumerate(hierarchy.meshes)]
    if config.export_systems:
        for system in systems:
            export_system(system, writer.out_dir / "systems")
        for mesh in hierarchy.meshes:
            export_mesh(mesh, writer.out_dir / "systems" / f"mesh_{mesh.level}.txt")
        writer.directory(writer.out_dir / "systems")

    results = []
    for count in counts:
        subset = systems[:count]
        stack = LevelStack(systems=subset, transfers=build_level_transfers(subset, config.solver.transfer_mode))
        plan = make_plan(config.solver, problem.kappa_max, p, stack_mesh_sizes(stack))
        result = pgmres_solve(stack, plan, tol=config.solver.tol, max_iter=config.solver.max_iter)
        results.append(result)
        if problem.exact is not None:
            error = trace_error(stack.finest, result.solution, problem.exact)
            logger.info(f"Level {result.level}: trace error {error:.3e}")
        relative = np.asarray(result.history)
        history = pd.DataFrame(
            {
                "step": np.arange(relative.size),
                "residual": relative * result.initial_residual,
                "relative_residual": relative,
            }
        )
        writer.frame(f"residuals_{result.level}.csv", history)
        writer.svg(
            f"residuals_{result.level}.svg",
            {f"level {result.level}": (history.step, history.relative_residual)},
            log_y=True,
            title=f"PGMRES, {result.n_dofs} dofs",
            xlabel="step",
            ylabel="relative residual",
        )

    writer.text("summary.csv", emit_table(results, record_timing=config.record_timing))
    failed = [r.level for r in results if not r.converged]
    if failed:
        logger.warning(f"PGMRES reached max_iter={config.solver.max_iter} on levels {failed}")
        return 2
    return 0


def _max_rho(frame: pd.DataFrame, column: str = "rho") -> float:
    finite = frame.loc[~frame.resonant, column] if "resonant" in frame else frame[column]
    return float(finite.max()) if len(finite) else float("nan")


def _run_lfa(config: RunConfig, writer: ArtifactWriter) -> int:
    lfa = config.lfa
    rows = []
    if config.mode == "lfa-gmres-experiment":
        curves = amplification_curves(
            lfa.kappa, lfa.h, tuple(lfa.domain), lfa.steps, lfa.samples, lfa.omega, lfa.norm
        )
        writer.frame("lfa_amplification.csv", curves)
        writer.svg(
            "lfa_amplification.svg",
            {name: (curves.theta, curves[name]) for name in ("jacobi", "gauss_seidel", "gmres")},
            title=f"one smoothing step, kappa={lfa.kappa:g}, h={lfa.h:g}",
            xlabel="theta",
            ylabel="amplification",
        )
        dominated = (curves.gmres <= curves.jacobi) & (curves.gmres <= curves.gauss_seidel)
        rows.append(
            {
                "kappa": lfa.kappa,
                "h": lfa.h,
                "max_gmres": float(curves.gmres.max()),
                "gmres_dominates": float(dominated.mean()),
            }
        )
    sweeps = [] if config.mode == "lfa-gmres-experiment" else lfa.t
    for t in sweeps:
        tag = f"t{t:g}"
        if config.mode == "lfa-two-level":
            frame = sweep_two_level(
                t,
                lfa.samples,
                config.threads,
                smoother=lfa.smoother,
                omega=lfa.omega,
                mu0=lfa.mu[0],
                mu1=lfa.mu[1],
                restriction=lfa.restriction,
            )
            writer.frame(f"lfa_two_level_{tag}.csv", frame)
            series = {"rho(M2)": (frame.theta, frame.rho)}
            rows.append({"t": t, "max_rho": _max_rho(frame), "resonant": int(frame.resonant.sum())})
            name = f"lfa_two_level_{tag}.svg"
        elif config.mode == "lfa-three-level":
            three = sweep_three_level(
                t,
                lfa.samples,
                config.threads,
                smoother=lfa.smoother,
                omega=lfa.omega,
                mu=tuple(lfa.mu[:3]),
                restriction=lfa.restriction,
            )
            two = sweep_two_level(
                t,
                lfa.samples,
                config.threads,
                smoother=lfa.smoother,
                omega=lfa.omega,
                mu0=lfa.mu[1],
                mu1=lfa.mu[2],
                restriction=lfa.restriction,
            )
            frame = pd.DataFrame(
                {
                    "theta": three.theta,
                    "rho_three_level": three.rho,
                    "rho_two_level": two.rho,
                    "resonant": three.resonant | two.resonant,
                }
            )
            writer.frame(f"lfa_three_level_{tag}.csv", frame)
            series = {
                "rho(M3)": (frame.theta, frame.rho_three_level),
                "rho(M2)": (frame.theta, frame.rho_two_level),
            }
            rows.append(
                {
                    "t": t,
                    "max_rho_three_level": _max_rho(frame, "rho_three_level"),
                    "max_rho_two_level": _max_rho(frame, "rho_two_level"),
                    "resonant": int(frame.resonant.sum()),
                }
            )
            name = f"lfa_three_level_{tag}.svg"
        else:
            frame = sweep_smoother(t, lfa.samples, lfa.omega)
            writer.frame(f"lfa_smoother_{tag}.csv", frame)
            series = {"jacobi": (frame.theta, frame.jacobi), "gauss-seidel": (frame.theta, frame.gauss_seidel)}
            high = np.abs(frame.theta) >= np.pi / 2
            rows.append(
                {
                    "t": t,
                    "smoothing_jacobi": float(frame.jacobi[high].max()),
                    "smoothing_gauss_seidel": float(frame.gauss_seidel[high].max()),
                }
            )
            name = f"lfa_smoother_{tag}.svg"
        writer.svg(name, series, title=f"{config.mode}, t={t:g}", xlabel="theta", ylabel="modulus")
    writer.frame("lfa_summary.csv", pd.DataFrame(rows))
    return 0


def _run_stability(config: RunConfig, writer: ArtifactWriter) -> int:
    stability = config.stability
    rows = []
    for p in stability.p:
        for n0 in stability.n0:
            hierarchy = build_hierarchy_2d(n0, stability.gap + 1, config.mesh.box)
            result = energy_stability_ratio(
                hierarchy, 0, p, stability.trials, config.seed, stability.power_iterations
            )
            rows.append(
                {
                    "p": p,
                    "n0": n0,
                    "gap": stability.gap,
                    "trial_ratio": result.trial_ratio,
                    "power_ratio": result.power_ratio,
                    "iterations": result.iterations,
                }
            )
    writer.frame("stability.csv", pd.DataFrame(rows))
    return 0


RUNNERS = {
    "solve": _run_solve,
    "lfa-two-level": _run_lfa,
    "lfa-three-level": _run_lfa,
    "lfa-smoother": _run_lfa,
    "lfa-gmres-experiment": _run_lfa,
    "stability-check": _run_stability,
}


def run(config: RunConfig, out_dir: Union[str, Path], config_text: Optional[str] = None) -> int:
    """Execute one run and write its artifacts plus manifest.json; returns the exit status"""
    writer = ArtifactWriter(out_dir)
    config_text = config.model_dump_json() if config_text is None else config_text
    logger.info(f"Run {config.mode} -> {writer.out_dir} (seed {config.seed}, {config.threads} threads)")
    try:
        status = RUNNERS[config.mode](config, writer)
    except HDGError as e:
        logger.error(f"{config.mode} failed: {e}")
        status = 1
    writer.manifest(config, config_text, status)
    logger.info(f"Finished {config.mode} with status {status}, {len(writer.files)} files")
    return status


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="hdgml",
        description="Multilevel HDG Helmholtz experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s solve --config config/example1_p1_k50.ini --out runs/k50
  %(prog)s lfa --config config/lfa_two_level.ini --out runs/lfa --threads 4
  %(prog)s stability --config config/stability.ini --out runs/stability --seed 7
        """,
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name in COMMAND_MODES:
        command = commands.add_parser(name, help=f"modes: {', '.join(COMMAND_MODES[name])}")
        command.add_argument("--config", type=Path, required=True, help="INI run configuration")
        command.add_argument("--out", type=Path, required=True, help="Output directory")
        command.add_argument("--seed", type=int, help="Override the random seed")
        command.add_argument("--threads", type=int, help="Override the worker thread count")
        command.add_argument("--verbose", action="store_true", help="Enable debug logging")
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_arguments(argv)
    setup_logging(args.out / "run.log", level="DEBUG" if args.verbose else None)
    try:
        config, text = load_config(args.config)
        overrides = {
            key: value for key, value in (("seed", args.seed), ("threads", args.threads)) if value is not None
        }
        if overrides:
            try:
                config = RunConfig.model_validate({**config.model_dump(), **overrides})
            except ValidationError as e:
                raise ConfigurationError(f"command line: {e.errors()[0]['msg']}")
        if config.mode not in COMMAND_MODES[args.command]:
            raise ConfigurationError(
                f"mode {config.mode!r} does not belong to '{args.command}' "
                f"(expected one of {', '.join(COMMAND_MODES[args.command])})",
                line=_key_lines(text).get(("run", "mode")),
            )
    except ConfigurationError as e:
        logger.error(f"{args.config}: {e}")
        return 1
    return run(config, args.out, config_text=text)


if __name__ == "__main__":
    sys.exit(main())
