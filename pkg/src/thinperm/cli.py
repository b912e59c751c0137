"""Configuration-driven batch entry point.

Commands: cell, darcy, micro, converge, analyze, pipeline.  Configurations
are JSON documents validated against the published schema; outputs are
deterministic JSON/CSV reports (no wall-clock data) plus optional VTK
fields.  The pipeline caches per-stage content hashes, so a rerun with an
unchanged configuration performs no re-solve.
"""
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import click
import jsonschema
import numpy as np

from . import analysis as analysis_mod
from . import micro as micro_mod
from .cells import (
    RegimeDescriptor,
    TangentUnit,
    assemble_effective_law,
    solve_cell_suite,
)
from .darcy import MacroData, sigma_mesh, solve_darcy
from .errors import ComputeFailed, ConfigInvalid, ThinPermError
from .geometry import CellGeometry, LayerGeometry
from .meshing import build_cell_mesh, build_layer_mesh, check_assumption_A4
from .reports import config_hash, write_csv, write_json
from .vtk import field_point_data, write_vtk

logger = logging.getLogger("thinperm")

COMMANDS = ("cell", "darcy", "micro", "converge", "analyze", "pipeline")

_DEFAULTS = {
    "regime": {"alpha": 0.0, "gamma": None},
    "data": {"mu": 1.0},
    "discretization": {"h_cell": 1 / 32, "eps_list": [0.25, 0.125, 0.0625], "sigma_elements": 64},
    "analysis": {"korn_mesh_sizes": [1 / 8, 1 / 16], "restriction_eps": [0.25, 0.125], "restriction_fields": 8},
    "outputs": {"directory": "out", "formats": ["json", "csv"]},
}


def load_schema():
    with resources.files("thinperm").joinpath("config_schema.json").open() as fh:
        return json.load(fh)


def validate_config(cfg):
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        raise ConfigInvalid(f"configuration violates schema: {exc.message}")
    merged = {}
    for key, defaults in _DEFAULTS.items():
        merged[key] = {**defaults, **cfg.get(key, {})}
    merged["geometry"] = dict(cfg["geometry"])
    return merged


def scalar_expr(cfg):
    if cfg is None:
        cfg = {"name": "zero"}
    name = cfg["name"]
    if name == "zero":
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    if name == "constant":
        v = float(cfg["value"])
        return lambda x: np.full_like(np.asarray(x, dtype=float), v)
    if name == "linear":
        c, s = float(cfg.get("const", 0.0)), float(cfg.get("slope", 1.0))
        return lambda x: c + s * np.asarray(x, dtype=float)
    if name == "sin":
        a = float(cfg.get("amplitude", 1.0))
        k = float(cfg.get("cycles", 1.0))
        ph = float(cfg.get("phase", 0.0))
        return lambda x: a * np.sin(2 * np.pi * k * np.asarray(x, dtype=float) + ph)
    raise ConfigInvalid(f"unknown scalar expression {name!r}")


def vector_expr(cfg):
    if cfg is None:
        cfg = {"name": "zero"}
    name = cfg["name"]
    if name == "zero":
        return lambda x: np.zeros((len(np.atleast_1d(x)), 2))
    if name == "constant":
        vec = np.asarray(cfg["value"], dtype=float)
        return lambda x: np.broadcast_to(vec, (len(np.atleast_1d(x)), 2)).copy()
    if name == "components":
        fx, fy = scalar_expr(cfg.get("x")), scalar_expr(cfg.get("y"))
        return lambda x: np.column_stack([fx(np.atleast_1d(x)), fy(np.atleast_1d(x))])
    raise ConfigInvalid(f"unknown vector expression {name!r}")


def boundary_expr(cfg):
    if cfg is None or cfg["name"] == "zero":
        return None
    if cfg["name"] == "tangent_unit":
        return TangentUnit(scale=float(cfg.get("scale", 1.0)))
    if cfg["name"] == "constant":
        vec = np.asarray(cfg["value"], dtype=float)
        return lambda pts: np.broadcast_to(vec, (len(np.atleast_2d(pts)), 2)).copy()
    raise ConfigInvalid(f"unknown boundary expression {cfg['name']!r}")


def geometry_from_config(gcfg) -> CellGeometry:
    shape = gcfg["solid_shape"]
    if isinstance(shape, str):
        shape = {"type": shape, **gcfg.get("params", {})}
    return CellGeometry.from_config({"dim": gcfg.get("dim", 2), "solid_shape": shape})


class Runner:
    """Executes commands against a validated configuration."""

    def __init__(self, cfg, out_dir, seed=0, jobs=1):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.jobs = jobs
        self.formats = cfg["outputs"]["formats"]
        self._cell_cache = None

    # -------------------------------------------------------------- data
    def geometry(self):
        return geometry_from_config(self.cfg["geometry"])

    def regime_params(self):
        r = self.cfg["regime"]
        if r["alpha"] == 0 and r.get("gamma") is not None:
            logger.warning("alpha = 0: gamma is ignored")
        return r["alpha"], r.get("gamma")

    def macro_data(self):
        d = self.cfg["data"]
        return MacroData(
            mu=d.get("mu", 1.0),
            f0=vector_expr(d.get("f0")),
            g_sigma=scalar_expr(d.get("g_sigma")),
            p_b_sigma1=scalar_expr(d.get("p_b_sigma1")),
            p_b=scalar_expr(d.get("p_b")),
        )

    def _etag(self, *sections):
        return config_hash([self.cfg.get(s) or _DEFAULTS.get(s, {}) for s in sections] + [self.seed])

    # ------------------------------------------------------------- stages
    def stage_cell(self):
        geom = self.geometry()
        alpha, gamma = self.regime_params()
        h = self.cfg["discretization"]["h_cell"]
        mesh = build_cell_mesh(geom, h)
        a4 = check_assumption_A4(mesh)
        regime = RegimeDescriptor.from_parameters(alpha, gamma, sn_empty=geom.sn_empty)
        d = self.cfg["data"]
        suite = solve_cell_suite(
            mesh,
            regime,
            g_gamma_d=boundary_expr(d.get("g_gamma_d")),
            p_b_n=scalar_expr(d.get("p_b_n")) if d.get("p_b_n") else None,
        )
        law = assemble_effective_law(suite)
        report = law.to_dict()
        report["a4"] = {
            "moment_matrix": a4.moment_matrix.tolist(),
            "rank": a4.rank,
            "satisfied": a4.satisfied,
        }
        report["k_ratio_report"] = {
            "max_abs_gap_2k_energy_vs_k_avg": law.identity_gap,
            "laplace_error": suite.laplace_error,
        }
        report["etag"] = self._etag("geometry", "regime", "data", "discretization")
        write_json(self.out / "effective_law.json", report)
        if "vtk" in self.formats:
            names = [("w1", suite.w[0]), ("w2", suite.w[1]), ("w_gamma", suite.w_gamma)]
            if suite.w_n is not None:
                names.append(("w_n", suite.w_n))
            for name, fld in names:
                write_vtk(self.out / f"cell_{name}.vtk", mesh, field_point_data(fld))
        self._cell_cache = (mesh, suite, law)
        return report

    def _cells(self):
        if self._cell_cache is None:
            self.stage_cell()
        return self._cell_cache

    def stage_darcy(self):
        mesh, suite, law = self._cells()
        macro = self.macro_data()
        nodes = sigma_mesh(
            self.cfg["geometry"].get("sigma_lengths", [1])[0],
            self.cfg["discretization"]["sigma_elements"],
        )
        sol = solve_darcy(law, macro, nodes)
        report = sol.summary()
        report["etag"] = self._etag("geometry", "regime", "data", "discretization")
        write_json(self.out / "darcy.json", report)
        if "csv" in self.formats:
            write_csv(self.out / "darcy.csv", ["x", "p0", "u_bar_1", "u_bar_2"], sol.rows())
        return report

    def stage_micro(self):
        geom = self.geometry()
        alpha, gamma = self.regime_params()
        eps = self.cfg["geometry"].get("eps", 0.25)
        h_cell = self.cfg["discretization"]["h_cell"]
        layer = LayerGeometry(
            cell=geom, eps=eps, sigma_lengths=tuple(self.cfg["geometry"].get("sigma_lengths", [1]))
        )
        macro = self.macro_data()
        d = self.cfg["data"]
        data = micro_mod.MicroData.from_macro(
            eps, macro, alpha=alpha, gamma=gamma or 0.0, g_gamma_d=boundary_expr(d.get("g_gamma_d"))
        )
        mesh = build_layer_mesh(layer, eps * h_cell)
        fld = micro_mod.solve_micro(layer, data, eps * h_cell, mesh=mesh)
        report = {"eps": eps, "residual": fld.residual}
        report.update(micro_mod.micro_norms(fld, data))
        ext = micro_mod.extend_pressure(fld, layer, p_b=macro.p_b)
        report["p_ext"] = ext.norm_total
        report["etag"] = self._etag("geometry", "regime", "data", "discretization")
        write_json(self.out / "micro.json", report)
        if "vtk" in self.formats:
            write_vtk(self.out / f"micro_eps{round(1 / eps)}.vtk", mesh, field_point_data(fld))
        return report

    def stage_converge(self):
        geom = self.geometry()
        alpha, gamma = self.regime_params()
        d = self.cfg["data"]
        result = micro_mod.run_sweep(
            geom,
            self.macro_data(),
            eps_list=self.cfg["discretization"]["eps_list"],
            h_cell=self.cfg["discretization"]["h_cell"],
            alpha=alpha,
            gamma=gamma,
            g_gamma_d=boundary_expr(d.get("g_gamma_d")),
            p_b_n=scalar_expr(d.get("p_b_n")) if d.get("p_b_n") else None,
            sigma_length=self.cfg["geometry"].get("sigma_lengths", [1])[0],
            sigma_elements=self.cfg["discretization"]["sigma_elements"],
            jobs=self.jobs,
        )
        rows = [{k: v for k, v in row.items() if k != "wall_time"} for row in result.report.rows]
        report = {"rows": rows, "etag": self._etag("geometry", "regime", "data", "discretization")}
        write_json(self.out / "sweep.json", report)
        if "csv" in self.formats and rows:
            hdr = list(rows[0].keys())
            write_csv(self.out / "sweep.csv", hdr, [[r[k] for k in hdr] for r in rows])
        return report

    def stage_analyze(self):
        geom = self.geometry()
        acfg = self.cfg["analysis"]
        rows = []
        extremals = []
        for h in acfg["korn_mesh_sizes"]:
            mesh = build_cell_mesh(geom, h)
            for constraint in ("periodic_normal_zero", "normal_zero_GammaD"):
                est = analysis_mod.estimate_korn_constant(mesh, constraint)
                rows.append(est.to_row())
                extremals.append((f"korn_{constraint}_h{round(1 / h)}", mesh, est))
            est = analysis_mod.estimate_poincare_constant(mesh)
            rows.append(est.to_row())
        restriction = analysis_mod.restriction_norm_sweep(
            geom,
            acfg["restriction_eps"],
            h_cell=self.cfg["discretization"]["h_cell"],
            n_fields=acfg["restriction_fields"],
            seed=self.seed,
        )
        report = {
            "constants": [
                dict(zip(["inequality", "constraint", "h", "eigenvalue", "value"], r)) for r in rows
            ],
            "restriction": restriction,
            "seed": self.seed,
            "etag": self._etag("geometry", "analysis"),
        }
        write_json(self.out / "analysis.json", report)
        if "csv" in self.formats:
            write_csv(
                self.out / "constants.csv",
                ["inequality", "constraint", "h", "eigenvalue", "value"],
                rows,
            )
        if "vtk" in self.formats:
            for name, mesh, est in extremals:
                nv = mesh.n_vertices
                write_vtk(
                    self.out / f"extremal_{name}.vtk",
                    mesh,
                    {"extremal": est.extremal.reshape(-1, 2)[:nv]},
                )
        return report

    def stage_pipeline(self):
        cache_path = self.out / "cache.json"
        cache = {}
        if cache_path.exists():
            cache = json.loads(cache_path.read_text())
        stages = {
            "cell": (self.stage_cell, ["effective_law.json"], ("geometry", "regime", "data", "discretization")),
            "darcy": (self.stage_darcy, ["darcy.json"], ("geometry", "regime", "data", "discretization")),
            "converge": (self.stage_converge, ["sweep.json"], ("geometry", "regime", "data", "discretization")),
            "analyze": (self.stage_analyze, ["analysis.json"], ("geometry", "analysis")),
        }
        import time

        summary = {}
        for name, (fn, artifacts, sections) in stages.items():
            etag = self._etag(*sections)
            entry = cache.get(name)
            if entry and entry.get("etag") == etag and all((self.out / a).exists() for a in artifacts):
                summary[name] = {"cached": True, "etag": etag}
                continue
            fn()
            cache[name] = {"etag": etag, "computed_at": time.time(), "artifacts": artifacts}
            summary[name] = {"cached": False, "etag": etag}
        cache_path.write_text(json.dumps(cache, sort_keys=True, indent=2) + "\n")
        write_json(self.out / "pipeline.json", {"stages": summary})
        return summary


def run(command, config, out=None, seed=0, jobs=1):
    """Execute one command; returns the process exit status."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    try:
        if isinstance(config, (str, Path)):
            with open(config) as fh:
                config = json.load(fh)
        cfg = validate_config(config)
    except (OSError, json.JSONDecodeError, ConfigInvalid) as exc:
        logger.error("invalid configuration: %s", exc)
        return 2
    out_dir = out or cfg["outputs"]["directory"]
    runner = Runner(cfg, out_dir, seed=seed, jobs=jobs)
    try:
        getattr(runner, f"stage_{command}")()
    except ThinPermError as exc:
        logger.error("compute failed: %s", exc)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        logger.exception("unexpected failure: %s", exc)
        return 1
    return 0


@click.command()
@click.argument("command", type=click.Choice(COMMANDS))
@click.option("--config", required=True, type=click.Path(exists=True), help="JSON run configuration")
@click.option("--out", default=None, help="output directory (overrides the config)")
@click.option("--jobs", default=1, show_default=True, help="parallel sweep jobs")
@click.option("--seed", default=0, show_default=True, help="seed for random test fields")
@click.option("--log-level", default="INFO", show_default=True)
def main(command, config, out, jobs, seed, log_level):
    """Homogenization toolkit for Stokes flow in thin perforated layers."""
    logging.basicConfig(level=getattr(logging, log_level.upper(), logging.INFO))
    sys.exit(run(command, config, out=out, seed=seed, jobs=jobs))


if __name__ == "__main__":
    main()
