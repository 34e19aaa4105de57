"""Experiment runner, bundled presets and the brute-force oracle."""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from .annealing import AnnealConfig, SweepConfig, qa_run, sqa_run
from .config import ConfigError, ExperimentConfig, derive_rng, load_config
from .lattice import (MAX_EXHAUSTIVE_SITES, IsingModel, brute_force_spectrum, build_model, sector_minima,
                      sector_populations)
from .qite import QiteConfig, ground_overlap, qite_run
from .spectra import adiabatic_time, gap_curve
from .variational import Ansatz, VqeConfig, VqiteConfig, vqe_run, vqite_run

OUT_ENV = "TSOLAB_OUT"
DEFAULT_OUT = "results"
CONVERGED_TOL = 5e-2


def default_output_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


def model_from_config(cfg: ExperimentConfig) -> IsingModel:
    sec = cfg.section("model")
    kind = sec.pop("kind")
    Lx, Ly = sec.pop("Lx", None), sec.pop("Ly", None)
    model = build_model(kind, Lx, Ly, sec or None)
    if model.n_sites > MAX_EXHAUSTIVE_SITES:
        raise ConfigError(f"{model.n_sites} sites exceeds the {MAX_EXHAUSTIVE_SITES}-site limit")
    return model


def _anneal_config(cfg: ExperimentConfig) -> AnnealConfig:
    sec = cfg.section("anneal")
    T = sec.pop("T", 1000.0)
    return AnnealConfig.from_total_time(T, **sec)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return None if not np.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def oracle_constants(model: IsingModel) -> dict:
    """Exhaustive reference values for one model."""
    levels = brute_force_spectrum(model)
    out = {
        "kind": model.kind, "Lx": model.Lx, "Ly": model.Ly, "n_sites": model.n_sites,
        "e0": levels[0][0], "e1": levels[1][0],
        "degeneracy0": levels[0][1], "degeneracy1": levels[1][1],
        "levels": [[e, d] for e, d in levels[:8]],
    }
    if model.kind in ("tri", "sq"):
        out["sector_minima"] = {str(k): v for k, v in sector_minima(model).items()}
        out["sector_populations"] = {str(k): v for k, v in sector_populations(model).items()}
    return out


def oracle_run(model: IsingModel, path=None) -> dict:
    data = oracle_constants(model)
    if path is not None:
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return data


def reference_constants(kind: str) -> dict:
    """Frozen oracle output shipped with the package."""
    return json.loads(resources.files("tsolab").joinpath(f"data/oracle_{kind}.json").read_text())


def _final_summary(traj, model: IsingModel, e0: float) -> dict:
    final = traj.final_energy
    out = {"final_energy": final, "converged": bool(abs(final - e0) < CONVERGED_TOL)}
    if model.kind in ("tri", "sq") and traj.final_state is not None:
        from .lattice import sector_distribution
        out["sector_distribution"] = sector_distribution(traj.final_state, model)
    return out


def _run_one(cfg: ExperimentConfig, model: IsingModel, out_dir: Path, tag: str, repeat: int) -> dict:
    algo = cfg.algorithm
    consts = oracle_constants(model)
    e0, e1 = consts["e0"], consts["e1"]
    summary: dict = {"name": tag, "algorithm": algo, "model": model.kind, "seed": cfg.seed, "repeat": repeat,
                     "e0": e0, "e1": e1}
    t0 = time.perf_counter()
    csv_path = out_dir / f"{tag}.csv"
    if algo == "oracle":
        oracle_run(model, out_dir / f"{tag}.oracle.json")
        summary["oracle"] = consts
        csv_path = None
    elif algo == "spectrum":
        sec = cfg.section("spectrum")
        grid = np.linspace(0.0, 1.0, sec.get("s_points", 101))
        curve = gap_curve(model, grid, k=sec.get("k", 8), refine=sec.get("refine", 10),
                          tol=sec.get("tol", 1e-10), sector=sec.get("sector", 0))
        curve.write_csv(csv_path)
        summary.update(g_min=curve.g_min, s_star=curve.s_star, tau=adiabatic_time(curve.g_min),
                       e0_at_1=float(curve.levels[-1, 0]))
    else:
        if algo in ("qa", "sqa"):
            acfg = _anneal_config(cfg)
            if algo == "qa":
                traj = qa_run(model, acfg)
            else:
                traj = sqa_run(model, acfg, SweepConfig(**cfg.section("sweep")))
            summary["total_time"] = traj.meta["total_time"]
        elif algo == "qite":
            traj = qite_run(model, QiteConfig(**cfg.section("qite")))
            summary["ground_overlap"] = ground_overlap(traj.final_state, model.energies)
        else:
            rng = derive_rng(cfg.seed, f"theta0/{repeat}")
            ansatz = Ansatz(model)
            theta0 = ansatz.init_params(rng)
            if algo in ("vqite", "diag-vqite"):
                sec = cfg.section("vqite")
                sec["mode"] = "full" if algo == "vqite" else "diagonal"
                traj = vqite_run(model, ansatz, VqiteConfig(**sec), theta0=theta0,
                                 snapshot_path=out_dir / f"{tag}.theta")
                summary["min_A_eigenvalue"] = traj.meta["a_min_eig"]
                summary["halving_events"] = traj.meta["halving_events"]
            else:
                traj = vqe_run(model, ansatz, VqeConfig(**cfg.section("vqe")), theta0=theta0,
                               snapshot_path=out_dir / f"{tag}.theta")
            summary["converged_at"] = traj.meta["converged_at"]
        traj.write_csv(csv_path)
        summary.update(_final_summary(traj, model, e0))
    summary["wall_time"] = time.perf_counter() - t0
    summary["csv"] = None if csv_path is None else csv_path.name
    (out_dir / f"{tag}.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return summary


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> list[dict]:
    """Run every repeat of one experiment; returns the per-run summaries."""
    cfg.validate()
    out_dir = Path(out_dir) if out_dir is not None else default_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    model = model_from_config(cfg)
    stochastic = cfg.algorithm in ("vqite", "diag-vqite", "vqe")
    n = cfg.repeats if stochastic else 1
    tags = [cfg.name if n == 1 else f"{cfg.name}_r{r:03d}" for r in range(n)]
    return [_run_one(cfg, model, out_dir, tag, r) for r, tag in enumerate(tags)]


# --------------------------------------------------------------------------
# presets


def preset_names() -> list[str]:
    root = resources.files("tsolab").joinpath("presets")
    return sorted(p.name for p in root.iterdir() if p.is_dir())


def preset_configs(name: str) -> list[tuple[str, ExperimentConfig]]:
    root = resources.files("tsolab").joinpath("presets", name)
    if not root.is_dir():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    files = sorted((p for p in root.iterdir() if p.name.endswith(".cfg")), key=lambda p: p.name)
    return [(p.name, load_config(p)) for p in files]


def _run_cfg(args):
    cfg_text, out_dir = args
    from .config import parse_config
    return run_experiment(parse_config(cfg_text), out_dir)


def run_preset(name: str, out_dir=None, threads: int = 1, overrides=()) -> dict:
    """Run all configs of a preset, fanning out over ``threads`` processes, and write index.json."""
    from .config import apply_override
    out_dir = (Path(out_dir) if out_dir is not None else default_output_dir()) / name
    out_dir.mkdir(parents=True, exist_ok=True)
    cfgs = preset_configs(name)
    for _, cfg in cfgs:
        for ov in overrides:
            apply_override(cfg, ov)
    jobs = [(cfg.to_string(), str(out_dir)) for _, cfg in cfgs]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_cfg, jobs))
    else:
        results = [_run_cfg(j) for j in jobs]
    index = {"preset": name, "runs": []}
    for (fname, cfg), summaries in zip(cfgs, results):
        for s in summaries:
            index["runs"].append({"config": fname, "name": s["name"], "algorithm": s["algorithm"],
                                  "model": s["model"], "csv": s["csv"], "summary": f"{s['name']}.json"})
    (out_dir / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return index
