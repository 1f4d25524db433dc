"""Execute a validated config: run its tasks, write reports and trajectories.

Output layout, one directory per config::

    <out>/<name>/summary.json
    <out>/<name>/reports/<NN>_<label>.json
    <out>/<name>/<label>_trajectory.csv   (iteration, V, ..., flattened params)
    <out>/<name>/<label>_plot.csv         (iteration, V, V_prox)

Nothing time-dependent is written, so re-running a config reproduces every
file byte for byte.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, config, crosscheck, equilibria, games, training
from .gauss_core import ConvergenceError, DomainError, LinearGenerator
from .proximal import ProximalConfig, danskin_check
from .reports import Report, at_least, at_most
from .discriminators import QuadraticDiscriminator

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CERT, EXIT_SCHEMA, EXIT_NUMERIC = 0, 1, 2, 3
CSV_HEAD = ["iteration", "V", "V_prox", "grad_gen_norm", "grad_disc_norm", "feasibility_flag"]


class NumericalFailure(RuntimeError):
    pass


@dataclass
class TaskResult:
    label: str
    report: Report
    expect: str = "pass"
    trajectories: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.report.verdict == self.expect


# -- serialization -----------------------------------------------------------


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n")


def _fmt(x) -> str:
    return "%.17g" % float(x)


def write_trajectory_csv(path: Path, traj: training.Trajectory) -> None:
    ng = len(traj.records[0].gen_params) if traj.records else 0
    nd = len(traj.records[0].disc_params) if traj.records else 0
    head = CSV_HEAD + [f"gen_{i}" for i in range(ng)] + [f"disc_{i}" for i in range(nd)]
    lines = [",".join(head)]
    for r in traj.records:
        row = [str(r.iteration), _fmt(r.V), _fmt(r.V_prox), _fmt(r.grad_gen_norm), _fmt(r.grad_disc_norm), str(r.flags)]
        row += [_fmt(v) for v in r.gen_params] + [_fmt(v) for v in r.disc_params]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def write_plot_csv(path: Path, traj: training.Trajectory) -> None:
    lines = ["iteration,V,V_prox"] + [f"{r.iteration},{_fmt(r.V)},{_fmt(r.V_prox)}" for r in traj.records]
    path.write_text("\n".join(lines) + "\n")


def report_dict(rep: Report, cfg_hash: str, expect: str = "pass") -> dict:
    return {
        "claim": rep.claim,
        "conditions": [c.to_dict() for c in rep.conditions],
        "verdict": rep.verdict,
        "expected": expect,
        "config_hash": cfg_hash,
        "version": __version__,
        "notes": rep.notes,
        "points": rep.points,
    }


# -- tasks -------------------------------------------------------------------


def _certify_no_nash(game, t, seed):
    grid = config.build_gen_grid(game, t["grid"])
    if game.kind == "w2_lq":
        return equilibria.certify_no_nash_w2(game.sigma, grid, t.get("tol", 1e-4), game.eta)
    if game.kind == "fgan_gauss":
        return equilibria.certify_no_nash_fgan(game.fspec, game.sigma, grid, t.get("tol", 1e-6))
    return equilibria.certify_no_nash_wgan1d(game.sigma, grid, t.get("tol", 1e-8))


def _local_nash(game, t, seed):
    g = config.build_generator(game, t["generator"])
    d = config.build_discriminator(game, t.get("discriminator", "best_response"), g)
    return equilibria.check_local_nash(game, g, d, t.get("tol_first", 1e-6), t.get("tol_second", 1e-5))


def _realizable(game, t, seed):
    g = config.build_generator(game, t["generator"])
    return equilibria.check_realizable_saddle(
        game, g, config.build_gen_grid(game, t["gen_grid"]), config.build_disc_grid(game, t["disc_grid"]), t.get("tol", 1e-8)
    )


def _thm2(game, t, seed):
    return equilibria.verify_thm2_inequality(game.sigma, game.eta, config.build_gen_grid(game, t["grid"]), t.get("tol", 1e-6))


def _thm3(game, t, seed):
    return equilibria.verify_thm3_inequality(
        game.sigma, config.build_gen_grid(game, t["grid"]), t.get("tol", 1e-4), t.get("n_samples", 2000), t.get("seed", seed)
    )


def _prox_eq(game, t, seed):
    g = config.build_generator(game, t.get("generator", "minimizer"))
    d = config.build_discriminator(game, t.get("discriminator", "best_response"), g)
    m = config.build_metric(game, t.get("metric"), seed)
    return equilibria.check_proximal_equilibrium(
        game, g, d, t.get("lam", 1.0 / game.eta), m,
        config.build_gen_grid(game, t["gen_grid"]), config.build_disc_grid(game, t["disc_grid"]), t.get("tol", 1e-6),
    )


def _hierarchy(game, t, seed):
    m = config.build_metric(game, t.get("metric"), seed)
    cands = []
    for c in t["candidates"]:
        g = config.build_generator(game, c["generator"])
        cands.append((g, config.build_discriminator(game, c["discriminator"], g)))
    gg, dg = config.build_gen_grid(game, t["gen_grid"]), config.build_disc_grid(game, t["disc_grid"])
    rep = Report("prop3_hierarchy")
    for l1, l2 in t["pairs"]:
        sub = equilibria.pe_hierarchy_check(game, l1, l2, cands, m, gg, dg, t.get("tol", 1e-6))
        for c in sub.conditions:
            c.name = f"[{l1:g}, {l2:g}] {c.name}"
            rep.add(c)
        rep.points.append({"pair": [l1, l2], "candidates": sub.points})
    rep.notes.append(equilibria.GRID_NOTE)
    return rep


def _danskin(game, t, seed):
    if game.kind != "w2_lq":
        raise config.ConfigError("the Danskin sweep is defined for w2_lq games")
    rng = np.random.default_rng(t.get("seed", seed))
    m = config.build_metric(game, t.get("metric"), seed)
    rep = Report(f"prop4_danskin[{game.kind}]")
    for i in range(t.get("n_points", 50)):
        g = LinearGenerator(rng.uniform(0.2, 1.0) * np.eye(game.dim), rng.standard_normal(game.dim))
        a = rng.uniform(-1.0, 0.45 * game.eta) * np.eye(game.dim)
        d = games.project_disc(game, QuadraticDiscriminator(a, rng.standard_normal(game.dim)))
        lam = t["lam"] if "lam" in t else float(rng.uniform(0.5, 2.0))
        sub = danskin_check(game, g, d, m, ProximalConfig(lam), n_perturb=t.get("n_perturb", 100), seed=i)
        for c in sub.conditions:
            c.name = f"point {i}: {c.name}"
            rep.add(c)
        rep.points.extend(sub.points)
    return rep


def _train_cfg(game, spec: dict, seed: int, metric_spec=None) -> training.TrainConfig:
    prox = None
    if spec["algorithm"] == "proximal":
        prox = ProximalConfig(spec.get("lam", 1.0 / game.eta), inner_tol=spec.get("inner_tol", 1e-8))
    samples = None
    if metric_spec is not None and metric_spec["source"] == "drawn_from_data":
        samples = metric_spec["n"]
    return training.TrainConfig(
        spec["algorithm"], spec.get("gen_step", 1e-2), spec.get("disc_step", 1e-2), spec.get("n_disc_per_gen", 5),
        prox, spec.get("max_iters", 100), seed, samples, spec.get("stop_tol"),
    )


def _check_run(traj: training.Trajectory, rep: Report, what: str) -> None:
    t = traj.terminated
    if t is not None and t.startswith("numerical failure"):
        raise NumericalFailure(f"{what}: {t}")
    rep.add(at_least(f"{what} completed without divergence", int(t is None or t.startswith("stationary")), 1, 0))


def _final_generator(g0: LinearGenerator, traj: training.Trajectory) -> LinearGenerator:
    return g0.from_params(traj.final.gen_params)


def _final_disc(d0, traj: training.Trajectory):
    return d0.with_params(traj.final.disc_params)


def _train(game, t, seed, label):
    g0 = config.build_generator(game, t["generator"])
    d0 = config.build_discriminator(game, t.get("discriminator", "zero"), g0)
    cfg = _train_cfg(game, t["train"], seed, t.get("metric"))
    m = config.build_metric(game, t.get("metric"), seed) if cfg.algorithm == "proximal" else None
    traj = training.train(game, cfg, g0, d0, m)
    rep = Report(f"train[{label}, {cfg.algorithm}]")
    _check_run(traj, rep, "training")
    if "target" in t:
        target = config.build_generator(game, t["target"])
        gf = _final_generator(g0, traj)
        dist = float(np.linalg.norm(gf.params() - target.params()))
        rep.add(at_most("|theta_final - theta_target|", dist, 0.0, t.get("target_tol", 1e-2)))
    if "terminal_value" in t:
        rep.add(at_most("|V_final - V_target|", abs(traj.final.V - t["terminal_value"]), 0.0, t.get("tol", 1e-3)))
    rep.points.append({"final": {"gen": traj.final.gen_params, "disc": traj.final.disc_params, "V": traj.final.V}, "iterations": len(traj) - 1, "terminated": traj.terminated})
    return rep, {label: traj}


def _probe_d(game, t, g):
    return config.build_discriminator(game, t.get("discriminator", "best_response"), g)


def _freeze_probe(game, t, seed, label):
    g = config.build_generator(game, t["generator"])
    d = _probe_d(game, t, g)
    steps, gamma = t.get("steps", 100), t.get("gamma", 0.1)
    if t.get("proximal", False):
        m = config.build_metric(game, t.get("metric"), seed)
        traj = training.freeze_disc_proximal_probe(game, g, d, m, ProximalConfig(t.get("lam", 1.0 / game.eta)), steps, gamma)
        vals = traj.prox_values()
    else:
        traj = training.freeze_disc_probe(game, g, d, steps, gamma)
        vals = traj.values()
    rep = Report(f"freeze_probe[{label}]")
    _check_run(traj, rep, "probe")
    if "max_change" in t:
        rep.add(at_most("|value change|", abs(vals[-1] - vals[0]), t["max_change"], 0.0))
    if "min_decrease" in t:
        rep.add(at_least("value decrease", vals[0] - vals[-1], t["min_decrease"], 0.0))
    rep.points.append({"initial": vals[0], "final": vals[-1], "steps": len(traj) - 1})
    return rep, {label: traj}


def _probe_contrast(game, t, seed, label):
    g0 = config.build_generator(game, t["generator"])
    d0 = config.build_discriminator(game, t.get("discriminator", "zero"), g0)
    cfg = _train_cfg(game, t["train"], seed)
    tr = training.train(game, cfg, g0, d0)
    rep = Report(f"probe_contrast[{label}]")
    _check_run(tr, rep, "training")
    g, d = _final_generator(g0, tr), _final_disc(d0, tr)
    steps, gamma = t.get("steps", 100), t.get("gamma", 0.1)
    lam = t.get("lam", 1.0 / game.eta)
    m = config.build_metric(game, t.get("metric"), seed)
    plain = training.freeze_disc_probe(game, g, d, steps, gamma)
    prox = training.freeze_disc_proximal_probe(game, g, d, m, ProximalConfig(lam), steps, gamma)
    _check_run(plain, rep, "plain probe")
    _check_run(prox, rep, "proximal probe")
    dec = float(plain.values()[0] - plain.values()[-1])
    chg = float(abs(prox.prox_values()[-1] - prox.prox_values()[0]))
    ratio = t.get("ratio", 100.0)
    rep.add(at_least("plain probe decrease", dec, 0.0, 0.0))
    rep.add(at_least("plain decrease - ratio * |proximal change|", dec - ratio * chg, 0.0, 0.0))
    rep.points.append(
        {"train_iterations": len(tr) - 1, "terminated": tr.terminated, "plain_decrease": dec,
         "proximal_change": chg, "ratio": dec / chg if chg > 0 else "inf", "lam": lam}
    )
    return rep, {f"{label}_train": tr, f"{label}_plain_probe": plain, f"{label}_proximal_probe": prox}


def _crosscheck(game, t, seed, perturb=None):
    p = t.get("perturb", 0.0) if perturb is None else perturb
    return crosscheck.oracle_matrix(t.get("suites", list(crosscheck.SUITES)), t.get("n_pairs", 50), t.get("seed", seed), p)


_REPORT_TASKS = {
    "certify_no_nash": _certify_no_nash,
    "local_nash": _local_nash,
    "realizable_saddle": _realizable,
    "thm2_inequality": _thm2,
    "thm3_inequality": _thm3,
    "proximal_equilibrium": _prox_eq,
    "hierarchy": _hierarchy,
    "danskin": _danskin,
}
_TRAJ_TASKS = {"train": _train, "freeze_probe": _freeze_probe, "probe_contrast": _probe_contrast}


def run_task(cfg: dict, idx: int, t: dict, perturb=None) -> TaskResult:
    label = t.get("label", f"task{idx:02d}")
    game = config.build_game(cfg["game"], t.get("game"))
    seed = cfg["seed"]
    kind = t["kind"]
    trajs = {}
    if kind in _REPORT_TASKS:
        rep = _REPORT_TASKS[kind](game, t, seed)
    elif kind in _TRAJ_TASKS:
        rep, trajs = _TRAJ_TASKS[kind](game, t, seed, label)
    else:
        rep = _crosscheck(game, t, seed, perturb)
    return TaskResult(label, rep, t.get("expect", "pass"), trajs)


def run_config(cfg: dict, out_dir: Path, only_kinds=None, perturb=None) -> int:
    """Run every task (or those of ``only_kinds``); returns the exit code."""
    name = cfg["name"]
    h = config.config_hash(cfg)
    out = Path(out_dir) / name
    (out / "reports").mkdir(parents=True, exist_ok=True)
    summary = {"config": name, "config_hash": h, "version": __version__, "tasks": []}
    code = EXIT_OK
    for idx, t in enumerate(cfg["tasks"]):
        if only_kinds is not None and t["kind"] not in only_kinds:
            continue
        try:
            res = run_task(cfg, idx, t, perturb)
        except config.ConfigError as exc:
            write_json(out / "error.json", {"error": "schema", "task": idx, "message": str(exc), "diagnostics": exc.diagnostics, "config_hash": h})
            log.error("task %d: %s", idx, exc)
            return EXIT_SCHEMA
        except (NumericalFailure, ConvergenceError, DomainError, np.linalg.LinAlgError, FloatingPointError) as exc:
            write_json(out / "error.json", {"error": "numerical", "task": idx, "message": str(exc), "config_hash": h})
            log.error("task %d: numerical failure: %s", idx, exc)
            return EXIT_NUMERIC
        except ValueError as exc:
            write_json(out / "error.json", {"error": "schema", "task": idx, "message": str(exc), "diagnostics": [{"path": f"tasks.{idx}", "message": str(exc)}], "config_hash": h})
            log.error("task %d: %s", idx, exc)
            return EXIT_SCHEMA
        slug = re.sub(r"[^A-Za-z0-9_.-]+", "_", res.label)
        write_json(out / "reports" / f"{idx:02d}_{slug}.json", report_dict(res.report, h, res.expect))
        for tl, traj in res.trajectories.items():
            write_trajectory_csv(out / f"{tl}_trajectory.csv", traj)
            write_plot_csv(out / f"{tl}_plot.csv", traj)
        summary["tasks"].append({"label": res.label, "claim": res.report.claim, "verdict": res.report.verdict, "expected": res.expect, "ok": res.ok})
        log.info("%s -> %s", res.report.summary(), "ok" if res.ok else "FAILED")
        if not res.ok:
            code = EXIT_CERT
    summary["verdict"] = "pass" if code == EXIT_OK else "fail"
    write_json(out / "summary.json", summary)
    return code
