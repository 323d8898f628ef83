"""Experiment runners behind the command-line tool.

Every session draws from its own generators, seeded by ``(seed, session)``.
Within a session the target, validation set, start parameters and QAOA
generators are the same for every grid point, and smaller training sets are
prefixes of larger ones, so grid comparisons are paired.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import measure, transpile
from .circuits import DQNNSpec, NetworkSpec, random_qaoa_spec
from .config import ConfigError, ExperimentConfig
from .noise import NoiseModel
from .train import (
    Dataset,
    Hyperparameters,
    convergence_stop,
    generate_dataset,
    identity_cost,
    initial_params,
    train,
)

log = logging.getLogger(__name__)

STREAMS = ("data", "generators", "dqnn", "qaoa", "shots")


def session_streams(seed: int, session: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence([seed, session]).spawn(len(STREAMS))
    return {
        name: np.random.Generator(np.random.PCG64(child))
        for name, child in zip(STREAMS, children)
    }


def build_spec(cfg: ExperimentConfig, net: str, streams) -> NetworkSpec:
    if net == "dqnn":
        return DQNNSpec(cfg["dqnn.widths"])
    return random_qaoa_spec(cfg["qaoa.m"], cfg["qaoa.layers"], streams["generators"])


def noise_model(cfg: ExperimentConfig, k: float) -> NoiseModel:
    table = {
        "cnot": cfg["noise.lambda_cnot"],
        "sx": cfg["noise.lambda_sx"],
        "rz": cfg["noise.lambda_rz"],
    }
    return NoiseModel(table, k)


def make_backend(cfg: ExperimentConfig, k: float, streams) -> measure.Backend:
    mode = cfg["backend.mode"]
    if mode == "exact":
        if k != 0:
            raise ConfigError("the exact backend is noise-free; use expectation mode for k > 0")
        return measure.Exact()
    nm = noise_model(cfg, k)
    if mode == "expectation":
        return measure.Noisy(nm)
    return measure.Sampled(nm, cfg["backend.shots"], streams["shots"])


def hyperparameters(cfg: ExperimentConfig, net: str, epochs: int) -> Hyperparameters:
    return Hyperparameters(
        cfg[f"{net}.eta"],
        cfg[f"{net}.epsilon"],
        epochs,
        cfg["train.validation_every"],
        cfg["seed"],
    )


def session_dataset(cfg: ExperimentConfig, spec: NetworkSpec, streams, n_train: int) -> Dataset:
    return generate_dataset(spec.d, n_train, cfg["data.n_val"], streams["data"])


def prepare_output(out: str | os.PathLike) -> Path:
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path} is not writable")
    return path


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, cfg: ExperimentConfig, columns: Sequence[str], rows: Iterable[dict]) -> None:
    """CSV with a ``# config: {...}`` first line, then a header row."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# config: {cfg.to_json()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])


def write_json(path: Path, cfg: ExperimentConfig, payload: dict) -> None:
    body = {"config": cfg.as_dict(), **payload}
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _run_tasks(fn: Callable, tasks: list[tuple], workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _summarize(rows: list[dict], keys: Sequence[str], fields: Sequence[str]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key in sorted(groups):
        grp = groups[key]
        row = dict(zip(keys, key))
        row["sessions"] = len(grp)
        for f in fields:
            vals = np.array([g[f] for g in grp if g[f] is not None], dtype=float)
            row[f"mean_{f}"] = float(vals.mean()) if vals.size else None
            row[f"std_{f}"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        out.append(row)
    return out


# single training session


def _single_task(args):
    cfg, net = args
    streams = session_streams(cfg["seed"], 0)
    spec = build_spec(cfg, net, streams)
    ds = session_dataset(cfg, spec, streams, cfg["data.n_train"])
    backend = make_backend(cfg, cfg["noise.k"], streams)
    hp = hyperparameters(cfg, net, cfg["train.epochs"])
    tr = train(spec, ds, hp, backend, rng=streams[net], id_noise=noise_model(cfg, cfg["noise.k"]))
    return net, tr


def run_single_training(cfg: ExperimentConfig, out: str | os.PathLike | None = None) -> dict:
    path = prepare_output(cfg["out"] if out is None else out)
    results = _run_tasks(_single_task, [(cfg, n) for n in cfg.networks()], cfg["workers"])
    traces = {}
    for net, tr in results:
        log.info("%s: final C_T %.4f", net, tr.final_train_cost)
        write_csv(path / f"single_training_{net}.csv", cfg, ["epoch", "C_T", "C_V", "C_id"], tr.rows())
        summary = tr.summary()
        # the trace's own run description goes under "training", next to the full config
        summary["training"] = summary.pop("config")
        write_json(path / f"single_training_{net}.json", cfg, {"network": net, **summary})
        traces[net] = tr
    return traces


# generalization


GEN_COLUMNS = [
    "network", "n_train", "session", "final_train_cost", "final_val_cost",
    "identity_cost", "epochs_run",
]


def _generalization_task(args):
    cfg, net, session, n_train = args
    streams = session_streams(cfg["seed"], session)
    spec = build_spec(cfg, net, streams)
    full = session_dataset(cfg, spec, streams, max(cfg["data.n_train_grid"]))
    ds = full.with_training_size(n_train)
    k = cfg["noise.k"]
    backend = make_backend(cfg, k, streams)
    hp = hyperparameters(cfg, net, cfg["train.epochs"])
    tr = train(
        spec, ds, hp, backend,
        rng=streams[net],
        id_noise=noise_model(cfg, k),
        id_states=full.output_states(),
    )
    log.info("%s N_T=%d session %d: C_V %.4f", net, n_train, session, tr.final_val_cost)
    return {
        "network": net,
        "n_train": n_train,
        "session": session,
        "final_train_cost": tr.final_train_cost,
        "final_val_cost": tr.final_val_cost,
        "identity_cost": identity_cost(spec, noise_model(cfg, k), full.output_states()),
        "epochs_run": tr.epochs,
    }


def run_generalization(cfg: ExperimentConfig, out: str | os.PathLike | None = None) -> dict:
    if cfg["data.n_val"] < 1:
        raise ConfigError("generalization needs data.n_val >= 1")
    path = prepare_output(cfg["out"] if out is None else out)
    tasks = [
        (cfg, net, s, n)
        for net in cfg.networks()
        for n in cfg["data.n_train_grid"]
        for s in range(cfg["sessions"])
    ]
    rows = _run_tasks(_generalization_task, tasks, cfg["workers"])
    rows.sort(key=lambda r: (r["network"], r["n_train"], r["session"]))
    summary = _summarize(
        rows, ["network", "n_train"], ["final_val_cost", "final_train_cost", "identity_cost"]
    )
    write_csv(path / "generalization.csv", cfg, GEN_COLUMNS, rows)
    write_csv(path / "generalization_summary.csv", cfg, list(summary[0]), summary)
    write_json(path / "generalization.json", cfg, {"summary": summary})
    return {"rows": rows, "summary": summary}


# noise sweep


SWEEP_COLUMNS = [
    "network", "k", "session", "final_train_cost", "final_val_cost",
    "identity_cost", "epochs_run", "stopped_early",
]


def _sweep_task(args):
    cfg, net, k, session = args
    streams = session_streams(cfg["seed"], session)
    spec = build_spec(cfg, net, streams)
    ds = session_dataset(cfg, spec, streams, cfg["data.n_train"])
    backend = make_backend(cfg, k, streams)
    cap = cfg["stop.max_epochs"]
    hp = hyperparameters(cfg, net, cap)
    window, tol = cfg["stop.window"], cfg["stop.tol"]
    tr = train(
        spec, ds, hp, backend,
        rng=streams[net],
        stop=lambda t: convergence_stop(t, window, tol, cap),
        id_noise=noise_model(cfg, k),
    )
    log.info("%s k=%g session %d: C_T %.4f after %d epochs", net, k, session,
             tr.final_train_cost, tr.epochs)
    return {
        "network": net,
        "k": k,
        "session": session,
        "final_train_cost": tr.final_train_cost,
        "final_val_cost": tr.final_val_cost,
        "identity_cost": identity_cost(spec, noise_model(cfg, k), ds.output_states()),
        "epochs_run": tr.epochs,
        "stopped_early": tr.stopped_early,
    }


def run_noise_sweep(cfg: ExperimentConfig, out: str | os.PathLike | None = None) -> dict:
    path = prepare_output(cfg["out"] if out is None else out)
    tasks = [
        (cfg, net, k, s)
        for net in cfg.networks()
        for k in cfg["noise.k_grid"]
        for s in range(cfg["sessions"])
    ]
    rows = _run_tasks(_sweep_task, tasks, cfg["workers"])
    rows.sort(key=lambda r: (r["network"], r["k"], r["session"]))
    summary = _summarize(
        rows, ["network", "k"], ["final_train_cost", "final_val_cost", "identity_cost"]
    )
    write_csv(path / "noise_sweep.csv", cfg, SWEEP_COLUMNS, rows)
    write_csv(path / "noise_sweep_summary.csv", cfg, list(summary[0]), summary)
    write_json(path / "noise_sweep.json", cfg, {"summary": summary})
    return {"rows": rows, "summary": summary}


# identity cost


ID_COLUMNS = ["network", "k", "session", "identity_cost"]


def _identity_task(args):
    cfg, net, k, session = args
    streams = session_streams(cfg["seed"], session)
    spec = build_spec(cfg, net, streams)
    ds = session_dataset(cfg, spec, streams, cfg["data.n_train"])
    c = identity_cost(spec, noise_model(cfg, k), ds.output_states())
    return {"network": net, "k": k, "session": session, "identity_cost": c}


def run_identity_cost(cfg: ExperimentConfig, out: str | os.PathLike | None = None) -> dict:
    path = prepare_output(cfg["out"] if out is None else out)
    tasks = [
        (cfg, net, k, s)
        for net in cfg.networks()
        for k in cfg["noise.k_grid"]
        for s in range(cfg["sessions"])
    ]
    rows = _run_tasks(_identity_task, tasks, cfg["workers"])
    rows.sort(key=lambda r: (r["network"], r["k"], r["session"]))
    summary = _summarize(rows, ["network", "k"], ["identity_cost"])
    write_csv(path / "identity_cost.csv", cfg, ID_COLUMNS, rows)
    write_json(path / "identity_cost.json", cfg, {"summary": summary})
    return {"rows": rows, "summary": summary}


# transpile report


def transpile_report(cfg: ExperimentConfig, net: str) -> dict:
    streams = session_streams(cfg["seed"], 0)
    spec = build_spec(cfg, net, streams)
    ds = session_dataset(cfg, spec, streams, 1)
    phi_in, phi_out = ds.training_pairs[0]
    params = initial_params(spec, streams[net])
    m = spec.m
    total = m + spec.num_qubits
    stages = {
        "prep_reference": measure._prep_stage(phi_out, range(m), total),
        "prep_input": measure._prep_stage(phi_in, [m + q for q in spec.input_qubits], total),
        "network": measure._stage(spec.build(params).gates, range(m, total), total),
        "swap_test": measure._swap_stage(m),
    }
    full = measure.full_basis_circuit(spec, params, phi_in, phi_out)
    network = spec.build(params)
    return {
        "network": spec.describe(),
        "num_params": spec.num_params,
        "num_qubits": total,
        "stage_counts": {k: v.counts for k, v in stages.items()},
        "total_counts": full.counts,
        "network_residual": transpile.reconstruction_residual(
            network, transpile.transpile_circuit(network)
        ),
        "full_residual": transpile.reconstruction_residual(
            measure.full_circuit(spec, params, phi_in, phi_out), full
        ),
    }


def run_transpile_report(cfg: ExperimentConfig, out: str | os.PathLike | None = None) -> dict:
    path = prepare_output(cfg["out"] if out is None else out)
    report = {net: transpile_report(cfg, net) for net in cfg.networks()}
    write_json(path / "transpile_report.json", cfg, {"reports": report})
    return report


RUNNERS = {
    "single-training": run_single_training,
    "generalization": run_generalization,
    "noise-sweep": run_noise_sweep,
    "identity-cost": run_identity_cost,
    "transpile-report": run_transpile_report,
}
