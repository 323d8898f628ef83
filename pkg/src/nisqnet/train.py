"""Datasets, finite-difference gradient ascent and the identity-cost baseline."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import qcore
from .circuits import DQNNSpec, NetworkSpec, identity_params
from .measure import Backend, CostEvaluator, Noisy
from .noise import NoiseModel

PAIR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Dataset:
    target: np.ndarray
    training_pairs: tuple[tuple[np.ndarray, np.ndarray], ...]
    validation_pairs: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        v = np.asarray(self.target, dtype=complex)
        if not qcore.is_unitary(v):
            raise ValueError("target is not unitary")
        for x, y in self.training_pairs + self.validation_pairs:
            if np.linalg.norm(y - v @ x) > PAIR_TOL:
                raise ValueError("pair output differs from target applied to input")

    @property
    def d(self) -> int:
        return self.target.shape[0]

    @property
    def n_train(self) -> int:
        return len(self.training_pairs)

    @property
    def n_val(self) -> int:
        return len(self.validation_pairs)

    def output_states(self) -> list[np.ndarray]:
        return [y for _, y in self.training_pairs]

    def with_training_size(self, n_train: int) -> "Dataset":
        """Same target and validation set, first ``n_train`` training pairs."""
        if not 0 <= n_train <= self.n_train:
            raise ValueError(f"only {self.n_train} training pairs available")
        return Dataset(self.target, self.training_pairs[:n_train], self.validation_pairs)


def generate_dataset(
    d: int,
    n_train: int,
    n_val: int,
    rng: np.random.Generator,
    target: np.ndarray | None = None,
) -> Dataset:
    """Haar target (unless given) and Haar input states.

    Draw order is target, validation inputs, training inputs, so for one
    generator state the target and validation set do not depend on
    ``n_train`` and smaller training sets are prefixes of larger ones.
    """
    n = qcore.num_qubits_of(d)
    if n_train < 0 or n_val < 0:
        raise ValueError("pair counts must be non-negative")
    if target is None:
        v = qcore.sample_haar_unitary(d, rng)
    else:
        v = np.array(target, dtype=complex)
        if v.shape != (d, d) or not qcore.is_unitary(v):
            raise ValueError(f"target must be a {d}x{d} unitary")
    val = [qcore.sample_haar_state(n, rng) for _ in range(n_val)]
    tr = [qcore.sample_haar_state(n, rng) for _ in range(n_train)]
    return Dataset(
        v,
        tuple((x, v @ x) for x in tr),
        tuple((x, v @ x) for x in val),
    )


def fd_gradient(
    costfn: Callable[[np.ndarray], float], p: Sequence[float], epsilon: float
) -> np.ndarray:
    """Central differences, ``2 * len(p)`` calls of ``costfn``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    p = np.asarray(p, dtype=float)
    grad = np.zeros_like(p)
    for k in range(p.size):
        up = p.copy()
        up[k] += epsilon
        down = p.copy()
        down[k] -= epsilon
        grad[k] = (costfn(up) - costfn(down)) / (2 * epsilon)
    return grad


@dataclass(frozen=True)
class Hyperparameters:
    eta: float
    epsilon: float
    epochs: int
    validation_every: int = 5
    seed: int = 0

    def __post_init__(self):
        # eta = 0 is allowed: it freezes the parameters
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.epochs < 1 or self.validation_every < 1:
            raise ValueError("epochs and validation_every must be positive")

    def as_dict(self) -> dict:
        return {
            "eta": self.eta,
            "epsilon": self.epsilon,
            "epochs": self.epochs,
            "validation_every": self.validation_every,
            "seed": self.seed,
        }


@dataclass
class TrainingTrace:
    """Per-epoch record of one training session.

    Row ``t`` (1-based) holds the training cost at the parameters entering
    epoch ``t``. Validation and identity costs are taken after the update of
    every ``validation_every``-th epoch. ``final_*`` refer to the parameters
    left after the last epoch.
    """

    train_cost: list[float] = field(default_factory=list)
    val_cost: dict[int, float] = field(default_factory=dict)
    id_cost: dict[int, float] = field(default_factory=dict)
    initial_params: np.ndarray | None = None
    final_params: np.ndarray | None = None
    final_train_cost: float | None = None
    final_val_cost: float | None = None
    epochs_configured: int = 0
    stopped_early: bool = False
    wall_time: float = 0.0
    config: dict = field(default_factory=dict)

    @property
    def epochs(self) -> int:
        return len(self.train_cost)

    def validation_series(self) -> list[float]:
        return [self.val_cost[e] for e in sorted(self.val_cost)]

    def rows(self) -> list[dict]:
        out = []
        for t, c in enumerate(self.train_cost, start=1):
            out.append(
                {
                    "epoch": t,
                    "C_T": c,
                    "C_V": self.val_cost.get(t),
                    "C_id": self.id_cost.get(t),
                }
            )
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "C_T", "C_V", "C_id"])
        for r in self.rows():
            w.writerow(
                [r["epoch"]] + ["" if r[k] is None else repr(r[k]) for k in ("C_T", "C_V", "C_id")]
            )
        return buf.getvalue()

    def summary(self) -> dict:
        """Everything but the wall time, so reruns serialize identically."""
        ids = [self.id_cost[e] for e in sorted(self.id_cost)]
        return {
            "config": self.config,
            "epochs_configured": self.epochs_configured,
            "epochs_run": self.epochs,
            "stopped_early": self.stopped_early,
            "final_train_cost": self.final_train_cost,
            "final_val_cost": self.final_val_cost,
            "identity_cost": ids[-1] if ids else None,
            "initial_params": _floats(self.initial_params),
            "final_params": _floats(self.final_params),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _floats(a) -> list[float] | None:
    return None if a is None else [float(x) for x in a]


def initial_params(spec: NetworkSpec, rng: np.random.Generator) -> np.ndarray:
    if isinstance(spec, DQNNSpec):
        return rng.uniform(0.0, 2 * np.pi, spec.num_params)
    return rng.uniform(-1.0, 1.0, spec.num_params)


def identity_cost(
    spec: NetworkSpec, nm: NoiseModel, states: Sequence[np.ndarray]
) -> float:
    """Noisy cost of the identity-parameter network on pairs ``(psi, psi)``."""
    pairs = [(s, s) for s in states]
    return CostEvaluator(spec, pairs, Noisy(nm)).value(identity_params(spec))


def convergence_stop(
    trace: TrainingTrace, window: int = 10, tol: float = 1e-3, max_epochs: int | None = None
) -> bool:
    """True once the last ``window`` validation costs span at most ``tol``."""
    if window < 2:
        raise ValueError("window must be at least 2")
    if max_epochs is not None and trace.epochs >= max_epochs:
        return True
    vals = trace.validation_series()
    if len(vals) < window:
        return False
    last = vals[-window:]
    return max(last) - min(last) <= tol


def train(
    spec: NetworkSpec,
    dataset: Dataset,
    hp: Hyperparameters,
    backend: Backend,
    rng: np.random.Generator | None = None,
    stop: Callable[[TrainingTrace], bool] | None = None,
    id_noise: NoiseModel | None = None,
    p0: np.ndarray | None = None,
    id_states: Sequence[np.ndarray] | None = None,
) -> TrainingTrace:
    """Plain gradient ascent on the training cost.

    ``rng`` draws the start parameters (from ``hp.seed`` when omitted).
    ``stop`` is consulted after every validation. The identity cost uses
    ``id_noise``, defaulting to the backend's noise (noise-free for the exact
    backend), on ``id_states``, defaulting to the training output states.
    """
    if dataset.d != spec.d:
        raise ValueError(f"dataset dimension {dataset.d} does not match {spec.describe()}")
    if dataset.n_train < 1:
        raise ValueError("need at least one training pair")
    if rng is None:
        rng = qcore.make_rng(hp.seed)
    p = initial_params(spec, rng) if p0 is None else np.array(p0, dtype=float)
    if p.shape != (spec.num_params,):
        raise ValueError(f"start parameters must have length {spec.num_params}")
    start = time.perf_counter()
    if id_noise is None:
        id_noise = getattr(backend, "noise", NoiseModel(k=0.0))
    if id_states is None:
        id_states = dataset.output_states()
    c_id = identity_cost(spec, id_noise, id_states)
    tr_eval = CostEvaluator(spec, dataset.training_pairs, backend)
    val_eval = (
        CostEvaluator(spec, dataset.validation_pairs, backend)
        if dataset.n_val
        else None
    )
    trace = TrainingTrace(initial_params=p.copy(), epochs_configured=hp.epochs)
    trace.config = {
        "network": spec.describe(),
        "hyperparameters": hp.as_dict(),
        "backend": backend.mode,
        "noise": getattr(backend, "noise", None) and backend.noise.as_dict(),
        "n_train": dataset.n_train,
        "n_val": dataset.n_val,
    }
    for t in range(1, hp.epochs + 1):
        trace.train_cost.append(tr_eval.value(p))
        grad = fd_gradient(tr_eval.value, p, hp.epsilon)
        p = p + hp.eta * grad
        if t % hp.validation_every == 0:
            if val_eval is not None:
                trace.val_cost[t] = val_eval.value(p)
            trace.id_cost[t] = c_id
            if stop is not None and t < hp.epochs and stop(trace):
                trace.stopped_early = True
                break
    trace.final_params = p
    trace.final_train_cost = tr_eval.value(p)
    last = trace.epochs
    if last in trace.val_cost:
        trace.final_val_cost = trace.val_cost[last]
    elif val_eval is not None:
        trace.final_val_cost = val_eval.value(p)
    trace.wall_time = time.perf_counter() - start
    return trace
