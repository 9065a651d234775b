"""Federated min-max training loops: FGDRA and the DRFA / FedAvg baselines.

All three algorithms share one parameter server skeleton: sample a worker
subset, run local SGD, average the returned models.  They differ in how the
simplex weight vector over workers evolves and in how many communication
exchanges one algorithmic round costs:

* ``fgdra``  - workers update their own dual weight locally (exponentiated
  ascent on a fresh-batch loss at the final local iterate) and piggyback it
  on the model upload; the server renormalizes.  One exchange per round.
* ``drfa``   - same lambda-weighted local SGD, but the dual step happens at
  the server from losses evaluated at a uniformly random local iterate
  snapshot, which needs a second exchange.  Two exchanges per round.
* ``fedavg`` - uniform sampling, unweighted local SGD, no dual variable.
  One exchange per round.

Randomness is organized as per-(seed, purpose, worker, round) substreams, so
results are independent of worker execution order and identical batch
sequences can be replayed across algorithms for equivalence checks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import metrics, mlp
from .labeling import Dataset

logger = logging.getLogger(__name__)

ALGORITHMS = ("fgdra", "drfa", "fedavg")

# Substream purpose tags; part of the reproducibility contract.
_INIT, _SERVER, _PRIMAL, _DUAL, _SNAPSHOT = range(5)


@dataclass(frozen=True)
class TrainConfig:
    """Federation hyperparameters.

    ``tau`` is the number of local SGD steps between exchanges (the total
    iteration count is K * tau).  ``gamma`` may be zero, which freezes the
    dual vector and is used by the FedAvg-reduction checks.
    """

    N: int = 4
    m: int = 3
    K: int = 800
    tau: int = 10
    alpha: float = 2e-3
    gamma: float = 5e-3
    B: int = 50
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    algorithm: str = "fgdra"

    def __post_init__(self) -> None:
        if not 1 <= self.m <= self.N:
            raise ValueError(f"need 1 <= m <= N, got m={self.m}, N={self.N}")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be > 0")
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")
        if self.tau < 1 or self.K < 1 or self.B < 1:
            raise ValueError("tau, K and B must be >= 1")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.seeds or any(s < 0 for s in self.seeds):
            raise ValueError("seeds must be a nonempty list of nonnegative ints")


@dataclass(frozen=True)
class RoundLog:
    """Metrics snapshot after one algorithmic round."""

    round: int
    communication_rounds_consumed: int
    per_worker_acc: np.ndarray
    avg_acc: float
    worst_acc: float
    acc_sd: float
    lam: np.ndarray


@dataclass
class RunResult:
    """Everything a run leaves behind: per-round logs plus the artifacts the
    diagnostics module needs (round-boundary model checkpoints and the full
    dual-weight history)."""

    algorithm: str
    seed: int
    config: TrainConfig
    round_logs: list[RoundLog]
    final_theta: mlp.ModelParams
    lambda_history: np.ndarray
    theta_checkpoints: dict[int, mlp.ModelParams]
    dual_loss_history: list[dict[int, float]]
    communication_rounds_consumed: int


def _substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def _draw_batch(ds: Dataset, B: int, rng: np.random.Generator) -> mlp.MiniBatch:
    idx = rng.integers(0, len(ds), size=B)
    return mlp.MiniBatch(inputs=ds.features[idx], labels=ds.labels[idx])


def sample_workers(lam: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw m distinct workers by sequential proportional sampling.

    Each draw is proportional to the remaining weights, which are
    renormalized after every pick.  If fewer than m positive entries exist,
    the open slots are filled uniformly from the unchosen workers.  m = N
    returns the full set without consuming randomness.  The result is sorted
    ascending (the canonical processing order).
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= len(lam), got m={m}")
    if m == n:
        return np.arange(n)
    remaining = lam.copy()
    chosen: list[int] = []
    for _ in range(m):
        total = remaining.sum()
        if total <= 0.0:
            break
        idx = int(rng.choice(n, p=remaining / total))
        chosen.append(idx)
        remaining[idx] = 0.0
    if len(chosen) < m:
        pool = np.setdiff1d(np.arange(n), np.array(chosen, dtype=int))
        extra = rng.choice(pool, size=m - len(chosen), replace=False)
        chosen.extend(int(i) for i in np.atleast_1d(extra))
    return np.sort(np.asarray(chosen, dtype=int))


def local_sgd(
    dataset: Dataset,
    theta0: mlp.ModelParams,
    lambda_n: float,
    tau: int,
    alpha: float,
    B: int,
    rng: np.random.Generator,
    snapshot_at: int | None = None,
) -> tuple[mlp.ModelParams, mlp.ModelParams | None]:
    """Run tau SGD steps theta <- theta - alpha * lambda_n * grad(theta; batch).

    Batches are uniform with replacement from the worker's training split.
    When ``snapshot_at`` = j is given, the iterate right before step j (the
    j-th local iterate) is also returned.
    """
    step = alpha * lambda_n
    theta = theta0
    snapshot = None
    for t in range(tau):
        if snapshot_at is not None and t == snapshot_at:
            snapshot = theta
        batch = _draw_batch(dataset, B, rng)
        theta = mlp.add_scaled(theta, mlp.grad(theta, batch), -step)
    return theta, snapshot


def dual_update(lambda_n: float, theta_n: mlp.ModelParams, gamma: float, batch: mlp.MiniBatch) -> float:
    """Exponentiated-ascent factor: lambda_n * exp(gamma * loss(theta_n; batch))."""
    if lambda_n < 0.0:
        raise ValueError("lambda_n must be >= 0")
    return lambda_n * math.exp(gamma * mlp.loss(theta_n, batch))


def ps_aggregate(theta_list: list[mlp.ModelParams]) -> mlp.ModelParams:
    """Unweighted mean of the sampled workers' models."""
    return mlp.average(theta_list)


def normalize(lam: np.ndarray) -> np.ndarray:
    """Project nonnegative weights back onto the simplex by rescaling.

    An all-zero vector resets to uniform (logged); negative entries are
    rejected.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0.0):
        raise ValueError("dual weights must be nonnegative")
    total = lam.sum()
    if total <= 0.0:
        logger.warning("all-zero dual vector; resetting to uniform")
        return np.full(lam.size, 1.0 / lam.size)
    return lam / total


def _should_eval(k: int, K: int, eval_every: int) -> bool:
    return (k + 1) % eval_every == 0 or k == K - 1


def _run(
    config: TrainConfig,
    train_sets: list[Dataset],
    test_sets: list[Dataset],
    seed: int,
    eval_every: int,
    checkpoint_rounds: set[int] | None,
    algorithm: str,
) -> RunResult:
    if len(train_sets) != config.N or len(test_sets) != config.N:
        raise ValueError(f"expected {config.N} train and test sets")
    comm_cost = 2 if algorithm == "drfa" else 1
    checkpoint_rounds = set(checkpoint_rounds or ())

    theta = mlp.init(_substream(seed, _INIT))
    lam = np.full(config.N, 1.0 / config.N)
    lambda_history = np.empty((config.K + 1, config.N))
    lambda_history[0] = lam
    theta_checkpoints: dict[int, mlp.ModelParams] = {}
    dual_loss_history: list[dict[int, float]] = []
    round_logs: list[RoundLog] = []
    comm = 0

    for k in range(config.K):
        if k in checkpoint_rounds:
            theta_checkpoints[k] = theta

        server_rng = _substream(seed, _SERVER, k)
        if algorithm == "fedavg":
            sampled = sample_workers(np.full(config.N, 1.0 / config.N), config.m, server_rng)
        else:
            sampled = sample_workers(lam, config.m, server_rng)
        snapshot_at = None
        if algorithm == "drfa":
            snapshot_at = int(_substream(seed, _SNAPSHOT, k).integers(0, config.tau))

        new_lam = lam.copy()
        thetas: list[mlp.ModelParams] = []
        dual_losses: dict[int, float] = {}
        for n in sampled:  # ascending order; each worker owns its substreams
            n = int(n)
            lam_n = 1.0 if algorithm == "fedavg" else float(lam[n])
            theta_n, snapshot = local_sgd(
                train_sets[n], theta, lam_n, config.tau, config.alpha, config.B,
                _substream(seed, _PRIMAL, n, k), snapshot_at=snapshot_at,
            )
            thetas.append(theta_n)
            if algorithm == "fgdra":
                batch = _draw_batch(train_sets[n], config.B, _substream(seed, _DUAL, n, k))
                ell = mlp.loss(theta_n, batch)
                dual_losses[n] = ell
                new_lam[n] = lam[n] * math.exp(config.gamma * ell)
            elif algorithm == "drfa":
                batch = _draw_batch(train_sets[n], config.B, _substream(seed, _DUAL, n, k))
                # importance-weighted loss estimate: sampled workers stand in
                # for the full population, hence the N/m scale
                ell = mlp.loss(snapshot, batch)
                dual_losses[n] = ell
                new_lam[n] = lam[n] * math.exp(config.gamma * (config.N / config.m) * ell)

        theta = ps_aggregate(thetas)
        if algorithm != "fedavg":
            lam = normalize(new_lam)
        lambda_history[k + 1] = lam
        dual_loss_history.append(dual_losses)
        comm += comm_cost

        if _should_eval(k, config.K, eval_every):
            per_worker = metrics.per_worker_accuracy(theta, test_sets)
            avg, worst, sd = metrics.summarize_accuracy(per_worker)
            round_logs.append(RoundLog(
                round=k + 1,
                communication_rounds_consumed=comm,
                per_worker_acc=per_worker,
                avg_acc=avg,
                worst_acc=worst,
                acc_sd=sd,
                lam=lam.copy(),
            ))

    if config.K in checkpoint_rounds:
        theta_checkpoints[config.K] = theta

    return RunResult(
        algorithm=algorithm,
        seed=seed,
        config=config,
        round_logs=round_logs,
        final_theta=theta,
        lambda_history=lambda_history,
        theta_checkpoints=theta_checkpoints,
        dual_loss_history=dual_loss_history,
        communication_rounds_consumed=comm,
    )


def run_fgdra(
    config: TrainConfig,
    train_sets: list[Dataset],
    test_sets: list[Dataset],
    seed: int | None = None,
    eval_every: int = 1,
    checkpoint_rounds: set[int] | None = None,
) -> RunResult:
    """Group-DRO federated averaging with locally updated dual weights.

    Per round: the server samples m workers proportionally to lambda and
    broadcasts (theta, lambda_n); each sampled worker runs tau lambda-scaled
    SGD steps, lifts its own dual weight by exp(gamma * fresh-batch loss at
    the final iterate), and returns both in a single exchange; the server
    averages the models and renormalizes the full dual vector (unsampled
    entries keep their previous values).  Costs one communication round per
    algorithmic round.
    """
    seed = config.seeds[0] if seed is None else seed
    return _run(config, train_sets, test_sets, seed, eval_every, checkpoint_rounds, "fgdra")


def run_fedavg(
    config: TrainConfig,
    train_sets: list[Dataset],
    test_sets: list[Dataset],
    seed: int | None = None,
    eval_every: int = 1,
    checkpoint_rounds: set[int] | None = None,
) -> RunResult:
    """Plain federated averaging: uniform sampling, unweighted local SGD
    with step alpha.  The logged lambda stays the uniform vector."""
    seed = config.seeds[0] if seed is None else seed
    return _run(config, train_sets, test_sets, seed, eval_every, checkpoint_rounds, "fedavg")


def run_drfa(
    config: TrainConfig,
    train_sets: list[Dataset],
    test_sets: list[Dataset],
    seed: int | None = None,
    eval_every: int = 1,
    checkpoint_rounds: set[int] | None = None,
) -> RunResult:
    """Distributionally robust averaging with a server-side dual step.

    Identical primal phase to FGDRA, but the dual update uses
    importance-weighted (N/m) loss estimates taken at a uniformly random
    local iterate snapshot (one index per round, drawn by the server) and
    requires a second exchange, so each round consumes two communication
    rounds.
    """
    seed = config.seeds[0] if seed is None else seed
    return _run(config, train_sets, test_sets, seed, eval_every, checkpoint_rounds, "drfa")


RUNNERS = {"fgdra": run_fgdra, "drfa": run_drfa, "fedavg": run_fedavg}
