"""SGD and noisy-SGD recursions with synchronous coupling.

The coupled pair runs both chains (base and perturbed dataset) with
identical minibatch index sequences and identical noise draws at every
step, so the pathwise distance upper-bounds the Wasserstein distance
between the two iterate laws.

Randomness is counter-based: every stream is keyed by
(master_seed, replica_id, stream_tag), so replicas are independent and
order-independent by construction, and both chains of a pair consume the
same streams structurally rather than incidentally.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .model import Dataset, LossModel, NeighborPair, grad_batch

# stream tags for the counter-based generators
_STREAM_MINIBATCH = 0
_STREAM_NOISE = 1

# abort a replica once an iterate norm exceeds this
DIVERGENCE_GUARD = 1e12


@dataclass(frozen=True)
class SGDConfig:
    eta: float
    batch_b: int
    k_max: int
    theta0: np.ndarray
    master_seed: int

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.batch_b < 1:
            raise ValueError("batch_b must be >= 1")
        if self.k_max < 0:
            raise ValueError("k_max must be >= 0")
        object.__setattr__(
            self, "theta0", np.asarray(self.theta0, dtype=float))


@dataclass(frozen=True)
class NoiseModel:
    """Additive per-step noise: none, diagonal Gaussian, or Laplace."""

    kind: str = "none"                      # none | gaussian_diag | laplace
    scale: tuple = ()                       # per-coordinate std / scale

    def __post_init__(self):
        if self.kind not in ("none", "gaussian_diag", "laplace"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        object.__setattr__(self, "scale", tuple(float(s) for s in self.scale))
        if self.kind != "none" and any(s <= 0 for s in self.scale):
            raise ValueError("noise scales must be positive")

    @property
    def sigma2(self) -> float:
        """E||xi||^2, the trace of the noise covariance."""
        if self.kind == "none":
            return 0.0
        if self.kind == "gaussian_diag":
            return float(sum(s ** 2 for s in self.scale))
        # Laplace(scale b) has variance 2 b^2 per coordinate
        return float(sum(2.0 * s ** 2 for s in self.scale))

    def draw(self, rng: np.random.Generator) -> np.ndarray | None:
        if self.kind == "none":
            return None
        if self.kind == "gaussian_diag":
            return rng.standard_normal(len(self.scale)) * np.array(self.scale)
        return rng.laplace(0.0, np.array(self.scale))


@dataclass
class ReplicaResult:
    replica_id: int
    checkpoints: list
    theta: dict           # k -> iterate of the base chain
    theta_hat: dict       # k -> iterate of the perturbed chain
    diverged: bool = False


@dataclass
class CoupledEnsemble:
    replicas: list            # ReplicaResult, ordered by replica_id
    checkpoints: list
    config: SGDConfig
    noise: NoiseModel

    def pairs_at(self, k: int) -> list:
        """(theta, theta_hat) across non-diverged replicas at checkpoint k."""
        return [(r.theta[k], r.theta_hat[k]) for r in self.replicas
                if not r.diverged]

    def any_diverged(self) -> bool:
        return any(r.diverged for r in self.replicas)


def _stream(master_seed: int, replica_id: int, tag: int) -> np.random.Generator:
    ss = np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=(int(replica_id), int(tag)))
    return np.random.Generator(np.random.Philox(ss))


def minibatch_sequence(n: int, b: int, k_max: int, master_seed: int,
                       replica_id: int) -> np.ndarray:
    """The per-step index sets Omega_k, shape (k_max, b), without replacement."""
    if b > n:
        raise ValueError("batch size exceeds dataset size")
    rng = _stream(master_seed, replica_id, _STREAM_MINIBATCH)
    out = np.empty((k_max, b), dtype=np.int64)
    for k in range(k_max):
        out[k] = rng.choice(n, size=b, replace=False)
    return out


def step(loss: LossModel, dataset: Dataset, theta: np.ndarray,
         omega: np.ndarray, eta: float, xi: np.ndarray | None = None
         ) -> np.ndarray:
    """One recursion step: theta - (eta/b) sum_{i in omega} grad f (+ eta*xi)."""
    omega = np.asarray(omega, dtype=np.int64)
    if omega.size == 0:
        raise ValueError("omega must be nonempty")
    g = grad_batch(loss, np.asarray(theta, dtype=float),
                   dataset.features[omega], dataset.labels[omega])
    out = theta - eta * g
    if xi is not None:
        out = out + eta * np.asarray(xi, dtype=float)
    return out


def run_coupled_pair(loss: LossModel, pair: NeighborPair, config: SGDConfig,
                     noise: NoiseModel, replica_id: int,
                     checkpoints=None) -> ReplicaResult:
    """Advance both chains of a pair with shared minibatches and noise."""
    checkpoints = sorted(set(
        checkpoints if checkpoints is not None else [config.k_max]))
    if checkpoints and checkpoints[-1] > config.k_max:
        raise ValueError("checkpoint beyond k_max")
    n = pair.base.n
    mb = _stream(config.master_seed, replica_id, _STREAM_MINIBATCH)
    nz = _stream(config.master_seed, replica_id, _STREAM_NOISE)
    theta = config.theta0.copy()
    theta_hat = config.theta0.copy()
    result = ReplicaResult(replica_id, checkpoints, {}, {})
    want = set(checkpoints)
    if 0 in want:
        result.theta[0] = theta.copy()
        result.theta_hat[0] = theta_hat.copy()
    for k in range(1, config.k_max + 1):
        omega = mb.choice(n, size=config.batch_b, replace=False)
        xi = noise.draw(nz)
        theta = step(loss, pair.base, theta, omega, config.eta, xi)
        theta_hat = step(loss, pair.perturbed, theta_hat, omega,
                         config.eta, xi)
        if (np.linalg.norm(theta) > DIVERGENCE_GUARD
                or np.linalg.norm(theta_hat) > DIVERGENCE_GUARD):
            result.diverged = True
            break
        if k in want:
            result.theta[k] = theta.copy()
            result.theta_hat[k] = theta_hat.copy()
    return result


def run_ensemble(loss: LossModel, pair: NeighborPair, config: SGDConfig,
                 noise: NoiseModel, R: int, checkpoints=None
                 ) -> CoupledEnsemble:
    """R independent coupled pairs; deterministic given master_seed."""
    if R < 1:
        raise ValueError("R >= 1 required")
    checkpoints = sorted(set(
        checkpoints if checkpoints is not None else [config.k_max]))
    threads = int(os.environ.get("STABILAB_THREADS", "1"))
    replica_ids = list(range(R))
    runner = lambda r: run_coupled_pair(
        loss, pair, config, noise, r, checkpoints)
    if threads > 1 and R > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(runner, replica_ids))
    else:
        results = [runner(r) for r in replica_ids]
    # results are keyed by replica_id, so execution order cannot matter
    results.sort(key=lambda r: r.replica_id)
    return CoupledEnsemble(results, checkpoints, config, noise)


def run_contraction_pair(loss: LossModel, dataset: Dataset, config: SGDConfig,
                         theta0_a: np.ndarray, theta0_b: np.ndarray,
                         noise: NoiseModel, replica_id: int = 0) -> np.ndarray:
    """Distances ||theta_k - theta_tilde_k|| for k = 0..k_max under shared
    randomness, both chains on the same dataset from two initial points."""
    mb = _stream(config.master_seed, replica_id, _STREAM_MINIBATCH)
    nz = _stream(config.master_seed, replica_id, _STREAM_NOISE)
    ta = np.asarray(theta0_a, dtype=float).copy()
    tb = np.asarray(theta0_b, dtype=float).copy()
    dist = np.empty(config.k_max + 1)
    dist[0] = np.linalg.norm(ta - tb)
    for k in range(1, config.k_max + 1):
        omega = mb.choice(dataset.n, size=config.batch_b, replace=False)
        xi = noise.draw(nz)
        ta = step(loss, dataset, ta, omega, config.eta, xi)
        tb = step(loss, dataset, tb, omega, config.eta, xi)
        dist[k] = np.linalg.norm(ta - tb)
    return dist


def dump_trajectories_csv(ensemble: CoupledEnsemble, path) -> None:
    """Optional trajectory dump: replica, k, chain, theta_0..theta_{d-1}."""
    d = ensemble.config.theta0.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replica", "k", "chain"]
                        + [f"theta_{j}" for j in range(d)])
        for rep in ensemble.replicas:
            for k in ensemble.checkpoints:
                if k not in rep.theta:
                    continue
                writer.writerow([rep.replica_id, k, "base"]
                                + [repr(v) for v in rep.theta[k]])
                writer.writerow([rep.replica_id, k, "perturbed"]
                                + [repr(v) for v in rep.theta_hat[k]])
