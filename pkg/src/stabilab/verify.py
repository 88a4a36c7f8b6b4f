"""Empirical certificates for the bound machinery.

Each check audits one ingredient of the stability analysis (contraction
rate, Lyapunov drift, kernel perturbation gap, Gaussian minorization) or the
end-to-end dominance of a theoretical bound over an empirical estimate.
Grid- and sample-based checks are necessary-condition audits: a failure
refutes the claimed constant, a pass supports it.  The statistical margin is
three standard errors unless stated otherwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import logsumexp

from .bounds import (EXACT_ENUMERATION_CAP, StabilityBound,
                     eta_hat_gaussian_log)
from .dynamics import NoiseModel, SGDConfig, run_contraction_pair, step
from .model import (Dataset, LossModel, NeighborPair, empirical_minimizer,
                    grad_batch)
from .transport import TransportEstimate

THREE_SIGMA = "three standard errors of the Monte-Carlo mean"


@dataclass
class Certificate:
    kind: str
    passed: bool
    margin: float          # signed slack, positive = satisfied
    details: dict = field(default_factory=dict)
    confidence: str = THREE_SIGMA

    def as_dict(self) -> dict:
        return {"kind": self.kind, "passed": self.passed,
                "margin": self.margin, "details": self.details,
                "confidence": self.confidence}


def write_certificates_jsonl(certs, path) -> None:
    with open(path, "w") as fh:
        for cert in certs:
            fh.write(json.dumps(cert.as_dict(), sort_keys=True) + "\n")


def _lyapunov(kind: str, loss: LossModel, dataset: Dataset):
    if kind == "one_plus_norm":
        return lambda t: 1.0 + np.linalg.norm(t)
    if kind == "one_plus_sq_dist_to_min":
        theta_star = empirical_minimizer(loss, dataset)
        return lambda t: 1.0 + float(
            np.sum((np.asarray(t, dtype=float) - theta_star) ** 2))
    raise ValueError(f"unknown Lyapunov kind {kind!r}")


def check_contraction(loss: LossModel, dataset: Dataset, eta: float, b: int,
                      claimed_rate: float, k_max: int, R: int, seed: int,
                      theta0_a=None, theta0_b=None,
                      noise: NoiseModel = NoiseModel()) -> Certificate:
    """Mean coupled distance from two starts vs claimed_rate^k * ||delta0||."""
    if not (0 < claimed_rate < 1):
        raise ValueError("claimed_rate must lie in (0, 1)")
    d = dataset.dim_d
    if theta0_a is None:
        theta0_a = np.ones(d)
    if theta0_b is None:
        theta0_b = np.zeros(d)
    theta0_a = np.asarray(theta0_a, dtype=float)
    theta0_b = np.asarray(theta0_b, dtype=float)
    config = SGDConfig(eta=eta, batch_b=b, k_max=k_max,
                       theta0=theta0_a, master_seed=seed)
    dists = np.array([
        run_contraction_pair(loss, dataset, config, theta0_a, theta0_b,
                             noise, replica_id=r)
        for r in range(R)])
    mean = dists.mean(axis=0)
    se = dists.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 \
        else np.zeros(k_max + 1)
    delta0 = np.linalg.norm(theta0_a - theta0_b)
    ks = np.arange(k_max + 1)
    claim = claimed_rate ** ks * delta0
    margins = claim + 3.0 * se - mean
    worst = int(np.argmin(margins))
    margin = float(margins[worst])
    return Certificate(
        kind="contraction", passed=margin >= 0, margin=margin,
        details={"claimed_rate": claimed_rate, "worst_k": worst,
                 "mean_at_worst_k": float(mean[worst]),
                 "claim_at_worst_k": float(claim[worst]),
                 "stderr_at_worst_k": float(se[worst]),
                 "R": R, "k_max": k_max, "seed": seed})


def check_drift(loss: LossModel, dataset_hat: Dataset, eta: float, b: int,
                lyapunov: str, claimed_delta: float, claimed_L: float,
                theta_grid, mode: str = "exact", n_mc: int = 2000,
                seed: int = 0, noise: NoiseModel = NoiseModel()
                ) -> Certificate:
    """One-step Lyapunov drift: (P V)(theta) <= delta V(theta) + L on a grid.

    Exact mode enumerates minibatches (noiseless kernel only); Monte-Carlo
    mode samples minibatches and noise and adds a 3 SE margin.
    """
    if not (0 < claimed_delta < 1):
        raise ValueError("claimed_delta must lie in (0, 1)")
    V = _lyapunov(lyapunov, loss, dataset_hat)
    theta_grid = [np.atleast_1d(np.asarray(t, dtype=float))
                  for t in theta_grid]
    if not theta_grid:
        raise ValueError("theta_grid must be nonempty")
    n = dataset_hat.n
    worst_margin = math.inf
    worst = {}
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    if mode == "exact":
        if noise.kind != "none":
            raise ValueError("exact drift mode supports the noiseless kernel")
        if math.comb(n, b) > EXACT_ENUMERATION_CAP:
            raise ValueError("enumeration over cap; use monte_carlo mode")
        omegas = list(combinations(range(n), b))
    for theta in theta_grid:
        if mode == "exact":
            vals = [V(step(loss, dataset_hat, theta, np.array(om), eta))
                    for om in omegas]
            se = 0.0
        elif mode == "monte_carlo":
            vals = []
            for _ in range(n_mc):
                om = rng.choice(n, size=b, replace=False)
                vals.append(V(step(loss, dataset_hat, theta, om, eta,
                                   noise.draw(rng))))
            se = float(np.std(vals, ddof=1) / np.sqrt(len(vals)))
        else:
            raise ValueError(f"unknown mode {mode!r}")
        pv = float(np.mean(vals))
        margin = claimed_delta * V(theta) + claimed_L + 3.0 * se - pv
        if margin < worst_margin:
            worst_margin = margin
            worst = {"theta": theta.tolist(), "PV": pv, "V": V(theta),
                     "stderr": se}
    return Certificate(
        kind="drift", passed=worst_margin >= -1e-12, margin=float(worst_margin),
        details={"claimed_delta": claimed_delta, "claimed_L": claimed_L,
                 "lyapunov": lyapunov, "mode": mode, "seed": seed} | worst,
        confidence="exact enumeration" if mode == "exact" else THREE_SIGMA)


def check_kernel_gap(loss: LossModel, pair: NeighborPair, eta: float, b: int,
                     lyapunov: str, claimed_gamma: float, theta_grid,
                     R: int, seed: int) -> Certificate:
    """One-step coupled kernel gap vs the claimed gamma.

    The coupled mean distance upper-bounds W1 between the two one-step
    kernels, so a pass certifies consistency of the claimed gap, not
    tightness.
    """
    V = _lyapunov(lyapunov, loss, pair.perturbed)
    theta_grid = [np.atleast_1d(np.asarray(t, dtype=float))
                  for t in theta_grid]
    if not theta_grid:
        raise ValueError("theta_grid must be nonempty")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    n = pair.base.n
    worst_ratio = -math.inf
    worst = {}
    for theta in theta_grid:
        dists = np.empty(R)
        for r in range(R):
            omega = rng.choice(n, size=b, replace=False)
            a = step(loss, pair.base, theta, omega, eta)
            bb = step(loss, pair.perturbed, theta, omega, eta)
            dists[r] = np.linalg.norm(a - bb)
        ratio = float(np.mean(dists)) / V(theta)
        se = float(np.std(dists, ddof=1) / np.sqrt(R)) / V(theta) \
            if R > 1 else 0.0
        if ratio - 3.0 * se > worst_ratio:
            worst_ratio = ratio - 3.0 * se
            worst = {"theta": theta.tolist(), "measured_gap": ratio,
                     "stderr": se}
    margin = claimed_gamma - worst_ratio
    return Certificate(
        kind="kernel_gap", passed=margin >= 0, margin=float(margin),
        details={"claimed_gamma": claimed_gamma, "lyapunov": lyapunov,
                 "R": R, "seed": seed} | worst)


def _log_mixture_density(loss, dataset, eta, b, Sigma, theta, theta1,
                         omegas) -> float:
    """log p(theta, theta1) for the Gaussian-noise one-step kernel, as an
    exact mixture over the enumerated minibatches."""
    d = dataset.dim_d
    var = eta ** 2 * Sigma
    log_norm = -0.5 * (d * math.log(2.0 * math.pi) + np.sum(np.log(var)))
    logs = np.empty(len(omegas))
    for idx, om in enumerate(omegas):
        om = np.asarray(om, dtype=np.int64)
        mean = theta - eta * grad_batch(loss, theta, dataset.features[om],
                                        dataset.labels[om])
        logs[idx] = log_norm - 0.5 * np.sum((theta1 - mean) ** 2 / var)
    return float(logsumexp(logs) - math.log(len(omegas)))


def check_minorization_gaussian(loss: LossModel, dataset: Dataset, eta: float,
                                b: int, Sigma, m: float, K0: float,
                                epsilon: float, M: float, n_grid: int = 33,
                                seed: int = 0, K1: float = None
                                ) -> Certificate:
    """Density-ratio minorization audit for diagonal Gaussian noise, d <= 2.

    Checks inf p(theta, theta1) / p(theta*, theta1) >= sqrt(eta_hat) over
    the grid {V(theta) <= R} x {||theta1 - theta*|| <= M}, with eta_hat from
    the closed-form lower bound.  Margins are reported in log-space.
    """
    d = dataset.dim_d
    if d > 2:
        raise ValueError("minorization grid check supports d <= 2 only")
    Sigma = np.atleast_1d(np.asarray(Sigma, dtype=float))
    if math.comb(dataset.n, b) > EXACT_ENUMERATION_CAP:
        raise ValueError("minibatch enumeration over cap")
    omegas = list(combinations(range(dataset.n), b))
    theta_star = empirical_minimizer(loss, dataset)
    grad_sup = max(
        float(np.linalg.norm(grad_batch(
            loss, theta_star, dataset.features[i:i + 1],
            dataset.labels[i:i + 1])))
        for i in range(dataset.n))
    if K1 is None:
        from .model import derive_constants
        K1 = derive_constants(loss, dataset).K1
    eh = eta_hat_gaussian_log(Sigma, eta, m, K0, epsilon, K1, grad_sup,
                              M_grid=[max(M, eta * grad_sup)])
    R = 2.0 * K0 / m * (1.0 + epsilon)
    r_theta = math.sqrt(max(R - 1.0, 0.0))

    def ball_grid(center, radius):
        axes = [np.linspace(-radius, radius, n_grid)] * d
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([ax.ravel() for ax in mesh], axis=1)
        pts = pts[np.linalg.norm(pts, axis=1) <= radius + 1e-12]
        return pts + np.asarray(center)

    thetas = ball_grid(theta_star, r_theta)
    theta1s = ball_grid(theta_star, M)
    log_at_star = np.array([
        _log_mixture_density(loss, dataset, eta, b, Sigma, theta_star, t1,
                             omegas) for t1 in theta1s])
    min_log_ratio = math.inf
    for theta in thetas:
        for j, t1 in enumerate(theta1s):
            lr = _log_mixture_density(loss, dataset, eta, b, Sigma, theta,
                                      t1, omegas) - log_at_star[j]
            min_log_ratio = min(min_log_ratio, lr)
    margin = min_log_ratio - 0.5 * eh["log_eta_hat"]
    return Certificate(
        kind="minorization", passed=margin >= 0, margin=float(margin),
        details={"log_eta_hat": eh["log_eta_hat"], "M": M, "R": R,
                 "min_log_density_ratio": float(min_log_ratio),
                 "n_theta": len(thetas), "n_theta1": len(theta1s),
                 "grad_at_star_sup": grad_sup},
        confidence="exact densities on a finite grid; margin in log-space")


_REGIME_P = {"Quadratic": 1.0, "StronglyConvex": 1.0, "NonconvexNoisy": 1.0,
             "NonconvexPlain": 2.0}


def check_bound_dominates(empirical: TransportEstimate,
                          theoretical: StabilityBound,
                          margin_rule: str = "three_sigma",
                          fixed_rel: float = 0.0) -> Certificate:
    """Empirical estimate vs theoretical bound.

    Coupled estimates upper-bound the true distance, so they get no
    statistical margin (empirical <= theory is the conservative direction);
    assignment/order-statistics estimates use the stated margin rule.
    """
    expected_p = _REGIME_P.get(theoretical.regime,
                               theoretical.constants_used.get("p"))
    if expected_p is not None and abs(empirical.p - expected_p) > 1e-12:
        raise ValueError(
            f"estimator order p = {empirical.p} does not match the "
            f"{theoretical.regime} regime (p = {expected_p})")
    # regimes stated in W2^2 / W_p^p compare against the p-th-power mean
    emp_value = empirical.value if expected_p == 1.0 \
        else empirical.power_mean
    if empirical.method == "coupled":
        margin_abs = 0.0
        rule = "coupled upper bound, no margin"
    elif margin_rule == "three_sigma":
        margin_abs = 3.0 * empirical.stderr
        rule = THREE_SIGMA
    elif margin_rule == "fixed":
        margin_abs = fixed_rel * theoretical.value
        rule = f"fixed relative margin {fixed_rel}"
    else:
        raise ValueError(f"unknown margin rule {margin_rule!r}")
    margin = theoretical.value + margin_abs - emp_value
    return Certificate(
        kind="dominance", passed=margin >= 0, margin=float(margin),
        details={"empirical": emp_value, "estimator": empirical.method,
                 "theoretical": theoretical.value,
                 "regime": theoretical.regime, "margin_abs": margin_abs},
        confidence=rule)
