"""Closed-form stability bounds and the generic perturbation combinator.

Five bound regimes are implemented, one per theorem of the underlying
analysis, plus the shared ingredients: the quadratic contraction factor,
the drift constant K0, the minorization level eta_hat for Gaussian noise
(kept in log-space; its exponents reach -10^3 at realistic parameters),
the contraction factor eta_bar it implies, and the minimizer-norm bounds.

Conventions:

* ``k`` may be ``math.inf``; the geometric factor then uses its limit.
* Every bound returns a :class:`StabilityBound` with a ``constants_used``
  map for term-by-term provenance and a ``log_value`` that stays finite
  even when ``value`` overflows.
* Inadmissible step sizes raise :class:`InadmissibleError` naming the
  violated constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .model import AssumptionConstants, Dataset

K_INF = math.inf

EXACT_ENUMERATION_CAP = 20000


class InadmissibleError(ValueError):
    """A bound's step-size (or rate) condition is violated."""


@dataclass(frozen=True)
class StabilityBound:
    regime: str
    value: float            # W1, W2^2, or W_p^p depending on the regime
    k: float
    constants_used: dict
    admissible: bool = True
    log_value: float = -math.inf   # finite even when value overflows

    def as_dict(self) -> dict:
        return {"regime": self.regime, "value": self.value,
                "log_value": self.log_value,
                "k": "inf" if math.isinf(self.k) else int(self.k),
                "admissible": self.admissible,
                "constants_used": self.constants_used}


@dataclass(frozen=True)
class PerturbationInputs:
    """Inputs to the generic one-step perturbation bound.

    gamma is the kernel gap sup_theta W1(delta_theta P, delta_theta P_hat)
    / V_hat(theta); (delta, L) the drift pair of the perturbed kernel;
    V0_integral the Lyapunov mass of the initial law.
    """

    C: float
    rho: float
    gamma: float
    delta: float
    L: float
    V0_integral: float
    W0: float
    n_steps: float

    def __post_init__(self):
        if not (0 <= self.rho < 1):
            raise InadmissibleError("rho must lie in [0, 1)")
        if not (0 <= self.delta < 1):
            raise InadmissibleError("delta must lie in [0, 1)")
        for name in ("C", "gamma", "L", "W0"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.V0_integral < 1:
            raise ValueError("V0_integral is an integral of V >= 1")


@dataclass(frozen=True)
class NoisyRegimeConstants:
    """Drift/minorization constants for the noisy non-convex regime."""

    K0: float
    log_eta_hat: float
    epsilon: float
    eta0: float                    # eta_hat / 2 (0.0 if it underflows)
    gamma0: float                  # 1 - m*eta*epsilon/2
    psi: float                     # eta_hat / (2 eta K0), may underflow
    log_psi: float
    eta_bar: float                 # may round to 1.0; use the log form
    log_one_minus_eta_bar: float
    R: float                       # (2 K0 / m)(1 + epsilon)
    M: float = 0.0


def _geom_factor(rate: float, k: float) -> float:
    """(1 - rate^k) / (1 - rate), with the k = inf limit."""
    if not (0 <= rate < 1):
        raise InadmissibleError(f"geometric rate {rate} must lie in [0, 1)")
    if k == 0:
        return 0.0
    if rate == 0.0:
        return 1.0
    if math.isinf(k):
        return 1.0 / (1.0 - rate)
    # log(rate) via log1p only when rate is near 1, where 1 - rate is exact
    log_rate = math.log1p(-(1.0 - rate)) if rate > 0.5 else math.log(rate)
    return -math.expm1(k * log_rate) / (1.0 - rate)


def _one_minus_pow(rate: float, k: float) -> float:
    """1 - rate^k with the k = inf limit."""
    if k == 0:
        return 0.0
    if math.isinf(k):
        return 1.0
    return -math.expm1(k * math.log(rate)) if rate > 0 else 1.0


def rho_quadratic(dataset: Dataset, eta: float, b: int,
                  mode: str = "exact", n_mc: int = 10000,
                  seed: int = 0) -> dict:
    """E||I - (eta/b) sum_{i in Omega} a_i a_i^T|| over minibatches.

    Exact mode enumerates all C(n, b) minibatches (cap 20000); Monte-Carlo
    mode samples n_mc minibatches and reports a standard error.
    """
    if b > dataset.n:
        raise ValueError("batch size exceeds dataset size")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    A = dataset.features
    d = dataset.dim_d
    eye = np.eye(d)

    def spectral(omega) -> float:
        H = A[list(omega)].T @ A[list(omega)] / len(omega)
        return float(np.linalg.norm(eye - eta * H, 2))

    if mode == "exact":
        total = math.comb(dataset.n, b)
        if total > EXACT_ENUMERATION_CAP:
            raise ValueError(
                f"C({dataset.n},{b}) = {total} exceeds the enumeration cap "
                f"{EXACT_ENUMERATION_CAP}; use monte_carlo mode")
        vals = [spectral(om) for om in combinations(range(dataset.n), b)]
        return {"rho": float(np.mean(vals)), "stderr": 0.0}
    if mode != "monte_carlo":
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    vals = np.array([
        spectral(rng.choice(dataset.n, size=b, replace=False))
        for _ in range(n_mc)])
    return {"rho": float(np.mean(vals)),
            "stderr": float(np.std(vals, ddof=1) / np.sqrt(n_mc))}


def expected_q_norm(dataset: Dataset, b: int, mode: str = "exact",
                    n_mc: int = 10000, seed: int = 0) -> float:
    """E||sum_{i in Omega} a_i y_i|| over minibatches of size b."""
    A, Y = dataset.features, dataset.labels
    q = A * Y[:, None]

    if mode == "exact":
        total = math.comb(dataset.n, b)
        if total > EXACT_ENUMERATION_CAP:
            raise ValueError("enumeration over cap; use monte_carlo mode")
        vals = [np.linalg.norm(q[list(om)].sum(axis=0))
                for om in combinations(range(dataset.n), b)]
        return float(np.mean(vals))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    vals = [np.linalg.norm(q[rng.choice(dataset.n, b, replace=False)]
                           .sum(axis=0)) for _ in range(n_mc)]
    return float(np.mean(vals))


def bound_quadratic(rho: float, rho_hat: float, Eq1_norm: float, D: float,
                    eta: float, b: int, n: int, theta0_norm: float,
                    k: float) -> StabilityBound:
    """W1 bound for the pure quadratic loss.

    W1 <= ((1-rho^k)/(1-rho)) * (2 eta D^2 / n)
          * max{1 + ||theta0||, (1 - rho_hat + (eta/b) E||q1||) / (1 - rho_hat)}
    """
    if rho >= 1:
        raise InadmissibleError(f"rho = {rho} violates rho < 1")
    if rho_hat >= 1:
        raise InadmissibleError(f"rho_hat = {rho_hat} violates rho_hat < 1")
    geom = _geom_factor(rho, k)
    gamma = 2.0 * eta * D ** 2 / n
    kappa = max(1.0 + theta0_norm,
                (1.0 - rho_hat + eta / b * Eq1_norm) / (1.0 - rho_hat))
    value = geom * gamma * kappa
    constants = {"rho": rho, "rho_hat": rho_hat, "Eq1_norm": Eq1_norm,
                 "D": D, "eta": eta, "b": b, "n": n,
                 "theta0_norm": theta0_norm, "geom_factor": geom,
                 "kernel_gap_gamma": gamma, "kappa": kappa}
    return StabilityBound("Quadratic", value, k, constants,
                          log_value=math.log(value) if value > 0 else -math.inf)


def check_admissible_strongly_convex(constants: AssumptionConstants,
                                     eta: float) -> None:
    limit = min(1.0 / constants.mu,
                constants.mu / (constants.K1 ** 2
                                + 64.0 * constants.D ** 2 * constants.K2 ** 2))
    if eta >= limit:
        raise InadmissibleError(
            f"eta = {eta} violates eta < min(1/mu, mu/(K1^2 + 64 D^2 K2^2))"
            f" = {limit}")


def bound_strongly_convex(constants: AssumptionConstants, eta: float, n: int,
                          theta0_norm: float, k: float) -> StabilityBound:
    """W1 bound for mu-strongly convex losses."""
    if constants.mu <= 0:
        raise InadmissibleError("strongly convex regime needs mu > 0")
    check_admissible_strongly_convex(constants, eta)
    mu, K1, K2, D, E = (constants.mu, constants.K1, constants.K2,
                        constants.D, constants.E)
    pref = 8.0 * D * K2 * _one_minus_pow(1.0 - eta * mu / 2.0, k) / (n * mu) \
        * (2.0 * E / mu + 1.0)
    lyap = max(1.0 + 2.0 * theta0_norm ** 2 + 2.0 * E ** 2 / mu ** 2,
               2.0 - eta / mu * K1 ** 2 - 56.0 * eta / mu * D ** 2 * K2 ** 2
               + 64.0 * eta / mu ** 3 * D ** 2 * K2 ** 2 * E ** 2)
    value = pref * lyap
    cu = constants.as_dict() | {"eta": eta, "n": n,
                                "theta0_norm": theta0_norm,
                                "prefactor": pref, "lyapunov_max": lyap}
    return StabilityBound("StronglyConvex", value, k, cu,
                          log_value=math.log(value) if value > 0 else -math.inf)


def k0_constant(m: float, eta: float, K1: float, K2: float, D: float,
                theta_star_norm2: float, K: float, sigma2: float) -> float:
    """Drift constant K0 = 2m - eta K1^2 - 56 eta D^2 K2^2
    + 64 eta D^2 K2^2 ||theta*||^2 + 2K + eta sigma^2."""
    val = (2.0 * m - eta * K1 ** 2 - 56.0 * eta * D ** 2 * K2 ** 2
           + 64.0 * eta * D ** 2 * K2 ** 2 * theta_star_norm2
           + 2.0 * K + eta * sigma2)
    if val <= 0:
        raise InadmissibleError(
            f"K0 = {val} <= 0; the drift constant must be positive")
    return val


def default_m_grid(eta: float, grad_sup: float, size: int = 32) -> np.ndarray:
    lo = max(eta * grad_sup, 1e-8)
    hi = max(1e3 * eta * grad_sup, 1.0)
    return np.geomspace(lo, hi, size)


def eta_hat_gaussian_log(Sigma, eta: float, m: float, K0: float,
                         epsilon: float, K1: float, grad_at_star_sup: float,
                         M_grid=None) -> dict:
    """Log of the minorization level eta_hat for diagonal Gaussian noise.

    For each M the two branches of the lower bound are evaluated in
    log-space (the concentration branch log1p(-exp(.)) and the density-ratio
    branch, whose exponent carries 1/(2 eta^2) and routinely reaches -10^3);
    eta_hat is the square of the best min over the grid.
    """
    Sigma = np.atleast_1d(np.asarray(Sigma, dtype=float))
    if np.any(Sigma <= 0) or np.any(Sigma >= 1):
        raise ValueError("Sigma must satisfy 0 < Sigma < I (diagonal)")
    S2 = 2.0 * K0 / m * (1.0 + epsilon) - 1.0
    if S2 < 0:
        raise InadmissibleError(
            "2 K0 (1+epsilon)/m < 1: the sublevel set radius is undefined")
    S = math.sqrt(S2)
    sigma_inv_norm = 1.0 / float(np.min(Sigma))
    half_logdet = 0.5 * float(np.sum(np.log1p(-Sigma)))
    if M_grid is None:
        M_grid = default_m_grid(eta, grad_at_star_sup)
    M_grid = np.atleast_1d(np.asarray(M_grid, dtype=float))
    if np.any(M_grid < eta * grad_at_star_sup - 1e-15):
        raise ValueError("every M must satisfy M >= eta * grad_at_star_sup")
    best = -math.inf
    best_M = float(M_grid[0])
    rows = []
    for M in M_grid:
        t = -0.5 * (M / eta - grad_at_star_sup) ** 2 - half_logdet
        b1 = math.log1p(-math.exp(t)) if t < 0 else -math.inf
        b2 = -((1.0 + K1 * eta) * S / (2.0 * eta ** 2)) * sigma_inv_norm \
            * ((1.0 + K1 * eta) * S + 2.0 * (M + eta * grad_at_star_sup))
        cur = min(b1, b2)
        rows.append({"M": float(M), "log_branch_mass": b1,
                     "log_branch_ratio": b2})
        if cur > best:
            best, best_M = cur, float(M)
    if not math.isfinite(best):
        raise InadmissibleError("eta_hat lower bound is zero on this grid")
    return {"log_eta_hat": 2.0 * best, "argmax_M": best_M, "S": S,
            "branches": rows}


def eta_bar(m: float, eta: float, epsilon: float, eta_hat: float = None,
            log_eta_hat: float = None, K0: float = None) -> dict:
    """Contraction factor eta_bar = 1 - m eta eps (1+eps) eta_hat
    / (4m + 2 (1+eps) eta_hat), plus the implied (eta0, gamma0, psi).

    Returns log(1 - eta_bar) alongside, since eta_bar rounds to 1.0 when
    eta_hat is astronomically small.
    """
    if eta > 1.0:
        raise InadmissibleError(f"eta = {eta} violates eta <= 1")
    if not (0 < epsilon < 1):
        raise InadmissibleError("epsilon must lie in (0, 1)")
    if log_eta_hat is None:
        if not (0 < eta_hat < 1):
            raise InadmissibleError("eta_hat must lie in (0, 1)")
        log_eta_hat = math.log(eta_hat)
    if log_eta_hat >= 0:
        raise InadmissibleError("eta_hat must lie in (0, 1)")
    l1m = (math.log(m * eta * epsilon) + math.log1p(epsilon) + log_eta_hat
           - np.logaddexp(math.log(4.0 * m),
                          math.log(2.0) + math.log1p(epsilon) + log_eta_hat))
    l1m = float(l1m)
    out = {
        "eta_bar": 1.0 - math.exp(l1m),
        "log_one_minus_eta_bar": l1m,
        "eta0": math.exp(log_eta_hat) / 2.0,
        "gamma0": 1.0 - m * eta * epsilon / 2.0,
    }
    if K0 is not None:
        out["log_psi"] = log_eta_hat - math.log(2.0 * eta * K0)
        out["psi"] = math.exp(out["log_psi"])
    return out


def noisy_regime_constants(m: float, eta: float, epsilon: float, K0: float,
                           log_eta_hat: float, M: float = 0.0
                           ) -> NoisyRegimeConstants:
    """Bundle the drift/minorization constants for the noisy regime."""
    eb = eta_bar(m, eta, epsilon, log_eta_hat=log_eta_hat, K0=K0)
    return NoisyRegimeConstants(
        K0=K0, log_eta_hat=log_eta_hat, epsilon=epsilon,
        eta0=eb["eta0"], gamma0=eb["gamma0"], psi=eb["psi"],
        log_psi=eb["log_psi"], eta_bar=eb["eta_bar"],
        log_one_minus_eta_bar=eb["log_one_minus_eta_bar"],
        R=2.0 * K0 / m * (1.0 + epsilon), M=M)


def check_admissible_nonconvex(constants: AssumptionConstants,
                               eta: float) -> None:
    limit = min(1.0 / constants.m,
                constants.m / (constants.K1 ** 2
                               + 64.0 * constants.D ** 2 * constants.K2 ** 2))
    if eta >= limit:
        raise InadmissibleError(
            f"eta = {eta} violates eta < min(1/m, m/(K1^2 + 64 D^2 K2^2))"
            f" = {limit}")


def _log_one_minus_pow(l1m: float, k: float) -> float:
    """log(1 - rate^k) given l1m = log(1 - rate), with the k = inf limit."""
    if k == 0:
        return -math.inf
    if math.isinf(k):
        return 0.0
    q = math.exp(l1m)
    if q == 0.0 or k * q < 1e-12:
        # rate^k = exp(k log(1-q)) ~ 1 - k q; avoids 1 - 1.0 cancellation
        return math.log(k) + l1m
    return math.log(-math.expm1(k * math.log1p(-q)))


def bound_nonconvex_noisy(constants: AssumptionConstants, eta: float,
                          sigma2: float, b: int, n: int, theta0_norm: float,
                          k: float, noisy: NoisyRegimeConstants
                          ) -> StabilityBound:
    """W1 bound for dissipative losses with additive noise.

    Product of the geometric prefactor (1-eta_bar^k)/(2 sqrt(psi(1+psi))
    (1-eta_bar)), the kernel-gap factor (2b/n) max{...}, and the Lyapunov
    factor max{...}; evaluated in log-space because 1/(1-eta_bar) can be
    e^{1000} or more.  The minimizer norms are replaced by their
    dissipativity bound Q = (E + sqrt(E^2 + 4mK)) / (2m).
    """
    if constants.m <= 0:
        raise InadmissibleError("noisy non-convex regime needs m > 0")
    check_admissible_nonconvex(constants, eta)
    m, K1, K2, D, E, K = (constants.m, constants.K1, constants.K2,
                          constants.D, constants.E, constants.K)
    if noisy.log_one_minus_eta_bar >= 0:
        raise InadmissibleError("eta_bar >= 1: no kernel contraction")
    Q = minimizer_norm_bound("dissipative", m=m, K=K, E=E)
    psi, log_psi = noisy.psi, noisy.log_psi
    l1m = noisy.log_one_minus_eta_bar

    log_num = _log_one_minus_pow(l1m, k)
    if log_num == -math.inf:
        return StabilityBound("NonconvexNoisy", 0.0, k,
                              constants.as_dict() | {"Q": Q})
    log_pref = log_num - math.log(2.0) \
        - 0.5 * (log_psi + math.log1p(psi)) - l1m

    log_gap_a = log_psi + math.log(4.0 + 8.0 * eta ** 2 * K1 ** 2)
    gap_b_inner = psi * (1.0 + eta ** 2 * sigma2
                         + 16.0 * (1.0 + 2.0 * eta ** 2 * K1 ** 2) * Q ** 2
                         + 4.0 * eta ** 2 * (2.0 * E ** 2
                                             + 2.0 * K1 ** 2 * Q ** 2))
    log_gap_b = math.log1p(gap_b_inner)
    log_gap = math.log(2.0 * b / n) + max(log_gap_a, log_gap_b)

    lyap = max(1.0 + 2.0 * theta0_norm ** 2 + 2.0 * Q ** 2,
               2.0 - eta / m * K1 ** 2 - 56.0 * eta / m * D ** 2 * K2 ** 2
               + 64.0 * eta / m * D ** 2 * K2 ** 2 * Q ** 2
               + 2.0 * K / m + eta / m * sigma2)
    log_value = log_pref + log_gap + math.log(lyap)
    try:
        value = math.exp(log_value)
    except OverflowError:
        value = math.inf
    cu = constants.as_dict() | {
        "eta": eta, "sigma2": sigma2, "b": b, "n": n,
        "theta0_norm": theta0_norm, "Q": Q, "K0": noisy.K0,
        "log_eta_hat": noisy.log_eta_hat, "epsilon": noisy.epsilon,
        "log_psi": log_psi, "log_one_minus_eta_bar": l1m,
        "log_prefactor": log_pref, "log_kernel_gap_factor": log_gap,
        "lyapunov_max": lyap}
    return StabilityBound("NonconvexNoisy", value, k, cu,
                          log_value=log_value)


def bound_nonconvex_plain(constants: AssumptionConstants, eta: float, b: int,
                          n: int, theta0_norm: float, k: float
                          ) -> StabilityBound:
    """W2^2 bound for dissipative losses without noise (persistent 2K/m)."""
    if constants.m <= 0:
        raise InadmissibleError("non-convex regime needs m > 0")
    check_admissible_nonconvex(constants, eta)
    m, K1, K2, D, E, K = (constants.m, constants.K1, constants.K2,
                          constants.D, constants.E, constants.K)
    Q = minimizer_norm_bound("dissipative", m=m, K=K, E=E)
    B = (4.0 * theta0_norm ** 2 + 4.0 * Q ** 2 + 4.0
         - 2.0 * eta / m * K1 ** 2 - 112.0 * eta / m * D ** 2 * K2 ** 2
         + 128.0 * eta / m * D ** 2 * K2 ** 2 * Q ** 2
         + 4.0 * K / m + 2.0 * Q ** 2)
    factor = _one_minus_pow(1.0 - eta * m, k)
    term1 = 4.0 * D ** 2 * K2 ** 2 * eta * (8.0 * B + 2.0) / (b * n * m)
    term2 = 4.0 * K2 * D * (1.0 + K1 * eta) * (1.0 + 5.0 * B) / (n * m)
    term3 = 2.0 * K / m
    value = factor * (term1 + term2 + term3)
    cu = constants.as_dict() | {
        "eta": eta, "b": b, "n": n, "theta0_norm": theta0_norm, "Q": Q,
        "B": B, "geometric_factor": factor, "term_batch": term1,
        "term_data": term2, "term_persistent": term3}
    return StabilityBound("NonconvexPlain", value, k, cu,
                          log_value=math.log(value) if value > 0 else -math.inf)


def bound_subconvex(constants: AssumptionConstants, eta: float, b: int,
                    n: int) -> StabilityBound:
    """Stationary W_p^p bound for the sub-quadratic curvature regime.

    Evaluates the proof-display form C2/(b n mu) + C3/n; the theorem
    statement's C2/(b n) reading is recorded in constants_used as well.
    """
    p, mu, K1, K2, D, E = (constants.p, constants.mu, constants.K1,
                           constants.K2, constants.D, constants.E)
    if not (1.0 < p < 2.0):
        raise InadmissibleError("sub-quadratic regime needs p in (1, 2)")
    if mu <= 0:
        raise InadmissibleError("sub-quadratic regime needs mu > 0")
    limit = mu / (K1 ** 2 + 2.0 ** (p + 4.0) * D ** 2 * K2 ** 2)
    if eta > limit * (1 + 1e-12):
        raise InadmissibleError(
            f"eta = {eta} violates eta <= mu/(K1^2 + 2^(p+4) D^2 K2^2)"
            f" = {limit}")
    ep = (E / mu) ** (p / (p - 1.0))
    C2 = 4.0 * D ** 2 * K2 ** 2 * eta / mu * (
        2.0 ** (p + 2.0) * (8.0 * eta / mu * D ** 2 * K2 ** 2
                            * (2.0 ** (p + 1.0) * ep + 5.0))
        + 2.0 ** (p + 2.0) * ep + 10.0)
    C3 = (32.0 * D ** 3 * K2 ** 3 * eta / mu ** 2 * (1.0 + K1 * eta)
          * 10.0 * 2.0 ** (p - 1.0) * (2.0 ** (p + 1.0) * ep + 5.0)
          + 4.0 * D * K2 / mu * (1.0 + K1 * eta)
          * (10.0 * 2.0 ** (p - 1.0) * ep + 5.0))
    value = C2 / (b * n * mu) + C3 / n
    cu = constants.as_dict() | {
        "eta": eta, "b": b, "n": n, "C2": C2, "C3": C3,
        "value_proof_display": value,
        "value_statement_reading": C2 / (b * n) + C3 / n}
    return StabilityBound("SubConvexStationary", value, K_INF, cu,
                          log_value=math.log(value) if value > 0 else -math.inf)


def minimizer_norm_bound(regime: str, mu: float = None, m: float = None,
                         K: float = None, p: float = None,
                         E: float = None) -> float:
    """Upper bound on the empirical minimizer norm per regime."""
    if regime == "strongly_convex":
        if not mu or mu <= 0:
            raise ValueError("strongly_convex needs mu > 0")
        return E / mu
    if regime == "dissipative":
        if not m or m <= 0:
            raise ValueError("dissipative needs m > 0")
        return (E + math.sqrt(E ** 2 + 4.0 * m * K)) / (2.0 * m)
    if regime == "subconvex":
        if not mu or mu <= 0:
            raise ValueError("subconvex needs mu > 0")
        return (E / mu) ** (1.0 / (p - 1.0))
    raise ValueError(f"unknown regime {regime!r}")


def perturbation_combine(inputs: PerturbationInputs) -> float:
    """Generic kernel-perturbation bound:
    C (rho^n W0 + (1 - rho^n) gamma kappa / (1 - rho)),
    kappa = max{V0_integral, L / (1 - delta)}."""
    kappa = max(inputs.V0_integral, inputs.L / (1.0 - inputs.delta))
    decayed = inputs.rho ** inputs.n_steps if not math.isinf(inputs.n_steps) \
        else 0.0
    return inputs.C * (decayed * inputs.W0
                       + (1.0 - decayed) * inputs.gamma * kappa
                       / (1.0 - inputs.rho))


def generalization_from_stability(L_lipschitz: float, w1: float) -> float:
    """Generalization gap bound: Lipschitz constant times the W1 stability."""
    if L_lipschitz < 0 or w1 < 0:
        raise ValueError("both arguments must be nonnegative")
    return L_lipschitz * w1
