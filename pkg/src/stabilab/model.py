"""Loss families, bounded synthetic datasets, neighboring pairs, and the
constants under which the stability assumptions hold.

Four loss families are supported:

* ``Quadratic``:        f(theta, (a, y)) = (a.theta - y)^2 / 2
* ``RidgeQuadratic``:   quadratic plus (mu0/2)||theta||^2
* ``RegularizedSine``:  (m0/2)||theta||^2 + s*sin(a.theta - y)
* ``ScalarPower``:      (mu/p)|theta - y|^p with d = 1 and p in (1, 2)

Every dataset is bounded: ||x_i|| <= radius_D for the concatenated point
x_i = (a_i, y_i).  ``derive_constants`` returns constants under which the
regularity/curvature assumptions hold on the sampled domain, and
``check_assumptions`` is the random-sample audit of those claims.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

FAMILIES = ("Quadratic", "RidgeQuadratic", "RegularizedSine", "ScalarPower")
GENERATORS = ("unit_fixed", "sphere_uniform", "gaussian_clipped")

# Smallest parameter separation for which the ScalarPower Hoelder and
# sub-quadratic curvature constants are certified.  The power gradient is not
# globally Hoelder-p/2 nor power-p monotone near the diagonal, so constants
# are derived for separations at or above this floor.
POWER_SEPARATION_FLOOR = 1e-6

# Radius of the parameter ball sampled by check_assumptions; constants for the
# ScalarPower family are certified over this ball.
ASSUMPTION_BALL_RADIUS = 10.0


class DataPoint(NamedTuple):
    features: np.ndarray
    label: float


@dataclass(frozen=True)
class LossModel:
    """A loss family plus its parameters.

    Only the parameters relevant to ``family`` are meaningful; the rest stay
    at their defaults.
    """

    family: str
    mu0: float = 0.0   # RidgeQuadratic ridge weight
    m0: float = 0.0    # RegularizedSine base curvature
    s: float = 0.0     # RegularizedSine amplitude
    p: float = 2.0     # ScalarPower exponent
    mu: float = 0.0    # ScalarPower scale

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}")
        if self.family == "RidgeQuadratic" and self.mu0 <= 0:
            raise ValueError("RidgeQuadratic requires mu0 > 0")
        if self.family == "RegularizedSine":
            if self.m0 <= 0 or self.s < 0:
                raise ValueError("RegularizedSine requires m0 > 0 and s >= 0")
        if self.family == "ScalarPower":
            if not (1.0 < self.p < 2.0):
                raise ValueError("ScalarPower requires p in (1, 2)")
            if self.mu <= 0:
                raise ValueError("ScalarPower requires mu > 0")


def quadratic() -> LossModel:
    return LossModel("Quadratic")


def ridge_quadratic(mu0: float) -> LossModel:
    return LossModel("RidgeQuadratic", mu0=mu0)


def regularized_sine(m0: float, s: float) -> LossModel:
    return LossModel("RegularizedSine", m0=m0, s=s)


def scalar_power(p: float, mu: float) -> LossModel:
    return LossModel("ScalarPower", p=p, mu=mu)


@dataclass
class Dataset:
    """An ordered, bounded collection of n points x_i = (a_i, y_i)."""

    features: np.ndarray        # shape (n, d)
    labels: np.ndarray          # shape (n,)
    radius_D: float
    generator_spec: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float)
        if self.n < 1:
            raise ValueError("dataset needs n >= 1")
        if self.radius_D <= 0:
            raise ValueError("radius_D must be positive")
        norms = point_norms(self)
        if np.any(norms > self.radius_D * (1 + 1e-12)):
            raise ValueError("a point violates ||x|| <= radius_D")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim_d(self) -> int:
        return self.features.shape[1]

    def point(self, i: int) -> DataPoint:
        return DataPoint(self.features[i], float(self.labels[i]))

    @property
    def points(self) -> list[DataPoint]:
        return [self.point(i) for i in range(self.n)]


@dataclass
class NeighborPair:
    """Two equal-size datasets that agree everywhere except one index."""

    base: Dataset
    perturbed: Dataset
    differing_index: int

    def __post_init__(self):
        b, p = self.base, self.perturbed
        if b.n != p.n or b.dim_d != p.dim_d or b.radius_D != p.radius_D:
            raise ValueError("base and perturbed datasets are incompatible")
        if not (0 <= self.differing_index < b.n):
            raise ValueError("differing_index out of range")
        mask = np.ones(b.n, dtype=bool)
        mask[self.differing_index] = False
        same = np.array_equal(b.features[mask], p.features[mask]) and \
            np.array_equal(b.labels[mask], p.labels[mask])
        if not same:
            raise ValueError("datasets differ away from differing_index")


@dataclass(frozen=True)
class AssumptionConstants:
    """Constants realizing the regularity/curvature assumptions.

    ``p = 2`` denotes the quadratic / strongly convex / dissipative regimes;
    ``p in (1, 2)`` the sub-quadratic curvature regime.
    """

    K1: float
    K2: float
    mu: float
    m: float
    K: float
    p: float
    D: float
    E: float

    def as_dict(self) -> dict:
        return {
            "K1": self.K1, "K2": self.K2, "mu": self.mu, "m": self.m,
            "K": self.K, "p": self.p, "D": self.D, "E": self.E,
        }


def point_norms(dataset: Dataset) -> np.ndarray:
    """Norms of the concatenated (features, label) vectors."""
    return np.sqrt(
        np.sum(dataset.features ** 2, axis=1) + dataset.labels ** 2)


def _check_dim(loss: LossModel, theta: np.ndarray, d: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.shape[0] != d:
        raise ValueError(
            f"theta has shape {theta.shape}, expected ({d},)")
    if loss.family == "ScalarPower" and d != 1:
        raise ValueError("ScalarPower requires d = 1")
    return theta


def grad(loss: LossModel, theta: np.ndarray, x: DataPoint) -> np.ndarray:
    """Analytic gradient of f(theta, x) with respect to theta."""
    a = np.asarray(x.features, dtype=float)
    theta = _check_dim(loss, theta, a.shape[0])
    return grad_batch(loss, theta, a[None, :], np.array([x.label]))


def grad_batch(loss: LossModel, theta: np.ndarray, A: np.ndarray,
               Y: np.ndarray) -> np.ndarray:
    """Mean analytic gradient over the rows of (A, Y)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Y = np.asarray(Y, dtype=float)
    theta = _check_dim(loss, theta, A.shape[1])
    if loss.family in ("Quadratic", "RidgeQuadratic"):
        residual = A @ theta - Y
        g = A.T @ residual / A.shape[0]
        if loss.family == "RidgeQuadratic":
            g = g + loss.mu0 * theta
        return g
    if loss.family == "RegularizedSine":
        phase = np.cos(A @ theta - Y)
        return loss.m0 * theta + loss.s * (A.T @ phase) / A.shape[0]
    # ScalarPower, d = 1: mu*sign(theta - y)|theta - y|^{p-1}, 0 at the kink
    u = theta[0] - Y
    g = loss.mu * np.sign(u) * np.abs(u) ** (loss.p - 1.0)
    return np.array([np.mean(g)])


def _draw_point(generator: str, d: int, radius_D: float, label_range: float,
                rng: np.random.Generator) -> tuple[np.ndarray, float]:
    if generator == "unit_fixed":
        a = np.zeros(d)
        a[0] = 1.0
        return a, 1.0
    if generator == "sphere_uniform":
        z = rng.standard_normal(d + 1)
        z /= np.linalg.norm(z)
        z *= radius_D
    elif generator == "gaussian_clipped":
        z = rng.standard_normal(d + 1)
        z[d] *= label_range
        norm = np.linalg.norm(z)
        if norm > radius_D:
            z *= radius_D / norm
    else:
        raise ValueError(f"unknown generator {generator!r}")
    return z[:d], float(z[d])


def make_synthetic_dataset(spec: dict, seed: int) -> Dataset:
    """Deterministically generate a bounded dataset from a generator spec.

    ``spec`` keys: n, d, generator, radius_D (default 1.0, forced to sqrt(2)
    for unit_fixed), label_range (gaussian_clipped label scale, default 1.0).
    """
    n = int(spec["n"])
    d = int(spec["d"])
    generator = spec.get("generator", "gaussian_clipped")
    if generator not in GENERATORS:
        raise ValueError(f"unknown generator {generator!r}")
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    # unit_fixed points are (e1, 1) with norm sqrt(2) exactly
    default_D = np.sqrt(2.0) if generator == "unit_fixed" else 1.0
    radius_D = float(spec.get("radius_D", default_D))
    if radius_D <= 0:
        raise ValueError("radius_D must be positive")
    if generator == "unit_fixed" and radius_D < np.sqrt(2.0) - 1e-12:
        raise ValueError("unit_fixed points have norm sqrt(2) > radius_D")
    label_range = float(spec.get("label_range", 1.0))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    features = np.empty((n, d))
    labels = np.empty(n)
    for i in range(n):
        features[i], labels[i] = _draw_point(
            generator, d, radius_D, label_range, rng)
    full_spec = {"n": n, "d": d, "generator": generator,
                 "radius_D": radius_D, "label_range": label_range,
                 "seed": int(seed)}
    return Dataset(features, labels, radius_D, full_spec)


def make_neighbor(base: Dataset, index: int, seed: int) -> NeighborPair:
    """Replace one point of ``base`` with a fresh draw from its generator."""
    if not (0 <= index < base.n):
        raise ValueError(f"index {index} out of range [0, {base.n})")
    spec = base.generator_spec
    if not spec:
        raise ValueError("base dataset carries no generator spec")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    a, y = _draw_point(spec["generator"], base.dim_d, base.radius_D,
                       spec.get("label_range", 1.0), rng)
    features = base.features.copy()
    labels = base.labels.copy()
    features[index] = a
    labels[index] = y
    perturbed = Dataset(features, labels, base.radius_D, dict(spec))
    return NeighborPair(base, perturbed, index)


def empirical_minimizer(loss: LossModel, dataset: Dataset) -> np.ndarray:
    """Minimizer of the empirical loss (closed form where available)."""
    A, Y = dataset.features, dataset.labels
    n, d = A.shape
    if loss.family in ("Quadratic", "RidgeQuadratic"):
        H = A.T @ A / n + loss.mu0 * np.eye(d)
        rhs = A.T @ Y / n
        return np.linalg.lstsq(H, rhs, rcond=None)[0]
    from scipy.optimize import minimize

    def objective(theta):
        if loss.family == "RegularizedSine":
            vals = 0.5 * loss.m0 * theta @ theta + \
                loss.s * np.mean(np.sin(A @ theta - Y))
        else:
            vals = np.mean(
                loss.mu / loss.p * np.abs(theta[0] - Y) ** loss.p)
        return vals

    res = minimize(objective, np.zeros(d),
                   jac=lambda t: grad_batch(loss, t, A, Y),
                   method="L-BFGS-B", tol=1e-14)
    return res.x


def derive_constants(loss: LossModel, dataset: Dataset) -> AssumptionConstants:
    """Conservative constants realizing the assumptions for this pair.

    The supremum over the data space is replaced by the exact maximum over
    the realized dataset (constants are certified per-dataset).  Formulas are
    conservative, not tight; each carries a one-line derivation.
    """
    D = dataset.radius_D
    A, Y = dataset.features, dataset.labels
    grad_at_zero = np.array([
        np.linalg.norm(grad(loss, np.zeros(dataset.dim_d), dataset.point(i)))
        for i in range(dataset.n)])
    E = float(np.max(grad_at_zero))
    if loss.family in ("Quadratic", "RidgeQuadratic"):
        mu0 = loss.mu0 if loss.family == "RidgeQuadratic" else 0.0
        # Hessian a a^T + mu0 I has norm <= D^2 + mu0
        K1 = D ** 2 + mu0
        # ||(aa^T - bb^T)t - (ay - by')|| <= 2D||x - x'||(||t|| + 1)
        K2 = 2.0 * D
        return AssumptionConstants(K1=K1, K2=K2, mu=mu0, m=mu0,
                                   K=0.0, p=2.0, D=D, E=E)
    if loss.family == "RegularizedSine":
        m0, s = loss.m0, loss.s
        # gradient Jacobian m0 I - s sin(.) a a^T has norm <= m0 + s D^2
        K1 = m0 + s * D ** 2
        # s|cos(u)a - cos(u')a'| <= s(D + 1)||x - x'||(||t|| + 1)
        K2 = s * (D + 1.0)
        # <grad diff, dt> >= m0||dt||^2 - 2sD||dt|| >= (m0/2)||dt||^2 - 2s^2D^2/m0
        m = m0 / 2.0
        K = 2.0 * s ** 2 * D ** 2 / m0
        return AssumptionConstants(K1=K1, K2=K2, mu=0.0, m=m,
                                   K=K, p=2.0, D=D, E=E)
    # ScalarPower: constants certified for parameter separations >= the floor
    # inside the assumption ball, and over the realized label set.
    p, mu = loss.p, loss.mu
    d0 = POWER_SEPARATION_FLOOR
    # |phi(u)-phi(v)| <= 2^{2-p}|u-v|^{p-1} <= 2^{2-p} d0^{(p-2)/2} |u-v|^{p/2}
    # for |u-v| >= d0 (exponent p-1 < p/2 needs the separation floor)
    K1 = mu * 2.0 ** (2.0 - p) * d0 ** ((p - 2.0) / 2.0)
    # label change: |phi(t-y)-phi(t-y')| <= mu 2^{2-p}|y-y'|^{p-1}; divide by
    # the smallest distinct label gap zeta to land on K2||x-x'||
    gaps = np.abs(Y[:, None] - Y[None, :])
    distinct = gaps[gaps > 0]
    zeta = float(np.min(distinct)) if distinct.size else 1.0
    K2 = mu * 2.0 ** (2.0 - p) * max(1.0, zeta ** (p - 2.0))
    # (phi(u)-phi(v))(u-v) >= (p-1)|u-v|^2 (u^2+v^2)^{(p-2)/2}; on the ball
    # |u|,|v| <= U with |u-v| >= d0 this gives modulus (p-1)(d0/2U)^{2-p}
    U = ASSUMPTION_BALL_RADIUS + float(np.max(np.abs(Y)))
    mu_eff = (p - 1.0) * mu * min(1.0, (d0 / (2.0 * U)) ** (2.0 - p))
    return AssumptionConstants(K1=K1, K2=K2, mu=mu_eff, m=0.0,
                               K=0.0, p=p, D=D, E=E)


def check_assumptions(loss: LossModel, dataset: Dataset,
                      constants: AssumptionConstants, n_samples: int,
                      seed: int) -> dict:
    """Random-sample audit of the assumption inequalities.

    Samples theta_1, theta_2 from a ball of radius 10 and x, x_hat from the
    dataset, evaluates every inequality the family's regime claims, and
    reports the violation count plus the worst signed margin (positive =
    satisfied).  For ScalarPower, pairs closer than the certified separation
    floor are skipped (constants are certified away from the diagonal).
    """
    if n_samples < 1:
        raise ValueError("n_samples >= 1 required")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    d = dataset.dim_d
    worst = np.inf
    violations = 0
    checked = 0
    tol = 1e-9  # floating-point slack on inequalities expected to be tight
    for _ in range(n_samples):
        t1 = rng.standard_normal(d)
        t1 *= ASSUMPTION_BALL_RADIUS * rng.random() ** (1 / d) \
            / np.linalg.norm(t1)
        t2 = rng.standard_normal(d)
        t2 *= ASSUMPTION_BALL_RADIUS * rng.random() ** (1 / d) \
            / np.linalg.norm(t2)
        i, j = rng.integers(dataset.n), rng.integers(dataset.n)
        x, x_hat = dataset.point(int(i)), dataset.point(int(j))
        sep = np.linalg.norm(t1 - t2)
        if constants.p < 2.0 and sep < POWER_SEPARATION_FLOOR:
            continue
        g1x = grad(loss, t1, x)
        g2x = grad(loss, t2, x)
        g2xh = grad(loss, t2, x_hat)
        dx = np.linalg.norm(np.concatenate(
            [x.features - x_hat.features, [x.label - x_hat.label]]))
        margins = []
        theta_exp = constants.p / 2.0 if constants.p < 2.0 else 1.0
        data_exp = constants.p - 1.0 if constants.p < 2.0 else 1.0
        # pseudo-Lipschitz / Hoelder gradient bound
        lhs = np.linalg.norm(g1x - g2xh)
        rhs = constants.K1 * sep ** theta_exp + constants.K2 * dx * (
            np.linalg.norm(t1) ** data_exp
            + np.linalg.norm(t2) ** data_exp + 1.0)
        margins.append(rhs - lhs)
        inner = float((g1x - g2x) @ (t1 - t2))
        if constants.p == 2.0 and constants.mu > 0:
            margins.append(inner - constants.mu * sep ** 2)
        if constants.m > 0:
            margins.append(inner - (constants.m * sep ** 2 - constants.K))
        if constants.p < 2.0:
            margins.append(inner - constants.mu * sep ** constants.p)
        m = min(margins)
        checked += 1
        worst = min(worst, m)
        if m < -tol:
            violations += 1
    return {"violations": violations, "worst_margin": float(worst),
            "checked": checked}


def save_dataset_jsonl(dataset: Dataset, path) -> None:
    """Write a dataset as JSON lines: a header line, then one point per line."""
    spec = dataset.generator_spec
    header = {"n": dataset.n, "d": dataset.dim_d, "D": dataset.radius_D,
              "generator": spec.get("generator"), "seed": spec.get("seed")}
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for i in range(dataset.n):
            row = {"a": dataset.features[i].tolist(),
                   "y": float(dataset.labels[i])}
            fh.write(json.dumps(row) + "\n")


def load_dataset_jsonl(path) -> Dataset:
    with open(path) as fh:
        header = json.loads(fh.readline())
        features, labels = [], []
        for line in fh:
            row = json.loads(line)
            features.append(row["a"])
            labels.append(row["y"])
    spec = {"n": header["n"], "d": header["d"], "radius_D": header["D"],
            "generator": header.get("generator"), "seed": header.get("seed")}
    return Dataset(np.array(features), np.array(labels), header["D"], spec)
