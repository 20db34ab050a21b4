"""Ground-truth multi-bandit environments: generation, sampling and JSON files."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvalidEnvironmentError

ARRIVAL_MODES = ("balanced", "data_poor")
CONTEXT_KINDS = ("mixture_gaussian", "uniform")

_CONTEXT_DEFAULTS = {
    "mixture_gaussian": {"weight": 0.5, "loc": 1.0, "scale": 1.0},
    "uniform": {"low": -1.0, "high": 1.0},
}


@dataclass(frozen=True)
class ContextDistribution:
    """Elementwise i.i.d. context law.

    ``mixture_gaussian`` draws each coordinate from ``N(-loc, scale^2)`` with
    probability ``weight`` and from ``N(loc, scale^2)`` otherwise;
    ``uniform`` draws from ``[low, high]``.
    """

    kind: str = "mixture_gaussian"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CONTEXT_KINDS:
            raise InvalidEnvironmentError("context.kind", f"unknown kind {self.kind!r}")
        unknown = set(self.params) - set(_CONTEXT_DEFAULTS[self.kind])
        if unknown:
            raise InvalidEnvironmentError("context.params", f"unknown parameters {sorted(unknown)}")
        p = self.resolved()
        if self.kind == "uniform" and not p["low"] < p["high"]:
            raise InvalidEnvironmentError("context.params", "uniform bounds must satisfy low < high")
        if self.kind == "mixture_gaussian":
            if not 0.0 <= p["weight"] <= 1.0:
                raise InvalidEnvironmentError("context.params", "mixture weight must lie in [0, 1]")
            if p["scale"] < 0:
                raise InvalidEnvironmentError("context.params", "scale must be nonnegative")

    def resolved(self) -> dict:
        return {**_CONTEXT_DEFAULTS[self.kind], **self.params}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}


@dataclass(frozen=True, eq=False)
class EnvTruth:
    """Hidden parameters of an environment.

    Attributes
    ----------
    beta : ndarray of shape (N, K, d)
        Instance-specific arm parameters.
    beta0 : ndarray of shape (K, d)
        Shared arm means.
    Sigma : ndarray of shape (K, d, d)
        Per-arm covariance of the instance parameters around ``beta0``.
    sigma : ndarray of shape (K,)
        Reward noise standard deviations.
    arrival : ndarray of shape (N,)
        Probability that a step arrives at each instance.
    """

    beta: np.ndarray
    beta0: np.ndarray
    Sigma: np.ndarray
    sigma: np.ndarray
    arrival: np.ndarray
    context: ContextDistribution = field(default_factory=ContextDistribution)

    def __post_init__(self):
        validate_env(self)

    @property
    def N(self) -> int:
        return self.beta.shape[0]

    @property
    def K(self) -> int:
        return self.beta.shape[1]

    @property
    def d(self) -> int:
        return self.beta.shape[2]

    def expected_rewards(self, j: int, x) -> np.ndarray:
        return self.beta[j] @ x

    def optimal_arm(self, j: int, x) -> int:
        return int(np.argmax(self.beta[j] @ x))


def validate_env(env: EnvTruth) -> None:
    if env.beta.ndim != 3:
        raise InvalidEnvironmentError("beta", f"expected an N x K x d array, got shape {env.beta.shape}")
    N, K, d = env.beta.shape
    if min(N, K, d) < 1:
        raise InvalidEnvironmentError("beta", f"all of N, K, d must be >= 1, got {(N, K, d)}")
    shapes = {"beta0": (K, d), "sigma_prior": (K, d, d), "noise_sd": (K,), "arrival": (N,)}
    arrays = {"beta0": env.beta0, "sigma_prior": env.Sigma, "noise_sd": env.sigma, "arrival": env.arrival}
    for key, arr in arrays.items():
        if arr.shape != shapes[key]:
            raise InvalidEnvironmentError(key, f"expected shape {shapes[key]}, got {arr.shape}")
    for key, arr in (("beta", env.beta), *arrays.items()):
        if not np.all(np.isfinite(arr)):
            raise InvalidEnvironmentError(key, "contains non-finite values")
    if np.any(env.sigma < 0):
        raise InvalidEnvironmentError("noise_sd", "noise standard deviations must be nonnegative")
    if np.any(env.arrival < 0) or abs(env.arrival.sum() - 1.0) > 1e-12:
        raise InvalidEnvironmentError(
            "arrival", f"must be nonnegative and sum to 1 (sum={env.arrival.sum()!r})")
    for k in range(K):
        S = env.Sigma[k]
        if not np.allclose(S, S.T, atol=1e-12, rtol=0):
            raise InvalidEnvironmentError("sigma_prior", f"arm {k} covariance is not symmetric")
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise InvalidEnvironmentError("sigma_prior", f"arm {k} covariance is not positive definite") from None


def arrival_probabilities(N: int, mode: str = "balanced") -> np.ndarray:
    """Balanced ``1/N`` arrivals, or data-poor with ``p_0 = 0.1 p_i`` for every other ``i``."""
    if mode == "balanced":
        return np.full(N, 1.0 / N)
    if mode == "data_poor":
        if N == 1:
            return np.ones(1)
        p = np.full(N, 1.0 / (N - 0.9))
        p[0] = 0.1 / (N - 0.9)
        return p
    raise ValueError(f"unknown arrival mode {mode!r}; expected one of {ARRIVAL_MODES}")


def _check_sizes(N, K, d):
    for name, v in (("N", N), ("K", K), ("d", d)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v!r}")


def generate_hierarchical_env(N: int, K: int, d: int, arrival_mode: str = "balanced",
                              rng=None, context: ContextDistribution | None = None) -> EnvTruth:
    """Draw ``beta0 ~ N(0, I)``, ``Sigma = b b' + I`` and ``beta_j ~ N(beta0, Sigma)`` per arm."""
    _check_sizes(N, K, d)
    rng = np.random.default_rng(rng)
    beta0 = rng.standard_normal((K, d))
    Sigma = np.empty((K, d, d))
    beta = np.empty((N, K, d))
    for k in range(K):
        b = rng.standard_normal(d)
        Sigma[k] = np.outer(b, b) + np.eye(d)
        L = np.linalg.cholesky(Sigma[k])
        beta[:, k] = beta0[k] + rng.standard_normal((N, d)) @ L.T
    return EnvTruth(beta, beta0, Sigma, np.ones(K), arrival_probabilities(N, arrival_mode),
                    context or ContextDistribution())


def generate_sparse_env(N: int, K: int, d: int, s: int = 1, delta_scale: float = 1.0,
                        arrival_mode: str = "balanced", rng=None,
                        context: ContextDistribution | None = None) -> EnvTruth:
    """Instances deviate from ``beta0`` on exactly ``s`` random coordinates."""
    _check_sizes(N, K, d)
    if not 0 <= s <= d:
        raise ValueError(f"support size s must lie in [0, d={d}], got {s}")
    rng = np.random.default_rng(rng)
    beta0 = rng.standard_normal((K, d))
    beta = np.repeat(beta0[None], N, axis=0)
    for j in range(N):
        for k in range(K):
            support = rng.choice(d, size=s, replace=False)
            beta[j, k, support] += delta_scale * rng.standard_normal(s)
    # Sigma is bookkeeping only here; a zero scale still needs a PD placeholder.
    var = delta_scale ** 2 if delta_scale != 0 else 1.0
    Sigma = np.repeat((var * np.eye(d))[None], K, axis=0)
    return EnvTruth(beta, beta0, Sigma, np.ones(K), arrival_probabilities(N, arrival_mode),
                    context or ContextDistribution())


def sample_context(dist: ContextDistribution, d: int, rng) -> np.ndarray:
    p = dist.resolved()
    if dist.kind == "uniform":
        return rng.uniform(p["low"], p["high"], size=d)
    centers = np.where(rng.random(d) < p["weight"], -p["loc"], p["loc"])
    return centers + p["scale"] * rng.standard_normal(d)


def sample_arrival(arrival: np.ndarray, rng) -> int:
    cum = np.cumsum(arrival)
    j = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(j, len(arrival) - 1)


def sample_reward(env: EnvTruth, j: int, k: int, x, rng) -> float:
    return float(x @ env.beta[j, k] + env.sigma[k] * rng.standard_normal())


# -- file I/O ------------------------------------------------------------

def env_to_dict(env: EnvTruth) -> dict:
    return {
        "n_instances": env.N,
        "n_arms": env.K,
        "dim": env.d,
        "beta": env.beta.tolist(),
        "beta0": env.beta0.tolist(),
        "sigma_prior": env.Sigma.tolist(),
        "noise_sd": env.sigma.tolist(),
        "arrival": env.arrival.tolist(),
        "context": env.context.to_dict(),
    }


_REQUIRED = ("n_instances", "n_arms", "dim", "beta", "beta0", "sigma_prior", "noise_sd", "arrival")


def env_from_dict(doc: dict) -> EnvTruth:
    if not isinstance(doc, dict):
        raise InvalidEnvironmentError("<root>", "environment document must be a JSON object")
    for key in _REQUIRED:
        if key not in doc:
            raise InvalidEnvironmentError(key, "missing required key")
    N, K, d = doc["n_instances"], doc["n_arms"], doc["dim"]
    for key in ("n_instances", "n_arms", "dim"):
        if not isinstance(doc[key], int) or doc[key] < 1:
            raise InvalidEnvironmentError(key, f"must be a positive integer, got {doc[key]!r}")
    expected = {"beta": (N, K, d), "beta0": (K, d), "sigma_prior": (K, d, d),
                "noise_sd": (K,), "arrival": (N,)}
    arrays = {}
    for key, shape in expected.items():
        try:
            arr = np.array(doc[key], dtype=float)
        except (TypeError, ValueError) as exc:
            raise InvalidEnvironmentError(key, f"not a numeric array ({exc})") from None
        if arr.shape != shape:
            raise InvalidEnvironmentError(key, f"expected shape {shape}, got {arr.shape}")
        arrays[key] = arr
    ctx = doc.get("context", {"kind": "mixture_gaussian", "params": {}})
    try:
        context = ContextDistribution(ctx.get("kind", "mixture_gaussian"), dict(ctx.get("params", {})))
    except AttributeError:
        raise InvalidEnvironmentError("context", "must be an object with kind and params") from None
    return EnvTruth(arrays["beta"], arrays["beta0"], arrays["sigma_prior"],
                    arrays["noise_sd"], arrays["arrival"], context)


def save_env(path, env: EnvTruth) -> None:
    Path(path).write_text(json.dumps(env_to_dict(env), indent=1) + "\n")


def load_env(path) -> EnvTruth:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidEnvironmentError("<root>", f"malformed JSON: {exc}") from None
    return env_from_dict(doc)


def envs_equal(a: EnvTruth, b: EnvTruth) -> bool:
    """Bit-exact equality of all numeric fields and the context law."""
    return (all(np.array_equal(x, y) for x, y in
                ((a.beta, b.beta), (a.beta0, b.beta0), (a.Sigma, b.Sigma),
                 (a.sigma, b.sigma), (a.arrival, b.arrival)))
            and a.context == b.context)
