"""Synthetic data generators, ridge base models and the Fair K baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cfbary.ot1d import ContractError
from cfbary.partition import Dataset
from cfbary.rng import stream

__all__ = [
    "SynthConfig",
    "SyntheticSample",
    "LinearModel",
    "gen_binary",
    "gen_multigroup",
    "generate",
    "fit_ridge",
    "fit_base_model",
    "baseline_fair_k",
]

RIDGE = 0.1


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic experiment settings.

    ``v_noise`` is a robustness hook: the proxy handed to the post-processor
    is perturbed by seeded ``U(-v_noise, v_noise)`` noise (clipped to [0, 1]);
    the data themselves are generated from the clean proxy.
    """

    n_train: int = 1000
    n_test: int = 10000
    K: int = 2
    eps_x: float = 0.5
    eps_y: float = 0.01
    seed: int = 0
    kind: str = "binary"
    v_noise: float = 0.0

    def __post_init__(self):
        if self.kind not in ("binary", "multigroup"):
            raise ContractError(f"unknown generator {self.kind!r}")
        if self.kind == "binary" and self.K != 2:
            raise ContractError("the binary generator has exactly two groups")
        if self.K < 2:
            raise ContractError("need K >= 2")
        if self.n_train < 2 or self.n_test < 1:
            raise ContractError("sample sizes too small")


@dataclass(frozen=True, eq=False)
class SyntheticSample:
    v: np.ndarray
    s: np.ndarray
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    K: int

    @property
    def n(self) -> int:
        return int(self.v.size)

    def base_inputs(self) -> np.ndarray:
        """Inputs of the aware base model: features, then ``v`` and ``s``."""
        return np.column_stack([self.X, self.v, self.s.astype(np.float64)])

    def to_dataset(self, score: np.ndarray, v: np.ndarray | None = None) -> Dataset:
        feats = {name: self.X[:, j] for j, name in enumerate(self.feature_names)}
        return Dataset(
            v=self.v if v is None else v,
            s=self.s,
            score=score,
            y=self.y,
            labels=tuple(str(i) for i in range(self.K)),
            features=feats,
        )


def gen_binary(n: int, seed: int, purpose: str = "train", eps_x: float = 0.5, eps_y: float = 0.01) -> SyntheticSample:
    """``V ~ U(0,1)``, ``S ~ Bern(1/2)``, ``X1 = (2S-1) V``, ``X2 ~ U(-eps_x, eps_x)``,
    ``Y = X1 + X2 + U(-eps_y, eps_y)``."""
    rng = stream(seed, purpose)
    v = rng.random(n)
    s = (rng.random(n) < 0.5).astype(np.int64)
    x1 = (2 * s - 1) * v
    x2 = rng.uniform(-eps_x, eps_x, n)
    y = x1 + x2 + rng.uniform(-eps_y, eps_y, n)
    return SyntheticSample(v, s, np.column_stack([x1, x2]), y, ("x1", "x2"), 2)


def gen_multigroup(n: int, K: int, seed: int, purpose: str = "train", eps_x: float = 0.5,
                   eps_y: float = 0.01) -> SyntheticSample:
    """``S`` uniform on ``0..K-1``, ``X = 2S - (K-1) + V + U(-eps_x, eps_x)``, ``Y = X + U(-eps_y, eps_y)``."""
    if K < 2:
        raise ContractError("need K >= 2")
    rng = stream(seed, purpose)
    v = rng.random(n)
    s = rng.integers(0, K, n).astype(np.int64)
    x = 2 * s - (K - 1) + v + rng.uniform(-eps_x, eps_x, n)
    y = x + rng.uniform(-eps_y, eps_y, n)
    return SyntheticSample(v, s, x[:, None], y, ("x",), K)


def generate(config: SynthConfig, purpose: str, seed: int | None = None) -> SyntheticSample:
    seed = config.seed if seed is None else seed
    n = config.n_train if purpose == "train" else config.n_test
    if config.kind == "binary":
        return gen_binary(n, seed, purpose, config.eps_x, config.eps_y)
    return gen_multigroup(n, config.K, seed, purpose, config.eps_x, config.eps_y)


@dataclass(frozen=True, eq=False)
class LinearModel:
    intercept: float
    coefficients: np.ndarray
    ridge: float = 0.0

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        return self.intercept + X @ self.coefficients


def fit_ridge(X, y, ridge: float = RIDGE) -> LinearModel:
    """Ridge least squares with an unpenalized intercept (normal equations on centred data)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] < 2 or X.shape[0] != y.size:
        raise ContractError("need at least two rows and one target per row")
    if ridge < 0:
        raise ContractError("ridge must be non-negative")
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    A = Xc.T @ Xc + ridge * np.eye(X.shape[1])
    if ridge == 0 and np.linalg.matrix_rank(A) < X.shape[1]:
        raise ContractError("singular normal equations; use ridge > 0")
    beta = np.linalg.solve(A, Xc.T @ (y - ym))
    return LinearModel(float(ym - xm @ beta), beta, float(ridge))


def fit_base_model(sample: SyntheticSample, ridge: float = RIDGE) -> LinearModel:
    """Aware linear black box on (features, v, s)."""
    return fit_ridge(sample.base_inputs(), sample.y, ridge)


def baseline_fair_k(sample: SyntheticSample, ridge: float = RIDGE) -> LinearModel:
    """Regression of ``Y`` on the proxy ``V`` alone; identical across groups at equal ``v``."""
    if sample.y is None:
        raise ContractError("Fair K needs outcomes")
    return fit_ridge(sample.v[:, None], sample.y, ridge)
