"""Joint Gaussian model of a latent signal observed through noisy mixtures.

Each observed scalar ``y_i`` is a weighted mixture of ``M`` hidden noisy
measurements of the latent signal ``f`` taken at locations ``x_{i,1..M}``:

    m_{i,j} = f(x_{i,j}) + eps_{i,j}          (measurement noise)
    y_i     = sum_j w_{i,j} m_{i,j} + eta_i   (observation noise)

With a zero-mean Gaussian-process prior on ``f``, the observations are
jointly Gaussian with

    Cov(y_i, y_i') = sum_{j,j'} w_{i,j} w_{i',j'}
                     (k(x_{i,j}, x_{i',j'}) + meas_noise * [locations equal])
                     + obs_noise * [i == i']

and the latent signal stays jointly Gaussian with them, so the posterior of
``f`` at any query locations is available in closed form.  All solves go
through one cached Cholesky factorization per (model, observations) pair
(:class:`GpmmSolver`); an explicit matrix inverse is never formed.

Measurement noise at two *exactly equal* locations is treated as the same
noise draw (a sensor reads a location once), which is why the coincidence
indicator enters the covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import NumericalError
from .kernels import Kernel, gram, gram_diagonal

__all__ = [
    "ObservationSet",
    "WeightSpec",
    "GpmmModel",
    "Posterior",
    "GpmmSolver",
    "cholesky_with_jitter",
    "observation_mean",
    "observation_covariance",
    "cross_covariance",
    "posterior",
    "negative_log_likelihood",
    "identified_noise_combination",
    "JITTER_INITIAL",
    "JITTER_MAX",
]

# Relative diagonal jitter policy: start at JITTER_INITIAL x mean diagonal,
# escalate x10 on factorization failure up to JITTER_MAX, then give up.
JITTER_INITIAL = 1e-8
JITTER_MAX = 1e-4

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class ObservationSet:
    """N observed values, each mixed from M measurement locations.

    ``locations`` has shape (N, M) and ``values`` shape (N,); all entries
    must be finite and N, M >= 1.
    """

    locations: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        loc = np.atleast_2d(np.asarray(self.locations, dtype=float))
        val = np.atleast_1d(np.asarray(self.values, dtype=float))
        if loc.ndim != 2:
            raise ValueError(f"locations must be 2-D (N, M), got shape {loc.shape}")
        if loc.shape[0] < 1 or loc.shape[1] < 1:
            raise ValueError(f"need N >= 1 and M >= 1, got shape {loc.shape}")
        if not np.all(np.isfinite(loc)):
            raise ValueError("locations contain non-finite entries")
        if val.shape != (loc.shape[0],):
            raise ValueError(
                f"values must have length N={loc.shape[0]}, got shape {val.shape}"
            )
        if not np.all(np.isfinite(val)):
            raise ValueError("values contain non-finite entries")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "values", val)

    @property
    def n(self) -> int:
        return self.locations.shape[0]

    @property
    def m(self) -> int:
        return self.locations.shape[1]


@dataclass(frozen=True)
class WeightSpec:
    """Mixing weights applied by the sensor across its measurement slots.

    ``mode`` is "shared" (one stencil, shape (M,), reused by every
    observation) or "per-observation" (shape (N, M)).  Every weight is
    nonnegative, each observation's weights sum to one, and a shared
    stencil is symmetric about its center.
    """

    weights: np.ndarray
    mode: str = "shared"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if self.mode == "shared":
            if w.ndim != 1:
                raise ValueError(f"shared weights must be 1-D, got shape {w.shape}")
            if not np.allclose(w, w[::-1], rtol=0.0, atol=WEIGHT_SUM_TOL):
                raise ValueError("shared stencil must be symmetric about its center")
            rows = w[None, :]
        elif self.mode == "per-observation":
            if w.ndim != 2:
                raise ValueError(
                    f"per-observation weights must be 2-D, got shape {w.shape}"
                )
            rows = w
        else:
            raise ValueError(f"unknown weight mode {self.mode!r}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights contain non-finite entries")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > WEIGHT_SUM_TOL):
            raise ValueError(f"each observation's weights must sum to 1, got {sums}")
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return self.weights.shape[-1]

    def weights_for(self, n_observations: int) -> np.ndarray:
        """Weights expanded to shape (N, M)."""
        if self.mode == "shared":
            return np.broadcast_to(self.weights, (n_observations, self.m))
        if self.weights.shape[0] != n_observations:
            raise ValueError(
                f"per-observation weights cover {self.weights.shape[0]} "
                f"observations, need {n_observations}"
            )
        return self.weights


@dataclass(frozen=True)
class GpmmModel:
    """Latent-signal kernel, the two noise variances and the mixing weights.

    ``measurement_noise`` is the variance of the per-measurement noise,
    ``observation_noise`` the variance of the per-observation noise; both
    may be zero (the jitter policy keeps factorizations viable).
    """

    kernel: Kernel
    measurement_noise: float
    observation_noise: float
    weights: WeightSpec

    def __post_init__(self):
        for name in ("measurement_noise", "observation_noise"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class Posterior:
    """Gaussian posterior of the latent signal on a query grid."""

    query_locations: np.ndarray
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.query_locations, dtype=float))
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        var = np.atleast_1d(np.asarray(self.variance, dtype=float))
        if not (q.shape == mean.shape == var.shape):
            raise ValueError("query locations, mean and variance must align")
        if np.any(var < 0):
            raise ValueError("posterior variance must be nonnegative")
        object.__setattr__(self, "query_locations", q)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)


def cholesky_with_jitter(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``matrix`` plus escalating diagonal jitter.

    Jitter starts at ``JITTER_INITIAL`` x mean diagonal and is multiplied
    by 10 after each failed factorization, up to ``JITTER_MAX``; past that
    a :class:`NumericalError` names the last jitter attempted.  Returns
    ``(factor, jitter_added)``.
    """
    scale = float(np.mean(np.diag(matrix)))
    if not math.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    level = JITTER_INITIAL
    eye = np.eye(matrix.shape[0])
    while True:
        jitter = level * scale
        try:
            return np.linalg.cholesky(matrix + jitter * eye), jitter
        except np.linalg.LinAlgError:
            level *= 10.0
            if level > JITTER_MAX * (1.0 + 1e-12):
                raise NumericalError(
                    f"covariance factorization failed with jitter up to {jitter}"
                ) from None


@dataclass
class _Assembly:
    """Intermediate arrays behind the observation covariance; kept around so
    gradient computations can reuse them instead of re-assembling."""

    flat_locations: np.ndarray      # (L,) with L = N*M
    gram_flat: np.ndarray           # (L, L) kernel Gram on flat locations
    coincide: np.ndarray            # (L, L) exact location-equality indicator
    weight_matrix: np.ndarray       # (N, M)
    cov: np.ndarray                 # (N, N)


def _mirror_upper(a: np.ndarray) -> np.ndarray:
    upper = np.triu(a, 1)
    return upper + upper.T + np.diag(np.diag(a))


def _assemble(model: GpmmModel, obs: ObservationSet) -> _Assembly:
    if model.weights.m != obs.m:
        raise ValueError(
            f"weights cover {model.weights.m} measurements per observation, "
            f"observations have {obs.m}"
        )
    w = model.weights.weights_for(obs.n)
    flat = obs.locations.reshape(-1)
    g = gram(model.kernel, flat, flat)
    coincide = (flat[:, None] == flat[None, :]).astype(float)
    mixed = g + model.measurement_noise * coincide
    c4 = mixed.reshape(obs.n, obs.m, obs.n, obs.m)
    half = np.einsum("aj,ajbk->abk", w, c4)
    cov = np.einsum("abk,bk->ab", half, w)
    cov += model.observation_noise * np.eye(obs.n)
    return _Assembly(flat, g, coincide, np.array(w), _mirror_upper(cov))


def observation_mean(model: GpmmModel, obs: ObservationSet, mean_fn=None) -> np.ndarray:
    """Prior mean of the observed values: the stencil-weighted prior mean of
    the latent signal at the measurement locations.

    The latent prior mean is fixed at zero, so the default is the zero
    vector; ``mean_fn`` (vectorized over locations) is the seam through
    which a nonzero prior mean could be introduced later.
    """
    if model.weights.m != obs.m:
        raise ValueError(
            f"weights cover {model.weights.m} measurements per observation, "
            f"observations have {obs.m}"
        )
    if mean_fn is None:
        return np.zeros(obs.n)
    w = model.weights.weights_for(obs.n)
    mu = np.broadcast_to(np.asarray(mean_fn(obs.locations), dtype=float),
                         obs.locations.shape)
    return np.einsum("ij,ij->i", w, mu)


def observation_covariance(model: GpmmModel, obs: ObservationSet) -> np.ndarray:
    """Covariance matrix of the observed values (before any jitter).

    Exactly symmetric by construction: the upper triangle is computed and
    mirrored.  Measurement noise couples entries whose measurement
    locations coincide exactly (bit-equal), including each measurement
    with itself on the diagonal.
    """
    return _assemble(model, obs).cov


def cross_covariance(model: GpmmModel, obs: ObservationSet, query) -> np.ndarray:
    """Covariance between the latent signal at ``query`` and each observed
    value: entry (q, i) = sum_j w_{i,j} k(x_q, x_{i,j}).  Noise-free."""
    if model.weights.m != obs.m:
        raise ValueError(
            f"weights cover {model.weights.m} measurements per observation, "
            f"observations have {obs.m}"
        )
    w = model.weights.weights_for(obs.n)
    g = gram(model.kernel, query, obs.locations.reshape(-1))
    g3 = g.reshape(g.shape[0], obs.n, obs.m)
    return np.einsum("qij,ij->qi", g3, w)


class GpmmSolver:
    """One shared Cholesky factorization of the observation covariance.

    Posterior and likelihood evaluations for the same (model, observations)
    pair reuse the cached factor.  Instances are immutable after
    construction and safe for concurrent reads.
    """

    def __init__(self, model: GpmmModel, obs: ObservationSet):
        self.model = model
        self.observations = obs
        self.assembly = _assemble(model, obs)
        self.chol, self.jitter = cholesky_with_jitter(self.assembly.cov)
        self.alpha = cho_solve((self.chol, True), obs.values)

    def posterior(self, query) -> Posterior:
        """Exact Gaussian posterior of the latent signal at ``query``."""
        kfy = cross_covariance(self.model, self.observations, query)
        mean = kfy @ self.alpha
        v = solve_triangular(self.chol, kfy.T, lower=True)
        var = gram_diagonal(self.model.kernel, query) - np.einsum("iq,iq->q", v, v)
        np.clip(var, 0.0, None, out=var)  # round-off can dip a hair below zero
        return Posterior(np.asarray(query, dtype=float), mean, var)

    def negative_log_likelihood(self) -> float:
        """0.5 y' K^{-1} y + 0.5 log|K| + (N/2) log 2pi via the factor."""
        y = self.observations.values
        logdet_half = float(np.sum(np.log(np.diag(self.chol))))
        return (
            0.5 * float(y @ self.alpha)
            + logdet_half
            + 0.5 * self.observations.n * math.log(2.0 * math.pi)
        )


def posterior(model: GpmmModel, obs: ObservationSet | None, query) -> Posterior:
    """Posterior of the latent signal at ``query``; with no observations
    (``obs is None``) this is the prior itself."""
    if obs is None:
        q = np.atleast_1d(np.asarray(query, dtype=float))
        return Posterior(q, np.zeros(q.shape), gram_diagonal(model.kernel, q))
    return GpmmSolver(model, obs).posterior(query)


def negative_log_likelihood(model: GpmmModel, obs: ObservationSet) -> float:
    """Negative log marginal likelihood of the observed values."""
    return GpmmSolver(model, obs).negative_log_likelihood()


def identified_noise_combination(model: GpmmModel, n_observations: int) -> np.ndarray:
    """Per-observation diagonal noise actually identified by the data when
    all measurement locations are distinct:
    ``sum_j w_{i,j}^2 * measurement_noise + observation_noise``.

    With one shared stencil the two noise variances only enter the
    likelihood through this combination, so it is the quantity worth
    reading off a fit."""
    w = model.weights.weights_for(n_observations)
    return np.einsum("ij,ij->i", w, w) * model.measurement_noise + model.observation_noise
