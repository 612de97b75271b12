"""Covariance functions for the latent-signal prior.

Three kernel families are provided:

* :class:`SquaredExponential` -- smooth stationary covariance,
  ``k(x, x') = variance * exp(-(x - x')^2 / (2 lengthscale^2))``.
* :class:`NeuralNetwork` -- the arcsine covariance of an infinitely wide
  erf network; non-stationary, suited to discontinuity-like transitions.
* :class:`White` -- coincidence indicator, ``variance`` when the two
  locations are exactly equal and zero otherwise.  Used to express
  "no spatial correlation" when relating the model to plain linear solvers.

Locations are one-dimensional scalars.  Hyperparameters are strictly
positive and, for optimization, handled in log-space (:func:`log_params`,
:func:`from_log_params`) so positivity never needs explicit constraints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SquaredExponential",
    "NeuralNetwork",
    "White",
    "Kernel",
    "evaluate",
    "gram",
    "gram_diagonal",
    "gram_log_gradients",
    "param_names",
    "log_params",
    "from_log_params",
    "kernel_to_dict",
    "kernel_from_dict",
]


@dataclass(frozen=True)
class SquaredExponential:
    """Stationary squared-exponential covariance.

    Parameters
    ----------
    variance : float
        Signal power (squared signal units).  Strictly positive.
    lengthscale : float
        Correlation length in input units.  Strictly positive.
    """

    variance: float
    lengthscale: float

    def __post_init__(self):
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ValueError(f"variance must be finite and > 0, got {self.variance}")
        if not (np.isfinite(self.lengthscale) and self.lengthscale > 0):
            raise ValueError(
                f"lengthscale must be finite and > 0, got {self.lengthscale}"
            )


@dataclass(frozen=True)
class NeuralNetwork:
    """Arcsine covariance of an infinite-width erf network.

    ``k(x, x') = variance * (2/pi) * asin(2 s(x, x') /
    sqrt((1 + 2 s(x, x)) (1 + 2 s(x', x'))))`` with the augmented inner
    product ``s(x, x') = bias_scale + input_scale * x * x'``.

    All three hyperparameters are strictly positive; ``bias_scale`` and
    ``input_scale`` are dimensionless.
    """

    variance: float
    bias_scale: float
    input_scale: float

    def __post_init__(self):
        for name in ("variance", "bias_scale", "input_scale"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value}")


@dataclass(frozen=True)
class White:
    """Coincidence-indicator covariance: ``variance`` iff the two locations
    are bit-identical, else zero.  On a set of distinct locations its Gram
    matrix is ``variance * I``."""

    variance: float

    def __post_init__(self):
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ValueError(f"variance must be finite and > 0, got {self.variance}")


Kernel = SquaredExponential | NeuralNetwork | White


def _as_locations(xs, name):
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if xs.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {xs.shape}")
    if xs.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(xs)):
        raise ValueError(f"{name} contains non-finite locations")
    return xs


def _se_matrix(kernel, xa, xb):
    d = xa[:, None] - xb[None, :]
    return kernel.variance * np.exp(-0.5 * (d * d) / kernel.lengthscale**2)


def _nn_inner(kernel, xa, xb):
    return kernel.bias_scale + kernel.input_scale * xa * xb


def _nn_matrix(kernel, xa, xb):
    num = 2.0 * _nn_inner(kernel, xa[:, None], xb[None, :])
    da = 1.0 + 2.0 * _nn_inner(kernel, xa, xa)
    db = 1.0 + 2.0 * _nn_inner(kernel, xb, xb)
    z = num / np.sqrt(da[:, None] * db[None, :])
    return kernel.variance * (2.0 / np.pi) * np.arcsin(z)


def _white_matrix(kernel, xa, xb):
    return kernel.variance * (xa[:, None] == xb[None, :]).astype(float)


_MATRIX = {
    SquaredExponential: _se_matrix,
    NeuralNetwork: _nn_matrix,
    White: _white_matrix,
}


def gram(kernel: Kernel, xs, xs2) -> np.ndarray:
    """Matrix of kernel evaluations, entry (a, b) = k(xs[a], xs2[b]).

    Both location lists must be non-empty and finite.  When ``xs`` and
    ``xs2`` are the same set the result is symmetric and positive
    semidefinite up to round-off.
    """
    xa = _as_locations(xs, "xs")
    xb = _as_locations(xs2, "xs2")
    return _MATRIX[type(kernel)](kernel, xa, xb)


def evaluate(kernel: Kernel, x: float, x2: float) -> float:
    """Single covariance value k(x, x2); symmetric in its two locations."""
    return float(gram(kernel, [x], [x2])[0, 0])


def gram_diagonal(kernel: Kernel, xs) -> np.ndarray:
    """Vector of prior variances k(x, x) for each location in ``xs``."""
    xa = _as_locations(xs, "xs")
    if isinstance(kernel, (SquaredExponential, White)):
        return np.full(xa.shape, kernel.variance)
    if isinstance(kernel, NeuralNetwork):
        da = 1.0 + 2.0 * _nn_inner(kernel, xa, xa)
        return kernel.variance * (2.0 / np.pi) * np.arcsin((da - 1.0) / da)
    raise TypeError(f"unknown kernel type {type(kernel)!r}")


def param_names(kernel: Kernel | type) -> tuple[str, ...]:
    """Hyperparameter names in the fixed packing order used throughout."""
    kind = kernel if isinstance(kernel, type) else type(kernel)
    if kind is SquaredExponential:
        return ("variance", "lengthscale")
    if kind is NeuralNetwork:
        return ("variance", "bias_scale", "input_scale")
    if kind is White:
        return ("variance",)
    raise TypeError(f"unknown kernel type {kind!r}")


def log_params(kernel: Kernel) -> np.ndarray:
    """Hyperparameters as a log-space vector (order per :func:`param_names`)."""
    return np.log([getattr(kernel, n) for n in param_names(kernel)])


def from_log_params(kind, logvec) -> Kernel:
    """Rebuild a kernel of class ``kind`` from a log-space parameter vector."""
    values = np.exp(np.asarray(logvec, dtype=float))
    names = param_names(kind)
    if values.shape != (len(names),):
        raise ValueError(f"expected {len(names)} log-parameters, got {values.shape}")
    return kind(**dict(zip(names, values)))


def gram_log_gradients(kernel: Kernel, xs, xs2) -> np.ndarray:
    """Gradient of the Gram matrix w.r.t. each log-hyperparameter.

    Returns an array of shape (P, A, B) where P follows
    :func:`param_names` order; slice p is d gram / d log(param_p).
    """
    xa = _as_locations(xs, "xs")
    xb = _as_locations(xs2, "xs2")
    if isinstance(kernel, SquaredExponential):
        k = _se_matrix(kernel, xa, xb)
        d = xa[:, None] - xb[None, :]
        return np.stack([k, k * (d * d) / kernel.lengthscale**2])
    if isinstance(kernel, NeuralNetwork):
        b, s = kernel.bias_scale, kernel.input_scale
        num = 2.0 * _nn_inner(kernel, xa[:, None], xb[None, :])
        da = 1.0 + 2.0 * _nn_inner(kernel, xa, xa)
        db = 1.0 + 2.0 * _nn_inner(kernel, xb, xb)
        den = np.sqrt(da[:, None] * db[None, :])
        z = num / den
        k = kernel.variance * (2.0 / np.pi) * np.arcsin(z)
        # d asin(z) = dz / sqrt(1 - z^2); z stays strictly inside (-1, 1)
        pref = kernel.variance * (2.0 / np.pi) / np.sqrt(1.0 - z * z)
        sum_ab = da[:, None] + db[None, :]
        dz_db = 2.0 / den - z * sum_ab / (den * den)
        xx = xa[:, None] * xb[None, :]
        cross = (xa * xa)[:, None] * db[None, :] + da[:, None] * (xb * xb)[None, :]
        dz_ds = 2.0 * xx / den - z * cross / (den * den)
        return np.stack([k, pref * dz_db * b, pref * dz_ds * s])
    if isinstance(kernel, White):
        return _white_matrix(kernel, xa, xb)[None, :, :].copy()
    raise TypeError(f"unknown kernel type {type(kernel)!r}")


_KIND_TAGS = {
    SquaredExponential: "se",
    NeuralNetwork: "nn",
    White: "white",
}
_TAG_KINDS = {tag: kind for kind, tag in _KIND_TAGS.items()}


def kernel_kind(tag: str) -> type:
    """Kernel class for a config tag ("se", "nn" or "white")."""
    try:
        return _TAG_KINDS[tag]
    except KeyError:
        raise ValueError(f"unknown kernel tag {tag!r}, expected one of "
                         f"{sorted(_TAG_KINDS)}") from None


def kernel_to_dict(kernel: Kernel) -> dict:
    """JSON-ready form: {"kernel": tag, "params": {name: value, ...}}."""
    return {
        "kernel": _KIND_TAGS[type(kernel)],
        "params": {n: float(getattr(kernel, n)) for n in param_names(kernel)},
    }


def kernel_from_dict(d: dict) -> Kernel:
    """Inverse of :func:`kernel_to_dict`."""
    kind = kernel_kind(d["kernel"])
    params = d.get("params", {})
    expected = set(param_names(kind))
    given = set(params)
    if given != expected:
        raise ValueError(
            f"kernel {d['kernel']!r} expects params {sorted(expected)}, "
            f"got {sorted(given)}"
        )
    return kind(**{n: float(v) for n, v in params.items()})
