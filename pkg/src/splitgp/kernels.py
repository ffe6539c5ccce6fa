"""RBF kernel with automatic relevance determination.

One per-dimension lengthscale vector, a signal variance and a noise variance
parameterize every GP in the package.  Positive parameters are mirrored into
an unconstrained log-domain vector for gradient ascent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractViolationError

RBF_ARD = "rbf-ard"
_FAMILIES = (RBF_ARD,)


@dataclass(frozen=True, eq=False)
class Hyperparameters:
    """Kernel hyperparameters shared by all local GPs.

    Parameters
    ----------
    lengthscales : array of shape (M,)
        One strictly positive lengthscale per input dimension.
    signal_variance : float
        Prior variance of the latent function, > 0.
    noise_variance : float
        Observation-noise variance, >= 0; enters only the Gram diagonal.
    """

    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float)).copy()
        ls.flags.writeable = False
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        if ls.ndim != 1 or ls.size == 0:
            raise ContractViolationError("lengthscales must be a non-empty vector")
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0.0):
            raise ContractViolationError("lengthscales must be finite and strictly positive")
        if not np.isfinite(self.signal_variance) or self.signal_variance <= 0.0:
            raise ContractViolationError("signal_variance must be finite and > 0")
        if not self.noise_variance >= 0.0:
            raise ContractViolationError("noise_variance must be >= 0")

    @property
    def ndim(self) -> int:
        return self.lengthscales.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Hyperparameters):
            return NotImplemented
        return (
            np.array_equal(self.lengthscales, other.lengthscales)
            and self.signal_variance == other.signal_variance
            and self.noise_variance == other.noise_variance
        )

    def to_log_vector(self) -> np.ndarray:
        """Unconstrained representation: [log ls_1..ls_M, log sf2, log sn2]."""
        with np.errstate(divide="ignore"):
            return np.concatenate(
                [
                    np.log(self.lengthscales),
                    [np.log(self.signal_variance), np.log(self.noise_variance)],
                ]
            )

    @classmethod
    def from_log_vector(cls, theta: np.ndarray) -> "Hyperparameters":
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 1 or theta.size < 3:
            raise ContractViolationError("log vector must contain at least one lengthscale")
        return cls(
            lengthscales=np.exp(theta[:-2]),
            signal_variance=float(np.exp(theta[-2])),
            noise_variance=float(np.exp(theta[-1])),
        )

    def to_kv_text(self) -> str:
        """Flat key=value block used by the CLI config."""
        ls = ",".join(repr(float(v)) for v in self.lengthscales)
        return (
            f"lengthscales={ls}\n"
            f"signal_variance={self.signal_variance!r}\n"
            f"noise_variance={self.noise_variance!r}\n"
        )

    @classmethod
    def from_kv_text(cls, text: str) -> "Hyperparameters":
        fields = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
        try:
            ls = np.array([float(v) for v in fields["lengthscales"].split(",")])
            return cls(ls, float(fields["signal_variance"]), float(fields["noise_variance"]))
        except KeyError as err:
            raise ContractViolationError(f"missing hyperparameter key: {err}") from err


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A kernel family paired with its hyperparameters."""

    params: Hyperparameters
    family: str = RBF_ARD

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ContractViolationError(f"unknown kernel family {self.family!r}")

    @property
    def ndim(self) -> int:
        return self.params.ndim

    def __eq__(self, other) -> bool:
        if not isinstance(other, KernelSpec):
            return NotImplemented
        return self.family == other.family and self.params == other.params

    def to_log_vector(self) -> np.ndarray:
        return self.params.to_log_vector()

    def with_log_vector(self, theta: np.ndarray) -> "KernelSpec":
        return KernelSpec(Hyperparameters.from_log_vector(theta), family=self.family)


def default_spec(y: np.ndarray, ndim: int) -> KernelSpec:
    """Starting hyperparameters: unit lengthscales, signal variance from the
    responses seen so far, noise at a tenth of that."""
    y = np.asarray(y, dtype=float)
    var = float(np.var(y)) if y.size >= 2 else 1.0
    if not np.isfinite(var) or var <= 0.0:
        var = 1.0
    return KernelSpec(Hyperparameters(np.ones(ndim), var, 0.1 * var))


def _check_rows(X: np.ndarray, spec: KernelSpec, arg: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != spec.ndim:
        raise ContractViolationError(
            f"{arg} has shape {X.shape}, expected (*, {spec.ndim})"
        )
    if X.size and not np.all(np.isfinite(X)):
        raise ContractViolationError(f"{arg} contains non-finite entries")
    return X


def kernel_eval(x: np.ndarray, x_prime: np.ndarray, spec: KernelSpec) -> float:
    """Evaluate k(x, x') for a single pair of points."""
    return float(cross_gram(x, x_prime, spec)[0, 0])


def cross_gram(X: np.ndarray, Z: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Noise-free kernel matrix k(X, Z) of shape (n, p)."""
    X = _check_rows(X, spec, "X")
    Z = _check_rows(Z, spec, "Z")
    ls = spec.params.lengthscales
    Xs = X / ls
    Zs = Z / ls
    sq = (
        np.sum(Xs * Xs, axis=1)[:, None]
        + np.sum(Zs * Zs, axis=1)[None, :]
        - 2.0 * (Xs @ Zs.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return spec.params.signal_variance * np.exp(-0.5 * sq)


def gram(X: np.ndarray, spec: KernelSpec, add_noise: bool = False) -> np.ndarray:
    """Kernel matrix k(X, X), optionally with noise variance on the diagonal."""
    K = cross_gram(X, X, spec)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, spec.params.signal_variance)
    if add_noise:
        K[np.diag_indices_from(K)] += spec.params.noise_variance
    return K


def gram_gradients(X: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Derivatives of the noisy Gram matrix w.r.t. each log-domain parameter.

    Returns an array of shape (M + 2, n, n): one symmetric matrix per
    lengthscale, then signal variance, then noise variance.  The noise slot is
    the identity scaled by the natural-domain noise variance (chain rule
    through the log).
    """
    X = _check_rows(X, spec, "X")
    n, m = X.shape
    K = gram(X, spec, add_noise=False)
    out = np.empty((m + 2, n, n))
    ls = spec.params.lengthscales
    for d in range(m):
        diff = X[:, d:d + 1] - X[:, d]
        out[d] = K * (diff * diff) / (ls[d] * ls[d])
    out[m] = K
    out[m + 1] = spec.params.noise_variance * np.eye(n)
    return out
