"""Univariate basis families: B-splines, Gaussian RBFs, Gram polynomials.

Each family evaluates to a length-D value vector per input point, where D
is the family's coefficient dimension. All evaluation is pure and
stateless; the layer code calls :func:`evaluate_array` on whole batches.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, NumericError

BSPLINE = "bspline"
RBF = "rbf"
GRAM = "gram"

KINDS = (BSPLINE, RBF, GRAM)


@dataclass(frozen=True)
class BasisSpec:
    kind: str
    degree: int = 3
    grid_size: int = 5
    num_centers: int = 8
    grid_min: float = -1.0
    grid_max: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown basis kind {self.kind!r}")
        if not (np.isfinite(self.grid_min) and np.isfinite(self.grid_max)):
            raise ConfigError("grid bounds must be finite")
        if self.grid_min >= self.grid_max:
            raise ConfigError(f"grid_min {self.grid_min} >= grid_max {self.grid_max}")
        if self.degree < 1:
            raise ConfigError("degree must be >= 1")
        if self.kind == BSPLINE and self.grid_size < 1:
            raise ConfigError("grid_size must be >= 1")
        if self.kind == RBF and self.num_centers < 2:
            raise ConfigError("num_centers must be >= 2")

    @property
    def coeff_dim(self):
        if self.kind == BSPLINE:
            return self.grid_size + self.degree + 1
        if self.kind == RBF:
            return self.num_centers
        return self.degree + 1

    def knots(self):
        """Uniform extended knot vector t_j = grid_min + (j - degree) * h."""
        if self.kind != BSPLINE:
            raise ConfigError("knots are defined for B-spline bases only")
        h = (self.grid_max - self.grid_min) / self.grid_size
        j = np.arange(self.grid_size + 2 * self.degree + 2, dtype=np.float64)
        return self.grid_min + (j - self.degree) * h

    def centers(self):
        """Equally spaced RBF centers over [grid_min, grid_max] inclusive."""
        if self.kind != RBF:
            raise ConfigError("centers are defined for RBF bases only")
        return np.linspace(self.grid_min, self.grid_max, self.num_centers)

    @property
    def width(self):
        if self.kind != RBF:
            raise ConfigError("width is defined for RBF bases only")
        return (self.grid_max - self.grid_min) / (self.num_centers - 1)

    def to_dict(self):
        return {
            "kind": self.kind,
            "degree": self.degree,
            "grid_size": self.grid_size,
            "num_centers": self.num_centers,
            "grid_min": self.grid_min,
            "grid_max": self.grid_max,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class BasisValues:
    values: np.ndarray
    derivatives: np.ndarray | None = None


def evaluate_array(spec, x, with_derivative=False):
    """Evaluate all basis functions of ``spec`` at each entry of ``x``.

    Returns (values, derivatives) with shape ``x.shape + (coeff_dim,)``;
    derivatives is None unless requested. Computation is float64.
    """
    x = np.asarray(x)
    flat = np.ascontiguousarray(x.reshape(-1), dtype=np.float64)
    if flat.size and not np.all(np.isfinite(flat)):
        raise NumericError("non-finite input to basis evaluation")
    if spec.kind == BSPLINE:
        vals, derivs = kernels.bspline_basis(flat, spec.knots(), spec.degree, with_derivative)
    elif spec.kind == RBF:
        vals, derivs = kernels.rbf_basis(flat, spec.centers(), spec.width, with_derivative)
    else:
        vals, derivs = kernels.gram_basis(flat, spec.degree, with_derivative)
    out_shape = x.shape + (spec.coeff_dim,)
    vals = vals.reshape(out_shape)
    if derivs is not None:
        derivs = derivs.reshape(out_shape)
    return vals, derivs


def evaluate_basis(spec, x, with_derivative=False):
    """Single-point evaluation returning a :class:`BasisValues`."""
    if not np.isfinite(x):
        raise NumericError(f"non-finite input x={x!r}")
    vals, derivs = evaluate_array(spec, np.array([x]), with_derivative)
    return BasisValues(values=vals[0], derivatives=None if derivs is None else derivs[0])
