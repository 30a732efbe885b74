"""Vectorized numpy implementations of the basis-evaluation kernels.

This is the fallback backend; the compiled extension in ``_ckern.pyx``
implements the same three functions with identical semantics. All kernels
take a flat float64 array of inputs and return a (N, D) float64 value
matrix, plus a derivative matrix of the same shape when requested.
"""
import numpy as np

NAME = "numpy"


def bspline_basis(x, knots, degree, want_deriv=False):
    """Cox-de Boor recursion over a fixed knot vector.

    Degree-0 functions are half-open indicators [t_j, t_{j+1}); points
    outside the extended knot span therefore evaluate to all zeros.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    t = np.ascontiguousarray(knots, dtype=np.float64)
    m = t.shape[0] - 1  # number of degree-0 functions
    B = ((x[:, None] >= t[None, :m]) & (x[:, None] < t[None, 1:])).astype(np.float64)
    B_prev = None
    for d in range(1, degree + 1):
        nb = m - d
        left = (x[:, None] - t[None, :nb]) / (t[d:d + nb] - t[:nb])
        right = (t[None, d + 1:d + 1 + nb] - x[:, None]) / (t[d + 1:d + 1 + nb] - t[1:1 + nb])
        if d == degree:
            B_prev = B
        B = left * B[:, :nb] + right * B[:, 1:nb + 1]
    if not want_deriv:
        return B, None
    nb = m - degree
    if degree == 0:
        return B, np.zeros_like(B)
    deriv = degree * (
        B_prev[:, :nb] / (t[degree:degree + nb] - t[:nb])
        - B_prev[:, 1:nb + 1] / (t[degree + 1:degree + 1 + nb] - t[1:1 + nb])
    )
    return B, deriv


def rbf_basis(x, centers, width, want_deriv=False):
    """Gaussian bumps exp(-((x - c_j) / h)^2) at fixed centers."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    c = np.ascontiguousarray(centers, dtype=np.float64)
    z = (x[:, None] - c[None, :]) / width
    vals = np.exp(-z * z)
    if not want_deriv:
        return vals, None
    return vals, -2.0 * z / width * vals


def gram_basis(x, degree, want_deriv=False):
    """Legendre-type three-term recurrence applied to tanh(x).

    (n+1) P_{n+1}(u) = (2n+1) u P_n(u) - n P_{n-1}(u), u = tanh(x).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    u = np.tanh(x)
    n_pts = x.shape[0]
    vals = np.empty((n_pts, degree + 1), dtype=np.float64)
    vals[:, 0] = 1.0
    if degree >= 1:
        vals[:, 1] = u
    for n in range(1, degree):
        vals[:, n + 1] = ((2 * n + 1) * u * vals[:, n] - n * vals[:, n - 1]) / (n + 1)
    if not want_deriv:
        return vals, None
    # dP_{n+1}/du = dP_{n-1}/du + (2n+1) P_n; chain through du/dx = 1 - u^2
    du = np.empty_like(vals)
    du[:, 0] = 0.0
    if degree >= 1:
        du[:, 1] = 1.0
    for n in range(1, degree):
        du[:, n + 1] = du[:, n - 1] + (2 * n + 1) * vals[:, n]
    return vals, du * (1.0 - u * u)[:, None]
