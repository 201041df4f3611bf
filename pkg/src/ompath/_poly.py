"""Internal polynomial helpers for the drift family.

Coefficients are plain float arrays and differentiation acts on them, so every
derivative exposed by the drift API is itself an exact polynomial.  Univariate
and bivariate (t, x) cases delegate to ``numpy.polynomial.polynomial``; the
sparse monomial form below covers arbitrary dimension for distribution-free
drifts.
"""

import numpy as np
from numpy.polynomial import polynomial as npoly


def coef1d(coefs, name="coefficients"):
    """Validate and return a 1-D ascending coefficient array (never empty)."""
    c = np.atleast_1d(np.asarray(coefs, dtype=float))
    if c.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if c.size == 0:
        c = np.zeros(1)
    if not np.all(np.isfinite(c)):
        raise ValueError(f"{name} contain non-finite entries")
    return c


def poly1_eval(coefs, x):
    return npoly.polyval(x, coefs)


def poly1_der(coefs, m=1):
    d = npoly.polyder(coefs, m) if coefs.size > m else np.zeros(1)
    return np.atleast_1d(d)


def poly1_degree(coefs):
    nz = np.nonzero(coefs)[0]
    return int(nz[-1]) if nz.size else 0


def coef2d(coefs, name="coefficients"):
    """Validate a 2-D coefficient matrix c[j, k] for sum_jk c t^j x^k."""
    c = np.atleast_2d(np.asarray(coefs, dtype=float))
    if c.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array")
    if not np.all(np.isfinite(c)):
        raise ValueError(f"{name} contain non-finite entries")
    return c


def poly2_eval(coefs, t, x):
    return npoly.polyval2d(t, x, coefs)


def poly2_der_t(coefs):
    return coefs[1:] * np.arange(1, coefs.shape[0])[:, None] if coefs.shape[0] > 1 else np.zeros((1, 1))


def poly2_der_x(coefs):
    return coefs[:, 1:] * np.arange(1, coefs.shape[1])[None, :] if coefs.shape[1] > 1 else np.zeros((1, 1))


def poly2_degree(coefs):
    deg = 0
    for j, k in zip(*np.nonzero(coefs)):
        deg = max(deg, int(j) + int(k))
    return deg


def matpoly(coefs, d, name):
    """Validate coefficients of a matrix/vector polynomial in t.

    ``coefs`` has shape (J, ...) where entry j is the coefficient of t^j.
    Returns a float array, defaulting to a single zero coefficient.
    """
    c = np.asarray(coefs, dtype=float)
    if c.size == 0:
        c = np.zeros((1,) + ((d, d) if name in ("A", "C") else (d,)))
    if not np.all(np.isfinite(c)):
        raise ValueError(f"{name} coefficients contain non-finite entries")
    return c


def matpoly_eval(coefs, t):
    """Evaluate sum_j coefs[j] * t^j for scalar or (B,) t.

    Returns shape ``t.shape + coefs.shape[1:]``.
    """
    t = np.asarray(t, dtype=float)
    J = coefs.shape[0]
    tp = t[..., None] ** np.arange(J)
    return np.tensordot(tp, coefs, axes=([-1], [0]))


def matpoly_der(coefs):
    if coefs.shape[0] <= 1:
        return np.zeros_like(coefs[:1])
    return coefs[1:] * np.arange(1, coefs.shape[0]).reshape((-1,) + (1,) * (coefs.ndim - 1))


class Monomials:
    """Sparse multivariate polynomial in (t, x_1, ..., x_d).

    Terms are (coefficient, t-exponent, x-exponent tuple).  Evaluation is
    vectorized over a batch of points; partial derivatives return new
    ``Monomials``.
    """

    def __init__(self, d, terms=()):
        self.d = int(d)
        coefs, texps, xexps = [], [], []
        for term in terms:
            coef, te, xe = term
            xe = tuple(int(e) for e in xe)
            if len(xe) != self.d:
                raise ValueError("x-exponent tuple length differs from dimension")
            if te < 0 or any(e < 0 for e in xe):
                raise ValueError("negative exponent")
            if not np.isfinite(coef):
                raise ValueError("non-finite coefficient")
            if coef != 0.0:
                coefs.append(float(coef))
                texps.append(int(te))
                xexps.append(xe)
        self.coefs = np.asarray(coefs, dtype=float)
        self.texps = np.asarray(texps, dtype=int)
        self.xexps = np.asarray(xexps, dtype=int).reshape(len(coefs), self.d)

    @property
    def nterms(self):
        return self.coefs.size

    def degree(self):
        if self.nterms == 0:
            return 0
        return int(np.max(self.texps + self.xexps.sum(axis=1)))

    def eval(self, t, X):
        """Evaluate at t (scalar or (B,)) and X ((B, d) or (d,))."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        B = X.shape[0]
        if self.nterms == 0:
            return np.zeros(B)
        t = np.broadcast_to(np.asarray(t, dtype=float), (B,))
        vals = t[:, None] ** self.texps[None, :]
        for i in range(self.d):
            exps = self.xexps[:, i]
            if np.any(exps):
                vals = vals * X[:, i, None] ** exps[None, :]
        return vals @ self.coefs

    def partial_t(self):
        terms = [
            (c * te, te - 1, tuple(xe))
            for c, te, xe in zip(self.coefs, self.texps, self.xexps)
            if te > 0
        ]
        return Monomials(self.d, terms)

    def partial_x(self, i):
        terms = []
        for c, te, xe in zip(self.coefs, self.texps, self.xexps):
            if xe[i] > 0:
                new = list(xe)
                new[i] -= 1
                terms.append((c * xe[i], te, tuple(new)))
        return Monomials(self.d, terms)
