r"""Discretized path space on [0, 1].

Paths live on the uniform grid t_k = k/n and are stored as an (n+1, d) value
array; grid times are always derived from n, never stored.  The module
provides second-order differentiation and quadrature, the Cameron-Martin
inner product, the family of path norms used for tube events (supremum,
Holder with exponent below 1/4, L^p with p above 4) together with the
dominated L^2 comparison norm, and a plain CSV serialization.
"""

import io
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import InvalidPath

HOLDER_ALPHA_MAX = 0.25
LP_MIN = 4.0
# above this grid size the Holder seminorm restricts to dyadic gaps
HOLDER_EXACT_MAX_N = 2000


@dataclass(frozen=True, eq=False)
class Path:
    """R^d-valued path sampled on the uniform grid k/n, k = 0..n."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise InvalidPath("values must form a (n+1, d) array")
        if v.shape[0] < 3:
            raise InvalidPath("need n >= 2, i.e. at least 3 grid values")
        if v.shape[1] < 1:
            raise InvalidPath("dimension must be at least 1")
        if not np.all(np.isfinite(v)):
            raise InvalidPath("path values contain non-finite entries")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.shape[0] - 1

    @property
    def d(self):
        return self.values.shape[1]

    @property
    def times(self):
        return np.arange(self.n + 1) / self.n

    @property
    def x0(self):
        return self.values[0]

    def offset(self):
        """The Cameron-Martin representative: this path minus its initial point."""
        return Path(self.values - self.values[0])

    def derivative(self):
        return derivative(self)


def linear_path(x0, x1, n):
    a = np.atleast_1d(np.asarray(x0, dtype=float))
    b = np.atleast_1d(np.asarray(x1, dtype=float))
    s = np.linspace(0.0, 1.0, n + 1)[:, None]
    return Path((1 - s) * a[None, :] + s * b[None, :])


def constant_path(x, n):
    a = np.atleast_1d(np.asarray(x, dtype=float))
    return Path(np.tile(a, (n + 1, 1)))


def path_from_function(fn, n, d=None):
    """Sample ``fn`` at the grid times; fn maps a float to a scalar or vector."""
    t = np.arange(n + 1) / n
    vals = np.asarray([np.atleast_1d(fn(ti)) for ti in t], dtype=float)
    if d is not None and vals.shape[1] != d:
        raise InvalidPath(f"function returned dimension {vals.shape[1]}, expected {d}")
    return Path(vals)


def path_from_poly(coefs, n):
    """Path with polynomial coordinates: coefs is a (d, ...) list of ascending coefficient lists."""
    t = np.arange(n + 1) / n
    cols = [npoly.polyval(t, np.asarray(c, dtype=float)) for c in coefs]
    return Path(np.stack(cols, axis=1))


def _derivative_values(values, n):
    h = 1.0 / n
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - values[:-2]) / (2 * h)
    out[0] = (-3 * values[0] + 4 * values[1] - values[2]) / (2 * h)
    out[-1] = (3 * values[-1] - 4 * values[-2] + values[-3]) / (2 * h)
    return out


def derivative(path):
    """Grid derivative: central differences inside, one-sided second order at the ends."""
    return Path(_derivative_values(path.values, path.n))


def trapezoid_weights(n):
    w = np.full(n + 1, 1.0 / n)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def quadrature(values):
    """Composite trapezoid rule over [0, 1] for values on the uniform grid."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise ValueError("quadrature expects scalar samples; integrate components separately")
    if v.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite samples")
    return float(trapezoid_weights(v.shape[0] - 1) @ v)


def cm_inner(h1, h2):
    """Cameron-Martin inner product: integral of the derivative product.

    Both paths must start at 0 (pass offsets phi - x, not raw paths).
    """
    for h in (h1, h2):
        if float(np.max(np.abs(h.values[0]))) > 1e-12:
            raise InvalidPath("Cameron-Martin paths must start at 0")
    if h1.n != h2.n or h1.d != h2.d:
        raise InvalidPath("paths must share grid size and dimension")
    v1 = _derivative_values(h1.values, h1.n)
    v2 = _derivative_values(h2.values, h2.n)
    return float(trapezoid_weights(h1.n) @ np.einsum("kj,kj->k", v1, v2))


@dataclass(frozen=True)
class NormKind:
    """A path norm: 'sup', 'holder' (alpha < 1/4), 'lp' (p > 4), or 'l2'.

    L^2 is the dominated comparison norm of the family; the tube theory
    requires a dominating norm, so 'l2' is intended for comparisons, not as
    the norm defining a tube event.
    """

    kind: str
    alpha: float = None
    p: float = None

    def __post_init__(self):
        if self.kind not in ("sup", "holder", "lp", "l2"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "holder":
            if self.alpha is None or not 0.0 < self.alpha < HOLDER_ALPHA_MAX:
                raise ValueError(f"Holder exponent must lie in (0, {HOLDER_ALPHA_MAX})")
        elif self.kind == "lp":
            if self.p is None or not self.p > LP_MIN:
                raise ValueError(f"Lp norms require p > {LP_MIN}")

    @classmethod
    def sup(cls):
        return cls("sup")

    @classmethod
    def holder(cls, alpha):
        return cls("holder", alpha=alpha)

    @classmethod
    def lp(cls, p):
        return cls("lp", p=p)

    @classmethod
    def l2(cls):
        return cls("l2")

    def label(self):
        if self.kind == "holder":
            return f"holder({self.alpha:g})"
        if self.kind == "lp":
            return f"lp({self.p:g})"
        return self.kind


@dataclass(frozen=True)
class NormValue:
    value: float
    approximate: bool


def _node_norms(values):
    return np.sqrt(np.einsum("kj,kj->k", values, values))


def _holder_gaps(n):
    if n <= HOLDER_EXACT_MAX_N:
        return np.arange(1, n + 1), False
    gaps = [1]
    while gaps[-1] * 2 <= n:
        gaps.append(gaps[-1] * 2)
    if gaps[-1] != n:
        gaps.append(n)
    return np.asarray(gaps), True


def norm_detail(path, kind):
    """Evaluate a path norm; flags when the Holder seminorm was subsampled."""
    v = path.values
    n = path.n
    node = _node_norms(v)
    if kind.kind == "sup":
        return NormValue(float(node.max()), False)
    if kind.kind == "holder":
        gaps, approx = _holder_gaps(n)
        semi = 0.0
        for g in gaps:
            diffs = v[g:] - v[:-g]
            m = float(np.max(np.sqrt(np.einsum("kj,kj->k", diffs, diffs))))
            semi = max(semi, m / (g / n) ** kind.alpha)
        return NormValue(float(node.max()) + semi, approx)
    w = trapezoid_weights(n)
    if kind.kind == "l2":
        return NormValue(float(np.sqrt(w @ node**2)), False)
    return NormValue(float((w @ node**kind.p) ** (1.0 / kind.p)), False)


def norm(path, kind):
    """Path norm as a float; see :func:`norm_detail` for the subsampling flag."""
    return norm_detail(path, kind).value


# -- CSV serialization -----------------------------------------------------------


def write_csv(path, file):
    """Write header ``t,x1,...,xd`` plus one row per node at full precision."""
    close = False
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        file = open(file, "w", encoding="utf-8")
        close = True
    try:
        cols = ",".join(f"x{i + 1}" for i in range(path.d))
        file.write(f"t,{cols}\n")
        t = path.times
        for k in range(path.n + 1):
            row = ",".join(f"{v:.17g}" for v in path.values[k])
            file.write(f"{t[k]:.17g},{row}\n")
    finally:
        if close:
            file.close()


def path_to_csv(path):
    buf = io.StringIO()
    write_csv(path, buf)
    return buf.getvalue()


def read_csv(file):
    """Inverse of :func:`write_csv`; validates the uniform grid."""
    close = False
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        file = open(file, "r", encoding="utf-8")
        close = True
    try:
        header = file.readline().strip()
        names = header.split(",")
        if names[0] != "t" or len(names) < 2:
            raise InvalidPath(f"unexpected path CSV header {header!r}")
        rows = [[float(tok) for tok in line.strip().split(",")] for line in file if line.strip()]
    finally:
        if close:
            file.close()
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(names):
        raise InvalidPath("malformed path CSV body")
    n = data.shape[0] - 1
    if n < 2:
        raise InvalidPath("path CSV needs at least 3 rows")
    expected = np.arange(n + 1) / n
    if float(np.max(np.abs(data[:, 0] - expected))) > 1e-9:
        raise InvalidPath("path CSV times do not form the uniform grid on [0, 1]")
    return Path(data[:, 1:])
