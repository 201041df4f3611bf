r"""Mean-field drift specifications with exact derivatives.

A drift is a map f(t, x, mu) on [0,1] x R^d x P_2(R^d).  Three closed
polynomial families are provided, chosen so that every derivative the action
and Euler-Lagrange machinery needs is available in closed form, including the
measure (Lions) derivative:

``PolySeparable1D``
    d = 1.  Local part a(t, x) = sum_jk alpha[j,k] t^j x^k plus a separable
    mean-field part sum_m p_m(x) * int q_m(y) mu(dy) with univariate
    polynomials p_m, q_m.

``LinearMeanField``
    Any d.  f(t, x, mu) = A(t) x + b(t) + C(t) * int y mu(dy) with entries
    polynomial in t.

``DistributionFree``
    Any d.  f(t, x, mu) = F(t, x), per-coordinate polynomials in (t, x);
    the measure is ignored and all measure derivatives vanish.

All families depend on the measure only through finitely many linear
functionals (moments of the atoms), which the simulator exploits by freezing
those functionals along a particle ensemble.  Specifications are immutable
after construction and all evaluations are pure.

The classical regularity assumptions behind the action formula (bounded
derivatives of f) cannot hold for non-constant polynomials; as usual for
double-well type models, the formulas are applied on the bounded region of
state space the paths of interest visit.  Validating that is the caller's
responsibility.
"""

import numpy as np

from . import _poly
from .errors import DimensionMismatch, InvalidDrift
from .measure import Measure

DEFAULT_MAX_DEGREE = 10


def _as_state(x, d, name="x"):
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (d,):
        raise DimensionMismatch(f"{name} has shape {arr.shape}, expected ({d},)")
    return arr


class DriftSpec:
    """Common interface of the drift families.

    Subclasses provide vectorized primitives over a batch of (t, x) points;
    the scalar operations below wrap them.  The measure argument enters only
    through :meth:`functional_values`, so evaluation against a frozen
    empirical law is a cheap array operation.
    """

    d = 1
    has_mean_field = False
    n_functionals = 0

    # -- vectorized primitives -------------------------------------------------
    # t: (B,), X: (B, d), G: functional values, either (F,) shared or (B, F).

    def functional_values(self, atoms, weights=None):
        """Mean-field functionals of an atomic measure, shape (F,)."""
        raise NotImplementedError

    def _functionals_at_nodes(self, X):
        """Functionals of the Dirac mass at each row of X, shape (B, F)."""
        raise NotImplementedError

    def _eval(self, t, X, G):
        raise NotImplementedError

    def _grad(self, t, X, G):
        """Partial space Jacobian, (B, d, d) with [b, k, i] = d f_k / d x_i."""
        raise NotImplementedError

    def _lap(self, t, X, G):
        """Vector of coordinate Laplacians, (B, d) with entry sum_i d^2_{x_i} f_k."""
        raise NotImplementedError

    def _dt(self, t, X, G):
        raise NotImplementedError

    def _lderiv(self, t, X, Y):
        """Measure derivative kernel, (B, d, d) with [b, k, j] = (d_mu f_k(y))_j."""
        raise NotImplementedError

    def _div_grad_total_nodes(self, t, X):
        """Total gradient of x -> div_x f(t, x, delta_x), shape (B, d)."""
        raise NotImplementedError

    def _div_grad_frozen(self, t, X, G):
        """Space gradient of x -> div_x f(t, x, mu) with the law frozen, (B, d)."""
        raise NotImplementedError

    # -- node-wise evaluation along a path (law = Dirac at the node) -----------

    def eval_nodes(self, t, X):
        return self._eval(t, X, self._functionals_at_nodes(X))

    def grad_nodes(self, t, X):
        return self._grad(t, X, self._functionals_at_nodes(X))

    def lap_nodes(self, t, X):
        return self._lap(t, X, self._functionals_at_nodes(X))

    def dt_nodes(self, t, X):
        return self._dt(t, X, self._functionals_at_nodes(X))

    def div_nodes(self, t, X):
        g = self.grad_nodes(t, X)
        return np.einsum("bkk->b", g)

    def lderiv_nodes(self, t, X):
        """Kernel derivative integrated against delta_x, i.e. evaluated at y = x."""
        return self._lderiv(t, X, X)

    def jac_total_nodes(self, t, X):
        """Total Jacobian of x -> f(t, x, delta_x): partial plus measure channel."""
        return self.grad_nodes(t, X) + self.lderiv_nodes(t, X)

    def div_grad_total_nodes(self, t, X):
        return self._div_grad_total_nodes(t, X)

    def eval_frozen(self, t, X, functionals):
        """Evaluate against a frozen law given by its functional values."""
        return self._eval(np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],)), X, functionals)

    def eval_frozen_grid(self, t, X, G):
        """Frozen-law evaluation over full trajectories.

        t: (K,) grid times, X: (B, K, d) paths, G: (K, F) frozen functionals;
        returns (B, K, d).
        """
        B, K, d = X.shape
        tt = np.broadcast_to(t, (B, K)).reshape(-1)
        GG = np.broadcast_to(G, (B, K, G.shape[1])).reshape(B * K, -1)
        return self._eval(tt, X.reshape(B * K, d), GG).reshape(B, K, d)

    @property
    def is_zero(self):
        """True when f vanishes identically (solutions are Brownian paths)."""
        return False

    # -- scalar operations ------------------------------------------------------

    def _scalar_args(self, t, x, mu):
        t = float(t)
        if not -1e-9 <= t <= 1.0 + 1e-9:
            raise ValueError(f"time {t} outside [0, 1]")
        xa = _as_state(x, self.d)
        if mu is not None:
            if not isinstance(mu, Measure):
                raise InvalidDrift("mu must be a Measure")
            if mu.d != self.d:
                raise DimensionMismatch(f"measure dimension {mu.d} differs from drift dimension {self.d}")
        return t, xa

    def _functionals_of(self, mu):
        if not self.has_mean_field:
            return np.zeros(0)
        return self.functional_values(mu.atoms, mu.weights)

    def eval_f(self, t, x, mu):
        """Drift value f(t, x, mu), shape (d,)."""
        t, xa = self._scalar_args(t, x, mu)
        return self._eval(np.array([t]), xa[None, :], self._functionals_of(mu))[0]

    def grad_x_f(self, t, x, mu):
        """Space Jacobian, (d, d) with [k, i] = d f_k / d x_i."""
        t, xa = self._scalar_args(t, x, mu)
        return self._grad(np.array([t]), xa[None, :], self._functionals_of(mu))[0]

    def laplacian_trace_f(self, t, x, mu):
        """Per-component trace of the space Hessian, shape (d,)."""
        t, xa = self._scalar_args(t, x, mu)
        return self._lap(np.array([t]), xa[None, :], self._functionals_of(mu))[0]

    def dt_f(self, t, x, mu):
        """Partial time derivative, shape (d,)."""
        t, xa = self._scalar_args(t, x, mu)
        return self._dt(np.array([t]), xa[None, :], self._functionals_of(mu))[0]

    def divergence_x(self, t, x, mu):
        """Divergence sum_i d f_i / d x_i (space derivatives only)."""
        return float(np.trace(self.grad_x_f(t, x, mu)))

    def l_derivative(self, t, x, mu, y):
        """Measure derivative (d_mu f)(t, x, mu)(y), shape (d, d).

        Rows index components of f, columns the components of the derivative.
        For kernel drifts f = int h(t, x, y) mu(dy) this is d_y h(t, x, y);
        identically zero for distribution-free drifts.
        """
        t, xa = self._scalar_args(t, x, mu)
        ya = _as_state(y, self.d, "y")
        return self._lderiv(np.array([t]), xa[None, :], ya[None, :])[0]

    def mean_field_time_term(self, t, phi, phidot, mu):
        """Velocity-contracted measure derivative integrated over mu, shape (d,).

        Component k is int <phidot, (d_mu f_k)(t, phi, mu)(y)> mu(dy): the
        contribution of the moving law delta_{phi_t} to the total time
        derivative of t -> f(t, phi_t, delta_{phi_t}).
        """
        t, xa = self._scalar_args(t, phi, mu)
        v = _as_state(phidot, self.d, "phidot")
        B = mu.natoms
        L = self._lderiv(np.full(B, t), np.broadcast_to(xa, (B, self.d)), mu.atoms)
        return np.einsum("b,bkj,j->k", mu.weights, L, v)


class PolySeparable1D(DriftSpec):
    """Scalar drift a(t, x) + sum_m p_m(x) * int q_m(y) mu(dy).

    Parameters
    ----------
    local : 2-D array-like or None
        Coefficients alpha[j, k] of the local part sum alpha t^j x^k.
    pairs : sequence of (p, q)
        Each entry holds two ascending coefficient lists; the mean-field
        term is p(x) times the mu-integral of q.
    """

    d = 1

    def __init__(self, local=None, pairs=(), max_degree=DEFAULT_MAX_DEGREE):
        self.alpha = _poly.coef2d(local if local is not None else [[0.0]], "local coefficients")
        self.pairs = tuple((_poly.coef1d(p, "p"), _poly.coef1d(q, "q")) for p, q in pairs)
        degree = _poly.poly2_degree(self.alpha)
        for p, q in self.pairs:
            degree = max(degree, _poly.poly1_degree(p) + _poly.poly1_degree(q))
        if degree > max_degree:
            raise InvalidDrift(f"total degree {degree} exceeds maximum {max_degree}")
        self.has_mean_field = len(self.pairs) > 0
        self.n_functionals = len(self.pairs)
        self._alpha_t = _poly.poly2_der_t(self.alpha)
        self._alpha_x = _poly.poly2_der_x(self.alpha)
        self._alpha_xx = _poly.poly2_der_x(self._alpha_x)
        self._p = [p for p, _ in self.pairs]
        self._p1 = [_poly.poly1_der(p) for p in self._p]
        self._p2 = [_poly.poly1_der(p, 2) for p in self._p]
        self._q = [q for _, q in self.pairs]
        self._q1 = [_poly.poly1_der(q) for q in self._q]

    @property
    def is_zero(self):
        return not self.pairs and not np.any(self.alpha)

    def functional_values(self, atoms, weights=None):
        x = np.asarray(atoms, dtype=float).reshape(-1)
        out = np.empty(self.n_functionals)
        for m, q in enumerate(self._q):
            vals = _poly.poly1_eval(q, x)
            out[m] = vals.mean() if weights is None else weights @ vals
        return out

    def _functionals_at_nodes(self, X):
        x = X[:, 0]
        return np.stack([_poly.poly1_eval(q, x) for q in self._q], axis=1) if self.pairs else np.zeros((X.shape[0], 0))

    def _mf_sum(self, coef_list, x, G):
        out = np.zeros_like(x)
        for m, c in enumerate(coef_list):
            g = G[..., m] if G.ndim == 2 else G[m]
            out = out + _poly.poly1_eval(c, x) * g
        return out

    def _eval(self, t, X, G):
        x = X[:, 0]
        val = _poly.poly2_eval(self.alpha, t, x)
        if self.pairs:
            val = val + self._mf_sum(self._p, x, G)
        return val[:, None]

    def _grad(self, t, X, G):
        x = X[:, 0]
        val = _poly.poly2_eval(self._alpha_x, t, x)
        if self.pairs:
            val = val + self._mf_sum(self._p1, x, G)
        return val[:, None, None]

    def _lap(self, t, X, G):
        x = X[:, 0]
        val = _poly.poly2_eval(self._alpha_xx, t, x)
        if self.pairs:
            val = val + self._mf_sum(self._p2, x, G)
        return val[:, None]

    def _dt(self, t, X, G):
        return _poly.poly2_eval(self._alpha_t, t, X[:, 0])[:, None]

    def _lderiv(self, t, X, Y):
        x, y = X[:, 0], Y[:, 0]
        val = np.zeros_like(x)
        for p, q1 in zip(self._p, self._q1):
            val = val + _poly.poly1_eval(p, x) * _poly.poly1_eval(q1, y)
        return val[:, None, None]

    def _div_grad_total_nodes(self, t, X):
        x = X[:, 0]
        val = _poly.poly2_eval(self._alpha_xx, t, x)
        for p1, p2, q, q1 in zip(self._p1, self._p2, self._q, self._q1):
            val = val + _poly.poly1_eval(p2, x) * _poly.poly1_eval(q, x)
            val = val + _poly.poly1_eval(p1, x) * _poly.poly1_eval(q1, x)
        return val[:, None]

    def _div_grad_frozen(self, t, X, G):
        return self._lap(t, X, G)


class LinearMeanField(DriftSpec):
    """f(t, x, mu) = A(t) x + b(t) + C(t) * (first moment of mu).

    A and C are (J, d, d) arrays of t-power coefficients; b is (J, d).
    """

    def __init__(self, d, A=None, b=None, C=None, max_degree=DEFAULT_MAX_DEGREE):
        self.d = int(d)
        if self.d < 1:
            raise InvalidDrift("dimension must be at least 1")
        self.A = _poly.matpoly(A if A is not None else np.zeros((1, d, d)), d, "A")
        self.b = _poly.matpoly(b if b is not None else np.zeros((1, d)), d, "b")
        self.C = _poly.matpoly(C if C is not None else np.zeros((1, d, d)), d, "C")
        for name, arr, shape in (("A", self.A, (d, d)), ("b", self.b, (d,)), ("C", self.C, (d, d))):
            if arr.shape[1:] != shape:
                raise InvalidDrift(f"{name} coefficients have shape {arr.shape[1:]}, expected {shape}")
            if arr.shape[0] - 1 > max_degree:
                raise InvalidDrift(f"degree of {name} exceeds maximum {max_degree}")
        self._A_t = _poly.matpoly_der(self.A)
        self._b_t = _poly.matpoly_der(self.b)
        self._C_t = _poly.matpoly_der(self.C)
        self.has_mean_field = bool(np.any(self.C))
        self.n_functionals = self.d

    @property
    def is_zero(self):
        return not (np.any(self.A) or np.any(self.b) or np.any(self.C))

    def functional_values(self, atoms, weights=None):
        a = np.asarray(atoms, dtype=float).reshape(-1, self.d)
        return a.mean(axis=0) if weights is None else weights @ a

    def _functionals_at_nodes(self, X):
        return X

    def _eval(self, t, X, G):
        At = _poly.matpoly_eval(self.A, t)
        bt = _poly.matpoly_eval(self.b, t)
        Ct = _poly.matpoly_eval(self.C, t)
        m1 = np.einsum("bij,bj->bi", Ct, np.broadcast_to(G, (X.shape[0], self.d)))
        return np.einsum("bij,bj->bi", At, X) + bt + m1

    def _grad(self, t, X, G):
        return _poly.matpoly_eval(self.A, t)

    def _lap(self, t, X, G):
        return np.zeros_like(X)

    def _dt(self, t, X, G):
        At = _poly.matpoly_eval(self._A_t, t)
        bt = _poly.matpoly_eval(self._b_t, t)
        Ct = _poly.matpoly_eval(self._C_t, t)
        m1 = np.einsum("bij,bj->bi", Ct, np.broadcast_to(G, (X.shape[0], self.d)))
        return np.einsum("bij,bj->bi", At, X) + bt + m1

    def _lderiv(self, t, X, Y):
        return _poly.matpoly_eval(self.C, t)

    def _div_grad_total_nodes(self, t, X):
        return np.zeros_like(X)

    def _div_grad_frozen(self, t, X, G):
        return np.zeros_like(X)


class DistributionFree(DriftSpec):
    """f(t, x, mu) = F(t, x): one sparse polynomial per output coordinate."""

    def __init__(self, d, components, max_degree=DEFAULT_MAX_DEGREE):
        self.d = int(d)
        if self.d < 1:
            raise InvalidDrift("dimension must be at least 1")
        comps = []
        for comp in components:
            mono = comp if isinstance(comp, _poly.Monomials) else _poly.Monomials(self.d, comp)
            if mono.d != self.d:
                raise InvalidDrift("component dimension differs from drift dimension")
            if mono.degree() > max_degree:
                raise InvalidDrift(f"degree {mono.degree()} exceeds maximum {max_degree}")
            comps.append(mono)
        if len(comps) != self.d:
            raise InvalidDrift(f"expected {self.d} components, got {len(comps)}")
        self._F = comps
        self._is_zero = all(c.nterms == 0 for c in comps)
        self._Ft = [c.partial_t() for c in comps]
        self._Fx = [[c.partial_x(i) for i in range(self.d)] for c in comps]
        self._Fxx_trace = [
            [self._Fx[k][i].partial_x(i) for i in range(self.d)] for k in range(self.d)
        ]
        # gradient of the divergence: entry j is sum_i d_j d_i F_i
        self._div_grad = [
            [self._Fx[i][i].partial_x(j) for i in range(self.d)] for j in range(self.d)
        ]
        self.has_mean_field = False
        self.n_functionals = 0

    @property
    def is_zero(self):
        return self._is_zero

    def functional_values(self, atoms, weights=None):
        return np.zeros(0)

    def _functionals_at_nodes(self, X):
        return np.zeros((X.shape[0], 0))

    def _eval(self, t, X, G):
        return np.stack([c.eval(t, X) for c in self._F], axis=1)

    def _grad(self, t, X, G):
        B = X.shape[0]
        out = np.empty((B, self.d, self.d))
        for k in range(self.d):
            for i in range(self.d):
                out[:, k, i] = self._Fx[k][i].eval(t, X)
        return out

    def _lap(self, t, X, G):
        B = X.shape[0]
        out = np.zeros((B, self.d))
        for k in range(self.d):
            for i in range(self.d):
                out[:, k] += self._Fxx_trace[k][i].eval(t, X)
        return out

    def _dt(self, t, X, G):
        return np.stack([c.eval(t, X) for c in self._Ft], axis=1)

    def _lderiv(self, t, X, Y):
        return np.zeros((X.shape[0], self.d, self.d))

    def _div_grad_total_nodes(self, t, X):
        B = X.shape[0]
        out = np.zeros((B, self.d))
        for j in range(self.d):
            for i in range(self.d):
                out[:, j] += self._div_grad[j][i].eval(t, X)
        return out

    def _div_grad_frozen(self, t, X, G):
        return self._div_grad_total_nodes(t, X)


# -- ready-made models ----------------------------------------------------------


def double_well_mean_field():
    """Scalar drift f(x, mu) = (x - x^3) * int y mu(dy).

    Along Dirac laws the effective drift is x^2 - x^4, with rest points
    at -1, 0 and 1; the transition between the two outer wells is the
    standard benchmark for most probable paths in this package.
    """
    return PolySeparable1D(pairs=[([0.0, 1.0, 0.0, -1.0], [0.0, 1.0])])


def ornstein_uhlenbeck(rate=1.0, d=1):
    """Distribution-free linear pull f(t, x) = -rate * x."""
    comps = []
    for k in range(d):
        exps = [0] * d
        exps[k] = 1
        comps.append([(-float(rate), 0, tuple(exps))])
    return DistributionFree(d, comps)


def zero_drift(d=1):
    """The driftless case: solutions are Brownian paths."""
    return DistributionFree(d, [[] for _ in range(d)])


def mean_drift(d=1):
    """f(x, mu) = first moment of mu: every particle chases the ensemble mean."""
    return LinearMeanField(d, C=np.eye(d)[None, :, :])
