r"""The path action functional and its discrete gradient.

For the additive-noise mean-field SDE dX = f(t, X, law(X)) dt + dB the action
of a reference path phi on [0, 1] decomposes as

    total = kinetic + divergence
    kinetic    = -1/2 * int |phidot - f(t, phi, delta_phi)|^2 dt
    divergence = -1/2 * int div_x f(t, phi, delta_phi) dt

where the law argument is the Dirac mass at the current path point (the law
of a deterministic path).  Larger totals mean more probable tubes; the
minimization machinery therefore works on the negated total, and
:func:`discrete_action_gradient` is the exact gradient of that discrete
objective with respect to the interior nodes, endpoints held fixed.

Discretization: the kinetic integrand is sampled per grid interval with the
forward difference (x_{k+1} - x_k)/h against the average of the drift at the
two interval endpoints, which is the midpoint rule in disguise; the
divergence integral uses the composite trapezoid rule on the nodes.  Both are
second order, the straight line is exactly stationary for zero drift, and the
drift enters only through pointwise node evaluations f(t_k, x_k, delta_{x_k}).
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidPath
from .paths import trapezoid_weights


@dataclass(frozen=True)
class OMResult:
    """Action value split into kinetic and divergence parts.

    ``kinetic`` is nonpositive by construction and ``total`` is stored as the
    exact float sum of the two parts.
    """

    kinetic: float
    divergence: float
    total: float
    n: int

    def as_dict(self):
        return {"kinetic": self.kinetic, "divergence": self.divergence, "total": self.total, "n": self.n}

    def to_json(self, **kwargs):
        return json.dumps(self.as_dict(), **kwargs)

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(obj["kinetic"], obj["divergence"], obj["total"], obj["n"])


def _check(spec, path):
    if spec.d != path.d:
        raise DimensionMismatch(f"drift dimension {spec.d} differs from path dimension {path.d}")


def _interval_residuals(spec, values, n):
    """u_k = (x_{k+1} - x_k) / h - (f_k + f_{k+1}) / 2 on the n grid intervals."""
    h = 1.0 / n
    t = np.arange(n + 1) / n
    f = spec.eval_nodes(t, values)
    return (values[1:] - values[:-1]) / h - 0.5 * (f[:-1] + f[1:])


def _parts(spec, values, n):
    t = np.arange(n + 1) / n
    u = _interval_residuals(spec, values, n)
    kinetic = -0.5 / n * float(np.einsum("kj,kj->", u, u))
    divergence = -0.5 * float(trapezoid_weights(n) @ spec.div_nodes(t, values))
    return kinetic, divergence


def om_action(spec, path):
    """Evaluate the action along ``path`` with the law frozen to delta_{phi_t}."""
    _check(spec, path)
    kinetic, divergence = _parts(spec, path.values, path.n)
    if not (np.isfinite(kinetic) and np.isfinite(divergence)):
        raise InvalidPath("action evaluation produced non-finite terms")
    return OMResult(kinetic, divergence, kinetic + divergence, path.n)


def action_objective(spec, path):
    """The minimized objective: the negated action total."""
    res = om_action(spec, path)
    return -res.total


def _objective_values(spec, values, n):
    kinetic, divergence = _parts(spec, values, n)
    return -(kinetic + divergence)


def _gradient_values(spec, values, n):
    """Exact gradient of the discrete objective w.r.t. interior nodes, (n-1, d)."""
    h = 1.0 / n
    t = np.arange(n + 1) / n
    w = trapezoid_weights(n)
    u = _interval_residuals(spec, values, n)
    # d/dx_m of 1/2 sum_k h |u_k|^2: difference of adjacent interval residuals
    # plus the drift coupling through both adjacent intervals
    g = u[:-1] - u[1:]
    jac = spec.jac_total_nodes(t[1:-1], values[1:-1])
    g -= 0.5 * h * np.einsum("kab,ka->kb", jac, u[:-1] + u[1:])
    # divergence term
    g += 0.5 * w[1:-1, None] * spec.div_grad_total_nodes(t[1:-1], values[1:-1])
    return g


def discrete_action_gradient(spec, path):
    """Gradient of the discrete objective (negated total) over interior nodes.

    This is the derivative of the objective exactly as discretized, not of
    the continuum functional; endpoints are held fixed.  Requires n >= 3.
    """
    _check(spec, path)
    if path.n < 3:
        raise InvalidPath("gradient needs n >= 3")
    return _gradient_values(spec, path.values, path.n)


# -- frozen-law counterparts ------------------------------------------------------
#
# The same discrete functional, but with the law flow supplied externally as
# per-node mean-field functional values G (n+1, F) instead of moving with the
# nodes.  When G equals the node functionals of the path itself the objective
# value coincides with -om_action(...).total; the gradient differs because the
# measure no longer responds to node perturbations.  The action minimizer
# iterates freeze -> descend -> re-freeze on these.


def _frozen_parts(spec, values, n, G):
    t = np.arange(n + 1) / n
    f = spec._eval(t, values, G)
    u = (values[1:] - values[:-1]) * n - 0.5 * (f[:-1] + f[1:])
    kinetic = -0.5 / n * float(np.einsum("kj,kj->", u, u))
    div = np.einsum("bkk->b", spec._grad(t, values, G))
    divergence = -0.5 * float(trapezoid_weights(n) @ div)
    return u, kinetic, divergence


def _frozen_objective_values(spec, values, n, G):
    _, kinetic, divergence = _frozen_parts(spec, values, n, G)
    return -(kinetic + divergence)


def _frozen_gradient_values(spec, values, n, G):
    h = 1.0 / n
    t = np.arange(n + 1) / n
    w = trapezoid_weights(n)
    u, _, _ = _frozen_parts(spec, values, n, G)
    g = u[:-1] - u[1:]
    jac = spec._grad(t[1:-1], values[1:-1], G[1:-1])
    g -= 0.5 * h * np.einsum("kab,ka->kb", jac, u[:-1] + u[1:])
    g += 0.5 * w[1:-1, None] * spec._div_grad_frozen(t[1:-1], values[1:-1], G[1:-1])
    return g
