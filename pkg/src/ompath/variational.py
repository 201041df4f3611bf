r"""Most probable transition paths via the Euler-Lagrange equation and direct
action minimization.

Stationarity of the action along paths with pinned endpoints leads to the
second-order two-point boundary value problem

    phiddot = dt_f + 1/2 * lap_f + (grad_f)^T f + mean-field term,

all evaluated at (t, phi_t, delta_{phi_t}).  The mean-field term is the
velocity-contracted measure derivative (the moving-law contribution to the
total time derivative of the drift along the path); ``velocity_factor=False``
instead inserts the raw integrated measure derivative, a published variant of
the scalar double-well equation kept for side-by-side comparison (scalar
drifts only).  In higher dimension the same formula is applied per
coordinate.

Two solvers are provided and act as mutual cross-checks:

* :func:`solve_el_bvp` - single shooting with a classical fixed-step RK4
  integrator and damped Newton on the unknown initial velocity, followed by a
  damped-Newton polish of the central-difference collocation system, so the
  returned path satisfies the discrete residual to the requested tolerance
  (and converges at second order under grid refinement).  If shooting fails,
  the action minimizer seeds the polish instead.
* :func:`minimize_action` - first-order descent (Nesterov momentum with
  adaptive restarts and a backtracking line search) on the negated discrete
  action with endpoints pinned.  Measure-dependent drifts are handled
  self-consistently: the law flow is frozen along the current path and
  re-frozen after each descent stage, so the fixed point satisfies the same
  stationarity equation as the BVP solver.

Transition-path problems are multi-modal; :func:`solve_multistart` runs the
BVP solver from several initial-guess families and ranks the distinct
converged paths by action value (most probable first).
"""

from dataclasses import dataclass

import numpy as np

from .action import _frozen_gradient_values, _frozen_objective_values, _objective_values, om_action
from .errors import DimensionMismatch, InvalidPath, NonConvergence
from .paths import Path, _derivative_values, linear_path

_SHOOT_TOL = 1e-10


@dataclass(frozen=True)
class BVProblem:
    """Boundary value problem for the stationarity equation.

    ``init`` selects the initial-guess strategy ("linear", "tanh", "step") or
    supplies a Path directly.  ``velocity_factor`` toggles the mean-field term
    variant described in the module docstring.
    """

    drift: object
    x0: np.ndarray
    x1: np.ndarray
    n: int
    tol: float = 1e-8
    max_iter: int = 60
    damping: float = 0.5
    max_halvings: int = 30
    init: object = "linear"
    velocity_factor: bool = True

    def __post_init__(self):
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))
        object.__setattr__(self, "x1", np.atleast_1d(np.asarray(self.x1, dtype=float)))
        if self.x0.shape != (self.drift.d,) or self.x1.shape != (self.drift.d,):
            raise DimensionMismatch("endpoints must match the drift dimension")
        if not (np.all(np.isfinite(self.x0)) and np.all(np.isfinite(self.x1))):
            raise InvalidPath("endpoints must be finite")
        if self.n < 10:
            raise InvalidPath("need n >= 10")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.damping < 1:
            raise ValueError("damping factor must lie in (0, 1)")


@dataclass
class ELSolution:
    path: Path
    converged: bool
    residual_max: float
    iterations: int
    method: str
    initial_velocity: np.ndarray = None
    action: object = None


@dataclass
class MinimizeResult:
    path: Path
    converged: bool
    grad_max: float
    objective: float
    iterations: int
    action: object = None


def el_rhs_nodes(spec, t, X, V, velocity_factor=True):
    """Right-hand side of the stationarity ODE at a batch of (t, x, v) nodes."""
    f = spec.eval_nodes(t, X)
    grad = spec.grad_nodes(t, X)
    rhs = spec.dt_nodes(t, X) + 0.5 * spec.lap_nodes(t, X)
    rhs += np.einsum("bki,bk->bi", grad, f)
    L = spec.lderiv_nodes(t, X)
    if velocity_factor:
        rhs += np.einsum("bkj,bj->bk", L, V)
    else:
        if spec.d != 1:
            raise InvalidPath("the velocity-free mean-field variant is scalar only")
        rhs += L[:, :, 0]
    return rhs


def el_residual(spec, path, velocity_factor=True):
    """Central-difference residual of the stationarity equation.

    Interior nodes carry phiddot minus the right-hand side; the endpoint
    entries are reported as zero.
    """
    if spec.d != path.d:
        raise DimensionMismatch("drift and path dimensions differ")
    if path.n < 3:
        raise InvalidPath("residual needs n >= 3")
    X = path.values
    n = path.n
    h = 1.0 / n
    t = path.times
    V = _derivative_values(X, n)
    rhs = el_rhs_nodes(spec, t[1:-1], X[1:-1], V[1:-1], velocity_factor)
    res = np.zeros_like(X)
    res[1:-1] = (X[2:] - 2 * X[1:-1] + X[:-2]) / h**2 - rhs
    return Path(res)


def _interior_residual(spec, values, n, velocity_factor):
    h = 1.0 / n
    t = np.arange(n + 1) / n
    V = _derivative_values(values, n)
    rhs = el_rhs_nodes(spec, t[1:-1], values[1:-1], V[1:-1], velocity_factor)
    return (values[2:] - 2 * values[1:-1] + values[:-2]) / h**2 - rhs


def initial_guess(kind, x0, x1, n):
    """Initial-guess families: straight line, heteroclinic-like tanh, delayed ramp."""
    if isinstance(kind, Path):
        return kind
    s = np.linspace(0.0, 1.0, n + 1)
    if kind == "linear":
        shape = s
    elif kind == "tanh":
        sharp = 8.0
        shape = 0.5 * (1.0 + np.tanh(sharp * (s - 0.5)) / np.tanh(sharp / 2.0))
    elif kind == "step":
        shape = np.clip((s - 0.45) / 0.1, 0.0, 1.0)
    else:
        raise ValueError(f"unknown initial-guess strategy {kind!r}")
    return Path(x0[None, :] + shape[:, None] * (x1 - x0)[None, :])


def _rk4_shoot(spec, x0, v0, n, velocity_factor):
    """Integrate the stationarity ODE from (x0, v0); returns (X, ok)."""
    h = 1.0 / n
    d = x0.shape[0]
    X = np.empty((n + 1, d))
    X[0] = x0
    x, v = x0.astype(float), v0.astype(float)

    def acc(t, xx, vv):
        return el_rhs_nodes(spec, np.array([t]), xx[None, :], vv[None, :], velocity_factor)[0]

    for k in range(n):
        t = k * h
        k1x, k1v = v, acc(t, x, v)
        k2x, k2v = v + 0.5 * h * k1v, acc(t + 0.5 * h, x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = v + 0.5 * h * k2v, acc(t + 0.5 * h, x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = v + h * k3v, acc(t + h, x + h * k3x, v + h * k3v)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            return X, False
        X[k + 1] = x
    return X, True


def _shoot_newton(problem):
    """Damped Newton on the initial velocity; returns (X, v, gap, ok)."""
    spec = problem.drift
    d = spec.d
    guess = initial_guess(problem.init, problem.x0, problem.x1, problem.n)
    v = _derivative_values(guess.values, problem.n)[0].copy()
    scale = 1.0 + float(np.max(np.abs(problem.x1)))

    def gap_of(vv):
        X, ok = _rk4_shoot(spec, problem.x0, vv, problem.n, problem.velocity_factor)
        if not ok:
            return X, None
        return X, X[-1] - problem.x1

    X, gap = gap_of(v)
    if gap is None:
        return X, v, np.inf, False
    for _ in range(problem.max_iter):
        gnorm = float(np.max(np.abs(gap)))
        if gnorm <= _SHOOT_TOL * scale:
            return X, v, gnorm, True
        # finite-difference Jacobian of the endpoint gap w.r.t. v
        J = np.empty((d, d))
        delta = 1e-6 * (1.0 + float(np.max(np.abs(v))))
        singular = False
        for j in range(d):
            e = np.zeros(d)
            e[j] = delta
            _, gp = gap_of(v + e)
            _, gm = gap_of(v - e)
            if gp is None or gm is None:
                singular = True
                break
            J[:, j] = (gp - gm) / (2 * delta)
        if singular:
            return X, v, gnorm, False
        try:
            step = np.linalg.solve(J, -gap)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -gap, rcond=None)[0]
        lam = 1.0
        accepted = False
        for _ in range(problem.max_halvings):
            Xn, gap_n = gap_of(v + lam * step)
            if gap_n is not None and float(np.max(np.abs(gap_n))) < gnorm:
                v = v + lam * step
                X, gap = Xn, gap_n
                accepted = True
                break
            lam *= problem.damping
        if not accepted:
            return X, v, gnorm, False
    return X, v, float(np.max(np.abs(gap))), float(np.max(np.abs(gap))) <= 1e-6 * scale


def _block_thomas(A, B, C, rhs):
    """Solve the block-tridiagonal system with sub/diag/super blocks A, B, C."""
    M, d, _ = B.shape
    Cp = np.empty_like(C)
    rp = np.empty_like(rhs)
    Bi = B[0]
    Cp[0] = np.linalg.solve(Bi, C[0])
    rp[0] = np.linalg.solve(Bi, rhs[0])
    for i in range(1, M):
        Bi = B[i] - A[i] @ Cp[i - 1]
        Cp[i] = np.linalg.solve(Bi, C[i])
        rp[i] = np.linalg.solve(Bi, rhs[i] - A[i] @ rp[i - 1])
    out = np.empty_like(rhs)
    out[-1] = rp[-1]
    for i in range(M - 2, -1, -1):
        out[i] = rp[i] - Cp[i] @ out[i + 1]
    return out


def _collocation_polish(problem, values, max_iter=40):
    """Damped Newton on the central-difference collocation system.

    The Jacobian is block tridiagonal; its blocks are recovered from six
    structurally colored finite-difference evaluations of the residual.
    """
    spec = problem.drift
    n, d = problem.n, spec.d
    M = n - 1
    X = values.copy()
    X[0], X[-1] = problem.x0, problem.x1

    def res(Xfull):
        return _interior_residual(spec, Xfull, n, problem.velocity_factor)

    F = res(X)
    iters = 0
    for it in range(max_iter):
        scale = 1.0 + float(np.max(np.abs(X)))
        fnorm = float(np.max(np.abs(F)))
        if fnorm <= problem.tol * scale:
            return X, True, fnorm, iters
        iters += 1
        delta = 1e-6 * scale
        A = np.zeros((M, d, d))
        B = np.zeros((M, d, d))
        C = np.zeros((M, d, d))
        for color in range(3):
            idx = np.arange(color, M, 3)
            for j in range(d):
                Xp = X.copy()
                Xp[idx + 1, j] += delta
                Fp = res(Xp)
                Xm = X.copy()
                Xm[idx + 1, j] -= delta
                Fm = res(Xm)
                col = (Fp - Fm) / (2 * delta)
                B[idx, :, j] = col[idx]
                left = idx[idx - 1 >= 0]
                C[left - 1, :, j] = col[left - 1]
                right = idx[idx + 1 <= M - 1]
                A[right + 1, :, j] = col[right + 1]
        try:
            step = _block_thomas(A, B, C, -F)
        except np.linalg.LinAlgError:
            return X, False, fnorm, iters
        lam = 1.0
        accepted = False
        for _ in range(problem.max_halvings):
            Xn = X.copy()
            Xn[1:-1] += lam * step
            Fn = res(Xn)
            if np.all(np.isfinite(Fn)) and float(np.max(np.abs(Fn))) < fnorm:
                X, F = Xn, Fn
                accepted = True
                break
            lam *= problem.damping
        if not accepted:
            return X, False, fnorm, iters
    return X, False, float(np.max(np.abs(F))), iters


def solve_el_bvp(problem):
    """Solve the stationarity BVP; see the module docstring for the method.

    Returns an :class:`ELSolution` whose path meets
    ``max |residual| <= tol * (1 + max |path|)``; raises
    :class:`NonConvergence` (carrying the best iterate) otherwise.
    """
    spec = problem.drift
    X, v, gap, ok = _shoot_newton(problem)
    method = "shooting"
    initial_velocity = v if ok else None
    if not ok or not np.all(np.isfinite(X)):
        fallback = minimize_action(
            spec,
            problem.x0,
            problem.x1,
            problem.n,
            init=problem.init if isinstance(problem.init, Path) else "linear",
            velocity_factor=problem.velocity_factor,
        )
        X = fallback.path.values.copy()
        method = "minimize-fallback"
    X[0], X[-1] = problem.x0, problem.x1
    Xp, converged, fnorm, its = _collocation_polish(problem, X)
    path = Path(Xp)
    if not converged:
        raise NonConvergence(
            f"collocation polish stalled at residual {fnorm:.3e} after {its} iterations",
            best_path=path,
            residual_norm=fnorm,
            initial_velocity=initial_velocity,
        )
    sol = ELSolution(
        path=path,
        converged=True,
        residual_max=fnorm,
        iterations=its,
        method=method + "+collocation",
        initial_velocity=initial_velocity,
        action=om_action(spec, path),
    )
    return sol


def _descend_frozen(spec, values0, n, G, tol, max_iter, step0):
    """Accelerated descent on the frozen-law objective with pinned endpoints.

    Nesterov momentum with the gradient-based adaptive restart rule and a
    backtracking line search (sufficient decrease); the returned iterate is
    the one whose gradient max-norm first drops below ``tol``.
    """

    def J(vals):
        return _frozen_objective_values(spec, vals, n, G)

    def dJ(vals):
        return _frozen_gradient_values(spec, vals, n, G)

    X = values0.copy()
    g = dJ(X)
    gmax = float(np.max(np.abs(g)))
    if gmax < tol:
        return X, True, 0, gmax
    step = step0
    Y = X.copy()
    prev = X.copy()
    theta = 1.0
    best, best_g = X.copy(), gmax
    for it in range(1, max_iter + 1):
        gY = dJ(Y)
        JY = J(Y)
        gY2 = float(np.einsum("kj,kj->", gY, gY))
        accepted = False
        # sufficient decrease, with an allowance for objective rounding noise
        floor = 1e-15 * (1.0 + abs(JY))
        for _ in range(60):
            Z = Y.copy()
            Z[1:-1] -= step * gY
            JZ = J(Z)
            if np.isfinite(JZ) and JZ <= JY - 1e-4 * step * gY2 + floor:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if np.array_equal(Y, prev):
                break  # stationary to rounding at the momentum-free point
            theta = 1.0
            Y = prev.copy()
            continue
        gZ = dJ(Z)
        gmax = float(np.max(np.abs(gZ)))
        if gmax < best_g:
            best, best_g = Z.copy(), gmax
        if gmax < tol:
            return Z, True, it, gmax
        # adaptive restart: drop momentum when it points uphill
        if float(np.einsum("kj,kj->", gY, (Z - prev)[1:-1])) > 0.0:
            theta = 1.0
            Y = Z.copy()
        else:
            theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta**2))
            Y = Z + ((theta - 1.0) / theta_new) * (Z - prev)
            Y[0], Y[-1] = values0[0], values0[-1]
            theta = theta_new
        prev = Z
        # the step only ever shrinks: momentum needs a consistent bound on 1/L
    return best, False, max_iter, best_g


def minimize_action(spec, x0, x1, n, init="linear", tol=1e-8, max_iter=50000, velocity_factor=True):
    """Minimize the negated discrete action over paths with pinned endpoints.

    For measure-dependent drifts the law flow is handled self-consistently:
    the flow of mean-field functionals is frozen along the current path, the
    classical action with that frozen flow is minimized by accelerated
    gradient descent (backtracking line search plus momentum restarts), and
    the flow is re-frozen, until the gradient evaluated at the self-consistent
    law drops below ``tol``.  Fixed points of this iteration satisfy the same
    stationarity equation as :func:`solve_el_bvp`, so the two solvers
    cross-check each other.  For distribution-free drifts the outer loop is
    a single descent.

    ``max_iter`` caps the total number of descent iterations across outer
    stages.  Non-convergence returns the best iterate flagged
    ``converged=False``.  ``velocity_factor`` is accepted for interface
    symmetry with the BVP solver; the mean-field transport term arises here
    from the frozen flow itself.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    if x0.shape != (spec.d,) or x1.shape != (spec.d,):
        raise DimensionMismatch("endpoints must match the drift dimension")
    guess = initial_guess(init, x0, x1, n)
    if guess.n != n or guess.d != spec.d:
        raise InvalidPath("initial path must live on the requested grid")
    values = guess.values.copy()
    values[0], values[-1] = x0, x1

    step0 = 0.25 / n  # ~ 1/L for the quadratic part of the objective
    total_iters = 0
    converged = False
    gmax = np.inf
    max_outer = 100
    for _ in range(max_outer):
        G = spec._functionals_at_nodes(values)
        g_sc = _frozen_gradient_values(spec, values, n, G)
        gmax = float(np.max(np.abs(g_sc)))
        if gmax < tol:
            converged = True
            break
        budget = max_iter - total_iters
        if budget <= 0:
            break
        values, inner_ok, iters, inner_g = _descend_frozen(
            spec, values, n, G, 0.5 * tol, budget, step0
        )
        total_iters += iters
        if not spec.has_mean_field:
            converged = inner_ok
            gmax = inner_g
            break
        if not inner_ok and iters >= budget:
            gmax = inner_g
            break
    path = Path(values)
    objective = _objective_values(spec, values, n)
    return MinimizeResult(path, converged, gmax, objective, total_iters, om_action(spec, path))


def solve_multistart(spec, x0, x1, n, inits=("linear", "tanh", "step"), **kwargs):
    """Run the BVP solver from several initial guesses; rank by action value.

    Returns a list of (init_name, ELSolution) with distinct converged paths,
    most probable (largest action total) first.  Failed starts are skipped.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    results = []
    for name in inits:
        problem = BVProblem(spec, x0, x1, n, init=name, **kwargs)
        try:
            sol = solve_el_bvp(problem)
        except NonConvergence:
            continue
        dup = False
        for _, other in results:
            gap = float(np.max(np.abs(sol.path.values - other.path.values)))
            if gap <= 1e-6 * (1.0 + float(np.max(np.abs(other.path.values)))):
                dup = True
                break
        if not dup:
            results.append((name, sol))
    results.sort(key=lambda item: -item[1].action.total)
    return results
