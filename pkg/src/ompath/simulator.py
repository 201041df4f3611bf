r"""Interacting-particle Monte Carlo for the mean-field SDE and tube events.

The SDE dX = f(t, X, law(X)) dt + dB with X_0 = x is simulated in two phases:

1. An N-particle Euler-Maruyama ensemble replaces the law by its empirical
   measure at every step; the mean-field functionals of that ensemble are
   recorded per time node ("frozen flow").  The law of the limiting process
   is deterministic, so freezing is consistent for large N.
2. M independent trajectories are integrated against the frozen flow.  Their
   tube indicators are genuinely i.i.d., which makes the binomial confidence
   intervals valid (trajectories of an interacting ensemble are not
   independent).

Tube probabilities P(||X - phi|| <= eps) are estimated as weight averages.
For the supremum norm in one dimension the estimator multiplies, per grid
interval, the exact non-exit probability of the Brownian bridge between the
simulated nodes (the piecewise-linear drift of the Euler scheme shifts into
the conditioning), which removes the O(sqrt(dt)) discrete-monitoring bias:
the average then estimates the continuum tube probability rather than the
probability that the grid skeleton stays inside.  Set
``bridge_correction=False`` to recover the plain discrete-norm fraction; the
other norms always use the discrete path norms.

Girsanov reweighting follows the density

    R = exp( int <f(t, Y, law) - phidot, dB> - 1/2 int |f(t, Y, law) - phidot|^2 dt ),

with Y = phi + B, discretized with left-point (Ito) evaluation so that
E[R] = 1 holds exactly at every step count.  With ``girsanov_shift`` set in
the configuration, tube estimates are computed by importance sampling under
the shifted measure.

Randomness comes from counter-based Philox streams keyed by (seed, stream id),
one stream per trajectory batch with a fixed batch partition, so results are
bitwise reproducible for a given seed regardless of the thread count used to
process batches.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .action import om_action
from .errors import DimensionMismatch, InvalidPath, SimulationBlowup
from .paths import Path, _derivative_values, trapezoid_weights, _holder_gaps

_PHASE_ENSEMBLE = 1
_PHASE_TRAJECTORY = 2
_CI99 = 2.5758293035489004  # two-sided 99% normal quantile


def _generator(seed, phase, index=0):
    stream = (np.uint64(phase) << np.uint64(48)) + np.uint64(index)
    key = np.array([np.uint64(seed), stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SimConfig:
    """Simulation layout: model, sizes, and the explicit RNG seed.

    N is the phase-1 ensemble size, n the number of time steps on [0, 1] and
    M the number of phase-2 Monte Carlo trajectories.  ``girsanov_shift``
    switches tube estimation to importance sampling around the given path.
    ``batch_size`` fixes the trajectory batch partition (and therefore the
    random streams); changing it changes the sample, changing ``threads``
    never does.
    """

    drift: object
    x: np.ndarray
    N: int
    n: int
    M: int = 1
    seed: int = None
    batch_size: int = 8192
    bridge_correction: bool = True
    girsanov_shift: Path = None
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        if self.x.shape != (self.drift.d,):
            raise DimensionMismatch("initial point must match the drift dimension")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("initial point must be finite")
        if self.N < 2 or self.n < 2 or self.M < 1:
            raise ValueError("need N >= 2, n >= 2, M >= 1")
        if self.seed is None or int(self.seed) < 0:
            raise ValueError("an explicit nonnegative seed is required")
        object.__setattr__(self, "seed", int(self.seed))
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.girsanov_shift is not None:
            s = self.girsanov_shift
            if s.n != self.n or s.d != self.drift.d:
                raise InvalidPath("girsanov shift path must live on the simulation grid")
            if float(np.max(np.abs(s.values[0] - self.x))) > 1e-12:
                raise InvalidPath("girsanov shift path must start at the initial point")

    @property
    def dt(self):
        return 1.0 / self.n

    @property
    def times(self):
        return np.arange(self.n + 1) / self.n


@dataclass
class EnsembleResult:
    """Phase-1 output: particle paths, their Brownian increments, frozen flow."""

    times: np.ndarray
    paths: np.ndarray       # (N, n+1, d)
    increments: np.ndarray  # (N, n, d)
    frozen: np.ndarray      # (n+1, F) mean-field functional values

    @property
    def N(self):
        return self.paths.shape[0]


def simulate_ensemble(config):
    """Euler-Maruyama for the interacting N-particle system.

    Keeps full paths and increments in memory ((N, n+1, d) and (N, n, d)), so
    size the ensemble accordingly.  Deterministic given the seed.
    """
    spec = config.drift
    N, n, d, dt = config.N, config.n, spec.d, config.dt
    gen = _generator(config.seed, _PHASE_ENSEMBLE)
    paths = np.empty((N, n + 1, d))
    increments = np.empty((N, n, d))
    frozen = np.empty((n + 1, spec.n_functionals))
    X = np.tile(config.x, (N, 1))
    paths[:, 0] = X
    sqdt = math.sqrt(dt)
    for k in range(n):
        frozen[k] = spec.functional_values(X)
        dW = gen.standard_normal((N, d)) * sqdt
        X = X + spec.eval_frozen(k * dt, X, frozen[k]) * dt + dW
        if not np.all(np.isfinite(X)):
            bad = int(np.argwhere(~np.isfinite(X))[0, 0])
            raise SimulationBlowup(f"non-finite state at step {k + 1}, particle {bad}", k + 1, bad)
        increments[:, k] = dW
        paths[:, k + 1] = X
    frozen[n] = spec.functional_values(X)
    return EnsembleResult(config.times, paths, increments, frozen)


def frozen_flow(config):
    """Phase-1 frozen mean-field functionals, (n+1, F); None if measure-free.

    Runs the same particle system and random stream as
    :func:`simulate_ensemble` but stores only the per-step functionals.
    """
    spec = config.drift
    if not spec.has_mean_field:
        return None
    N, n, d, dt = config.N, config.n, spec.d, config.dt
    gen = _generator(config.seed, _PHASE_ENSEMBLE)
    frozen = np.empty((n + 1, spec.n_functionals))
    X = np.tile(config.x, (N, 1))
    sqdt = math.sqrt(dt)
    for k in range(n):
        frozen[k] = spec.functional_values(X)
        dW = gen.standard_normal((N, d)) * sqdt
        X = X + spec.eval_frozen(k * dt, X, frozen[k]) * dt + dW
        if not np.all(np.isfinite(X)):
            bad = int(np.argwhere(~np.isfinite(X))[0, 0])
            raise SimulationBlowup(f"non-finite state at step {k + 1}, particle {bad}", k + 1, bad)
    frozen[n] = spec.functional_values(X)
    return frozen


def ensemble_stats(result):
    """Per-node summary rows: time, mean per coordinate, sample variance per
    coordinate, and the mean squared norm."""
    mean = result.paths.mean(axis=0)
    var = result.paths.var(axis=0, ddof=1)
    second = np.einsum("ikj,ikj->k", result.paths, result.paths) / result.N
    return {"t": result.times, "mean": mean, "var": var, "second_moment": second}


# -- tube probabilities ------------------------------------------------------------


@dataclass(frozen=True)
class TubeEstimate:
    """Monte Carlo tube probability with binomial-style uncertainty.

    ``stderr`` is the sample standard error of the per-trajectory weights;
    for plain indicator weights this equals sqrt(p (1 - p) / samples).
    The 99% confidence interval is clipped to [0, 1]; a zero-hit estimate
    carries the one-sided exact upper bound.
    """

    probability: float
    samples: int
    stderr: float
    ci_low: float
    ci_high: float
    norm_label: str
    eps: float
    corrected: bool


def _survival_products(z, eps, dt, nimages=3):
    """Product over grid intervals of the bridge non-exit probability.

    ``z`` holds (B, n+1) scalar offsets from the reference; each interval
    contributes P(Brownian bridge between its endpoints stays in (-eps, eps)),
    by the image-charge series for a corridor of width 2*eps.  Exponentials
    are only evaluated where they can contribute (most factors are 1 to
    machine precision); higher images are skipped when the corridor is wide
    relative to the step, which is the generic case.
    """
    out = np.zeros(z.shape[0])
    alive = np.max(np.abs(z), axis=1) < eps
    if not alive.any():
        return out
    zi = z[alive]
    a = zi[:, :-1]
    b = zi[:, 1:]
    S = np.ones_like(a)

    def add(expo, sign):
        m = expo > -60.0
        if m.any():
            S[m] = S[m] + sign * np.exp(np.minimum(expo[m], 50.0))

    add(-2.0 * (eps + a) * (eps + b) / dt, -1.0)  # lower barrier
    add(-2.0 * (eps - a) * (eps - b) / dt, -1.0)  # upper barrier
    w = 2.0 * eps
    max_jump = float(np.max(np.abs(b - a))) if a.size else 0.0
    if not (2.0 * w * w / dt > 60.0 and 2.0 * w * (w - max_jump) / dt > 60.0):
        for k in range(-nimages, nimages + 1):
            kw = k * w
            if k != 0:
                add(-2.0 * kw * (kw + b - a) / dt, 1.0)
            if k not in (0, -1):
                add(-2.0 * (kw + eps + a) * (kw + eps + b) / dt, -1.0)
    np.clip(S, 0.0, 1.0, out=S)
    out[alive] = np.prod(S, axis=1)
    return out


def _discrete_norm_weights(offsets, norm, eps_arr, quad_w, gaps):
    """Indicator weights (E, B) for ||offset|| <= eps under a discrete norm."""
    if norm.kind == "sup":
        vals = np.sqrt(np.einsum("bkj,bkj->bk", offsets, offsets)).max(axis=1)
    elif norm.kind in ("l2", "lp"):
        p = 2.0 if norm.kind == "l2" else norm.p
        node = np.sqrt(np.einsum("bkj,bkj->bk", offsets, offsets))
        vals = (node**p @ quad_w) ** (1.0 / p)
    else:  # holder
        node = np.sqrt(np.einsum("bkj,bkj->bk", offsets, offsets))
        n = offsets.shape[1] - 1
        semi = np.zeros(offsets.shape[0])
        for g in gaps:
            diffs = offsets[:, g:] - offsets[:, :-g]
            m = np.sqrt(np.einsum("bkj,bkj->bk", diffs, diffs)).max(axis=1)
            semi = np.maximum(semi, m / (g / n) ** norm.alpha)
        vals = node.max(axis=1) + semi
    return (vals[None, :] <= eps_arr[:, None]).astype(float)


def _batch_sizes(M, batch_size):
    full, rest = divmod(M, batch_size)
    return [batch_size] * full + ([rest] if rest else [])


def _map_batches(worker, nbatches, threads):
    if threads <= 1 or nbatches <= 1:
        return [worker(b) for b in range(nbatches)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, b) for b in range(nbatches)]
        return [f.result() for f in futures]


def _tube_moments(config, references, eps_list, norm):
    """Shared phase-2 pass.

    Returns (sums, sums2, cross, corrected): weight moments of shape (R, E),
    and for two references the per-eps cross moments (E,).
    """
    spec = config.drift
    n, d, dt = config.n, spec.d, config.dt
    for ref in references:
        if ref.n != n or ref.d != d:
            raise InvalidPath("reference paths must live on the simulation grid")
    eps_arr = np.asarray(eps_list, dtype=float)
    if np.any(eps_arr <= 0):
        raise ValueError("tube radii must be positive")
    frozen = frozen_flow(config)
    G = frozen if frozen is not None else np.zeros((n + 1, 0))
    refs = [ref.values for ref in references]
    R, E = len(refs), eps_arr.size
    use_bridge = config.bridge_correction and norm.kind == "sup" and d == 1
    shift = config.girsanov_shift
    shift_vals = shift.values if shift is not None else None
    shift_dot = _derivative_values(shift_vals, n) if shift is not None else None
    quad_w = trapezoid_weights(n)
    gaps, _ = _holder_gaps(n) if norm.kind == "holder" else (None, None)
    sizes = _batch_sizes(config.M, config.batch_size)
    sqdt = math.sqrt(dt)

    tt = np.arange(n + 1) * dt

    def worker(b):
        size = sizes[b]
        gen = _generator(config.seed, _PHASE_TRAJECTORY, b)
        dW = gen.standard_normal((size, n, d)) * sqdt
        weights_R = None
        paths = np.empty((size, n + 1, d))
        if shift is not None:
            # importance sampling: trajectories follow shift + B, reweighted
            paths[:, 0] = shift_vals[0]
            paths[:, 1:] = shift_vals[None, 1:, :] + np.cumsum(dW, axis=1)
            u = spec.eval_frozen_grid(tt[:-1], paths[:, :-1], G[:-1]) - shift_dot[None, :-1, :]
            logR = np.einsum("bkj,bkj->b", u, dW) - 0.5 * dt * np.einsum("bkj,bkj->b", u, u)
            if not np.all(np.isfinite(logR)):
                raise SimulationBlowup("non-finite Girsanov weight", -1)
            weights_R = np.exp(logR)
        elif spec.is_zero:
            paths[:, 0] = config.x
            paths[:, 1:] = config.x[None, None, :] + np.cumsum(dW, axis=1)
        else:
            X = np.tile(config.x, (size, 1))
            paths[:, 0] = X
            for k in range(n):
                X = X + spec.eval_frozen(k * dt, X, G[k]) * dt + dW[:, k]
                paths[:, k + 1] = X
        if not np.all(np.isfinite(paths)):
            bad = int(np.argwhere(~np.isfinite(paths))[0, 0])
            raise SimulationBlowup("non-finite trajectory state", -1, bad)
        W = np.empty((R, E, size))
        for r in range(R):
            offs = paths - refs[r][None, :, :]
            if use_bridge:
                z = offs[:, :, 0]
                for e in range(E):
                    W[r, e] = _survival_products(z, eps_arr[e], dt)
            else:
                W[r] = _discrete_norm_weights(offs, norm, eps_arr, quad_w, gaps)
        if weights_R is not None:
            W = W * weights_R[None, None, :]
        s1 = W.sum(axis=2)
        s2 = (W * W).sum(axis=2)
        cr = (W[0] * W[1]).sum(axis=1) if R == 2 else None
        return s1, s2, cr

    parts = _map_batches(worker, len(sizes), config.threads)
    sums = np.zeros((R, E))
    sums2 = np.zeros((R, E))
    cross = np.zeros(E) if R == 2 else None
    for s1, s2, cr in parts:
        sums += s1
        sums2 += s2
        if cross is not None:
            cross += cr
    return sums, sums2, cross, use_bridge


def _estimate_from_moments(s1, s2, M, norm, eps, corrected):
    p = s1 / M
    var_w = max(s2 / M - p * p, 0.0)
    se = math.sqrt(var_w / M)
    if s1 == 0.0:
        lo, hi = 0.0, 1.0 - 0.01 ** (1.0 / M)
    elif p >= 1.0 and not corrected:
        lo, hi = 0.01 ** (1.0 / M), 1.0
    else:
        lo = max(0.0, p - _CI99 * se)
        hi = min(1.0, p + _CI99 * se)
    return TubeEstimate(p, M, se, lo, hi, norm.label(), eps, corrected)


def estimate_tube_probability(config, reference, eps, norm):
    """Estimate P(||X - reference|| <= eps) with config.M trajectories.

    See the module docstring for the two-phase scheme, the bridge-corrected
    supremum-norm estimator, and importance sampling via ``girsanov_shift``.
    """
    sums, sums2, _, corrected = _tube_moments(config, [reference], [float(eps)], norm)
    return _estimate_from_moments(sums[0, 0], sums2[0, 0], config.M, norm, float(eps), corrected)


@dataclass
class RatioRow:
    eps: float
    p1: float
    se1: float
    p2: float
    se2: float
    log_ratio: float
    se_log_ratio: float
    predicted_dL: float
    flagged: bool = False


@dataclass
class RatioTable:
    rows: list = field(default_factory=list)
    predicted_dL: float = float("nan")

    HEADER = "eps,p1,se1,p2,se2,log_ratio,se_log_ratio,predicted_dL"

    def to_csv(self):
        lines = [self.HEADER]
        for r in self.rows:
            lines.append(
                f"{r.eps:.17g},{r.p1:.17g},{r.se1:.17g},{r.p2:.17g},{r.se2:.17g},"
                f"{r.log_ratio:.17g},{r.se_log_ratio:.17g},{r.predicted_dL:.17g}"
            )
        return "\n".join(lines) + "\n"


def estimate_om_ratio(config, phi1, phi2, eps_list, norm):
    """Two-path tube-probability ratios against the action difference.

    For each radius the table reports log(p1/p2) with a delta-method standard
    error (the two probabilities share the sample, so the covariance is
    subtracted) next to the action difference total(phi1) - total(phi2).
    Rows with a zero hit count are flagged rather than fatal.  Both paths
    must start at the initial point (Cameron-Martin admissibility).
    """
    for ref in (phi1, phi2):
        if float(np.max(np.abs(ref.values[0] - config.x))) > 1e-9:
            raise InvalidPath("reference paths must start at the initial point")
    eps_arr = [float(e) for e in eps_list]
    sums, sums2, cross, _ = _tube_moments(config, [phi1, phi2], eps_arr, norm)
    M = config.M
    predicted = om_action(config.drift, phi1).total - om_action(config.drift, phi2).total
    table = RatioTable(predicted_dL=predicted)
    for e, eps in enumerate(eps_arr):
        p1, p2 = sums[0, e] / M, sums[1, e] / M
        v1 = max(sums2[0, e] / M - p1 * p1, 0.0)
        v2 = max(sums2[1, e] / M - p2 * p2, 0.0)
        c12 = cross[e] / M - p1 * p2
        se1, se2 = math.sqrt(v1 / M), math.sqrt(v2 / M)
        if p1 > 0 and p2 > 0:
            var_log = max(v1 / p1**2 + v2 / p2**2 - 2 * c12 / (p1 * p2), 0.0) / M
            row = RatioRow(eps, p1, se1, p2, se2, math.log(p1 / p2), math.sqrt(var_log), predicted)
        else:
            row = RatioRow(eps, p1, se1, p2, se2, float("nan"), float("nan"), predicted, flagged=True)
        table.rows.append(row)
    return table


# -- Girsanov weights ---------------------------------------------------------------


def girsanov_log_weight(spec, reference, increments, law_functionals=None):
    """log R for one trajectory Y = reference + B built from the increments.

    ``increments`` has shape (n, d); ``law_functionals`` supplies the frozen
    law flow (n+1, F) and is required for mean-field drifts.  The stochastic
    integral uses left-point evaluation.
    """
    dW = np.asarray(increments, dtype=float)
    if dW.ndim == 1:
        dW = dW[:, None]
    return float(girsanov_log_weights(spec, reference, dW[None, :, :], law_functionals)[0])


def girsanov_log_weights(spec, reference, increments, law_functionals=None):
    """Vectorized log R over a batch of increment arrays, shape (M, n, d)."""
    dW = np.asarray(increments, dtype=float)
    M, n, d = dW.shape
    if reference.n != n or reference.d != d or d != spec.d:
        raise DimensionMismatch("reference path and increments must share the grid and dimension")
    if spec.has_mean_field:
        if law_functionals is None:
            raise ValueError("mean-field drifts need a frozen law flow (law_functionals)")
        G = np.asarray(law_functionals, dtype=float)
        if G.shape[0] != n + 1:
            raise ValueError("law_functionals must hold one row per grid node")
    else:
        G = np.zeros((n + 1, 0))
    dt = 1.0 / n
    phi = reference.values
    phidot = _derivative_values(phi, n)
    Y = np.tile(phi[0], (M, 1))
    B = np.zeros((M, d))
    logR = np.zeros(M)
    for k in range(n):
        u = spec.eval_frozen(k * dt, Y, G[k]) - phidot[k][None, :]
        logR += np.einsum("bj,bj->b", u, dW[:, k]) - 0.5 * dt * np.einsum("bj,bj->b", u, u)
        B += dW[:, k]
        Y = phi[k + 1][None, :] + B
    if not np.all(np.isfinite(logR)):
        raise SimulationBlowup("non-finite Girsanov weight", -1)
    return logR
