"""Decay-rate fits, gap scaling fits, canonical-gate sweeps and convergence diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from .entmeas import asymptotic_entropy, asymptotic_purity, random_schmidt_squares
from .errors import ConvergenceError, InsufficientDataError
from .gatelib import CanonicalParams, GateSpec, reduce_to_fundamental
from .protocol import EnsembleTrace, ProtocolConfig, run_protocol

MIN_T = 3
NOISE_SIGMAS = 5.0
# below this the excess purity is floating-point noise even for exact traces
EXACT_FLOOR = 1e-12
BOOTSTRAP = 200


@dataclass
class FitResult:
    model: str
    params: dict
    errors: dict
    residual_norm: float
    window: tuple
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "model": self.model,
            "params": self.params,
            "errors": self.errors,
            "residual_norm": self.residual_norm,
            "window": list(self.window),
            **self.extra,
        }


@dataclass
class TraceData:
    """Plain arrays describing a mean purity trace."""

    t: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    samples: np.ndarray | None = None


def trace_data(trace) -> TraceData:
    """Accept an :class:`EnsembleTrace`, a ``(t, mean[, se])`` tuple or a mean array."""
    if isinstance(trace, TraceData):
        return trace
    if isinstance(trace, EnsembleTrace):
        return TraceData(trace.t.astype(float), trace.purity_mean, trace.purity_se,
                         trace.purity_samples)
    if isinstance(trace, tuple):
        t = np.asarray(trace[0], dtype=float)
        mean = np.asarray(trace[1], dtype=float)
        se = np.asarray(trace[2], dtype=float) if len(trace) > 2 else np.zeros_like(mean)
        return TraceData(t, mean, se)
    mean = np.asarray(trace, dtype=float)
    return TraceData(np.arange(len(mean), dtype=float), mean, np.zeros_like(mean))


def fit_window(data: TraceData, I_inf: float, window=None, min_t: float = MIN_T,
               noise_sigmas: float = NOISE_SIGMAS) -> np.ndarray:
    """Indices used by the log-linear fits.

    With an explicit ``(t_lo, t_hi)`` window all points inside with positive
    excess are used. Otherwise the window starts at ``min_t`` and ends just
    before the first point whose excess ``I - I_inf`` drops below
    ``noise_sigmas`` standard errors.
    """
    excess = data.mean - I_inf
    if window is not None:
        lo, hi = window
        return np.flatnonzero((data.t >= lo) & (data.t <= hi) & (excess > EXACT_FLOOR))
    ok = excess > np.maximum(noise_sigmas * data.se, EXACT_FLOOR)
    idx = []
    for k in np.flatnonzero(data.t >= min_t):
        if not ok[k]:
            break
        idx.append(k)
    return np.array(idx, dtype=int)


def _loglinear(t, excess):
    """Ordinary least-squares line through ``ln(excess)``; returns (slope, intercept, slope_se, resid).

    Points are unweighted: inside the noise window the deviation from a pure
    exponential dominates the sampling error, and inverse-variance weights
    would concentrate the fit on the earliest (transient) points.
    """
    y = np.log(excess)
    X = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(len(t) - 2, 1)
    cov = np.linalg.inv(X.T @ X) * (resid @ resid) / dof
    return coef[0], coef[1], float(np.sqrt(max(cov[0, 0], 0.0))), float(np.linalg.norm(resid))


def _bootstrap_slopes(data: TraceData, idx, I_inf, seed=0, rounds=BOOTSTRAP):
    """Slopes refitted on replica-resampled mean traces (same window)."""
    s = data.samples
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(rounds):
        pick = rng.integers(s.shape[0], size=s.shape[0])
        m = s[pick].mean(axis=0)[idx] - I_inf
        if np.any(m <= 0):
            continue
        out.append(_loglinear(data.t[idx], m)[0])
    return np.array(out)


def _slope_fit(trace, I_inf, window):
    data = trace_data(trace)
    idx = fit_window(data, I_inf, window)
    if len(idx) < 4:
        raise InsufficientDataError(f"only {len(idx)} usable points for an exponential fit")
    slope, icpt, slope_se, resid = _loglinear(data.t[idx], data.mean[idx] - I_inf)
    if data.samples is not None and data.samples.shape[0] > 2:
        boot = _bootstrap_slopes(data, idx, I_inf)
        if len(boot) > 10:
            slope_se = float(boot.std(ddof=1))
    elif np.any(data.se[idx] > 0):
        # known per-point errors: propagate them through the OLS weights,
        # since log-space noise grows towards the end of the window
        t = data.t[idx]
        w = (t - t.mean()) / np.sum((t - t.mean()) ** 2)
        sy = data.se[idx] / (data.mean[idx] - I_inf)
        slope_se = max(slope_se, float(np.sqrt(np.sum((w * sy) ** 2))))
    return slope, icpt, slope_se, resid, (float(data.t[idx[0]]), float(data.t[idx[-1]]))


def fit_kappa(trace, n: int, I_inf: float | None = None, window=None) -> FitResult:
    """Decay rate ``kappa`` in ``I - I_inf = exp(-kappa t / n)`` from the log-slope."""
    I_inf = asymptotic_purity(n) if I_inf is None else I_inf
    slope, icpt, se, resid, win = _slope_fit(trace, I_inf, window)
    return FitResult("kappa", {"kappa": -n * slope, "log_prefactor": icpt},
                     {"kappa": n * se}, resid, win)


def fit_tau(trace, I_inf: float, window=None) -> FitResult:
    """Decay time ``tau`` in ``I - I_inf = exp(-t / tau)``."""
    slope, icpt, se, resid, win = _slope_fit(trace, I_inf, window)
    if slope >= 0:
        raise ConvergenceError("purity excess is not decaying; tau undefined")
    tau = -1.0 / slope
    return FitResult("tau", {"tau": tau, "log_prefactor": icpt},
                     {"tau": se / slope**2}, resid, win)


def degenerate_decay_model(t, a, b, tau):
    """``(1 + a exp(-b t / tau)) / (1 + a) * exp(-t / tau)``."""
    t = np.asarray(t, dtype=float)
    return (1.0 + a * np.exp(-b * t / tau)) / (1.0 + a) * np.exp(-t / tau)


def fit_degenerate_decay(trace, tau: float, I_inf: float, window=None,
                         x0=(1.0, 0.5)) -> FitResult:
    """Fit ``(a, b)`` of the two-mode decay at fixed ``tau`` (``a, b >= 0``).

    Residuals are taken on ``ln(I - I_inf)`` so early and late times weigh
    comparably; the default window is the one used by the other fits
    (``t >= 3`` up to the noise floor).
    """
    data = trace_data(trace)
    idx = fit_window(data, I_inf, window)
    if len(idx) < 4:
        raise InsufficientDataError(f"only {len(idx)} usable points for the degenerate fit")
    t = data.t[idx]
    y = np.log(data.mean[idx] - I_inf)

    def resid(p):
        return np.log(degenerate_decay_model(t, p[0], p[1], tau)) - y

    sol = least_squares(resid, x0, bounds=([0.0, 0.0], [np.inf, np.inf]), method="trf",
                        xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if not sol.success:
        raise ConvergenceError(f"degenerate-decay fit failed: {sol.message}",
                               residual=float(np.linalg.norm(sol.fun)))
    J = sol.jac
    dof = max(len(t) - 2, 1)
    try:
        cov = np.linalg.inv(J.T @ J) * (sol.fun @ sol.fun) / dof
        errs = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        errs = np.array([np.nan, np.nan])
    return FitResult("degenerate", {"a": float(sol.x[0]), "b": float(sol.x[1]), "tau": tau},
                     {"a": float(errs[0]), "b": float(errs[1])},
                     float(np.linalg.norm(sol.fun)), (float(t[0]), float(t[-1])))


def fit_gap_scaling(points, model: str = "linear") -> FitResult:
    """Fit ``1/Delta`` against ``n``.

    ``linear``: ``1/Delta = (n + d) / c``; ``log``: ``1/Delta = e n ln n + f``.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise InsufficientDataError("gap scaling fit needs at least three points")
    n, inv = pts[:, 0], 1.0 / pts[:, 1]
    x = n if model == "linear" else n * np.log(n)
    if model not in ("linear", "log"):
        raise ValueError(f"unknown gap model {model!r}")
    X = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(X, inv, rcond=None)
    resid = inv - X @ coef
    dof = max(len(x) - 2, 1)
    cov = np.linalg.inv(X.T @ X) * (resid @ resid) / dof
    s, icpt = coef
    if model == "linear":
        c = 1.0 / s
        d = icpt * c
        # first-order error propagation
        c_err = np.sqrt(cov[0, 0]) / s**2
        d_err = np.sqrt(icpt**2 * cov[0, 0] / s**4 + cov[1, 1] / s**2
                        - 2 * icpt * cov[0, 1] / s**3)
        params, errs = {"c": c, "d": d}, {"c": float(c_err), "d": float(np.nan_to_num(d_err))}
    else:
        params = {"e": s, "f": icpt}
        errs = {"e": float(np.sqrt(cov[0, 0])), "f": float(np.sqrt(cov[1, 1]))}
    return FitResult(f"gap-{model}", {k: float(v) for k, v in params.items()}, errs,
                     float(np.linalg.norm(resid)), (float(n.min()), float(n.max())))


# ---------------------------------------------------------------------------
# canonical-parameter sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepPoint:
    params: CanonicalParams
    kappa: float
    kappa_se: float


@dataclass
class SweepGrid:
    points: list
    n: int
    coupling: str
    steps: int
    replicas: int

    def argmax(self) -> SweepPoint:
        return max(self.points, key=lambda p: p.kappa)

    def rows(self):
        for p in self.points:
            yield (*p.params.as_tuple(), p.kappa, p.kappa_se)


def fundamental_grid(step: float = 0.1) -> list:
    """Grid points ``k * step`` with ``1 >= ax >= ay >= az >= 0``, deduplicated."""
    m = int(round(1.0 / step))
    vals = [round(k * step, 12) for k in range(m + 1)]
    seen, out = set(), []
    for ax in vals:
        for ay in vals:
            for az in vals:
                if not ax >= ay >= az:
                    continue
                red = reduce_to_fundamental(CanonicalParams(ax, ay, az)).params
                key = tuple(round(v, 9) for v in red.as_tuple())
                if key not in seen:
                    seen.add(key)
                    out.append(red)
    return out


def sweep_canonical(base: ProtocolConfig, grid_step: float = 0.1, steps: int | None = None,
                    replicas: int | None = None, points=None, window=None) -> SweepGrid:
    """Run the protocol at every fundamental-domain grid point and fit ``kappa``.

    Grid point ``k`` uses seed ``base.seed ^ k``.
    """
    steps = base.steps if steps is None else steps
    replicas = base.replicas if replicas is None else replicas
    grid = fundamental_grid(grid_step) if points is None else list(points)
    I_inf = asymptotic_purity(base.n)
    out = []
    for k, p in enumerate(grid):
        cfg = replace(base, gate=GateSpec("canonical", params=p), steps=steps,
                      replicas=replicas, seed=base.seed ^ k, measures=("purity",))
        trace = run_protocol(cfg)
        try:
            fit = fit_kappa(trace, base.n, I_inf, window)
            out.append(SweepPoint(p, fit.params["kappa"], fit.errors["kappa"]))
        except InsufficientDataError:
            out.append(SweepPoint(p, float("nan"), float("nan")))
    return SweepGrid(out, base.n, base.coupling, steps, replicas)


# ---------------------------------------------------------------------------
# entropy collapse and Schmidt convergence
# ---------------------------------------------------------------------------


@dataclass
class Collapse:
    curves: list  # (label, x = t/tau, y = S_inf - S)
    metric: float
    x_range: tuple


def entropy_collapse(traces, n: int, x_range=(0.5, 3.0), S_inf: float | None = None,
                     samples: int = 200) -> Collapse:
    """Overlay ``S_inf - S(t)`` against ``t / tau`` and measure the spread.

    ``traces`` holds ``(label, trace, tau)``; ``trace`` is an EnsembleTrace
    with entropy or a ``(t, S)`` tuple. The metric is the largest pairwise
    sup-distance between linearly interpolated curves on ``x_range``.
    """
    S_inf = asymptotic_entropy(n) if S_inf is None else S_inf
    curves = []
    for label, tr, tau in traces:
        if isinstance(tr, EnsembleTrace):
            t, s = tr.t.astype(float), tr.entropy_mean
        else:
            t, s = (np.asarray(v, dtype=float) for v in tr)
        curves.append((label, t / tau, S_inf - s))
    grid = np.linspace(x_range[0], x_range[1], samples)
    interp = [np.interp(grid, x, y) for _, x, y in curves]
    metric = 0.0
    for a in range(len(interp)):
        for b in range(a + 1, len(interp)):
            metric = max(metric, float(np.max(np.abs(interp[a] - interp[b]))))
    return Collapse(curves, metric, tuple(x_range))


def schmidt_distance(trace, n: int | None = None) -> np.ndarray:
    """``sum_i |mu_i^2(t) - mu_i^2(inf)|`` per recorded time (rows ``(t, distance)``)."""
    if isinstance(trace, EnsembleTrace):
        n, mu2, t = trace.n, trace.mu2_mean, trace.t
    else:
        t, mu2 = (np.asarray(v, dtype=float) for v in trace)
    ref = random_schmidt_squares(n)
    dist = np.abs(mu2 - ref).sum(axis=-1)
    return np.column_stack([t, dist])


def consistent_with_zero(value: float, se: float, sigmas: float = 2.0, atol: float = 1e-9) -> bool:
    """``|value| < sigmas * se``, with ``atol`` absorbing round-off when ``se`` vanishes."""
    return abs(value) <= sigmas * se + atol
