"""Equivalent circuit R0 + C1//(R1 + Warburg) + Cct//Rct: evaluation and fitting."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

PARAM_NAMES = ("R0", "R1", "C1", "Rct", "Cct", "W", "alpha")


@dataclass(frozen=True)
class EcmParams:
    R0: float
    R1: float
    C1: float
    Rct: float
    Cct: float
    W: float
    alpha: float

    def __post_init__(self):
        for name in PARAM_NAMES[:-1]:
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if not (0 < self.alpha <= 1):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, x: Sequence[float]) -> "EcmParams":
        return cls(*(float(v) for v in x))

    def to_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EcmParams":
        return cls(**{n: float(d[n]) for n in PARAM_NAMES})

    def replace(self, **kw) -> "EcmParams":
        d = self.to_dict()
        d.update(kw)
        return EcmParams(**d)


def ecm_impedance_raw(R0, R1, C1, Rct, Cct, W, alpha, omega):
    """Broadcasting circuit impedance; parameters may be arrays."""
    jw = 1j * np.asarray(omega, dtype=float)
    z_w = W / np.power(jw, alpha)
    z_c1 = 1.0 / (C1 * jw)
    diff = R1 + z_w
    z_cct = 1.0 / (Cct * jw)
    return R0 + z_c1 * diff / (z_c1 + diff) + z_cct * Rct / (z_cct + Rct)


def ecm_impedance(theta: EcmParams, omega) -> np.ndarray:
    """Impedance at angular frequencies ``omega`` (rad/s, nonzero).

    Negative frequencies use the principal branch of ``(j omega)^alpha``, so
    ``Z(-omega) = conj(Z(omega))``.
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(omega == 0):
        raise ValueError("the circuit impedance is singular at omega = 0")
    return ecm_impedance_raw(*theta.as_array(), omega)


# --- fitting -------------------------------------------------------------------

DEFAULT_BAND = (16.7e-3, 50.0)
DEFAULT_SWARM = {"particles": 64, "iters": 200, "seed": 0, "starts": 12}
N_PARAMS = len(PARAM_NAMES)
LOG_IDX = np.arange(N_PARAMS - 1)   # everything but alpha is fitted in log10


@dataclass
class EcmFitResult:
    theta: EcmParams
    mean_rel_error: float
    frequencies: np.ndarray
    residuals: np.ndarray        # Z_meas - Z_model per frequency
    cost_history: list[float]
    local_iterations: int
    swarm_iterations: int
    swarm_cost: Optional[float] = None

    def to_dict(self) -> dict[str, Any]:
        return {"theta": self.theta.to_dict(), "mre": self.mean_rel_error,
                "local_iterations": self.local_iterations,
                "swarm_iterations": self.swarm_iterations,
                "final_cost": self.cost_history[-1] if self.cost_history else None}


def default_bounds(curve) -> dict[str, tuple[float, float]]:
    """Wide bounds derived from the impedance scale and the frequency band."""
    zs = float(np.max(np.abs(curve.values)))
    f_lo, f_hi = float(curve.frequencies[0]), float(curve.frequencies[-1])
    r_lo, r_hi = 1e-3 * zs, 10.0 * zs
    tau_lo, tau_hi = 0.1 / (2 * np.pi * f_hi), 10.0 / (2 * np.pi * f_lo)
    c = (tau_lo / r_hi, tau_hi / r_lo)
    return {"R0": (r_lo, r_hi), "R1": (r_lo, r_hi), "C1": c, "Rct": (r_lo, r_hi),
            "Cct": c, "W": (r_lo, r_hi), "alpha": (0.2, 1.0)}


def _to_x(theta: np.ndarray) -> np.ndarray:
    x = np.array(theta, dtype=float)
    x[LOG_IDX] = np.log10(x[LOG_IDX])
    return x


def _from_x(x: np.ndarray) -> np.ndarray:
    th = np.array(x, dtype=float)
    th[..., LOG_IDX] = 10.0 ** th[..., LOG_IDX]
    return th


def _model(x: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Impedances for parameter rows ``x`` (..., 7) at ``omega`` -> (..., M)."""
    th = _from_x(x)
    cols = [th[..., i][..., None] for i in range(N_PARAMS)]
    return ecm_impedance_raw(*cols, omega)


class _Objective:
    def __init__(self, omega, z, weighting):
        if weighting not in ("absolute", "relative"):
            raise ValueError(f"unknown weighting {weighting!r}")
        self.omega = omega
        self.z = z
        self.w = 1.0 / np.abs(z) if weighting == "relative" else np.ones(z.size)

    def residual(self, x: np.ndarray) -> np.ndarray:
        d = (self.z - _model(x, self.omega)) * self.w
        return np.concatenate([d.real, d.imag], axis=-1)

    def cost(self, x: np.ndarray) -> np.ndarray:
        r = self.residual(x)
        return np.sum(r * r, axis=-1)


def particle_swarm(obj: _Objective, lo: np.ndarray, hi: np.ndarray, particles: int = 64,
                   iters: int = 200, seed: int = 0, inertia: float = 0.7298,
                   c1: float = 1.49618, c2: float = 1.49618, neighbours: int = 2):
    """Ring-topology particle swarm with constriction constants, box constrained.

    Each particle follows the best of its ``neighbours`` on either side,
    which keeps several basins alive for the local refinement. Returns
    ``(pbest, pcost)``, the personal bests of all particles sorted by cost;
    identical seeds give identical results.
    """
    rng = np.random.default_rng(seed)
    span = hi - lo
    x = lo + rng.random((particles, lo.size)) * span
    v = (rng.random((particles, lo.size)) - 0.5) * 0.2 * span
    vmax = 0.2 * span
    pbest, pcost = x.copy(), obj.cost(x)
    idx = np.arange(particles)
    ring = np.stack([(idx + o) % particles for o in range(-neighbours, neighbours + 1)], axis=1)
    for _ in range(iters):
        lbest = pbest[ring[idx, np.argmin(pcost[ring], axis=1)]]
        r1 = rng.random(x.shape)
        r2 = rng.random(x.shape)
        v = inertia * v + c1 * r1 * (pbest - x) + c2 * r2 * (lbest - x)
        v = np.clip(v, -vmax, vmax)
        x = x + v
        out = (x < lo) | (x > hi)
        x = np.clip(x, lo, hi)
        v[out] = 0.0
        f = obj.cost(x)
        better = f < pcost
        pbest[better] = x[better]
        pcost[better] = f[better]
    order = np.argsort(pcost, kind="stable")
    return pbest[order], pcost[order]


def distinct_starts(points: np.ndarray, n: int, spacing: float = 0.3) -> list[np.ndarray]:
    """Greedy pick of up to ``n`` points (sorted best first) at least ``spacing`` apart."""
    starts = [points[0]]
    for p in points[1:]:
        if len(starts) >= n:
            break
        if min(np.max(np.abs(p - s)) for s in starts) > spacing:
            starts.append(p)
    return starts


def levenberg_marquardt(obj: _Objective, x0: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                        max_iter: int = 200, ftol: float = 1e-15, xtol: float = 1e-13):
    """Projected Levenberg-Marquardt with a forward-difference Jacobian.

    A step is accepted only if it lowers the cost, so the returned cost
    history is non-increasing. Returns ``(x, cost_history, iterations)``
    where iterations counts Jacobian evaluations.
    """
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    r = obj.residual(x)
    cost = float(r @ r)
    history = [cost]
    mu = 1e-3
    it = 0
    while it < max_iter:
        it += 1
        h = 1e-7 * np.maximum(1.0, np.abs(x))
        J = np.empty((r.size, x.size))
        for j in range(x.size):
            xp = x.copy()
            xp[j] += h[j] if xp[j] + h[j] <= hi[j] else -h[j]
            J[:, j] = (obj.residual(xp) - r) / (xp[j] - x[j])
        JtJ = J.T @ J
        g = J.T @ r
        diag = np.maximum(np.diag(JtJ), 1e-30)
        improved = False
        while mu < 1e20:
            step = np.linalg.solve(JtJ + mu * np.diag(diag), -g)
            x_new = np.clip(x + step, lo, hi)
            r_new = obj.residual(x_new)
            c_new = float(r_new @ r_new)
            if c_new < cost:
                improved = True
                break
            mu *= 4.0
        if not improved:
            break
        dx = np.linalg.norm(x_new - x)
        rel = (cost - c_new) / max(cost, 1e-300)
        x, r, cost = x_new, r_new, c_new
        history.append(cost)
        mu = max(mu / 3.0, 1e-12)
        if rel < ftol or dx < xtol * (np.linalg.norm(x) + xtol):
            break
    return x, history, it


def _prepare(curve, band, bounds):
    if band is not None:
        curve = curve.band(*band)
    if len(curve) < N_PARAMS:
        raise ValueError(f"need at least {N_PARAMS} frequency points, got {len(curve)}")
    if not np.all(np.isfinite(curve.values)):
        raise ValueError("curve holds non-finite values")
    b = default_bounds(curve)
    if bounds:
        b.update(bounds)
    lo = np.array([b[n][0] for n in PARAM_NAMES], dtype=float)
    hi = np.array([b[n][1] for n in PARAM_NAMES], dtype=float)
    if np.any(lo > hi) or np.any(lo[LOG_IDX] <= 0) or lo[-1] <= 0 or hi[-1] > 1:
        raise ValueError("bounds must satisfy 0 < lo <= hi (alpha within (0, 1])")
    return curve, _to_x(lo), _to_x(hi)


def fit_ecm(curve, bounds: Optional[dict[str, tuple[float, float]]] = None,
            band: Optional[tuple[float, float]] = DEFAULT_BAND,
            swarm: Optional[dict[str, int]] = None, weighting: str = "absolute",
            x0: Optional[EcmParams] = None, max_local_iter: int = 200) -> EcmFitResult:
    """Fit the circuit to an impedance curve.

    A particle swarm over log10-scaled parameters (alpha unscaled) finds a
    set of starting points; Levenberg-Marquardt refines up to
    ``swarm["starts"]`` mutually distant personal bests and the lowest cost
    wins. With ``x0`` given the swarm is skipped (warm start) and only that
    point is refined.
    """
    curve, lo, hi = _prepare(curve, band, bounds)
    omega = curve.omega
    obj = _Objective(omega, curve.values, weighting)
    sw = dict(DEFAULT_SWARM)
    if swarm:
        sw.update(swarm)
    if x0 is None:
        pts, costs = particle_swarm(obj, lo, hi, int(sw["particles"]), int(sw["iters"]),
                                    int(sw["seed"]))
        starts = distinct_starts(pts, int(sw.get("starts", 12)))
        s_cost, s_iters = float(costs[0]), int(sw["iters"])
    else:
        starts, s_cost, s_iters = [_to_x(x0.as_array())], None, 0
    best = None
    for start in starts:
        cand = levenberg_marquardt(obj, start, lo, hi, max_iter=max_local_iter)
        if best is None or cand[1][-1] < best[1][-1]:
            best = cand
    x, hist, it = best
    theta = EcmParams.from_array(_from_x(x))
    res = curve.values - ecm_impedance(theta, omega)
    mre = float(np.mean(np.abs(res) / np.abs(curve.values)))
    return EcmFitResult(theta, mre, curve.frequencies, res, hist, it, s_iters, s_cost)


@dataclass
class TrajectoryPoint:
    t: float
    fit: EcmFitResult

    @property
    def theta(self) -> EcmParams:
        return self.fit.theta

    @property
    def mean_rel_error(self) -> float:
        return self.fit.mean_rel_error


def fit_ecm_trajectory(tv, times: Optional[Sequence[float]] = None, warm_start: bool = True,
                       **fit_kw) -> list[TrajectoryPoint]:
    """Fit every requested time slice of a time-varying impedance.

    The first slice uses the swarm; later slices start from the previous
    estimate when ``warm_start`` is set. Times snap to the nearest estimated
    time and results are ordered by time.
    """
    from .classical import ImpedanceCurve

    times = tv.times if times is None else np.sort(np.asarray(times, dtype=float))
    out: list[TrajectoryPoint] = []
    prev: Optional[EcmParams] = None
    for t in times:
        l = int(np.argmin(np.abs(tv.times - t)))
        f, z = tv.slice_at(l)
        if f.size < N_PARAMS:
            raise ValueError(f"slice at t={tv.times[l]:.6g} s has only {f.size} unmasked points")
        curve = ImpedanceCurve(f, z)
        fit = fit_ecm(curve, x0=prev if warm_start else None, **fit_kw)
        out.append(TrajectoryPoint(float(tv.times[l]), fit))
        prev = fit.theta
    return out
