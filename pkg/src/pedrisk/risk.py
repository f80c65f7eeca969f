"""Collision probability, harm and risk for Gaussian obstacle predictions.

The box probability uses inclusion-exclusion over four bivariate normal CDF
evaluations. The CDF follows Genz's single-integral reduction with 20-point
Gauss-Legendre quadrature: the arcsine form of Sheppard's formula for
``|rho| < 0.925`` and Drezner-Wesolowsky's asymptotic expansion otherwise,
accurate to well below 1e-10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, ndtr, ndtri

RHO_LIMIT = 1.0 - 1e-12
RHO_INDEPENDENT = 1e-13
DEGENERATE_DET = 1e-12
P_GATE = 1e-4
PREFILTER_P = 1e-9

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
# nodes on (0, 2) for the substitution used below; weights sum to 2
_X = 1.0 + _GL_X
_W = _GL_W


def _bvn_upper(h: np.ndarray, k: np.ndarray, r: np.ndarray) -> np.ndarray:
    """P(X > h, Y > k) for finite h, k and |r| < 1 (arrays of equal shape)."""
    out = np.empty_like(h)
    hk = h * k
    lo = np.abs(r) < 0.925

    if lo.any():
        hl, kl, rl, hkl = h[lo], k[lo], r[lo], hk[lo]
        hs = (hl * hl + kl * kl) / 2.0
        asr = np.arcsin(rl) / 2.0
        sn = np.sin(asr[:, None] * _X[None, :])
        integ = np.exp((sn * hkl[:, None] - hs[:, None]) / (1.0 - sn * sn)) @ _W
        out[lo] = integ * asr / (2 * np.pi) + ndtr(-hl) * ndtr(-kl)

    hi = ~lo
    if hi.any():
        hh, kk, rr = h[hi], k[hi].copy(), r[hi]
        hkh = hk[hi].copy()
        neg = rr < 0
        kk[neg] = -kk[neg]
        hkh[neg] = -hkh[neg]
        as_ = (1.0 - rr) * (1.0 + rr)
        a = np.sqrt(as_)
        bs = (hh - kk) ** 2
        c = (4.0 - hkh) / 8.0
        d = (12.0 - hkh) / 80.0
        asr = -(bs / as_ + hkh) / 2.0
        bvn = np.where(asr > -100,
                       a * np.exp(np.maximum(asr, -100)) * (1 - c * (bs - as_) * (1 - d * bs) / 3 + c * d * as_ * as_),
                       0.0)
        b = np.sqrt(bs)
        sp = math.sqrt(2 * np.pi) * ndtr(-b / a)
        bvn = np.where(hkh > -100,
                       bvn - np.exp(-np.minimum(hkh, 100) / 2) * sp * b * (1 - c * bs * (1 - d * bs) / 3),
                       bvn)
        a2 = a / 2.0
        xs = (a2[:, None] * _X[None, :]) ** 2
        asr2 = -(bs[:, None] / xs + hkh[:, None]) / 2.0
        ok = asr2 > -100
        sp2 = 1 + c[:, None] * xs * (1 + 5 * d[:, None] * xs)
        rs = np.sqrt(1 - xs)
        ep = np.exp(-(hkh[:, None] / 2) * xs / (1 + rs) ** 2) / rs
        terms = np.where(ok, np.exp(np.maximum(asr2, -100)) * (sp2 - ep), 0.0)
        bvn = (a2 * (terms @ _W) - bvn) / (2 * np.pi)
        pos = ~neg
        res = np.empty_like(bvn)
        res[pos] = bvn[pos] + ndtr(-np.maximum(hh[pos], kk[pos]))
        hn, kn, bn = hh[neg], kk[neg], bvn[neg]
        L = np.where(hn < 0, ndtr(kn) - ndtr(hn), ndtr(-hn) - ndtr(-kn))
        res[neg] = np.where(hn >= kn, -bn, L - bn)
        out[hi] = res
    return out


def bvn_cdf(x, y, rho):
    """P(X <= x, Y <= y) for a standard bivariate normal with correlation rho.

    Broadcasts over its arguments; accepts +-inf limits. ``rho`` is clamped to
    ``|rho| <= 1 - 1e-12``.
    """
    x, y, rho = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float),
                                    np.asarray(rho, dtype=float))
    scalar = x.ndim == 0
    x, y, r = (np.atleast_1d(a).ravel().copy() for a in (x, y, rho))
    r = np.clip(r, -RHO_LIMIT, RHO_LIMIT)
    out = np.empty_like(x)
    fin = np.isfinite(x) & np.isfinite(y)
    # dF/drho is bounded by 1/(2 pi), so the product form is exact to ~1e-14 here
    indep = fin & (np.abs(r) <= RHO_INDEPENDENT)
    if indep.any():
        out[indep] = ndtr(x[indep]) * ndtr(y[indep])
    quad = fin & ~indep
    if quad.any():
        out[quad] = _bvn_upper(-x[quad], -y[quad], r[quad])
    inf = ~fin
    if inf.any():
        xi, yi = x[inf], y[inf]
        val = np.where((xi == -np.inf) | (yi == -np.inf), 0.0,
                       np.where(xi == np.inf, ndtr(yi), ndtr(xi)))
        out[inf] = val
    out = np.clip(out, 0.0, 1.0)
    shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
    return float(out[0]) if scalar else out.reshape(shape)


# ---------------------------------------------------------------------------
# collision probability


@dataclass(frozen=True)
class EgoBox:
    center: tuple[float, float]
    heading: float
    half_length: float
    half_width: float
    inflation: float = 0.0

    def __post_init__(self):
        if self.half_length < 0 or self.half_width < 0:
            raise ValueError("box half extents must be nonnegative")
        if self.inflation < 0:
            raise ValueError("inflation must be nonnegative")


def _to_box_frame(mean, cov, center, heading):
    """Rotate means/covariances into box coordinates (vectorized)."""
    c, s = np.cos(heading), np.sin(heading)
    dx = mean[..., 0] - center[..., 0]
    dy = mean[..., 1] - center[..., 1]
    mx = c * dx + s * dy
    my = -s * dx + c * dy
    sxx, sxy, syy = cov[..., 0, 0], cov[..., 0, 1], cov[..., 1, 1]
    vxx = c * c * sxx + 2 * c * s * sxy + s * s * syy
    vyy = s * s * sxx - 2 * c * s * sxy + c * c * syy
    vxy = (c * c - s * s) * sxy + c * s * (syy - sxx)
    return mx, my, vxx, vyy, vxy


def _degenerate_probability(mx, my, vxx, vyy, vxy, hx, hy) -> float:
    """Box probability for a (near) rank-deficient covariance."""
    cov = np.array([[vxx, vxy], [vxy, vyy]])
    lam, vec = np.linalg.eigh(cov)
    if lam[1] <= DEGENERATE_DET:
        return float(abs(mx) <= hx and abs(my) <= hy)
    u = vec[:, 1]
    sd = math.sqrt(lam[1])
    # clip the line mean + t u against the box, t ~ N(0, sd^2)
    t0, t1 = -np.inf, np.inf
    for m, d, h in ((mx, u[0], hx), (my, u[1], hy)):
        if abs(d) < 1e-15:
            if abs(m) > h:
                return 0.0
            continue
        a, b = (-h - m) / d, (h - m) / d
        t0, t1 = max(t0, min(a, b)), min(t1, max(a, b))
    if t1 <= t0:
        return 0.0
    return float(ndtr(t1 / sd) - ndtr(t0 / sd))


def box_probability(mean, cov, center, heading, half_length, half_width) -> np.ndarray:
    """Probability mass of N(mean, cov) inside oriented boxes; broadcasts.

    ``half_length``/``half_width`` already include any inflation.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    center = np.asarray(center, dtype=float)
    heading = np.asarray(heading, dtype=float)
    shape = np.broadcast_shapes(mean.shape[:-1], cov.shape[:-2], center.shape[:-1], heading.shape)
    mean = np.broadcast_to(mean, shape + (2,)).reshape(-1, 2)
    cov = np.broadcast_to(cov, shape + (2, 2)).reshape(-1, 2, 2)
    center = np.broadcast_to(center, shape + (2,)).reshape(-1, 2)
    heading = np.broadcast_to(heading, shape).reshape(-1)
    hx = np.broadcast_to(np.asarray(half_length, dtype=float), shape).reshape(-1)
    hy = np.broadcast_to(np.asarray(half_width, dtype=float), shape).reshape(-1)

    mx, my, vxx, vyy, vxy = _to_box_frame(mean, cov, center, heading)
    det = vxx * vyy - vxy * vxy
    good = (det >= DEGENERATE_DET) & (vxx > 0) & (vyy > 0)
    p = np.zeros(len(mx))
    if good.any():
        sx, sy = np.sqrt(vxx[good]), np.sqrt(vyy[good])
        rho = vxy[good] / (sx * sy)
        a = (-hx[good] - mx[good]) / sx
        b = (hx[good] - mx[good]) / sx
        c = (-hy[good] - my[good]) / sy
        d = (hy[good] - my[good]) / sy
        xs = np.concatenate([b, a, b, a])
        ys = np.concatenate([d, d, c, c])
        F = bvn_cdf(xs, ys, np.tile(rho, 4)).reshape(4, -1)
        p[good] = F[0] - F[1] - F[2] + F[3]
    for i in np.flatnonzero(~good):
        p[i] = _degenerate_probability(mx[i], my[i], vxx[i], vyy[i], vxy[i], hx[i], hy[i])
    return np.clip(p, 0.0, 1.0).reshape(shape)


def collision_probability(g, box: EgoBox) -> float:
    """Mass of the Gaussian ``g`` inside the inflated oriented ego box."""
    return float(box_probability(g.mean, g.cov, np.asarray(box.center), box.heading,
                                 box.half_length + box.inflation, box.half_width + box.inflation))


def mc_collision_probability(g, box: EgoBox, n: int, seed=None) -> float:
    """Fraction of ``n`` samples from ``g`` inside the inflated box."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    pts = rng.multivariate_normal(g.mean, g.cov, size=n, method="eigh")
    c, s = math.cos(box.heading), math.sin(box.heading)
    d = pts - np.asarray(box.center)
    lx = c * d[:, 0] + s * d[:, 1]
    ly = -s * d[:, 0] + c * d[:, 1]
    hx = box.half_length + box.inflation
    hy = box.half_width + box.inflation
    inside = (lx >= -hx) & (lx <= hx) & (ly >= -hy) & (ly <= hy)
    return float(np.count_nonzero(inside)) / n


# ---------------------------------------------------------------------------
# harm and risk


@dataclass(frozen=True)
class HarmCoeffs:
    c0: float = 6.0
    c1: float = 0.35
    c_area: float = 0.8

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.c0, self.c1, self.c_area)):
            raise ValueError("harm coefficients must be finite")
        if self.c1 < 0:
            raise ValueError("c1 must be nonnegative")


@dataclass(frozen=True)
class RiskThresholds:
    h_max: float = 0.99
    r_max: float = 0.075

    def __post_init__(self):
        if not self.h_max > 0 or not self.r_max > 0:
            raise ValueError("thresholds must be positive")


def delta_v(m_a, m_b, v_a, v_b, alpha):
    """Speed change of body A: m_B / (m_A + m_B) times the closing speed."""
    m_a = np.asarray(m_a, dtype=float)
    m_b = np.asarray(m_b, dtype=float)
    rad = np.asarray(v_a) ** 2 + np.asarray(v_b) ** 2 - 2 * np.asarray(v_a) * np.asarray(v_b) * np.cos(alpha)
    out = m_b / (m_a + m_b) * np.sqrt(np.maximum(rad, 0.0))
    return float(out) if out.ndim == 0 else out


def harm(dv, coeffs: HarmCoeffs = HarmCoeffs()):
    """Logistic injury probability 1 / (1 + exp(c0 - c1 dv - c_area))."""
    out = expit(-(coeffs.c0 - coeffs.c1 * np.asarray(dv, dtype=float) - coeffs.c_area))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(eq=False)
class RiskReport:
    times: np.ndarray
    ids: list
    p: np.ndarray          # (K+1, O)
    harm: np.ndarray       # (K+1, O)
    risk: np.ndarray       # (K+1, O)
    max_harm: float
    max_risk: float
    valid: bool

    def rows(self, min_p: float = 0.0):
        """(t, obstacle_id, p, H, R) tuples with p above ``min_p``."""
        k, o = np.nonzero(self.p > min_p)
        return [(float(self.times[a]), self.ids[b], float(self.p[a, b]), float(self.harm[a, b]),
                 float(self.risk[a, b])) for a, b in zip(k, o)]


@dataclass(frozen=True)
class BoxParams:
    half_length: float = 2.25
    half_width: float = 0.9
    inflation: float = 0.3
    mass: float = 1500.0


def maximin(p: np.ndarray, h: np.ndarray, thresholds: RiskThresholds, p_gate: float = P_GATE):
    """Worst-case harm (gated by collision probability) and risk; validity.

    Reduces over the last two axes.
    """
    r = p * h
    h_star = np.where(p > p_gate, h, 0.0).max(axis=(-2, -1), initial=0.0)
    r_star = r.max(axis=(-2, -1), initial=0.0)
    valid = (h_star < thresholds.h_max) & (r_star < thresholds.r_max)
    return h_star, r_star, valid


def risk_arrays(x, y, heading, speed, preds, box: BoxParams, coeffs: HarmCoeffs,
                p_floor: float = PREFILTER_P, full_harm: bool = True):
    """p and H for candidate trajectories against every predicted agent.

    ``x, y, heading, speed`` are (C, K+1) arrays on the prediction time grid.
    Returns ``p, H`` shaped (C, K+1, O). A pair is skipped (p = 0) when the
    tail bound Phi(-(dist - r) / s) is below ``p_floor``, with r the inflated
    box circumradius and s the square root of the largest covariance
    eigenvalue; the true p is smaller than the bound. With ``full_harm``
    false, H is only filled where p > 0, which leaves every R = p H and the
    gated Maximin aggregates unchanged.
    """
    x = np.atleast_2d(x)
    C, K1 = x.shape
    O = len(preds)
    if O == 0:
        z = np.zeros((C, K1, 0))
        return z, z.copy()
    y, heading, speed = np.atleast_2d(y), np.atleast_2d(heading), np.atleast_2d(speed)
    if preds.means.shape[1] < K1:
        raise ValueError("predictions do not cover the trajectory time grid")
    mu = preds.means[:, :K1].transpose(1, 0, 2)          # (K1, O, 2)
    cov = preds.covs[:, :K1].transpose(1, 0, 2, 3)       # (K1, O, 2, 2)
    hx = box.half_length + box.inflation
    hy = box.half_width + box.inflation
    radius = math.hypot(hx, hy)
    sxx, sxy, syy = cov[..., 0, 0], cov[..., 0, 1], cov[..., 1, 1]
    lam_max = 0.5 * (sxx + syy) + np.sqrt(0.25 * (sxx - syy) ** 2 + sxy * sxy)
    reach = radius - float(ndtri(p_floor)) * np.sqrt(np.maximum(lam_max, 0.0))   # (K1, O)
    dx = x[:, :, None] - mu[None, :, :, 0]               # (C, K1, O)
    dy = y[:, :, None] - mu[None, :, :, 1]
    near = dx * dx + dy * dy <= (reach * reach)[None]
    p = np.zeros((C, K1, O))
    h = np.zeros((C, K1, O))
    if not near.any():
        if full_harm:
            h = _harm_grid(heading, speed, preds, box, coeffs, K1)
        return p, h
    ci, ki, oi = np.nonzero(near)
    centers = np.stack([x[ci, ki], y[ci, ki]], axis=1)
    p[ci, ki, oi] = box_probability(mu[ki, oi], cov[ki, oi], centers, heading[ci, ki], hx, hy)
    if full_harm:
        return p, _harm_grid(heading, speed, preds, box, coeffs, K1)
    hd = heading[ci, ki]
    rel_x = speed[ci, ki] * np.cos(hd) - preds.velocities[oi, ki, 0]
    rel_y = speed[ci, ki] * np.sin(hd) - preds.velocities[oi, ki, 1]
    m = preds.masses[oi]
    h[ci, ki, oi] = harm(box.mass / (m + box.mass) * np.hypot(rel_x, rel_y), coeffs)
    return p, h


def _harm_grid(heading, speed, preds, box, coeffs, K1):
    ego_v = speed[..., None] * np.stack([np.cos(heading), np.sin(heading)], -1)   # (C, K1, 2)
    rel = ego_v[:, :, None, :] - preds.velocities[:, :K1].transpose(1, 0, 2)[None]
    closing = np.hypot(rel[..., 0], rel[..., 1])
    dv = box.mass / (preds.masses[None, None, :] + box.mass) * closing
    return np.asarray(harm(dv, coeffs)).reshape(closing.shape)


def assess_trajectory(traj, preds, box: BoxParams, coeffs: HarmCoeffs, thresholds: RiskThresholds,
                      p_gate: float = P_GATE) -> RiskReport:
    """Per-step, per-agent p, H and R = p H for one trajectory; Maximin validity.

    Harm is evaluated for the struck agent: the agent is body A and the ego
    body B in the speed-change formula.
    """
    times = np.asarray(traj.t)
    K1 = len(times)
    if len(preds.times) < K1 or not np.allclose(preds.times[:K1], times, atol=1e-9):
        raise ValueError("trajectory and predictions do not share the time grid")
    p, h = risk_arrays(traj.x[None], traj.y[None], traj.heading[None], traj.v[None], preds, box, coeffs)
    p, h = p[0], h[0]
    h_star, r_star, valid = maximin(p, h, thresholds, p_gate)
    return RiskReport(times, list(preds.ids), p, h, p * h, float(h_star), float(r_star), bool(valid))
