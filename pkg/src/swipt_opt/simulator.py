"""
Monte Carlo validation of the analytic model.

Each replication draws BS and user Poisson point processes on a square torus,
associates users to their nearest BS and measures ideal per-bit delays and
harvested power from the per-cell counts. Statistics are averaged per cell
and weighted by the relative Voronoi area of the cell, so a typical user is
represented in proportion to the area its BS serves.

Per-cell downlink utilizations ``U_j = min(1, mean tau_d / tau_d0)`` are
solved jointly with the interference they generate, mirroring the analytic
fixed point. Interference from BSs farther than half the side is replaced by
its mean-field value, which keeps the torus free of a truncation bias.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.spatial import QhullError, Voronoi, cKDTree

from .core import ScenarioConfig
from .harvest import pointwise_received_power
from .perf import capacity, effective_w_d

log = logging.getLogger(__name__)

__all__ = [
    "DegenerateRealization",
    "SimConfig",
    "SimReport",
    "Realization",
    "run_sim",
    "measure_realization",
    "draw_realization",
    "exact_user_power",
    "torus_voronoi_areas",
    "RAW_COLUMNS",
    "write_raw_csv",
]

_CHUNK = 2048


class DegenerateRealization(RuntimeError):
    """A realization without any BS."""


@dataclass(frozen=True)
class SimConfig:
    side: Optional[float] = None           # torus side [m]; None -> sized from min_expected_bs
    replications: int = 30
    seed: int = 0
    min_expected_bs: float = 100.0
    delays: bool = True
    harvest_cdf: bool = True
    h_grid: Sequence[float] = ()           # extra CDF evaluation points [W]
    utilization: str = "solve"             # "solve" per-cell fixed point, or "full" (all U_j = 1)
    interference: str = "mean"             # "mean": sum/k, "band": random band per BS
    user_power: str = "cog"                # "cog" centre-of-gravity, "exact" per-user sum
    user_gain: Optional[float] = None      # gain toward UE transmissions; None -> 1
    estimator: str = "area"                # "area": area-weighted cell means, counts with self
                                           # "palm": plain user means, counts without self
    max_redraws: int = 100
    jobs: int = 1

    def region_side(self, lambda_b: float) -> float:
        if self.side is not None:
            return float(self.side)
        return math.sqrt(self.min_expected_bs / lambda_b)


@dataclass
class SimReport:
    """Means over replications with 95 % Student-t half-widths."""

    tau_d: tuple
    tau_dI: tuple
    tau_u: tuple
    tau_uI: tuple
    util_d: tuple
    cdf_h0: tuple
    cdf: dict                               # h -> (mean, half width)
    replications: list = field(default_factory=list)
    n_bs: float = 0.0
    n_users: float = 0.0
    redraws: int = 0
    side: float = 0.0


@dataclass
class Realization:
    side: float
    bs: np.ndarray                          # (m, 2)
    users: np.ndarray                       # (n, 2)
    is_iot: np.ndarray                      # bool (n,)
    active: np.ndarray                      # bool (n,); BB users always active
    band: Optional[np.ndarray] = None       # band index per BS


# ---------------------------------------------------------------------------
# geometry helpers


def _torus_delta(a, b, side):
    d = a[:, None, :] - b[None, :, :]
    d -= side * np.round(d / side)
    return d


def _torus_dist(a, b, side):
    d = _torus_delta(a, b, side)
    return np.sqrt(np.einsum("ijk,ijk->ij", d, d))


def _polygon_area(pts):
    c = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    p = pts[np.argsort(ang)]
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def torus_voronoi_areas(points, side, rng=None):
    """Voronoi cell areas of ``points`` on a square torus (they sum to side^2)."""
    pts = np.asarray(points, dtype=float) % side
    m = len(pts)
    if m == 1:
        return np.array([side * side])
    shifts = np.array([(i, j) for i in (0, -1, 1) for j in (0, -1, 1)], dtype=float) * side
    tiled = (pts[None, :, :] + shifts[:, None, :]).reshape(-1, 2)
    try:
        vor = Voronoi(tiled)
        areas = np.empty(m)
        for i in range(m):
            reg = vor.regions[vor.point_region[i]]
            if -1 in reg or not reg:
                raise QhullError("unbounded central cell")
            areas[i] = _polygon_area(vor.vertices[reg])
        return areas
    except QhullError:
        # degenerate layouts: fall back to a fine lattice count
        g = (np.arange(400) + 0.5) * side / 400
        xy = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
        _, idx = cKDTree(pts, boxsize=side).query(xy)
        return np.bincount(idx, minlength=m) * (side / 400) ** 2


# ---------------------------------------------------------------------------
# realization


def draw_realization(scn: ScenarioConfig, side: float, rng, sim: SimConfig | None = None) -> Realization:
    pop = scn.population
    area = side * side
    m = rng.poisson(pop.lambda_b * area)
    if m == 0:
        raise DegenerateRealization("no BS in region")
    bs = rng.uniform(0, side, (m, 2))
    n = rng.poisson(pop.lambda_u * area)
    users = rng.uniform(0, side, (n, 2))
    is_iot = rng.random(n) < pop.iot_fraction
    active = ~is_iot | (rng.random(n) < pop.duty_cycle)
    band = None
    if sim is not None and sim.interference == "band":
        band = rng.integers(0, scn.radio.reuse, m)
    return Realization(side, bs, users, is_iot, active, band)


def exact_user_power(scn: ScenarioConfig, real: Realization, x, serving=None, util_u=None,
                     mode: str = "cog", gain: float = 1.0):
    """Mean power received at points ``x`` from UE uplink transmissions [W].

    ``cog`` places each cell's aggregate transmitter at the centre of gravity
    of its users; ``exact`` sums every transmitting user individually (a user
    never receives its own transmission when ``x`` coincides with it).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    side, a = real.side, scn.radio.alpha
    sch = scn.scheduling
    if serving is None:
        _, serving = cKDTree(real.bs % side, boxsize=side).query(real.users % side)
    m = len(real.bs)
    tx = real.active
    bb = tx & ~real.is_iot
    iot = tx & real.is_iot
    n_bb = np.bincount(serving[bb], minlength=m).astype(float)
    n_iot = np.bincount(serving[iot], minlength=m).astype(float)
    share_den = sch.delta_u * n_bb + n_iot
    uu = np.ones(m) if util_u is None else np.asarray(util_u, dtype=float)
    out = np.zeros(len(x))
    if mode == "cog":
        p_bar = np.divide(sch.delta_u * n_bb * sch.p_bb + n_iot * sch.p_iot, share_den,
                          out=np.zeros(m), where=share_den > 0)
        cog = np.zeros((m, 2))
        for j in np.nonzero(share_den > 0)[0]:
            sel = tx & (serving == j)
            ref = real.users[sel][0]
            d = real.users[sel] - ref
            d -= side * np.round(d / side)
            cog[j] = (ref + d.mean(axis=0)) % side
        live = share_den > 0
        for s in range(0, len(x), _CHUNK):
            d = _torus_dist(x[s:s + _CHUNK], cog[live], side)
            out[s:s + _CHUNK] = np.maximum(d, 1.0) ** (-a) @ (p_bar[live] * uu[live])
        return gain * out
    if mode != "exact":
        raise ValueError(f"unknown user power mode {mode!r}")
    idx = np.nonzero(tx)[0]
    w_user = np.where(real.is_iot[idx], sch.p_iot, sch.delta_u * sch.p_bb) / share_den[serving[idx]]
    w_user = w_user * uu[serving[idx]]
    for s in range(0, len(x), _CHUNK):
        d = _torus_dist(x[s:s + _CHUNK], real.users[idx], side)
        pl = np.where(d > 0, np.maximum(d, 1.0) ** (-a), 0.0)
        out[s:s + _CHUNK] = pl @ w_user
    return gain * out


def _interference(scn, real, dist, serving, util, k_div, same_band=None):
    """Per-user interference from non-serving BSs within half the side, plus a
    mean-field tail beyond it [W]. ``k_div`` divides the total (reuse)."""
    rad = scn.radio
    R = real.side / 2
    a = rad.alpha
    n, m = dist.shape
    # the tail stands for the periodic images of the other BSs
    lam = (m - 1) / (real.side * real.side)
    mask = dist <= R
    mask[np.arange(n), serving] = False
    if same_band is not None:
        mask &= same_band
    pw = np.where(mask, np.maximum(dist, 1e-6) ** (-a), 0.0) @ util
    tail = 2 * math.pi * lam * R ** (2 - a) / (a - 2) * float(np.mean(util))
    if same_band is not None:
        tail /= rad.reuse
    return rad.p_tx * rad.mean_gain * (pw + tail) / k_div


def measure_realization(scn: ScenarioConfig, real: Realization, sim: SimConfig | None = None,
                        h_points=()) -> dict:
    """Measure one realization; returns area-weighted statistics."""
    sim = sim or SimConfig()
    rad, sch, q, mode = scn.radio, scn.scheduling, scn.qos, scn.mode
    side = real.side
    m = len(real.bs)
    if m == 0:
        raise DegenerateRealization("no BS in region")
    w = effective_w_d(scn)
    users = real.users
    n = len(users)
    res = {"n_bs": m, "n_users": n}
    act = real.active
    _, serving = cKDTree(real.bs % side, boxsize=side).query(users % side) if n else (None, np.zeros(0, int))
    serving = np.asarray(serving, dtype=int)
    bb = act & ~real.is_iot
    iot = act & real.is_iot
    n_bb = np.bincount(serving[bb], minlength=m).astype(float)
    n_iot = np.bincount(serving[iot], minlength=m).astype(float)
    areas = torus_voronoi_areas(real.bs, side)

    # work on active users only
    ia = np.nonzero(act)[0]
    srv = serving[ia]
    dist = np.empty((len(ia), m))
    for s in range(0, len(ia), _CHUNK):
        dist[s:s + _CHUNK] = _torus_dist(users[ia[s:s + _CHUNK]], real.bs, side)
    D = np.maximum(dist[np.arange(len(ia)), srv], 1e-9)
    load = n_iot[srv] + w * n_bb[srv]
    same_band = None
    k_div = rad.reuse
    if real.band is not None:
        same_band = real.band[None, :] == real.band[srv][:, None]
        k_div = 1.0

    def bb_delay(I):
        return load / (w * capacity(D, rad.p_tx, rad.gain, I, rad))

    occupied = (n_bb + n_iot) > 0
    if sim.utilization == "full":
        util = occupied.astype(float)
        I = _interference(scn, real, dist, srv, util, k_div, same_band)
    else:
        util = np.zeros(m)
        cnt = np.maximum(np.bincount(srv, minlength=m), 1)
        for _ in range(500):
            I = _interference(scn, real, dist, srv, util, k_div, same_band)
            new = np.minimum(np.bincount(srv, weights=bb_delay(I) / q.tau_d0, minlength=m) / cnt, 1.0)
            if np.max(np.abs(new - util)) < 1e-12:
                util = new
                break
            util = 0.5 * util + 0.5 * new
        I = _interference(scn, real, dist, srv, util, k_div, same_band)

    is_bb = ~real.is_iot[ia]
    palm = sim.estimator == "palm"
    # in the palm estimator a user does not count itself
    own_d = np.where(is_bb, w, 1.0) if palm else 0.0
    own_u = np.where(is_bb, sch.delta_u, 1.0) if palm else 0.0
    tau_bb = (load - own_d) / (w * capacity(D, rad.p_tx, rad.gain, I, rad))
    if mode.kind == "ts":
        if mode.split < 1:
            tau_iot = (load - own_d) / ((1 - mode.split) * capacity(D, rad.p_tx, rad.gain, I, rad))
        else:
            tau_iot = np.full(len(ia), np.inf)
    else:
        nu = mode.split
        tau_iot = (load - own_d) / capacity(D, (1 - nu) * rad.p_tx, rad.gain, (1 - nu) * I, rad)
    up_load = n_iot[srv] + sch.delta_u * n_bb[srv]
    tau_u = (up_load - own_u) / (sch.delta_u * capacity(D, sch.p_iot, 1.0, 0.0, rad))
    cnt_all = np.maximum(np.bincount(srv, minlength=m), 1)
    util_u = np.minimum(np.bincount(srv, weights=tau_u / q.tau_u0, minlength=m) / cnt_all, 1.0)

    def wmean(vals, sel):
        # area-weighted mean of per-cell means over cells holding selected users
        if palm:
            return float(np.mean(vals[sel])) if np.any(sel) else math.nan
        c = srv[sel]
        s = np.bincount(c, weights=vals[sel], minlength=m)
        k = np.bincount(c, minlength=m)
        has = k > 0
        if not has.any():
            return math.nan
        return float(np.sum(areas[has] * s[has] / k[has]) / np.sum(areas[has]))

    res["tau_d"] = wmean(tau_bb, is_bb)
    res["tau_dI"] = wmean(tau_iot, ~is_bb)
    res["tau_u"] = wmean(tau_u, is_bb)
    res["tau_uI"] = wmean(sch.delta_u * tau_u, ~is_bb)
    res["util_d"] = float(np.sum(areas * util) / np.sum(areas))
    if not sim.delays:
        # utilizations are still solved; only the delay statistics are dropped
        for k in ("tau_d", "tau_dI", "tau_u", "tau_uI"):
            res[k] = math.nan

    if sim.harvest_cdf and np.any(~is_bb):
        sel = ~is_bb
        K = 1.0 / load[sel]
        if real.band is not None:
            I_tot = _interference(scn, real, dist[sel], srv[sel], util, 1.0, None)
        else:
            I_tot = I[sel] * rad.reuse
        gain = 1.0 if sim.user_gain is None else sim.user_gain
        O = exact_user_power(scn, real, users[ia[sel]], serving, util_u, sim.user_power, gain)
        h_in = pointwise_received_power(mode, D[sel], util[srv[sel]], K, I_tot, O, rad, scn.sources)
        h = np.asarray(scn.harvest(h_in), dtype=float)
        pts = [q.h0] + list(h_points)
        if palm:
            cdfs = [float(np.mean(h <= hp)) for hp in pts]
        else:
            cdfs = [_cell_fraction(h <= hp, srv[sel], areas, m) for hp in pts]
        res["cdf_h0"] = cdfs[0]
        res["cdf"] = dict(zip(pts[1:], cdfs[1:]))
        res["h_mean"] = float(np.mean(h))
    else:
        res["cdf_h0"] = math.nan
        res["cdf"] = {hp: math.nan for hp in h_points}
    return res


def _cell_fraction(flag, cells, areas, m):
    s = np.bincount(cells, weights=flag.astype(float), minlength=m)
    k = np.bincount(cells, minlength=m)
    has = k > 0
    if not has.any():
        return math.nan
    return float(np.sum(areas[has] * s[has] / k[has]) / np.sum(areas[has]))


def _replicate(args):
    scn, sim, side, rep, h_points = args
    redraws = 0
    for attempt in range(sim.max_redraws + 1):
        rng = np.random.default_rng([sim.seed, rep, attempt])
        try:
            real = draw_realization(scn, side, rng, sim)
        except DegenerateRealization:
            redraws += 1
            continue
        out = measure_realization(scn, real, sim, h_points)
        out["redraws"] = redraws
        out["replication"] = rep
        return out
    raise DegenerateRealization(f"replication {rep}: {redraws} empty draws")


def _ci(values):
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
    if v.size == 0:
        return (math.nan, math.nan)
    if v.size == 1:
        return (float(v[0]), math.inf)
    half = stats.t.ppf(0.975, v.size - 1) * v.std(ddof=1) / math.sqrt(v.size)
    return (float(v.mean()), float(half))


def run_sim(scn: ScenarioConfig, sim: SimConfig | None = None) -> SimReport:
    """Run all replications and aggregate them."""
    sim = sim or SimConfig()
    if sim.replications < 2:
        raise ValueError("need at least 2 replications")
    side = sim.region_side(scn.population.lambda_b)
    if side * side * scn.population.lambda_b < 20:
        raise ValueError("region holds fewer than 20 expected BSs")
    h_points = tuple(float(h) for h in sim.h_grid)
    jobs = [(scn, sim, side, rep, h_points) for rep in range(sim.replications)]
    if sim.jobs > 1:
        with ProcessPoolExecutor(sim.jobs) as pool:
            reps = list(pool.map(_replicate, jobs))
    else:
        reps = [_replicate(j) for j in jobs]
    col = lambda k: [r[k] for r in reps]
    cdf = {h: _ci([r["cdf"][h] for r in reps]) for h in h_points}
    return SimReport(
        tau_d=_ci(col("tau_d")), tau_dI=_ci(col("tau_dI")), tau_u=_ci(col("tau_u")),
        tau_uI=_ci(col("tau_uI")), util_d=_ci(col("util_d")), cdf_h0=_ci(col("cdf_h0")),
        cdf=cdf, replications=reps, n_bs=float(np.mean(col("n_bs"))),
        n_users=float(np.mean(col("n_users"))), redraws=int(sum(col("redraws"))), side=side,
    )


RAW_COLUMNS = ("replication [-]", "n_bs [-]", "n_users [-]", "redraws [-]", "tau_d [s/bit]",
               "tau_dI [s/bit]", "tau_u [s/bit]", "tau_uI [s/bit]", "util_d [-]", "cdf_h0 [-]")


def write_raw_csv(report: SimReport, path):
    """Write one row per replication."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(RAW_COLUMNS)
        for r in report.replications:
            wr.writerow([r["replication"], r["n_bs"], r["n_users"], r["redraws"], repr(r["tau_d"]),
                         repr(r["tau_dI"]), repr(r["tau_u"]), repr(r["tau_uI"]), repr(r["util_d"]),
                         repr(r["cdf_h0"])])
