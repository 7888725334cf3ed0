"""Monte Carlo for the isotropic alpha-stable process.

Increments over a step ``dt`` have characteristic function
``exp(-dt |xi|^alpha)``.  For ``alpha < 2`` they are drawn as a Gaussian
vector subordinated by a positive ``alpha/2``-stable variable (Kanter /
Chambers-Mallows-Stuck); for ``alpha = 2`` they are Gaussian with variance
``2 dt`` per coordinate.

Paths are simulated in fixed-size blocks.  Block ``b`` draws from a Philox
stream keyed by ``(seed, b)``, so results do not depend on how many worker
threads process the blocks.  Exit monitoring can run at several strides of the
base step at once; stride ``s`` observes the same path on the coarser grid
``s * dt``, which gives a coupled estimate of the time-step bias.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma

from .fraclap import Potential, normalization_constant
from .geometry import Domain

Z95 = 1.959963984540054


@dataclass(frozen=True)
class PathConfig:
    alpha: float
    d: int
    dt: float
    horizon: float
    n_paths: int
    seed: int = 42
    exit_mode: str = "auto"
    block_size: int = 8192
    threads: int = 1

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 2:
            raise ValueError("alpha out of range (0, 2]")
        if self.dt <= 0 or self.dt > self.horizon:
            raise ValueError("need 0 < dt <= horizon")
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        if self.exit_mode not in ("auto", "landing", "bridge"):
            raise ValueError(f"unknown exit mode {self.exit_mode!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def bridge(self) -> bool:
        if self.exit_mode == "auto":
            return self.alpha == 2
        return self.exit_mode == "bridge"

    def replace(self, **changes) -> PathConfig:
        from dataclasses import replace

        return replace(self, **changes)


@dataclass
class ExitSample:
    tau: float
    exit_position: np.ndarray
    by_jump: bool
    v_integral: float


@dataclass
class ExitBatch:
    """Per-path outcomes of one monitoring stride; ``tau = inf`` means no exit by the horizon."""

    tau: np.ndarray
    exit_position: np.ndarray
    by_jump: np.ndarray
    v_integral: np.ndarray
    final_position: np.ndarray
    stride: int = 1

    def sample(self, i: int) -> ExitSample:
        return ExitSample(float(self.tau[i]), self.exit_position[i].copy(), bool(self.by_jump[i]),
                          float(self.v_integral[i]))

    def __len__(self) -> int:
        return len(self.tau)


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo mean with a symmetric 95% half-width (or explicit interval)."""

    value: float
    half_width: float
    n: int
    std: float = float("nan")
    lo: float | None = None
    hi: float | None = None

    @property
    def interval(self) -> tuple[float, float]:
        lo = self.value - self.half_width if self.lo is None else self.lo
        hi = self.value + self.half_width if self.hi is None else self.hi
        return lo, hi

    @property
    def sigma(self) -> float:
        return self.std / math.sqrt(self.n)


@dataclass(frozen=True)
class DensityEstimate:
    t: float
    x: np.ndarray
    y: np.ndarray
    value: float
    half_width: float
    n: int
    bandwidth: float
    warning: str | None = None


# -- sampling -------------------------------------------------------------------


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based stream for one block of paths: Philox keyed by (seed, block)."""
    key = (int(seed) & (2 ** 64 - 1)) | (int(block) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def positive_stable(beta: float, rng: np.random.Generator, size: int | tuple | None = None) -> np.ndarray:
    """Positive stable variables with Laplace transform ``exp(-s^beta)``, ``0 < beta < 1``.

    Kanter's representation of the Chambers-Mallows-Stuck construction.
    """
    u = rng.uniform(0.0, math.pi, size)
    e = rng.standard_exponential(size)
    return (np.sin(beta * u) / np.sin(u) ** (1 / beta)) * (np.sin((1 - beta) * u) / e) ** ((1 - beta) / beta)


def stable_increment(alpha: float, d: int, dt: float, rng: np.random.Generator,
                     size: int | None = None) -> np.ndarray:
    """Increment(s) with characteristic function ``exp(-dt |xi|^alpha)``.

    Returns shape ``(d,)`` when ``size`` is None, else ``(size, d)``.
    """
    n = 1 if size is None else int(size)
    z = rng.standard_normal((n, d))
    if alpha == 2:
        var = np.full(n, 2.0 * dt)
    else:
        s = dt ** (2 / alpha) * positive_stable(alpha / 2, rng, n)
        var = 2.0 * s
    out = np.sqrt(var)[:, None] * z
    return out[0] if size is None else out


# -- interval helpers --------------------------------------------------------------


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # the interval always contains p (guards rounding at k = 0 and k = n)
    return max(0.0, min(centre - half, p)), min(1.0, max(centre + half, p))


def proportion(k: int, n: int) -> Estimate:
    lo, hi = wilson_interval(k, n)
    p = k / n
    return Estimate(p, max(p - lo, hi - p), n, math.sqrt(p * (1 - p)), lo, hi)


def mean_estimate(samples: np.ndarray) -> Estimate:
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    # np.sum uses pairwise summation: order-fixed, independent of thread count
    mean = float(np.sum(samples) / n)
    std = float(np.sqrt(np.sum((samples - mean) ** 2) / max(n - 1, 1)))
    return Estimate(mean, Z95 * std / math.sqrt(n), n, std)


# -- path engine ---------------------------------------------------------------------


@dataclass
class _Region:
    """Membership / distance callbacks for the set the paths must stay in."""

    inside: Callable[[np.ndarray], np.ndarray]
    distance: Callable[[np.ndarray], np.ndarray] | None = None
    exterior_point: Callable[[np.ndarray], np.ndarray] | None = None


def domain_region(domain: Domain) -> _Region:
    if domain.kind in ("ball", "rectangle", "annulus"):
        dist = domain.boundary_distance
    else:
        edt = _cell_distance_map(domain)

        def dist(p: np.ndarray) -> np.ndarray:
            idx = domain.cell_of(p)
            shape = np.asarray(domain.shape)
            ok = np.all((idx >= 0) & (idx < shape), axis=-1)
            out = np.zeros(len(p))
            out[ok] = edt[tuple(idx[ok].T)]
            return out

    tree = domain._exterior_tree

    def exterior_point(p: np.ndarray) -> np.ndarray:
        _, j = tree.query(p)
        return tree.data[j]

    return _Region(domain.contains, dist, exterior_point)


def _cell_distance_map(domain: Domain) -> np.ndarray:
    from scipy import ndimage

    padded = np.pad(domain.mask, 1)
    edt = ndimage.distance_transform_edt(padded) * domain.h - domain.h / 2
    return np.maximum(edt[tuple(slice(1, -1) for _ in range(domain.d))], 0.0)


def ball_region(centre: Sequence[float], r: float) -> _Region:
    c = np.asarray(centre, dtype=float)

    def inside(p):
        return np.sum((p - c) ** 2, axis=-1) < r * r

    def dist(p):
        return np.maximum(r - np.linalg.norm(p - c, axis=-1), 0.0)

    def exterior_point(p):
        v = p - c
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        nv[nv == 0] = 1.0
        return c + v / nv * r * (1 + 1e-12)

    return _Region(inside, dist, exterior_point)


def _simulate_block(block: int, n: int, start: np.ndarray, cfg: PathConfig, region: _Region,
                    potential: Callable[[np.ndarray], np.ndarray] | None,
                    strides: tuple[int, ...]) -> list[ExitBatch]:
    rng = block_rng(cfg.seed, block)
    d, dt = cfg.d, cfg.dt
    X = np.tile(start, (n, 1))
    S = len(strides)
    alive = np.ones((S, n), dtype=bool)
    tau = np.full((S, n), np.inf)
    exit_pos = np.full((S, n, d), np.nan)
    vint = np.zeros((S, n))
    prev = np.repeat(X[None], S, axis=0)
    by_jump = cfg.alpha < 2
    for k in range(cfg.n_steps):
        act = np.flatnonzero(alive.any(axis=0))
        if act.size == 0:
            break
        X[act] += stable_increment(cfg.alpha, d, dt, rng, act.size)
        u = rng.uniform(size=act.size) if cfg.bridge else None
        step = k + 1
        for si, s in enumerate(strides):
            if step % s:
                continue
            sel = alive[si, act]
            paths = act[sel]
            if paths.size == 0:
                continue
            if potential is not None:
                vint[si, paths] += potential(prev[si, paths]) * (s * dt)
            new = X[paths]
            inside = region.inside(new)
            crossed = ~inside
            if cfg.bridge and region.distance is not None:
                ok = np.flatnonzero(inside)
                d0 = region.distance(prev[si, paths[ok]])
                d1 = region.distance(new[ok])
                p_cross = np.exp(-d0 * d1 / (s * dt))
                hit = u[sel][ok] < p_cross
                crossed[ok[hit]] = True
            out = paths[crossed]
            tau[si, out] = step * dt
            landed = ~inside[crossed]
            pos = new[crossed].copy()
            if np.any(~landed) and region.exterior_point is not None:
                pos[~landed] = region.exterior_point(pos[~landed])
            exit_pos[si, out] = pos
            alive[si, out] = False
            prev[si, paths] = new
    return [ExitBatch(tau[si], exit_pos[si], np.where(np.isfinite(tau[si]), by_jump, False),
                      vint[si], X.copy(), s) for si, s in enumerate(strides)]


def _blocks(cfg: PathConfig) -> list[tuple[int, int]]:
    B = cfg.block_size
    return [(b, min(B, cfg.n_paths - b * B)) for b in range((cfg.n_paths + B - 1) // B)]


def run_paths(start: Sequence[float], cfg: PathConfig, region: _Region,
              potential: Callable[[np.ndarray], np.ndarray] | None = None,
              strides: tuple[int, ...] = (1,)) -> list[ExitBatch]:
    """Simulate ``cfg.n_paths`` paths from ``start``; one :class:`ExitBatch` per stride."""
    start = np.asarray(start, dtype=float)
    if cfg.n_steps % max(strides):
        raise ValueError("horizon must be a whole number of coarse steps")
    blocks = _blocks(cfg)

    def work(item):
        b, n = item
        return _simulate_block(b, n, start, cfg, region, potential, strides)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = [work(item) for item in blocks]
    merged = []
    for si, s in enumerate(strides):
        parts = [r[si] for r in results]
        merged.append(ExitBatch(np.concatenate([p.tau for p in parts]),
                                np.concatenate([p.exit_position for p in parts]),
                                np.concatenate([p.by_jump for p in parts]),
                                np.concatenate([p.v_integral for p in parts]),
                                np.concatenate([p.final_position for p in parts]), s))
    return merged


def _potential_lookup(domain: Domain, V: Potential | np.ndarray | float | None):
    if V is None:
        return None
    if np.isscalar(V):
        val = float(V)
        return lambda p: np.full(len(p), val)
    values = np.asarray(V.values if isinstance(V, Potential) else V, dtype=float)

    def lookup(p):
        node = domain.node_of(p)
        out = np.zeros(len(p))
        ok = node >= 0
        out[ok] = values[node[ok]]
        return out

    return lookup


def _check_start(domain: Domain, start: Sequence[float]) -> np.ndarray:
    start = np.asarray(start, dtype=float)
    if start.shape != (domain.d,) or not domain.contains(start[None])[0]:
        raise ValueError(f"start point {start.tolist()} is outside the domain")
    return start


def simulate_exits(domain: Domain, start: Sequence[float], cfg: PathConfig,
                   V: Potential | np.ndarray | float | None = None,
                   strides: tuple[int, ...] = (1,)) -> list[ExitBatch]:
    start = _check_start(domain, start)
    return run_paths(start, cfg, domain_region(domain), _potential_lookup(domain, V), strides)


def simulate_exit(domain: Domain, start: Sequence[float], cfg: PathConfig,
                  V: Potential | np.ndarray | float | None = None, path_index: int = 0) -> ExitSample:
    """Outcome of path ``path_index`` (identical to its entry in a full batch run)."""
    start = _check_start(domain, start)
    if not 0 <= path_index < cfg.n_paths:
        raise IndexError("path index out of range")
    b = path_index // cfg.block_size
    n = min(cfg.block_size, cfg.n_paths - b * cfg.block_size)
    batch = _simulate_block(b, n, start, cfg, domain_region(domain), _potential_lookup(domain, V), (1,))[0]
    return batch.sample(path_index - b * cfg.block_size)


def getoor_mean_exit_time(d: int, alpha: float, x: Sequence[float] | None = None, r: float = 1.0) -> float:
    """``E_x tau(B_r)`` for the isotropic alpha-stable process."""
    rho2 = 0.0 if x is None else float(np.sum(np.asarray(x, dtype=float) ** 2))
    const = gamma(d / 2) / (2 ** alpha * gamma(1 + alpha / 2) * gamma((d + alpha) / 2))
    return const * (r * r - rho2) ** (alpha / 2)


# -- estimators ----------------------------------------------------------------------


def survival_probability(domain: Domain, start: Sequence[float], t: float | Sequence[float],
                         cfg: PathConfig, strides: tuple[int, ...] = (1,)):
    """``P_start(tau(D) > t)`` with Wilson 95% intervals.

    ``t`` may be a scalar (returns one :class:`Estimate`) or a sequence
    (returns a list).  With several strides a list per stride is returned.
    """
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times > cfg.horizon + 1e-12) or np.any(times < 0):
        raise ValueError("survival time must lie in [0, horizon]")
    batches = simulate_exits(domain, start, cfg, strides=strides)
    per_stride = []
    for batch in batches:
        ests = []
        for tt in times:
            if tt == 0:
                ests.append(Estimate(1.0, 0.0, len(batch), 0.0, 1.0, 1.0))
                continue
            k = int(np.count_nonzero(batch.tau > tt + 1e-12 * cfg.dt))
            ests.append(proportion(k, len(batch)))
        per_stride.append(ests)
    if len(strides) == 1:
        return per_stride[0][0] if np.ndim(t) == 0 else per_stride[0]
    return per_stride


def feynman_kac(domain: Domain, V: Potential | np.ndarray | float, u: np.ndarray,
                start: Sequence[float], t: float, cfg: PathConfig,
                strides: tuple[int, ...] = (1,)):
    """Estimate ``E_x[exp(int_0^{t ^ tau} V(X_s) ds) u(X_{t ^ tau})]``.

    ``u`` is given on interior nodes and read by nearest-node lookup; it is 0
    outside the domain, so exited paths contribute nothing.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (domain.n_interior,):
        raise ValueError("terminal function must live on interior nodes")
    if t < 0 or t > cfg.horizon + 1e-12:
        raise ValueError("t must lie in [0, horizon]")
    start = _check_start(domain, start)
    if t == 0 or not np.any(u):
        node = domain.node_of(start[None])[0]
        val = float(u[node]) if node >= 0 else 0.0
        est = Estimate(val, 0.0, cfg.n_paths, 0.0)
        return est if len(strides) == 1 else [est] * len(strides)
    run_cfg = cfg.replace(horizon=t)
    batches = simulate_exits(domain, start, run_cfg, V=V, strides=strides)
    out = []
    for batch in batches:
        node = domain.node_of(batch.final_position)
        val = np.where(node >= 0, u[np.maximum(node, 0)], 0.0)
        val = np.where(np.isfinite(batch.tau), 0.0, val)
        out.append(mean_estimate(np.exp(batch.v_integral) * val))
    return out[0] if len(strides) == 1 else out


def heat_kernel(t: float, r: float | np.ndarray, d: int, alpha: float) -> np.ndarray | float:
    """Closed-form transition density for ``alpha = 2`` (variance 2t) and ``alpha = 1`` (Cauchy)."""
    r = np.asarray(r, dtype=float)
    if alpha == 2:
        return (4 * math.pi * t) ** (-d / 2) * np.exp(-r * r / (4 * t))
    if alpha == 1:
        k = gamma((d + 1) / 2) / math.pi ** ((d + 1) / 2)
        return k * t / (t * t + r * r) ** ((d + 1) / 2)
    raise ValueError("closed form only for alpha in {1, 2}")


def sandwich_profile(t: float, r: float | np.ndarray, d: int, alpha: float) -> np.ndarray | float:
    """``t^{-d/alpha} min t / |x-y|^{d+alpha}``."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        far = np.where(r > 0, t / np.where(r > 0, r, 1.0) ** (d + alpha), np.inf)
    return np.minimum(t ** (-d / alpha), far)


def transition_density(t: float, x: Sequence[float], y: Sequence[float], cfg: PathConfig,
                       bandwidth: float) -> DensityEstimate:
    """Gaussian-kernel density estimate of ``p(t, x, y)`` from ``n`` exact draws of ``X_t``."""
    if t <= 0 or bandwidth <= 0:
        raise ValueError("need t > 0 and bandwidth > 0")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = cfg.d
    total, total_sq, n_total = 0.0, 0.0, 0
    sums, sqs = [], []
    for b, n in _blocks(cfg):
        rng = block_rng(cfg.seed, b)
        pts = x + stable_increment(cfg.alpha, d, t, rng, n)
        r2 = np.sum((pts - y) ** 2, axis=1)
        k = np.exp(-r2 / (2 * bandwidth ** 2)) / (2 * math.pi * bandwidth ** 2) ** (d / 2)
        sums.append(np.sum(k))
        sqs.append(np.sum(k * k))
        n_total += n
    total = float(np.sum(sums))
    total_sq = float(np.sum(sqs))
    mean = total / n_total
    var = max(total_sq / n_total - mean * mean, 0.0)
    scale = t ** (1 / cfg.alpha)
    warning = None
    if bandwidth > 0.1 * max(scale, float(np.linalg.norm(x - y))):
        warning = f"bandwidth {bandwidth:g} under-resolves the density scale {scale:g}"
    return DensityEstimate(t, x, y, mean, Z95 * math.sqrt(var / n_total), n_total, bandwidth, warning)


def fit_sandwich_constant(estimates: Sequence[DensityEstimate], alpha: float, d: int) -> float:
    """Smallest ``C`` with ``g / C <= p_est <= C g`` over the estimates."""
    worst = 1.0
    for est in estimates:
        g = float(sandwich_profile(est.t, np.linalg.norm(est.x - est.y), d, alpha))
        if est.value <= 0:
            return float("inf")
        worst = max(worst, est.value / g, g / est.value)
    return worst


def exit_bound_sweep(r_list: Sequence[float], t_list: Sequence[float], alpha: float,
                     cfg: PathConfig) -> list[dict]:
    """Rows ``{r, t, estimate, ci_lo, ci_hi, ratio}`` with ratio ``P_0(tau(B_r) <= t) / (t r^-alpha)``."""
    if not 0 < alpha < 2:
        raise ValueError("the exit bound sweep needs alpha in (0, 2)")
    t_max = max(t_list)
    rows = []
    for r in r_list:
        run = cfg.replace(alpha=alpha, horizon=t_max)
        batch = run_paths(np.zeros(cfg.d), run, ball_region(np.zeros(cfg.d), r))[0]
        for t in t_list:
            k = int(np.count_nonzero(batch.tau <= t + 1e-12 * cfg.dt))
            p = proportion(k, len(batch))
            scale = t * r ** -alpha
            rows.append({"r": float(r), "t": float(t), "estimate": p.value, "ci_lo": p.lo, "ci_hi": p.hi,
                         "ratio": p.value / scale, "ratio_lo": p.lo / scale, "ratio_hi": p.hi / scale})
    return rows


@dataclass
class TargetSet:
    """A set ``A`` given by cell centres and a common cell volume."""

    points: np.ndarray
    cell_volume: float
    h: float = field(default=0.0)

    @classmethod
    def from_domain(cls, domain: Domain) -> TargetSet:
        return cls(domain.interior_points, domain.cell_volume, domain.h)

    @classmethod
    def empty(cls, d: int) -> TargetSet:
        return cls(np.zeros((0, d)), 0.0, 0.0)

    def contains(self, p: np.ndarray) -> np.ndarray:
        if len(self.points) == 0:
            return np.zeros(len(p), dtype=bool)
        from scipy.spatial import cKDTree

        tree = cKDTree(self.points)
        dist, _ = tree.query(p, p=np.inf)
        return dist <= self.h / 2


def levy_jump_balance(target: TargetSet, start: Sequence[float], t: float, cfg: PathConfig,
                      kernel_scale: float = 1.0) -> tuple[Estimate, Estimate]:
    """Two estimators of the expected number of jumps into ``A`` before ``t`` (stopped at the hit).

    Left: fraction of paths whose step lands in ``A``.  Right: mean of
    ``c_{d,alpha} int_0^{t ^ T_A} int_A |X_s - z|^{-d-alpha} dz ds`` with the
    inner integral by cell quadrature over ``A`` and the outer by the
    left-endpoint rule.
    """
    start = np.asarray(start, dtype=float)
    if len(target.points) == 0:
        zero = Estimate(0.0, 0.0, cfg.n_paths, 0.0)
        return zero, zero
    if not 0 < cfg.alpha < 2:
        raise ValueError("the Levy system identity needs alpha in (0, 2)")
    gap = float(np.min(np.linalg.norm(target.points - start, axis=1)))
    if gap <= 2 * target.h:
        raise ValueError("singular configuration: A meets a neighbourhood of the start point")
    c = normalization_constant(cfg.d, cfg.alpha) * kernel_scale
    pts_A = target.points
    p = cfg.d + cfg.alpha
    from scipy.spatial import cKDTree

    tree = cKDTree(pts_A)

    def in_A(x):
        dist, _ = tree.query(x, p=np.inf)
        return dist <= target.h / 2

    def jump_rate(x):
        out = np.empty(len(x))
        for i in range(0, len(x), 256):
            chunk = x[i:i + 256]
            r2 = np.sum((chunk[:, None, :] - pts_A[None]) ** 2, axis=-1)
            out[i:i + 256] = c * target.cell_volume * np.sum(r2 ** (-p / 2), axis=1)
        return out

    region = _Region(lambda x: ~in_A(x))
    run = cfg.replace(horizon=t)
    batch = run_paths(start, run, region, potential=jump_rate)[0]
    hits = np.isfinite(batch.tau).astype(float)
    return mean_estimate(hits), mean_estimate(batch.v_integral)
