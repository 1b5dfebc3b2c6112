"""Synthetic ground-texture world, panoramic renderer, night photometry and
odometry noise.

Everything random takes an explicit seed. Per-frame streams are derived as
``default_rng([seed, stream, frame])`` so frames can be rendered in any order
or in parallel without changing the output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .seq2d import OdometryDelta

TWO_PI = 2.0 * math.pi

# stream ids for derived generators
STREAM_NIGHT = 1
STREAM_ODOMETRY = 2
STREAM_WANDER = 3


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.theta)):
            raise ValueError("pose must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))


def wrap_angle(theta: float) -> float:
    t = math.fmod(theta, TWO_PI)
    if t < 0:
        t += TWO_PI
    return 0.0 if t >= TWO_PI else t


@dataclass(frozen=True)
class NoiseModel:
    distance_sigma: float = 0.0
    heading_sigma: float = 0.0

    def __post_init__(self):
        if self.distance_sigma < 0 or self.heading_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")


NOISE_MODELS = {
    0: NoiseModel(0.0, 0.0),
    1: NoiseModel(0.1, 0.02),
    2: NoiseModel(0.25, 0.05),
    3: NoiseModel(0.5, 0.1),
}


@dataclass(frozen=True)
class WorldSpec:
    seed: int = 0
    extent: Tuple[float, float] = (7.0, 5.0)
    feature_scale: float = 1.0
    octaves: int = 3

    def __post_init__(self):
        if self.extent[0] <= 0 or self.extent[1] <= 0:
            raise ValueError("world extent must be positive")
        if self.feature_scale <= 0 or self.octaves < 1:
            raise ValueError("feature_scale must be > 0 and octaves >= 1")


@dataclass(frozen=True)
class NightTransform:
    gain: float = 1.0
    gamma: float = 1.0
    noise_sigma: float = 0.0
    patch_count: int = 0
    patch_radius: float = 4.0
    patch_strength: float = 0.0

    def __post_init__(self):
        if not 0 < self.gain <= 1:
            raise ValueError("gain must lie in (0, 1]")
        if self.gamma <= 0 or self.noise_sigma < 0 or self.patch_count < 0 or self.patch_radius <= 0:
            raise ValueError("invalid night transform parameters")


IDENTITY_NIGHT = NightTransform()


def _hash_uniform(ix, iy, salt: int) -> np.ndarray:
    # splitmix64-style integer hash of lattice coordinates -> [0, 1)
    with np.errstate(over="ignore"):
        h = (ix.astype(np.int64).astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
             ^ iy.astype(np.int64).astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
             ^ np.uint64(salt & 0xFFFFFFFFFFFFFFFF))
        h ^= h >> np.uint64(30)
        h *= np.uint64(0xBF58476D1CE4E5B9)
        h ^= h >> np.uint64(27)
        h *= np.uint64(0x94D049BB133111EB)
        h ^= h >> np.uint64(31)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


class World:
    """Continuous value-noise intensity field over the plane, clamped to [0, 255]."""

    def __init__(self, spec: WorldSpec):
        self.spec = spec

    def _octave(self, x, y, scale, salt):
        gx = x / scale
        gy = y / scale
        x0 = np.floor(gx)
        y0 = np.floor(gy)
        tx = _fade(gx - x0)
        ty = _fade(gy - y0)
        x0 = x0.astype(np.int64)
        y0 = y0.astype(np.int64)
        v00 = _hash_uniform(x0, y0, salt)
        v10 = _hash_uniform(x0 + 1, y0, salt)
        v01 = _hash_uniform(x0, y0 + 1, salt)
        v11 = _hash_uniform(x0 + 1, y0 + 1, salt)
        a = v00 + (v10 - v00) * tx
        b = v01 + (v11 - v01) * tx
        return a + (b - a) * ty

    def sample(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        total = np.zeros(np.broadcast(x, y).shape)
        norm = 0.0
        amp = 1.0
        scale = self.spec.feature_scale
        for o in range(self.spec.octaves):
            salt = (int(self.spec.seed) * 1_000_003 + o * 7919 + 1) & 0x7FFFFFFFFFFFFFFF
            total = total + amp * self._octave(x, y, scale, salt)
            norm += amp
            amp *= 0.5
            scale *= 0.5
        v = total / norm
        # stretch the centre-heavy octave sum for contrast
        return np.clip(128.0 + (v - 0.5) * 2.2 * 255.0, 0.0, 255.0)


def generate_world(spec: WorldSpec) -> World:
    return World(spec)


def default_ranges(h: int, near: float = 0.5, far: float = 5.0) -> np.ndarray:
    """Ground ranges for panorama rows, far (top row) to near (bottom row)."""
    return np.geomspace(far, near, h)


def render_panorama(world: World, pose: Pose2D, w: int, h: int,
                    ranges: Optional[np.ndarray] = None) -> np.ndarray:
    """Cylindrical panorama of the ground around ``pose``.

    Column ``j`` looks along bearing ``theta + 2*pi*j/w``. When ``theta`` is a
    whole multiple of ``2*pi/w`` the bearings come from a fixed table, so a
    heading change of exactly one column step is an exact circular shift.
    """
    ex, ey = world.spec.extent
    if not (0.0 <= pose.x <= ex and 0.0 <= pose.y <= ey):
        raise ValueError(f"pose ({pose.x}, {pose.y}) outside world extent {world.spec.extent}")
    if ranges is None:
        ranges = default_ranges(h)
    ranges = np.asarray(ranges, dtype=np.float64)
    if ranges.shape != (h,):
        raise ValueError("need one range per panorama row")
    k = pose.theta * w / TWO_PI
    kr = round(k)
    if abs(k - kr) < 1e-9:
        table = TWO_PI * np.arange(w) / w
        bearings = table[(np.arange(w) + kr) % w]
    else:
        bearings = pose.theta + TWO_PI * np.arange(w) / w
    xs = pose.x + ranges[:, None] * np.cos(bearings)[None, :]
    ys = pose.y + ranges[:, None] * np.sin(bearings)[None, :]
    vals = world.sample(xs, ys)
    return np.floor(vals + 0.5).astype(np.uint8)


def apply_night_transform(img: np.ndarray, t: NightTransform, seed: int = 0) -> np.ndarray:
    """Darken an 8-bit grayscale image: gamma, gain, light patches, noise, clamp.

    Patch radius is in pixels; horizontal distance wraps around the panorama.
    """
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("night transform expects a single-channel image")
    rng = np.random.default_rng(seed)
    out = 255.0 * t.gain * (img.astype(np.float64) / 255.0) ** t.gamma
    h, w = img.shape
    if t.patch_count:
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        for _ in range(t.patch_count):
            cx = rng.uniform(0, w)
            cy = rng.uniform(0, h)
            sign = 1.0 if rng.random() < 0.5 else -1.0
            dx = np.abs(xx - cx)
            dx = np.minimum(dx, w - dx)
            d2 = dx ** 2 + (yy - cy) ** 2
            out += sign * t.patch_strength * np.exp(-d2 / (2.0 * t.patch_radius ** 2))
    if t.noise_sigma > 0:
        out += rng.normal(0.0, t.noise_sigma, size=out.shape)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def apply_noise(delta: Tuple[float, float], model: NoiseModel, rng: np.random.Generator) -> Tuple[float, float]:
    """Corrupt a (distance, heading change) step with zero-mean Gaussian noise."""
    distance, heading = delta
    distance = distance + rng.normal(0.0, model.distance_sigma)
    heading = heading + rng.normal(0.0, model.heading_sigma)
    return distance, heading


@dataclass
class Trajectory:
    poses: List[Pose2D]
    deltas: List[OdometryDelta]
    true_deltas: List[OdometryDelta] = field(default_factory=list)


def integrate_trajectory(start: Pose2D, steps: Sequence[Tuple[float, float]], model: NoiseModel,
                         rng: np.random.Generator) -> Trajectory:
    """Dead-reckon ``steps`` of (distance, heading change).

    Heading is updated before advancing. True poses use the clean steps; the
    reported deltas come from a parallel integration of noise-corrupted steps.
    """
    tx, ty, tth = start.x, start.y, start.theta
    ex, ey, eth = start.x, start.y, start.theta
    poses = [start]
    deltas, true_deltas = [], []
    for distance, dtheta in steps:
        tth = tth + dtheta
        nx, ny = tx + distance * math.cos(tth), ty + distance * math.sin(tth)
        true_deltas.append(OdometryDelta(nx - tx, ny - ty))
        tx, ty = nx, ny
        poses.append(Pose2D(tx, ty, tth))

        nd, nth = apply_noise((distance, dtheta), model, rng)
        eth = eth + nth
        mx, my = ex + nd * math.cos(eth), ey + nd * math.sin(eth)
        deltas.append(OdometryDelta(mx - ex, my - ey))
        ex, ey = mx, my
    return Trajectory(poses, deltas, true_deltas)


def steps_from_poses(poses: Sequence[Pose2D]) -> List[Tuple[float, float]]:
    """Recover (distance, heading change) steps from consecutive true poses."""
    steps = []
    for a, b in zip(poses[:-1], poses[1:]):
        dth = (b.theta - a.theta + math.pi) % TWO_PI - math.pi
        steps.append((math.hypot(b.x - a.x, b.y - a.y), dth))
    return steps


def odometry_for_model(poses: Sequence[Pose2D], model: NoiseModel, seed: int) -> List[OdometryDelta]:
    """Reported deltas for an existing ground-truth trajectory under ``model``."""
    rng = np.random.default_rng([seed, STREAM_ODOMETRY])
    return integrate_trajectory(poses[0], steps_from_poses(poses), model, rng).deltas


def wander_steps(start: Pose2D, n_steps: int, step: float, bounds: Tuple[float, float, float, float],
                 seed: int, turn_sigma: float = 0.35) -> List[Tuple[float, float]]:
    """Random-walk steps that steer back toward the centre near ``bounds``."""
    rng = np.random.default_rng([seed, STREAM_WANDER])
    x0, y0, x1, y1 = bounds
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    x, y, th = start.x, start.y, start.theta
    steps = []
    for _ in range(n_steps):
        dth = rng.normal(0.0, turn_sigma)
        nx, ny = x + step * math.cos(th + dth), y + step * math.sin(th + dth)
        if not (x0 <= nx <= x1 and y0 <= ny <= y1):
            want = math.atan2(cy - y, cx - x)
            dth = (want - th + math.pi) % TWO_PI - math.pi
        th += dth
        x, y = x + step * math.cos(th), y + step * math.sin(th)
        steps.append((step, dth))
    return steps


@dataclass
class Dataset:
    """In-memory benchmark: day references plus a night query trajectory."""

    ref_images: List[np.ndarray]
    ref_poses: List[Pose2D]
    query_images: List[np.ndarray]
    query_poses: List[Pose2D]
    odometry: List[OdometryDelta]


def reference_grid(extent: Tuple[float, float], nx: int, ny: int) -> List[Pose2D]:
    xs = np.linspace(0.0, extent[0], nx)
    ys = np.linspace(0.0, extent[1], ny)
    return [Pose2D(float(x), float(y), 0.0) for y in ys for x in xs]


def make_benchmark(world: World, ref_poses: Sequence[Pose2D], query_poses: Sequence[Pose2D],
                   night: NightTransform, model: NoiseModel, seed: int,
                   width: int = 96, height: int = 48, ranges: Optional[np.ndarray] = None,
                   workers: int = 1) -> Dataset:
    """Render day references and night queries; corrupt the query odometry."""
    pts = np.array([(p.x, p.y) for p in ref_poses])
    if len(pts) < 3 or np.linalg.matrix_rank(pts[1:] - pts[0]) < 2:
        raise ValueError("reference poses must include 3 non-collinear points")
    if ranges is None:
        ranges = default_ranges(height)

    def day(p):
        return render_panorama(world, p, width, height, ranges)

    def night_frame(args):
        i, p = args
        frame_seed = np.random.SeedSequence([seed, STREAM_NIGHT, i]).generate_state(1)[0]
        return apply_night_transform(render_panorama(world, p, width, height, ranges), night, int(frame_seed))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            refs = list(pool.map(day, ref_poses))
            queries = list(pool.map(night_frame, enumerate(query_poses)))
    else:
        refs = [day(p) for p in ref_poses]
        queries = [night_frame(a) for a in enumerate(query_poses)]
    odo = odometry_for_model(list(query_poses), model, seed)
    return Dataset(refs, list(ref_poses), queries, list(query_poses), odo)


@dataclass(frozen=True)
class BenchmarkConfig:
    """Parameters of the standard synthetic benchmark (all config-file exposed)."""

    seed: int = 2016
    world_seed: int = 11
    extent: Tuple[float, float] = (7.0, 5.0)
    feature_scale: float = 1.0
    octaves: int = 3
    range_near: float = 0.5
    range_far: float = 5.0
    ref_nx: int = 6
    ref_ny: int = 5
    n_queries: int = 40
    step: float = 0.25
    margin: float = 0.6
    render_width: int = 96
    render_height: int = 48
    night: NightTransform = NightTransform(gain=0.35, gamma=1.4, noise_sigma=6.0,
                                           patch_count=3, patch_radius=5.0, patch_strength=25.0)
    noise_model: int = 1

    _KEYS = {
        "seed": int, "world_seed": int, "feature_scale": float, "octaves": int,
        "range_near": float, "range_far": float,
        "ref_nx": int, "ref_ny": int, "n_queries": int, "step": float, "margin": float,
        "render_width": int, "render_height": int, "noise_model": int,
    }
    _NIGHT_KEYS = {
        "night_gain": ("gain", float), "night_gamma": ("gamma", float),
        "night_noise_sigma": ("noise_sigma", float), "night_patch_count": ("patch_count", int),
        "night_patch_radius": ("patch_radius", float), "night_patch_strength": ("patch_strength", float),
    }

    @classmethod
    def from_mapping(cls, values) -> "BenchmarkConfig":
        kw = {k: conv(values[k]) for k, conv in cls._KEYS.items() if k in values}
        if "extent_x" in values or "extent_y" in values:
            d = cls().extent
            kw["extent"] = (float(values.get("extent_x", d[0])), float(values.get("extent_y", d[1])))
        night = {}
        for key, (attr, conv) in cls._NIGHT_KEYS.items():
            if key in values:
                night[attr] = conv(values[key])
        if str(values.get("night", "on")).lower() in ("off", "0", "false", "no"):
            kw["night"] = IDENTITY_NIGHT
        elif night:
            base = cls().night
            kw["night"] = NightTransform(**{**base.__dict__, **night})
        return cls(**kw)

    @property
    def world_spec(self) -> WorldSpec:
        return WorldSpec(seed=self.world_seed, extent=self.extent,
                         feature_scale=self.feature_scale, octaves=self.octaves)

    def reference_poses(self) -> List[Pose2D]:
        return reference_grid(self.extent, self.ref_nx, self.ref_ny)

    def query_poses(self) -> List[Pose2D]:
        m = self.margin
        bounds = (m, m, self.extent[0] - m, self.extent[1] - m)
        rng = np.random.default_rng([self.seed, STREAM_WANDER, 0])
        start = Pose2D(float(rng.uniform(bounds[0], bounds[2])), float(rng.uniform(bounds[1], bounds[3])),
                       float(rng.uniform(0, TWO_PI)))
        steps = wander_steps(start, self.n_queries - 1, self.step, bounds, self.seed)
        return integrate_trajectory(start, steps, NOISE_MODELS[0], rng).poses


def build_benchmark(cfg: BenchmarkConfig = BenchmarkConfig(), workers: int = 1) -> Dataset:
    world = generate_world(cfg.world_spec)
    return make_benchmark(world, cfg.reference_poses(), cfg.query_poses(), cfg.night,
                          NOISE_MODELS[cfg.noise_model], cfg.seed,
                          width=cfg.render_width, height=cfg.render_height,
                          ranges=default_ranges(cfg.render_height, cfg.range_near, cfg.range_far),
                          workers=workers)
