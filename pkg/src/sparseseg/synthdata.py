"""Synthetic sparse walking-human point clouds.

A six-part stick figure (sphere head, box torso, capsule arms and legs) walks
along +x with sinusoidal limb swing. Each frame samples a fixed number of
points on the visible part surfaces, in proportion to surface area, and adds
Gaussian noise. Every part except the torso drops out for runs of frames
driven by a two-state Markov chain whose stationary drop rate equals
``part_dropout_prob``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .pointcloud import FineLabel, Frame, Sequence

HEAD, CHEST, LEFT_ARM, RIGHT_ARM, LEFT_LEG, RIGHT_LEG = (int(p) for p in FineLabel)
DROPPABLE = (HEAD, LEFT_ARM, RIGHT_ARM, LEFT_LEG, RIGHT_LEG)

# mean length (frames) of a dropout run
MEAN_DROP_RUN = 2.0


@dataclass(frozen=True)
class GenConfig:
    n_frames: int = 100
    points_per_frame: int = 64
    gait_period_frames: float = 20.0
    noise_sigma: float = 0.02
    part_dropout_prob: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.points_per_frame < 6:
            raise ValueError("points_per_frame must be >= 6")
        if not 0.0 <= self.part_dropout_prob <= 1.0:
            raise ValueError("part_dropout_prob must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.gait_period_frames <= 0:
            raise ValueError("gait_period_frames must be positive")


@dataclass(frozen=True)
class Body:
    """Rigid body-part dimensions in meters, fixed for a subject."""

    torso_half: tuple[float, float, float] = (0.11, 0.18, 0.30)
    head_radius: float = 0.11
    arm_radius: float = 0.045
    arm_length: float = 0.65
    leg_radius: float = 0.065
    leg_length: float = 0.85
    hip_spacing: float = 0.10
    gap: float = 0.03
    leg_swing: float = math.radians(25.0)
    arm_swing: float = math.radians(20.0)
    speed: float = 0.04  # meters per frame
    phase0: float = 0.0

    @classmethod
    def sample(cls, rng: np.random.Generator) -> "Body":
        s = rng.uniform(0.92, 1.08)
        th = cls.torso_half
        return cls(
            torso_half=(th[0] * s, th[1] * s * rng.uniform(0.95, 1.05), th[2] * s),
            head_radius=cls.head_radius * s,
            arm_length=cls.arm_length * s * rng.uniform(0.92, 1.08),
            leg_length=cls.leg_length * s * rng.uniform(0.92, 1.08),
            speed=rng.uniform(0.03, 0.05),
            phase0=rng.uniform(0.0, 2 * math.pi),
        )


@dataclass(frozen=True)
class SkeletonPose:
    """Part geometry at one instant.

    ``segments`` holds (start, end, radius) for the four limbs keyed by label;
    the torso is an axis-aligned box and the head a sphere.
    """

    torso_center: np.ndarray
    torso_half: np.ndarray
    head_center: np.ndarray
    head_radius: float
    segments: dict
    phase: float


def pose_at(body: Body, k: int, period: float) -> SkeletonPose:
    phase = (body.phase0 + 2 * math.pi * k / period) % (2 * math.pi)
    hx, hy, hz = body.torso_half
    hip_z = body.leg_length + body.leg_radius
    torso_bottom = hip_z + body.leg_radius + body.gap
    torso_center = np.array([body.speed * k, 0.0, torso_bottom + hz])
    head_center = torso_center + np.array([0.0, 0.0, hz + body.gap + body.head_radius])

    def limb(root, angle, length):
        direction = np.array([math.sin(angle), 0.0, -math.cos(angle)])
        return root, root + length * direction

    swing = math.sin(phase)
    shoulder_z = torso_center[2] + hz - 0.05
    arm_y = hy + body.arm_radius + body.gap
    x0 = torso_center[0]
    segments = {}
    for label, side, leg_sign in ((LEFT_LEG, 1.0, 1.0), (RIGHT_LEG, -1.0, -1.0)):
        a, b = limb(np.array([x0, side * body.hip_spacing, hip_z]), leg_sign * body.leg_swing * swing, body.leg_length)
        segments[label] = (a, b, body.leg_radius)
    # each arm swings against the leg on its own side
    for label, side, arm_sign in ((LEFT_ARM, 1.0, -1.0), (RIGHT_ARM, -1.0, 1.0)):
        a, b = limb(np.array([x0, side * arm_y, shoulder_z]), arm_sign * body.arm_swing * swing, body.arm_length)
        segments[label] = (a, b, body.arm_radius)
    return SkeletonPose(torso_center, np.array(body.torso_half), head_center, body.head_radius, segments, phase)


def part_areas(pose: SkeletonPose) -> np.ndarray:
    areas = np.zeros(len(FineLabel))
    areas[HEAD] = 4 * math.pi * pose.head_radius**2
    hx, hy, hz = pose.torso_half
    areas[CHEST] = 8 * (hx * hy + hy * hz + hx * hz)
    for label, (a, b, r) in pose.segments.items():
        areas[label] = 2 * math.pi * r * float(np.linalg.norm(b - a))
    return areas


def _sample_sphere(rng, center, radius, m):
    v = rng.normal(size=(m, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return center + radius * v


def _sample_box(rng, center, half, m):
    hx, hy, hz = half
    # faces: ±x (area hy*hz), ±y (hx*hz), ±z (hx*hy)
    face_area = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])
    faces = rng.choice(6, size=m, p=face_area / face_area.sum())
    u = rng.uniform(-1.0, 1.0, size=(m, 3)) * half
    axis = faces // 2
    sign = np.where(faces % 2 == 0, 1.0, -1.0)
    u[np.arange(m), axis] = sign * half[axis]
    return center + u


def _perp_basis(d):
    d = d / np.linalg.norm(d)
    helper = np.array([0.0, 1.0, 0.0]) if abs(d[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(d, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(d, u)


def _sample_capsule_side(rng, a, b, r, m):
    t = rng.uniform(0.0, 1.0, size=(m, 1))
    theta = rng.uniform(0.0, 2 * math.pi, size=(m, 1))
    u, v = _perp_basis(b - a)
    return a + t * (b - a) + r * (np.cos(theta) * u + np.sin(theta) * v)


def _allocate(total: int, weights: np.ndarray) -> np.ndarray:
    quotas = total * weights / weights.sum()
    counts = np.floor(quotas).astype(int)
    rest = total - counts.sum()
    order = np.lexsort((np.arange(len(quotas)), -(quotas - counts)))
    counts[order[:rest]] += 1
    return counts


def surface_distance(pose: SkeletonPose, label: int, points) -> np.ndarray:
    """Unsigned distance from each point to the surface of one body part."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if label == HEAD:
        return np.abs(np.linalg.norm(p - pose.head_center, axis=1) - pose.head_radius)
    if label == CHEST:
        q = np.abs(p - pose.torso_center) - pose.torso_half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return np.abs(outside + inside)
    a, b, r = pose.segments[label]
    ab = b - a
    t = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.abs(np.linalg.norm(p - closest, axis=1) - r)


def _dropout_mask(rng, n_frames: int, p: float) -> np.ndarray:
    """Boolean (n_frames, 6) mask of dropped parts; the torso never drops."""
    dropped = np.zeros((n_frames, len(FineLabel)), dtype=bool)
    if p <= 0.0:
        return dropped
    if p >= 1.0:
        dropped[:, list(DROPPABLE)] = True
        return dropped
    recover = 1.0 / MEAN_DROP_RUN
    start = min(1.0, p * recover / (1.0 - p))
    for part in DROPPABLE:
        state = rng.uniform() < p
        draws = rng.uniform(size=n_frames)
        for k in range(n_frames):
            if k > 0:
                state = (draws[k] >= recover) if state else (draws[k] < start)
            dropped[k, part] = state
    return dropped


def generate(cfg: GenConfig, subject_id: str = "s000", body: Body | None = None) -> Sequence:
    rng = np.random.default_rng(cfg.seed)
    if body is None:
        body = Body.sample(rng)
    dropped = _dropout_mask(rng, cfg.n_frames, cfg.part_dropout_prob)
    frames = []
    for k in range(cfg.n_frames):
        pose = pose_at(body, k, cfg.gait_period_frames)
        areas = np.where(dropped[k], 0.0, part_areas(pose))
        counts = _allocate(cfg.points_per_frame, areas)
        chunks, labels = [], []
        for label, m in enumerate(counts):
            if m == 0:
                continue
            if label == HEAD:
                pts = _sample_sphere(rng, pose.head_center, pose.head_radius, m)
            elif label == CHEST:
                pts = _sample_box(rng, pose.torso_center, pose.torso_half, m)
            else:
                a, b, r = pose.segments[label]
                pts = _sample_capsule_side(rng, a, b, r, m)
            chunks.append(pts)
            labels.append(np.full(m, label))
        pos = np.concatenate(chunks)
        lab = np.concatenate(labels)
        if cfg.noise_sigma > 0:
            pos = pos + rng.normal(scale=cfg.noise_sigma, size=pos.shape)
        # radar returns arrive unordered
        perm = rng.permutation(len(lab))
        frames.append(Frame(pos[perm], lab[perm], k))
    return Sequence(frames, subject_id)


def subject_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


def generate_dataset(cfg: GenConfig, n_subjects: int) -> list[Sequence]:
    if n_subjects < 1:
        raise ValueError("n_subjects must be >= 1")
    return [
        generate(replace(cfg, seed=subject_seed(cfg.seed, i)), subject_id=f"s{i:03d}")
        for i in range(n_subjects)
    ]


def dropout_mask(cfg: GenConfig) -> np.ndarray:
    """Dropped-part mask that :func:`generate` uses for ``cfg`` (for diagnostics)."""
    rng = np.random.default_rng(cfg.seed)
    Body.sample(rng)
    return _dropout_mask(rng, cfg.n_frames, cfg.part_dropout_prob)
