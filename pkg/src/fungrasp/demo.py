"""Demonstration representation and the one-shot editing machinery.

A demonstration stores the end-effector trajectory in the *object* frame
plus the reference hand joints, so randomizing the object pose moves the
whole trajectory rigidly with the object. An edit is a single action:
a rigid wrist offset applied in the object frame, a joint residual, and
a scale on the conditioned style's canonical joints.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import AxisAngle, Pose, axis_angle_to_quat, compose_pose
from .hand import HandSpec, clamp_to_limits

log = logging.getLogger(__name__)

__all__ = [
    "DemoError",
    "Demonstration",
    "EditBounds",
    "EditAction",
    "EditedTrajectory",
    "load_demo",
    "save_demo",
    "target_joint_config",
    "interpolation_fraction",
    "interpolate_joints",
    "edited_joint_trajectory",
    "edit_wrist",
    "disturb_style",
    "STATIC_JOINT_TOL",
]

STATIC_JOINT_TOL = 1e-9
LIMIT_SLACK = 1e-6


class DemoError(ValueError):
    """Raised for malformed demonstration files."""


@dataclass(frozen=True)
class Demonstration:
    """End-effector-in-object-frame poses and reference joints, t = 0..T_D."""

    poses: tuple[Pose, ...]
    joints: np.ndarray          # (T_D + 1, J)
    grasp_index: int            # T_l, frame at which the reference grasp closes

    def __post_init__(self):
        if len(self.poses) != self.joints.shape[0]:
            raise DemoError("pose and joint sequences disagree in length")
        if self.horizon < 2:
            raise DemoError(f"demonstration needs T_D >= 2, got {self.horizon}")
        if not (0 < self.grasp_index <= self.horizon):
            raise DemoError(f"grasp index {self.grasp_index} outside (0, {self.horizon}]")
        self.joints.setflags(write=False)
        object.__setattr__(self, "pose_t", np.stack([p.t for p in self.poses]))
        object.__setattr__(self, "pose_r", np.stack([p.r for p in self.poses]))

    @property
    def horizon(self) -> int:
        """T_D: index of the last frame."""
        return len(self.poses) - 1

    @property
    def joint_count(self) -> int:
        return self.joints.shape[1]


@dataclass(frozen=True)
class EditBounds:
    """Action bounds enforced by the policy's squashing map."""

    b_t: float = 0.10          # meters per translation axis
    b_r: float = 0.8           # max axis-angle norm, radians
    b_q: float = 0.3           # radians per joint residual
    k_min: float = 0.6
    k_max: float = 1.4

    def intervals(self, joint_count: int) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) per action dimension, layout [dt(3), dr(3), dq(J), k].

        The rotation components are bounded per-axis by b_r/sqrt(3) so the
        Euclidean norm of the axis-angle vector never exceeds b_r.
        """
        br = self.b_r / np.sqrt(3.0)
        lo = np.concatenate([
            np.full(3, -self.b_t), np.full(3, -br), np.full(joint_count, -self.b_q), [self.k_min],
        ])
        hi = np.concatenate([
            np.full(3, self.b_t), np.full(3, br), np.full(joint_count, self.b_q), [self.k_max],
        ])
        return lo, hi

    def action_dim(self, joint_count: int) -> int:
        return 7 + joint_count


@dataclass(frozen=True)
class EditAction:
    """One demonstration edit: wrist offset (dt, dr), joint residual, scale."""

    dt: np.ndarray             # (3,) meters
    dr: AxisAngle
    dq: np.ndarray             # (J,) radians
    k: float

    def __post_init__(self):
        object.__setattr__(self, "dt", np.asarray(self.dt, dtype=float))
        object.__setattr__(self, "dq", np.asarray(self.dq, dtype=float))

    @classmethod
    def identity(cls, joint_count: int) -> "EditAction":
        return cls(dt=np.zeros(3), dr=AxisAngle(np.zeros(3)), dq=np.zeros(joint_count), k=1.0)

    @classmethod
    def from_vector(cls, a, joint_count: int) -> "EditAction":
        a = np.asarray(a, dtype=float)
        if a.shape != (7 + joint_count,):
            raise DemoError(f"action vector must have dim {7 + joint_count}, got {a.shape}")
        return cls(dt=a[:3], dr=AxisAngle(a[3:6]), dq=a[6:6 + joint_count], k=float(a[-1]))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.dt, self.dr.v, self.dq, [self.k]])

    def pose(self) -> Pose:
        return Pose(t=self.dt, r=axis_angle_to_quat(self.dr))


@dataclass(frozen=True)
class EditedTrajectory:
    """Executed world-frame trajectory plus the conditioning it answered."""

    pose_t: np.ndarray         # (T_D + 1, 3) ee translations, world frame
    pose_r: np.ndarray         # (T_D + 1, 4) ee quaternions
    joints: np.ndarray         # (T_D + 1, J), clamped
    style_index: int
    p_afford: np.ndarray       # object frame
    q_star: np.ndarray

    @property
    def poses(self) -> tuple[Pose, ...]:
        return tuple(Pose(t=t, r=r) for t, r in zip(self.pose_t, self.pose_r))


def load_demo(path, spec: HandSpec) -> Demonstration:
    """Parse a demo JSON file for a given hand."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DemoError(f"{path}: not valid JSON ({e})") from e
    if data.get("hand") != spec.name:
        raise DemoError(f"{path}: demo recorded for hand {data.get('hand')!r}, configured hand is {spec.name!r}")
    frames = data.get("frames", [])
    if len(frames) < 3:
        raise DemoError(f"{path}: needs at least 3 frames (T_D >= 2), got {len(frames)}")
    poses, joints = [], []
    for i, fr in enumerate(frames):
        try:
            poses.append(Pose(t=np.array(fr["p"]["t"], float), r=np.array(fr["p"]["r"], float)))
        except (KeyError, ValueError) as e:
            raise DemoError(f"{path}: frames[{i}].p: {e}") from e
        q = np.array(fr.get("q", []), float)
        if q.shape != (spec.joint_count,):
            raise DemoError(
                f"{path}: frames[{i}].q has dim {q.shape[0] if q.ndim == 1 else q.shape}, "
                f"hand has J={spec.joint_count}"
            )
        joints.append(q)
    joints = np.array(joints)
    over = np.maximum(joints - spec.limits_hi, spec.limits_lo - joints).max()
    if over > LIMIT_SLACK:
        raise DemoError(f"{path}: joints exceed limits by {over:.2e} (> {LIMIT_SLACK})")
    if over > 0:
        log.warning("%s: joints marginally out of limits (%.2e), clamping", path, over)
        joints = clamp_to_limits(spec, joints)
    return Demonstration(poses=tuple(poses), joints=joints, grasp_index=int(data["T_l"]))


def save_demo(demo: Demonstration, hand_name: str, path) -> None:
    payload = {
        "schema": "fungrasp-demo-v1",
        "hand": hand_name,
        "T_l": demo.grasp_index,
        "frames": [
            {"p": {"t": list(p.t), "r": list(p.r)}, "q": list(q)}
            for p, q in zip(demo.poses, demo.joints)
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def target_joint_config(style_q, k: float, dq, spec: HandSpec) -> np.ndarray:
    """Edited target joints q* = clamp(k * style_q + dq)."""
    return clamp_to_limits(spec, k * np.asarray(style_q, dtype=float) + np.asarray(dq, dtype=float))


def interpolation_fraction(q0, qT, q_star):
    """Per-joint fraction f = (q* - q0) / (qT - q0) plus a static mask.

    Joints the reference never moves (|qT - q0| < STATIC_JOINT_TOL) get
    f = 0 and static[j] = True; interpolate_joints ramps those joints
    linearly instead. f is deliberately not clamped: extrapolation past
    the reference excursion is allowed, joint limits apply later.
    """
    q0 = np.asarray(q0, dtype=float)
    qT = np.asarray(qT, dtype=float)
    q_star = np.asarray(q_star, dtype=float)
    span = qT - q0
    static = np.abs(span) < STATIC_JOINT_TOL
    f = np.zeros_like(q0)
    f[~static] = (q_star[~static] - q0[~static]) / span[~static]
    return f, static


def interpolate_joints(demo: Demonstration, f, t: int, q_star, spec: HandSpec) -> np.ndarray:
    """Joint vector at frame t of the edited trajectory (clamped)."""
    if not (0 <= t <= demo.horizon):
        raise DemoError(f"frame {t} outside 0..{demo.horizon}")
    return edited_joint_trajectory(demo, q_star, spec)[t]


def edited_joint_trajectory(demo: Demonstration, q_star, spec: HandSpec) -> np.ndarray:
    """All frames of the edited joint trajectory, clamped to limits.

    Up to the grasp frame, moving joints follow
    q_t = q0 + f * (q_t_ref - q0); after it they hold q* plus the
    reference's post-grasp deltas scaled by f, which keeps the lift phase
    consistent with the closure. Static joints ramp linearly from q0 to
    q* over the approach and hold q* afterwards.
    """
    q_star = np.asarray(q_star, dtype=float)
    q0 = demo.joints[0]
    tl = demo.grasp_index
    f, static = interpolation_fraction(q0, demo.joints[tl], q_star)
    ts = np.arange(demo.horizon + 1)
    out = np.empty_like(demo.joints)
    pre = ts <= tl
    out[pre] = q0 + f * (demo.joints[pre] - q0)
    out[~pre] = q_star + f * (demo.joints[~pre] - demo.joints[tl])
    if static.any():
        ramp = np.minimum(ts / tl, 1.0)[:, None]
        static_traj = q0 + ramp * (q_star - q0)
        out[:, static] = static_traj[:, static]
    return clamp_to_limits(spec, out)


def edit_wrist_arrays(demo: Demonstration, action: EditAction, object_pose: Pose):
    """Vectorized edit_wrist: ((T_D + 1, 3) translations, (T_D + 1, 4) quats)."""
    from .geometry import quat_mul, quat_normalize, quat_rotate

    prefix = compose_pose(object_pose, action.pose())
    t = prefix.t + quat_rotate(prefix.r, demo.pose_t)
    r = quat_normalize(quat_mul(prefix.r, demo.pose_r))
    return t, r


def edit_wrist(demo: Demonstration, action: EditAction, object_pose: Pose) -> list[Pose]:
    """World-frame end-effector poses: object_pose o dT o p_t per frame.

    The edit is a single rigid offset in the object frame applied to the
    whole object-centric trajectory, so the approach shape is preserved.
    """
    t, r = edit_wrist_arrays(demo, action, object_pose)
    return [Pose(t=ti, r=ri) for ti, ri in zip(t, r)]


def disturb_style(style_q, sigma: float, rng: np.random.Generator, spec: HandSpec) -> np.ndarray:
    """Gaussian joint perturbation of a canonical style, clamped to limits.

    Training-time exploration aid; sigma = 0 returns the input unchanged.
    """
    if sigma < 0:
        raise DemoError(f"sigma must be >= 0, got {sigma}")
    style_q = np.asarray(style_q, dtype=float)
    if sigma == 0.0:
        return style_q.copy()
    return clamp_to_limits(spec, style_q + rng.normal(0.0, sigma, style_q.shape))
