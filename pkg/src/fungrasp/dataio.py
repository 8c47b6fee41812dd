"""Rollout export for downstream imitation, cameras, and checkpoints.

Exports are JSONL (one line per frame after a schema-version header)
plus a manifest; everything numeric is serialized through Python float
repr, which round-trips float64 exactly. No pixels are rendered — the
export carries states, conditions, absolute action targets, and the 2D
affordance projections, so a renderer can be bolted on later without
touching the trainer.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Pose, invert_pose, quat_from_matrix, transform_point
from .policy import ARRAY_FIELDS, PolicyParams, unflatten_params

log = logging.getLogger(__name__)

__all__ = [
    "CameraModel",
    "CheckpointError",
    "ExportError",
    "project_affordance",
    "unproject",
    "in_frame",
    "look_at_camera",
    "default_cameras",
    "export_rollouts",
    "save_checkpoint",
    "load_checkpoint",
    "config_digest",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1
BEHIND_CAMERA_Z = 1e-6


class ExportError(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: intrinsics in pixels, extrinsic maps world->camera.

    Camera frame convention: +z forward, +x right, +y down, so
    u = fx * x / z + cx and v = fy * y / z + cy.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    extrinsic: Pose
    width: int = 256
    height: int = 256

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be > 0, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside image")

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "extrinsic": {"t": list(self.extrinsic.t), "r": list(self.extrinsic.r)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return cls(
            fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"],
            width=d.get("width", 256), height=d.get("height", 256),
            extrinsic=Pose(t=np.array(d["extrinsic"]["t"]), r=np.array(d["extrinsic"]["r"])),
        )


def project_affordance(cam: CameraModel, p_world):
    """Project a world point to (u, v, depth); None when behind the camera."""
    p_cam = transform_point(cam.extrinsic, p_world)
    z = float(p_cam[2])
    if z <= BEHIND_CAMERA_Z:
        return None
    u = cam.fx * p_cam[0] / z + cam.cx
    v = cam.fy * p_cam[1] / z + cam.cy
    return float(u), float(v), z


def unproject(cam: CameraModel, u: float, v: float, depth: float) -> np.ndarray:
    """Invert project_affordance at a known depth."""
    p_cam = np.array([(u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth])
    return transform_point(invert_pose(cam.extrinsic), p_cam)


def in_frame(cam: CameraModel, u: float, v: float) -> bool:
    return 0.0 <= u < cam.width and 0.0 <= v < cam.height


def look_at_camera(position, target, fx=210.0, fy=210.0, cx=128.0, cy=128.0, **kw) -> CameraModel:
    """Camera at `position` whose optical axis points at `target`.

    The image 'down' direction is chosen to have positive world -z
    component (cameras above the table look, well, down).
    """
    position = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - position
    forward = forward / np.linalg.norm(forward)
    world_down = np.array([0.0, 0.0, -1.0])
    right = np.cross(world_down, forward)
    if np.linalg.norm(right) < 1e-9:
        right = np.array([1.0, 0.0, 0.0])
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    # world->camera rotation: rows are the camera axes
    rot = np.stack([right, down, forward])
    r = quat_from_matrix(rot)
    t = -rot @ position
    return CameraModel(fx=fx, fy=fy, cx=cx, cy=cy, extrinsic=Pose(t=t, r=r), **kw)


def default_cameras() -> dict[str, CameraModel]:
    """Two diagonally placed desk cameras looking at the workspace center."""
    return {
        "cam_front_left": look_at_camera([0.55, 0.45, 0.45], [0.0, 0.0, 0.05]),
        "cam_front_right": look_at_camera([0.55, -0.45, 0.45], [0.0, 0.0, 0.05]),
    }


def config_digest(config_dict: dict) -> str:
    """Stable sha256 of a JSON-serializable config."""
    blob = json.dumps(config_dict, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _pose_dict(p: Pose) -> dict:
    return {"t": [float(v) for v in p.t], "r": [float(v) for v in p.r]}


def export_rollouts(episodes, cameras: dict[str, CameraModel], path, success_only: bool = False,
                    config: dict | None = None) -> dict:
    """Write per-frame JSONL plus a manifest JSON next to it.

    `episodes` are episode results carrying a RolloutRecord with its
    trajectory, the world affordance point, and the conditioned style.
    Action targets are absolute next-frame (t, r, q); the last frame
    targets itself.
    """
    path = Path(path)
    manifest_path = path.with_suffix(path.suffix + ".manifest.json")
    selected = [e for e in episodes if (e.record.success or not success_only)]
    n_frames = 0
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        with tmp.open("w") as fh:
            header = {"schema_version": SCHEMA_VERSION, "kind": "fungrasp-rollout-frames"}
            fh.write(json.dumps(header) + "\n")
            for ep in selected:
                traj = ep.record.trajectory
                if traj is None:
                    raise ExportError(f"episode {ep.index} has no retained trajectory")
                terms = ep.record.reward_terms
                poses = traj.poses
                horizon = len(poses) - 1
                cam_views = {}
                for name, cam in cameras.items():
                    proj = project_affordance(cam, ep.p_afford_world)
                    if proj is None:
                        cam_views[name] = None
                    else:
                        u, v, depth = proj
                        cam_views[name] = {
                            "u": u, "v": v, "depth": depth, "in_frame": in_frame(cam, u, v)
                        }
                for t in range(horizon + 1):
                    nxt = min(t + 1, horizon)
                    line = {
                        "episode": ep.index,
                        "frame": t,
                        "object": ep.object_name,
                        "s_r": _pose_dict(poses[t]),
                        "q": [float(v) for v in traj.joints[t]],
                        "target": {
                            **_pose_dict(poses[nxt]),
                            "q": [float(v) for v in traj.joints[nxt]],
                        },
                        "condition": {
                            "p_afford_world": [float(v) for v in ep.p_afford_world],
                            "style": traj.style_index,
                        },
                        "cameras": cam_views,
                        "success": bool(ep.record.success),
                        "reward": terms.as_dict() if terms is not None else None,
                    }
                    fh.write(json.dumps(line) + "\n")
                    n_frames += 1
        tmp.replace(path)
    except OSError as e:
        tmp.unlink(missing_ok=True)
        raise ExportError(f"export to {path} failed: {e}") from e
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "file": path.name,
        "episodes": len(selected),
        "frames": n_frames,
        "success_only": success_only,
        "n_success": sum(1 for e in selected if e.record.success),
        "config_digest": config_digest(config) if config is not None else None,
        "cameras": {name: cam.to_dict() for name, cam in cameras.items()},
    }
    manifest_path.write_text(json.dumps(manifest, indent=1))
    return manifest


def save_checkpoint(params: PolicyParams, meta: dict, path) -> None:
    """Versioned JSON checkpoint; floats round-trip bit-exactly."""
    payload = {
        "schema_version": SCHEMA_VERSION,
        "hand": meta.get("hand"),
        "style_count": params.style_count,
        "m_points": params.m_points,
        "joint_count": params.joint_count,
        "iteration": meta.get("iteration", 0),
        "rng": meta.get("rng", {}),
        "shapes": {f: list(getattr(params, f).shape) for f in ARRAY_FIELDS},
        "arrays": {f: [float(v) for v in getattr(params, f).ravel()] for f in ARRAY_FIELDS},
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path, expect_hand: str | None = None, expect_style_count: int | None = None,
                    expect_m_points: int | None = None) -> tuple[PolicyParams, dict]:
    """Load and validate a checkpoint; rejects shape/identity mismatches."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: cannot parse checkpoint ({e})") from e
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointError(
            f"{path}: schema_version {payload.get('schema_version')} != {SCHEMA_VERSION}"
        )
    for got, want, label in (
        (payload.get("hand"), expect_hand, "hand"),
        (payload.get("style_count"), expect_style_count, "style_count"),
        (payload.get("m_points"), expect_m_points, "m_points"),
    ):
        if want is not None and got != want:
            raise CheckpointError(f"{path}: checkpoint {label}={got!r}, configured {label}={want!r}")
    template = _params_template(payload)
    flat = []
    for f in ARRAY_FIELDS:
        shape = tuple(payload["shapes"][f])
        arr = np.array(payload["arrays"][f], dtype=float)
        if arr.size != int(np.prod(shape)):
            raise CheckpointError(f"{path}: array {f} has {arr.size} values, shape {shape}")
        flat.append(arr)
    params = unflatten_params(template, np.concatenate(flat))
    meta = {
        "hand": payload.get("hand"),
        "iteration": payload.get("iteration", 0),
        "rng": payload.get("rng", {}),
    }
    return params, meta


def _params_template(payload: dict) -> PolicyParams:
    try:
        kw = {f: np.zeros(tuple(payload["shapes"][f])) for f in ARRAY_FIELDS}
    except KeyError as e:
        raise CheckpointError(f"checkpoint missing shape for {e}") from e
    return PolicyParams(
        **kw,
        m_points=int(payload["m_points"]),
        style_count=int(payload["style_count"]),
        joint_count=int(payload["joint_count"]),
    )
