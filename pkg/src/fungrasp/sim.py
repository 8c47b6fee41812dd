"""Quasi-static rollout of an edited trajectory against one object.

There is no rigid-body dynamics here: the object never moves, contacts
are sphere-vs-cloud proximity tests, and "did the grasp work" is an
epsilon-perturbed force-closure feasibility check at the grasp frame.
That trades the lift test a physics engine would run for something
deterministic, fast, and checkable against analytic grasps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .demo import Demonstration, EditAction, edited_joint_trajectory, disturb_style, target_joint_config
from .geometry import Pose, axis_angle_to_quat, quat_rotate, transform_point, transform_points
from .hand import HandFrames, HandSpec, Style, classify_style, forward_kinematics_batch, sphere_metadata
from .objects import AffordanceDistribution, ObjectModel, sample_affordance_index

log = logging.getLogger(__name__)

__all__ = [
    "SimParams",
    "EnvCondition",
    "EnvState",
    "Contact",
    "ContactError",
    "RolloutRecord",
    "reset_env",
    "detect_contacts",
    "style_contact_point",
    "check_table_collision",
    "grasp_success",
    "feasible_combination",
    "rollout",
]


class ContactError(ValueError):
    """Raised when contact geometry is degenerate (non-finite normals)."""


@dataclass(frozen=True)
class SimParams:
    delta_c: float = 0.005        # contact shell beyond the sphere radius, meters
    table_tol: float = 0.002      # table collision slack, meters
    mu: float = 0.5               # friction coefficient
    eta: float = 0.2              # load perturbation scale (fraction of gravity)
    crush_factor: float = 1.5     # fail if signed penetration exceeds this x radius


@dataclass(frozen=True)
class EnvCondition:
    """What the episode asks for: where to grasp and in which style."""

    p_afford: np.ndarray          # (3,), object frame
    style_index: int
    q_style_used: np.ndarray      # (J,), disturbed during training
    contact_mask: tuple[int, ...]


@dataclass
class EnvState:
    obj: ObjectModel
    object_pose: Pose
    condition: EnvCondition
    _cloud_cache: tuple | None = field(default=None, repr=False, compare=False)

    def world_cloud(self):
        """Object points and normals in the world frame (cached)."""
        if self._cloud_cache is None:
            pts = transform_points(self.object_pose, self.obj.points)
            nrm = quat_rotate(self.object_pose.r, self.obj.normals)
            self._cloud_cache = (pts, nrm)
        return self._cloud_cache


@dataclass(frozen=True)
class Contact:
    finger: int
    point: np.ndarray             # matched cloud point, world frame
    normal: np.ndarray            # outward surface normal at that point, world frame
    penetration: float            # max(0, radius - distance), meters


@dataclass
class RolloutRecord:
    success: bool
    d_series: np.ndarray          # (T_D + 1,) affordance-to-contact-centroid distance
    d_min: float
    d_final: float
    q_final: np.ndarray
    q_star: np.ndarray
    contacts_at_grasp: list[Contact]
    executed_style: int
    table_collision: bool
    crushed: bool
    obj_bb: float
    # canonical joints of the conditioned style; the style-consistency
    # reward measures deviation from this intention
    q_style_canonical: np.ndarray | None = None
    failure_reason: str | None = None
    reward_terms: object | None = None   # populated by the reward engine
    trajectory: object | None = None     # EditedTrajectory, kept for export


def reset_env(
    obj: ObjectModel,
    dist: AffordanceDistribution,
    styles: list[Style],
    rng: np.random.Generator,
    train_mode: bool,
    *,
    spec: HandSpec,
    square_half: float = 0.25,
    sigma_style: float = 0.05,
) -> EnvState:
    """Randomize object pose and sample the episode's conditioning.

    The rng call order below is part of the determinism contract:
    x, y, yaw, affordance index, style index, then (training only) the
    style disturbance.
    """
    x = rng.uniform(-1.0, 1.0) * square_half
    y = rng.uniform(-1.0, 1.0) * square_half
    yaw_draw = rng.uniform(0.0, 2.0 * np.pi)
    yaw = yaw_draw if square_half > 0 else 0.0
    pose = Pose(t=np.array([x, y, 0.0]), r=axis_angle_to_quat(np.array([0.0, 0.0, yaw])))
    p_afford = obj.points[sample_affordance_index(dist, rng)].copy()
    style_index = int(rng.integers(len(styles)))
    style = styles[style_index]
    if train_mode and sigma_style > 0:
        q_used = disturb_style(style.q_canonical, sigma_style, rng, spec)
    else:
        q_used = style.q_canonical.copy()
    return EnvState(
        obj=obj,
        object_pose=pose,
        condition=EnvCondition(
            p_afford=p_afford,
            style_index=style_index,
            q_style_used=q_used,
            contact_mask=style.contact_mask,
        ),
    )


def _nearest(centers: np.ndarray, pts: np.ndarray):
    """Nearest cloud point per row of centers: (indices, distances)."""
    d2 = (
        (centers**2).sum(axis=1)[:, None]
        + (pts**2).sum(axis=1)[None, :]
        - 2.0 * centers @ pts.T
    )
    idx = d2.argmin(axis=1)
    d = np.sqrt(np.maximum(d2[np.arange(len(idx)), idx], 0.0))
    return idx, d


def _select_contacts(dist, nearest_idx, pts, nrm, radii, finger_index, delta_c):
    """Per finger, the deepest sphere-vs-cloud contact within the shell."""
    contacts = []
    depth = radii - dist
    hits = dist <= radii + delta_c
    for f in np.unique(finger_index):
        cand = np.where(hits & (finger_index == f))[0]
        if cand.size == 0:
            continue
        best = cand[np.argmax(depth[cand])]
        j = nearest_idx[best]
        contacts.append(
            Contact(
                finger=int(f),
                point=pts[j].copy(),
                normal=nrm[j].copy(),
                penetration=float(max(0.0, depth[best])),
            )
        )
    return contacts


def detect_contacts(frames: HandFrames, env: EnvState, delta_c: float = 0.005) -> list[Contact]:
    """Sphere-vs-cloud contacts, one (deepest) per finger."""
    pts, nrm = env.world_cloud()
    idx, d = _nearest(frames.centers, pts)
    return _select_contacts(d, idx, pts, nrm, frames.radii, frames.finger_index, delta_c)


def style_contact_point(frames: HandFrames, mask) -> np.ndarray:
    """Mean world position of the mask fingers' fingertips."""
    mask = list(mask)
    if not mask:
        raise ValueError("contact mask is empty")
    return frames.fingertips[mask].mean(axis=0)


def check_table_collision(frames: HandFrames, tol: float = 0.002) -> bool:
    """True when any collision sphere reaches the table plane z = 0.

    tol is a conservative margin: a sphere counts as colliding when its
    center is within tol of tangency (z < radius + tol), so grazing
    passes are flagged rather than forgiven.
    """
    return bool(np.any(frames.centers[:, 2] < frames.radii + tol))


def feasible_combination(generators: np.ndarray, load: np.ndarray, tol: float = 1e-9) -> bool:
    """Phase-1 simplex feasibility of  generators @ alpha = load,  alpha >= 0.

    Small and self-contained (problems here are 6 rows x <= ~30 columns).
    Bland's rule prevents cycling; returns True when the artificial
    objective can be driven to ~0.
    """
    w = np.asarray(generators, dtype=float)
    b = np.asarray(load, dtype=float).copy()
    m, n = w.shape
    a = np.array(w)
    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = a
    tab[:m, n : n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[m, :n] = -a.sum(axis=0)
    tab[m, -1] = -b.sum()
    basis = list(range(n, n + m))
    for _ in range(1000):
        enter = -1
        for j in range(n + m):
            if tab[m, j] < -tol:
                enter = j
                break
        if enter < 0:
            break
        col = tab[:m, enter]
        ratios = np.full(m, np.inf)
        pos = col > 1e-11
        ratios[pos] = tab[:m, -1][pos] / col[pos]
        if not np.isfinite(ratios).any():
            return False
        best = ratios.min()
        ties = [i for i in range(m) if np.isfinite(ratios[i]) and ratios[i] - best <= 1e-12]
        leave = min(ties, key=lambda i: basis[i])
        tab[leave] /= tab[leave, enter]
        for r in range(m + 1):
            if r != leave and tab[r, enter] != 0.0:
                tab[r] -= tab[r, enter] * tab[leave]
        basis[leave] = enter
    return bool(tab[m, -1] >= -tol)


def _tangent_basis(n: np.ndarray):
    ref = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    t1 = np.cross(n, ref)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return t1, t2


def wrench_generators(contacts: list[Contact], env: EnvState, mu: float) -> np.ndarray:
    """6 x (4 * n_contacts) friction-pyramid edge wrenches.

    Forces point into the surface (along -normal); torques are taken
    about the contact centroid and normalized by obj_bb / 2 so force and
    torque rows share a scale.
    """
    pts = np.array([c.point for c in contacts])
    normals = np.array([c.normal for c in contacts])
    if not np.all(np.isfinite(normals)) or not np.all(np.isfinite(pts)):
        raise ContactError("non-finite contact geometry")
    center = pts.mean(axis=0)
    scale = env.obj.obj_bb / 2.0
    cols = []
    for p, n_out in zip(pts, normals):
        n_in = -n_out
        t1, t2 = _tangent_basis(n_in)
        for t in (t1, -t1, t2, -t2):
            f = n_in + mu * t
            tq = np.cross(p - center, f) / scale
            cols.append(np.concatenate([f, tq]))
    return np.array(cols).T


def grasp_success(
    contacts: list[Contact],
    env: EnvState,
    mu: float = 0.5,
    eta: float = 0.2,
    *,
    table_collision: bool = False,
) -> bool:
    """Quasi-static grasp test at the grasp frame.

    Requires (a) at least two distinct contact-mask fingers in contact,
    (b) friction-pyramid feasibility of the gravity load and of six
    perturbed loads (+-eta along each force axis), torques about the
    contact centroid, and (c) no table collision.
    """
    if table_collision:
        return False
    mask = set(env.condition.contact_mask)
    mask_fingers = {c.finger for c in contacts if c.finger in mask}
    if len(mask_fingers) < 2:
        return False
    gens = wrench_generators(contacts, env, mu)
    center = np.array([c.point for c in contacts]).mean(axis=0)
    scale = env.obj.obj_bb / 2.0
    g_dir = np.array([0.0, 0.0, -1.0])
    obj_center = transform_point(env.object_pose, env.obj.centroid)
    w_gravity = np.concatenate([g_dir, np.cross(obj_center - center, g_dir) / scale])
    loads = [-w_gravity]
    for axis in range(3):
        for sign in (1.0, -1.0):
            pert = np.zeros(6)
            pert[axis] = sign * eta
            loads.append(-(w_gravity + pert))
    return all(feasible_combination(gens, b) for b in loads)


def rollout(
    env: EnvState,
    demo: Demonstration,
    action: EditAction,
    spec: HandSpec,
    styles: list[Style],
    params: SimParams = SimParams(),
) -> RolloutRecord:
    """Execute one edited trajectory; pure function of its inputs."""
    from .demo import EditedTrajectory, edit_wrist_arrays

    cond = env.condition
    q_star = target_joint_config(cond.q_style_used, action.k, action.dq, spec)
    joints = edited_joint_trajectory(demo, q_star, spec)
    wrist_t, wrist_r = edit_wrist_arrays(demo, action, env.object_pose)
    centers, tips = forward_kinematics_batch(spec, wrist_t, wrist_r, joints)
    radii, finger_index, _ = sphere_metadata(spec)
    tl = demo.grasp_index

    p_afford_world = transform_point(env.object_pose, cond.p_afford)
    centroid_series = tips[:, list(cond.contact_mask)].mean(axis=1)
    d_series = np.linalg.norm(centroid_series - p_afford_world, axis=1)

    pts, nrm = env.world_cloud()
    t_count, k_count = centers.shape[0], centers.shape[1]
    flat = centers.reshape(-1, 3)
    # crush and contacts only need spheres near the cloud: quick-reject
    # everything outside the cloud's bounding box grown by radius + shell
    margin = radii.max() + params.delta_c + 1e-9
    lo = pts.min(axis=0) - margin
    hi = pts.max(axis=0) + margin
    near = np.all((flat >= lo) & (flat <= hi), axis=1)
    near = near.reshape(t_count, k_count)
    near[tl, :] = True  # the grasp frame always gets exact contacts
    flat_near = flat[near.ravel()]
    dist = np.full((t_count, k_count), np.inf)
    gap = np.full((t_count, k_count), np.inf)
    idx = np.zeros((t_count, k_count), dtype=int)
    if flat_near.shape[0]:
        idx_n, d_n = _nearest(flat_near, pts)
        gap_n = np.einsum("ij,ij->i", flat_near - pts[idx_n], nrm[idx_n])
        dist[near] = d_n
        gap[near] = gap_n
        idx[near] = idx_n
    # crush: a sphere center driven past the surface by more than
    # (crush_factor - 1) x radius during the approach
    crushed = bool(np.any(gap[:tl] < radii * (1.0 - params.crush_factor)))

    contacts = _select_contacts(
        dist[tl], idx[tl], pts, nrm, radii, finger_index, params.delta_c
    )
    table_collision = bool(np.any(centers[tl][:, 2] < radii + params.table_tol))

    failure_reason = None
    if crushed:
        success = False
        failure_reason = "crush"
    else:
        try:
            success = grasp_success(
                contacts, env, params.mu, params.eta, table_collision=table_collision
            )
            if not success:
                failure_reason = "table_collision" if table_collision else "no_closure"
        except ContactError as e:
            success = False
            failure_reason = f"degenerate_contacts: {e}"
            log.warning("episode failed: %s", e)

    q_final = joints[-1]
    record = RolloutRecord(
        success=success,
        d_series=d_series,
        d_min=float(d_series.min()),
        d_final=float(d_series[-1]),
        q_final=q_final,
        q_star=q_star,
        contacts_at_grasp=contacts,
        executed_style=classify_style(spec, q_final, styles),
        table_collision=table_collision,
        crushed=crushed,
        obj_bb=env.obj.obj_bb,
        q_style_canonical=styles[cond.style_index].q_canonical.copy(),
        failure_reason=failure_reason,
        trajectory=EditedTrajectory(
            pose_t=wrist_t,
            pose_r=wrist_r,
            joints=joints,
            style_index=cond.style_index,
            p_afford=cond.p_afford,
            q_star=q_star,
        ),
    )
    return record
