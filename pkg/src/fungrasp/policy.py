"""Conditioned one-step stochastic policy with hand-written gradients.

The network is deliberately small and fully explicit in numpy: a
pointwise MLP with channel-wise max pooling encodes the object cloud,
an actor trunk maps the concatenated observation to a Gaussian action
head (state-independent log-std), and a separate value path shares no
trunk parameters with the actor. Reverse-mode gradients are written out
by hand and gated against finite differences by the trainer.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .demo import EditAction, EditBounds
from .geometry import compose_pose
from .hand import HandSpec, Style
from .objects import ObjectModel, farthest_point_sample
from .sim import EnvState

__all__ = [
    "PolicyError",
    "ObservationVector",
    "ObsBatch",
    "PolicyParams",
    "ActionSample",
    "encode_observation",
    "stack_observations",
    "init_params",
    "policy_forward",
    "policy_backward",
    "zeros_like_params",
    "flatten_params",
    "unflatten_params",
    "squash",
    "unsquash",
    "gaussian_log_prob",
    "sample_action",
    "action_log_prob",
    "entropy",
    "LOG_STD_MIN",
    "LOG_STD_MAX",
    "POINT_FEATURES",
    "CLOUD_FEAT_DIM",
]

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0
POINT_FEATURES = 6          # xyz (centered, scaled) + normal
CLOUD_FEAT_DIM = 64
HEAD_SCALE = 0.01           # output heads start near zero: initial policy ~ replay


class PolicyError(RuntimeError):
    """Raised on dimension mismatches or non-finite activations."""


@dataclass(frozen=True)
class ObservationVector:
    s_r: np.ndarray            # (7,) initial end-effector pose (t, quat)
    s_o: np.ndarray            # (7,) object pose
    cloud: np.ndarray          # (M, 6) centered/scaled FPS points + normals
    p_afford_rel: np.ndarray   # (3,) affordance relative to centroid, / obj_bb
    l_style: np.ndarray        # (S,) one-hot
    obj_bb: float


@dataclass(frozen=True)
class ObsBatch:
    s_r: np.ndarray            # (B, 7)
    s_o: np.ndarray            # (B, 7)
    cloud: np.ndarray          # (B, M, 6)
    p_afford_rel: np.ndarray   # (B, 3)
    l_style: np.ndarray        # (B, S)
    obj_bb: np.ndarray         # (B, 1)

    @property
    def size(self) -> int:
        return self.s_r.shape[0]


def encode_observation(
    env: EnvState,
    demo,
    spec: HandSpec,
    styles: list[Style],
    m_points: int,
    fps_seed: int,
    fps_cache: dict,
) -> ObservationVector:
    """Deterministic observation encoding for one reset environment.

    Cloud points are FPS-subsampled once per (object, M, seed), centered
    on the centroid, and scaled by 1/obj_bb so the encoding is invariant
    to uniform object scaling. s_r is the would-be initial end-effector
    pose of the unedited replay.
    """
    obj = env.obj
    key = (obj.name, m_points, fps_seed)
    idx = fps_cache.get(key)
    if idx is None:
        idx = farthest_point_sample(obj.points, m_points, fps_seed)
        fps_cache[key] = idx
    scale = 1.0 / obj.obj_bb
    cloud = np.concatenate(
        [(obj.points[idx] - obj.centroid) * scale, obj.normals[idx]], axis=1
    )
    ee0 = compose_pose(env.object_pose, demo.poses[0])
    one_hot = np.zeros(len(styles))
    one_hot[env.condition.style_index] = 1.0
    obs = ObservationVector(
        s_r=np.concatenate([ee0.t, ee0.r]),
        s_o=np.concatenate([env.object_pose.t, env.object_pose.r]),
        cloud=cloud,
        p_afford_rel=(env.condition.p_afford - obj.centroid) * scale,
        l_style=one_hot,
        obj_bb=float(obj.obj_bb),
    )
    for name in ("s_r", "s_o", "cloud", "p_afford_rel", "l_style"):
        if not np.all(np.isfinite(getattr(obs, name))):
            raise PolicyError(f"non-finite observation field {name}")
    return obs


def stack_observations(obs_list: list[ObservationVector]) -> ObsBatch:
    return ObsBatch(
        s_r=np.stack([o.s_r for o in obs_list]),
        s_o=np.stack([o.s_o for o in obs_list]),
        cloud=np.stack([o.cloud for o in obs_list]),
        p_afford_rel=np.stack([o.p_afford_rel for o in obs_list]),
        l_style=np.stack([o.l_style for o in obs_list]),
        obj_bb=np.array([[o.obj_bb] for o in obs_list]),
    )


@dataclass
class PolicyParams:
    """All learnable arrays plus the shape metadata they were built for."""

    pb_w1: np.ndarray
    pb_b1: np.ndarray
    pb_w2: np.ndarray
    pb_b2: np.ndarray
    a_w1: np.ndarray
    a_b1: np.ndarray
    a_w2: np.ndarray
    a_b2: np.ndarray
    mean_w: np.ndarray
    mean_b: np.ndarray
    log_std: np.ndarray
    v_w1: np.ndarray
    v_b1: np.ndarray
    v_w2: np.ndarray
    v_b2: np.ndarray
    v_w3: np.ndarray
    v_b3: np.ndarray
    m_points: int
    style_count: int
    joint_count: int

    @property
    def action_dim(self) -> int:
        return 7 + self.joint_count


ARRAY_FIELDS = [
    "pb_w1", "pb_b1", "pb_w2", "pb_b2",
    "a_w1", "a_b1", "a_w2", "a_b2",
    "mean_w", "mean_b", "log_std",
    "v_w1", "v_b1", "v_w2", "v_b2", "v_w3", "v_b3",
]


def trunk_input_dim(style_count: int) -> int:
    return 7 + 7 + CLOUD_FEAT_DIM + 3 + style_count + 1


def _orthogonal(rng: np.random.Generator, shape, gain: float) -> np.ndarray:
    a = rng.standard_normal(shape)
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    w = u if u.shape == shape else vt
    return gain * w


def init_params(
    rng: np.random.Generator,
    m_points: int,
    style_count: int,
    joint_count: int,
    init_log_std: float = -0.5,
) -> PolicyParams:
    """Orthogonal init; output heads scaled down so the initial policy
    squashes to (almost) the identity edit."""
    d = trunk_input_dim(style_count)
    a_dim = 7 + joint_count
    g = np.sqrt(2.0)
    return PolicyParams(
        pb_w1=_orthogonal(rng, (POINT_FEATURES, 32), g),
        pb_b1=np.zeros(32),
        pb_w2=_orthogonal(rng, (32, CLOUD_FEAT_DIM), g),
        pb_b2=np.zeros(CLOUD_FEAT_DIM),
        a_w1=_orthogonal(rng, (d, 128), g),
        a_b1=np.zeros(128),
        a_w2=_orthogonal(rng, (128, 128), g),
        a_b2=np.zeros(128),
        mean_w=_orthogonal(rng, (128, a_dim), HEAD_SCALE),
        mean_b=np.zeros(a_dim),
        log_std=np.full(a_dim, float(init_log_std)),
        v_w1=_orthogonal(rng, (d, 128), g),
        v_b1=np.zeros(128),
        v_w2=_orthogonal(rng, (128, 64), g),
        v_b2=np.zeros(64),
        v_w3=_orthogonal(rng, (64, 1), HEAD_SCALE),
        v_b3=np.zeros(1),
        m_points=m_points,
        style_count=style_count,
        joint_count=joint_count,
    )


def zeros_like_params(p: PolicyParams) -> PolicyParams:
    kw = {f: np.zeros_like(getattr(p, f)) for f in ARRAY_FIELDS}
    return replace(p, **kw)


def flatten_params(p: PolicyParams) -> np.ndarray:
    return np.concatenate([getattr(p, f).ravel() for f in ARRAY_FIELDS])


def unflatten_params(template: PolicyParams, vec: np.ndarray) -> PolicyParams:
    expected = sum(getattr(template, f).size for f in ARRAY_FIELDS)
    if vec.size != expected:
        raise PolicyError(f"flat vector has {vec.size} entries, expected {expected}")
    kw = {}
    off = 0
    for f in ARRAY_FIELDS:
        arr = getattr(template, f)
        kw[f] = vec[off : off + arr.size].reshape(arr.shape).copy()
        off += arr.size
    return replace(template, **kw)


@dataclass
class ForwardCache:
    batch: ObsBatch
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray
    pool_arg: np.ndarray
    feat: np.ndarray
    az1: np.ndarray
    aa1: np.ndarray
    az2: np.ndarray
    aa2: np.ndarray
    vz1: np.ndarray
    va1: np.ndarray
    vz2: np.ndarray
    va2: np.ndarray


def _check_finite(name: str, arr: np.ndarray):
    if not np.all(np.isfinite(arr)):
        raise PolicyError(f"non-finite activations in {name}")


def policy_forward(params: PolicyParams, batch: ObsBatch, check: bool = True):
    """Batched forward pass.

    Returns (mean (B, A), log_std (A,), value (B,), cache). The max pool
    over points makes the cloud branch permutation-invariant; pooling
    ties route to the lowest point index (argmax convention), which the
    backward pass mirrors.
    """
    if batch.cloud.shape[1] != params.m_points or batch.cloud.shape[2] != POINT_FEATURES:
        raise PolicyError(
            f"cloud shape {batch.cloud.shape[1:]} does not match params (M={params.m_points})"
        )
    if batch.l_style.shape[1] != params.style_count:
        raise PolicyError(
            f"style one-hot dim {batch.l_style.shape[1]} != S={params.style_count}"
        )
    z1 = batch.cloud @ params.pb_w1 + params.pb_b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.pb_w2 + params.pb_b2
    a2 = np.maximum(z2, 0.0)
    pool_arg = np.argmax(a2, axis=1)                       # (B, 64)
    pooled = np.take_along_axis(a2, pool_arg[:, None, :], axis=1)[:, 0, :]
    feat = np.concatenate(
        [batch.s_r, batch.s_o, pooled, batch.p_afford_rel, batch.l_style, batch.obj_bb],
        axis=1,
    )
    az1 = feat @ params.a_w1 + params.a_b1
    aa1 = np.maximum(az1, 0.0)
    az2 = aa1 @ params.a_w2 + params.a_b2
    aa2 = np.maximum(az2, 0.0)
    mean = aa2 @ params.mean_w + params.mean_b
    vz1 = feat @ params.v_w1 + params.v_b1
    va1 = np.maximum(vz1, 0.0)
    vz2 = va1 @ params.v_w2 + params.v_b2
    va2 = np.maximum(vz2, 0.0)
    value = (va2 @ params.v_w3 + params.v_b3)[:, 0]
    if check:
        _check_finite("point_branch", a2)
        _check_finite("actor_trunk", aa2)
        _check_finite("action_head", mean)
        _check_finite("value_head", value)
    log_std = np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX)
    cache = ForwardCache(
        batch=batch, z1=z1, a1=a1, z2=z2, a2=a2, pool_arg=pool_arg, feat=feat,
        az1=az1, aa1=aa1, az2=az2, aa2=aa2, vz1=vz1, va1=va1, vz2=vz2, va2=va2,
    )
    return mean, log_std, value, cache


def policy_backward(
    params: PolicyParams,
    cache: ForwardCache,
    d_mean: np.ndarray,
    d_value: np.ndarray,
    d_log_std: np.ndarray,
) -> PolicyParams:
    """Exact reverse-mode gradients, summed over the batch.

    Upstream gradients are per-sample (B, A) / (B,); a duplicated batch
    row therefore contributes its gradient twice. d_log_std collects the
    direct terms (density sigma-derivatives, entropy bonus) and is masked
    by the [-5, 1] clamp.
    """
    g = zeros_like_params(params)
    # actor head and trunk
    g.mean_w = cache.aa2.T @ d_mean
    g.mean_b = d_mean.sum(axis=0)
    d_aa2 = d_mean @ params.mean_w.T
    d_az2 = d_aa2 * (cache.az2 > 0.0)
    g.a_w2 = cache.aa1.T @ d_az2
    g.a_b2 = d_az2.sum(axis=0)
    d_aa1 = d_az2 @ params.a_w2.T
    d_az1 = d_aa1 * (cache.az1 > 0.0)
    g.a_w1 = cache.feat.T @ d_az1
    g.a_b1 = d_az1.sum(axis=0)
    d_feat = d_az1 @ params.a_w1.T
    # value path
    g.v_w3 = cache.va2.T @ d_value[:, None]
    g.v_b3 = np.array([d_value.sum()])
    d_va2 = d_value[:, None] * params.v_w3[:, 0][None, :]
    d_vz2 = d_va2 * (cache.vz2 > 0.0)
    g.v_w2 = cache.va1.T @ d_vz2
    g.v_b2 = d_vz2.sum(axis=0)
    d_va1 = d_vz2 @ params.v_w2.T
    d_vz1 = d_va1 * (cache.vz1 > 0.0)
    g.v_w1 = cache.feat.T @ d_vz1
    g.v_b1 = d_vz1.sum(axis=0)
    d_feat = d_feat + d_vz1 @ params.v_w1.T
    # route the pooled slice back through the winning points only
    d_pooled = d_feat[:, 14 : 14 + CLOUD_FEAT_DIM]
    d_a2 = np.zeros_like(cache.a2)
    np.put_along_axis(d_a2, cache.pool_arg[:, None, :], d_pooled[:, None, :], axis=1)
    d_z2 = d_a2 * (cache.z2 > 0.0)
    g.pb_w2 = np.einsum("bmi,bmo->io", cache.a1, d_z2)
    g.pb_b2 = d_z2.sum(axis=(0, 1))
    d_a1 = d_z2 @ params.pb_w2.T
    d_z1 = d_a1 * (cache.z1 > 0.0)
    g.pb_w1 = np.einsum("bmi,bmo->io", cache.batch.cloud, d_z1)
    g.pb_b1 = d_z1.sum(axis=(0, 1))
    inside = (params.log_std > LOG_STD_MIN) & (params.log_std < LOG_STD_MAX)
    g.log_std = d_log_std * inside
    return g


# ---------------------------------------------------------------------------
# Squashing and log-probabilities
# ---------------------------------------------------------------------------

def _log1m_tanh2(u: np.ndarray) -> np.ndarray:
    # log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)), stable for large |u|
    return 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def squash(raw, lo, hi) -> np.ndarray:
    """Map unbounded raw values into (lo, hi) via tanh."""
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return center + half * np.tanh(raw)


def unsquash(action, lo, hi, interior: float = 1e-6):
    """Invert squash; actions on the bound are pulled 'interior' inside.

    Returns (raw, n_clamped) so callers can flag boundary actions.
    """
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    u = (np.asarray(action, dtype=float) - center) / half
    clipped = np.clip(u, -1.0 + interior, 1.0 - interior)
    n_clamped = int(np.sum(clipped != u))
    return np.arctanh(clipped), n_clamped


def gaussian_log_prob(mean, log_std, raw):
    """Sum log N(raw; mean, exp(log_std)) over the last axis.

    Also returns d/d mean and d/d log_std, which the PPO update consumes.
    """
    mean = np.asarray(mean, dtype=float)
    raw = np.asarray(raw, dtype=float)
    inv_var = np.exp(-2.0 * log_std)
    diff = raw - mean
    logp = np.sum(
        -0.5 * diff**2 * inv_var - log_std - 0.5 * np.log(2.0 * np.pi), axis=-1
    )
    d_mean = diff * inv_var
    d_log_std = diff**2 * inv_var - 1.0
    return logp, d_mean, d_log_std


def squash_correction(raw, lo, hi) -> np.ndarray:
    """Sum over action dims of log |d action / d raw| (the tanh Jacobian)."""
    half = 0.5 * (hi - lo)
    return np.sum(np.log(half) + _log1m_tanh2(np.asarray(raw, dtype=float)), axis=-1)


@dataclass(frozen=True)
class ActionSample:
    raw: np.ndarray
    action: EditAction
    log_prob: float


def sample_action(
    mean: np.ndarray,
    log_std: np.ndarray,
    bounds: EditBounds,
    joint_count: int,
    rng: np.random.Generator,
) -> ActionSample:
    """Draw raw ~ N(mean, exp(log_std)), squash into bounds, log-prob
    includes the tanh Jacobian correction."""
    lo, hi = bounds.intervals(joint_count)
    raw = mean + np.exp(log_std) * rng.standard_normal(mean.shape[0])
    vec = squash(raw, lo, hi)
    logp, _, _ = gaussian_log_prob(mean, log_std, raw)
    logp = float(logp - squash_correction(raw, lo, hi))
    return ActionSample(raw=raw, action=EditAction.from_vector(vec, joint_count), log_prob=logp)


def log_prob_of_raw(mean, log_std, raw, bounds: EditBounds, joint_count: int):
    """Log-prob (with Jacobian) of stored raw samples; batched.

    Returns (logp, d_mean, d_log_std); the Jacobian term is constant in
    the parameters, so the gradients are those of the Gaussian density.
    """
    lo, hi = bounds.intervals(joint_count)
    logp, d_mean, d_log_std = gaussian_log_prob(mean, log_std, raw)
    return logp - squash_correction(raw, lo, hi), d_mean, d_log_std


def action_log_prob(
    params: PolicyParams,
    obs: ObservationVector,
    action: EditAction,
    bounds: EditBounds,
) -> float:
    """Density of a squashed action under the current policy."""
    lo, hi = bounds.intervals(params.joint_count)
    raw, n_clamped = unsquash(action.to_vector(), lo, hi)
    if n_clamped:
        import logging

        logging.getLogger(__name__).debug(
            "action_log_prob: %d component(s) clamped to the bound interior", n_clamped
        )
    mean, log_std, _, _ = policy_forward(params, stack_observations([obs]))
    logp, _, _ = gaussian_log_prob(mean[0], log_std, raw)
    return float(logp - squash_correction(raw, lo, hi))


def entropy(log_std: np.ndarray) -> float:
    """Entropy of the raw diagonal Gaussian (pre-squash)."""
    a = log_std.shape[0]
    return float(np.sum(log_std) + 0.5 * a * np.log(2.0 * np.pi * np.e))
