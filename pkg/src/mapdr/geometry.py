"""Camera and map geometry: quaternion rotations, pinhole projection,
near-plane polyline clipping, and lateral ordering of centerlines.

The clip format does not document its quaternion component order or the
direction of the stored pose transform, so both are explicit configuration
with defaults of scalar-last components and camera-to-world poses. Wrong
guesses show up immediately in overlays and can be switched per run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from mapdr.core import CameraIntrinsics, CameraPose, LaneVector, Point3

QUATERNION_ORDERS = ("xyzw", "wxyz")
POSE_DIRECTIONS = ("camera_to_world", "world_to_camera")


class _BehindCamera:
    """Marker for points on the wrong side of the near plane."""

    __slots__ = ()

    def __repr__(self) -> str:  # pragma: no cover
        return "BEHIND_CAMERA"


BEHIND_CAMERA = _BehindCamera()


@dataclass(frozen=True)
class ProjectionConfig:
    """Conventions for interpreting stored poses and rendering overlays."""

    quaternion_order: str = "xyzw"
    pose_direction: str = "camera_to_world"
    near_clip: float = 0.1
    image_size: Tuple[int, int] = (1920, 1240)

    def __post_init__(self) -> None:
        if self.quaternion_order not in QUATERNION_ORDERS:
            raise ValueError(f"quaternion_order must be one of {QUATERNION_ORDERS}")
        if self.pose_direction not in POSE_DIRECTIONS:
            raise ValueError(f"pose_direction must be one of {POSE_DIRECTIONS}")
        if self.near_clip <= 0:
            raise ValueError("near_clip must be positive")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValueError("image dimensions must be positive")


def parse_convention_overrides(text: str) -> dict:
    """Parse ``key=value`` pairs (comma separated) into config kwargs.

    Accepted keys: ``quaternion_order``, ``pose_direction``, ``near_clip``.
    """
    overrides: dict = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        if key in ("quaternion_order", "pose_direction"):
            overrides[key] = value
        elif key == "near_clip":
            overrides[key] = float(value)
        else:
            raise ValueError(f"unknown convention key {key!r}")
    return overrides


def quat_to_rotation(q: Sequence[float], order: str = "xyzw") -> np.ndarray:
    """Unit-normalize a quaternion and return its 3x3 rotation matrix."""
    if order not in QUATERNION_ORDERS:
        raise ValueError(f"quaternion order must be one of {QUATERNION_ORDERS}")
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise ValueError("quaternion must have 4 components")
    norm = float(np.linalg.norm(q))
    if abs(norm - 1.0) > 1e-3:
        raise ValueError(f"quaternion norm {norm:.6f} outside unit tolerance")
    q = q / norm
    if order == "wxyz":
        w, x, y, z = q
    else:
        x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_to_quat(R: np.ndarray, order: str = "xyzw") -> Tuple[float, ...]:
    """Quaternion of a proper rotation matrix (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    trace = R[0, 0] + R[1, 1] + R[2, 2]
    if trace > 0:
        s = math.sqrt(trace + 1.0) * 2
        w = 0.25 * s
        x = (R[2, 1] - R[1, 2]) / s
        y = (R[0, 2] - R[2, 0]) / s
        z = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        w = (R[2, 1] - R[1, 2]) / s
        x = 0.25 * s
        y = (R[0, 1] + R[1, 0]) / s
        z = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        w = (R[0, 2] - R[2, 0]) / s
        x = (R[0, 1] + R[1, 0]) / s
        y = 0.25 * s
        z = (R[1, 2] + R[2, 1]) / s
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        w = (R[1, 0] - R[0, 1]) / s
        x = (R[0, 2] + R[2, 0]) / s
        y = (R[1, 2] + R[2, 1]) / s
        z = 0.25 * s
    if order == "wxyz":
        return (w, x, y, z)
    return (x, y, z, w)


def world_to_camera(
    points: np.ndarray, pose: CameraPose, cfg: ProjectionConfig
) -> np.ndarray:
    """Transform world-frame points (N, 3) into the camera frame."""
    R = quat_to_rotation(pose.rvec_enu, cfg.quaternion_order)
    t = np.array(pose.tvec_enu.as_tuple())
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if cfg.pose_direction == "camera_to_world":
        return (points - t) @ R
    return points @ R.T + t


def pinhole(K: CameraIntrinsics, xyz: Sequence[float]) -> Tuple[float, float]:
    """Project one camera-frame point through the pinhole model."""
    x, y, z = xyz
    return (K.fx * x / z + K.cx, K.fy * y / z + K.cy)


def project_point(
    point: Point3,
    pose: CameraPose,
    K: CameraIntrinsics,
    cfg: Optional[ProjectionConfig] = None,
):
    """Image coordinates of a world point, or ``BEHIND_CAMERA``."""
    cfg = cfg or ProjectionConfig()
    cam = world_to_camera(np.array([point.as_tuple()]), pose, cfg)[0]
    if cam[2] < cfg.near_clip:
        return BEHIND_CAMERA
    return pinhole(K, cam)


Segment = Tuple[Tuple[float, float], Tuple[float, float]]


def project_polyline(
    vector: LaneVector | Sequence[Point3],
    pose: CameraPose,
    K: CameraIntrinsics,
    cfg: Optional[ProjectionConfig] = None,
) -> List[Segment]:
    """Project a polyline, clipping segments at the camera near plane.

    Consecutive point pairs in front of the camera become segments;
    straddling pairs are clipped by linear interpolation to exactly the
    near-plane depth; fully-behind pairs are dropped. Output order follows
    input order.
    """
    cfg = cfg or ProjectionConfig()
    points = vector.points if isinstance(vector, LaneVector) else tuple(vector)
    cam = world_to_camera(np.array([p.as_tuple() for p in points]), pose, cfg)
    near = cfg.near_clip
    segments: List[Segment] = []
    for a, b in zip(cam, cam[1:]):
        za, zb = a[2], b[2]
        if za < near and zb < near:
            continue
        if za >= near and zb >= near:
            pa, pb = a, b
        else:
            t = (near - za) / (zb - za)
            cut = a + t * (b - a)
            cut[2] = near
            pa, pb = (cut, b) if za < near else (a, cut)
        segments.append((pinhole(K, pa), pinhole(K, pb)))
    return segments


def quad_area(quad: Sequence[Point3]) -> float:
    """Area of a quad as the sum of its two triangle halves."""
    p = np.array([q.as_tuple() for q in quad])
    t1 = np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0])) / 2.0
    t2 = np.linalg.norm(np.cross(p[2] - p[0], p[3] - p[0])) / 2.0
    return float(t1 + t2)


def sign_width_axis(sign_quad: Sequence[Point3]) -> np.ndarray:
    """Left-to-right unit axis of a sign, for a viewer facing its front.

    The direction is the principal horizontal axis of the quad vertices;
    its sign follows the quad's winding normal, which makes the result
    covariant with rigid motions of the whole scene.
    """
    quad = np.array([p.as_tuple() for p in sign_quad])
    if quad_area(sign_quad) < 1e-6:
        raise ValueError("degenerate sign quad")
    rel = quad - quad.mean(axis=0)
    cov = rel[:, :2].T @ rel[:, :2]
    _, eigvecs = np.linalg.eigh(cov)
    axis = eigvecs[:, -1]  # largest eigenvalue: the quad's horizontal extent

    normal = np.cross(quad[1] - quad[0], quad[2] - quad[0])
    left_to_right = np.array([-normal[1], normal[0]])  # z cross normal
    if np.linalg.norm(left_to_right) > 1e-9:
        if float(axis @ left_to_right) < 0:
            axis = -axis
    elif axis[1] < 0 or (axis[1] == 0 and axis[0] < 0):
        # sign face is horizontal: fall back to a lexicographic orientation
        axis = -axis
    return axis


def lateral_order(
    centerlines: Sequence[LaneVector], sign_quad: Sequence[Point3]
) -> Tuple[int, ...]:
    """Centerline ids ordered left to right as seen facing the sign.

    Each centerline is represented by its point nearest the sign, projected
    onto the sign's width axis; ties break by ascending id. Invariant under
    horizontal rigid motions (yaw plus translation) applied to the scene.
    """
    if not centerlines:
        raise ValueError("lateral_order needs at least one centerline")
    axis = sign_width_axis(sign_quad)
    centroid = np.array([p.as_tuple() for p in sign_quad]).mean(axis=0)
    keyed = []
    for vec in centerlines:
        pts = np.array([p.as_tuple() for p in vec.points])
        nearest = pts[np.argmin(((pts - centroid) ** 2).sum(axis=1))]
        offset = float((nearest - centroid)[:2] @ axis)
        keyed.append((offset, vec.id))
    return tuple(vid for _, vid in sorted(keyed))
