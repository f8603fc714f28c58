"""Procedural object families, polygon geometry and point clouds.

Each category is a parametric family of simple counter-clockwise polygons
expressed in a canonical frame (area centroid at the origin, major principal
axis along x). Family parameter ranges are fixed below so that instances of a
family look alike but differ visibly in their point clouds.
"""
import logging
from collections import OrderedDict
from typing import List, Tuple

import numpy as np
from matplotlib.path import Path
from scipy import linalg

from utils.common import rng_for
from utils.parse import read_json, write_json

CATEGORIES = ("bottle", "mug", "can", "remote", "camera")
SPLITS = ("train", "test")
MIN_VERTICES = 6
DIAGONAL_RANGE = (0.15, 0.6)  # unit lengths, graspable by the gripper
DEFAULT_CLOUD_POINTS = 64
MIN_CLOUD_POINTS = 8
MIN_AREA = 1e-9


class InvalidGeometry(ValueError):
    """Raised for degenerate or invalid polygons."""


class Polygon(object):
    """Boundary geometry of one object instance.

    Notes
    -----
    Vertices are stored as an (V, 2) float array in counter-clockwise order.
    Instance ids are unique across categories (``1000 * (category index + 1) + i``).
    """

    def __init__(self, vertices, category, instance_id, split="train"):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        self.category = category
        self.instance_id = int(instance_id)
        self.split = split
        self._path = None

    def __repr__(self):
        return "Polygon(category={}, instance_id={}, split={}, n_vertices={})".format(
            self.category, self.instance_id, self.split, len(self.vertices))

    def __eq__(self, other):
        if not isinstance(other, Polygon):
            return NotImplemented
        return (self.category == other.category and self.instance_id == other.instance_id and
                self.split == other.split and np.array_equal(self.vertices, other.vertices))

    def __ne__(self, other):
        return not self.__eq__(other)

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_path"] = None
        return state

    @property
    def path(self):
        # type: () -> Path
        if self._path is None:
            self._path = Path(np.vstack([self.vertices, self.vertices[:1]]), closed=True)
        return self._path

    @property
    def edges(self):
        # type: () -> Tuple[np.ndarray, np.ndarray]
        """Start and end points of every boundary edge."""
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    def signed_area(self):
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def area(self):
        return abs(self.signed_area())

    def centroid(self):
        """Area centroid of the polygon."""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        area = 0.5 * np.sum(cross)
        if abs(area) < MIN_AREA:
            raise InvalidGeometry("Polygon {} has zero area".format(self.instance_id))
        cx = np.sum((x + xn) * cross) / (6 * area)
        cy = np.sum((y + yn) * cross) / (6 * area)
        return np.array([cx, cy])

    def perimeter(self):
        start, end = self.edges
        return float(np.sum(np.linalg.norm(end - start, axis=1)))

    def bbox_diagonal(self):
        extent = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.hypot(*extent))

    def bounding_radius(self):
        """Largest vertex distance from the origin of the polygon frame."""
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))

    def is_ccw(self):
        return self.signed_area() > 0

    def is_simple(self):
        """No two non-adjacent edges touch and no edge is degenerate."""
        start, end = self.edges
        n = len(start)
        if np.any(np.linalg.norm(end - start, axis=1) < 1e-12):
            return False
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if segments_intersect(start[i], end[i], start[j], end[j]):
                    return False
        return True

    def validate(self):
        """Check the vertex count, simplicity, orientation and size range."""
        if len(self.vertices) < MIN_VERTICES:
            raise InvalidGeometry("Polygon {} has {} vertices, need at least {}".format(
                self.instance_id, len(self.vertices), MIN_VERTICES))
        if not self.is_simple():
            raise InvalidGeometry("Polygon {} is self-intersecting".format(self.instance_id))
        if not self.is_ccw():
            raise InvalidGeometry("Polygon {} is not counter-clockwise".format(self.instance_id))
        diagonal = self.bbox_diagonal()
        if not DIAGONAL_RANGE[0] <= diagonal <= DIAGONAL_RANGE[1]:
            raise InvalidGeometry("Polygon {} has bounding-box diagonal {:.3f} outside {}".format(
                self.instance_id, diagonal, DIAGONAL_RANGE))
        return self

    def with_split(self, split):
        if split not in SPLITS:
            raise ValueError("Unknown split '{}'".format(split))
        return Polygon(self.vertices, self.category, self.instance_id, split)

    def contains(self, points):
        """Point-in-polygon test for an (P, 2) array."""
        return self.path.contains_points(np.atleast_2d(points))

    def to_dict(self):
        return OrderedDict([("category", self.category), ("instance_id", self.instance_id),
                            ("split", self.split), ("vertices", self.vertices.tolist())])

    @classmethod
    def from_dict(cls, record):
        return cls(record["vertices"], record["category"], record["instance_id"], record.get("split", "train"))


class PointCloud(object):
    """Pose-free point-set descriptor of an object."""

    def __init__(self, points):
        self.points = np.array(points, dtype=float).reshape(-1, 2)

    @property
    def n(self):
        return len(self.points)

    def __repr__(self):
        return "PointCloud(n={})".format(self.n)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    def __ne__(self, other):
        return not self.__eq__(other)


def segments_intersect(p1, p2, q1, q2, tol=1e-12):
    """Closed-segment intersection test, touching counts as intersecting."""
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_segment(a, b, c):
        return (min(a[0], b[0]) - tol <= c[0] <= max(a[0], b[0]) + tol and
                min(a[1], b[1]) - tol <= c[1] <= max(a[1], b[1]) + tol)

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and \
            ((d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)):
        return True
    if abs(d1) <= tol and on_segment(q1, q2, p1):
        return True
    if abs(d2) <= tol and on_segment(q1, q2, p2):
        return True
    if abs(d3) <= tol and on_segment(p1, p2, q1):
        return True
    if abs(d4) <= tol and on_segment(p1, p2, q2):
        return True
    return False


def boundary_query(vertices, points):
    # type: (np.ndarray, np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    """Nearest boundary point of a CCW polygon for each query point.

    Parameters
    ----------
    vertices: array (V, 2)
        Polygon vertices in counter-clockwise order.
    points: array (P, 2)
        Query points in the polygon frame.

    Returns
    -------
    dist: array (P,)
        Unsigned distance to the boundary.
    nearest: array (P, 2)
        Closest boundary point.
    normal: array (P, 2)
        Outward unit normal of the edge holding the closest point.
    edge: array (P,)
        Index of that edge.
    """
    points = np.atleast_2d(points)
    start = vertices
    seg = np.roll(vertices, -1, axis=0) - start                        # (V, 2)
    seg_len2 = np.sum(seg ** 2, axis=1)                                 # (V,)
    rel = points[:, None, :] - start[None, :, :]                        # (P, V, 2)
    t = np.clip(np.sum(rel * seg[None], axis=2) / seg_len2[None], 0.0, 1.0)
    closest = start[None] + t[..., None] * seg[None]                    # (P, V, 2)
    dist2 = np.sum((points[:, None, :] - closest) ** 2, axis=2)
    edge = np.argmin(dist2, axis=1)
    rows = np.arange(len(points))
    nearest = closest[rows, edge]
    seg_e = seg[edge]
    normal = np.stack([seg_e[:, 1], -seg_e[:, 0]], axis=1) / np.sqrt(seg_len2[edge])[:, None]
    return np.sqrt(dist2[rows, edge]), nearest, normal, edge


def canonical_transform(poly):
    # type: (Polygon) -> Tuple[np.ndarray, np.ndarray]
    """Rotation and centroid that map a polygon into its canonical frame.

    The canonical frame has the area centroid at the origin and the major
    principal axis of the area along +x, with +x pointing to the side of
    greater extent. Isotropic shapes keep their orientation.
    """
    if poly.area() < MIN_AREA:
        raise InvalidGeometry("Polygon {} has zero area".format(poly.instance_id))
    center = poly.centroid()
    v = poly.vertices - center
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    ixx = np.sum(cross * (x ** 2 + x * xn + xn ** 2)) / 12.0
    iyy = np.sum(cross * (y ** 2 + y * yn + yn ** 2)) / 12.0
    ixy = np.sum(cross * (x * yn + 2 * x * y + 2 * xn * yn + xn * y)) / 24.0
    moments = np.array([[ixx, ixy], [ixy, iyy]])
    eigvals, eigvecs = linalg.eigh(moments)
    if eigvals[1] - eigvals[0] <= 1e-9 * abs(eigvals[1] + eigvals[0]):
        rot = np.eye(2)
    else:
        major = eigvecs[:, 1]
        minor = np.array([-major[1], major[0]])
        rot = np.vstack([major, minor])  # rows are the new axes
    aligned = v.dot(rot.T)
    if aligned[:, 0].max() < -aligned[:, 0].min() - 1e-12:
        rot = -rot
    return rot, center


def canonical_vertices(poly):
    # type: (Polygon) -> np.ndarray
    rot, center = canonical_transform(poly)
    return (poly.vertices - center).dot(rot.T)


def canonicalize(poly):
    # type: (Polygon) -> Polygon
    return Polygon(canonical_vertices(poly), poly.category, poly.instance_id, poly.split)


# Family builders. Each returns CCW vertices in an arbitrary frame.

def _bottle(rng):
    body_w = rng.uniform(0.10, 0.16)
    top_w = body_w * rng.uniform(0.85, 1.0)
    body_h = rng.uniform(0.18, 0.30)
    shoulder_h = rng.uniform(0.04, 0.08)
    neck_w = rng.uniform(0.04, 0.06)
    neck_h = rng.uniform(0.05, 0.09)
    shoulder = body_h + shoulder_h
    top = shoulder + neck_h
    return [(-body_w / 2, 0.0), (body_w / 2, 0.0), (top_w / 2, body_h), (neck_w / 2, shoulder),
            (neck_w / 2, top), (-neck_w / 2, top), (-neck_w / 2, shoulder), (-top_w / 2, body_h)]


def _mug(rng):
    w = rng.uniform(0.12, 0.18)
    h = rng.uniform(0.12, 0.20)
    reach = rng.uniform(0.05, 0.07)  # handle protrusion
    wall, root = 0.02, 0.015
    y1 = h * rng.uniform(0.15, 0.30)
    y2 = h * rng.uniform(0.70, 0.85)
    return [(0.0, 0.0), (w, 0.0), (w, y1), (w + reach, y1), (w + reach, y1 + wall),
            (w + root, y1 + wall), (w + root, y2 - wall), (w + reach, y2 - wall),
            (w + reach, y2), (w, y2), (w, h), (0.0, h)]


def _can(rng):
    if rng.uniform() < 0.3:
        a = rng.uniform(0.05, 0.09)
        b = rng.uniform(0.07, 0.12)
        angles = np.linspace(0, 2 * np.pi, 24, endpoint=False)
        return np.stack([a * np.cos(angles), b * np.sin(angles)], axis=1)
    w = rng.uniform(0.10, 0.16)
    h = rng.uniform(0.14, 0.24)
    r = rng.uniform(0.015, 0.04)
    corners = [((w / 2 - r, -h / 2 + r), -np.pi / 2), ((w / 2 - r, h / 2 - r), 0.0),
               ((-w / 2 + r, h / 2 - r), np.pi / 2), ((-w / 2 + r, -h / 2 + r), np.pi)]
    points = []
    for (cx, cy), start in corners:
        for angle in np.linspace(start, start + np.pi / 2, 4):
            points.append((cx + r * np.cos(angle), cy + r * np.sin(angle)))
    return points


def _remote(rng):
    length = rng.uniform(0.30, 0.45)
    w = rng.uniform(0.05, 0.08)
    c = rng.uniform(0.005, 0.012)
    return [(c, 0.0), (w - c, 0.0), (w, c), (w, length - c), (w - c, length), (c, length),
            (0.0, length - c), (0.0, c)]


def _camera(rng):
    w = rng.uniform(0.16, 0.24)
    h = rng.uniform(0.10, 0.15)
    lens_w = rng.uniform(0.05, 0.08)
    lens_h = rng.uniform(0.03, 0.05)
    cx = rng.uniform(lens_w / 2 + 0.02, w - lens_w / 2 - 0.02)
    return [(0.0, 0.0), (w, 0.0), (w, h), (cx + lens_w / 2, h), (cx + lens_w / 2, h + lens_h),
            (cx - lens_w / 2, h + lens_h), (cx - lens_w / 2, h), (0.0, h)]


FAMILIES = OrderedDict([("bottle", _bottle), ("mug", _mug), ("can", _can),
                        ("remote", _remote), ("camera", _camera)])


def category_id_base(category):
    # type: (str) -> int
    return 1000 * (CATEGORIES.index(category) + 1)


def generate_category_instances(category, count, seed):
    # type: (str, int, int) -> List[Polygon]
    """Generate ``count`` canonical polygons of one family.

    Parameters
    ----------
    category: str
        One of CATEGORIES.
    count: int
        Number of instances, at least 1.
    seed: int
        Seed; the result is a pure function of (category, seed) and the
        first k instances do not depend on ``count``.

    Returns
    -------
    polygons: list of Polygon
        Valid polygons labelled with the train split.
    """
    if category not in FAMILIES:
        raise ValueError("Unknown category '{}', expected one of {}".format(category, CATEGORIES))
    if int(count) < 1:
        raise ValueError("count must be at least 1, got {}".format(count))
    rng = rng_for(seed, CATEGORIES.index(category))
    base = category_id_base(category)
    polygons = []
    for i in range(int(count)):
        raw = Polygon(FAMILIES[category](rng), category, base + i)
        polygons.append(canonicalize(raw).validate())
    logging.debug("Generated {} {} instances with seed {}".format(count, category, seed))
    return polygons


def sample_point_cloud(poly, n=DEFAULT_CLOUD_POINTS, seed=0):
    # type: (Polygon, int, int) -> PointCloud
    """Arc-length stratified boundary sample in the canonical frame.

    The boundary is cut into ``n`` strata of equal arc length and one point
    is drawn uniformly inside each stratum. ``n`` must be at least
    ``MIN_CLOUD_POINTS`` (8).
    """
    if int(n) < MIN_CLOUD_POINTS:
        raise ValueError("Point clouds need at least {} points, got {}".format(MIN_CLOUD_POINTS, n))
    if poly.area() < MIN_AREA:
        raise InvalidGeometry("Polygon {} has zero area".format(poly.instance_id))
    vertices = canonical_vertices(poly)
    seg = np.roll(vertices, -1, axis=0) - vertices
    lengths = np.linalg.norm(seg, axis=1)
    cumulative = np.concatenate([[0.0], np.cumsum(lengths)])
    total = cumulative[-1]
    rng = rng_for(seed)
    arc = (np.arange(n) + rng.uniform(size=n)) * (total / n)
    edge = np.clip(np.searchsorted(cumulative, arc, side="right") - 1, 0, len(vertices) - 1)
    t = np.clip((arc - cumulative[edge]) / lengths[edge], 0.0, 1.0)
    return PointCloud(vertices[edge] + t[:, None] * seg[edge])


def train_test_split(instances, test_fraction, seed):
    # type: (List[Polygon], float, int) -> Tuple[List[Polygon], List[Polygon]]
    """Disjoint seeded partition with floor(count * test_fraction) test instances."""
    if not instances:
        raise ValueError("Cannot split an empty instance list")
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1), got {}".format(test_fraction))
    n_test = int(np.floor(len(instances) * test_fraction + 1e-9))
    order = rng_for(seed).permutation(len(instances))
    test_idx = set(order[:n_test].tolist())
    train = [p.with_split("train") for i, p in enumerate(instances) if i not in test_idx]
    test = [p.with_split("test") for i, p in enumerate(instances) if i in test_idx]
    return train, test


def write_object_set(filename, polygons):
    # type: (str, List[Polygon]) -> None
    write_json(filename, [p.to_dict() for p in polygons])


def read_object_set(filename, split=None):
    # type: (str, str) -> List[Polygon]
    """Load an object-set file, optionally keeping a single split."""
    polygons = [Polygon.from_dict(record) for record in read_json(filename)]
    if split is not None:
        polygons = [p for p in polygons if p.split == split]
    return polygons
