"""Direct least-squares ellipse fitting.

Points are centered and scaled isotropically before the fit, and the
ellipse-specific conic is found from the reduced 3x3 eigenproblem, so
the fit can only return an ellipse.
"""

import logging

import numpy as np

from eye_purify import exceptions


logger = logging.getLogger(__name__)

MIN_POINTS = 6

# inverse of the 3x3 ellipse constraint block 4ac - b^2
_CONSTRAINT_INV = np.array([[0.0, 0.0, 0.5],
                            [0.0, -1.0, 0.0],
                            [0.5, 0.0, 0.0]])


class Ellipse(object):
    """Center (cx, cy), semi-axes a >= b > 0 and rotation theta of the major axis, in [0, pi)."""

    __slots__ = ('cx', 'cy', 'a', 'b', 'theta')

    def __init__(self, cx, cy, a, b, theta):
        if not (a >= b > 0):
            raise exceptions.EllipseFitError("ellipse semi-axes must satisfy a >= b > 0, got {} / {}".format(a, b))
        self.cx, self.cy, self.a, self.b = float(cx), float(cy), float(a), float(b)
        self.theta = float(theta) % np.pi

    @property
    def center(self):
        return self.cx, self.cy

    def points(self, count=64):
        t = np.linspace(0, 2 * np.pi, count, endpoint=False)
        c, s = np.cos(self.theta), np.sin(self.theta)
        x, y = self.a * np.cos(t), self.b * np.sin(t)
        return np.column_stack([self.cx + c * x - s * y, self.cy + s * x + c * y])

    def __repr__(self):
        return "Ellipse(center=({:.3f}, {:.3f}), a={:.3f}, b={:.3f}, theta={:.4f})".format(
            self.cx, self.cy, self.a, self.b, self.theta)


def _conic(x, y):
    """Ellipse-constrained conic coefficients (A, B, C, D, E, F) for centered, scaled points."""
    D1 = np.column_stack([x * x, x * y, y * y])
    D2 = np.column_stack([x, y, np.ones_like(x)])
    S1, S2, S3 = D1.T @ D1, D1.T @ D2, D2.T @ D2
    if np.linalg.cond(S3) > 1e12:
        raise exceptions.EllipseFitError("points are collinear or coincident")
    T = -np.linalg.solve(S3, S2.T)
    M = _CONSTRAINT_INV @ (S1 + S2 @ T)
    _, vectors = np.linalg.eig(M)
    vectors = np.real(vectors)
    cond = 4 * vectors[0] * vectors[2] - vectors[1] ** 2
    candidates = np.nonzero(cond > 0)[0]
    if candidates.size == 0:
        raise exceptions.EllipseFitError("no ellipse fits the points")
    a1 = vectors[:, candidates[np.argmax(cond[candidates])]]
    return np.concatenate([a1, T @ a1])


def _geometric(coeffs):
    A, B, C, D, E, F = coeffs
    Q = np.array([[A, B / 2.0], [B / 2.0, C]])
    try:
        x0, y0 = np.linalg.solve(2 * Q, [-D, -E])
    except np.linalg.LinAlgError:
        raise exceptions.EllipseFitError("conic has no center")
    f0 = F + (D * x0 + E * y0) / 2.0
    if f0 > 0:
        Q, f0 = -Q, -f0
    values, vectors = np.linalg.eigh(Q)
    if values[0] <= 0 or f0 >= 0:
        raise exceptions.EllipseFitError("conic is not a real ellipse")
    a, b = np.sqrt(-f0 / values[0]), np.sqrt(-f0 / values[1])
    major = vectors[:, 0]
    return x0, y0, a, b, np.arctan2(major[1], major[0])


def fit_ellipse(points):
    """Fit an ellipse to at least six non-collinear (x, y) points."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise exceptions.ShapeError("points must be (n, 2)", expected='(n, 2)', actual=points.shape)
    if len(points) < MIN_POINTS:
        raise exceptions.EllipseFitError("need at least {} points, got {}".format(MIN_POINTS, len(points)))
    if not np.all(np.isfinite(points)):
        raise exceptions.EllipseFitError("points must be finite")
    mean = points.mean(axis=0)
    scale = np.sqrt(((points - mean) ** 2).sum(axis=1).mean())
    if scale == 0:
        raise exceptions.EllipseFitError("points are coincident")
    unit = (points - mean) / scale
    cx, cy, a, b, theta = _geometric(_conic(unit[:, 0], unit[:, 1]))
    ellipse = Ellipse(mean[0] + scale * cx, mean[1] + scale * cy, scale * a, scale * b, theta)
    logger.debug("fitted %r to %d points", ellipse, len(points))
    return ellipse
