"""Frozen closed-form references, derived by hand and independent of src.

Each helper recomputes a quantity from scratch (image sums, explicit circle
kinematics, plane geometry) so the package under test shares no code path
with the expected values.
"""

import numpy as np


def plane_drift_distance(p, q, w):
    """d_F on the plane for F = |v| + <w, v> with constant |w| < 1.

    Straight lines are optimal (the h-part is Euclidean and the drift part
    is path-independent), so d = |q - p| + <w, q - p>.
    """
    d = np.asarray(q, float) - np.asarray(p, float)
    return float(np.linalg.norm(d) + np.dot(w, d))


def flat_torus_drift_distance(p, q, w, m=3):
    """d_F on the unit flat torus with constant drift, by image search."""
    best = np.inf
    d0 = np.asarray(q, float) - np.asarray(p, float)
    for kx in range(-m, m + 1):
        for ky in range(-m, m + 1):
            d = d0 + np.array([kx, ky], float)
            best = min(best, np.linalg.norm(d) + float(np.dot(w, d)))
    return float(best)


def torus_point_rho(x, m=2):
    """Euclidean distance from x to the lattice Z^2 (flat torus, point 0)."""
    x = np.asarray(x, float)
    best = np.inf
    for kx in range(-m, m + 1):
        for ky in range(-m, m + 1):
            best = min(best, float(np.linalg.norm(x - [kx, ky])))
    return best


def magnetic_circle(t, B, speed, x0=(0.0, 0.0), phase=0.0):
    """Constant-field orbit in the Euclidean plane, counterclockwise for B>0.

    Initial velocity speed*(cos phase, sin phase) at x0; radius speed/B.
    """
    t = np.asarray(t, float)
    R = speed / B
    cx = x0[0] - R * np.sin(phase)
    cy = x0[1] + R * np.cos(phase)
    ang = phase - np.pi / 2 + B * t
    x = cx + R * np.cos(ang)
    y = cy + R * np.sin(ang)
    vx = -speed * np.sin(ang)
    vy = speed * np.cos(ang)
    return np.stack([x, y], axis=-1), np.stack([vx, vy], axis=-1)


def sheared_quotient_data(a=np.sqrt(2.0) - 1.0):
    """Chart data of the null-drift quotient torus with lattice (0,1),(1,a).

    In adapted coordinates the spatial metric and drift come out as
    h = [[1/4 + a^2/2, a/2], [a/2, 1/2]], omega = (1/2, 0); the vector
    (-1, a) is F-null up to roundoff.
    """
    h = np.array([[0.25 + 0.5 * a * a, 0.5 * a], [0.5 * a, 0.5]])
    om = np.array([0.5, 0.0])
    return h, om, a
