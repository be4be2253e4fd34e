"""Independent reference computations used as test oracles.

Nothing here imports the code under test's internals: projections are built
from explicit rotation matrices, integrals from scipy quadrature, GAE from a
double loop.
"""

import math

import numpy as np


def camera_basis(gimbal_pitch_deg, yaw_deg=0.0):
    """Optical axis, image-right and image-down unit vectors in the world frame.

    World frame: x east, y north, z up. The UAV faces ``yaw`` (CCW from +x).
    The gimbal is stabilized, pitched ``gimbal_pitch`` forward from nadir.
    Image rows grow away from the vertical axis.
    """
    a = math.radians(gimbal_pitch_deg)
    psi = math.radians(yaw_deg)
    fwd = np.array([math.cos(psi), math.sin(psi), 0.0])
    right = np.array([math.sin(psi), -math.cos(psi), 0.0])
    up = np.array([0.0, 0.0, 1.0])
    # rotate nadir toward forward by a
    axis = math.cos(a) * -up + math.sin(a) * fwd
    down_img = math.sin(a) * up + math.cos(a) * fwd
    return axis, right, down_img


def project(point, cam_pos, gimbal_pitch_deg, cam, yaw_deg=0.0):
    """Pixel (u, v) of a world point, or None when behind the camera."""
    axis, right, down_img = camera_basis(gimbal_pitch_deg, yaw_deg)
    rel = np.asarray(point, float) - np.asarray(cam_pos, float)
    zc = rel @ axis
    if zc <= 0:
        return None
    fx = (cam.image_width / 2) / math.tan(math.radians(cam.hfov) / 2)
    fy = (cam.image_height / 2) / math.tan(math.radians(cam.vfov) / 2)
    u = cam.image_width / 2 + fx * (rel @ right) / zc
    v = cam.image_height / 2 + fy * (rel @ down_img) / zc
    return u, v


def brute_force_gae(rewards, values, dones, last_value, gamma, lam):
    """O(n^2) advantage sum: A_t = sum_k (gamma*lam)^k delta_{t+k}, cut at episode ends."""
    n = len(rewards)
    deltas = []
    for t in range(n):
        next_v = last_value if t == n - 1 else values[t + 1]
        deltas.append(rewards[t] + gamma * next_v * (1.0 - dones[t]) - values[t])
    adv = []
    for t in range(n):
        total = 0.0
        coef = 1.0
        for k in range(t, n):
            total += coef * deltas[k]
            if dones[k]:
                break
            coef *= gamma * lam
        adv.append(total)
    return np.array(adv)
