"""Quadrotor rigid-body dynamics and cascaded PID stabilization.

The inner loops run at the physics rate inside a numba kernel; one call
advances a whole control period. State lives in a flat float64 vector so the
kernel never allocates.

Frames: world is x east, y north, z up. Body is x forward, y left, z up.
Attitude is Z-Y-X Euler (yaw, pitch, roll) in radians; positive pitch is
nose-down (accelerates forward), positive roll is right-side-down
(accelerates right).

Motor order: front-left, front-right, rear-left, rear-right.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .config import AirframeConfig, ControlMapping, GainConfig

# state vector layout
PX, PY, PZ = 0, 1, 2
VX, VY, VZ = 3, 4, 5
ROLL, PITCH, YAW = 6, 7, 8
WX, WY, WZ = 9, 10, 11
F0 = 12  # four motor forces
I_ROLL, I_PITCH, I_YAW, I_CLIMB = 16, 17, 18, 19
STATE_SIZE = 20

# parameter vector layout
(
    P_MASS, P_G, P_ARM, P_IXX, P_IYY, P_IZZ, P_FMAX, P_KYAW, P_DRAG,
    P_AKP, P_AKD, P_AKI, P_YKP, P_YKI, P_CKP, P_CKI, P_ILIM,
    P_MAXTILT, P_CAP, P_LIMK,  # limiter gain: rad of tilt per m/s of speed error
    P_PLAT_HALF, P_PLAT_TOP, P_CONTACT, P_EXT_X, P_EXT_Y, P_CEIL, P_CRASH_TILT,
) = range(27)
PARAM_SIZE = 27

# contact codes returned by advance()
NO_CONTACT = 0
TOUCHDOWN_PLATFORM = 1
TOUCHDOWN_GROUND = 2
TILT_CRASH = 3
WALL_CRASH = 4


def pack_params(airframe: AirframeConfig, gains: GainConfig, control: ControlMapping,
                platform_half: float = 0.5, platform_top: float = 0.2, contact: float = 0.05,
                extent_x: float = 40.0, extent_y: float = 40.0, ceiling: float = 30.0,
                crash_tilt_deg: float = 60.0) -> np.ndarray:
    p = np.zeros(PARAM_SIZE)
    p[P_MASS] = airframe.mass
    p[P_G] = airframe.gravity
    p[P_ARM] = airframe.arm_length / math.sqrt(2.0)
    p[P_IXX], p[P_IYY], p[P_IZZ] = airframe.ixx, airframe.iyy, airframe.izz
    p[P_FMAX] = airframe.max_thrust
    p[P_KYAW] = airframe.yaw_coefficient
    p[P_DRAG] = airframe.lateral_drag
    p[P_AKP], p[P_AKD], p[P_AKI] = gains.attitude_kp, gains.attitude_kd, gains.attitude_ki
    p[P_YKP], p[P_YKI] = gains.yaw_rate_kp, gains.yaw_rate_ki
    p[P_CKP], p[P_CKI] = gains.climb_kp, gains.climb_ki
    p[P_ILIM] = gains.integrator_limit
    p[P_MAXTILT] = math.radians(control.max_tilt)
    p[P_CAP] = control.speed_cap
    p[P_LIMK] = math.radians(control.max_tilt) / control.speed_cap
    p[P_PLAT_HALF] = platform_half
    p[P_PLAT_TOP] = platform_top
    p[P_CONTACT] = contact
    p[P_EXT_X], p[P_EXT_Y], p[P_CEIL] = extent_x, extent_y, ceiling
    p[P_CRASH_TILT] = math.radians(crash_tilt_deg)
    return p


@njit(cache=True)
def _clip(v, lo, hi):
    return lo if v < lo else (hi if v > hi else v)


@njit(cache=True)
def limit_tilt(x, p, roll_cmd, pitch_cmd):
    """Attitude setpoints after the horizontal speed limiter.

    ``roll_cmd``/``pitch_cmd`` are normalized stick values in [-1, 1]. Each
    heading axis tracks ``cmd * speed_cap`` with a proportional tilt, so a
    full stick from rest asks for the full tilt, the tilt fades as ground
    speed reaches the cap, and a centered stick brakes.
    """
    c = math.cos(x[YAW])
    s = math.sin(x[YAW])
    v_fwd = c * x[VX] + s * x[VY]
    v_right = s * x[VX] - c * x[VY]
    k = p[P_LIMK]
    cap = p[P_CAP]
    tilt = p[P_MAXTILT]
    pitch_sp = k * (pitch_cmd * cap - v_fwd)
    roll_sp = k * (roll_cmd * cap - v_right)
    return _clip(roll_sp, -tilt, tilt), _clip(pitch_sp, -tilt, tilt)


@njit(cache=True)
def pid_forces(x, p, roll_sp, pitch_sp, yaw_rate_sp, climb_sp, dt, out):
    """Cascaded PID: attitude/rate/climb errors → torques and collective → motor mix.

    Integrator states in ``x`` are advanced by ``dt``. Forces go to ``out``
    (length 4) clamped to [0, max_thrust].
    """
    lim = p[P_ILIM]
    e_r = roll_sp - x[ROLL]
    e_p = pitch_sp - x[PITCH]
    e_y = yaw_rate_sp - x[WZ]
    e_c = climb_sp - x[VZ]
    x[I_ROLL] = _clip(x[I_ROLL] + e_r * dt, -lim, lim)
    x[I_PITCH] = _clip(x[I_PITCH] + e_p * dt, -lim, lim)
    x[I_YAW] = _clip(x[I_YAW] + e_y * dt, -lim, lim)
    x[I_CLIMB] = _clip(x[I_CLIMB] + e_c * dt, -lim, lim)

    acc_r = p[P_AKP] * e_r - p[P_AKD] * x[WX] + p[P_AKI] * x[I_ROLL]
    acc_p = p[P_AKP] * e_p - p[P_AKD] * x[WY] + p[P_AKI] * x[I_PITCH]
    acc_y = p[P_YKP] * e_y + p[P_YKI] * x[I_YAW]
    acc_z = p[P_CKP] * e_c + p[P_CKI] * x[I_CLIMB]

    tau_x = p[P_IXX] * acc_r
    tau_y = p[P_IYY] * acc_p
    tau_z = p[P_IZZ] * acc_y
    tilt = math.cos(x[ROLL]) * math.cos(x[PITCH])
    if tilt < 0.3:
        tilt = 0.3
    thrust = p[P_MASS] * (p[P_G] + acc_z) / tilt
    thrust = _clip(thrust, 0.0, 4.0 * p[P_FMAX])

    a = p[P_ARM]
    k = p[P_KYAW]
    base = 0.25 * thrust
    rx = 0.25 * tau_x / a
    py = 0.25 * tau_y / a
    yz = 0.25 * tau_z / k
    fmax = p[P_FMAX]
    out[0] = _clip(base + rx - py - yz, 0.0, fmax)  # front-left
    out[1] = _clip(base - rx - py + yz, 0.0, fmax)  # front-right
    out[2] = _clip(base + rx + py + yz, 0.0, fmax)  # rear-left
    out[3] = _clip(base - rx + py - yz, 0.0, fmax)  # rear-right


@njit(cache=True)
def rigid_body_step(x, p, forces, wind_x, wind_y, dt):
    """One semi-implicit Euler step of the 6-DoF body under the given motor forces."""
    a = p[P_ARM]
    f0, f1, f2, f3 = forces[0], forces[1], forces[2], forces[3]
    thrust = f0 + f1 + f2 + f3
    tau_x = a * (f0 + f2 - f1 - f3)
    tau_y = a * (f2 + f3 - f0 - f1)
    tau_z = p[P_KYAW] * (-f0 + f1 + f2 - f3)

    cr, sr = math.cos(x[ROLL]), math.sin(x[ROLL])
    cp, sp = math.cos(x[PITCH]), math.sin(x[PITCH])
    cy, sy = math.cos(x[YAW]), math.sin(x[YAW])
    # body z axis in world
    bzx = cy * sp * cr + sy * sr
    bzy = sy * sp * cr - cy * sr
    bzz = cp * cr
    m = p[P_MASS]
    drag = p[P_DRAG]
    ax = thrust * bzx / m - drag * x[VX] + wind_x / m
    ay = thrust * bzy / m - drag * x[VY] + wind_y / m
    az = thrust * bzz / m - p[P_G]

    wx, wy, wz = x[WX], x[WY], x[WZ]
    ixx, iyy, izz = p[P_IXX], p[P_IYY], p[P_IZZ]
    dwx = (tau_x - (iyy - izz) * wy * wz) / ixx
    dwy = (tau_y - (izz - ixx) * wz * wx) / iyy
    dwz = (tau_z - (ixx - iyy) * wx * wy) / izz

    x[VX] += ax * dt
    x[VY] += ay * dt
    x[VZ] += az * dt
    x[PX] += x[VX] * dt
    x[PY] += x[VY] * dt
    x[PZ] += x[VZ] * dt
    x[WX] = wx + dwx * dt
    x[WY] = wy + dwy * dt
    x[WZ] = wz + dwz * dt
    wx, wy, wz = x[WX], x[WY], x[WZ]
    tp = sp / cp
    x[ROLL] += (wx + sr * tp * wy + cr * tp * wz) * dt
    x[PITCH] += (cr * wy - sr * wz) * dt
    x[YAW] += ((sr * wy + cr * wz) / cp) * dt
    if x[YAW] > math.pi:
        x[YAW] -= 2.0 * math.pi
    elif x[YAW] <= -math.pi:
        x[YAW] += 2.0 * math.pi


@njit(cache=True)
def classify_contact(x, p, plat_x, plat_y, plat_heading):
    h = x[PZ] - p[P_PLAT_TOP]
    if abs(x[ROLL]) > p[P_CRASH_TILT] or abs(x[PITCH]) > p[P_CRASH_TILT]:
        return TILT_CRASH
    if x[PX] < 0.0 or x[PY] < 0.0 or x[PX] > p[P_EXT_X] or x[PY] > p[P_EXT_Y] or x[PZ] > p[P_CEIL]:
        return WALL_CRASH
    dx = x[PX] - plat_x
    dy = x[PY] - plat_y
    c = math.cos(plat_heading)
    s = math.sin(plat_heading)
    along = c * dx + s * dy
    across = -s * dx + c * dy
    half = p[P_PLAT_HALF]
    if abs(along) <= half and abs(across) <= half:
        if h <= p[P_CONTACT] and x[VZ] <= 0.0:
            return TOUCHDOWN_PLATFORM
    elif x[PZ] <= p[P_CONTACT]:
        return TOUCHDOWN_GROUND
    return NO_CONTACT


@njit(cache=True)
def advance(x, p, setpoint, n_sub, dt, motors_on, plat0, plat1, plat_heading, wind, forces, info):
    """Advance ``n_sub`` physics substeps, stopping early on contact.

    ``setpoint`` = (roll stick, pitch stick, yaw rate, climb rate) with the
    sticks in [-1, 1], yaw rate in rad/s and climb rate in m/s. The platform moves linearly from ``plat0`` to ``plat1`` over
    the period. ``info`` receives (contact code, substeps run, vertical speed
    at contact). Returns the contact code.
    """
    info[0] = NO_CONTACT
    info[1] = n_sub
    info[2] = 0.0
    for i in range(n_sub):
        if motors_on:
            roll_sp, pitch_sp = limit_tilt(x, p, setpoint[0], setpoint[1])
            pid_forces(x, p, roll_sp, pitch_sp, setpoint[2], setpoint[3], dt, forces)
        else:
            for j in range(4):
                forces[j] = 0.0
        for j in range(4):
            x[F0 + j] = forces[j]
        vz_before = x[VZ]
        rigid_body_step(x, p, forces, wind[0], wind[1], dt)
        frac = (i + 1.0) / n_sub
        px = plat0[0] + frac * (plat1[0] - plat0[0])
        py = plat0[1] + frac * (plat1[1] - plat0[1])
        code = classify_contact(x, p, px, py, plat_heading)
        if code != NO_CONTACT:
            info[0] = code
            info[1] = i + 1
            info[2] = vz_before
            return code
    return NO_CONTACT


def hover_state(airframe: AirframeConfig, position=(0.0, 0.0, 10.0), yaw: float = 0.0) -> np.ndarray:
    x = np.zeros(STATE_SIZE)
    x[PX:PZ + 1] = position
    x[YAW] = yaw
    x[F0:F0 + 4] = airframe.mass * airframe.gravity / 4.0
    return x
