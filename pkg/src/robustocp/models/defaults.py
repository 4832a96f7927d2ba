"""Model constants.

Values marked ``published`` are the fixed case-study constants and are
audited by the test suite.  Everything tagged ``non-published default`` was
filled in so the models close; change them through the config file, not here.
"""

from __future__ import annotations

import numpy as np

DEFAULTS_VERSION = 1

# ---------------------------------------------------------------- building --
# published
BUILDING_A = np.array(
    [
        [0.8511, 0.0541, 0.0707],
        [0.1293, 0.8635, 0.0055],
        [0.0989, 0.0032, 0.7541],
    ]
)
BUILDING_B = np.array([3.5e-3, 0.3e-3, 0.2e-3])
BUILDING_W = np.array(
    [
        [22.217e-3, 1.7912e-3, 42.2123e-3],
        [1.5376e-3, 0.6944e-3, 2.29214e-3],
        [103.1813e-3, 0.1032e-3, 196.0444e-3],
    ]
)
BUILDING_X0 = np.array([25.0, 24.0, 24.0])  # published, degC
BUILDING_MULTIPLIER_RANGE = (0.98, 1.02)  # published, delta_ij and eta_j
BUILDING_X0_OFFSET_RANGE = (-1.0, 1.0)  # published, d_wall and d_corr
BUILDING_T_MIN_DAY = 23.0  # published
BUILDING_T_MIN_NIGHT = 17.0  # published
BUILDING_T_MAX = 26.0  # published
BUILDING_HORIZON = 192  # published, 48 h
BUILDING_DAY_START_HOUR = 6.0  # published
BUILDING_DAY_HOURS = 12.0  # published
# (internal gain, solar radiation, external temperature); published
BUILDING_W_DAY = (np.array([4.0, 4.0, 6.0]), np.array([6.0, 6.0, 8.0]))
BUILDING_W_NIGHT = (np.array([0.0, 0.0, 2.0]), np.array([2.0, 0.0, 4.0]))
BUILDING_U_LIMITS = (-500.0, 1200.0)  # published, W
BUILDING_BETA_PRINTED = (-5030.0, 2.937, 0.003, 1207.0)  # published
# non-published default: least-squares refit of the offset-form sigmoid to the
# hard limits above, with both asymptotes pinned (see saturation.fit_saturation)
BUILDING_BETA_FIT = (0.335947, 0.00311658)
BUILDING_DESK_HORIZON = 24  # non-published default

# -------------------------------------------------------------- compressor --
# published
COMPRESSOR_ALPHA = np.array([2.691, -0.014, -0.041, 0.0009, 0.0002, 0.00002])
COMPRESSOR_M_TARGET = 100.0  # kg/s
COMPRESSOR_COST_WEIGHTS = (100.0, 0.1, 1000.0)  # (m_r^2, omega^2, (m - m_d)^2)
COMPRESSOR_T_FINAL = 100.0  # s
COMPRESSOR_STEP = 0.5  # s, modified Euler
COMPRESSOR_M_LIMITS = (65.0, 105.0)  # kg/s
COMPRESSOR_OMEGA_LIMITS = (550.0, 876.0)  # rad/s
COMPRESSOR_TORQUE_LIMITS = (0.0, 1000.0)  # N m
COMPRESSOR_BETA_TORQUE_PRINTED = (73.324, 0.072, 0.005, 0.0)
COMPRESSOR_BETA_RECYCLE_PRINTED = (0.072, 0.071, 5.279, -0.001)
COMPRESSOR_VALVE_GAIN_SPREAD = 0.05  # +-5 %
COMPRESSOR_ALPHA_SPREAD = 0.02  # +-2 %
COMPRESSOR_M_IN_COEFF = 0.4
COMPRESSOR_M_OUT_COEFF = 0.8
# non-published default: refits with asymptotes pinned to [0, 1000] and [0, 1]
COMPRESSOR_BETA_TORQUE_FIT = (0.0707156, 0.00529818)
COMPRESSOR_BETA_RECYCLE_FIT = (0.0707156, 5.29818)
COMPRESSOR_DESK_T_FINAL = 20.0  # non-published default

# Non-published defaults for the plant.  Pressures are in bar, flows in kg/s.
# Chosen so the open-loop plant is stable at (m, omega) = (100, 700) with
# slowest modes of a few seconds, and modified Euler at 0.5 s is well inside
# its stability region.
COMPRESSOR_PLANT = {
    "c_suction": 0.03,  # a_01^2 / V_s
    "c_discharge": 0.1,  # a_01^2 / V_d
    "c_duct": 0.3,  # A_1 / L_c
    "inertia": 5.0,  # J
    "k_torque": 500.0 / 70000.0,  # tau_c = k_torque * m * omega
    "tau_recycle": 2.0,  # tau_r, s
    "p_in": 2.0,
    "p_out": 37.391,
    "area_in": 250.0,
    "area_out": 100.0 / (0.8 * np.sqrt(10.0)),
    "area_rec": 4.4,
    "k_in": 1.0,
    "k_out": 1.0,
    "k_rec": 1.0,
    # auxiliary PI driving u_rec: opens the recycle valve below a surge-margin flow
    "m_surge": 75.0,
    "kp_recycle": 0.05,
    "ki_recycle": 0.01,
    "sqrt_eps": 1e-6,
    # initial operating point: equilibrium at m = 80 kg/s with the recycle closed
    "m_init": 80.0,
}
# Default (untuned) PI gains for the nominal comparison controller.
COMPRESSOR_DEFAULT_GAINS = (-20.0, -5.0)
