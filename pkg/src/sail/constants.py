"""Physical constants and episode limits for the classic-control tasks.

Values follow the canonical formulations (Barto, Sutton & Anderson 1983 for
the cart-pole, Moore 1990 for the mountain car, Sutton 1996 for the acrobot)
in the parameterisation used by the Gym ``-v1``/``-v0`` releases.
"""

import math

# CartPole-v1
CARTPOLE_GRAVITY = 9.8
CARTPOLE_MASS_CART = 1.0
CARTPOLE_MASS_POLE = 0.1
CARTPOLE_TOTAL_MASS = CARTPOLE_MASS_CART + CARTPOLE_MASS_POLE
CARTPOLE_HALF_LENGTH = 0.5
CARTPOLE_POLEMASS_LENGTH = CARTPOLE_MASS_POLE * CARTPOLE_HALF_LENGTH
CARTPOLE_FORCE_MAG = 10.0
CARTPOLE_TAU = 0.02
CARTPOLE_THETA_LIMIT = 12 * 2 * math.pi / 360
CARTPOLE_X_LIMIT = 2.4
CARTPOLE_INIT_BOUND = 0.05
CARTPOLE_MAX_STEPS = 500
CARTPOLE_SOLVED = 195.0

# MountainCar-v0
MOUNTAINCAR_MIN_POSITION = -1.2
MOUNTAINCAR_MAX_POSITION = 0.6
MOUNTAINCAR_MAX_SPEED = 0.07
MOUNTAINCAR_GOAL_POSITION = 0.5
MOUNTAINCAR_GOAL_VELOCITY = 0.0
MOUNTAINCAR_FORCE = 0.001
MOUNTAINCAR_GRAVITY = 0.0025
MOUNTAINCAR_INIT_LOW = -0.6
MOUNTAINCAR_INIT_HIGH = -0.4
MOUNTAINCAR_MAX_STEPS = 200
MOUNTAINCAR_SOLVED = -110.0

# Acrobot-v1 ("book" dynamics)
ACROBOT_DT = 0.2
ACROBOT_LINK_LENGTH_1 = 1.0
ACROBOT_LINK_LENGTH_2 = 1.0
ACROBOT_LINK_MASS_1 = 1.0
ACROBOT_LINK_MASS_2 = 1.0
ACROBOT_LINK_COM_1 = 0.5
ACROBOT_LINK_COM_2 = 0.5
ACROBOT_LINK_MOI = 1.0
ACROBOT_GRAVITY = 9.8
ACROBOT_MAX_VEL_1 = 4 * math.pi
ACROBOT_MAX_VEL_2 = 9 * math.pi
ACROBOT_TORQUES = (-1.0, 0.0, 1.0)
ACROBOT_INIT_BOUND = 0.1
ACROBOT_GOAL_HEIGHT = 1.0
ACROBOT_MAX_STEPS = 500
