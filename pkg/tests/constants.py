"""
Test constants
"""

#
# Acceptance parameter sets
#

# Extinction regime, f > r >= a
EXTINCTION_PARAMS = {"D": 1.0, "chi": 1.0, "a": 0.5, "r": 1.0, "f": 2.0}

# Persistence regime, r > r_c
PERSISTENCE_PARAMS = {"D": 1.0, "chi": 1.0, "a": 1.0, "r": 2.0, "f": 0.0}

# Cubic for D = chi = a = 1, f = 0
THRESHOLD_CUBIC = [16.0, 7.0, -24.0, -16.0]
THRESHOLD_R_C = 1.30


# Reduced resolution used by the default suite
SMALL_N_X = 16
TINY_N_X = 8
