"""Frozen expected values.

Hand-derived constants come from the case-study physical parameters; the
closed-loop numbers are frozen from this implementation with its default
references and initial states, so drift shows up as a test failure.
"""

# MSD: A(theta) entries for m = 2 kg, c = 3.109 N s/m, k in [500, 2000] N/m, ts = 0.01 s
MSD_A0 = [[1.0, 0.01], [-2.5, 1.0 - 0.015545]]
MSD_A1_21 = -10.0
MSD_DELTA_21 = -7.5
MSD_B = [0.0, 0.018585]

# HEX: ts = 10 s, alpha(0) = 0.002 1/s, alpha(1) = 0.005 1/s
HEX_A0_11 = 0.955
HEX_ALPHA = (0.002, 0.005)
HEX_B_C = [0.0025, 0.0]
HEX_E_C = [0.0, 0.002]

# scalar Neumann example: h0 = 2, dh = 1, theta = 0.1
NEUMANN_SCALAR = {"approx": 0.475, "exact": 1.0 / 2.1}

# explicit laws
ONE_D_REGIONS = 3
MSD_NOMINAL_REGIONS = 18

# closed-loop RMSE against the exact baseline, default references (rtol 1e-6)
FROZEN_RMSE = {
    ("msd", "m1", 0.5): 8.7182e-06,
    ("msd", "m2-inv", 0.5): 1.662e-05,
    ("msd", "m1", 1.0): 7.983e-06,
    ("msd", "m2-inv", 1.0): 6.788e-05,
    ("hex", "m1", 0.5): 3.754e-02,
    ("hex", "m2-inv", 0.5): 4.112e-02,
    ("hex", "m1", 1.0): 7.319e-02,
    ("hex", "m2-inv", 1.0): 3.973e-01,
}
FROZEN_RMSE_RTOL = 1e-3  # the frozen values above carry four significant digits

# Reported reference RMSE values (theta = 0.5, theta = 1) and the one-decade brackets
REPORTED_RMSE = {
    ("msd", "m1"): (1.98e-4, 3.89e-5),
    ("msd", "m2-inv"): (5.13e-5, 6.06e-5),
    ("hex", "m1"): (4.43e-2, 2.08e-2),
    ("hex", "m2-inv"): (1.31e-1, 2.58e-1),
}
