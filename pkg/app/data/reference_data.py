"""Reference instances with values known in closed form or from a recorded run."""

import math

# lazy K_16, one marked node, T = 3 HT: expected_bound_over_schedule >= c / log2(T)^2
LEMMA2_CALIBRATION = {
    "graph": "complete:16",
    "lazy": True,
    "marked": [0],
    "c_T": 3.0,
    "constant": 1.0 / 20.0,
}

# non-lazy K_3 with M = {2}: h = (2, 2, 0), HT = 4/3; the lazy chain doubles both
COMPLETE3_HITTING = {
    "graph": "complete:3",
    "marked": [2],
    "hitting_times": [2.0, 2.0, 0.0],
    "HT": 4.0 / 3.0,
    "lazy_HT": 8.0 / 3.0,
}

# Delta = 0.5, eta = 0.1, eps = 0.01
GROUND_TIME = {
    "delta": 0.5,
    "eta": 0.1,
    "epsilon": 0.01,
    "t": 2.0 * math.log(0.99 / 1e-6),
    "T": math.sqrt(4.0 * math.log(0.99 / 1e-6)),
}

# log-log slopes: quantum time per find against HT, HT against n on cycles,
# and the floor on the decay of the bound over the schedule against log T
SCALING_SLOPES = {
    "time_per_find_vs_HT": (0.5, 0.1),
    "cycle_HT_vs_n": (2.0, 0.1),
    "bound_vs_logT_floor": -2.3,
}
