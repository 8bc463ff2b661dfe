"""Numerical tolerances and error codes shared by the solver engines."""

# Cut validity: LHS of a valid cut at a lifted point (x, xx^T) of the box
VALIDITY_TOL = 1e-9

# Separation: a cut enters the working set only above this violation
VIOLATION_TOL = 1e-6

# Redundancy LP: a candidate is redundant when its max violation stays below this
REDUNDANCY_TOL = 1e-7

# PSD test on the smallest eigenvalue
PSD_TOL = -1e-7

# Lifted consistency: |Y_ij - x_i x_j| above this triggers branching
LIFT_EPS = 1e-6

# Feasibility of a reported point: max_r (f_r(x) - b_r)
FEAS_TOL = 1e-7

# Feasibility at oracle grid points (looser, thin feasible sets)
GRID_FEAS_TOL = 1e-6

# Oracle combinatorial guard
ORACLE_MAX_VARS = 4
ORACLE_MIN_STEPS = 11

# Error codes
ERROR_CODES = {
    "INSTANCE_FORMAT": "Malformed instance document",
    "INSTANCE_VALUE": "Invalid instance value",
    "INPUT_UNREADABLE": "Unable to read input",
    "BAD_USAGE": "Invalid command-line usage",
    "ORACLE_GUARD": "Instance too large for the grid oracle",
    "SOLVER_ERROR": "Solver error",
}

# CLI exit codes
EXIT_OK = 0
EXIT_LIMIT = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
