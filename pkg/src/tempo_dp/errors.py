class SolverError(RuntimeError):
    """Numerical or feasibility failure inside a solver.

    The CLI maps this to exit code 2; bad usage/inputs raise ValueError
    (exit code 1).
    """
