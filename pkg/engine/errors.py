"""
Exception hierarchy shared by the domain, engine and experiment packages.

The command line maps the three top-level families onto exit codes:
configuration problems -> 1, numerical failures -> 2, output failures -> 3.
"""


class SolverError(Exception):
    """Root of every error raised by this project"""


class ConfigurationError(SolverError):
    """Invalid experiment configuration or unsupported solver combination"""


# Geometry

class GeometryError(SolverError):
    """Level-set or grid query that cannot be answered"""


class DegenerateCrossingError(GeometryError):
    def __init__(self, inside_node, outside_node, message="no sign change along segment"):
        self.inside_node = tuple(inside_node)
        self.outside_node = tuple(outside_node)
        super().__init__(f"{message}: {self.inside_node} -> {self.outside_node}")


class DegenerateNormalError(GeometryError):
    def __init__(self, point, gradient_norm):
        self.point = tuple(point)
        self.gradient_norm = gradient_norm
        super().__init__(f"level-set gradient vanishes at {self.point} (|grad| = {gradient_norm:.3e})")


class ProjectionError(GeometryError):
    def __init__(self, point, iterations, residual):
        self.point = tuple(point)
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"closest-point projection from {self.point} did not converge in {iterations} "
            f"iterations (|rho| = {residual:.3e})"
        )


class DomainEscapeError(GeometryError):
    """Interface reached the rim of the computational box"""


class ExtensionError(GeometryError):
    """Too many band nodes without a usable normal"""


# Assembly

class AssemblyError(SolverError):
    def __init__(self, message, node=None):
        self.node = None if node is None else tuple(node)
        if self.node is not None:
            message = f"{message} (node {self.node})"
        super().__init__(message)


class EmptyDomainError(AssemblyError):
    def __init__(self):
        super().__init__("classification produced no computational nodes")


# Numerical failures

class NumericalFailure(SolverError):
    """Solver divergence, breakdown or accuracy failure"""


class FactorizationBreakdown(NumericalFailure):
    def __init__(self, row, pivot):
        self.row = row
        self.pivot = pivot
        super().__init__(f"incomplete Cholesky breakdown at row {row} (pivot {pivot:.3e})")


class ConvergenceError(NumericalFailure):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"CG did not converge in {iterations} iterations (residual {residual:.3e})")


class PhiAccuracyError(NumericalFailure):
    def __init__(self, estimate, error_bound, message="phi combination missed its tolerance"):
        self.estimate = estimate
        self.error_bound = error_bound
        super().__init__(f"{message} (error bound {error_bound:.3e})")


class SolutionBlowUp(NumericalFailure):
    def __init__(self, time, norm):
        self.time = time
        self.norm = norm
        super().__init__(f"solution blew up at t = {time:.6g} (norm {norm:.3e})")


class CFLViolation(NumericalFailure):
    def __init__(self, dt, limit):
        self.dt = dt
        self.limit = limit
        super().__init__(f"level-set step {dt:.3e} exceeds CFL limit {limit:.3e}")


class OutputError(SolverError):
    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")
