"""Linear SDP instances, an interior point solver, and SDPA file interchange."""
from .problem import BlockLabel, SDPInstance, SDPSolution, Status, VarMap
from .sdpa import SDPAFormatError, export_sdpa, import_sdpa, import_solution, write_solution
from .solver import SolverOptions, solve

__all__ = [
    "BlockLabel", "SDPInstance", "SDPSolution", "Status", "VarMap", "SolverOptions", "solve",
    "SDPAFormatError", "export_sdpa", "import_sdpa", "import_solution", "write_solution",
]
