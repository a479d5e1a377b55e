"""Conic programs: representation, builders, and the interior-point solver."""

from .builders import (
    ANM3D_SIZE_CAP,
    SizeCapError,
    build_an1d_value,
    build_anm2d,
    build_anm3d,
    build_pdan_value,
    build_pdanm,
    build_wpdan_value,
    build_wpdanm,
    default_eta,
    extract_pdanm,
)
from .problem import (
    ConicProblem,
    ConicSolution,
    ProblemBuilder,
    SolverOptions,
    dump_problem,
    load_problem_dump,
    smat,
    svec,
)
from .solver import solve

__all__ = [
    "ANM3D_SIZE_CAP",
    "SizeCapError",
    "ConicProblem",
    "ConicSolution",
    "ProblemBuilder",
    "SolverOptions",
    "build_an1d_value",
    "build_anm2d",
    "build_anm3d",
    "build_pdan_value",
    "build_pdanm",
    "build_wpdan_value",
    "build_wpdanm",
    "default_eta",
    "dump_problem",
    "extract_pdanm",
    "load_problem_dump",
    "smat",
    "solve",
    "svec",
]
