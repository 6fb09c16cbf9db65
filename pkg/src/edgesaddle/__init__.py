"""Block preconditioners for edge-element Maxwell saddle-point systems.

The public surface is split by topic:

``edgesaddle.mesh``
    structured triangle meshes and Triangle-format I/O
``edgesaddle.assembly``
    curl-curl, mass and discrete gradient matrices
``edgesaddle.saddle``
    the saddle system, block preconditioners and dense inverse oracles
``edgesaddle.krylov``
    CG and MINRES in euclidean or block inner products
``edgesaddle.spectral``
    eigenvalue diagnostics
``edgesaddle.genspd``
    generalized saddle matrices with a rank-deficient leading block
``edgesaddle.experiments`` / ``edgesaddle.cli``
    sweeps and the command-line driver
"""
from .krylov import InnerProduct, SolveReport, minres, pcg
from .mesh import Mesh, gen_lshape, gen_square
from .saddle import (
    InnerPolicy,
    PreconditionerConfig,
    SaddleSystem,
    build_system,
    make_preconditioner,
)

__version__ = "0.1.0"

__all__ = [
    "InnerPolicy",
    "InnerProduct",
    "Mesh",
    "PreconditionerConfig",
    "SaddleSystem",
    "SolveReport",
    "build_system",
    "gen_lshape",
    "gen_square",
    "make_preconditioner",
    "minres",
    "pcg",
]
