"""Spin-1/2 chain with elliptic exchange: exact diagonalization and Bethe-type solutions."""
from .chain import ModelParams, build_hamiltonian, diagonalize
from .bethe import enumerate_and_match, find_roots, solve, union_match
from .elliptic import EllipticContext, wp, wsigma, wzeta

__all__ = [
    "EllipticContext",
    "ModelParams",
    "build_hamiltonian",
    "diagonalize",
    "enumerate_and_match",
    "find_roots",
    "solve",
    "union_match",
    "wp",
    "wsigma",
    "wzeta",
]
