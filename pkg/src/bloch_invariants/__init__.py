"""Band functions of periodic Schroedinger operators and the directional
spectral invariants that can be read off from them."""

__version__ = "0.1.0"

from .bands import (BandSpectrum, BasisSpec, assemble_and_solve, band_derivative,
                    match_eigenvalue, model_eigs)
from .estimators import BandSolver, HillSolver, InvariantExtractor
from .hill import (HillSpectrum, extract_I17_from_mu, fit_A_expansion, hill_solve, moment,
                   phi_sq_coeffs)
from .identities import check_identities, compare_C1, six_term_residual
from .invariants import derive_I16_I20, extract_Jk_family, oracle_J
from .lattice import (GammaDelta, LatticeBasis, SelectionParams, decompose, dual_lattice,
                      gamma_delta, maximal_elements, parse_lattice, select_beta)
from .pipeline import (InvariantEstimate, PipelineSettings, extract_J, extract_mu,
                       prepare_run)
from .potential import (DirectionalPotential, FourierPotential, directional, f_field,
                        oracle_invariants, parseval_integral, q_delta_b)

__all__ = [
    "__version__",
    "BandSpectrum", "BasisSpec", "assemble_and_solve", "band_derivative", "match_eigenvalue",
    "model_eigs",
    "BandSolver", "HillSolver", "InvariantExtractor",
    "HillSpectrum", "extract_I17_from_mu", "fit_A_expansion", "hill_solve", "moment",
    "phi_sq_coeffs",
    "check_identities", "compare_C1", "six_term_residual",
    "derive_I16_I20", "extract_Jk_family", "oracle_J",
    "GammaDelta", "LatticeBasis", "SelectionParams", "decompose", "dual_lattice", "gamma_delta",
    "maximal_elements", "parse_lattice", "select_beta",
    "InvariantEstimate", "PipelineSettings", "extract_J", "extract_mu", "prepare_run",
    "DirectionalPotential", "FourierPotential", "directional", "f_field", "oracle_invariants",
    "parseval_integral", "q_delta_b",
]
