from .basis import K_MAX, BasisError, ReferenceBasis, SpaceKind, eval_basis, n_poly, reference_basis
from .linalg import Factorization, LinearSystem, SingularMatrixError, factor, resolve
from .quadrature import (MAX_DEGREE, EvalLattice, QuadratureError, QuadratureRule, edge_rule,
                         newton_cotes_lattice, quadrature_rule)
from .spaces import (DofMap, dof_length_scale, EdgePoints, PointSet, Tabulation, apply_essential, build_dofmap,
                     edge_points, gauss_points, lattice_points, tabulate, tabulate_points,
                     weighted_product)
