from .tensorcore import DenseTensor, MultiIndex
from .tensorcore import alternating, monomial, enumerate_multiindices, transform, contract_skew, expand_skew
from .kernels import green, green_hessian, green_deriv
from .polyfield import PolyField, BackgroundModel, evaluate, uncurl, taylor_background, dipole_field, fit_polynomial
