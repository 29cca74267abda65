"""Interpolatory model order reduction.

Tangential interpolation by Petrov-Galerkin projection for descriptor,
coprime (delay, higher-order) and parametric systems, together with
H2-optimal iterations (IRKA, TF-IRKA), Loewner realizations from data and
the weighted-H2 toolkit.
"""

from interpmor.coprime import (CoprimeSystem, ScalarSFunction, coprime_eval, coprime_reduce,
                               delay_family, pade2_delay_baseline)
from interpmor.dae import additive_decomposition, dae_reduce, spectral_projectors
from interpmor.errors import *  # noqa: F401,F403
from interpmor.h2 import (IrkaConfig, IrkaResult, descent_minimize, h2_error_norm, h2_gradient,
                          irka, optimality_residuals, polish_minimize)
from interpmor.interpolation import (TangentData, interpolatory_reduce, petrov_galerkin_reduce,
                                     reduce_with_feedthrough, verify_interpolation)
from interpmor.loewner import SampledTransfer, TabulatedTransfer, loewner_build, tf_irka
from interpmor.lti import (DescriptorSystem, PoleResidueForm, h2_norm, hinf_norm, is_stable,
                           pole_residue, series)
from interpmor.parametric import (CoefficientFunction, ParametricCoprimeSystem, ParamTangentData,
                                  mass_spring, multipoint_bases, param_eval, param_reduce,
                                  parametric_reduce, sensitivity_residual)
from interpmor.weighted import (WeightSystem, fmap_realization, weighted_h2_norm,
                                weighted_optimality_residuals)

__version__ = "0.1.0"
