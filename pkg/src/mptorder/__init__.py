"""Order-constrained multinomial processing tree models."""
__version__ = "0.1.0"

from .binary import BinaryTransform, CompiledModel, compile_model, to_binary
from .data import Dataset, simulate
from .dsl import ParseError, ParseFailure, SourceSpan, parse_model, read_model, serialize_model
from .errors import (FitError, InfeasibleError, ModelError, MptError, OrderError, ParamError,
                     PatternError)
from .estimation import (BackTransformed, BootstrapResult, FitResult, back_transform,
                         bootstrap_g2, fit)
from .model import (Branch, Factor, MptModel, OrderSpec, Parameter, SimplexGroup, Tree,
                    category_probabilities, validate)
from .polytope import (DominanceOrder, MixtureWeights, VertexSet, enumerate_vertices,
                       membership, recover_lambda)
from .reparam import (FreeTheta, Pipeline, apply_linear_order, apply_partial_order,
                      apply_subset_order, coverage_check, eta_to_lambda, lambda_to_eta,
                      solve_theta_k3, theta_to_lambda, transform_model)
from .selection import (ComparisonReport, FiaResult, compare, fia_penalty,
                        fisher_information)

__all__ = [
    "BackTransformed", "BinaryTransform", "BootstrapResult", "Branch", "CompiledModel",
    "ComparisonReport", "Dataset", "DominanceOrder", "Factor", "FiaResult", "FitError",
    "FitResult", "FreeTheta", "InfeasibleError", "MixtureWeights", "ModelError", "MptError",
    "MptModel", "OrderError", "OrderSpec", "ParamError", "Parameter", "ParseError",
    "ParseFailure", "PatternError", "Pipeline", "SimplexGroup", "SourceSpan", "Tree",
    "VertexSet", "apply_linear_order", "apply_partial_order", "apply_subset_order",
    "back_transform", "bootstrap_g2", "category_probabilities", "compare", "compile_model",
    "coverage_check", "enumerate_vertices", "eta_to_lambda", "fia_penalty", "fisher_information",
    "fit", "lambda_to_eta", "membership", "parse_model", "read_model", "recover_lambda",
    "serialize_model", "simulate", "solve_theta_k3", "theta_to_lambda", "to_binary",
    "transform_model", "validate",
]
