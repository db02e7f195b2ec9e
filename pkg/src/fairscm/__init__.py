"""Structural causal models, counterfactuals and fairness audits."""

__version__ = "0.1.0"

from .counterfactual import (EdgeSet, PosteriorU, abduct, abduct_batch, counterfactual_sample,  # noqa: E402
                             crossworld_sample, path_specific_eval)
from .dsl import ParseError, format_model, parse_model, parse_models  # noqa: E402
from .model import (Dataset, ScmModel, UnitAssignment, descendants, evaluate_unit, intervene,  # noqa: E402
                    sample, topological_order, validate)

__all__ = [
    "__version__", "EdgeSet", "PosteriorU", "abduct", "abduct_batch", "counterfactual_sample",
    "crossworld_sample", "path_specific_eval", "ParseError", "format_model", "parse_model", "parse_models",
    "Dataset", "ScmModel", "UnitAssignment", "descendants", "evaluate_unit", "intervene", "sample",
    "topological_order", "validate",
]
