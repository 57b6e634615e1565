"""Explainability toolkit: Shapley attributions, surrogate models, concepts."""

from .concepts import (
    ConceptConfig,
    ConceptSet,
    SalienceReport,
    SalientSnippet,
    Snippet,
    completeness_score,
    discover_concepts,
    extract_snippets,
    format_concept_card,
    load_concepts,
    salient_examples,
    save_concepts,
)
from .shapley import EXACT_TOKEN_LIMIT, ShapReport, exact_shap, shap_sample
from .slalom import (
    SlalomFitConfig,
    SlalomModel,
    SlalomPredictor,
    fit_slalom,
    slalom_predict,
)

__all__ = [
    "ConceptConfig",
    "ConceptSet",
    "EXACT_TOKEN_LIMIT",
    "SalienceReport",
    "SalientSnippet",
    "ShapReport",
    "SlalomFitConfig",
    "SlalomModel",
    "SlalomPredictor",
    "Snippet",
    "completeness_score",
    "discover_concepts",
    "exact_shap",
    "extract_snippets",
    "fit_slalom",
    "format_concept_card",
    "load_concepts",
    "salient_examples",
    "save_concepts",
    "shap_sample",
    "slalom_predict",
]
