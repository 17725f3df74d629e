"""Parametric sewing-pattern templates, draping, and dataset generation."""

from .model import (
    Constraint,
    Diagnostic,
    Edge,
    EdgeRef,
    InfluenceEntry,
    Panel,
    ParameterRule,
    PatternSpec,
    SampleRecord,
    SchemaError,
    SemanticError,
    Stitch,
    TemplateError,
    TemplateSpec,
    TemplateSyntaxError,
    Vertex2D,
    validate,
    validate_template,
)
from .canonical import canonicalize, canonicalize_template
from .dsl import parse_template, serialize_template
from .params import (
    DegenerateEdgeError,
    ParameterError,
    SamplingError,
    apply_all,
    apply_constraints,
    apply_parameter,
    apply_template,
    restore_constraints,
    sample_pattern,
)

__version__ = "0.1.0"

__all__ = [
    "Constraint",
    "Diagnostic",
    "Edge",
    "EdgeRef",
    "InfluenceEntry",
    "Panel",
    "ParameterRule",
    "PatternSpec",
    "SampleRecord",
    "SchemaError",
    "SemanticError",
    "Stitch",
    "TemplateError",
    "TemplateSpec",
    "TemplateSyntaxError",
    "Vertex2D",
    "validate",
    "validate_template",
    "canonicalize",
    "canonicalize_template",
    "parse_template",
    "serialize_template",
    "DegenerateEdgeError",
    "ParameterError",
    "SamplingError",
    "apply_all",
    "apply_constraints",
    "apply_parameter",
    "apply_template",
    "restore_constraints",
    "sample_pattern",
    "__version__",
]
