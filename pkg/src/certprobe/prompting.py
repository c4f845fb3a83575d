"""Prompt rendering for the standard and expression-perturbed templates.

Rendering is pure and byte-stable; the rendered string is the cache key
for the completion gateway, so the templates must never drift silently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .core import Expression, QaItem
from .errors import EmptyQuestion

DEFAULT_STANDARD_TEMPLATE = "Question: {question}\nAnswer:"
DEFAULT_EXPRESSION_TEMPLATE = "Question: {question}\nAnswer: {expression}"


@dataclass(frozen=True)
class PromptTemplates:
    """Overridable templates; placeholders {question} and {expression}."""

    standard: str = DEFAULT_STANDARD_TEMPLATE
    expression: str = DEFAULT_EXPRESSION_TEMPLATE


@dataclass(frozen=True)
class PromptRendering:
    text: str
    question_id: str
    expression_id: Optional[str] = None


def render_standard(item: QaItem, templates: PromptTemplates = PromptTemplates()) -> PromptRendering:
    """Render the unperturbed prompt used to collect the model reference."""
    if not item.question:
        raise EmptyQuestion(f"item {item.id} has an empty question")
    return PromptRendering(
        text=templates.standard.format(question=item.question),
        question_id=item.id,
    )


def render_expression(
    item: QaItem, exp: Expression, templates: PromptTemplates = PromptTemplates()
) -> PromptRendering:
    """Render the perturbed prompt; the model continues after the phrase."""
    if not item.question:
        raise EmptyQuestion(f"item {item.id} has an empty question")
    return PromptRendering(
        text=templates.expression.format(question=item.question, expression=exp.text),
        question_id=item.id,
        expression_id=exp.id,
    )
