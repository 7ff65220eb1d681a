"""Prompt construction, transport and reply parsing for LLM-backed agents."""

from .agents import LLMDecider, LLMJudge, LLMReformulator, summarize_counts
from .client import ChatClient, ChatRequest, Completion, TransportError, complete, frame_attachments
from .parse import (
    ParseFailure,
    ParsedAction,
    ParsedReformulation,
    ParsedVerdict,
    parse_action,
    parse_reformulation,
    parse_verdict,
    serialize_memory,
)
from .templates import (
    PLACEHOLDERS,
    TEMPLATE_NAMES,
    MissingPlaceholder,
    PromptTemplate,
    UnknownTemplate,
    load_all_templates,
    load_template,
    render,
)

__all__ = [
    "ChatClient",
    "ChatRequest",
    "Completion",
    "LLMDecider",
    "LLMJudge",
    "LLMReformulator",
    "MissingPlaceholder",
    "PLACEHOLDERS",
    "ParseFailure",
    "ParsedAction",
    "ParsedReformulation",
    "ParsedVerdict",
    "PromptTemplate",
    "TEMPLATE_NAMES",
    "TransportError",
    "UnknownTemplate",
    "complete",
    "frame_attachments",
    "load_all_templates",
    "load_template",
    "parse_action",
    "parse_reformulation",
    "parse_verdict",
    "render",
    "serialize_memory",
    "summarize_counts",
]
