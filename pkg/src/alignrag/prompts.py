"""Default prompt templates; all are plain format strings.

Each template can be replaced through configuration. Placeholders use
str.format names, and templates end with a short stable cue so scripted
scorers can anchor preference rules on the final prompt tokens.
"""

from __future__ import annotations

KEYWORD_TEMPLATE = (
    "break the user question into contiguous substrings that carry its "
    "information. question: {user_question} keywords:"
)

ALIGN_TEMPLATE = (
    "question: {user_question} rewrite the keyword with phrases that occur "
    "in the collection. keyword: {keyword} aligned:"
)

VERIFY_TEMPLATE = (
    "question: {user_question} keywords: {keywords} aligned: {alignment} "
    "candidates: {draft} pick the objects needed to answer, then stop. "
    "selected: {selected}"
)

DECOMPOSE_TEMPLATE = (
    "split the question into simpler subquestions. "
    "question: {user_question} subquestions:"
)

REACT_TEMPLATE = (
    "solve the question by interleaving thought search and finish steps. "
    "question: {user_question} {history} next:"
)

DEFAULT_TEMPLATES = {
    "keyword": KEYWORD_TEMPLATE,
    "align": ALIGN_TEMPLATE,
    "verify": VERIFY_TEMPLATE,
    "decompose": DECOMPOSE_TEMPLATE,
    "react": REACT_TEMPLATE,
}
