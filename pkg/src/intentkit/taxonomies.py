"""Shipped intent vocabularies.

Three built-in taxonomies cover the supported domains: multimodal dialogue
acts (30 classes), microblog posting motives (7), and reading-highlight
research intents (12). Custom vocabularies can be constructed directly with
Taxonomy and passed anywhere a built-in is accepted.
"""

from __future__ import annotations

from .types import Taxonomy

MINTREC2 = Taxonomy(
    name="mintrec2",
    labels=(
        "doubt",
        "acknowledge",
        "refuse",
        "warn",
        "emphasize",
        "complain",
        "praise",
        "apologize",
        "thank",
        "criticize",
        "care",
        "agree",
        "oppose",
        "taunt",
        "flaunt",
        "joke",
        "ask for opinions",
        "confirm",
        "explain",
        "invite",
        "plan",
        "inform",
        "advise",
        "arrange",
        "introduce",
        "comfort",
        "leave",
        "prevent",
        "greet",
        "ask for help",
    ),
)

WEIBO = Taxonomy(
    name="weibo",
    labels=(
        "advertisement",
        "exhibition",
        "identity clarification",
        "intimate interaction",
        "personal record",
        "emotional venting",
        "social approval",
    ),
)

HIGHLIGHT = Taxonomy(
    name="highlight",
    labels=(
        "define or explain",
        "find subtypes or classifications",
        "compare with similar terms",
        "investigate historical context",
        "explore how-to operations",
        "verify and compare data",
        "analyze trends",
        "explore applications",
        "trace source and context",
        "understand reasons",
        "analyze viewpoints",
        "trace controversies",
    ),
)

_BUILTIN = {t.name: t for t in (MINTREC2, WEIBO, HIGHLIGHT)}


def builtin_taxonomies() -> dict[str, Taxonomy]:
    """Name -> Taxonomy map of the shipped vocabularies."""
    return dict(_BUILTIN)


def get_taxonomy(name: str) -> Taxonomy:
    try:
        return _BUILTIN[name]
    except KeyError:
        known = ", ".join(sorted(_BUILTIN))
        raise KeyError(f"unknown taxonomy {name!r} (built-ins: {known})") from None
