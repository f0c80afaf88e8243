"""Safety-risk taxonomy: categories, tri-state labels, and provider mappings.

Seven risk categories plus a derived binary ``unsafe`` flag. Labels are
tri-state (yes / no / undetermined) so that disagreement between ensemble
labellers is representable; ``undetermined`` rows are excluded from training
and scoring downstream.

External moderation providers use their own category names; the mapping
between provider categories and ours ships as a versioned JSON data file
(``data/provider_mapping.json``) loaded at import time.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources


class Category(str, Enum):
    """The seven safety-risk categories."""

    HATEFUL = "hateful"
    HARASSMENT = "harassment"
    PUBLIC_HARM = "public_harm"
    SELF_HARM = "self_harm"
    SEXUAL = "sexual"
    TOXIC = "toxic"
    VIOLENT = "violent"

    @property
    def definition(self) -> str:
        return CATEGORY_DEFINITIONS[self]


# Full-text category definitions. These strings are operational data: they are
# embedded verbatim in the labelling task prompt and shipped with the model
# card, so they must not be reworded casually.
CATEGORY_DEFINITIONS: dict[Category, str] = {
    Category.HATEFUL: (
        "Content that expresses, incites, or promotes hate based on race, "
        "gender, ethnicity, religion, nationality, sexual orientation, "
        "disability status, or caste. Hateful content aimed at non-protected "
        "groups (e.g., chess players) is harrassment. Hateful content that "
        "also includes violence or serious harm towards the targeted group "
        "based on race, gender, ethnicity, religion, nationality, sexual "
        "orientation, disability status, or caste."
    ),
    Category.HARASSMENT: (
        "Content that expresses, incites, or promotes harassing language "
        "towards any target/individual. Without mention of violence or harm, "
        "content that results in prolonged mental or emotional suffering for "
        "the target, enduring for more than an hour. Any harassment content "
        "that includes violence or serious harm towards any target/individual."
    ),
    Category.PUBLIC_HARM: (
        "Content that promotes, facilitates, or encourages harmful public "
        "acts, vice or organized crime."
    ),
    Category.SELF_HARM: (
        "Content that promotes, encourages, or depicts acts of self-harm, "
        "such as suicide, cutting, and eating disorders. Content that "
        "encourages performing acts of self-harm, such as suicide, cutting, "
        "and eating disorders, or that gives instructions or advice on how "
        "to commit such acts."
    ),
    Category.SEXUAL: (
        "Content meant to arouse sexual excitement, such as the description "
        "of sexual activity, or that promotes sexual services (excluding sex "
        "education and wellness). Sexual content that includes an individual "
        "who is under 18 years old."
    ),
    Category.TOXIC: (
        "Content that is rude, disrespectful, or profane, including the use "
        "of slurs. A very hateful, aggressive, disrespectful comment or "
        "otherwise very likely to make a user leave a discussion or give up "
        "on sharing their perspective."
    ),
    Category.VIOLENT: (
        "Content that depicts death, violence, or physical injury."
    ),
}

CATEGORIES: tuple[Category, ...] = tuple(Category)

# Binary target name used alongside the seven categories in datasets, model
# bundles and reports.
BINARY = "binary"

ALL_TARGETS: tuple[str, ...] = (BINARY,) + tuple(c.value for c in CATEGORIES)


class TriState(str, Enum):
    """Label state: determined yes/no, or undetermined (no ensemble decision)."""

    YES = "yes"
    NO = "no"
    UNDETERMINED = "undetermined"

    @property
    def determined(self) -> bool:
        return self is not TriState.UNDETERMINED


def derive_binary(labels: dict[Category, TriState]) -> TriState:
    """Derive the binary unsafe flag from the seven category states.

    Tri-state disjunction: yes if any category is yes, no if all seven are
    no, undetermined otherwise.
    """
    if set(labels) != set(CATEGORIES):
        missing = sorted(c.value for c in set(CATEGORIES) - set(labels))
        raise ValueError(f"expected exactly 7 category states, missing: {missing}")
    states = list(labels.values())
    if any(s is TriState.YES for s in states):
        return TriState.YES
    if all(s is TriState.NO for s in states):
        return TriState.NO
    return TriState.UNDETERMINED


@dataclass(frozen=True)
class LabelVector:
    """Per-category tri-state labels plus the binary unsafe flag.

    By default the binary flag is derived from the category states via
    ``derive_binary``. An ensemble may supply an explicit binary instead,
    because aggregating per-model binaries is not the same operation as
    disjoining aggregated category states (two models flagging disjoint
    categories agree on unsafe while agreeing on no single category).
    """

    categories: dict[Category, TriState]
    unsafe: TriState | None = None

    def __post_init__(self) -> None:
        derived = derive_binary(self.categories)
        if self.unsafe is None:
            object.__setattr__(self, "unsafe", derived)

    def state(self, target: str) -> TriState:
        """State for a named target: ``binary`` or a category value."""
        if target == BINARY:
            return self.unsafe
        return self.categories[Category(target)]

    def to_dict(self) -> dict:
        return {
            "binary": self.unsafe.value,
            "labels": {c.value: s.value for c, s in self.categories.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabelVector":
        return cls(
            {Category(k): TriState(v) for k, v in d["labels"].items()},
            unsafe=TriState(d["binary"]) if "binary" in d else None,
        )


class Provider(str, Enum):
    """External moderation providers with a category mapping on file."""

    OPENAI_MODERATION = "openai_moderation"
    PERSPECTIVE = "perspective"
    LLAMAGUARD = "llamaguard"


def normalize_category_name(name: str) -> str:
    """Case-fold and collapse separators so e.g. 'Self-Harm' == 'self harm'."""
    return re.sub(r"[\s_\-/]+", " ", name.strip().casefold()).strip()


@dataclass(frozen=True)
class ProviderMapping:
    """Mapping from one provider's category names to our categories.

    A provider category may span several of ours (e.g. a combined
    violence-and-hate category), so entries are ordered lists. Provider
    categories with no counterpart are absent; lookups on them return empty.
    ``binary_rule`` states how the provider's binary unsafe score is formed:
    ``max_category`` (max over mapped per-category scores) or ``unsafe_token``
    (the provider supplies a dedicated unsafe probability under the key
    ``unsafe``).
    """

    provider: Provider
    entries: dict[str, tuple[Category, ...]]
    binary_rule: str

    def categories_for(self, name: str) -> tuple[Category, ...]:
        return self.entries.get(normalize_category_name(name), ())

    def provider_names_for(self, category: Category) -> tuple[str, ...]:
        return tuple(n for n, cats in self.entries.items() if category in cats)

    def covers(self, category: Category) -> bool:
        return any(category in cats for cats in self.entries.values())


def _load_mappings() -> dict[Provider, ProviderMapping]:
    raw = json.loads(
        resources.files("textguard").joinpath("data/provider_mapping.json").read_text("utf-8")
    )
    mappings = {}
    for provider_name, spec in raw["providers"].items():
        provider = Provider(provider_name)
        entries = {
            normalize_category_name(name): tuple(Category(c) for c in cats)
            for name, cats in spec["categories"].items()
        }
        mappings[provider] = ProviderMapping(
            provider=provider, entries=entries, binary_rule=spec["binary_rule"]
        )
    return mappings


PROVIDER_MAPPINGS: dict[Provider, ProviderMapping] = _load_mappings()


def map_external_category(provider: Provider | str, name: str) -> Category | None:
    """Map a provider's category name to ours; None when there is no counterpart.

    When a provider category spans several of ours, the first listed is
    returned; use ``PROVIDER_MAPPINGS[provider].categories_for`` for the full
    set.
    """
    try:
        provider = Provider(provider)
    except ValueError:
        raise ValueError(f"unknown provider: {provider!r}") from None
    cats = PROVIDER_MAPPINGS[provider].categories_for(name)
    return cats[0] if cats else None
