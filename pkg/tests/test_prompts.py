from pathlib import Path

import pytest

from textguard.prompts import (
    COT_BLOCK,
    FEWSHOT_BLOCK,
    FULL,
    PLACEHOLDER,
    PROMPT_CRITERIA,
    PromptToggles,
    prompt_template,
    render_prompt,
)

GOLDENS = Path(__file__).resolve().parent.parent / "prompts"

VARIANTS = {
    "prompt_full.txt": FULL,
    "prompt_no_context.txt": PromptToggles(context=False),
    "prompt_no_fewshot.txt": PromptToggles(fewshot=False),
    "prompt_no_cot.txt": PromptToggles(cot=False),
}


@pytest.mark.parametrize("filename,toggles", VARIANTS.items())
def test_goldens_byte_identical(filename, toggles):
    golden = (GOLDENS / filename).read_text(encoding="utf-8")
    assert prompt_template(toggles) == golden


def test_placeholder_present_once_in_every_variant():
    for toggles in VARIANTS.values():
        template = prompt_template(toggles)
        assert template.count(PLACEHOLDER) == 1


def test_blocks_compose():
    full = prompt_template(FULL)
    no_cot = prompt_template(PromptToggles(cot=False))
    no_fewshot = prompt_template(PromptToggles(fewshot=False))
    assert COT_BLOCK in full and COT_BLOCK not in no_cot
    assert FEWSHOT_BLOCK in full and FEWSHOT_BLOCK not in no_fewshot
    # dropping a block never perturbs the others
    assert no_cot == full.replace("\n\n" + COT_BLOCK, "")
    assert no_fewshot == full.replace("\n\n" + FEWSHOT_BLOCK, "")


def test_variants_distinct():
    rendered = {prompt_template(t) for t in VARIANTS.values()}
    assert len(rendered) == len(VARIANTS)


def test_toggle_names():
    assert FULL.name == "full"
    assert PromptToggles(context=False).name == "no_context"
    assert PromptToggles(cot=False).name == "no_cot"
    assert PromptToggles(fewshot=False).name == "no_fewshot"


def test_frozen_quirks_preserved():
    """The instruction text ships verbatim, including its irregularities."""
    full = prompt_template(FULL)
    assert "harrassment" in full            # criterion list spelling
    assert "organised crime" in full
    assert "fulfil any of the seven criteria" in full
    assert '""nowadays' in full             # doubled quote in one example
    assert full.count("Criteria fulfilled:") == 1
    assert "<insert statement here>" in full


def test_criteria_inventory():
    assert len(PROMPT_CRITERIA) == 7


def test_render_prompt_substitutes_text():
    out = render_prompt("eh knn why like that", FULL)
    assert "eh knn why like that" in out
    assert PLACEHOLDER not in out
    with pytest.raises(ValueError):
        render_prompt("", FULL)


def test_render_prompt_is_pure_substitution():
    template = prompt_template(FULL)
    text = "some comment"
    assert render_prompt(text, FULL) == template.replace(PLACEHOLDER, text)
