"""The engineered labelling prompt and its ablation toggles.

The prompt is assembled from four blocks: a context block (task framing plus
a Singlish slang glossary), the task block with the seven criteria (always
present), a chain-of-thought block stating the evaluation steps and the JSON
output contract, and a few-shot block of worked examples. A fixed footer
carries the insertion point for the comment under evaluation.

The block texts are frozen operational data: golden copies live under
``prompts/`` at the repo root and the test suite checks rendering against
them byte for byte. Do not reflow, respell, or "fix" them; several apparent
irregularities (spelling variants, a doubled quote in one example, trailing
spaces on two criterion lines) are intentional and load-bearing.
"""
from __future__ import annotations

from dataclasses import dataclass

from .taxonomy import Category

PLACEHOLDER = "<insert statement here>"

CONTEXT_BLOCK = """\
Context: You are helping to identify if a given Singlish comment is toxic by understanding its meaning and evaluating it on seven criteria.

Some examples of Singaporean slang and their definitions are provided below.
ghey: male homosexual, usually in a derogatory way
tiong: people from China, may be in a derogatory way
ceca: people from India, usually in a derogatory way
bbfa: people who are overweight and resigned to being alone
yalam: people who are ethnically Malay
fap: masturbation
piak: sexual intercourse
syt: sexy young thing
ZG or zao geng: accidentally showing underwear in public, usually for women
nnp: nipples
amdk: sarcastic reference to Caucasians being superior
siao: crazy
knn: vulgar word
kns: vulgar word
sot: Singlish for "shot", meaning no longer functional"""

# The two trailing spaces (criteria a and b) are part of the frozen text.
_TASK_LINES = (
    "Task: Iterate through the list of seven criteria below and determine "
    "whether the Singlish comment below, which includes Singaporean terms, "
    "fulfil any of the seven criteria below. You should be a more liberal "
    "labeller - if something has a 50% chance of being toxic, you should "
    "label it as such. You also need to take into account the Singlish "
    "terms, vulgarities, and unique racial, religious, and cosmopolitan "
    "context.",
    "a. hateful: Content that expresses, incites, or promotes hate based on "
    "race, gender, ethnicity, religion, nationality, sexual orientation, "
    "disability status, or caste. Hateful content aimed at non-protected "
    "groups (e.g., chess players) is harrassment. Hateful content that also "
    "includes violence or serious harm towards the targeted group based on "
    "race, gender, ethnicity, religion, nationality, sexual orientation, "
    "disability status, or caste. ",
    "b. harassment: Content that expresses, incites, or promotes harassing "
    "language towards any target/individual. Harassment content that also "
    "includes violence or serious harm towards any target/individual. ",
    "c. encouraging public harm: Content that promotes, facilitates, or "
    "encourages harmful public acts, vice or organised crime.",
    "d. encouraging self-harm: Content that promotes, encourages, or "
    "depicts acts of self-harm, such as suicide, cutting, and eating "
    "disorders. Content that encourages performing acts of self-harm, such "
    "as suicide, cutting, and eating disorders, or that gives instructions "
    "or advice on how to commit such acts.",
    "e. sexual: Content meant to arouse sexual excitement, such as the "
    "description of sexual activity, or that promotes sexual services "
    "(excluding sex education and wellness). Sexual content that includes "
    "an individual who is under 18 years old.",
    "f. toxic: Content that is rude, disrespectful, or profane, including "
    "the use of slurs. A very hateful, aggressive, disrespectful comment or "
    "otherwise very likely to make a user leave a discussion or give up on "
    "sharing their perspective.",
    "g. violent: Content that depicts death, violence, or physical injury.",
)

TASK_BLOCK = "\n".join(_TASK_LINES)

COT_BLOCK = """\
For each criterion, do the following:
1. Consider the Singlish comment below and determine whether the comment fulfills the criterion.
2. Provide a "Yes" or "No" label.
3. Provide a reason for the label.
4. Output the answers strictly in the following JSON format, replacing <criterion> with the criteria listed below:
{
    "<criterion>": {
        "label": "Yes" / "No",
        "reason": "<reason>"
    }
}"""

FEWSHOT_BLOCK = """\
Here are some examples of Singlish comments and which criteria they fulfill.

Singlish comment: "I thinking of making a school girl ZG/upskirt video, something like the schoolgirl above, then open legs show panties, or even pulling up her skirt let ppl beo. but donno will kena complain anot. Youtube alot of cheesepie ppl like to report for very minor things..."
Criteria fulfilled: encouraging public harm, sexual, toxic

Singlish comment: "yes. I want the judge to sentence the max jail term and caning. plus a bonus of they have to rape each other monthly. The loser will have to be rape again by another inmate."
Criteria flagged: harassment, toxic, encouraging public harm, sexual

Singlish comment: "Hi ib, u 1 day don't kanna fug u don't feel good si bo? Knnbccb"
Criteria flagged: toxic

Singlish comment: "wah piang eh there ish something insai every man dream on piaking girls in school uniform mens"
Criteria flagged: sexual

Singlish comment: ""nowadays pple dont have much integrity 1 la wont suicide 1. they will treat it lightly and say so be it"
Criteria flagged: encouraging self harm

Singlish comment: "Pray tell me why ceca cannot break through in other Asian economies like Korea, Japan, Taiwan, China if they are so good and compete fair and square? They only thrive in Singapore simply because ceca and our gahmen close 1 eye to their unfair hiring. By way I not pro singkee, since I migrate. Juz 2 cents"
Criteria flagged: hateful

Singlish comment: "The beach road tiong guy slashed his wife during broad daylight with full intention of killing her. Even severing her hand off and blinded her in one eye. It is over relationship issue as well like this case."
Criteria flagged: violent"""

FOOTER = (
    "Remember to return the output in a JSON format. The Singlish comment "
    "for your evaluation is: " + PLACEHOLDER
)

# Criterion names as they appear in the prompt, in prompt order.
PROMPT_CRITERIA: dict[str, Category] = {
    "hateful": Category.HATEFUL,
    "harassment": Category.HARASSMENT,
    "encouraging public harm": Category.PUBLIC_HARM,
    "encouraging self-harm": Category.SELF_HARM,
    "sexual": Category.SEXUAL,
    "toxic": Category.TOXIC,
    "violent": Category.VIOLENT,
}


@dataclass(frozen=True)
class PromptToggles:
    """Which optional blocks to include; the task block is always present."""

    context: bool = True
    fewshot: bool = True
    cot: bool = True

    @property
    def name(self) -> str:
        if self.context and self.fewshot and self.cot:
            return "full"
        off = [n for n, v in (("context", self.context), ("fewshot", self.fewshot), ("cot", self.cot)) if not v]
        return "no_" + "_".join(off) if len(off) < 3 else "task_only"


FULL = PromptToggles()


def prompt_template(toggles: PromptToggles = FULL) -> str:
    """The prompt with the insertion placeholder still in place."""
    blocks = []
    if toggles.context:
        blocks.append(CONTEXT_BLOCK)
    blocks.append(TASK_BLOCK)
    if toggles.cot:
        blocks.append(COT_BLOCK)
    if toggles.fewshot:
        blocks.append(FEWSHOT_BLOCK)
    blocks.append(FOOTER)
    return "\n\n".join(blocks)


def render_prompt(text: str, toggles: PromptToggles = FULL) -> str:
    """Substitute the comment under evaluation into the assembled prompt."""
    if not text:
        raise ValueError("text must be non-empty")
    return prompt_template(toggles).replace(PLACEHOLDER, text)
