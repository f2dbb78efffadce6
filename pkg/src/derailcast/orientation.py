"""Social-orientation annotation: prompt building, response parsing, agreement."""

from __future__ import annotations

import csv
import enum
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Hashable, Iterable, Sequence

from derailcast.backends.base import AnnotationBackend
from derailcast.errors import (
    AnnotationError,
    AnnotationParseError,
    TemplateError,
    TransportError,
    UndefinedStatisticError,
)
from derailcast.model import AXES, AXIS_ENUMS, Conversation, OrientationLabel, Turn, normalize_keyword

log = logging.getLogger(__name__)

PLACEHOLDER = "{Comments to Annotate}"

# The instruction block names the fourth axis "Progressiveness"; internally it
# is political_leaning.
_PREAMBLE = """\
Analyze the communication styles in the specified Wikipedia editor discussions according to four dimensions: power, benevolence, arousal, and progressiveness. Definitions and response options for each dimension are provided below. Begin by reading the first four conversations. For the fifth conversation, annotate every comment according to the dimensions provided, using the same format. Select the most appropriate option from each category for each comment. If a conversation has been partially annotated, only provide annotations for the remaining comments. Provide these annotations directly, without additional explanations or digressions.

Dimensions:

1. Power: This dimension gauges the extent to which an individual seeks to control or assert dominance in a conversation.
- Options: Assertive, Confident, Neutral, Open-minded, Submissive

2. Benevolence: This measures the warmth and positivity of the interactions.
- Options: Confrontational, Dismissive, Neutral, Friendly, Supportive

3. Arousal: This refers to the level of energy and excitement in the comment.
- Options: Energetic, Neutral, Calm

4. Progressiveness: This assesses the political orientation conveyed in the comment.
- Options: Liberal, Neutral, Conservative

In the following conversations drawn from Wikipedia discussion forums, each row corresponds to a turn number, an user name, and a comment made by that user. Provide a social orientation tag for every turn in the input, and do not skip any turns. Closely follow the format in the first four examples, and finish the last sample. Do not provide any explanations."""

_EXEMPLARS: tuple[tuple[str, str], ...] = (
    (
        "Turn 1: Tryptofish: == Good work! ==\n"
        "Turn 2: Tryptofish: '''The Admin's Barnstar''' For the apparently thankless task of drafting a suggested closing summary at the RfC/U.\n"
        "Turn 3: The Wordsmith: Thank you for your kindness. I do make an effort to be even-handed, no matter what people wiki_link about me.\n"
        "Turn 4: Lar: I was just popping by to offer some words of encouragement. Glad to see Tryp beat me to it. ++: /",
        "Turn 1: Open-minded, Supportive, Energetic, Neutral\n"
        "Turn 2: Open-minded, Supportive, Energetic, Neutral\n"
        "Turn 3: Open-minded, Friendly, Neutral, Neutral\n"
        "Turn 4: Open-minded, Supportive, Energetic, Neutral",
    ),
    (
        "Turn 1: Kestrel88: The infobox still lists the old population figure. Does anyone have the 2011 census source?\n"
        "Turn 2: MapleLeafEd: I added it last week, check the history before asking.\n"
        "Turn 3: Kestrel88: I did check. The edit was reverted as unsourced, so it needs a proper citation.",
        "Turn 1: Neutral, Neutral, Calm, Neutral\n"
        "Turn 2: Assertive, Dismissive, Neutral, Neutral\n"
        "Turn 3: Confident, Neutral, Calm, Neutral",
    ),
    (
        "Turn 1: Quillon: Removing the paragraph on the tax reform was censorship, plain and simple.\n"
        "Turn 2: Harbinger42: It cited an opinion blog. Bring a reliable source and it can go back in.\n"
        "Turn 3: Quillon: Every source that disagrees with you gets called unreliable. This article is being whitewashed.\n"
        "Turn 4: Harbinger42: Take it to the reliable sources noticeboard if you think I am wrong.",
        "Turn 1: Assertive, Confrontational, Energetic, Conservative\n"
        "Turn 2: Confident, Neutral, Calm, Neutral\n"
        "Turn 3: Assertive, Confrontational, Energetic, Conservative\n"
        "Turn 4: Confident, Dismissive, Calm, Neutral",
    ),
    (
        "Turn 1: Linden Tree: Sorry if this is the wrong place, but I think I broke the reference list on the climate policy page.\n"
        "Turn 2: Osprey: No worries, it was a missing closing tag. Fixed it for you.\n"
        "Turn 3: Linden Tree: Thank you so much, I am still learning the markup!",
        "Turn 1: Submissive, Friendly, Calm, Neutral\n"
        "Turn 2: Open-minded, Supportive, Calm, Neutral\n"
        "Turn 3: Submissive, Friendly, Energetic, Neutral",
    ),
)


@dataclass(frozen=True)
class AnnotationPromptTemplate:
    preamble: str = _PREAMBLE
    exemplars: tuple[tuple[str, str], ...] = _EXEMPLARS
    placeholder: str = PLACEHOLDER
    annotation_headers: tuple[str, ...] = ("Annotations:",)
    default_header: str = "Social Orientation Tags:"

    def __post_init__(self):
        if not self.placeholder:
            raise TemplateError("placeholder must be non-empty")
        for conv, ann in self.exemplars:
            if self.placeholder in conv or self.placeholder in ann:
                raise TemplateError("exemplars must not contain the placeholder")
        if self.placeholder in self.preamble:
            raise TemplateError("preamble must not contain the placeholder")

    def _header(self, i: int) -> str:
        return self.annotation_headers[i] if i < len(self.annotation_headers) else self.default_header

    def render(self) -> str:
        """Template text with exactly one placeholder."""
        parts = [self.preamble, ""]
        for i, (conv, ann) in enumerate(self.exemplars):
            parts += [f"Conversation {i + 1}:", conv, "", self._header(i), ann, ""]
        parts += [f"Conversation {len(self.exemplars) + 1}:", self.placeholder, "", self.default_header, ""]
        return "\n".join(parts)


def _one_line(text: str) -> str:
    return re.sub(r"\s*[\r\n]+\s*", " ", text).strip()


def render_conversation(turns: Sequence[Turn]) -> str:
    return "\n".join(
        f"Turn {i}: {_one_line(t.speaker)}: {_one_line(t.text)}" for i, t in enumerate(turns, start=1)
    )


def build_annotation_prompt(
    template: AnnotationPromptTemplate | str,
    c: Conversation | Sequence[Turn],
    placeholder: str = PLACEHOLDER,
) -> str:
    turns = c.turns if isinstance(c, Conversation) else c
    if not turns:
        raise ValueError("cannot annotate a conversation without turns")
    if isinstance(template, AnnotationPromptTemplate):
        placeholder = template.placeholder
        text = template.render()
    else:
        text = template
    count = text.count(placeholder)
    if count != 1:
        raise TemplateError(f"template must contain {placeholder!r} exactly once, found {count}")
    return text.replace(placeholder, render_conversation(turns))


def load_template(path: str | Path) -> str:
    text = Path(path).read_text(encoding="utf-8")
    if text.count(PLACEHOLDER) != 1:
        raise TemplateError(f"{path}: template must contain {PLACEHOLDER!r} exactly once")
    return text


def _display(word: str) -> str:
    return word.replace("_", "-").capitalize()


def render_labels(labels: Sequence[OrientationLabel]) -> str:
    return "\n".join(
        f"Turn {i}: " + ", ".join(_display(w) for w in lab.keywords())
        for i, lab in enumerate(labels, start=1)
    )


_TAG_LINE = re.compile(r"^turn\s+(\d+)\s*:\s*(.*?)\s*\.?\s*$", re.IGNORECASE)
_ALL_KEYWORDS = {m.value: axis for axis in AXES for m in AXIS_ENUMS[axis]}


def _parse_tag(turn: int, body: str) -> OrientationLabel:
    words = [w.strip() for w in body.split(",")]
    if len(words) != len(AXES):
        raise AnnotationParseError(
            f"turn {turn}: expected {len(AXES)} keywords, got {len(words)}", turn=turn, token=body
        )
    values = []
    for axis, word in zip(AXES, words):
        key = normalize_keyword(word)
        try:
            values.append(AXIS_ENUMS[axis](key))
        except ValueError:
            if key in _ALL_KEYWORDS:
                raise AnnotationParseError(
                    f"turn {turn}: {word!r} is not a {axis} keyword", turn=turn, token=word
                ) from None
            raise AnnotationParseError(
                f"turn {turn}: unknown {axis} keyword {word!r}", turn=turn, token=word
            ) from None
    return OrientationLabel(*values)


def parse_annotation_response(text: str, n_turns: int) -> list[OrientationLabel]:
    """Parse "Turn i: w1, w2, w3, w4" lines; returns all n_turns labels or raises."""
    if n_turns < 1:
        raise ValueError("n_turns must be >= 1")
    found: dict[int, OrientationLabel] = {}
    for line in text.splitlines():
        m = _TAG_LINE.match(line.strip())
        if not m:
            continue
        turn = int(m.group(1))
        if turn < 1 or turn > n_turns:
            raise AnnotationParseError(f"turn index {turn} outside 1..{n_turns}", turn=turn)
        if turn in found:
            raise AnnotationParseError(f"duplicate annotation for turn {turn}", turn=turn)
        found[turn] = _parse_tag(turn, m.group(2))
    missing = [i for i in range(1, n_turns + 1) if i not in found]
    if missing:
        raise AnnotationParseError(f"missing annotation for turn {missing[0]}", turn=missing[0])
    return [found[i] for i in range(1, n_turns + 1)]


def annotate_conversation(
    backend: AnnotationBackend,
    template: AnnotationPromptTemplate | str,
    c: Conversation,
    max_retries: int = 2,
) -> Conversation:
    """Label every turn of ``c``; makes at most ``1 + max_retries`` requests."""
    prompt = build_annotation_prompt(template, c)
    last_error: Exception | None = None
    attempts = 0
    for attempts in range(1, max_retries + 2):
        backend.throttle()
        try:
            response = backend.complete(prompt)
            labels = parse_annotation_response(response, c.n)
        except (AnnotationParseError, TransportError) as exc:
            log.info("annotation attempt %d for %s failed: %s", attempts, c.id, exc)
            last_error = exc
            continue
        return c.with_turns(replace(t, orientation=lab) for t, lab in zip(c.turns, labels))
    raise AnnotationError(
        f"could not annotate {c.id} after {attempts} attempts: {last_error}",
        last_error=last_error,
        attempts=attempts,
    )


class Judgment(str, enum.Enum):
    AGREE = "agree"
    SOMEWHAT_AGREE = "somewhat_agree"
    DISAGREE = "disagree"
    NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True)
class AgreementRecord:
    conversation_id: str
    turn_index: int
    axis: str
    judgment: Judgment
    annotator_id: str

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        object.__setattr__(self, "judgment", Judgment(normalize_keyword(str(getattr(self.judgment, "value", self.judgment)))))
        object.__setattr__(self, "turn_index", int(self.turn_index))

    @property
    def item(self) -> tuple[str, int, str]:
        return (self.conversation_id, self.turn_index, self.axis)


_CSV_FIELDS = ["conversation_id", "turn_index", "axis", "judgment", "annotator_id"]


def write_agreement_csv(records: Iterable[AgreementRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CSV_FIELDS)
        writer.writeheader()
        for r in records:
            writer.writerow({
                "conversation_id": r.conversation_id,
                "turn_index": r.turn_index,
                "axis": r.axis,
                "judgment": r.judgment.value,
                "annotator_id": r.annotator_id,
            })


def read_agreement_csv(path: str | Path) -> list[AgreementRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [AgreementRecord(**row) for row in csv.DictReader(fh)]


def krippendorff_alpha(records: Iterable) -> float:
    """Nominal Krippendorff's alpha.

    ``records`` holds ``(item, annotator, value)`` triples or AgreementRecords.
    Items rated once are not pairable and drop out. If every pairable value is
    identical there is no disagreement of either kind and 1.0 is returned.
    """
    by_item: dict[Hashable, list] = defaultdict(list)
    for rec in records:
        if isinstance(rec, AgreementRecord):
            by_item[rec.item].append(rec.judgment.value)
        else:
            item, _annotator, value = rec
            by_item[item].append(value)

    coincidence: Counter = Counter()
    for values in by_item.values():
        m = len(values)
        if m < 2:
            continue
        counts = Counter(values)
        for c, n_c in counts.items():
            for k, n_k in counts.items():
                pairs = n_c * (n_c - 1) if c == k else n_c * n_k
                if pairs:
                    coincidence[c, k] += pairs / (m - 1)
    if not coincidence:
        raise UndefinedStatisticError("no item was rated by two or more annotators")

    marginals: Counter = Counter()
    for (c, _k), v in coincidence.items():
        marginals[c] += v
    n = sum(marginals.values())
    observed = sum(v for (c, k), v in coincidence.items() if c != k)
    expected = sum(marginals[c] * marginals[k] for c in marginals for k in marginals if c != k)
    if expected == 0:
        if observed == 0:
            return 1.0
        raise UndefinedStatisticError("expected disagreement is zero")
    return 1.0 - (n - 1) * observed / expected


def agreement_summary(records: Sequence[AgreementRecord]) -> dict:
    """Proportion of each judgment, overall and per axis."""
    if not records:
        raise ValueError("agreement_summary needs at least one record")

    def proportions(rs: list[AgreementRecord]) -> dict[str, float]:
        counts = Counter(r.judgment for r in rs)
        return {j.value: counts.get(j, 0) / len(rs) for j in Judgment}

    by_axis: dict[str, list[AgreementRecord]] = defaultdict(list)
    for r in records:
        by_axis[r.axis].append(r)
    return {
        "n": len(records),
        "overall": proportions(list(records)),
        "by_axis": {axis: proportions(by_axis[axis]) for axis in AXES if axis in by_axis},
    }
