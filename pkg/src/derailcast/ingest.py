"""Corpus adapters, canonical JSONL I/O and deterministic splitting.

CGA-Wiki is read from the ConvoKit directory layout::

    corpus/
      utterances.jsonl    one utterance per line
      conversations.json  {conversation_id: {"meta": {"split": ..., ...}}}

Each utterance carries ``id``, ``conversation_id``, ``speaker`` (or ``user``),
``text``, optionally ``timestamp`` and
``meta.{is_section_header, comment_has_personal_attack}``.

BNC is read from JSONL, one four-comment thread per line::

    {"id": ..., "comments": [{"author": ..., "body": ...}] * 4,
     "label": "ad_hominem" | "delta"}

(``turns``/``speaker``/``text`` and ``outcome`` are accepted as aliases.)
"""

from __future__ import annotations

import enum
import json
import logging
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

from derailcast.errors import ConfigError, CorpusParseError, StructuralError
from derailcast.model import Conversation, Outcome, Source, Turn, validate_conversation

log = logging.getLogger(__name__)


class Split(str, enum.Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


_SPLIT_ALIASES = {"train": Split.TRAIN, "dev": Split.VALIDATION, "val": Split.VALIDATION,
                  "valid": Split.VALIDATION, "validation": Split.VALIDATION, "test": Split.TEST}


@dataclass(frozen=True)
class Dataset:
    name: str
    split: Split | None
    conversations: tuple[Conversation, ...]

    def __post_init__(self):
        object.__setattr__(self, "conversations", tuple(self.conversations))
        if self.split is not None:
            object.__setattr__(self, "split", Split(self.split))
        ids = [c.id for c in self.conversations]
        if len(set(ids)) != len(ids):
            dupes = sorted(i for i, k in Counter(ids).items() if k > 1)
            raise ValueError(f"duplicate conversation ids in {self.name}: {dupes[:5]}")

    def __len__(self) -> int:
        return len(self.conversations)

    def __iter__(self) -> Iterator[Conversation]:
        return iter(self.conversations)

    def ids(self) -> set[str]:
        return {c.id for c in self.conversations}


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        ratios = tuple(float(r) for r in self.ratios)
        if len(ratios) != 3:
            raise ConfigError(f"need exactly three split ratios, got {len(ratios)}")
        if any(r <= 0 for r in ratios):
            raise ConfigError(f"split ratios must be positive, got {ratios}")
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must sum to 1, got {sum(ratios)!r}")
        object.__setattr__(self, "ratios", ratios)


@dataclass
class LoadReport:
    kept: int = 0
    skipped: list[dict[str, str]] = field(default_factory=list)
    class_balance: dict[str, int] = field(default_factory=dict)
    turn_count_histogram: dict[int, int] = field(default_factory=dict)
    headers_removed: int = 0

    def skip(self, conv_id: str, reason: str) -> None:
        log.warning("skipping conversation %s: %s", conv_id, reason)
        self.skipped.append({"id": conv_id, "reason": reason})

    def record(self, c: Conversation) -> None:
        self.kept += 1
        self.class_balance[c.outcome.value] = self.class_balance.get(c.outcome.value, 0) + 1
        self.turn_count_histogram[c.n] = self.turn_count_histogram.get(c.n, 0) + 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "kept": self.kept,
            "skipped": len(self.skipped),
            "skipped_detail": list(self.skipped),
            "class_balance": dict(sorted(self.class_balance.items())),
            "turn_count_histogram": {str(k): v for k, v in sorted(self.turn_count_histogram.items())},
            "headers_removed": self.headers_removed,
        }


_HEADER = re.compile(r"^==.*==$", re.DOTALL)


def is_section_header(text: str) -> bool:
    return bool(_HEADER.match(text.strip()))


def _read_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(f"malformed JSON ({exc.msg})", line=lineno, path=str(path)) from exc
            if not isinstance(record, dict):
                raise CorpusParseError("record is not a JSON object", line=lineno, path=str(path))
            yield lineno, record


def _truthy_label(value: Any, positive: set[str], negative: set[str], where: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)) and value in (0, 1):
        return bool(value)
    if isinstance(value, str):
        v = value.strip().lower()
        if v in positive:
            return True
        if v in negative:
            return False
    raise CorpusParseError(f"unrecognised outcome label {value!r} {where}")


def load_cga_wiki(path: str | Path, report: LoadReport | None = None) -> dict[Split, Dataset]:
    """Load CGA-Wiki under its official splits, dropping section-header turns."""
    report = report if report is not None else LoadReport()
    path = Path(path)
    corpus_dir = path if path.is_dir() else path.parent
    utt_path = corpus_dir / "utterances.jsonl"
    conv_path = corpus_dir / "conversations.json"
    if not utt_path.exists():
        raise FileNotFoundError(utt_path)

    conv_meta: dict[str, dict] = {}
    if conv_path.exists():
        try:
            conv_meta = json.loads(conv_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorpusParseError(f"malformed JSON ({exc.msg})", line=exc.lineno, path=str(conv_path)) from exc

    grouped: dict[str, list[tuple[int, dict]]] = {}
    for lineno, rec in _read_jsonl(utt_path):
        for key in ("id", "conversation_id", "text"):
            if key not in rec:
                raise CorpusParseError(f"utterance lacks {key!r}", line=lineno, path=str(utt_path))
        grouped.setdefault(str(rec["conversation_id"]), []).append((lineno, rec))

    by_split: dict[Split, list[Conversation]] = {s: [] for s in Split}
    for conv_id in sorted(grouped):
        utts = grouped[conv_id]
        # file order breaks timestamp ties
        utts.sort(key=lambda item: (float(item[1].get("timestamp") or 0), item[0]))
        meta = (conv_meta.get(conv_id) or {}).get("meta", {})

        turns: list[Turn] = []
        for lineno, rec in utts:
            umeta = rec.get("meta") or {}
            text = rec["text"] if isinstance(rec["text"], str) else ""
            if umeta.get("is_section_header") or is_section_header(text):
                report.headers_removed += 1
                continue
            if not text.strip():
                report.headers_removed += 1
                continue
            attack = umeta.get("comment_has_personal_attack")
            turns.append(Turn(
                speaker=str(rec.get("speaker", rec.get("user", "unknown"))),
                text=text.strip(),
                is_derailment=None if attack is None else bool(attack),
            ))
        if len(turns) < 2:
            report.skip(conv_id, f"only {len(turns)} turn(s) left after removing headers")
            continue

        if "conversation_has_personal_attack" in meta:
            derailed = bool(meta["conversation_has_personal_attack"])
        elif turns[-1].is_derailment is not None:
            derailed = bool(turns[-1].is_derailment)
        else:
            raise CorpusParseError(f"conversation {conv_id} has no derailment label", path=str(utt_path))

        split_name = str(meta.get("split", "train")).lower()
        if split_name not in _SPLIT_ALIASES:
            raise CorpusParseError(f"conversation {conv_id} has unknown split {split_name!r}", path=str(conv_path))

        conv = Conversation(
            id=conv_id,
            turns=tuple(turns),
            prefix_len=len(turns) - 1,
            outcome=Outcome.from_bool(derailed),
            source=Source.CGA_WIKI,
        )
        problems = validate_conversation(conv)
        if problems:
            report.skip(conv_id, "; ".join(problems))
            continue
        report.record(conv)
        by_split[_SPLIT_ALIASES[split_name]].append(conv)

    return {s: Dataset("cga_wiki", s, convs) for s, convs in by_split.items()}


_BNC_POSITIVE = {"ad_hominem", "ad-hominem", "adhominem", "derailed", "derailing", "attack", "1", "true"}
_BNC_NEGATIVE = {"delta", "constructive", "benign", "0", "false"}


def load_bnc(path: str | Path, report: LoadReport | None = None) -> Dataset:
    """Load four-turn BNC threads; the fourth turn carries the outcome."""
    report = report if report is not None else LoadReport()
    path = Path(path)
    convs: list[Conversation] = []
    for lineno, rec in _read_jsonl(path):
        comments = rec.get("comments", rec.get("turns"))
        if not isinstance(comments, list):
            raise CorpusParseError("record lacks a comment list", line=lineno, path=str(path))
        if len(comments) != 4:
            raise StructuralError(f"expected 4 turns, got {len(comments)}", line=lineno, path=str(path))
        label = rec.get("label", rec.get("outcome"))
        if label is None:
            raise CorpusParseError("record lacks a label", line=lineno, path=str(path))
        try:
            derailed = _truthy_label(label, _BNC_POSITIVE, _BNC_NEGATIVE, f"at line {lineno}")
        except CorpusParseError as exc:
            raise CorpusParseError(str(exc), line=lineno, path=str(path)) from None

        turns = []
        for i, com in enumerate(comments):
            if not isinstance(com, dict):
                raise CorpusParseError(f"comment {i + 1} is not an object", line=lineno, path=str(path))
            text = com.get("body", com.get("text"))
            if not isinstance(text, str) or not text.strip():
                raise CorpusParseError(f"comment {i + 1} has no text", line=lineno, path=str(path))
            turns.append(Turn(
                speaker=str(com.get("author", com.get("speaker", f"user{i + 1}"))),
                text=text.strip(),
                is_derailment=derailed if i == 3 else False,
            ))
        conv = Conversation(
            id=str(rec.get("id", f"bnc-{lineno}")),
            turns=tuple(turns),
            prefix_len=3,
            outcome=Outcome.from_bool(derailed),
            source=Source.BNC,
        )
        problems = validate_conversation(conv)
        if problems:
            raise StructuralError("; ".join(problems), line=lineno, path=str(path))
        report.record(conv)
        convs.append(conv)
    return Dataset("bnc", None, convs)


def split_dataset(d: Dataset, rule: SplitSpec) -> dict[Split, Dataset]:
    """Seeded split; floor sizes for validation/test, remainder to train.

    Ids are sorted before shuffling so file order never affects membership.
    """
    convs = sorted(d.conversations, key=lambda c: c.id)
    random.Random(rule.seed).shuffle(convs)
    n = len(convs)
    n_val = math.floor(rule.ratios[1] * n + 1e-9)
    n_test = math.floor(rule.ratios[2] * n + 1e-9)
    n_train = n - n_val - n_test
    parts = {
        Split.TRAIN: convs[:n_train],
        Split.VALIDATION: convs[n_train:n_train + n_val],
        Split.TEST: convs[n_train + n_val:],
    }
    return {s: Dataset(d.name, s, part) for s, part in parts.items()}


def write_jsonl(conversations: Iterable[Conversation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in conversations:
            fh.write(json.dumps(c.to_dict(), ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path, name: str | None = None, split: Split | str | None = None) -> Dataset:
    path = Path(path)
    convs = []
    for lineno, rec in _read_jsonl(path):
        try:
            convs.append(Conversation.from_dict(rec))
        except (KeyError, ValueError, TypeError) as exc:
            raise CorpusParseError(f"bad conversation record: {exc}", line=lineno, path=str(path)) from exc
    if name is None:
        name = convs[0].source.value if convs else path.stem
    return Dataset(name, Split(split) if split else None, convs)
