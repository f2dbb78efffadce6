"""Command-line entry point.

Every option can come from a YAML config (``--config``); flags override it.
Each run writes a manifest next to its primary output recording the resolved
config, its hash, seeds, input and output digests and library versions.
``derailcast replay --manifest M`` re-runs it and checks the outputs match.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import platform
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy
import yaml

from derailcast import __version__
from derailcast.backends import (
    BagOfWordsClassifier,
    BowConfig,
    GenerationParams,
    SequenceAnnotator,
    StubAnnotator,
    load_classifier,
    load_generator,
)
from derailcast.backends.bigram import BigramGenerator
from derailcast.backends.remote import JsonLinesChannel, RemoteAnnotator, RemoteClassifier, RemoteGenerator
from derailcast.classifier import (
    AugmentationReport,
    augment_training_set,
    train_derailment_classifier,
    write_examples,
)
from derailcast.errors import AnnotationError, ConfigError, CorpusParseError, DerailcastError, TransportError
from derailcast.eval import (
    ablate_prefix_length,
    ablate_vote_count,
    bleu_self_diversity,
    metrics_from_results,
    metrics_table,
    run_motivation_experiment,
)
from derailcast.eval.bleu import continuation_tokens
from derailcast.eval.report import BLEU_VARIANT, dumps
from derailcast.forecast import conversation_seed, forecast_batch, read_results, write_results
from derailcast.generator import (
    KPolicy,
    SerializationScheme,
    build_training_pairs,
    generator_corpus,
    sample_continuations,
)
from derailcast.ingest import (
    LoadReport,
    Split,
    SplitSpec,
    load_bnc,
    load_cga_wiki,
    read_jsonl,
    split_dataset,
    write_jsonl,
)
from derailcast.model import ContinuationSet, TieRule
from derailcast.orientation import AnnotationPromptTemplate, annotate_conversation, load_template
from derailcast.synthetic import PLANTED_SCHEME, make_planted_corpus, planted_splits

log = logging.getLogger("derailcast")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

SCHEMES = {"default": SerializationScheme(), "planted": PLANTED_SCHEME}


class UsageError(Exception):
    """Bad invocation: missing input, unknown key, malformed value."""


# -- option tables -----------------------------------------------------------


@dataclass(frozen=True)
class Opt:
    key: str  # dotted config key
    type: Callable | None = str
    default: Any = None
    help: str = ""
    role: str | None = None  # "in" / "out" mark files for the manifest
    choices: tuple | None = None
    flag: bool = False

    @property
    def dest(self) -> str:
        return self.key.replace(".", "__")

    @property
    def option(self) -> str:
        return "--" + self.key.rsplit(".", 1)[-1].replace("_", "-")


def _floats(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if x.strip()]


_DEFAULT_PARAMS = GenerationParams()
SAMPLING = [
    Opt("sampling.temperature", float, _DEFAULT_PARAMS.temperature, "sampling temperature"),
    Opt("sampling.top_p", float, _DEFAULT_PARAMS.top_p, "nucleus mass"),
    Opt("sampling.repetition_penalty", float, _DEFAULT_PARAMS.repetition_penalty, "repetition penalty"),
    Opt("sampling.max_new_tokens", int, _DEFAULT_PARAMS.max_new_tokens, "generation length cap"),
]
BOW = [
    Opt("bow.l2", float, 1e-3, "L2 strength"),
    Opt("bow.max_iter", int, 500, "optimizer iteration cap"),
    Opt("bow.max_tokens", int, None, "classifier input capacity in tokens"),
]
VOTING = [
    Opt("threshold", float, 0.5, "binarization threshold"),
    Opt("tie_rule", str, TieRule.PREDICT_DERAILMENT.value, "tie resolution",
        choices=tuple(t.value for t in TieRule)),
    Opt("max_turns_cap", int, 16, "keep at most this many generated turns"),
]
SCHEME = Opt("scheme", str, "default", "serialization scheme: default, planted, or a mapping in the config")

COMMANDS: dict[str, list[Opt]] = {
    "ingest": [
        Opt("dataset", str, None, "input format", choices=("cga_wiki", "bnc", "jsonl")),
        Opt("input", str, None, "corpus file or directory", role="in"),
        Opt("output", str, None, "output directory", role="out"),
        Opt("split_seed", int, 0, "seed for the split shuffle"),
        Opt("ratios", _floats, [0.8, 0.1, 0.1], "train,validation,test ratios"),
    ],
    "annotate": [
        Opt("input", str, None, "canonical JSONL", role="in"),
        Opt("template", str, None, "prompt template file (default: built-in)", role="in"),
        Opt("backend", str, "stub", "stub | stub:garbage | exec:<command> | tcp:<host>:<port>"),
        Opt("output", str, None, "labeled JSONL", role="out"),
        Opt("max_retries", int, 2, "retries per conversation"),
        Opt("resume", bool, False, "keep conversations already fully labeled in the output", flag=True),
    ],
    "train-generator": [
        Opt("train", str, None, "training JSONL", role="in"),
        Opt("output", str, None, "model JSON", role="out"),
        Opt("k_policy", str, KPolicy.GOLD_PREFIX.value, "context length policy",
            choices=tuple(p.value for p in KPolicy)),
        Opt("k", int, None, "context length for fixed_k"),
        Opt("context_limit", int, None, "prompt capacity in tokens"),
        SCHEME,
    ],
    "train-classifier": [
        Opt("train", str, None, "training JSONL", role="in"),
        Opt("generator", str, None, "generator model for synthetic futures", role="in"),
        Opt("output", str, None, "model JSON", role="out"),
        Opt("l", int, 2, "synthetic futures per conversation"),
        Opt("k", int, None, "prefix length (default: each benign prefix)"),
        Opt("seed", int, 0, "base seed"),
        Opt("examples_out", str, None, "also write the augmented examples here", role="out"),
        Opt("max_turns_cap", int, 16, "keep at most this many generated turns"),
        SCHEME,
        *SAMPLING,
        *BOW,
    ],
    "generate": [
        Opt("input", str, None, "canonical JSONL", role="in"),
        Opt("generator", str, None, "model JSON or remote target", role="in"),
        Opt("output", str, None, "continuation sets JSONL", role="out"),
        Opt("L", int, 5, "continuations per conversation"),
        Opt("k", int, None, "prefix length (default: each benign prefix)"),
        Opt("seed", int, 0, "base seed"),
        Opt("max_turns_cap", int, 16, "keep at most this many generated turns"),
        SCHEME,
        *SAMPLING,
    ],
    "forecast": [
        Opt("input", str, None, "canonical JSONL", role="in"),
        Opt("generator", str, None, "model JSON or remote target", role="in"),
        Opt("classifier", str, None, "model JSON or remote target", role="in"),
        Opt("output", str, None, "forecast results JSONL", role="out"),
        Opt("report", str, None, "batch report JSON", role="out"),
        Opt("L", int, 5, "continuations per conversation"),
        Opt("k", int, None, "prefix length (default: each benign prefix)"),
        Opt("seed", int, 0, "base seed"),
        Opt("method", str, "vote", "aggregation", choices=("vote", "mean")),
        Opt("jobs", int, 1, "worker threads"),
        SCHEME,
        *VOTING,
        *SAMPLING,
    ],
    "evaluate": [
        Opt("results", str, None, "NAME=PATH or PATH of forecast results (repeatable)", role="in"),
        Opt("baseline", str, None, "row name the significance marker compares against"),
        Opt("output", str, None, "markdown table", role="out"),
        Opt("json", str, None, "metrics JSON", role="out"),
    ],
    "ablate": [
        Opt("kind", str, "votes", "which ablation", choices=("votes", "prefix")),
        Opt("input", str, None, "canonical JSONL", role="in"),
        Opt("generator", str, None, "model JSON", role="in"),
        Opt("classifier", str, None, "model JSON", role="in"),
        Opt("output", str, None, "table JSON", role="out"),
        Opt("markdown", str, None, "table markdown", role="out"),
        Opt("L_values", _ints, [1, 3, 5], "vote counts for the votes ablation"),
        Opt("k_values", _ints, [2, 4], "prefix lengths for the prefix ablation"),
        Opt("L", int, 5, "continuations per conversation for the prefix ablation"),
        Opt("seed", int, 0, "base seed"),
        SCHEME,
        *VOTING,
        *SAMPLING,
    ],
    "diversity": [
        Opt("continuations", str, None, "continuation sets JSONL", role="in"),
        Opt("output", str, None, "diversity JSON", role="out"),
        Opt("max_ngram", int, 4, "largest n-gram order"),
    ],
    "motivation": [
        Opt("train", str, None, "training JSONL", role="in"),
        Opt("test", str, None, "test JSONL", role="in"),
        Opt("output", str, None, "result JSON", role="out"),
        Opt("markdown", str, None, "table markdown", role="out"),
        SCHEME,
        *BOW,
    ],
    "synth": [
        Opt("output", str, None, "output directory", role="out"),
        Opt("pairs", int, 500, "derailing/benign twin pairs"),
        Opt("seed", int, 0, "corpus seed"),
        Opt("motif_len", int, 6, "length of the ordering motif"),
        Opt("prefix_turns", int, 3, "benign turns per conversation"),
        Opt("future_turns", int, 1, "turns after the prefix"),
        Opt("ratios", _floats, [0.8, 0.1, 0.1], "train,validation,test ratios over pairs"),
    ],
}


def defaults_for(command: str) -> dict:
    cfg: dict = {}
    for opt in COMMANDS[command]:
        _set(cfg, opt.key, copy.deepcopy(opt.default))
    return cfg


def _set(cfg: dict, key: str, value: Any) -> None:
    *parents, leaf = key.split(".")
    for p in parents:
        cfg = cfg.setdefault(p, {})
    cfg[leaf] = value


def _get(cfg: dict, key: str) -> Any:
    for part in key.split("."):
        cfg = cfg[part]
    return cfg


def merge_config(command: str, file_cfg: dict | None, flags: dict) -> dict:
    """defaults < config file < flags; unknown config keys are an error."""
    cfg = defaults_for(command)
    known = {o.key: o for o in COMMANDS[command]}

    def walk(node: dict, prefix: str = "") -> None:
        for k, v in node.items():
            key = f"{prefix}{k}"
            if key in known:
                opt = known[key]
                if v is not None and opt.type in (_floats, _ints) and not isinstance(v, list):
                    v = opt.type(v)
                _set(cfg, key, v)
            elif isinstance(v, dict) and any(o.startswith(key + ".") for o in known):
                walk(v, key + ".")
            else:
                raise UsageError(f"unknown config key {key!r} for {command}")

    walk(file_cfg or {})
    for key, value in flags.items():
        if value is not None:
            _set(cfg, key, value)
    for opt in COMMANDS[command]:
        if opt.choices and _get(cfg, opt.key) not in (None, *opt.choices):
            raise UsageError(f"{opt.key} must be one of {opt.choices}")
    return cfg


# -- helpers --------------------------------------------------------------


def sha256_path(path: str | Path) -> str:
    path = Path(path)
    h = hashlib.sha256()
    if path.is_dir():
        for child in sorted(p for p in path.rglob("*") if p.is_file() and not p.name.endswith(".manifest.json")):
            h.update(str(child.relative_to(path)).encode())
            h.update(child.read_bytes())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def versions() -> dict[str, str]:
    return {
        "derailcast": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pyyaml": yaml.__version__,
    }


def _require_input(path: str | None, what: str) -> Path:
    if not path:
        raise UsageError(f"missing required option --{what.replace('_', '-')}")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {path}")
    return p


def _require_output(path: str | None, what: str = "output") -> Path:
    if not path:
        raise UsageError(f"missing required option --{what.replace('_', '-')}")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _write_text(path: Path, text: str) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def resolve_scheme(value: Any) -> SerializationScheme:
    if isinstance(value, dict):
        try:
            return SerializationScheme.from_dict(value)
        except TypeError as exc:
            raise ConfigError(f"bad scheme mapping: {exc}") from exc
    if value in SCHEMES:
        return SCHEMES[value]
    raise ConfigError(f"unknown scheme {value!r}; use one of {sorted(SCHEMES)} or a mapping")


def sampling_params(cfg: dict) -> GenerationParams:
    return GenerationParams(**cfg["sampling"])


def bow_config(cfg: dict) -> BowConfig:
    b = cfg["bow"]
    return BowConfig(l2=b["l2"], max_iter=b["max_iter"], max_tokens=b["max_tokens"])


def _channel(target: str) -> JsonLinesChannel | None:
    if target.startswith("exec:"):
        return JsonLinesChannel.spawn(target[len("exec:"):])
    if target.startswith("tcp:"):
        host, _, port = target[len("tcp:"):].rpartition(":")
        if not host or not port.isdigit():
            raise UsageError(f"bad tcp backend target {target!r}; expected tcp:<host>:<port>")
        return JsonLinesChannel.connect(host, int(port))
    return None


def _load_model(target: str | None, what: str) -> tuple[dict | None, JsonLinesChannel | None]:
    if not target:
        raise UsageError(f"missing required option --{what}")
    channel = _channel(target)
    if channel is not None:
        return None, channel
    path = _require_input(target, what)
    try:
        return json.loads(path.read_text(encoding="utf-8")), None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} file {target} is not JSON: {exc}") from exc


def open_generator(target: str | None):
    data, channel = _load_model(target, "generator")
    if channel is not None:
        return RemoteGenerator(channel), None
    return load_generator(data["generator"]), SerializationScheme.from_dict(data["scheme"])


def open_classifier(target: str | None):
    data, channel = _load_model(target, "classifier")
    if channel is not None:
        return RemoteClassifier(channel), None
    return load_classifier(data["classifier"]), SerializationScheme.from_dict(data["scheme"])


def pick_scheme(cfg: dict, *from_models: SerializationScheme | None) -> SerializationScheme:
    found = [s for s in from_models if s is not None]
    if any(s != found[0] for s in found[1:]):
        raise ConfigError("generator and classifier were trained with different serialization schemes")
    return found[0] if found else resolve_scheme(cfg["scheme"])


# -- commands ------------------------------------------------------------


def cmd_ingest(cfg: dict) -> list[Path]:
    if not cfg["dataset"]:
        raise UsageError("missing required option --dataset")
    src = _require_input(cfg["input"], "input")
    if not cfg["output"]:
        raise UsageError("missing required option --output")
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    report = LoadReport()
    written = []
    try:
        if cfg["dataset"] == "cga_wiki":
            splits = load_cga_wiki(src, report)
        else:
            loaded = load_bnc(src, report) if cfg["dataset"] == "bnc" else read_jsonl(src)
            splits = split_dataset(loaded, SplitSpec(tuple(cfg["ratios"]), cfg["split_seed"]))
    except CorpusParseError:
        _write_text(out / "load_report.json", dumps(report.to_dict()))
        raise
    for split in Split:
        if split in splits:
            path = out / f"{split.value}.jsonl"
            write_jsonl(splits[split], path)
            written.append(path)
    written.append(_write_text(out / "load_report.json", dumps(report.to_dict())))
    return written


def _annotator(target: str):
    if target == "stub":
        return StubAnnotator()
    if target == "stub:garbage":
        return SequenceAnnotator(["I am not sure what you mean."])
    channel = _channel(target)
    if channel is None:
        raise UsageError(f"unknown annotation backend {target!r}")
    return RemoteAnnotator(channel)


def cmd_annotate(cfg: dict) -> list[Path]:
    src = _require_input(cfg["input"], "input")
    out = _require_output(cfg["output"])
    template = load_template(cfg["template"]) if cfg["template"] else AnnotationPromptTemplate()
    dataset = read_jsonl(src)
    done = {}
    if cfg["resume"] and out.exists():
        for c in read_jsonl(out):
            if all(t.orientation is not None for t in c.turns):
                done[c.id] = c
    backend = _annotator(cfg["backend"])
    labeled, failures = [], []
    for c in dataset:
        if c.id in done:
            labeled.append(done[c.id])
            continue
        try:
            labeled.append(annotate_conversation(backend, template, c, max_retries=cfg["max_retries"]))
        except AnnotationError as exc:
            failures.append({
                "id": c.id,
                "attempts": exc.attempts,
                "error": str(exc.last_error),
                "transport": isinstance(exc.last_error, TransportError),
            })
            labeled.append(c)
    write_jsonl(labeled, out)
    sidecar = Path(str(out) + ".failures.json")
    _write_text(sidecar, dumps({
        "failures": failures,
        "annotated": len(labeled) - len(failures) - len(done),
        "resumed": len(done),
    }))
    if failures and any(f["transport"] for f in failures):
        raise TransportError(f"annotation backend unreachable for {len(failures)} conversation(s); see {sidecar}")
    return [out, sidecar]


def cmd_train_generator(cfg: dict) -> list[Path]:
    train = read_jsonl(_require_input(cfg["train"], "train"))
    out = _require_output(cfg["output"])
    scheme = resolve_scheme(cfg["scheme"])
    report: dict = {}
    pairs = build_training_pairs(train, scheme, cfg["k_policy"], cfg["k"], report)
    g = BigramGenerator.train(generator_corpus(pairs, scheme), context_limit=cfg["context_limit"])
    _write_text(out, dumps({"generator": g.to_dict(), "scheme": scheme.to_dict(), "pairs": report}))
    return [out]


def cmd_train_classifier(cfg: dict) -> list[Path]:
    train = read_jsonl(_require_input(cfg["train"], "train"))
    out = _require_output(cfg["output"])
    g, g_scheme = (None, None)
    if cfg["l"] > 0:
        g, g_scheme = open_generator(cfg["generator"])
    scheme = pick_scheme(cfg, g_scheme)
    aug = AugmentationReport()
    examples = augment_training_set(
        train, g, scheme, cfg["l"], sampling_params(cfg), cfg["seed"], k=cfg["k"],
        max_turns_cap=cfg["max_turns_cap"], report=aug,
    )
    f, training = train_derailment_classifier(BagOfWordsClassifier(bow_config(cfg)), examples)
    written = [_write_text(out, dumps({
        "classifier": f.to_dict(),
        "scheme": scheme.to_dict(),
        "training": training.to_dict(),
        "augmentation": aug.to_dict(),
    }))]
    if cfg["examples_out"]:
        path = _require_output(cfg["examples_out"], "examples_out")
        write_examples(examples, path)
        written.append(path)
    return written


def cmd_generate(cfg: dict) -> list[Path]:
    data = read_jsonl(_require_input(cfg["input"], "input"))
    out = _require_output(cfg["output"])
    g, g_scheme = open_generator(cfg["generator"])
    scheme = pick_scheme(cfg, g_scheme)
    params = sampling_params(cfg)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for c in data:
            k = c.prefix_len if cfg["k"] is None else cfg["k"]
            if not 1 <= k < c.n:
                log.warning("skipping %s: k=%d leaves no future (n=%d)", c.id, k, c.n)
                continue
            cs = sample_continuations(
                g, c, k, cfg["L"], params, scheme, conversation_seed(cfg["seed"], c.id),
                max_turns_cap=cfg["max_turns_cap"],
            )
            fh.write(json.dumps(cs.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
    return [out]


def cmd_forecast(cfg: dict) -> list[Path]:
    data = read_jsonl(_require_input(cfg["input"], "input"))
    out = _require_output(cfg["output"])
    g, g_scheme = open_generator(cfg["generator"])
    f, f_scheme = open_classifier(cfg["classifier"])
    scheme = pick_scheme(cfg, g_scheme, f_scheme)
    results, report = forecast_batch(
        data, g, f, k=cfg["k"], L=cfg["L"], params=sampling_params(cfg), scheme=scheme,
        threshold=cfg["threshold"], tie_rule=cfg["tie_rule"], seed=cfg["seed"], method=cfg["method"],
        max_turns_cap=cfg["max_turns_cap"], jobs=cfg["jobs"],
    )
    write_results(results, out)
    written = [out]
    if cfg["report"]:
        written.append(_write_text(_require_output(cfg["report"], "report"), dumps(report.to_dict())))
    log.info("forecast %d conversation(s), skipped %d", report.n, len(report.skipped))
    if len(data) and not results:
        raise DerailcastError("every conversation failed to forecast")
    return written


def _named_results(target: Any) -> dict[str, str]:
    items = target if isinstance(target, (list, tuple)) else [target]
    if isinstance(target, dict):
        return dict(target)
    named = {}
    for item in items:
        name, sep, path = str(item).partition("=")
        if not sep:
            name, path = Path(item).stem, item
        named[name] = path
    return named


def cmd_evaluate(cfg: dict) -> list[Path]:
    if not cfg["results"]:
        raise UsageError("missing required option --results")
    named = _named_results(cfg["results"])
    rows = {}
    for name, path in named.items():
        results = read_results(_require_input(path, "results"))
        if not any(r.gold is not None for r in results):
            raise UsageError(f"{path} has no gold labels to evaluate against")
        rows[name] = metrics_from_results(results)
    if cfg["baseline"] is not None and cfg["baseline"] not in rows:
        raise UsageError(f"baseline {cfg['baseline']!r} is not one of {sorted(rows)}")
    out = _require_output(cfg["output"])
    written = [_write_text(out, metrics_table(rows, baseline=cfg["baseline"]))]
    if cfg["json"]:
        path = _require_output(cfg["json"], "json")
        written.append(_write_text(path, dumps({k: m.to_dict() for k, m in rows.items()})))
    return written


def cmd_ablate(cfg: dict) -> list[Path]:
    data = read_jsonl(_require_input(cfg["input"], "input"))
    out = _require_output(cfg["output"])
    g, g_scheme = open_generator(cfg["generator"])
    f, f_scheme = open_classifier(cfg["classifier"])
    scheme = pick_scheme(cfg, g_scheme, f_scheme)
    common = dict(
        params=sampling_params(cfg), scheme=scheme, seed=cfg["seed"], threshold=cfg["threshold"],
        tie_rule=cfg["tie_rule"], max_turns_cap=cfg["max_turns_cap"],
    )
    if cfg["kind"] == "votes":
        table = ablate_vote_count(data, g, f, cfg["L_values"], **common)
        payload = {"kind": "votes", "rows": {str(L): m.to_dict() for L, m in table.items()}}
        md = metrics_table({f"L={L}": m for L, m in table.items()}, label="L")
    else:
        rows = ablate_prefix_length(data, g, f, cfg["k_values"], L=cfg["L"], **common)
        payload = {"kind": "prefix", "rows": {str(k): r.to_dict() for k, r in rows.items()}}
        present = {f"k={k}": r.metrics for k, r in rows.items() if r.metrics is not None}
        md = metrics_table(present, label="k") if present else "no eligible conversations\n"
        md += "\n| k | used | excluded | median generated turns |\n|---|---|---|---|\n"
        for k, r in rows.items():
            med = "n/a" if r.median_generated_turns is None else f"{r.median_generated_turns:g}"
            md += f"| {k} | {r.n_used} | {r.n_excluded} | {med} |\n"
    written = [_write_text(out, dumps(payload))]
    if cfg["markdown"]:
        written.append(_write_text(_require_output(cfg["markdown"], "markdown"), md))
    return written


def cmd_diversity(cfg: dict) -> list[Path]:
    src = _require_input(cfg["continuations"], "continuations")
    out = _require_output(cfg["output"])
    scores = {}
    with open(src, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            cs = ContinuationSet.from_dict(json.loads(line))
            if len(cs) < 2:
                log.warning("skipping %s: fewer than two continuations", cs.conversation_id)
                continue
            if not any(continuation_tokens(t) for t in cs.continuations):
                log.info("%s: every continuation is empty", cs.conversation_id)
            scores[cs.conversation_id] = bleu_self_diversity(cs, cfg["max_ngram"])
    mean = sum(scores.values()) / len(scores) if scores else None
    _write_text(out, dumps({
        "variant": BLEU_VARIANT,
        "max_ngram": cfg["max_ngram"],
        "mean": mean,
        "per_conversation": scores,
    }))
    return [out]


def cmd_motivation(cfg: dict) -> list[Path]:
    train = read_jsonl(_require_input(cfg["train"], "train"))
    test = read_jsonl(_require_input(cfg["test"], "test"))
    out = _require_output(cfg["output"])
    bow = bow_config(cfg)
    result = run_motivation_experiment(train, test, lambda: BagOfWordsClassifier(bow), resolve_scheme(cfg["scheme"]))
    written = [_write_text(out, dumps(result.to_dict()))]
    if cfg["markdown"]:
        md = metrics_table({"all turns": result.all_turns, "benign prefix": result.benign_prefix})
        written.append(_write_text(_require_output(cfg["markdown"], "markdown"), md))
    return written


def cmd_synth(cfg: dict) -> list[Path]:
    if not cfg["output"]:
        raise UsageError("missing required option --output")
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    convs = make_planted_corpus(
        cfg["pairs"], seed=cfg["seed"], motif_len=cfg["motif_len"],
        prefix_turns=cfg["prefix_turns"], future_turns=cfg["future_turns"],
    )
    written = []
    for split, d in planted_splits(convs, tuple(cfg["ratios"]), seed=cfg["seed"]).items():
        path = out / f"{split.value}.jsonl"
        write_jsonl(d, path)
        written.append(path)
    return sorted(written)


HANDLERS: dict[str, Callable[[dict], list[Path]]] = {
    "ingest": cmd_ingest,
    "annotate": cmd_annotate,
    "train-generator": cmd_train_generator,
    "train-classifier": cmd_train_classifier,
    "generate": cmd_generate,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "diversity": cmd_diversity,
    "motivation": cmd_motivation,
    "synth": cmd_synth,
}


# -- manifests -----------------------------------------------------------


def manifest_path(command: str, cfg: dict) -> Path:
    primary = Path(cfg["output"])
    if primary.is_dir():
        return primary / f"{command}.manifest.json"
    return Path(str(primary) + ".manifest.json")


def _input_paths(command: str, cfg: dict) -> list[str]:
    paths = []
    for opt in COMMANDS[command]:
        if opt.role != "in":
            continue
        value = _get(cfg, opt.key)
        if command == "evaluate" and opt.key == "results" and value:
            value = list(_named_results(value).values())
        for v in value if isinstance(value, list) else [value]:
            if v and Path(v).exists():
                paths.append(str(v))
    return paths


def build_manifest(command: str, cfg: dict, inputs: dict[str, str], outputs: list[Path]) -> dict:
    return {
        "command": command,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seeds": {k: v for k, v in cfg.items() if k == "seed" or k.endswith("_seed")},
        "inputs": inputs,
        "outputs": {str(p): sha256_path(p) for p in outputs},
        "versions": versions(),
    }


def run_command(command: str, cfg: dict) -> dict:
    inputs = {p: sha256_path(p) for p in _input_paths(command, cfg)}
    outputs = HANDLERS[command](cfg)
    manifest = build_manifest(command, cfg, inputs, outputs)
    _write_text(manifest_path(command, cfg), dumps(manifest))
    return manifest


def replay(manifest_file: str) -> dict:
    path = _require_input(manifest_file, "manifest")
    recorded = json.loads(path.read_text(encoding="utf-8"))
    command, cfg = recorded["command"], recorded["config"]
    if command not in HANDLERS:
        raise UsageError(f"manifest names unknown command {command!r}")
    if config_hash(cfg) != recorded["config_hash"]:
        raise UsageError("manifest config does not match its recorded hash")
    for p, digest in recorded["inputs"].items():
        if not Path(p).exists() or sha256_path(p) != digest:
            raise DerailcastError(f"input {p} changed since the manifest was written")
    outputs = HANDLERS[command](cfg)
    fresh = {str(p): sha256_path(p) for p in outputs}
    mismatched = sorted(p for p in set(fresh) | set(recorded["outputs"])
                        if fresh.get(p) != recorded["outputs"].get(p))
    if mismatched:
        raise DerailcastError(f"replay produced different outputs: {mismatched}")
    return {"command": command, "outputs": fresh, "reproduced": True}


# -- argument parsing ----------------------------------------------------


SUMMARIES = {
    "ingest": "load a raw corpus, split it, write canonical JSONL",
    "annotate": "tag every turn with a social-orientation label",
    "train-generator": "fit the bigram continuation model",
    "train-classifier": "fit the derailment classifier on real plus sampled futures",
    "generate": "sample continuation sets for each conversation",
    "forecast": "majority-vote forecast over sampled futures",
    "evaluate": "metrics table for one or more forecast result files",
    "ablate": "vote-count or prefix-length ablation table",
    "diversity": "leave-one-out BLEU of continuation sets",
    "motivation": "all-turns vs benign-prefix classifier comparison",
    "synth": "write the planted-signal synthetic corpus",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="derailcast", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING", help="logging level for stderr")
    parser.add_argument("--version", action="version", version=f"derailcast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name, help=SUMMARIES[name])
        p.add_argument("--config", help="YAML config; flags override its keys")
        for opt in opts:
            if opt.flag:
                p.add_argument(opt.option, dest=opt.dest, action=argparse.BooleanOptionalAction,
                               default=None, help=opt.help)
            elif opt.key == "results":
                p.add_argument(opt.option, dest=opt.dest, nargs="+", default=None, help=opt.help)
            else:
                p.add_argument(opt.option, dest=opt.dest, type=opt.type, default=None,
                               choices=opt.choices, help=opt.help)
    r = sub.add_parser("replay", help="re-run a manifest and verify byte-identical outputs")
    r.add_argument("--manifest", required=True)
    return parser


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = _require_input(path, "config")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a mapping")
    return data


def _diagnose(kind: str, exc: BaseException) -> None:
    print(json.dumps({"status": kind, "error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            summary = replay(args.manifest)
        else:
            flags = {
                opt.key: getattr(args, opt.dest)
                for opt in COMMANDS[args.command]
            }
            cfg = merge_config(args.command, _load_config(args.config), flags)
            summary = run_command(args.command, cfg)
            summary = {"command": args.command, "outputs": summary["outputs"]}
    except (UsageError, ConfigError) as exc:
        _diagnose("usage", exc)
        return EXIT_USAGE
    except (DerailcastError, ValueError, OSError) as exc:
        _diagnose("failure", exc)
        return EXIT_FAILURE
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
