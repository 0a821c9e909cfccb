"""LLM link classification over retrieved candidates.

The retriever narrows each source sentence to its top-k target candidates;
an LLM then classifies every candidate as linked or not. Two request shapes
are supported: pairwise (one candidate per request) and listwise (all k
candidates in one request). Prompts carry both full documents plus optional
guidance: a link-type description, in-context example pairs, both, or
neither. A retrieval-free variant classifies every target sentence.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources

from .clients import ChatClient
from .corpus import Document, DocumentPair, LinkSet, Sentence
from .errors import (ConfigurationError, ContractError, ParseError,
                     ValidationError)
from .retrieval import ScoredRanking

log = logging.getLogger(__name__)

MODE_NAMES = ("none", "ex", "desc", "both")

PAIRWISE_SYSTEM = (
    "You are an AI assistant specialized in evaluating sentence relations.\n"
    "You will get two related documents, along with a sentence from Document 1 "
    "(source) and a sentence from Document 2 (target). Your task is to determine "
    "if the target sentence is related to the source sentence."
)

LISTWISE_SYSTEM = (
    "You are an AI assistant specialized in evaluating sentence relations.\n"
    "You will get two related documents, along with a sentence from Document 1 "
    "(source) and a list of sentences from Document 2 (targets). The targets are "
    "ranked based on their similarity to the source sentence. Your task is to "
    "determine for each target sentence if it is related to the source sentence. "
    "This will help filter out irrelevant sentences and improve the quality of "
    "the ranked sentences."
)

CLASSIFY_ALL_SYSTEM = (
    "You are an AI assistant specialized in evaluating sentence relations.\n"
    "You will get two related documents, along with a sentence from Document 1 "
    "(source). Your task is to determine for each sentence in the target document "
    "(Document 2) if it is related to the source sentence. This will help filter "
    "out irrelevant sentences."
)

PAIRWISE_RESPONSE = (
    'Respond with a JSON object of the form: {"related": true} or {"related": false}'
)

LISTWISE_RESPONSE = (
    "Respond with a JSON object with sentence IDs as keys and true or false as "
    'values, e.g. {"0": true, "1": false, "2": true}. Include every listed sentence ID.'
)

CLASSIFY_ALL_RESPONSE = (
    "Respond with a JSON object where each key is a target sentence ID and each "
    'value is either true or false, e.g. {"11": true, "4": false, "9": true}. '
    "Ensure that every sentence in Document 2 is classified."
)


@dataclass(frozen=True)
class PromptMode:
    """Guidance configuration: link description on/off, in-context examples on/off."""

    description: bool = False
    examples: bool = False

    @property
    def number(self) -> int:
        # 1: no guidance, 2: examples only, 3: description only, 4: both
        return 1 + (2 if self.description else 0) + (1 if self.examples else 0)

    @classmethod
    def from_name(cls, name: str) -> "PromptMode":
        try:
            idx = MODE_NAMES.index(name)
        except ValueError:
            raise ConfigurationError(f"mode must be one of {MODE_NAMES}, got {name!r}") from None
        return cls(description=bool(idx & 2), examples=bool(idx & 1))

    @property
    def name(self) -> str:
        return MODE_NAMES[(2 if self.description else 0) | (1 if self.examples else 0)]


@dataclass(frozen=True)
class Guidance:
    description: str = ""
    examples: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class LlmDecisionSet:
    source_idx: int
    decisions: dict[int, bool]


def load_default_guidance(domain: str) -> Guidance:
    if domain not in ("reviews", "news"):
        raise ConfigurationError(f"no default guidance for domain {domain!r}")
    payload = json.loads(
        resources.files("linkforge.data").joinpath(f"guidance_{domain}.json").read_text("utf-8")
    )
    return Guidance(
        description=payload["description"],
        examples=tuple((ex["source"], ex["target"]) for ex in payload["examples"]),
    )


def load_guidance_file(path: str) -> Guidance:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return Guidance(
        description=payload.get("description", ""),
        examples=tuple((ex["source"], ex["target"]) for ex in payload.get("examples", [])),
    )


def _guidance_block(mode: PromptMode, guidance: Guidance | None) -> str:
    parts = []
    if mode.description:
        if guidance is None or not guidance.description:
            raise ConfigurationError("mode requires a link description but none is configured")
        parts.append(f"Link Description:\n{guidance.description}\n")
    if mode.examples:
        if guidance is None or not guidance.examples:
            raise ConfigurationError("mode requires example pairs but none are configured")
        lines = ["Examples of linked sentence pairs:"]
        for src, tgt in guidance.examples:
            lines.append(f'- Source: "{src}"')
            lines.append(f'  Target: "{tgt}"')
        parts.append("\n".join(lines) + "\n")
    return "\n".join(parts)


def _check_member(doc: Document, sent: Sentence, which: str) -> None:
    if not (0 <= sent.index < len(doc)) or doc.sentences[sent.index].text != sent.text:
        raise ValidationError(f"{which} sentence {sent.index} is not part of document {doc.doc_id!r}")


def build_pairwise_prompt(doc_a: Document, doc_b: Document, src: Sentence,
                          tgt: Sentence, mode: PromptMode,
                          guidance: Guidance | None = None) -> str:
    _check_member(doc_a, src, "source")
    _check_member(doc_b, tgt, "target")
    guidance_block = _guidance_block(mode, guidance)
    body = (
        f"- Full Document 1: {doc_a.text()}\n"
        f"- Full Document 2: {doc_b.text()}\n"
        f"- Source Sentence from Document 1: {src.text}\n"
        f"- Target Sentence from Document 2: {tgt.text}\n"
    )
    return f"{guidance_block}\n{body}\n{PAIRWISE_RESPONSE}" if guidance_block \
        else f"{body}\n{PAIRWISE_RESPONSE}"


def build_listwise_prompt(doc_a: Document, doc_b: Document, src: Sentence,
                          candidates: list[tuple[int, str]], mode: PromptMode,
                          guidance: Guidance | None = None) -> str:
    """Candidates must arrive in retrieval rank order; rendered one per line."""
    _check_member(doc_a, src, "source")
    if not candidates:
        raise ValidationError("candidate list must be non-empty")
    ids = [idx for idx, _ in candidates]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate candidate indices in {ids}")
    guidance_block = _guidance_block(mode, guidance)
    candidate_lines = "\n".join(f"{idx}: {text}" for idx, text in candidates)
    body = (
        f"- Document 1: {doc_a.text()}\n"
        f"- Document 2: {doc_b.text()}\n"
        f"- Source Sentence from Document 1: {src.text}\n"
        f"- Ranked Target Sentences from Document 2 (Sentence_ID: Sentence_text):\n"
        f"{candidate_lines}\n"
    )
    return f"{guidance_block}\n{body}\n{LISTWISE_RESPONSE}" if guidance_block \
        else f"{body}\n{LISTWISE_RESPONSE}"


def build_classify_all_prompt(doc_a: Document, doc_b: Document, src: Sentence,
                              mode: PromptMode,
                              guidance: Guidance | None = None) -> str:
    _check_member(doc_a, src, "source")
    guidance_block = _guidance_block(mode, guidance)
    body = (
        f"- Document 1: {doc_a.text()}\n"
        f"- Document 2: {doc_b.text()}\n"
        f"- Source Sentence from Document 1: {src.text}\n"
    )
    return f"{guidance_block}\n{body}\n{CLASSIFY_ALL_RESPONSE}" if guidance_block \
        else f"{body}\n{CLASSIFY_ALL_RESPONSE}"


# ---------------------------------------------------------------------------
# Response parsing
# ---------------------------------------------------------------------------

def _coerce_bool(value, context: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in ("true", "false"):
        return value.lower() == "true"
    raise ParseError(f"{context}: expected a boolean, got {value!r}")


def _load_response_object(raw: str) -> dict:
    start = raw.find("{")
    end = raw.rfind("}")
    if start == -1 or end <= start:
        raise ParseError(f"no JSON object in response: {raw[:120]!r}")
    try:
        obj = json.loads(raw[start:end + 1])
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON in response: {e.msg}") from e
    if not isinstance(obj, dict):
        raise ParseError("response JSON is not an object")
    return obj


def parse_decision_response(raw: str, presented: list[int], form: str,
                            source_idx: int = 0) -> LlmDecisionSet:
    """Parse a classification response into per-candidate booleans.

    Listwise ids missing from the response default to "not linked" and are
    logged; extraneous ids are ignored with a warning. The result covers
    exactly the presented ids.
    """
    obj = _load_response_object(raw)
    if form == "pairwise":
        if len(presented) != 1:
            raise ContractError(f"pairwise parse needs exactly 1 presented id, got {len(presented)}")
        if "related" not in obj:
            raise ParseError('pairwise response missing "related" key')
        value = _coerce_bool(obj["related"], '"related"')
        return LlmDecisionSet(source_idx, {presented[0]: value})
    if form != "listwise":
        raise ContractError(f"form must be pairwise or listwise, got {form!r}")

    presented_set = set(presented)
    decisions: dict[int, bool] = {}
    for key, value in obj.items():
        try:
            idx = int(key)
        except (TypeError, ValueError):
            raise ParseError(f"response key {key!r} is not a sentence id") from None
        if idx not in presented_set:
            log.warning("source %d: ignoring extraneous response id %d", source_idx, idx)
            continue
        decisions[idx] = _coerce_bool(value, f"id {idx}")
    for idx in presented:
        if idx not in decisions:
            log.info("source %d: id %d missing from response, defaulting to not linked",
                     source_idx, idx)
            decisions[idx] = False
    return LlmDecisionSet(source_idx, {idx: decisions[idx] for idx in presented})


def refine_ranking(r: ScoredRanking, k: int, d: LlmDecisionSet,
                   pair_id: str = "") -> LinkSet:
    """Keep only the top-k candidates the LLM accepted."""
    top = r.top(k)
    gaps = [t for t in top if t not in d.decisions]
    if gaps:
        raise ContractError(f"decision set does not cover top-{k} candidates {gaps}")
    return LinkSet(pair_id, frozenset((r.source_idx, t) for t in top if d.decisions[t]))


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RefineOutcome:
    """Per-source result: accepted candidates in retrieval rank order."""

    source_idx: int
    presented: tuple[int, ...]
    accepted: tuple[int, ...]
    failed: bool = False


def _complete_and_parse(client: ChatClient, system: str, prompt: str,
                        presented: list[int], form: str, source_idx: int,
                        retries: int) -> LlmDecisionSet:
    messages = [{"role": "system", "content": system},
                {"role": "user", "content": prompt}]
    for attempt in range(retries + 1):
        raw = client.complete(messages)
        try:
            return parse_decision_response(raw, presented, form, source_idx)
        except ParseError as e:
            if attempt < retries:
                log.warning("source %d: malformed response (%s), re-requesting", source_idx, e)
                continue
            raise
    raise AssertionError("unreachable")


def _refine_source(pair: DocumentPair, ranking: ScoredRanking, form: str,
                   mode: PromptMode, guidance: Guidance | None,
                   client: ChatClient, k: int, retries: int) -> RefineOutcome:
    top = ranking.top(k)
    texts = {s.index: s.text for s in pair.target.sentences}
    src = pair.source.sentences[ranking.source_idx]
    decisions: dict[int, bool] = {}
    try:
        if form == "pairwise":
            for t in top:
                prompt = build_pairwise_prompt(pair.source, pair.target, src,
                                               pair.target.sentences[t], mode, guidance)
                d = _complete_and_parse(client, PAIRWISE_SYSTEM, prompt, [t],
                                        "pairwise", src.index, retries)
                decisions.update(d.decisions)
        else:
            candidates = [(t, texts[t]) for t in top]
            prompt = build_listwise_prompt(pair.source, pair.target, src,
                                           candidates, mode, guidance)
            d = _complete_and_parse(client, LISTWISE_SYSTEM, prompt, top,
                                    "listwise", src.index, retries)
            decisions = d.decisions
    except ParseError as e:
        log.error("source %d failed after retry, dropping its predictions: %s",
                  src.index, e)
        return RefineOutcome(src.index, tuple(top), (), failed=True)
    accepted = tuple(t for t in top if decisions[t])
    return RefineOutcome(src.index, tuple(top), accepted)


def refine_pair(pair: DocumentPair, rankings: list[ScoredRanking], form: str,
                mode: PromptMode, guidance: Guidance | None, client: ChatClient,
                k: int, max_in_flight: int = 4, retries: int = 1) -> list[RefineOutcome]:
    """Run LLM classification for every ranked source sentence of one pair.

    Source sentences are processed concurrently under ``max_in_flight``;
    outcomes are returned ordered by source index. A source whose response
    stays malformed after one retry fails alone, not the run.
    """
    if form not in ("pairwise", "listwise"):
        raise ConfigurationError(f"form must be pairwise or listwise, got {form!r}")
    ordered = sorted(rankings, key=lambda r: r.source_idx)
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        futures = [pool.submit(_refine_source, pair, r, form, mode, guidance,
                               client, k, retries)
                   for r in ordered]
        return [f.result() for f in futures]


def llm_only_classify(doc_a: Document, doc_b: Document, src: Sentence,
                      mode: PromptMode, guidance: Guidance | None,
                      client: ChatClient, pair_id: str = "", retries: int = 1,
                      max_prompt_chars: int | None = None) -> LinkSet:
    """Retrieval-free variant: classify every sentence of the target document."""
    prompt = build_classify_all_prompt(doc_a, doc_b, src, mode, guidance)
    if max_prompt_chars is not None and len(prompt) > max_prompt_chars:
        raise ConfigurationError(
            f"prompt is {len(prompt)} chars, exceeding the {max_prompt_chars}-char context limit"
        )
    presented = list(range(len(doc_b)))
    d = _complete_and_parse(client, CLASSIFY_ALL_SYSTEM, prompt, presented,
                            "listwise", src.index, retries)
    return LinkSet(pair_id, frozenset((src.index, t) for t, ok in d.decisions.items() if ok))


def filtered_ranking(r: ScoredRanking, accepted: tuple[int, ...]) -> ScoredRanking:
    """Restrict a ranking to accepted candidates, preserving order and scores."""
    keep = set(accepted)
    return ScoredRanking(r.source_idx, tuple((i, s) for i, s in r.ranked if i in keep))
