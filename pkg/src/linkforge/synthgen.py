"""Semi-synthetic linked-document generation.

A natural document is kept as the link target; an LLM writes a synthetic
source document (peer review or alternative news article) and reports, per
generated sentence, which target sentences it is grounded in. Parsing that
mapping yields sentence-level links for free.

Also provides the automatic stylistic validation metrics used to compare
synthetic documents against natural ones.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

from .clients import ChatClient, SubjectivityClient
from .corpus import Document, LinkSet, Sentence, word_tokens
from .errors import DomainError, LinkforgeError, ParseError, ValidationError

log = logging.getLogger(__name__)

CLEANING_PROMPT_PREFIX = (
    "This is a scrapped article from Wikinews. Due to the scrapping, it may "
    "contain sentences that are image captions and social media links. Remove "
    "such sentences, but do not change the content of the article. Output the "
    "cleaned article in JSON format, where the key is 'cleaned_article' and "
    "the value is the cleaned article text.\n"
    "Input: "
)

_REVIEW_EXAMPLE_INPUT = json.dumps({
    "0": "We introduce a span-based parser for nested named entities.",
    "1": "The parser runs in quadratic time.",
    "2": "It outperforms prior systems on three benchmarks.",
}, ensure_ascii=False)

_REVIEW_EXAMPLE_OUTPUT = json.dumps({
    "sentences": {
        "0": "The proposed parser is a solid contribution with clear empirical gains.",
        "1": "The claimed efficiency advantage would benefit from a wall-clock comparison.",
        "2": "Some writing in the experimental section could be tightened.",
    },
    "mapping": {"0": [2], "1": [1], "2": None},
}, ensure_ascii=False)

_NEWS_EXAMPLE_INPUT = json.dumps({
    "0": "The city council approved the new transit plan on Tuesday.",
    "1": "Construction is expected to begin next spring.",
    "2": "Opponents argue the plan ignores outer neighborhoods.",
}, ensure_ascii=False)

_NEWS_EXAMPLE_OUTPUT = json.dumps({
    "sentences": {
        "0": "Tuesday's council vote cleared the way for a transit overhaul years in the making.",
        "1": "Critics were quick to note that outlying districts see little benefit.",
        "2": "City officials say shovels could hit the ground as early as spring.",
        "3": "Funding details remain under negotiation with the regional authority.",
    },
    "mapping": {"0": [0], "1": [2], "2": [1], "3": None},
}, ensure_ascii=False)

_OUTPUT_FORMAT_BLOCK = (
    "Output Format:\n"
    "Return one JSON object with two keys:\n"
    '- "sentences": a JSON object where each key is a sentence index in the new text '
    "(starting from 0) and each value is the corresponding sentence text.\n"
    '- "mapping": a JSON object where each key is a sentence index from the new text and '
    "each value is a list of corresponding sentence indices from the original, or null if "
    "the sentence is not directly linked.\n"
)

REVIEW_GENERATION_TEMPLATE = (
    "Task Overview\n"
    "You are a peer reviewer evaluating a research paper in NLP. Your task is to write a "
    "realistic and well-rounded peer review for the paper.\n"
    "Guidelines:\n"
    "- Your review should be structured and natural, consisting of 8-12 sentences.\n"
    "- 3 to 5 sentences should be implicitly grounded in specific ideas from the paper. "
    "These should express relevant critiques, observations, or praises without directly "
    "quoting or referencing the original text.\n"
    "- The remaining sentences should address broader aspects such as clarity, methodology, "
    "contributions, generalization, writing quality, or suggestions for improvement.\n"
    "- Do NOT explicitly cite, reference, or quote any sentence from the paper. The review "
    "should not be a direct commentary on specific lines.\n"
    "How to Structure the Review:\n"
    "- Rephrase, summarize, or abstract ideas: When addressing parts of the paper, reword "
    "and generalize instead of copying.\n"
    "- Introduce new considerations: Some comments should reflect editorial judgment, "
    "unanswered questions, or high-level concerns rather than being tied to specific "
    "sentences.\n"
    "- Omit some possible links: Not every review sentence should directly correspond to a "
    "sentence from the paper. Aim for a balanced mix of specific and general feedback.\n"
    "- Rearrange information: The review's flow should be different from the order of the "
    "paper to reflect a natural peer review process.\n"
    "Input Format:\n"
    "You will receive a JSON object where each key is a sentence index from a paper "
    "section(s) and each value is the corresponding sentence text.\n"
    + _OUTPUT_FORMAT_BLOCK
    + "Example Input: " + _REVIEW_EXAMPLE_INPUT + "\n"
    + "Example Output: " + _REVIEW_EXAMPLE_OUTPUT + "\n"
    + "Input: {input}\n"
    + "Output:"
)

NEWS_GENERATION_TEMPLATE = (
    "Task Overview:\n"
    "You are generating a news article that covers the same event or topic as an original "
    "article presenting it from a different editorial angle. The goal is to simulate how "
    "separate news organizations might independently report on the same subject, differing "
    "in structure, tone, detail, and emphasis. The new article should be a plausible "
    "alternative version of coverage on the same topic, not a direct rephrasing or summary "
    "of the original.\n"
    "Guidelines:\n"
    "- The article should be realistic, coherent, and reflective of a distinctive voice or "
    "editorial style.\n"
    "- 3 to 5 sentences in the new article should reflect content from the original. These "
    "sentences may describe similar facts, events, or issues, but using different wording, "
    "tone, or framing.\n"
    "- Do not replicate the original article's sentence-by-sentence structure or closely "
    "paraphrase its content.\n"
    "- The remaining sentences should introduce: New but plausible perspectives, context, "
    "or editorial framing. Additional background or expert input. A different narrative "
    "structure or omission of certain original points.\n"
    "- The new article must have a different length from the original, but not be much "
    "shorter than the original.\n"
    "Variation Strategies:\n"
    "- Rephrase and shift style: Change vocabulary, sentence structure, or writing tone to "
    "reflect a different editorial voice.\n"
    "- Frame the topic differently: Adjust emphasis or viewpoint, for example highlighting "
    "controversy, local impact, or long-term implications.\n"
    "- Add or omit information: Introduce plausible context, background, or expert input, "
    "or skip less relevant details from the original.\n"
    "- Reorganize the narrative: Present the information in a different order to create a "
    "new logical or rhetorical flow.\n"
    "Input Format:\n"
    "You will receive a JSON object where each key is a sentence index from the original "
    "article and each value is the corresponding sentence text.\n"
    + _OUTPUT_FORMAT_BLOCK
    + "Example Input: " + _NEWS_EXAMPLE_INPUT + "\n"
    + "Example Output: " + _NEWS_EXAMPLE_OUTPUT + "\n"
    + "Input: {input}\n"
    + "Output:"
)

GENERATION_TEMPLATES = {
    "reviews": REVIEW_GENERATION_TEMPLATE,
    "news": NEWS_GENERATION_TEMPLATE,
}


@dataclass(frozen=True)
class GenerationResult:
    """A generated source document plus its sentence-level grounding map."""

    generated: Document
    mapping: dict[int, tuple[int, ...]]

    def link_set(self, pair_id: str) -> LinkSet:
        links = frozenset(
            (src, tgt) for src, targets in self.mapping.items() for tgt in targets
        )
        return LinkSet(pair_id, links)


@dataclass(frozen=True)
class StyleReport:
    type_token_ratio: Fraction
    flesch_reading_ease: float
    subjectivity: float | None = None


def build_cleaning_prompt(article: str) -> str:
    if not article:
        raise ValidationError("article must be non-empty")
    return CLEANING_PROMPT_PREFIX + article


def build_generation_prompt(domain: str, indexed: dict[int, str]) -> str:
    if domain not in GENERATION_TEMPLATES:
        raise ValidationError(f"domain must be one of {sorted(GENERATION_TEMPLATES)}, got {domain!r}")
    if not indexed:
        raise ValidationError("indexed sentence map must be non-empty")
    keys = sorted(indexed)
    if keys != list(range(len(keys))):
        raise ValidationError(f"sentence indices must be contiguous from 0, got {keys}")
    serialized = json.dumps({str(k): indexed[k] for k in keys}, ensure_ascii=False)
    # templates embed JSON examples, so str.format would trip on the braces
    return GENERATION_TEMPLATES[domain].replace("{input}", serialized)


def _extract_json_object(raw: str) -> dict:
    # structured-output responses occasionally wrap the object in prose or fences
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


def _int_key(key: str, what: str) -> int:
    try:
        return int(key)
    except (TypeError, ValueError):
        raise ParseError(f"{what} key {key!r} is not an integer") from None


def parse_generation_output(raw: str, natural: Document,
                            doc_id: str | None = None) -> GenerationResult:
    """Parse a generation response into a document plus grounding map.

    Mapping values of null (or missing keys) mean the sentence has no links.
    Every mapped index is validated against the natural document.
    """
    obj = _extract_json_object(raw)
    if "sentences" not in obj or "mapping" not in obj:
        raise ParseError('response must contain "sentences" and "mapping" keys')
    sentences_obj = obj["sentences"]
    if not isinstance(sentences_obj, dict) or not sentences_obj:
        raise ParseError('"sentences" must be a non-empty object')
    by_index = {_int_key(k, "sentence"): str(v) for k, v in sentences_obj.items()}
    keys = sorted(by_index)
    if keys != list(range(len(keys))):
        raise ParseError(f"generated sentence indices must be contiguous from 0, got {keys}")
    generated = Document(
        doc_id or f"{natural.doc_id}-generated",
        "source",
        tuple(Sentence(i, by_index[i]) for i in keys),
    )

    mapping_obj = obj["mapping"]
    if not isinstance(mapping_obj, dict):
        raise ParseError('"mapping" must be an object')
    mapping: dict[int, tuple[int, ...]] = {}
    for key, value in mapping_obj.items():
        src = _int_key(key, "mapping")
        if src not in by_index:
            raise ValidationError(f"mapping key {src} has no generated sentence")
        if value is None:
            continue
        if not isinstance(value, list):
            raise ParseError(f"mapping value for key {src} must be a list or null")
        targets = tuple(sorted(int(t) for t in value))
        for t in targets:
            if not (0 <= t < len(natural)):
                raise ValidationError(
                    f"mapping key {src}: target index {t} out of range for "
                    f"{len(natural)}-sentence document"
                )
        if targets:
            mapping[src] = targets
    return GenerationResult(generated, mapping)


def serialize_generation_result(result: GenerationResult) -> str:
    sentences = {str(s.index): s.text for s in result.generated.sentences}
    mapping = {
        str(s.index): list(result.mapping[s.index]) if s.index in result.mapping else None
        for s in result.generated.sentences
    }
    return json.dumps({"sentences": sentences, "mapping": mapping}, ensure_ascii=False)


def parse_cleaning_output(raw: str) -> str:
    obj = _extract_json_object(raw)
    if "cleaned_article" not in obj:
        raise ParseError('response must contain the "cleaned_article" key')
    return str(obj["cleaned_article"])


# ---------------------------------------------------------------------------
# Stylistic validation metrics
# ---------------------------------------------------------------------------

_VOWEL_GROUPS = re.compile(r"[aeiouy]+")


def count_syllables(word: str) -> int:
    """Vowel-group syllable estimate with silent-e correction.

    Counts maximal vowel runs, then discounts common silent endings:
    final "e" (kept after consonant+"le" as in "table"), quiet "-ed"
    (kept after t/d and "-eed"), and quiet "-es" (kept after sibilants).
    """
    w = re.sub(r"[^a-z]", "", word.lower())
    if not w:
        return 1
    count = len(_VOWEL_GROUPS.findall(w))
    if count > 1:
        if w.endswith("e") and not w.endswith(("ee", "ie", "oe", "ye")):
            if not (w.endswith("le") and len(w) > 2 and w[-3] not in "aeiouy"):
                count -= 1
        elif w.endswith("ed") and len(w) > 2 and w[-3] not in "td" and not w.endswith("eed"):
            count -= 1
        elif (w.endswith("es") and len(w) > 2 and w[-3] not in "sxz"
              and not w.endswith(("ches", "shes"))
              and not (w.endswith("les") and len(w) > 3 and w[-4] not in "aeiouy")):
            count -= 1
    return max(count, 1)


def flesch_reading_ease(n_words: int, n_sentences: int, n_syllables: int) -> float:
    return 206.835 - 1.015 * (n_words / n_sentences) - 84.6 * (n_syllables / n_words)


def style_metrics(doc: Document,
                  subjectivity_service: SubjectivityClient | None = None) -> StyleReport:
    """Document-level lexical diversity, reading ease, and optional subjectivity.

    Subjectivity is the mean of per-sentence scores from the configured
    service; a failing service degrades to an absent score with a warning.
    """
    tokens = [t for sent in doc.sentences for t in word_tokens(sent.text)]
    if not tokens:
        raise DomainError(f"document {doc.doc_id!r} has no word tokens")
    ttr = Fraction(len(set(tokens)), len(tokens))
    flesch = flesch_reading_ease(
        len(tokens), len(doc.sentences), sum(count_syllables(t) for t in tokens)
    )
    subjectivity = None
    if subjectivity_service is not None:
        try:
            scores = subjectivity_service.score([s.text for s in doc.sentences])
            subjectivity = sum(scores) / len(scores)
        except LinkforgeError as e:
            log.warning("subjectivity service failed, omitting score: %s", e)
    return StyleReport(ttr, flesch, subjectivity)


# ---------------------------------------------------------------------------
# Generation orchestration
# ---------------------------------------------------------------------------

def _generate_one(natural: Document, domain: str, client: ChatClient,
                  retries: int) -> GenerationResult:
    prompt = build_generation_prompt(domain, {s.index: s.text for s in natural.sentences})
    messages = [{"role": "user", "content": prompt}]
    for attempt in range(retries + 1):
        raw = client.complete(messages)
        try:
            return parse_generation_output(raw, natural)
        except (ParseError, ValidationError) as e:
            if attempt < retries:
                log.warning("malformed generation for %s (%s), re-requesting", natural.doc_id, e)
                continue
            raise
    raise AssertionError("unreachable")


def generate_linked_pairs(naturals: list[Document], domain: str, client: ChatClient,
                          max_in_flight: int = 4, retries: int = 1) -> list[GenerationResult]:
    """Generate one linked source document per natural target document.

    Requests run concurrently up to ``max_in_flight``; results come back in
    input order. One malformed response per document is retried with the
    same prompt before the parse error surfaces.
    """
    if not naturals:
        return []
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        futures = [pool.submit(_generate_one, doc, domain, client, retries)
                   for doc in naturals]
        return [f.result() for f in futures]


def clean_article(text: str, client: ChatClient, retries: int = 1) -> str:
    messages = [{"role": "user", "content": build_cleaning_prompt(text)}]
    for attempt in range(retries + 1):
        raw = client.complete(messages)
        try:
            return parse_cleaning_output(raw)
        except ParseError as e:
            if attempt < retries:
                log.warning("malformed cleaning response (%s), re-requesting", e)
                continue
            raise
    raise AssertionError("unreachable")
