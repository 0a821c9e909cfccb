import json

import pytest

from linkforge.corpus import Document, DocumentPair, LinkingDataset, LinkSet


def make_pair(pair_id, source_texts, target_texts, links):
    pair = DocumentPair(
        pair_id,
        Document.from_texts(f"{pair_id}-src", "source", source_texts),
        Document.from_texts(f"{pair_id}-tgt", "target", target_texts),
    )
    return pair, LinkSet(pair_id, frozenset(links))


@pytest.fixture
def tiny_pair():
    return make_pair(
        "p1",
        ["The model beats the baseline on every benchmark they report.",
         "Evaluation uses three public datasets and a shared split."],
        ["We propose a compact ranking model for long documents.",
         "The ranking model beats the strongest baseline on every benchmark.",
         "Evaluation covers three public datasets with one shared split.",
         "Training takes four hours on one accelerator card.",
         "We release checkpoints and the full configuration files."],
        [(0, 1), (1, 2)],
    )


@pytest.fixture
def tiny_dataset(tiny_pair):
    pair2 = make_pair(
        "p2",
        ["The ablation section convincingly isolates the pooling change.",
         "Several claims about efficiency are not backed by timing numbers."],
        ["Our pooling change drives most of the observed improvement.",
         "An ablation isolates the pooling change from tuning effects.",
         "The method is efficient in practice across all settings.",
         "Timing numbers appear in the supplementary material only.",
         "We discuss limitations and failure cases in the appendix."],
        [(0, 1), (1, 2), (1, 3)],
    )
    return LinkingDataset("tiny", "news", [tiny_pair, pair2])


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
    return str(path)


# six word-rich "articles" sharing vocabulary so retrieval and the
# overlap-based stub classifier both have signal to work with
def desk_dataset_records():
    topics = [
        ("storm", "coastal storm damage response",
         ["officials", "harbor", "cleanup", "flooding", "ferries", "insurance"]),
        ("match", "championship match coverage",
         ["keeper", "penalty", "supporters", "stadium", "transfer", "referee"]),
        ("budget", "city budget negotiations",
         ["council", "transit", "housing", "deficit", "libraries", "vote"]),
        ("launch", "satellite launch program",
         ["rocket", "orbit", "payload", "weather", "engineers", "countdown"]),
        ("strike", "transit workers strike",
         ["union", "wages", "commuters", "talks", "buses", "mediator"]),
    ]
    records = []
    for name, theme, words in topics:
        target = [
            f"The {theme} story begins with the {words[0]} preparing detailed statements.",
            f"Reports describe how the {words[1]} situation developed over several tense days.",
            f"Residents mention the {words[2]} effort as the most visible consequence so far.",
            f"Independent observers connect the {words[3]} problem with earlier warnings from experts.",
            f"A spokesperson confirms the {words[4]} plan will continue through the coming month.",
            f"Analysts expect the {words[5]} question to dominate the next public meeting.",
            "Historical context shows similar situations rarely end quickly in this region.",
            f"The final section summarizes open questions that nobody has answered yet.",
        ]
        source = [
            f"A rival outlet frames the {words[1]} situation as entirely predictable this week.",
            f"Their coverage highlights the {words[2]} effort while praising local volunteers broadly.",
            f"One column ties the {words[3]} problem directly to ignored warnings from experts.",
            f"The closing piece questions whether the {words[4]} plan can really last a month.",
        ]
        records.append({
            "pair_id": f"pair-{name}",
            "source": {"doc_id": f"{name}-alt", "sentences": source, "meta": {}},
            "target": {"doc_id": f"{name}-orig", "sentences": target, "meta": {}},
            "links": [[0, 1], [1, 2], [2, 3], [3, 4]],
            "meta": {},
        })
    return records


@pytest.fixture
def desk_records():
    return desk_dataset_records()


# ---------------------------------------------------------------------------
# acceptance criteria summary: one pass/fail line per criterion
# ---------------------------------------------------------------------------

_acceptance_outcomes = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _acceptance_outcomes[name] = report.outcome
    elif report.when == "setup" and report.outcome != "passed":
        _acceptance_outcomes[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance_outcomes.items():
        label = "PASS" if outcome == "passed" else "FAIL"
        pretty = name.removeprefix("test_").replace("_", " ")
        terminalreporter.write_line(f"[{label}] {pretty}")
