"""Shared fixtures: scripted scenarios, corpora, and independent oracles."""

from __future__ import annotations

import json
import math
import random
import string
from pathlib import Path

import pytest

from ragdag.gateway import Gateway, Role, ScriptedBackend, ScriptedRule
from ragdag.retrieval import build_index
from ragdag.roles import RoleRunner


def rule(role: Role, pattern: str, response: str, matcher: str = "substring") -> ScriptedRule:
    return ScriptedRule(role=role, matcher=matcher, pattern=pattern, response=response)


def write_corpus(path: Path, docs: list[dict]) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc, ensure_ascii=False) + "\n")
    build_index(path)
    return path


def write_dataset(path: Path, items: list[dict]) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item, ensure_ascii=False) + "\n")
    return path


def scripted_runner(rules: list[ScriptedRule]) -> RoleRunner:
    return RoleRunner(Gateway(ScriptedBackend(rules)))


# --- golden two-branch scenario (independent Q1, Q2 feeding Q3) -------------

GOLDEN_ORIGIN = (
    "Are the birth cities of composer Adler and composer Brena in the same country?"
)

GOLDEN_PAYLOAD = json.dumps(
    [
        {"id": "Q1", "question": "In which city was composer Adler born?", "dependencies": []},
        {"id": "Q2", "question": "In which city was composer Brena born?", "dependencies": []},
        {
            "id": "Q3",
            "question": "Are {Q1.answer} and {Q2.answer} in the same country?",
            "dependencies": ["Q1", "Q2"],
        },
    ]
)


def golden_rules() -> list[ScriptedRule]:
    return [
        rule(Role.GRAPH_BUILDER, GOLDEN_ORIGIN, GOLDEN_PAYLOAD),
        rule(Role.RETRIEVAL_JUDGE, "Question: In which city was composer Adler born?", "No"),
        rule(Role.RETRIEVAL_JUDGE, "Question: In which city was composer Brena born?", "No"),
        rule(Role.RETRIEVAL_JUDGE, "Question: Are Vienna and Graz in the same country?", "Yes"),
        rule(Role.SUB_ANSWER, "Question: In which city was composer Adler born?", "Vienna"),
        rule(Role.SUB_ANSWER, "Question: In which city was composer Brena born?", "Graz"),
        rule(Role.SUB_ANSWER, "Question: Are Vienna and Graz in the same country?", "Yes"),
        rule(Role.SUMMARIZER, "composer Adler born", "Adler was born in Vienna."),
        rule(Role.SUMMARIZER, "composer Brena born", "Brena was born in Graz."),
        # Catch-all: only reachable under ablations that widen retrieval.
        rule(Role.SUMMARIZER, "", "A generic note."),
        rule(Role.NEW_QUERY, "Original question: " + GOLDEN_ORIGIN, "None"),
        rule(Role.REASONER, "Original question: " + GOLDEN_ORIGIN, "Yes"),
    ]


GOLDEN_DOCS = [
    {"id": "d1", "title": "Adler", "text": "Adler was a composer born in the city of Vienna."},
    {"id": "d2", "title": "Vienna", "text": "Vienna is the capital city of Austria."},
    {"id": "d3", "title": "Brena", "text": "Brena was a composer born in the city of Graz."},
    {"id": "d4", "title": "Graz", "text": "Graz is a city in southern Austria."},
    {"id": "d5", "title": "Composers", "text": "Many composers were born in Austrian cities."},
    {"id": "d6", "title": "Music", "text": "Classical music flourished in cities across Europe."},
]


@pytest.fixture
def golden_corpus(tmp_path) -> Path:
    return write_corpus(tmp_path / "golden_corpus.jsonl", GOLDEN_DOCS)


@pytest.fixture
def golden_runner() -> RoleRunner:
    return scripted_runner(golden_rules())


# --- batch scenario with a fixed mean of 2.27 sub-queries per item ----------

BATCH_ITEM_COUNT = 100
# 73 two-node chains and 27 three-node chains: 227 sub-queries in total.
BATCH_THREE_NODE_ITEMS = 27


def batch_items() -> list[dict]:
    return [
        {
            "id": f"item{i:03d}",
            "question": f"tell me about planet item{i:03d}",
            "golden_answers": ["final answer"],
        }
        for i in range(BATCH_ITEM_COUNT)
    ]


def batch_rules() -> list[ScriptedRule]:
    rules = []
    for i in range(BATCH_ITEM_COUNT):
        tag = f"item{i:03d}"
        nodes = [
            {"id": "Q1", "question": f"first fact planet {tag}", "dependencies": []},
            {"id": "Q2", "question": f"second fact planet {tag}", "dependencies": ["Q1"]},
        ]
        if i < BATCH_THREE_NODE_ITEMS:
            nodes.append(
                {"id": "Q3", "question": f"third fact planet {tag}", "dependencies": ["Q2"]}
            )
        rules.append(rule(Role.GRAPH_BUILDER, tag, json.dumps(nodes)))
    rules += [
        rule(Role.RETRIEVAL_JUDGE, "", "No"),
        rule(Role.SUB_ANSWER, "", "a fact"),
        rule(Role.SUMMARIZER, "", "a short summary"),
        rule(Role.NEW_QUERY, "", "None"),
        rule(Role.REASONER, "", "final answer"),
    ]
    return rules


BATCH_DOCS = [
    {
        "id": f"p{j}",
        "title": f"planet {j}",
        "text": f"planet facts entry {j} about the planet catalogue",
    }
    for j in range(6)
]


@pytest.fixture
def batch_corpus(tmp_path) -> Path:
    return write_corpus(tmp_path / "batch_corpus.jsonl", BATCH_DOCS)


# --- independent scoring oracles ---------------------------------------------


def brute_force_bm25(
    docs: list[dict], query: str, k1: float = 1.2, b: float = 0.75
) -> list[tuple[str, float]]:
    """Exhaustive BM25 over all documents, reimplemented from scratch:
    no inverted index, direct idf/tf computation per document."""
    punct = str.maketrans("", "", string.punctuation)

    def toks(text: str) -> list[str]:
        return text.lower().translate(punct).split()

    doc_tokens = [toks(d["title"] + " " + d["text"]) for d in docs]
    n = len(docs)
    avgdl = sum(len(t) for t in doc_tokens) / n
    query_tokens = toks(query)
    scored = []
    for d, tokens in zip(docs, doc_tokens):
        score = 0.0
        for term in query_tokens:
            df = sum(1 for other in doc_tokens if term in other)
            if df == 0:
                continue
            tf = tokens.count(term)
            if tf == 0:
                continue
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(tokens) / avgdl))
        if score > 0:
            scored.append((d["id"], score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored


def random_dag_payload(rng: random.Random, max_nodes: int = 8) -> list[dict]:
    """Random acyclic node array; some dependencies carry placeholders."""
    count = rng.randint(1, max_nodes)
    payload = []
    for i in range(1, count + 1):
        pool = [f"Q{j}" for j in range(1, i)]
        parents = sorted(
            rng.sample(pool, k=rng.randint(0, min(len(pool), 3))),
            key=lambda s: int(s[1:]),
        )
        question = f"question number {i}"
        for p in parents:
            if rng.random() < 0.5:
                question += f" using {{{p}.answer}}"
        payload.append({"id": f"Q{i}", "question": question, "dependencies": parents})
    return payload
