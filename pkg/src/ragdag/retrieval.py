"""External knowledge lookup: a local BM25 index or a remote search service.

The local index is a plain Okapi BM25 (k1=1.2, b=0.75) over lowercased,
punctuation-stripped whitespace tokens. It stands in for a dense retriever
at desk scale; the remote client covers deployments that already run one.
"""

from __future__ import annotations

import json
import math
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    EmptyCorpusError,
    EmptyQueryError,
    EmptyResultError,
    EndpointUnreachableError,
    IndexNotBuiltError,
    MalformedCorpusLineError,
)

BM25_K1 = 1.2
BM25_B = 0.75

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation characters, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


@dataclass(frozen=True)
class Passage:
    id: str
    title: str
    text: str
    score: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"passage {self.id} has non-finite score")


@dataclass(frozen=True)
class RetrieverConfig:
    kind: str = "local_lexical"  # or "remote"
    top_k: int = 5
    corpus_path: str | None = None
    endpoint: str | None = None

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass(frozen=True)
class IndexSummary:
    documents: int
    terms: int


def index_path_for(corpus_path: str | Path) -> Path:
    return Path(str(corpus_path) + ".index.json")


def _parse_corpus(corpus_path: str | Path) -> list[dict]:
    docs = []
    with open(corpus_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedCorpusLineError(line_no, f"invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise MalformedCorpusLineError(line_no, "record is not an object")
            if "id" not in obj:
                raise MalformedCorpusLineError(line_no, "missing id field")
            text = obj.get("text", obj.get("contents"))
            if text is None:
                raise MalformedCorpusLineError(line_no, "missing text field")
            docs.append({"id": str(obj["id"]), "title": obj.get("title", ""), "text": text})
    if not docs:
        raise EmptyCorpusError(f"no records in {corpus_path}")
    return docs


def build_index(corpus_path: str | Path) -> IndexSummary:
    """Build the inverted index and persist it beside the corpus.

    Rebuilding is idempotent: the index is a pure function of the corpus.
    """
    docs = _parse_corpus(corpus_path)
    doc_tokens = [tokenize(d["title"] + " " + d["text"]) for d in docs]
    postings: dict[str, list[list[int]]] = {}
    for idx, toks in enumerate(doc_tokens):
        for term, tf in sorted(Counter(toks).items()):
            postings.setdefault(term, []).append([idx, tf])
    payload = {
        "documents": len(docs),
        "terms": len(postings),
        "doc_len": [len(t) for t in doc_tokens],
        "docs": docs,
        "postings": postings,
    }
    with open(index_path_for(corpus_path), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, sort_keys=True)
    return IndexSummary(documents=len(docs), terms=len(postings))


class LocalRetriever:
    """BM25 search over a persisted inverted index."""

    def __init__(self, corpus_path: str | Path, *, auto_build: bool = False):
        self.corpus_path = Path(corpus_path)
        idx_path = index_path_for(corpus_path)
        if not idx_path.exists():
            if auto_build:
                build_index(corpus_path)
            else:
                raise IndexNotBuiltError(
                    f"no index beside {corpus_path}; run build_index first"
                )
        with open(idx_path, encoding="utf-8") as fh:
            data = json.load(fh)
        self._docs = data["docs"]
        self._doc_len = data["doc_len"]
        self._postings = data["postings"]
        self._n = data["documents"]
        self._avgdl = sum(self._doc_len) / self._n

    def _idf(self, term: str) -> float:
        df = len(self._postings.get(term, ()))
        return math.log(1 + (self._n - df + 0.5) / (df + 0.5))

    def search(self, query: str, top_k: int = 5) -> list[Passage]:
        """Top-k passages by descending BM25 score; ties by ascending id.

        Duplicate query terms contribute once per occurrence. Documents with
        zero overlap are never returned.
        """
        if not query.strip():
            raise EmptyQueryError("query is empty")
        scores: dict[int, float] = {}
        for term in tokenize(query):
            plist = self._postings.get(term)
            if not plist:
                continue
            idf = self._idf(term)
            for doc_idx, tf in plist:
                dl = self._doc_len[doc_idx]
                denom = tf + BM25_K1 * (1 - BM25_B + BM25_B * dl / self._avgdl)
                scores[doc_idx] = scores.get(doc_idx, 0.0) + idf * tf * (BM25_K1 + 1) / denom
        ranked = sorted(
            ((idx, s) for idx, s in scores.items() if s > 0),
            key=lambda pair: (-pair[1], self._docs[pair[0]]["id"]),
        )
        return [
            Passage(
                id=self._docs[idx]["id"],
                title=self._docs[idx]["title"],
                text=self._docs[idx]["text"],
                score=s,
            )
            for idx, s in ranked[:top_k]
        ]


class RemoteRetriever:
    """POST {query, top_k} to a search service returning passage records."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def search(self, query: str, top_k: int = 5) -> list[Passage]:
        if not query.strip():
            raise EmptyQueryError("query is empty")
        import requests

        try:
            resp = requests.post(
                self.endpoint, json={"query": query, "top_k": top_k}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise EndpointUnreachableError(str(exc)) from exc
        if resp.status_code >= 400:
            raise EndpointUnreachableError(f"search endpoint returned {resp.status_code}")
        return [
            Passage(
                id=str(p["id"]),
                title=p.get("title", ""),
                text=p.get("text", ""),
                score=float(p.get("score", 0.0)),
            )
            for p in resp.json()
        ]


def first_passage(passages: list[Passage]) -> Passage:
    """Head of a nonempty result list (used by the summarizer ablation)."""
    if not passages:
        raise EmptyResultError("no passages to take the first of")
    return passages[0]
