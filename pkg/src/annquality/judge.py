"""Relevance judging: a remote LLM judge over HTTP with a resumable cache, a
synthetic oracle judge for tests, and cross-validation statistics (agreement
rate, Cohen's kappa) between two judges.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

from .corpus import (
    LABEL_NOT_RELEVANT,
    LABEL_RELEVANT,
    CorpusError,
    DocStore,
    GroundTruth,
    Judgment,
    JudgmentSet,
    PathLike,
)


class JudgeError(RuntimeError):
    """Judging failed after retries, or responses could not be parsed."""


def default_prompt_template() -> str:
    return resources.files("annquality").joinpath("prompts/relevance_v1.txt").read_text()


@dataclass
class JudgeConfig:
    endpoint: str
    model: str
    judge_id: str
    prompt_template: str = field(default_factory=default_prompt_template)
    max_in_flight: int = 4
    max_attempts: int = 3
    backoff_base_ms: int = 200
    cache_path: Optional[PathLike] = None
    api_key_env: Optional[str] = None

    def __post_init__(self):
        if "{query}" not in self.prompt_template or "{document}" not in self.prompt_template:
            raise CorpusError("prompt template must contain {query} and {document}")
        if self.max_attempts < 1:
            raise CorpusError("max_attempts must be >= 1")
        if self.max_in_flight < 1:
            raise CorpusError("max_in_flight must be >= 1")

    @property
    def prompt_hash(self) -> str:
        return hashlib.sha256(self.prompt_template.encode("utf-8")).hexdigest()[:16]


# A transport takes (endpoint, payload, headers) and returns the parsed
# response JSON. The default uses requests; tests inject fakes.
Transport = Callable[[str, dict, dict], dict]


def _requests_transport(endpoint: str, payload: dict, headers: dict) -> dict:
    import requests

    resp = requests.post(endpoint, json=payload, headers=headers, timeout=60)
    if resp.status_code == 429 or resp.status_code >= 500:
        raise JudgeError(f"retryable HTTP {resp.status_code}")
    resp.raise_for_status()
    return resp.json()


def parse_label(text: str) -> bool:
    """Strict single-token parse; chain-of-thought responses are rejected."""
    token = text.strip().lower()
    if token == LABEL_RELEVANT.lower():
        return True
    if token in (LABEL_NOT_RELEVANT.lower(), "not relevant"):
        return False
    raise JudgeError(f"unparseable judge response {text!r}")


class JudgmentCache:
    """Append-only JSONL cache keyed by (query_id, doc_id, judge_id, prompt_hash)."""

    def __init__(self, path: PathLike):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[tuple[int, int, str, str], bool] = {}
        if self.path.is_file():
            with open(self.path, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    key = (
                        int(obj["query_id"]),
                        int(obj["doc_id"]),
                        str(obj["judge_id"]),
                        str(obj["prompt_hash"]),
                    )
                    self._entries[key] = obj["label"] == LABEL_RELEVANT

    def get(self, key: tuple[int, int, str, str]) -> Optional[bool]:
        return self._entries.get(key)

    def put(self, key: tuple[int, int, str, str], relevant: bool) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = relevant
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(
                    json.dumps(
                        {
                            "query_id": key[0],
                            "doc_id": key[1],
                            "judge_id": key[2],
                            "prompt_hash": key[3],
                            "label": LABEL_RELEVANT if relevant else LABEL_NOT_RELEVANT,
                        }
                    )
                    + "\n"
                )


def judge_ground_truth(
    gt: GroundTruth,
    docs: DocStore,
    cfg: JudgeConfig,
    transport: Transport = _requests_transport,
    sleep: Callable[[float], None] = time.sleep,
) -> JudgmentSet:
    """Label every (query, ground-truth doc) pair via the configured judge.

    Cached labels never trigger a network call; fresh labels are appended to
    the cache as they arrive, so an interrupted run resumes where it stopped.
    Pairs that still fail after retries surface as a JudgeError naming them.
    """
    cache = JudgmentCache(cfg.cache_path) if cfg.cache_path else None
    headers = {}
    if cfg.api_key_env:
        key = os.environ.get(cfg.api_key_env)
        if not key:
            raise JudgeError(f"environment variable {cfg.api_key_env} not set")
        headers["Authorization"] = f"Bearer {key}"

    pairs = [
        (qi, int(doc_id)) for qi in range(gt.n_queries) for doc_id in gt.ids[qi]
    ]

    def judge_pair(pair: tuple[int, int]) -> tuple[int, int, Optional[bool]]:
        qi, doc_id = pair
        key = (qi, doc_id, cfg.judge_id, cfg.prompt_hash)
        if cache is not None:
            hit = cache.get(key)
            if hit is not None:
                return qi, doc_id, hit
        prompt = cfg.prompt_template.format(
            query=docs.query_text(qi), document=docs.doc_text(doc_id)
        )
        payload = {"model": cfg.model, "prompt": prompt}
        last_error: Optional[Exception] = None
        for attempt in range(cfg.max_attempts):
            try:
                resp = transport(cfg.endpoint, payload, headers)
                relevant = parse_label(str(resp["text"]))
                if cache is not None:
                    cache.put(key, relevant)
                return qi, doc_id, relevant
            except Exception as exc:  # retried uniformly: transport and parse
                last_error = exc
                if attempt + 1 < cfg.max_attempts:
                    sleep(cfg.backoff_base_ms * (2**attempt) / 1000.0)
        raise JudgeError(
            f"query {qi}, doc {doc_id} unjudged after {cfg.max_attempts} attempts: {last_error}"
        )

    out = JudgmentSet()
    with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
        for qi, doc_id, relevant in pool.map(judge_pair, pairs):
            out.add(Judgment(qi, doc_id, relevant, cfg.judge_id))
    return out


def synthetic_oracle_judge(
    gt: GroundTruth, oracle, judge_id: str = "oracle"
) -> JudgmentSet:
    """Deterministic stand-in for the LLM judge: labels come from a planted
    relevance oracle (see the synth module)."""
    out = JudgmentSet()
    for qi in range(gt.n_queries):
        for doc_id in gt.ids[qi]:
            out.add(Judgment(qi, int(doc_id), oracle.is_relevant(qi, int(doc_id)), judge_id))
    return out


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgreementReport:
    n: int
    observed_agreement: float
    expected_agreement: float
    kappa: float
    per_label_agreement: dict[str, float]
    low_agreement_queries: list[tuple[int, float]]


def cross_validate(
    a: JudgmentSet, b: JudgmentSet, low_cutoff: float = 0.7
) -> AgreementReport:
    """Agreement statistics between two judges over identical (query, doc)
    coverage: observed agreement, chance-expected agreement from the marginal
    label frequencies, Cohen's kappa, per-label agreement (among pairs where at
    least one judge used the label, the fraction where both did), and the
    queries whose agreement falls below the cutoff."""
    a_pairs = {(e.query_id, e.doc_id): e.relevant for e in a}
    b_pairs = {(e.query_id, e.doc_id): e.relevant for e in b}
    if a_pairs.keys() != b_pairs.keys():
        missing = sorted(a_pairs.keys() ^ b_pairs.keys())[:5]
        raise CorpusError(f"judgment coverage mismatch, e.g. {missing}")
    n = len(a_pairs)
    if n == 0:
        raise CorpusError("no pairs to cross-validate")

    agree = both_rel = both_not = 0
    a_rel = b_rel = 0
    per_query: dict[int, list[bool]] = {}
    any_rel = any_not = 0
    for key in a_pairs:
        la, lb = a_pairs[key], b_pairs[key]
        same = la == lb
        agree += same
        a_rel += la
        b_rel += lb
        if la or lb:
            any_rel += 1
            both_rel += la and lb
        if (not la) or (not lb):
            any_not += 1
            both_not += (not la) and (not lb)
        per_query.setdefault(key[0], []).append(same)

    p_o = agree / n
    p_rel_a, p_rel_b = a_rel / n, b_rel / n
    p_e = p_rel_a * p_rel_b + (1 - p_rel_a) * (1 - p_rel_b)
    kappa = 1.0 if p_e >= 1.0 else (p_o - p_e) / (1 - p_e)
    per_label = {
        LABEL_RELEVANT: both_rel / any_rel if any_rel else 1.0,
        LABEL_NOT_RELEVANT: both_not / any_not if any_not else 1.0,
    }
    low = sorted(
        (
            (qid, sum(flags) / len(flags))
            for qid, flags in per_query.items()
            if sum(flags) / len(flags) < low_cutoff
        ),
        key=lambda t: (t[1], t[0]),
    )
    return AgreementReport(
        n=n,
        observed_agreement=p_o,
        expected_agreement=p_e,
        kappa=kappa,
        per_label_agreement=per_label,
        low_agreement_queries=low,
    )


def kappa_from_rates(p_o: float, p_e: float) -> float:
    """Cohen's kappa from observed and expected agreement rates."""
    if p_e >= 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)
