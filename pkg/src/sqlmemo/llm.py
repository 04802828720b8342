"""Chat-completion access (remote endpoint or scripted mock) and the prompt
templates used for generation, verification, revision, and rephrasing."""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .schema import Schema

PROMPT_CHAR_BUDGET = 20000

GEN_DEFAULTS = {"temperature": 0.6, "top_p": 0.95, "max_tokens": 150}
DET_DEFAULTS = {"temperature": 0.0, "top_p": 1.0, "max_tokens": 300}


class PromptError(ValueError):
    pass


class ProviderError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.6
    top_p: float = 0.95
    max_tokens: int = 150

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


REQUIRED_SLOTS = {
    "generate": ["schema_block", "keywords"],
    "generate_nested": ["schema_block", "keywords", "nesting_hint"],
    "verify": ["schema_block", "question", "sql", "execution_result"],
    "revise": ["schema_block", "question", "sql", "error_message"],
    "rephrase": ["question"],
}

# Each template opens with a "### <kind>" header line; the mock provider keys
# its script on that header.
TEMPLATES = {
    "generate": (
        "### generate\n"
        "You write one new question with its SQL query for the database below.\n"
        "Database schema with one sample row per table:\n"
        "{schema_block}\n"
        "The SQL must use exactly this keyword structure: {keywords}\n"
        "Answer with two lines:\n"
        "Question: <the question>\n"
        "SQL: <the SQL query>"
    ),
    "generate_nested": (
        "### generate_nested\n"
        "You write one new question with its SQL query for the database below.\n"
        "Database schema with one sample row per table:\n"
        "{schema_block}\n"
        "The SQL must use exactly this keyword structure: {keywords}\n"
        "Structure hint: {nesting_hint} (the query must contain a subquery)\n"
        "Answer with two lines:\n"
        "Question: <the question>\n"
        "SQL: <the SQL query>"
    ),
    "verify": (
        "### verify\n"
        "Check whether the SQL answers the question on this database.\n"
        "Database schema with one sample row per table:\n"
        "{schema_block}\n"
        "Question: {question}\n"
        "SQL: {sql}\n"
        "Execution result: {execution_result}\n"
        "Answer with one word: Correct or Incorrect."
    ),
    "revise": (
        "### revise\n"
        "The SQL below is wrong for the question. Fix it.\n"
        "Database schema with one sample row per table:\n"
        "{schema_block}\n"
        "Question: {question}\n"
        "SQL: {sql}\n"
        "Error message: {error_message}\n"
        "Answer with one line:\n"
        "SQL: <the corrected SQL query>"
    ),
    "rephrase": (
        "### rephrase\n"
        "Rewrite this question with different wording but the same meaning.\n"
        "Question: {question}\n"
        "Answer with one line:\n"
        "Question: <the rephrased question>"
    ),
}

_SLOT_RE = re.compile(r"\{(\w+)\}")


def schema_block(schema: Schema) -> str:
    """One line per table: columns plus the sampled row, verbatim but delimited."""
    lines = []
    for table in schema.tables:
        cols = ", ".join(f"{n} ({k})" for n, k in schema.columns_of(table))
        row = schema.sample_rows.get(table)
        row_part = " | sample row: " + ", ".join(repr(v) for v in row) if row else ""
        lines.append(f"- table {table}: {cols}{row_part}")
    return "\n".join(lines)


def render_prompt(kind: str, **slots: str) -> str:
    if kind not in TEMPLATES:
        raise PromptError(f"unknown template kind {kind!r}")
    template = TEMPLATES[kind]
    for slot in REQUIRED_SLOTS[kind]:
        if slot not in slots or slots[slot] is None:
            raise PromptError(f"missing required slot {slot!r} for template {kind!r}")
    needed = set(_SLOT_RE.findall(template))
    rendered = template.format(**{k: slots.get(k, "") for k in needed})
    if len(rendered) > PROMPT_CHAR_BUDGET:
        raise PromptError(
            f"prompt exceeds character budget: {len(rendered)} > {PROMPT_CHAR_BUDGET}")
    return rendered


def prompt_kind(prompt: str) -> str | None:
    m = re.match(r"### (\w+)\n", prompt)
    return m.group(1) if m else None


class LlmProvider:
    def complete(self, request: ChatRequest) -> str:
        raise NotImplementedError

    @property
    def call_count(self) -> int:
        return getattr(self, "_calls", 0)


class MockProvider(LlmProvider):
    """Deterministic scripted provider.

    The script maps (kind, ordinal) to responses; ordinal "*" is a fallback
    served for any call of that kind. Responses may contain {first_table},
    {question}, and {sql} placeholders, filled from the incoming prompt.
    """

    def __init__(self, script: list[dict]):
        self._exact: dict[tuple[str, int], str] = {}
        self._fallback: dict[str, str] = {}
        self._ordinals: dict[str, int] = {}
        self._calls = 0
        for entry in script:
            match = entry["match"]
            kind = match["kind"]
            ordinal = match.get("ordinal", "*")
            if ordinal == "*":
                self._fallback[kind] = entry["response"]
            else:
                self._exact[(kind, int(ordinal))] = entry["response"]

    @classmethod
    def from_script_file(cls, path: str | Path) -> "MockProvider":
        entries = [json.loads(l) for l in Path(path).read_text().splitlines() if l.strip()]
        return cls(entries)

    def complete(self, request: ChatRequest) -> str:
        self._calls += 1
        prompt = request.messages[-1][1]
        kind = prompt_kind(prompt) or "generate"
        ordinal = self._ordinals.get(kind, 0)
        self._ordinals[kind] = ordinal + 1
        if (kind, ordinal) in self._exact:
            response = self._exact[(kind, ordinal)]
        elif kind in self._fallback:
            response = self._fallback[kind]
        else:
            raise ProviderError(f"mock script exhausted for kind {kind!r} (call {ordinal})")
        return self._fill(response, prompt)

    @staticmethod
    def _fill(response: str, prompt: str) -> str:
        if "{first_table}" in response:
            m = re.search(r"^- table (\S+):", prompt, re.MULTILINE)
            response = response.replace("{first_table}", m.group(1) if m else "t")
        if "{question}" in response:
            m = re.search(r"^Question: (.*)$", prompt, re.MULTILINE)
            response = response.replace("{question}", m.group(1) if m else "")
        if "{sql}" in response:
            m = re.search(r"^SQL: (.*)$", prompt, re.MULTILINE)
            response = response.replace("{sql}", m.group(1) if m else "")
        return response


class RemoteProvider(LlmProvider):
    """OpenAI-chat-compatible endpoint with bounded exponential-backoff retry."""

    def __init__(self, base_url: str | None = None, api_key: str | None = None,
                 model: str | None = None, max_retries: int = 3,
                 backoff: float = 1.0, sleep=time.sleep):
        self.base_url = (base_url or os.environ.get("LLM_API_BASE", "")).rstrip("/")
        self.api_key = api_key or os.environ.get("LLM_API_KEY", "")
        self.model = model or os.environ.get("LLM_MODEL", "gpt-4o-mini")
        self.max_retries = max_retries
        self.backoff = backoff
        self._sleep = sleep
        self._calls = 0
        if not self.base_url:
            raise ProviderError("LLM_API_BASE not configured for remote provider")

    def complete(self, request: ChatRequest) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": r, "content": c} for r, c in request.messages],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last_error = None
        for attempt in range(1 + self.max_retries):
            self._calls += 1
            try:
                resp = requests.post(f"{self.base_url}/chat/completions", json=body,
                                     headers=headers, timeout=120)
                if resp.status_code in (429, 500, 502, 503):
                    last_error = ProviderError(f"HTTP {resp.status_code}")
                elif resp.ok:
                    try:
                        return resp.json()["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, ValueError) as e:
                        raise ProviderError(f"malformed endpoint response: {e}") from e
                else:
                    raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            except requests.RequestException as e:
                last_error = ProviderError(str(e))
            if attempt < self.max_retries:
                self._sleep(self.backoff * (2 ** attempt))
        raise ProviderError(f"retries exhausted: {last_error}")


def complete(provider: LlmProvider, request: ChatRequest) -> str:
    return provider.complete(request)


def _strip_fences(text: str) -> str:
    text = re.sub(r"```(?:sql)?\s*", "", text)
    return text.replace("```", "").strip()


def parse_pair(response: str) -> tuple[str, str]:
    """Extract the "Question:" and "SQL:" sections from a generation response."""
    q_match = re.search(r"Question:\s*(.+)", response)
    if not q_match:
        raise PromptError("missing 'Question:' marker in response")
    sql_match = re.search(r"SQL:\s*(.+?)(?=\n[A-Z][a-z]+:|\Z)", response, re.DOTALL)
    if not sql_match:
        raise PromptError("missing 'SQL:' marker in response")
    sql = _strip_fences(sql_match.group(1)).strip()
    if not sql:
        raise PromptError("empty SQL in response")
    return q_match.group(1).strip(), " ".join(sql.split())


def parse_sql_only(response: str) -> str:
    m = re.search(r"SQL:\s*(.+?)(?=\n[A-Z][a-z]+:|\Z)", response, re.DOTALL)
    text = m.group(1) if m else response
    sql = _strip_fences(text).strip()
    if not sql:
        raise PromptError("empty SQL in revision response")
    return " ".join(sql.split())


def parse_verdict(response: str) -> tuple[str, bool]:
    """Returns (verdict, warning). Correct wins only if it appears before
    Incorrect; neither token present means Incorrect with a warning."""
    tokens = re.findall(r"\b(incorrect|correct)\b", response, re.IGNORECASE)
    if not tokens:
        return "Incorrect", True
    return ("Correct" if tokens[0].lower() == "correct" else "Incorrect"), False
