"""Accuracy matrix upkeep and continual-learning metrics, with exact-set-match
and execution-match accuracy variants."""

from __future__ import annotations

from dataclasses import dataclass, field

from .executor import IndeterminateComparison, SqlExecutor, results_match
from .schema import Schema
from .skeleton import KEYWORDS, SqlParseError, tokenize, _validate


# --- exact set match ----------------------------------------------------------

_CLAUSE_STARTS = {"WHERE", "GROUP", "HAVING", "ORDER", "LIMIT"}
_SET_OPS = {"UNION", "INTERSECT", "EXCEPT"}


def _canonical_tokens(sql: str) -> list[str]:
    """Uppercased keywords, aliases stripped, dotted refs reduced to the
    column name."""
    tokens = tokenize(sql)
    _validate(tokens, sql)
    out: list[str] = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        up = tok.upper()
        if up == "AS" and i + 1 < len(tokens):
            i += 2
            continue
        if up in KEYWORDS:
            out.append(up)
        elif "." in tok and not tok.replace(".", "").isdigit():
            out.append(tok.split(".")[-1].lower())
        elif tok[:1].isalpha() or tok[:1] == "_":
            out.append(tok.lower())
        else:
            out.append(tok)
        i += 1
    return out


def _split_top(tokens: list[str], separators: set[str]) -> list[list[str]]:
    parts, cur, depth = [], [], 0
    for tok in tokens:
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth -= 1
        if depth == 0 and tok.upper() in separators:
            parts.append(cur)
            cur = []
        else:
            cur.append(tok)
    parts.append(cur)
    return parts


def _clauses(tokens: list[str]) -> dict:
    """Decompose one SELECT query into comparable clause components."""
    idx: list[tuple[str, int]] = []
    depth = 0
    for i, tok in enumerate(tokens):
        up = tok.upper()
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth -= 1
        elif depth == 0 and (up in _CLAUSE_STARTS or up in {"SELECT", "FROM"}):
            if up in {"GROUP", "ORDER"} and not (i + 1 < len(tokens) and tokens[i + 1].upper() == "BY"):
                continue
            idx.append((up, i))
    idx.append(("$end", len(tokens)))
    spans: dict[str, list[str]] = {}
    for (name, start), (_n, end) in zip(idx, idx[1:]):
        body_start = start + 1
        if name in {"GROUP", "ORDER"}:
            body_start += 1  # skip BY
        spans.setdefault(name, tokens[body_start:end])

    def items(name):  # comma-separated item set
        toks = spans.get(name)
        if toks is None:
            return None
        return frozenset(" ".join(p) for p in _split_top(toks, {","}) if p)

    def conjuncts(name):  # top-level AND split
        toks = spans.get(name)
        if toks is None:
            return None
        return frozenset(" ".join(p) for p in _split_top(toks, {"AND"}) if p)

    return {
        "select": items("SELECT"),
        "from": frozenset(spans.get("FROM", [])) or None,
        "where": conjuncts("WHERE"),
        "group": items("GROUP"),
        "having": conjuncts("HAVING"),
        "order": " ".join(spans["ORDER"]) if "ORDER" in spans else None,
        "limit": " ".join(spans["LIMIT"]) if "LIMIT" in spans else None,
    }


def em_match(gold: str, pred: str, schema: Schema | None = None) -> bool:
    """Clause-set comparison: SELECT/WHERE/GROUP BY compared as sets, ORDER BY
    as a sequence. Unparseable predictions never match."""
    gold_tokens = _canonical_tokens(gold)
    try:
        pred_tokens = _canonical_tokens(pred)
    except SqlParseError:
        return False
    gold_parts = _split_top(gold_tokens, _SET_OPS)
    pred_parts = _split_top(pred_tokens, _SET_OPS)
    if len(gold_parts) != len(pred_parts):
        return False
    gold_ops = [t.upper() for t in gold_tokens if t.upper() in _SET_OPS]
    pred_ops = [t.upper() for t in pred_tokens if t.upper() in _SET_OPS]
    if gold_ops != pred_ops:
        return False
    return all(_clauses(g) == _clauses(p) for g, p in zip(gold_parts, pred_parts))


def gold_is_ordered(gold: str) -> bool:
    """True when the outermost query carries ORDER BY."""
    depth = 0
    for tok in tokenize(gold):
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth -= 1
        elif depth == 0 and tok.upper() == "ORDER":
            return True
    return False


def ex_match(gold: str, pred: str, db_id: str, executor: SqlExecutor) -> bool:
    """Execution-result comparison; prediction errors and timeouts are
    mismatches, gold failures are data errors."""
    gold_out = executor.execute(db_id, gold)
    if gold_out.status != "ok":
        raise ValueError(f"gold SQL failed to execute on {db_id!r}: "
                         f"{gold_out.error_message or gold_out.status}")
    pred_out = executor.execute(db_id, pred)
    if pred_out.status != "ok":
        return False
    try:
        return results_match(gold_out, pred_out, ordered=gold_is_ordered(gold))
    except IndeterminateComparison:
        return False


# --- accuracy matrix and metrics ---------------------------------------------

@dataclass
class AccuracyMatrix:
    """a[m][n]: accuracy on task n's test set after training stage m
    (1-based keys), plus the superdiagonal entries a[i-1][i] needed for FWT,
    per-task reference accuracies, and the combined-test-set accuracy."""

    kind: str  # EM | EX
    entries: dict[tuple[int, int], float] = field(default_factory=dict)
    reference: dict[int, float] = field(default_factory=dict)
    combined: float | None = None

    def set(self, m: int, n: int, value: float) -> None:
        if not (0.0 <= value <= 1.0):
            raise ValueError(f"accuracy out of range: {value}")
        self.entries[(m, n)] = value

    def get(self, m: int, n: int) -> float:
        if (m, n) not in self.entries:
            raise KeyError(f"matrix entry a[{m}][{n}] undefined")
        return self.entries[(m, n)]

    @property
    def num_tasks(self) -> int:
        return max((n for _m, n in self.entries), default=0)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "M": self.num_tasks,
            "entries": {f"{m},{n}": v for (m, n), v in sorted(self.entries.items())},
            "reference": {str(i): v for i, v in sorted(self.reference.items())},
            "combined": self.combined,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AccuracyMatrix":
        mat = cls(kind=obj["kind"], combined=obj.get("combined"))
        for key, v in obj["entries"].items():
            m, n = key.split(",")
            mat.entries[(int(m), int(n))] = v
        mat.reference = {int(i): v for i, v in obj.get("reference", {}).items()}
        return mat


def metrics(matrix: AccuracyMatrix) -> dict:
    """ACC_a, ACC_w, BWT, FWT from the accuracy matrix. BWT and FWT are None
    for a single task."""
    m_tasks = matrix.num_tasks
    if m_tasks < 1:
        raise ValueError("empty accuracy matrix")
    acc_a = sum(matrix.get(m_tasks, i) for i in range(1, m_tasks + 1)) / m_tasks
    acc_w = matrix.combined
    if m_tasks == 1:
        return {"ACC_a": acc_a, "ACC_w": acc_w, "BWT": None, "FWT": None}
    bwt = sum(matrix.get(m_tasks, i) - matrix.get(i, i)
              for i in range(1, m_tasks)) / (m_tasks - 1)
    fwt = sum(matrix.get(i - 1, i) - matrix.reference[i]
              for i in range(2, m_tasks + 1)) / (m_tasks - 1)
    return {"ACC_a": acc_a, "ACC_w": acc_w, "BWT": bwt, "FWT": fwt}


def format_report(em: AccuracyMatrix, ex: AccuracyMatrix) -> str:
    """Markdown table with metrics in percent, one decimal place."""
    rows = ["| metric | EM | EX |", "|---|---|---|"]
    em_m, ex_m = metrics(em), metrics(ex)
    for name in ("ACC_a", "ACC_w", "BWT", "FWT"):
        def fmt(v):
            return "-" if v is None else f"{100 * v:.1f}"
        rows.append(f"| {name} | {fmt(em_m[name])} | {fmt(ex_m[name])} |")
    return "\n".join(rows)
