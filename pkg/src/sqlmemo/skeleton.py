"""Domain information elimination for text-to-SQL samples.

Turns a (question, SQL, schema) triple into a domain-free pair: the question
with linked entities masked, and the SQL reduced to its syntax skeleton with
[COL]/[TAB]/[VAL] placeholders. Also provides keyword simplification for
prompt construction and token-level edit distance between skeletons.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .schema import Schema


class SqlParseError(ValueError):
    """Raised when a SQL string cannot be tokenized under the supported grammar."""


# Keywords retained (uppercase) in skeletons.
KEYWORDS = {
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "ORDER", "LIMIT",
    "JOIN", "INNER", "LEFT", "RIGHT", "OUTER", "FULL", "CROSS", "ON", "AS",
    "AND", "OR", "NOT", "IN", "LIKE", "BETWEEN", "EXISTS", "IS", "NULL",
    "UNION", "INTERSECT", "EXCEPT", "ALL", "DISTINCT", "ASC", "DESC",
    "COUNT", "SUM", "AVG", "MIN", "MAX", "CAST",
}

# Statement-level constructs outside the Spider-class grammar.
UNSUPPORTED = {
    "INSERT", "UPDATE", "DELETE", "CREATE", "DROP", "ALTER", "PRAGMA",
    "ATTACH", "WITH", "REPLACE", "VACUUM",
}

AGGREGATES = {"COUNT", "SUM", "AVG", "MIN", "MAX"}

COMPARISON_OPS = {"<", ">", "=", "!=", ">=", "<=", "<>"}
# Textual operators that also trigger the operator-group hint in simplification.
GROUP_OP_KEYWORDS = {"LIKE", "IN", "BETWEEN"}

PLACEHOLDER_RE = re.compile(r"\[(COL|TAB|VAL)\d*\]")

_TOKEN_RE = re.compile(
    r"""
    \s+
  | \[(?:COL|TAB|VAL)\d*\]
  | '(?:[^']|'')*'
  | "(?:[^"]|"")*"
  | \d+\.\d+ | \.\d+ | \d+
  | [A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)?
  | <> | <= | >= | != | [<>=]
  | [(),;*+\-/%]
    """,
    re.VERBOSE,
)


def tokenize(sql: str) -> list[str]:
    """Split SQL into tokens; raises SqlParseError on unrecognized input."""
    tokens = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            raise SqlParseError(f"unrecognized token at position {pos}: {sql[pos:pos + 20]!r}")
        pos = m.end()
        tok = m.group(0)
        if tok.strip():
            tokens.append(tok)
    return tokens


def _is_string_literal(tok: str) -> bool:
    return len(tok) >= 2 and tok[0] in "'\"" and tok[-1] == tok[0]


def _is_number(tok: str) -> bool:
    return bool(re.fullmatch(r"\d+\.\d+|\.\d+|\d+", tok))


def _is_identifier(tok: str) -> bool:
    if tok.upper() in KEYWORDS or tok.upper() in UNSUPPORTED:
        return False
    return bool(re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)?", tok))


def _validate(tokens: list[str], sql: str) -> None:
    if not tokens:
        raise SqlParseError("empty SQL")
    for tok in tokens:
        up = tok.upper()
        if up in UNSUPPORTED:
            raise SqlParseError(f"unsupported construct: {tok}")
    first = tokens[0].upper()
    if first not in {"SELECT", "("}:
        raise SqlParseError(f"expected SELECT, got {tokens[0]!r}")
    depth = 0
    for tok in tokens:
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth -= 1
            if depth < 0:
                raise SqlParseError("unbalanced parentheses")
    if depth != 0:
        raise SqlParseError("unbalanced parentheses")
    if "SELECT" not in {t.upper() for t in tokens}:
        raise SqlParseError(f"no SELECT in query: {sql!r}")


@dataclass(frozen=True)
class SqlSkeleton:
    """A SQL string stripped of schema identifiers and literals."""

    skeleton: str
    token_seq: tuple[str, ...]
    keywords: tuple[str, ...]
    nested: bool

    @classmethod
    def from_string(cls, skeleton: str) -> "SqlSkeleton":
        """Build from an existing skeleton string (placeholders pass through)."""
        tokens = tokenize(skeleton)
        return cls(
            skeleton=" ".join(tokens),
            token_seq=tuple(tokens),
            keywords=tuple(_ordered_keywords(tokens)),
            nested=_detect_nested(tokens),
        )


def _ordered_keywords(tokens: list[str]) -> list[str]:
    """Deduplicated keywords/operators in first-occurrence order, with
    GROUP BY / ORDER BY merged into single entries."""
    out: list[str] = []
    seen: set[str] = set()
    i = 0
    while i < len(tokens):
        up = tokens[i].upper()
        if up in {"GROUP", "ORDER"} and i + 1 < len(tokens) and tokens[i + 1].upper() == "BY":
            up = f"{up} BY"
            i += 1
        if (up in KEYWORDS or up in COMPARISON_OPS or up in {"GROUP BY", "ORDER BY"}) and up not in seen:
            seen.add(up)
            out.append(up)
        i += 1
    return out


def _detect_nested(tokens: list[str]) -> bool:
    depth = 0
    for tok in tokens:
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth -= 1
        elif tok.upper() == "SELECT" and depth > 0:
            return True
    return False


def extract_skeleton(sql: str, schema: Schema | None = None) -> SqlSkeleton:
    """Mask identifiers and literals, keeping only syntactic structure.

    Column references become [COL], table references [TAB], literals [VAL].
    `*` is retained; keywords and aggregates are uppercased; aliases are
    stripped. Idempotent on its own output.
    """
    raw = tokenize(sql)
    _validate(raw, sql)

    out: list[str] = []
    # Per-paren-depth flag: are we in a FROM table list right now?
    table_mode: dict[int, bool] = {}
    depth = 0
    prev_meaningful = ""
    i = 0
    while i < len(raw):
        tok = raw[i]
        up = tok.upper()

        if tok == "(":
            depth += 1
            table_mode[depth] = False
            out.append(tok)
        elif tok == ")":
            table_mode.pop(depth, None)
            depth -= 1
            out.append(tok)
        elif PLACEHOLDER_RE.fullmatch(tok):
            kind = re.match(r"\[(COL|TAB|VAL)", tok).group(1)
            out.append(f"[{kind}]")
        elif up in KEYWORDS:
            if up == "AS":
                # Alias definition: drop "AS <name>".
                if i + 1 < len(raw) and _is_identifier(raw[i + 1]):
                    i += 2
                    continue
                i += 1
                continue
            if up in {"FROM", "JOIN"}:
                table_mode[depth] = True
            elif up not in {"INNER", "LEFT", "RIGHT", "OUTER", "FULL", "CROSS"}:
                if table_mode.get(depth) and up not in {"AS"}:
                    table_mode[depth] = False
            out.append(up)
            prev_meaningful = up
        elif _is_string_literal(tok) or _is_number(tok):
            out.append("[VAL]")
        elif _is_identifier(tok):
            if "." in tok:
                out.append("[COL]")
            elif up in AGGREGATES and i + 1 < len(raw) and raw[i + 1] == "(":
                out.append(up)
            elif table_mode.get(depth):
                # First identifier after FROM/JOIN (or after a comma in the
                # table list) is a table; a bare identifier right after a
                # table is an alias and is dropped.
                if out and out[-1] == "[TAB]":
                    i += 1
                    continue
                out.append("[TAB]")
            else:
                out.append("[COL]")
        else:
            # operators, punctuation, `*`
            if tok == "," and not table_mode.get(depth):
                pass
            out.append(tok)
            prev_meaningful = tok
        i += 1

    skeleton_str = " ".join(out)
    return SqlSkeleton(
        skeleton=skeleton_str,
        token_seq=tuple(out),
        keywords=tuple(_ordered_keywords(out)),
        nested=_detect_nested(out),
    )


NESTING_HINT = "NESTING"
OPERATOR_GROUP = "[<,>,=]"


def simplify_skeleton(z: SqlSkeleton) -> str:
    """Collapse a skeleton to its unique-keyword summary for prompting.

    Comparison operators fold into the single group hint [<,>,=] at the
    position of their first occurrence; a NESTING element is appended for
    skeletons containing a subquery.
    """
    parts: list[str] = []
    group_emitted = False
    for kw in z.keywords:
        if kw in COMPARISON_OPS or kw in GROUP_OP_KEYWORDS:
            if not group_emitted:
                parts.append(OPERATOR_GROUP)
                group_emitted = True
            continue
        if kw in {"AND", "OR", "NOT", "AS", "ON", "DISTINCT", "ALL",
                  "IS", "NULL", "ASC", "DESC", "EXISTS",
                  "INNER", "LEFT", "RIGHT", "OUTER", "FULL", "CROSS"}:
            continue
        parts.append(kw)
    if z.nested:
        parts.append(NESTING_HINT)
    return ";".join(parts)


def skeleton_edit_distance(a: SqlSkeleton, b: SqlSkeleton) -> int:
    """Token-level Levenshtein distance (unit insert/delete/substitute)."""
    sa, sb = a.token_seq, b.token_seq
    if len(sa) < len(sb):
        sa, sb = sb, sa
    prev = list(range(len(sb) + 1))
    for i, ta in enumerate(sa, start=1):
        cur = [i] + [0] * len(sb)
        for j, tb in enumerate(sb, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (0 if ta == tb else 1),
            )
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class EntityLink:
    """A span of question or SQL text linked to a schema element or literal."""

    surface: str
    kind: str  # table | column | value
    target: tuple[str, str] | str
    span: tuple[int, int]
    text: str = "question"  # which text the span indexes: question | sql
    # For value links: the column the value was compared against, when known.
    value_column: tuple[str, str] | None = None


@dataclass(frozen=True)
class DedomainedPair:
    q_de: str
    z: SqlSkeleton


def _sql_side_links(sql: str, schema: Schema) -> list[EntityLink]:
    """One link per masked token in the SQL: tables, columns, literals."""
    tokens = tokenize(sql)
    _validate(tokens, sql)
    table_names = {t.lower(): t for t in schema.tables}
    column_lookup: dict[str, tuple[str, str]] = {}
    for tab_idx, col, _kind in schema.columns:
        column_lookup.setdefault(col.lower(), (schema.tables[tab_idx], col))

    links: list[EntityLink] = []
    pos = 0
    last_comparison_col: tuple[str, str] | None = None
    prev_tok = ""
    for tok in tokens:
        start = sql.find(tok, pos)
        if start < 0:  # tokenizer normalization mismatch; skip span tracking
            start = pos
        end = start + len(tok)
        pos = end
        up = tok.upper()
        if _is_string_literal(tok):
            literal = tok[1:-1]
            links.append(EntityLink(literal, "value", literal, (start + 1, end - 1),
                                    "sql", last_comparison_col))
        elif _is_number(tok) and prev_tok.upper() != "LIMIT":
            links.append(EntityLink(tok, "value", tok, (start, end),
                                    "sql", last_comparison_col))
        elif _is_identifier(tok) and up not in AGGREGATES:
            bare = tok.split(".")[-1]
            if bare.lower() in table_names and "." not in tok:
                links.append(EntityLink(tok, "table",
                                        (table_names[bare.lower()], ""), (start, end), "sql"))
            elif bare.lower() in column_lookup:
                target = column_lookup[bare.lower()]
                links.append(EntityLink(tok, "column", target, (start, end), "sql"))
                last_comparison_col = target
        prev_tok = tok
    return links


def _question_side_links(question: str, sql_links: list[EntityLink],
                         schema: Schema) -> list[EntityLink]:
    """Case-insensitive longest-match against schema identifiers and SQL
    literals, with naive plural stemming (trailing 's')."""
    vocab: list[tuple[str, str, tuple[str, str] | str]] = []
    for t in schema.tables:
        vocab.append((t, "table", (t, "")))
    for tab_idx, col, _k in schema.columns:
        vocab.append((col, "column", (schema.tables[tab_idx], col)))
        if "_" in col:
            vocab.append((col.replace("_", " "), "column", (schema.tables[tab_idx], col)))
    for link in sql_links:
        if link.kind == "value":
            vocab.append((str(link.target), "value", link.target))

    kind_rank = {"value": 0, "table": 1, "column": 2}
    candidates: list[tuple[int, int, int, str, str, tuple[str, str] | str]] = []
    for surface, kind, target in vocab:
        if not surface:
            continue
        pattern = re.compile(r"(?<![A-Za-z0-9_])" + re.escape(surface) + r"(s)?(?![A-Za-z0-9_])",
                             re.IGNORECASE)
        for m in pattern.finditer(question):
            candidates.append((m.start(), m.end(), kind_rank[kind],
                               question[m.start():m.end()], kind, target))
    # Longest match wins; ties by earlier offset, then kind priority.
    candidates.sort(key=lambda c: (-(c[1] - c[0]), c[0], c[2]))
    chosen: list[EntityLink] = []
    taken: list[tuple[int, int]] = []
    for start, end, _rank, surface, kind, target in candidates:
        if any(start < e and s < end for s, e in taken):
            continue
        taken.append((start, end))
        chosen.append(EntityLink(surface, kind, target, (start, end), "question"))
    chosen.sort(key=lambda l: l.span[0])
    return chosen


def link_entities(question: str, sql: str, schema: Schema) -> list[EntityLink]:
    """Entity links on both sides: SQL links are exhaustive, question links
    are found by string matching against schema identifiers and SQL literals."""
    sql_links = _sql_side_links(sql, schema)
    return sql_links + _question_side_links(question, sql_links, schema)


_PLACEHOLDER_FOR_KIND = {"table": "[TAB]", "column": "[COL]", "value": "[VAL]"}


def dedomain(question: str, sql: str, schema: Schema) -> DedomainedPair:
    """Mask linked entities in the question and skeletonize the SQL."""
    links = [l for l in link_entities(question, sql, schema) if l.text == "question"]
    q_de = question
    for link in sorted(links, key=lambda l: -l.span[0]):
        q_de = q_de[:link.span[0]] + _PLACEHOLDER_FOR_KIND[link.kind] + q_de[link.span[1]:]
    return DedomainedPair(q_de=q_de, z=extract_skeleton(sql, schema))
