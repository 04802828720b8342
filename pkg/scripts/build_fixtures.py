"""Builds the committed desk-scale fixture corpus: a 3-task stream with tiny
SQLite databases, Spider-style sample files, mock LLM scripts, and the
content-hash manifest. Re-run only when the corpus itself changes, then
commit the regenerated files."""

import hashlib
import json
import sqlite3
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "fixtures"

SCHEMAS = {
    "concert_hall": {
        "tables": ["singer", "concert"],
        "columns": [
            (0, "singer_id", "number"), (0, "singer_name", "text"),
            (0, "country", "text"), (0, "age", "number"),
            (1, "concert_id", "number"), (1, "concert_name", "text"),
            (1, "venue", "text"), (1, "attendance", "number"),
            (1, "singer_id", "number"),
        ],
        "rows": {
            "singer": [
                (1, "Rosa Verde", "France", 34),
                (2, "Taro Ishi", "Japan", 29),
                (3, "Lena Brook", "France", 41),
                (4, "Omar Diaz", "Spain", 37),
                (5, "Mia Chen", "Japan", 25),
            ],
            "concert": [
                (1, "Spring Gala", "North Hall", 1200, 1),
                (2, "Summer Fest", "Riverside", 800, 2),
                (3, "Autumn Night", "North Hall", 1500, 1),
                (4, "Winter Show", "Dome", 600, 4),
                (5, "Encore", "Riverside", 900, 5),
            ],
        },
    },
    "pet_shop": {
        "tables": ["owner", "pet"],
        "columns": [
            (0, "owner_id", "number"), (0, "owner_name", "text"), (0, "city", "text"),
            (1, "pet_id", "number"), (1, "species", "text"),
            (1, "price", "number"), (1, "owner_id", "number"),
        ],
        "rows": {
            "owner": [
                (1, "Ana Silva", "Lisbon"),
                (2, "Ben Moore", "Dublin"),
                (3, "Cara Smith", "Lisbon"),
                (4, "Dan Novak", "Prague"),
            ],
            "pet": [
                (1, "cat", 120, 1),
                (2, "dog", 250, 1),
                (3, "parrot", 90, 2),
                (4, "cat", 150, 3),
                (5, "dog", 300, 4),
                (6, "ferret", 180, 4),
            ],
        },
    },
    "book_club": {
        "tables": ["author", "book"],
        "columns": [
            (0, "author_id", "number"), (0, "author_name", "text"), (0, "nation", "text"),
            (1, "book_id", "number"), (1, "title", "text"),
            (1, "pages", "number"), (1, "author_id", "number"),
        ],
        "rows": {
            "author": [
                (1, "Ivy Hale", "Kenya"),
                (2, "Jon Frost", "Norway"),
                (3, "Kim Soto", "Chile"),
            ],
            "book": [
                (1, "Red Harbor", 320, 1),
                (2, "Quiet Hills", 210, 2),
                (3, "Glass River", 450, 2),
                (4, "Stone Path", 180, 3),
                (5, "Last Orchard", 390, 1),
            ],
        },
    },
}

# Task 1: JOIN / GROUP BY / nested heavy. Task 2: WHERE / ORDER BY. Task 3:
# plain SELECT + WHERE only, so the cross-task bias at task 3 is non-empty.
TASKS = {
    "task1": {
        "db": "concert_hall",
        "train": [
            ("How many singers are from France?",
             "SELECT count(*) FROM singer WHERE country = 'France'"),
            ("List the name of every singer.",
             "SELECT singer_name FROM singer"),
            ("What is the average age of singers from Japan?",
             "SELECT avg(age) FROM singer WHERE country = 'Japan'"),
            ("How many concerts were held in each venue?",
             "SELECT venue , count(*) FROM concert GROUP BY venue"),
            ("Show each country and the number of singers from it.",
             "SELECT country , count(*) FROM singer GROUP BY country"),
            ("List concert names with the names of their singers.",
             "SELECT concert.concert_name , singer.singer_name FROM concert JOIN singer ON concert.singer_id = singer.singer_id"),
            ("Show names of singers who have a concert at the venue North Hall.",
             "SELECT singer.singer_name FROM singer JOIN concert ON singer.singer_id = concert.singer_id WHERE concert.venue = 'North Hall'"),
            ("Which singers are older than 30?",
             "SELECT singer_name FROM singer WHERE age > 30"),
            ("List names of singers who have at least one concert.",
             "SELECT singer_name FROM singer WHERE singer_id IN (SELECT singer_id FROM concert)"),
            ("Show venues with total attendance above 1000.",
             "SELECT venue FROM concert GROUP BY venue HAVING sum(attendance) > 1000"),
            ("List singer names ordered by age.",
             "SELECT singer_name FROM singer ORDER BY age"),
            ("Which countries have more than one singer?",
             "SELECT country FROM singer GROUP BY country HAVING count(*) > 1"),
        ],
        "dev": [
            ("How many singers are from Japan?",
             "SELECT count(*) FROM singer WHERE country = 'Japan'"),
            ("Show each venue and its number of concerts.",
             "SELECT venue , count(*) FROM concert GROUP BY venue"),
        ],
        "test": [
            ("How many singers are from Spain?",
             "SELECT count(*) FROM singer WHERE country = 'Spain'"),
            ("List names of singers with a concert in the venue Dome.",
             "SELECT singer.singer_name FROM singer JOIN concert ON singer.singer_id = concert.singer_id WHERE concert.venue = 'Dome'"),
            ("Show countries and how many singers come from each.",
             "SELECT country , count(*) FROM singer GROUP BY country"),
            ("List singers who appear in the concert table.",
             "SELECT singer_name FROM singer WHERE singer_id IN (SELECT singer_id FROM concert)"),
        ],
    },
    "task2": {
        "db": "pet_shop",
        "train": [
            ("How many pets cost more than 100?",
             "SELECT count(*) FROM pet WHERE price > 100"),
            ("List every species in the shop.",
             "SELECT DISTINCT species FROM pet"),
            ("Show pet species ordered by price.",
             "SELECT species FROM pet ORDER BY price"),
            ("Which owners live in Lisbon?",
             "SELECT owner_name FROM owner WHERE city = 'Lisbon'"),
            ("What is the highest pet price?",
             "SELECT max(price) FROM pet"),
            ("Show the species of pets cheaper than 200.",
             "SELECT species FROM pet WHERE price < 200"),
            ("List owner names with the species of their pets.",
             "SELECT owner.owner_name , pet.species FROM owner JOIN pet ON owner.owner_id = pet.owner_id"),
            ("Show the three cheapest pets.",
             "SELECT species FROM pet ORDER BY price LIMIT 3"),
            ("How many owners are there in each city?",
             "SELECT city , count(*) FROM owner GROUP BY city"),
            ("List pet species ordered by price descending.",
             "SELECT species FROM pet ORDER BY price DESC"),
            ("Which pets cost between 100 and 200?",
             "SELECT species FROM pet WHERE price >= 100 AND price <= 200"),
            ("How many pets does the shop have?",
             "SELECT count(*) FROM pet"),
        ],
        "dev": [
            ("Which owners live in Prague?",
             "SELECT owner_name FROM owner WHERE city = 'Prague'"),
            ("What is the lowest pet price?",
             "SELECT min(price) FROM pet"),
        ],
        "test": [
            ("How many pets cost more than 200?",
             "SELECT count(*) FROM pet WHERE price > 200"),
            ("Show species ordered by price.",
             "SELECT species FROM pet ORDER BY price"),
            ("Which owners live in Dublin?",
             "SELECT owner_name FROM owner WHERE city = 'Dublin'"),
            ("List owner names with their pet species.",
             "SELECT owner.owner_name , pet.species FROM owner JOIN pet ON owner.owner_id = pet.owner_id"),
        ],
    },
    "task3": {
        "db": "book_club",
        "train": [
            ("List every book title.",
             "SELECT title FROM book"),
            ("Which books have more than 300 pages?",
             "SELECT title FROM book WHERE pages > 300"),
            ("List the names of all authors.",
             "SELECT author_name FROM author"),
            ("Which authors are from Norway?",
             "SELECT author_name FROM author WHERE nation = 'Norway'"),
            ("Show titles of books shorter than 250 pages.",
             "SELECT title FROM book WHERE pages < 250"),
            ("What nations are the authors from?",
             "SELECT DISTINCT nation FROM author"),
            ("Show the title of the book with id 3.",
             "SELECT title FROM book WHERE book_id = 3"),
            ("Which authors are from Chile?",
             "SELECT author_name FROM author WHERE nation = 'Chile'"),
            ("List titles of books with exactly 180 pages.",
             "SELECT title FROM book WHERE pages = 180"),
            ("Show every book title and its pages.",
             "SELECT title , pages FROM book"),
        ],
        "dev": [
            ("Which books have fewer than 200 pages?",
             "SELECT title FROM book WHERE pages < 200"),
        ],
        "test": [
            ("Which books have more than 400 pages?",
             "SELECT title FROM book WHERE pages > 400"),
            ("Which authors are from Kenya?",
             "SELECT author_name FROM author WHERE nation = 'Kenya'"),
            ("List all author names.",
             "SELECT author_name FROM author"),
            ("Show titles of books with 320 pages.",
             "SELECT title FROM book WHERE pages = 320"),
        ],
    },
}

E2E_SCRIPT = [
    {"match": {"kind": "generate", "ordinal": "*"},
     "response": "Question: How many rows are in {first_table}?\nSQL: SELECT count(*) FROM {first_table}"},
    {"match": {"kind": "generate_nested", "ordinal": "*"},
     "response": "Question: How many rows of {first_table} are listed in {first_table}?\nSQL: SELECT count(*) FROM {first_table} WHERE rowid IN (SELECT rowid FROM {first_table})"},
    {"match": {"kind": "verify", "ordinal": "*"}, "response": "Correct"},
    {"match": {"kind": "revise", "ordinal": "*"}, "response": "SQL: {sql}"},
    {"match": {"kind": "rephrase", "ordinal": "*"}, "response": "Question: {question}"},
]


def build_db(db_id: str, spec: dict) -> None:
    db_dir = ROOT / "db" / db_id
    db_dir.mkdir(parents=True, exist_ok=True)
    path = db_dir / f"{db_id}.sqlite"
    if path.exists():
        path.unlink()
    con = sqlite3.connect(path)
    type_map = {"number": "INTEGER", "text": "TEXT", "time": "TEXT",
                "boolean": "INTEGER", "other": "TEXT"}
    for tab_idx, table in enumerate(spec["tables"]):
        cols = [(name, type_map[kind]) for t, name, kind in spec["columns"] if t == tab_idx]
        ddl = ", ".join(f'"{n}" {t}' for n, t in cols)
        con.execute(f'CREATE TABLE "{table}" ({ddl})')
        for row in spec["rows"][table]:
            marks = ", ".join("?" for _ in row)
            con.execute(f'INSERT INTO "{table}" VALUES ({marks})', row)
    con.commit()
    con.close()


def main() -> None:
    ROOT.mkdir(parents=True, exist_ok=True)
    tables_json = []
    for db_id, spec in SCHEMAS.items():
        build_db(db_id, spec)
        tables_json.append({
            "db_id": db_id,
            "table_names_original": spec["tables"],
            "column_names_original": [[t, n] for t, n, _k in spec["columns"]],
            "column_types": [k for _t, _n, k in spec["columns"]],
        })
    (ROOT / "tables.json").write_text(json.dumps(tables_json, indent=1, sort_keys=True))

    task_entries = []
    for task_id, spec in TASKS.items():
        for split in ("train", "dev", "test"):
            samples = [{"db_id": spec["db"], "query": sql, "question": q}
                       for q, sql in spec[split]]
            (ROOT / f"{task_id}_{split}.json").write_text(
                json.dumps(samples, indent=1, sort_keys=True))
        task_entries.append({
            "task_id": task_id,
            "train_path": f"{task_id}_train.json",
            "dev_path": f"{task_id}_dev.json",
            "test_path": f"{task_id}_test.json",
        })
    (ROOT / "stream.json").write_text(json.dumps({
        "order_label": "custom",
        "tables": "tables.json",
        "db_dir": "db",
        "tasks": task_entries,
    }, indent=1, sort_keys=True))

    scripts_dir = ROOT / "mock_scripts"
    scripts_dir.mkdir(exist_ok=True)
    (scripts_dir / "e2e.jsonl").write_text(
        "".join(json.dumps(e, sort_keys=True) + "\n" for e in E2E_SCRIPT))

    manifest = {}
    for path in sorted(ROOT.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            rel = str(path.relative_to(ROOT))
            manifest[rel] = hashlib.sha256(path.read_bytes()).hexdigest()
    (ROOT / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    print(f"wrote {len(manifest)} fixture files under {ROOT}")


if __name__ == "__main__":
    main()
