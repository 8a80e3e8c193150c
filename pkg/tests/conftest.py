import json
import sys
from pathlib import Path

import pytest

HERE = Path(__file__).parent
MOCK_TRAINER = HERE / "mock_trainer.py"

# published mean generation lengths: (dataset, original, compressed)
LENGTHS_7B = [
    ("asdiv", 769, 147),
    ("gsm8k", 554, 253),
    ("math500", 2861, 1556),
    ("aime", 6820, 6368),
    ("amc", 4510, 3386),
    ("minerva", 3347, 1451),
]
LENGTHS_14B = [
    ("asdiv", 476, 158),
    ("gsm8k", 679, 240),
    ("math500", 2951, 2092),
    ("aime", 6701, 6403),
    ("amc", 4584, 3839),
    ("minerva", 3270, 2177),
]


def write_jsonl(path, rows):
    path = Path(path)
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def pool_rows(system, n, start=0, correct=None, source="gsm8k"):
    rows = []
    for i in range(start, start + n):
        rows.append(
            {
                "id": f"{system}-{i}",
                "question": f"question {i}",
                "response": " ".join(["tok"] * (i % 5 + 1)),
                "system": system,
                "source": source,
                "correct": True if correct is None else correct[i - start],
            }
        )
    return rows


def mock_command(script_path):
    return [sys.executable, str(MOCK_TRAINER), str(script_path)]


@pytest.fixture
def pool_files(tmp_path):
    s1 = write_jsonl(tmp_path / "sys1.jsonl", pool_rows("system1", 6))
    s2 = write_jsonl(tmp_path / "sys2.jsonl", pool_rows("system2", 5, source="s1-prompts"))
    dev = write_jsonl(tmp_path / "dev.jsonl", [{"id": "d0", "question": "1+1?", "answer": "2"}])
    return s1, s2, dev


@pytest.fixture
def published_results(tmp_path):
    """Results files whose per-dataset mean lengths mirror the 7B row."""
    orig, cur = [], []
    for name, o, c in LENGTHS_7B:
        orig.append({"question_id": "q0", "sample_index": 0, "output_text": "x", "token_count": o, "correct": True, "dataset": name})
        cur.append({"question_id": "q0", "sample_index": 0, "output_text": "x", "token_count": c, "correct": True, "dataset": name})
    return write_jsonl(tmp_path / "orig.jsonl", orig), write_jsonl(tmp_path / "cur.jsonl", cur)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance")
    for n in sorted(mod.VERDICTS):
        terminalreporter.write_line(mod.VERDICTS[n])
