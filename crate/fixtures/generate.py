"""Regenerates the deterministic fixtures in this directory.

Run from the repository root: python3 fixtures/generate.py
"""
import csv
import random
from pathlib import Path

from PIL import Image

ROOT = Path(__file__).resolve().parent
LETTERS = "ABCDE"


def write_csv(name, header, rows):
    with open(ROOT / name, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def exams():
    rng = random.Random(2024)
    items = []
    for exam in (1, 2, 3):
        for i in range(50):
            kind = "knowledge" if i < 39 else "scenario"
            items.append((f"e{exam}-{i + 1:02d}", exam, kind, LETTERS[rng.randrange(5)]))
    write_csv("scq_items.csv", ["item_id", "exam_id", "kind", "answer_key"], items)

    def wrong(key):
        return LETTERS[(LETTERS.index(key) + 1) % 5]

    rows = []
    # System: 120 of 150 correct overall (40 per exam) with 25 of the 33 scenario items.
    scenario_correct = {1: 9, 2: 8, 3: 8}
    for exam in (1, 2, 3):
        ex = [it for it in items if it[1] == exam]
        knowledge = [it for it in ex if it[2] == "knowledge"]
        scenario = [it for it in ex if it[2] == "scenario"]
        k_correct = 40 - scenario_correct[exam]
        for j, it in enumerate(knowledge):
            rows.append(("system", "system", it[0], it[3] if j < k_correct else wrong(it[3])))
        for j, it in enumerate(scenario):
            rows.append(("system", "system", it[0], it[3] if j < scenario_correct[exam] else wrong(it[3])))
    for group, count, p in (("general_ecp", 5, 0.67), ("specialist", 4, 0.85)):
        for r in range(count):
            rid = f"{group}-{r + 1}"
            for it in items:
                if rng.random() < 0.02:
                    rows.append((rid, group, it[0], ""))
                else:
                    rows.append((rid, group, it[0], it[3] if rng.random() < p else wrong(it[3])))
    write_csv("scq_responses.csv", ["respondent_id", "group", "item_id", "choice"], rows)


def ratings():
    rng = random.Random(85)
    criteria = ["accuracy", "utility", "relevance", "safety", "harmlessness"]
    top_share = {"system": 0.85, "gpt4": 0.6, "ecp": 0.85}
    rows = []
    for source in ("system", "gpt4", "ecp"):
        for criterion in criteria:
            for q in range(1, 86):
                if source == "system" and criterion == "accuracy":
                    final = 3 if q <= 58 else 2
                else:
                    final = 3 if rng.random() < top_share[source] else rng.choice([1, 2, 2])
                if rng.random() < 0.15:
                    other = rng.choice([v for v in (1, 2, 3) if v != final])
                    pair = (final, other) if rng.random() < 0.5 else (other, final)
                    rows.append((q, source, criterion, "rater_a", pair[0]))
                    rows.append((q, source, criterion, "rater_b", pair[1]))
                    rows.append((q, source, criterion, "rater_c", final))
                else:
                    rows.append((q, source, criterion, "rater_a", final))
                    rows.append((q, source, criterion, "rater_b", final))
    write_csv("ratings.csv", ["question_id", "source", "criterion", "rater_id", "rating"], rows)


def questionnaires():
    def sheet(rng, pid, arm, lift):
        out = []
        for i in range(1, 11):
            out.append((pid, arm, "cmissr", i, min(5, max(1, round(rng.gauss(3.4 + lift, 0.8))))))
        for i in range(1, 8):
            out.append((pid, arm, "perspective", i, min(5, max(1, round(rng.gauss(3.5 + lift, 0.8))))))
        for i in range(1, 11):
            out.append((pid, arm, "dcs", i, min(4, max(0, round(rng.gauss(1.6 - lift, 0.8))))))
        return out

    header = ["participant_id", "arm", "instrument", "item_index", "value"]
    rng = random.Random(64)
    rows = []
    for n in range(32):
        rows += sheet(rng, f"a{n + 1:02d}", "agent", 0.4)
        rows += sheet(rng, f"l{n + 1:02d}", "leaflet", 0.0)
    write_csv("questionnaires.csv", header, rows)

    # Both arms carry the same answer sheets, so every arm comparison is null.
    rng = random.Random(7)
    rows = []
    for n in range(10):
        base = sheet(random.Random(100 + n), "x", "agent", 0.0)
        for arm, prefix in (("agent", "a"), ("leaflet", "l")):
            rows += [(f"{prefix}{n + 1:02d}", arm, ins, i, v) for (_, _, ins, i, v) in base]
    write_csv("questionnaires_identical.csv", header, rows)


def split_labels():
    rng = random.Random(500)
    rows = []
    for p in range(500):
        pid = f"p{p + 1:03d}"
        primary = p % 5
        n_images = rng.choice([1, 2, 2, 3, 4])
        for i in range(n_images):
            label = primary
            if i > 0 and rng.random() < 0.15:
                label = max(0, min(4, primary + rng.choice([-1, 1])))
            rows.append((f"{pid}_{i + 1}.png", pid, f"C{label}"))
    write_csv("split_labels.csv", ["image_ref", "participant_id", "label"], rows)


def grading():
    rng = random.Random(5)
    (ROOT / "images").mkdir(exist_ok=True)
    rows = []
    for i in range(10):
        label = i % 5
        name = f"fundus_{i + 1:02d}.png"
        img = Image.new("RGB", (16, 16), (120 + 10 * label, 40 + 5 * i, 30))
        img.save(ROOT / "images" / name)
        probs = [rng.random() * 0.1 for _ in range(5)]
        probs[label] = 0.0
        probs[label] = 1.0 - sum(probs)
        rows.append([name, f"g{i // 2 + 1:02d}", f"C{label}"] + [f"{p:.6f}" for p in probs])
    # Rows sum to 1 only after rounding; keep the last column as the remainder.
    for r in rows:
        head = [float(x) for x in r[3:7]]
        r[7] = f"{1.0 - sum(head):.6f}"
    write_csv(
        "grading_sidecar.csv",
        ["image_ref", "participant_id", "label", "p0", "p1", "p2", "p3", "p4"],
        rows,
    )


if __name__ == "__main__":
    exams()
    ratings()
    questionnaires()
    split_labels()
    grading()
