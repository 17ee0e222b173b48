"""Regenerate the miniature two-class dataset used by the end-to-end smoke run.

Three channels of varying length (24..40). Channel 0 holds a bump for
"normal" and a dip for "abnormal" at a random position, channel 1 is noise,
channel 2 is a slow drift whose sign follows the class.

    python3 data/make_mini.py
"""

import json
import math
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent


def instance(rng, idx, label):
    n = rng.randint(24, 40)
    sign = 1.0 if label == "normal" else -1.0
    at = rng.randint(0, n - 8)
    bump = [sign * math.sin(math.pi * (i + 0.5) / 8) for i in range(8)]
    ch0 = [rng.gauss(0.0, 0.15) for _ in range(n)]
    for i, b in enumerate(bump):
        ch0[at + i] += b
    ch1 = [rng.gauss(0.0, 0.5) for _ in range(n)]
    ch2 = [0.5 * sign * i / n + rng.gauss(0.0, 0.1) for i in range(n)]
    return {
        "id": f"mini-{idx:02d}",
        "label": label,
        "channels": [[round(x, 4) for x in ch] for ch in (ch0, ch1, ch2)],
    }


def write(path, rows):
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, separators=(",", ":")) + "\n")


def main():
    rng = random.Random(20240611)
    labels = ["normal", "abnormal"]
    train = [instance(rng, i, labels[i % 2]) for i in range(20)]
    test = [instance(rng, 20 + i, labels[i % 2]) for i in range(10)]
    write(HERE / "mini_train.jsonl", train)
    write(HERE / "mini_test.jsonl", test)


if __name__ == "__main__":
    main()
