#!/usr/bin/env python3
"""Example external scorer for the line protocol.

Reads one JSON request per line from stdin:
    {"sample_id": "...", "retained": [...], "prompt": "...", "category": 5}
and writes one decimal score per line to stdout, in the same order.

This scorer reproduces the builtin evidence-recall score. It needs the
evidence sets, which live on the scorer side of the protocol: pass a JSON
file mapping sample_id -> [evidence token ids].

Usage: evidence_scorer.py evidence.json
"""

import json
import sys


def main() -> int:
    if len(sys.argv) != 2:
        print("usage: evidence_scorer.py <evidence.json>", file=sys.stderr)
        return 2
    with open(sys.argv[1], "r", encoding="utf-8") as f:
        evidence = {k: set(v) for k, v in json.load(f).items()}

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        ev = evidence.get(req["sample_id"], set())
        retained = set(req["retained"])
        score = len(retained & ev) / max(1, len(ev))
        print(f"{score:.17g}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
