#!/usr/bin/env python3
"""Writes the payload inputs under tests/fixtures/inputs.

The inputs are deterministic.  Golden vectors are produced from them by the
C++ signer:

    siot sign tests/fixtures/inputs/*.json --golden tests/fixtures/golden_vectors.json
"""

import argparse
import json
import random
from pathlib import Path

START = 1767225600
PATIENT = "2245bd5fbb686f6822eb92502318fa4e"


def schedule(rng, n):
    minutes = sorted(rng.sample(range(1440), n))
    if n and rng.random() < 0.5:
        minutes[0] = 0
    return [{"start_minute": m, "rate": rng.choice([0, 1, 250, 800, 1200, 4294967295, rng.randrange(1, 20000)])} for m in minutes]


def command(rng, i, kind="set_schedule", n=None):
    if n is None:
        n = rng.randrange(1, 43)
    return {
        "type": "preset_command",
        "command_id": f"{i:08x}" + "".join(rng.choice("0123456789abcdef") for _ in range(24)),
        "patient_id": PATIENT if i % 3 else "".join(rng.choice("0123456789abcdef") for _ in range(32)),
        "issued_at": START + rng.randrange(0, 86400 * 30),
        "kind": kind,
        "schedule": schedule(rng, n) if kind == "set_schedule" else [],
    }


def record(rng, i, name, info):
    start = START + 3600 * i
    readings = [{"timestamp": start + 300 * k, "level": rng.randrange(10, 1001)} for k in range(12)]
    return {
        "type": "health_record",
        "profile": {"patient_id": PATIENT, "name": name, "date_of_birth": "1984-02-29", "medical_info": info},
        "readings": readings,
        "doses": [{"timestamp": start, "amount": rng.randrange(1, 5000), "origin": "scheduled"}],
        "period_start": start,
        "period_end": start + 3600,
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests/fixtures/inputs"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20260101)

    payloads = {}
    edge = {0: ("set_schedule", 1), 1: ("set_schedule", 42), 2: ("set_schedule", 0), 3: ("power_off", None), 4: ("power_on", None)}
    for i in range(50):
        kind, n = edge.get(i, ("set_schedule", None))
        payloads[f"command_{i:02d}"] = command(rng, i, kind, n)
    names = [("Ada", "T1D"), ("Zoë Ünal", "type 1, pump since 2019"), ("李雷", "胰岛素泵"), ("", ""), ("O'Brien \"JJ\"", "line\nbreak")]
    for i, (name, info) in enumerate(names):
        payloads[f"record_{i:02d}"] = record(rng, i, name, info)

    for stale in out.glob("*.json"):
        stale.unlink()
    for name, body in payloads.items():
        (out / f"{name}.json").write_text(json.dumps(body, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"{len(payloads)} inputs written to {out}")


if __name__ == "__main__":
    main()
