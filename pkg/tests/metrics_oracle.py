"""Independent brute-force recomputation of GSR/SAD/SD/SA from exported
per-episode JSONL rows.

Deliberately written with plain Python floats and math (no numpy, no
imports from the package under test) so it can serve as the oracle side
of the metric round-trip check.
"""

import json
import math


def read_rows(path):
    return [json.loads(line) for line in open(path) if line.strip()]


def recompute(rows, strict=False, strict_radius=0.04):
    def ok(r):
        if not r["success"]:
            return False
        if not strict:
            return True
        return r["d_final"] < strict_radius and r["executed_style"] == r["conditioned_style"]

    succ = [r for r in rows if ok(r)]
    n = len(rows)
    gsr = len(succ) / n if n else 0.0
    sad = sum(r["d_final"] for r in succ) / len(succ) if succ else None
    qs = [r["q_final"] for r in succ if r["q_final"]]
    sd = 0.0
    if len(qs) >= 2:
        total = 0.0
        count = 0
        for i in range(len(qs)):
            for j in range(i + 1, len(qs)):
                total += math.sqrt(sum((a - b) ** 2 for a, b in zip(qs[i], qs[j])))
                count += 1
        sd = total / count
    sa = (
        sum(1 for r in succ if r["executed_style"] == r["conditioned_style"]) / len(succ)
        if succ
        else None
    )
    return {"gsr": gsr, "sad": sad, "sd": sd, "sa": sa,
            "n_episodes": n, "n_success": len(succ)}
