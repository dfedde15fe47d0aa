"""Recompute tests/golden/milp_oracle.json by exhaustive enumeration (slow)."""

import json
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

from oracles import MILP_SUITE_SEED, enumerate_milp, milp_suite  # noqa: E402

if __name__ == "__main__":
    rows = []
    for k, p in enumerate(milp_suite()):
        ref = enumerate_milp(p)
        rows.append({"index": k, "binaries": len(p.binaries), "variables": p.n_vars,
                     "rows": p.n_cons, "objective": ref})
    doc = {"seed": MILP_SUITE_SEED, "count": len(rows), "instances": rows}
    (HERE / "milp_oracle.json").write_text(json.dumps(doc, indent=1) + "\n")
    print(f"{len(rows)} instances, {sum(r['objective'] is None for r in rows)} infeasible")
