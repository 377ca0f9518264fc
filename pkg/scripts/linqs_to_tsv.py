#!/usr/bin/env python
"""Convert a LINQS-style citation dataset (.content + .cites) to the edge /
sparse-feature / label files read by ``hogs``.

Nodes are numbered in .content order; classes in sorted name order.

    python scripts/linqs_to_tsv.py cora.content cora.cites data/cora
"""

import argparse
import json
from pathlib import Path


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("content")
    ap.add_argument("cites")
    ap.add_argument("out")
    args = ap.parse_args()

    rows = [line.split() for line in open(args.content) if line.strip()]
    ids = {r[0]: i for i, r in enumerate(rows)}
    classes = {c: k for k, c in enumerate(sorted({r[-1] for r in rows}))}

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "labels.tsv", "w") as fh:
        for i, r in enumerate(rows):
            fh.write(f"{i}\t{classes[r[-1]]}\n")
    with open(out / "features.tsv", "w") as fh:
        for i, r in enumerate(rows):
            for k, v in enumerate(r[1:-1]):
                if float(v) != 0.0:
                    fh.write(f"{i}\t{k}\t{v}\n")

    edges = set()
    skipped = 0
    for line in open(args.cites):
        if not line.strip():
            continue
        a, b = line.split()
        if a not in ids or b not in ids:
            skipped += 1
            continue
        i, j = sorted((ids[a], ids[b]))
        if i != j:
            edges.add((i, j))
    with open(out / "edges.tsv", "w") as fh:
        for i, j in sorted(edges):
            fh.write(f"{i}\t{j}\n")
    values = {float(v) for r in rows for v in r[1:-1]}
    meta = {"n": len(rows), "d": len(rows[0]) - 2, "c": len(classes),
            "feature_lo": min(values), "feature_hi": max(values), "edges": len(edges),
            "classes": sorted(classes, key=classes.get)}
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"{len(rows)} nodes, {len(edges)} edges, {len(rows[0]) - 2} features, "
          f"{len(classes)} classes ({skipped} links to unknown ids skipped)")


if __name__ == "__main__":
    main()
