#!/usr/bin/env python3
"""Convert public citation and protein-interaction datasets to geniepath text files.

    convert_public.py pubmed DIR OUT   # ind.pubmed.{x,y,tx,ty,allx,ally,graph,test.index}
    convert_public.py ppi DIR OUT      # ppi-G.json, ppi-id_map.json, ppi-class_map.json, ppi-feats.npy

OUT receives edges.tsv, features.txt, labels.tsv, splits.tsv and config.json.
Self-loops and repeated edges in the sources are dropped; every edge is
written once with the smaller id first.
"""

import argparse
import json
import pickle
import sys
from pathlib import Path

import numpy as np


def write_dataset(out, edges, features, labels, splits, model, num_classes):
    out.mkdir(parents=True, exist_ok=True)
    edges = sorted({(min(a, b), max(a, b)) for a, b in edges if a != b})
    with open(out / "edges.tsv", "w") as f:
        f.writelines(f"{a}\t{b}\n" for a, b in edges)
    with open(out / "features.txt", "w") as f:
        f.write(f"{features.shape[0]} {features.shape[1]}\n")
        for row in features:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")
    with open(out / "labels.tsv", "w") as f:
        for node, label in labels:
            value = ",".join(str(int(b)) for b in label) if isinstance(label, list) else str(label)
            f.write(f"{node}\t{value}\n")
    with open(out / "splits.tsv", "w") as f:
        f.writelines(f"{node}\t{name}\n" for node, name in sorted(splits.items()))
    config = {
        "model": model,
        "data": {
            "edges": "edges.tsv",
            "features": "features.txt",
            "labels": "labels.tsv",
            "splits": "splits.tsv",
            "undirected": True,
            "num_classes": num_classes,
        },
        "output_dir": "out",
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"{features.shape[0]} nodes, {len(edges)} edges, {len(splits)} split nodes -> {out}")


def load_pickle(path):
    with open(path, "rb") as f:
        return pickle.load(f, encoding="latin1")


def pubmed(src, out):
    """Standard public split: 60 training nodes, the next 500 for validation,
    the 1000 listed test nodes for testing."""
    parts = {k: load_pickle(src / f"ind.pubmed.{k}") for k in ["x", "y", "tx", "ty", "allx", "ally", "graph"]}
    test_index = [int(line) for line in (src / "ind.pubmed.test.index").read_text().split()]
    dense = lambda m: np.asarray(m.todense()) if hasattr(m, "todense") else np.asarray(m)

    features = np.vstack([dense(parts["allx"]), dense(parts["tx"])])
    onehot = np.vstack([parts["ally"], parts["ty"]])
    # Test rows arrive in sorted order; put them back at their listed ids.
    order = sorted(test_index)
    features[test_index, :] = features[order, :]
    onehot[test_index, :] = onehot[order, :]

    n = features.shape[0]
    edges = [(a, b) for a, nbrs in parts["graph"].items() for b in nbrs if a < n and b < n]
    num_train = len(parts["y"])
    splits = {i: "train" for i in range(num_train)}
    splits.update({i: "val" for i in range(num_train, num_train + 500)})
    splits.update({i: "test" for i in test_index})
    labels = [(i, int(onehot[i].argmax())) for i in range(n) if onehot[i].sum() > 0]
    labeled = {i for i, _ in labels}
    splits = {i: s for i, s in splits.items() if i in labeled}
    model = {"variant": "geniepath", "depth": 2, "hidden": 16, "task": "multi-class"}
    write_dataset(out, edges, features, labels, splits, model, onehot.shape[1])


def ppi(src, out):
    """Inductive split from the per-node val/test flags; every graph lies
    entirely in one split."""
    graph = json.loads((src / "ppi-G.json").read_text())
    id_map = {str(k): int(v) for k, v in json.loads((src / "ppi-id_map.json").read_text()).items()}
    class_map = json.loads((src / "ppi-class_map.json").read_text())
    features = np.load(src / "ppi-feats.npy")

    nodes = graph["nodes"]
    position = [id_map[str(node["id"])] for node in nodes]
    by_id = {str(node["id"]): id_map[str(node["id"])] for node in nodes}

    def endpoint(x):
        # node-link files name endpoints by id; older exports use list positions.
        return by_id[str(x)] if str(x) in by_id else position[x]

    edges = [(endpoint(link["source"]), endpoint(link["target"])) for link in graph["links"]]
    splits = {}
    for node in nodes:
        i = id_map[str(node["id"])]
        splits[i] = "test" if node.get("test") else "val" if node.get("val") else "train"
    labels = [(id_map[k], [int(b) for b in v]) for k, v in class_map.items()]
    labels.sort()
    num_classes = len(labels[0][1])
    model = {"variant": "geniepath-lazy", "depth": 3, "hidden": 256, "task": "multi-label"}
    write_dataset(out, edges, features, labels, splits, model, num_classes)


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("dataset", choices=["pubmed", "ppi"])
    parser.add_argument("source", type=Path, help="directory with the downloaded files")
    parser.add_argument("out", type=Path, help="output directory")
    args = parser.parse_args()
    {"pubmed": pubmed, "ppi": ppi}[args.dataset](args.source, args.out)


if __name__ == "__main__":
    sys.exit(main())
