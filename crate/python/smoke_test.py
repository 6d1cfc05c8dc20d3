"""Smoke test for the vgraph extension module.

Build and run from the repository root:

    cargo build --release -p vgraph-py --features extension-module
    cp target/release/libvgraph.so python/vgraph.so
    python3 python/smoke_test.py
"""

import math
import os
import tempfile

import vgraph


def main():
    g, truth = vgraph.generate_sbm(120, 3, 0.2, 0.01, seed=1)
    assert g.node_count == 120 and g.edge_count > 0
    assert sorted(len(c) for c in truth) == [40, 40, 40]

    model = vgraph.train(g, 3, dim=16, iters=600, seed=0)
    assert model.communities == 3 and model.dim == 16
    pred = model.assign(g)
    score = vgraph.nmi(g.node_count, pred, truth)
    print(f"flat: nmi {score:.4f}, modularity {vgraph.modularity(g, pred):.4f}")
    assert score > 0.9

    members = model.memberships(g)
    for m in members:
        if m is not None:
            assert abs(sum(m) - 1.0) < 1e-9

    overlapping = model.assign(g, "overlapping")
    f1 = vgraph.overlapping_f1(g.node_count, overlapping, truth)
    jac = vgraph.overlapping_jaccard(g.node_count, overlapping, truth)
    assert 0.0 <= jac <= f1 <= 1.0

    history = model.history()
    assert history and all(math.isfinite(row[4]) for row in history)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.ckpt")
        model.save(path)
        again = vgraph.Model.load(path)
        assert again.assign(g) == pred
        assert again.embeddings("phi") == model.embeddings("phi")

    g2, levels = vgraph.generate_nested_sbm(60, [2, 2], [0.01, 0.1, 0.3], seed=2)
    tree_model = vgraph.train(g2, dim=8, iters=50, tree=[2, 2])
    parts = tree_model.assign(g2)
    assert len(parts) == len(levels) == 2
    assert [len(p) for p in parts] == [2, 4]

    try:
        vgraph.train(g, 0, iters=1)
    except ValueError as err:
        print(f"rejected K=0: {err}")
    else:
        raise AssertionError("K=0 must be rejected")

    print("smoke test passed")


if __name__ == "__main__":
    main()
