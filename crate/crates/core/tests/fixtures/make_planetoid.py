"""Writes a tiny Planetoid-format dataset ("tiny") in the raw layout."""
import collections
import pickle
import sys

import numpy as np
import scipy.sparse as sp

out = sys.argv[1] if len(sys.argv) > 1 else "planetoid"
protocol = int(sys.argv[2]) if len(sys.argv) > 2 else 2

# 10 nodes, 3 classes, 4 features. Nodes 0-3 are allx-only (0-1 labelled
# training nodes come first), 4-5 unlabelled, test rows are 6..9 but stored
# shuffled in test.index with node 8 missing (a gap, as in CiteSeer).
feats = np.array(
    [[1, 0, 0, 1], [0, 1, 0, 0], [0, 0, 1, 1], [1, 1, 0, 0], [0, 0, 0, 1],
     [1, 0, 1, 0], [0, 1, 1, 0], [1, 0, 0, 0], [0, 0, 0, 0], [0, 1, 0, 1]],
    dtype=np.float32,
)
labels = np.eye(3)[[0, 1, 2, 0, 1, 2, 0, 1, 2, 1]]
train = [0, 1, 2]
allx_rows = [0, 1, 2, 3, 4, 5]
test_index = [9, 6, 7]

dump = lambda name, obj: pickle.dump(
    obj, open(f"{out}/ind.tiny.{name}", "wb"), protocol=protocol
)
dump("x", sp.csr_matrix(feats[train]))
dump("y", labels[train])
dump("allx", sp.csr_matrix(feats[allx_rows]))
dump("ally", labels[allx_rows])
dump("tx", sp.csr_matrix(feats[test_index]))
dump("ty", labels[test_index])
graph = collections.defaultdict(list)
for u, v in [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 9), (9, 6), (6, 7), (7, 0), (1, 1)]:
    graph[u].append(v)
    graph[v].append(u)
dump("graph", graph)
with open(f"{out}/ind.tiny.test.index", "w") as f:
    f.write("\n".join(map(str, test_index)) + "\n")
