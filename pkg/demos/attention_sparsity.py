"""How sparse is the encoder's attention pattern as instances grow?

Run: python3 demos/attention_sparsity.py
"""

from tspd.encoder import EncoderConfig, build_expander_graph, knn_k
from tspd.instances import generate_instances

cfg = EncoderConfig()
print(" N   k  edges/row  density")
for n in (10, 20, 50, 100, 200):
    inst = generate_instances(n, 1, seed=n)[0]
    pts = inst.points()
    g = build_expander_graph(pts, inst.depot, cfg, pts)  # coordinates stand in for embeddings
    rows = g.adjacency[:n].sum(1)
    print(f"{n:3d} {knn_k(n):3d} {rows.mean():9.1f} {g.adjacency.mean():8.3f}")
