"""Writes the small synthetic datasets under data/."""
import os
import random

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")


def write(path, lines):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def blocks(rng, sizes, p_in, p_out):
    owner = [b for b, s in enumerate(sizes) for _ in range(s)]
    edges = []
    for u in range(len(owner)):
        for v in range(u + 1, len(owner)):
            if rng.random() < (p_in if owner[u] == owner[v] else p_out):
                edges.append((u, v))
    return owner, edges


def link_prediction(rng):
    _, edges = blocks(rng, [20, 20, 20, 20], 0.3, 0.01)
    write(os.path.join(ROOT, "toy_lp", "toy_lp.txt"), ["# four-community graph"] + [f"{u} {v}" for u, v in edges])


def node_classification(rng):
    owner, edges = blocks(rng, [20, 20, 20], 0.25, 0.02)
    write(os.path.join(ROOT, "toy_nc", "edges.txt"), [f"{u} {v}" for u, v in edges])
    feats = []
    for b in owner:
        row = [0.0, 0.0, 0.0]
        row[b] = 1.0 if rng.random() < 0.6 else 0.0
        feats.append(",".join(f"{x + rng.gauss(0, 0.3):.4f}" for x in row))
    write(os.path.join(ROOT, "toy_nc", "features.csv"), feats)
    write(os.path.join(ROOT, "toy_nc", "labels.csv"), ["node,label"] + [f"{i},{b}" for i, b in enumerate(owner)])


def knowledge_graph(rng):
    people = [f"person{i}" for i in range(16)]
    cities = [f"city{i}" for i in range(6)]
    countries = [f"country{i}" for i in range(3)]
    triples = set()
    city_of = {p: rng.choice(cities) for p in people}
    country_of = {c: countries[i % 3] for i, c in enumerate(cities)}
    for p in people:
        triples.add((p, "lives_in", city_of[p]))
        triples.add((p, "citizen_of", country_of[city_of[p]]))
        for q in rng.sample(people, 2):
            if q != p:
                triples.add((p, "knows", q))
    for c in cities:
        triples.add((c, "located_in", country_of[c]))
    triples = sorted(triples)
    rng.shuffle(triples)
    n = len(triples)
    split = {"valid": triples[: n // 10], "test": triples[n // 10 : n // 5], "train": triples[n // 5 :]}
    for name, rows in split.items():
        write(os.path.join(ROOT, "toy_kg", f"{name}.txt"), ["\t".join(t) for t in rows])


def graph_classification(rng):
    adjacency, indicator, labels, node_labels = [], [], [], []
    offset = 0
    for gid in range(1, 81):
        n = rng.randint(4, 12)
        label = gid % 2
        if label == 0:
            edges = [(i, (i + 1) % n) for i in range(n)]
        else:
            edges = [(0, i) for i in range(1, n)]
        for u, v in edges:
            adjacency.append(f"{offset + u + 1}, {offset + v + 1}")
            adjacency.append(f"{offset + v + 1}, {offset + u + 1}")
        indicator += [str(gid)] * n
        node_labels += ["1"] * n
        labels.append(str(label))
        offset += n
    d = os.path.join(ROOT, "toy_gc", "TOY_GC")
    write(os.path.join(d, "TOY_GC_A.txt"), adjacency)
    write(os.path.join(d, "TOY_GC_graph_indicator.txt"), indicator)
    write(os.path.join(d, "TOY_GC_graph_labels.txt"), labels)
    write(os.path.join(d, "TOY_GC_node_labels.txt"), node_labels)


if __name__ == "__main__":
    link_prediction(random.Random(1))
    node_classification(random.Random(2))
    knowledge_graph(random.Random(3))
    graph_classification(random.Random(4))
