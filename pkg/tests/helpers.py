import numpy as np

from powersample import TabularModel


def uniform_model(vocab, depth):
    rows, frontier = {}, [()]
    for d in range(depth + 1):
        nxt = []
        for p in frontier:
            rows[p] = np.full(vocab, 1 / vocab)
            nxt += [p + (v,) for v in range(vocab)] if d < depth else []
        frontier = nxt
    return TabularModel(vocab, depth, rows)


def deterministic_model(depth, vocab=2, token=1):
    rows = {}
    prefix = ()
    for _ in range(depth + 1):
        row = np.zeros(vocab)
        row[token] = 1.0
        rows[prefix] = row
        prefix = prefix + (token,)
    return TabularModel(vocab, depth, rows)
