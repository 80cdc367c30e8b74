"""Brute-force reference computations shared by tests; independent of clinrel internals."""

from collections import deque


def bfs_distance(heads, i, j):
    """Shortest path length between i and j over the undirected head edges."""
    adj = {k: set() for k in range(len(heads))}
    for k, h in enumerate(heads):
        if h >= 0:
            adj[k].add(h)
            adj[h].add(k)
    seen = {i: 0}
    queue = deque([i])
    while queue:
        u = queue.popleft()
        if u == j:
            return seen[u]
        for v in adj[u]:
            if v not in seen:
                seen[v] = seen[u] + 1
                queue.append(v)
    raise ValueError("disconnected")


def bfs_path(heads, i, j):
    adj = {k: set() for k in range(len(heads))}
    for k, h in enumerate(heads):
        if h >= 0:
            adj[k].add(h)
            adj[h].add(k)
    prev = {i: None}
    queue = deque([i])
    while queue:
        u = queue.popleft()
        for v in sorted(adj[u]):
            if v not in prev:
                prev[v] = u
                queue.append(v)
    path = [j]
    while path[-1] != i:
        path.append(prev[path[-1]])
    return path[::-1]


def chunk_head_bruteforce(heads, start, end):
    """Last token in [start, end) whose head falls outside the span; root if none."""
    outside = [k for k in range(start, end) if not start <= heads[k] < end]
    return outside[-1] if outside else heads.index(-1)


def random_heads(n, rng):
    """Uniform-ish random tree via random parent among previously placed nodes."""
    order = list(rng.permutation(n))
    heads = [-1] * n
    for k in range(1, n):
        heads[order[k]] = int(order[rng.integers(0, k)])
    return heads
