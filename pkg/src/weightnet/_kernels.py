# Compiled inner loops for the attachment process.
#
# Attachment weights live in a Fenwick tree indexed by node id so that both
# the degree-proportional draw and the prefix query used for excluding the
# source node are O(log N).
import numpy as np
from numba import njit

# Uniforms consumed per growth step, in order:
# source-is-new, source-is-uniform, source-position,
# target-is-new, target-is-uniform, target-position.
UNIFORMS_PER_STEP = 6


@njit(cache=True)
def fenwick_build(values, tree):
    n = values.shape[0]
    for k in range(tree.shape[0]):
        tree[k] = 0
    for k in range(n):
        tree[k + 1] += values[k]
        parent = k + 1 + ((k + 1) & -(k + 1))
        if parent < tree.shape[0]:
            tree[parent] += tree[k + 1]


@njit(cache=True)
def fenwick_add(tree, i, delta):
    i += 1
    n = tree.shape[0]
    while i < n:
        tree[i] += delta
        i += i & -i


@njit(cache=True)
def fenwick_prefix(tree, i):
    """Sum of entries [0, i)."""
    s = 0
    while i > 0:
        s += tree[i]
        i -= i & -i
    return s


@njit(cache=True)
def fenwick_find(tree, r):
    """Smallest index j with prefix(j + 1) > r."""
    n = tree.shape[0]
    step = 1
    while step * 2 < n:
        step *= 2
    pos = 0
    while step > 0:
        nxt = pos + step
        if nxt < n and tree[nxt] <= r:
            pos = nxt
            r -= tree[nxt]
        step //= 2
    return pos


@njit(cache=True)
def grow_chunk(tree, weight, src, tgt, t, node_count, total, u, a, b):
    """Append up to ``u.shape[0]`` links starting at link index ``t``.

    Stops early when a step could overflow the node arrays. Returns
    ``(node_count, total, steps_done)``.
    """
    cap = weight.shape[0]
    for k in range(u.shape[0]):
        if node_count + 2 > cap:
            return node_count, total, k
        n_prev = node_count

        if u[k, 0] < a:
            i = -1
        elif u[k, 1] < b:
            i = int(u[k, 2] * n_prev)
            if i >= n_prev:
                i = n_prev - 1
        else:
            r = int(u[k, 2] * total)
            if r >= total:
                r = total - 1
            i = fenwick_find(tree, r)

        if u[k, 3] < a or (i >= 0 and n_prev < 2):
            j = -1
        elif i < 0:
            if u[k, 4] < b:
                j = int(u[k, 5] * n_prev)
                if j >= n_prev:
                    j = n_prev - 1
            else:
                r = int(u[k, 5] * total)
                if r >= total:
                    r = total - 1
                j = fenwick_find(tree, r)
        elif u[k, 4] < b:
            j = int(u[k, 5] * (n_prev - 1))
            if j >= n_prev - 1:
                j = n_prev - 2
            if j >= i:
                j += 1
        else:
            wi = weight[i]
            rest = total - wi
            r = int(u[k, 5] * rest)
            if r >= rest:
                r = rest - 1
            if r >= fenwick_prefix(tree, i):
                r += wi
            j = fenwick_find(tree, r)

        if i < 0:
            i = node_count
            node_count += 1
        if j < 0:
            j = node_count
            node_count += 1

        weight[i] += 1
        weight[j] += 1
        fenwick_add(tree, i, 1)
        fenwick_add(tree, j, 1)
        total += 2
        src[t + k] = i
        tgt[t + k] = j
    return node_count, total, u.shape[0]
