"""Independent reference implementations used only by the tests.

These deliberately share no code with the package: a cyclic Jacobi
eigensolver, a DBSCAN built from a transitive closure of the core-point
neighbourhood graph, and central finite differences.
"""

import numpy as np


def jacobi_eigh(a, tol=1e-14, max_sweeps=100):
    """All eigenpairs of a symmetric matrix by cyclic Jacobi rotations, descending order."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(a**2) - np.sum(np.diag(a) ** 2), 0.0))
        if off < tol * max(1.0, np.linalg.norm(a)):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                if theta == 0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta  # theta**2 would overflow
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta**2 + 1.0))
                c = 1.0 / np.sqrt(t**2 + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], v[:, order]


def brute_dbscan(points, eps, min_samples):
    """Labels from boolean transitive closure over the core-point graph.

    Border points take the cluster of their lowest-indexed core neighbour;
    cluster ids are numbered by the lowest core index in each component.
    """
    pts = np.asarray(points, dtype=float)
    m = len(pts)
    dist = np.array([[np.sqrt(np.sum((pts[i] - pts[j]) ** 2)) for j in range(m)] for i in range(m)])
    adj = dist <= eps
    core = adj.sum(axis=1) >= min_samples
    reach = adj & core[:, None] & core[None, :]
    reach |= np.diag(core)
    # Warshall closure
    for k in range(m):
        reach |= reach[:, [k]] & reach[[k], :]
    labels = [-1] * m
    next_id = 0
    for i in range(m):
        if core[i] and labels[i] == -1:
            for j in range(m):
                if reach[i, j]:
                    labels[j] = next_id
            next_id += 1
    for i in range(m):
        if not core[i]:
            nbrs = [j for j in range(m) if adj[i, j] and core[j]]
            if nbrs:
                labels[i] = labels[nbrs[0]]
    return labels


def partition(labels):
    """Set-of-frozensets view of a labelling, ignoring label values; noise kept separately."""
    groups = {}
    for i, l in enumerate(labels):
        if l != -1:
            groups.setdefault(l, set()).add(i)
    noise = frozenset(i for i, l in enumerate(labels) if l == -1)
    return frozenset(frozenset(g) for g in groups.values()), noise


def central_diff(f, x, h=1e-5):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g
