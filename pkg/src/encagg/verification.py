"""Self-checks behind ``encagg verify``.

Each check compares a package routine with an independent reference on
random instances and returns a list of failure messages. Routines are looked
up through their modules at call time, so a patched seam is what gets checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import attacks, clustering, generator, projection


@dataclass
class CheckResult:
    name: str
    cases: int
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _closure_labels(points, eps, min_samples):
    # core-graph reachability by repeated boolean products
    pts = np.asarray(points, dtype=float)
    diff = pts[:, None, :] - pts[None, :, :]
    adj = np.sqrt((diff**2).sum(axis=2)) <= eps
    core = adj.sum(axis=1) >= min_samples
    reach = (adj & core[:, None] & core[None, :]) | np.diag(core)
    while True:
        nxt = (reach.astype(int) @ reach.astype(int)) > 0
        if (nxt == reach).all():
            break
        reach = nxt
    groups, noise = set(), set()
    for i in range(len(pts)):
        if core[i]:
            groups.add(frozenset(np.flatnonzero(reach[i]).tolist()))
    assigned = {}
    for g in groups:
        for j in g:
            assigned[j] = g
    out = {g: set(g) for g in groups}
    for i in range(len(pts)):
        if core[i]:
            continue
        nb = [j for j in np.flatnonzero(adj[i]) if core[j]]
        if nb:
            out[assigned[min(nb)]].add(i)
        else:
            noise.add(i)
    return frozenset(frozenset(v) for v in out.values()), frozenset(noise)


def _as_partition(labels):
    groups = {}
    for i, lab in enumerate(labels):
        if lab != clustering.NOISE:
            groups.setdefault(int(lab), set()).add(i)
    noise = frozenset(i for i, lab in enumerate(labels) if lab == clustering.NOISE)
    return frozenset(frozenset(g) for g in groups.values()), noise


def check_dbscan(cases=200, seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    res = CheckResult("dbscan_vs_closure", cases)
    for c in range(cases):
        m = int(rng.integers(1, 51))
        pts = rng.uniform(0, 10, size=(m, 2))
        eps = float(rng.uniform(0.3, 2.5))
        ms = int(rng.integers(1, 7))
        got = _as_partition(clustering.dbscan(pts, eps, ms).labels)
        if got != _closure_labels(pts, eps, ms):
            res.failures.append(f"case {c}: m={m} eps={eps:.3f} min_samples={ms}")
    return res


def check_projection(cases=100, seed=1, tol=1e-8) -> CheckResult:
    rng = np.random.default_rng(seed)
    res = CheckResult("projection_vs_eigh", cases)
    for c in range(cases):
        n = int(rng.integers(3, 21))
        d = int(rng.integers(2, 13))
        g = rng.normal(size=(n, d)) * rng.uniform(0.1, 3.0, size=d)
        try:
            p = projection.project_gradients(g)
        except Exception as exc:  # noqa: BLE001 - any failure is a finding
            res.failures.append(f"case {c}: {type(exc).__name__}: {exc}")
            continue
        cov = np.cov(g, rowvar=False)
        vals, vecs = np.linalg.eigh(cov)
        vals, vecs = vals[::-1][:2], vecs[:, ::-1][:, :2]
        scale = max(1.0, abs(vals[0]))
        if np.abs(p.eigenvalues[:2] - vals).max() > tol * scale:
            res.failures.append(f"case {c}: eigenvalues {p.eigenvalues[:2]} vs {vals}")
            continue
        # eigenvectors are only compared where the gap makes them well defined
        gaps = np.diff(np.linalg.eigvalsh(cov)[::-1])
        if len(gaps) > 1 and min(abs(gaps[0]), abs(gaps[1])) > 1e-6 * scale:
            for j in range(2):
                if min(np.abs(p.basis[:, j] - vecs[:, j]).max(), np.abs(p.basis[:, j] + vecs[:, j]).max()) > 1e-6:
                    res.failures.append(f"case {c}: eigenvector {j} mismatch")
        colvar = p.projected.var(axis=0, ddof=1)
        if np.abs(colvar - p.eigenvalues[:2]).max() > tol * scale:
            res.failures.append(f"case {c}: projected variance {colvar} vs {p.eigenvalues[:2]}")
    return res


def check_generator(cases=20, seed=2, tol=1e-4) -> CheckResult:
    rng = np.random.default_rng(seed)
    res = CheckResult("generator_backprop_vs_fd", cases)
    hyper = generator.GeneratorHyper()
    for c in range(cases):
        model = generator.init_generator(int(rng.integers(2, 5)), int(rng.integers(2, 6)), rng)
        model.anchor(rng.normal(size=2), float(rng.uniform(0.5, 2.0)))
        noise = generator.sample_noise(int(rng.integers(3, 8)), model.noise_dim, rng)
        labels = (rng.random(noise.shape[0]) < 0.5).astype(float)
        center = rng.normal(size=2)
        eps = float(rng.uniform(0.2, 1.0))
        _, grads = generator.loss_and_grad(model, noise, labels, center, eps, hyper)
        worst = 0.0
        for name in generator.PARAM_NAMES:
            p = model.params[name]
            for idx in np.ndindex(p.shape):
                h = 1e-6
                old = p[idx]
                p[idx] = old + h
                lp = generator.total_loss(model, noise, labels, center, eps, hyper)
                p[idx] = old - h
                lm = generator.total_loss(model, noise, labels, center, eps, hyper)
                p[idx] = old
                fd = (lp - lm) / (2 * h)
                an = grads[name][idx]
                worst = max(worst, abs(fd - an) / max(1e-6, abs(fd) + abs(an)))
        if worst > tol:
            res.failures.append(f"case {c}: relative error {worst:.2e}")
    return res


def check_adaptive_stealth(cases=50, seed=3) -> CheckResult:
    rng = np.random.default_rng(seed)
    res = CheckResult("adaptive_orthogonal_payload", cases)
    for c in range(cases):
        d = int(rng.integers(3, 40))
        basis, _ = np.linalg.qr(rng.normal(size=(d, 2)))
        ref = rng.normal(size=d)
        ortho = float(rng.uniform(0.0, 50.0))
        g = attacks.attack_adaptive_subspace(ref, basis, 1.0, 0.5, ortho, rng)
        par, perp = projection.decompose_against_subspace(g - ref, basis)
        leak = np.linalg.norm(basis.T @ perp)
        if leak > 1e-8 * max(ortho, 1.0) or abs(np.linalg.norm(perp) - ortho) > 1e-8 * max(ortho, 1.0):
            res.failures.append(f"case {c}: leak {leak:.2e}")
        if np.linalg.norm(par) > 0.5 + 1e-9:
            res.failures.append(f"case {c}: in-plane shift {np.linalg.norm(par):.3f} > 0.5")
    return res


def check_schedule(cases=20, seed=4) -> CheckResult:
    rng = np.random.default_rng(seed)
    res = CheckResult("schedule_ratio_cap", cases)
    for c in range(cases):
        n = int(rng.integers(2, 40))
        m = int(rng.integers(0, n + 1))
        ratio = float(rng.uniform(0, 1))
        ids = rng.choice(n, size=m, replace=False)
        sched = attacks.schedule_poisoning(n, ids, ratio, 50, rng)
        cap = np.floor(ratio * n + 1e-9)
        if sched.flags.sum(axis=1).max(initial=0) > cap:
            res.failures.append(f"case {c}: more than {cap} poisoners in a round")
    return res


CHECKS = (check_dbscan, check_projection, check_generator, check_adaptive_stealth, check_schedule)


def run_all(quick: bool = False) -> list:
    out = []
    for check in CHECKS:
        out.append(check(cases=10) if quick else check())
    return out
