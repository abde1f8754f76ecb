"""Negative-gradient flow on the truncated loop space and the boundary count.

Connections between critical loops with index difference one are isolated
rays of the unstable sphere.  They are found by classifying a mesh of launch
directions by route (which critical loops the trajectory passes, on which
side, and how it finally approaches its limit) and bisecting every label
boundary: a bisection that ends inside the convergence trap of a target is
one connecting trajectory; label changes without a trap hit are benign.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45

from .action_gradient import action_hs, drift_spectrum, gradient_hs, launch_frame
from .errors import ResolutionError, StiffnessError, UndecidedLaunchError
from .hamiltonian import TrigHamiltonian
from .loopspace import GalerkinSpace, loop_from_samples, loop_to_hs, reduce_mod_half

log = logging.getLogger(__name__)


@dataclass
class MorseParams:
    r_launch: float = 1e-3
    r_conv: float = 1e-2
    tol_conv: float = 1e-6
    horizon: float = 200.0
    mesh: int = 64
    r_pass: float = 0.1
    M_t: int | None = None
    rtol: float = 1e-8
    atol: float = 1e-10
    max_refinements: int = 10
    bisect_depth: int = 60


def smoothstep(u: float) -> float:
    u = min(max(u, 0.0), 1.0)
    return u * u * (3 - 2 * u)


@dataclass(frozen=True)
class CompactPerturbation:
    """Bump-modulated constant-mode field vanishing near the critical set.

    The value is rescaled so that |K(x)| never exceeds half the gradient
    norm scaled by ``magnitude``; the mode profile of each direction decays
    like 1/(1+|k|^2).
    """

    space: GalerkinSpace
    magnitude: float
    directions: np.ndarray          # (terms, D)
    wave_vectors: np.ndarray        # (terms, 2n)
    phases: np.ndarray              # (terms,)
    crit_points: tuple              # hs vectors of the critical loops
    r_crit: float = 1e-2

    @classmethod
    def seeded(cls, space, crit_points, rng, magnitude=1e-3, terms=3, r_crit=1e-2):
        k = np.abs(space.mode_of_block()).astype(float)
        decay = 1.0 / (1.0 + k**2)
        dirs = rng.standard_normal((terms, space.dim_total)) * decay
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        waves = rng.integers(-2, 3, size=(terms, space.two_n)).astype(float)
        phases = rng.uniform(0, 2 * np.pi, terms)
        return cls(space, float(magnitude), dirs, waves, phases,
                   tuple(np.asarray(c, dtype=float) for c in crit_points), r_crit)

    def _cutoff(self, v: np.ndarray) -> float:
        if not self.crit_points:
            return 1.0
        dmin = min(_dist_mod(v, c, self.space) for c in self.crit_points)
        return smoothstep((dmin - self.r_crit) / self.r_crit)

    def raw_field(self, v: np.ndarray) -> np.ndarray:
        base = v[self.space.block(0)]
        w = np.cos(2 * np.pi * (self.wave_vectors @ base) + self.phases)
        return w @ self.directions

    def __call__(self, v: np.ndarray, grad_norm: float) -> np.ndarray:
        cut = self._cutoff(v)
        if cut == 0.0 or self.magnitude == 0.0:
            return np.zeros(self.space.dim_total)
        F = cut * self.raw_field(v)
        bound = 0.5 * self.magnitude * grad_norm
        nF = float(np.linalg.norm(F))
        if nF == 0.0:
            return F
        return F * (bound / (bound + nF))


def _dist_mod(v: np.ndarray, w: np.ndarray, space: GalerkinSpace) -> float:
    d = v - w
    b = space.block(0)
    d = d.copy()
    d[b] = reduce_mod_half(d[b])
    return float(np.linalg.norm(d))


@dataclass
class MorseTrajectory:
    ss: np.ndarray
    samples: np.ndarray            # (m, D) hs coordinates, lifted base
    label: tuple                   # ('orbit', oid) | ('escape',) | ('horizon',)
    itinerary: tuple
    actions: np.ndarray
    flow_time: float
    endpoints: tuple = (None, None)


class FlowSystem:
    """Shared geometry for gradient-flow launches of one Hamiltonian."""

    def __init__(self, H: TrigHamiltonian, K, space: GalerkinSpace, orbits, params: MorseParams):
        self.H = H
        self.K = K
        self.space = space
        self.params = params
        self.M_t = params.M_t
        self.orbit_vecs = [
            loop_to_hs(loop_from_samples(o.samples[:-1], space.N)) for o in orbits
        ]
        self.orbit_actions = [o.action for o in orbits]
        self.frames = {}
        self.unstable_bases = {}
        for o, vec in zip(orbits, self.orbit_vecs):
            vals, vecs = launch_frame(H, space, vec, self.M_t)
            self.frames[o.oid] = (vals, vecs)
            full_vals, full_vecs = drift_spectrum(H, space, vec, self.M_t)
            self.unstable_bases[o.oid] = full_vecs[:, full_vals > 0]
        self.oids = [o.oid for o in orbits]
        if self.orbit_actions:
            spread = max(self.orbit_actions) - min(self.orbit_actions)
            self.action_floor = min(self.orbit_actions) - max(0.5, 2.0 * spread)
        else:
            self.action_floor = -np.inf

    def drift(self, v: np.ndarray) -> np.ndarray:
        g = gradient_hs(self.H, self.space, v, self.M_t)
        out = -g
        if self.K is not None:
            out = out + self.K(v, float(np.linalg.norm(g)))
        return out

    def grad_norm(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(gradient_hs(self.H, self.space, v, self.M_t)))

    def action(self, v: np.ndarray) -> float:
        return action_hs(self.H, self.space, v, self.M_t)

    def distances(self, v: np.ndarray) -> np.ndarray:
        return np.array([_dist_mod(v, w, self.space) for w in self.orbit_vecs])

    def unstable_offset(self, oid: int, v: np.ndarray) -> float:
        """Component of v - orbit along the orbit's full unstable eigenspace.

        The convergence trap tests this instead of the raw gradient norm:
        every critical loop is a saddle of the action with strongly unstable
        mode directions, so round-off amplified along them prevents the total
        gradient from ever reaching tol_conv; distance to the local stable
        manifold is the quantity that actually decides the limit.
        """
        w = self.orbit_vecs[self.oids.index(oid)]
        d = v - w
        b = self.space.block(0)
        d = d.copy()
        d[b] = reduce_mod_half(d[b])
        U = self.unstable_bases[oid]
        if U.shape[1] == 0:
            return 0.0
        return float(np.linalg.norm(U.T @ d))

    def approach_token(self, oid: int, v: np.ndarray):
        """Coarse arrival-direction label at an orbit (route invariant)."""
        w = self.orbit_vecs[self.oids.index(oid)]
        d = v - w
        b = self.space.block(0)
        d = d.copy()
        d[b] = reduce_mod_half(d[b])
        nd = np.linalg.norm(d)
        if nd < 1e-14:
            return (oid, -1, 0)
        d /= nd
        j = int(np.argmax(np.abs(d)))
        return (oid, j, int(np.sign(d[j])))

    def pass_token(self, oid: int, v: np.ndarray):
        """Side-of-passage label relative to an orbit's unstable directions."""
        _, frame = self.frames[oid]
        w = self.orbit_vecs[self.oids.index(oid)]
        d = v - w
        b = self.space.block(0)
        d = d.copy()
        d[b] = reduce_mod_half(d[b])
        if frame.shape[1] == 0:
            return (oid, -1, 0)
        c = frame.T @ d
        j = int(np.argmax(np.abs(c)))
        return (oid, j, int(np.sign(c[j])))


def integrate_flow(system: FlowSystem, start: np.ndarray, *, horizon: float = None,
                   source_oid: int | None = None) -> MorseTrajectory:
    """Flow of drift = -grad + K from ``start`` until trap, escape or horizon.

    The trap at an orbit requires both entering its r_conv-ball and a gradient
    norm below tol_conv; dropping below the census action floor classifies the
    launch as an escape to action -infinity.
    """
    p = system.params
    horizon = horizon if horizon is not None else p.horizon
    v0 = np.asarray(start, dtype=float)

    d0 = system.distances(v0) if system.oids else np.array([])
    if (
        d0.size
        and float(np.min(d0)) < p.r_conv
        and system.unstable_offset(system.oids[int(np.argmin(d0))], v0) < p.tol_conv
    ):
        oid = system.oids[int(np.argmin(d0))]
        return MorseTrajectory(
            ss=np.array([0.0]),
            samples=np.array([v0]),
            label=("orbit", oid, system.approach_token(oid, v0)),
            itinerary=(),
            actions=np.array([system.action(v0)]),
            flow_time=0.0,
            endpoints=(source_oid, oid),
        )

    stepper = RK45(
        lambda s, v: system.drift(v), 0.0, v0, horizon,
        rtol=p.rtol, atol=p.atol, max_step=5.0,
    )
    ss = [0.0]
    samples = [v0.copy()]
    actions = [system.action(v0)]
    inside = {oid: False for oid in system.oids}
    deepest = {}
    itinerary = []
    label = ("horizon",)

    while stepper.status == "running":
        try:
            stepper.step()
        except RuntimeError as exc:
            raise StiffnessError(str(exc), s=stepper.t, state=stepper.y) from exc
        if stepper.step_size is not None and stepper.step_size < 1e-13:
            raise StiffnessError("step size underflow", s=stepper.t, state=stepper.y)
        v = stepper.y
        ss.append(stepper.t)
        samples.append(v.copy())
        actions.append(system.action(v))

        dists = system.distances(v)
        for i, oid in enumerate(system.oids):
            if dists[i] < p.r_pass:
                if not inside[oid] or dists[i] < deepest.get(oid, (np.inf, None))[0]:
                    deepest[oid] = (dists[i], v.copy())
                inside[oid] = True
            elif inside[oid]:
                inside[oid] = False
                dmin, vmin = deepest.pop(oid)
                itinerary.append(system.pass_token(oid, vmin))

        if actions[-1] < system.action_floor:
            label = ("escape",)
            break

        close = np.flatnonzero(dists < p.r_conv)
        if close.size:
            oid = system.oids[int(close[np.argmin(dists[close])])]
            if system.unstable_offset(oid, v) < p.tol_conv:
                label = ("orbit", oid, system.approach_token(oid, v))
                break

    return MorseTrajectory(
        ss=np.array(ss),
        samples=np.array(samples),
        label=label,
        itinerary=tuple(itinerary),
        actions=np.array(actions),
        flow_time=float(ss[-1]),
        endpoints=(source_oid, label[1] if label[0] == "orbit" else None),
    )


def trajectory_residual(system: FlowSystem, traj: MorseTrajectory) -> float:
    """Integration check: re-integrate each stored step with four RK4 substeps
    and return the worst per-unit-time defect against the stored endpoint."""
    worst = 0.0
    for i in range(len(traj.ss) - 1):
        h = traj.ss[i + 1] - traj.ss[i]
        if h <= 0:
            continue
        x = traj.samples[i].copy()
        sub = h / 4
        for _ in range(4):
            k1 = system.drift(x)
            k2 = system.drift(x + sub / 2 * k1)
            k3 = system.drift(x + sub / 2 * k2)
            k4 = system.drift(x + sub * k3)
            x = x + sub / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        worst = max(
            worst, float(np.linalg.norm(x - traj.samples[i + 1])) / max(h, 1.0)
        )
    return worst


def _sphere_mesh(d: int, m: int, rng) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = 2 * np.pi * np.arange(m) / m
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # Fibonacci-style mesh for d = 3, seeded uniform points beyond
    if d == 3:
        i = np.arange(m, dtype=float) + 0.5
        phi = np.arccos(1 - 2 * i / m)
        theta = np.pi * (1 + 5**0.5) * i
        return np.stack(
            [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)],
            axis=1,
        )
    pts = rng.standard_normal((m, d))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


@dataclass
class ConnectionCount:
    count: int
    witnesses: list
    mesh_used: int


def connection_counts(
    system: FlowSystem,
    source_oid: int,
    target_oids: list,
    rng=None,
) -> dict:
    """Counts of connecting trajectories from one orbit to each given target.

    Counting is stable under one mesh doubling before it is accepted; an
    unclassifiable launch raises UndecidedLaunchError for the caller's
    perturbation policy to handle.
    """
    p = system.params
    rng = rng or np.random.default_rng(0)
    vals, frame = system.frames[source_oid]
    d = frame.shape[1]
    out = {t: ConnectionCount(0, [], 0) for t in target_oids}
    if d == 0:
        return out
    src_vec = system.orbit_vecs[system.oids.index(source_oid)]

    cache = {}

    def launch(direction: np.ndarray) -> MorseTrajectory:
        key = tuple(np.round(direction, 14))
        if key not in cache:
            start = src_vec + p.r_launch * (frame @ direction)
            traj = integrate_flow(system, start, source_oid=source_oid)
            if traj.label[0] == "horizon":
                raise UndecidedLaunchError(
                    f"launch from orbit {source_oid} hit the horizon",
                    direction=direction,
                )
            cache[key] = traj
        return cache[key]

    if d == 1:
        for direction in _sphere_mesh(1, 2, rng):
            traj = launch(direction)
            if traj.label[0] == "orbit" and traj.label[1] in target_oids:
                out[traj.label[1]].count += 1
                out[traj.label[1]].witnesses.append(traj)
        for t in target_oids:
            out[t].mesh_used = 2
        return out

    if d == 2:
        prev = None
        m = p.mesh
        for _ in range(p.max_refinements):
            counts, wits = _count_on_circle(system, launch, m, target_oids, p)
            if prev is not None and prev == counts:
                for t in target_oids:
                    out[t] = ConnectionCount(counts[t], wits[t], m)
                return out
            prev = counts
            m *= 2
        raise ResolutionError(
            f"connection counts from orbit {source_oid} did not stabilize"
        )

    # d >= 3: classify a seeded spherical mesh; nearest-neighbour clusters of
    # direct trap hits are counted, without boundary bisection
    log.warning("launch sphere dimension %d: using cluster counting", d)
    mesh = _sphere_mesh(d, max(p.mesh * 4, 256), rng)
    labels = [launch(v).label for v in mesh]
    for t in target_oids:
        hits = np.array([lab[0] == "orbit" and lab[1] == t for lab in labels])
        out[t] = ConnectionCount(int(_cluster_count(mesh, hits)), [], len(mesh))
    return out


def _count_on_circle(system, launch, m, target_oids, p):
    angles = 2 * np.pi * np.arange(m) / m
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    trajs = [launch(v) for v in dirs]
    full_labels = [(t.label, t.itinerary) for t in trajs]
    counts = {t: 0 for t in target_oids}
    wits = {t: [] for t in target_oids}

    # direct trap hits: contiguous runs on the circle collapse to components
    direct = {}
    for i, t in enumerate(trajs):
        if t.label[0] == "orbit" and t.label[1] in target_oids:
            direct[i] = t.label[1]
    visited = set()
    for i, tgt in direct.items():
        if i in visited:
            continue
        j = i
        while (j + 1) % m in direct and direct[(j + 1) % m] == tgt and (j + 1) % m != i:
            j = (j + 1) % m
            visited.add(j)
        visited.add(i)
        counts[tgt] += 1
        wits[tgt].append(trajs[i])

    # bisect every label boundary between non-hit neighbours
    for i in range(m):
        j = (i + 1) % m
        if i in direct or j in direct:
            continue
        if full_labels[i] == full_labels[j]:
            continue
        hits = _bisect_boundary(
            launch, angles[i], angles[i] + 2 * np.pi / m,
            full_labels[i], full_labels[j], target_oids, p,
        )
        for tgt, traj, _ang in hits:
            counts[tgt] += 1
            wits[tgt].append(traj)
    return counts, wits


def _bisect_boundary(launch, a, b, la, lb, target_oids, p):
    """Trap hits at targets inside (a, b), located by label-change bisection.

    Works on a queue of sub-segments so a segment holding both a benign label
    flip and a genuine separatrix cannot discard the separatrix.  Benign
    changes bottom out at machine width without a hit.
    """
    hits = []
    budget = 6 * p.bisect_depth
    queue = [(a, la, b, lb, 0)]
    while queue and budget > 0:
        a0, l0, b0, l1, depth = queue.pop()
        if depth >= p.bisect_depth or b0 - a0 < 1e-13:
            continue
        mid = 0.5 * (a0 + b0)
        tm = launch(np.array([np.cos(mid), np.sin(mid)]))
        budget -= 1
        if tm.label[0] == "orbit" and tm.label[1] in target_oids:
            hits.append((tm.label[1], tm, mid))
            continue
        lm = (tm.label, tm.itinerary)
        if lm != l0:
            queue.append((a0, l0, mid, lm, depth + 1))
        if lm != l1:
            queue.append((mid, lm, b0, l1, depth + 1))
    return hits


def morse_boundary(H, K, orbits, space, params: MorseParams = None, rng=None):
    """Boundary matrices over GF(2) between adjacent relative-index degrees.

    Returns (GradedComplex, witnesses) with generators ordered by increasing
    action within each degree (ties by orbit id).
    """
    from .chain_algebra import GF2Matrix, GradedComplex, Generator

    params = params or MorseParams()
    rng = rng or np.random.default_rng(0)
    system = FlowSystem(H, K, space, orbits, params)
    degrees = {}
    for o in orbits:
        if o.rel_index is None:
            raise ValueError("orbits need rel_index before boundary assembly")
        degrees.setdefault(o.rel_index, []).append(o)
    for k in degrees:
        degrees[k].sort(key=lambda o: (o.action, o.oid))

    C = GradedComplex()
    gid = 0
    for k in sorted(degrees):
        gens = []
        for o in degrees[k]:
            gens.append(Generator(gid, k, o.action, o.oid))
            gid += 1
        C.generators[k] = gens

    witnesses = {}
    for k in sorted(degrees):
        if k - 1 not in degrees:
            continue
        rows = degrees[k - 1]
        cols = degrees[k]
        mat = np.zeros((len(rows), len(cols)), dtype=np.uint8)
        for cj, src in enumerate(cols):
            targets = [o.oid for o in rows]
            found = connection_counts(system, src.oid, targets, rng=rng)
            for ri, tgt in enumerate(rows):
                cc = found[tgt.oid]
                mat[ri, cj] = cc.count % 2
                witnesses[(src.oid, tgt.oid)] = cc
        C.boundary[k] = GF2Matrix(mat)
    return C, witnesses
