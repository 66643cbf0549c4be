"""Exact simulation of the labelled branching random walk in random
environment, with boundary killing at multiple box sizes from one trajectory.

Dynamics per particle at an interior site x: jump to each of the 2d nearest
neighbors at rate n^2, branch (one offspring at x) at rate xi_e_+(x), die at
rate xi_e_-(x).  Each particle carries a single exponential clock at its
total rate; at a firing the event type is drawn categorically.  Rates depend
only on the particle's own position, so clocks never need rescanning: a
binary heap over next-event times drives the loop.

The ambient process is killed at the walls of the ambient box (side L_max);
killed projections for smaller boxes L are computed afterwards from the
recorded paths.  A particle's contribution to the box-L process ends at its
first hit of that box's boundary, and children born to a parent after the
parent's box-L kill never enter the box-L process (kills are inherited).
Both facts together make each projection a Markov process with the killed
generator while keeping, pathwise, the measure ordering in L.
"""

from __future__ import annotations

import bisect
import heapq
import math
import random
import struct
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeSpec

EVENT_KINDS = ("jump", "branch", "death", "absorbed")
JUMP, BRANCH, DEATH, ABSORBED = range(4)


def particle_count(spec: LatticeSpec, rho: float | None = None) -> int:
    """Initial population floor(n^rho) with the default rho = d/2."""
    if rho is None:
        rho = spec.d / 2.0
    return int(math.floor(spec.n ** rho))


@dataclass
class LabelledState:
    """Live particle positions (multiset of flat ambient sites) and clock."""

    positions: list
    clock: float


def init_state(spec: LatticeSpec, rho: float | None = None) -> LabelledState:
    """floor(n^rho) particles at the origin, time zero."""
    if not spec.centered:
        raise ValueError("the labelled process starts at the origin of a centered box")
    k = particle_count(spec, rho)
    origin = flat_index(spec, spec.origin_index)
    return LabelledState(positions=[origin] * k, clock=0.0)


def flat_index(spec: LatticeSpec, idx: tuple) -> int:
    S = spec.box_sites_per_axis
    if spec.d == 1:
        return int(idx[0])
    return int(idx[0]) * S + int(idx[1])


@dataclass(frozen=True)
class AmbientRates:
    """Potential and geometry tables over the ambient (largest) box."""

    spec: LatticeSpec
    xi_e: np.ndarray
    c_n: float = 0.0

    def __post_init__(self):
        if self.xi_e.shape != self.spec.shape:
            raise ValueError("potential shape does not match the ambient box")
        if not self.spec.centered:
            raise ValueError("ambient box must be centered")


def ambient_rates(env, L_max: int) -> AmbientRates:
    """Extend the environment of a solve box to the ambient box.

    Site-keyed sampling guarantees the two agree on shared sites; the
    renormalization constant is reused from the environment archive rather
    than recomputed, so the walk/branch rates match the solver's potential
    exactly on the solve box.
    """
    from .environment import NoiseSpec, sample_noise

    spec = env.spec
    if L_max < spec.L:
        raise ValueError("ambient box must contain the solve box")
    c_n = getattr(env, "c_n", 0.0)
    if L_max == spec.L:
        return AmbientRates(spec, np.asarray(env.xi_e).copy(), c_n)
    big = LatticeSpec(n=spec.n, L=L_max, d=spec.d, centered=True)
    if not hasattr(env, "noise"):
        xi = np.asarray(env.xi_e)
        if np.all(xi == xi.flat[0]):
            # constant potentials extend canonically
            return AmbientRates(big, np.full(big.shape, float(xi.flat[0])), c_n)
        raise ValueError(
            "an explicit non-constant potential cannot be extended; build it "
            "on the ambient box directly")
    noise = sample_noise(NoiseSpec(env.noise.distribution, env.noise.seed, big))
    return AmbientRates(big, noise.values - c_n, c_n)


@dataclass
class ParticleRecord:
    """Full history of one labelled particle in the ambient process."""

    id: int
    parent: int                  # -1 for the initial generation
    birth: float
    path_times: list             # event times, starting with the birth time
    path_sites: list             # flat ambient site after each event
    death_time: float            # math.inf while alive at the horizon
    cause: str                   # 'alive' | 'died' | 'absorbed'

    def position_at(self, t: float) -> int:
        """Flat site at time t (cadlag); caller checks aliveness."""
        i = bisect.bisect_right(self.path_times, t) - 1
        return self.path_sites[i]


@dataclass
class SimulationResult:
    rates: AmbientRates
    horizon: float
    seed: int
    initial_count: int
    particles: list
    events: list | None
    exploded: bool

    @property
    def spec(self) -> LatticeSpec:
        return self.rates.spec


def _neighbor_table(spec: LatticeSpec):
    """Flat neighbor indices, ordered (+x, -x[, +y, -y]); boundary rows None."""
    S = spec.box_sites_per_axis
    total = S ** spec.d
    bmask = spec.boundary_mask().ravel()
    nbr = [None] * total
    if spec.d == 1:
        for i in range(total):
            if not bmask[i]:
                nbr[i] = (i + 1, i - 1)
    else:
        for i in range(total):
            if not bmask[i]:
                nbr[i] = (i + S, i - S, i + 1, i - 1)
    return nbr, bmask


def simulate(rates: AmbientRates, horizon: float, seed: int,
             cap: int = 1_000_000, rho: float | None = None,
             collect_log: bool = False) -> SimulationResult:
    """One exact trajectory of the labelled process up to the horizon.

    Deterministic given the seed.  If the live population ever exceeds the
    cap the run stops and is flagged exploded, with the partial log kept.
    """
    spec = rates.spec
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    n2 = float(spec.n) ** 2
    jump_total = 2 * spec.d * n2
    xi = rates.xi_e.ravel()
    beta = np.maximum(xi, 0.0).tolist()
    delta = np.maximum(-xi, 0.0).tolist()
    total_rate = [jump_total + b + dd for b, dd in zip(beta, delta)]
    nbr, bmask = _neighbor_table(spec)

    k0 = particle_count(spec, rho)
    origin = flat_index(spec, spec.origin_index)
    if bmask[origin]:
        raise ValueError("origin lies on the ambient boundary; enlarge L_max")

    rng = random.Random(seed)
    expo = rng.expovariate
    unif = rng.random

    pos = [origin] * k0
    birth = [0.0] * k0
    parent = [-1] * k0
    path_t = [[0.0] for _ in range(k0)]
    path_s = [[origin] for _ in range(k0)]
    death_t = [math.inf] * k0
    cause = ["alive"] * k0

    heap = [(expo(total_rate[origin]), i) for i in range(k0)]
    heapq.heapify(heap)
    alive = k0
    exploded = False
    events = [] if collect_log else None

    while heap and alive > 0:
        t, pid = heapq.heappop(heap)
        if t > horizon:
            break
        x = pos[pid]
        u = unif() * total_rate[x]
        if u < jump_total:
            y = nbr[x][int(u / n2)]
            pos[pid] = y
            path_t[pid].append(t)
            path_s[pid].append(y)
            if bmask[y]:
                death_t[pid] = t
                cause[pid] = "absorbed"
                alive -= 1
                if collect_log:
                    events.append((t, pid, ABSORBED, y))
                continue
            if collect_log:
                events.append((t, pid, JUMP, y))
        elif u < jump_total + beta[x]:
            cid = len(pos)
            pos.append(x)
            birth.append(t)
            parent.append(pid)
            path_t.append([t])
            path_s.append([x])
            death_t.append(math.inf)
            cause.append("alive")
            heapq.heappush(heap, (t + expo(total_rate[x]), cid))
            alive += 1
            if collect_log:
                events.append((t, pid, BRANCH, x))
            if alive > cap:
                exploded = True
                break
        else:
            death_t[pid] = t
            cause[pid] = "died"
            alive -= 1
            if collect_log:
                events.append((t, pid, DEATH, x))
            continue
        heapq.heappush(heap, (t + expo(total_rate[pos[pid]]), pid))

    particles = [
        ParticleRecord(i, parent[i], birth[i], path_t[i], path_s[i], death_t[i], cause[i])
        for i in range(len(pos))
    ]
    return SimulationResult(rates, horizon, seed, k0, particles, events, exploded)


def _max_coord_table(spec: LatticeSpec) -> np.ndarray:
    """Integer sup-norm |g|_inf of the centered coordinates, per flat site."""
    P = spec.L * spec.n
    axis = np.abs(np.arange(P + 1) - P // 2)
    if spec.d == 1:
        return axis
    return np.maximum(axis[:, None], axis[None, :]).ravel()


@dataclass
class KillSchedule:
    """First boundary-hit times per particle and box, kills inherited.

    tau[L][i] is the time after which particle i no longer contributes to
    the box-L process; it is nondecreasing in L for every particle.
    """

    Ls: list
    tau: dict


def kill_schedule(result: SimulationResult, Ls) -> KillSchedule:
    spec = result.spec
    maxc = _max_coord_table(spec)
    Ls = list(Ls)
    for L in Ls:
        if L % 2 or L < 2:
            raise ValueError(f"box sides must be even positive, got {L}")
        if L > spec.L:
            raise ValueError(f"box side {L} exceeds the ambient side {spec.L}")
    shells = {L: L * spec.n // 2 for L in Ls}
    tau = {L: [] for L in Ls}
    for p in result.particles:
        mx = maxc[np.asarray(p.path_sites, dtype=np.intp)]
        for L in Ls:
            shell = shells[L]
            if p.parent >= 0 and tau[L][p.parent] <= p.birth:
                tau[L].append(p.birth)  # dead on arrival: parent already killed
                continue
            hits = np.nonzero(mx >= shell)[0]
            tau[L].append(p.path_times[hits[0]] if hits.size else math.inf)
    return KillSchedule(Ls, tau)


def _alive_window(p: ParticleRecord, tau_L: float, horizon: float):
    """[start, end) of the particle's contribution to the box-L process."""
    end = min(p.death_time, tau_L, horizon)
    return p.birth, end


@dataclass
class EmpiricalMeasurePath:
    """Measure snapshots per (time, box) as integer occupation counts.

    Atom weights are counts / floor(n^rho); counts are kept exact so that
    the coupling-order comparison is integer arithmetic.
    """

    spec: LatticeSpec
    times: list
    Ls: list
    weight: float
    counts: dict                 # (time_index, L) -> {flat_site: int}

    def mass(self, ti: int, L: int) -> float:
        return self.weight * sum(self.counts[(ti, L)].values())

    def pair(self, ti: int, L: int, site_values: np.ndarray) -> float:
        flat = site_values.ravel()
        return self.weight * sum(c * flat[s] for s, c in self.counts[(ti, L)].items())


def kill_and_project(result: SimulationResult, Ls, snapshot_times) -> EmpiricalMeasurePath:
    """Empirical measures of the killed processes at the snapshot times.

    A particle contributes to box L strictly before its (inherited) kill
    time and strictly before its ambient death; the state is cadlag, so a
    particle born exactly at a snapshot time is counted.
    """
    sched = kill_schedule(result, Ls)
    times = sorted(snapshot_times)
    if times and times[-1] > result.horizon:
        raise ValueError("snapshot beyond the simulated horizon")
    counts = {(ti, L): {} for ti in range(len(times)) for L in sched.Ls}
    for i, p in enumerate(result.particles):
        for L in sched.Ls:
            start, end = _alive_window(p, sched.tau[L][i], math.inf)
            for ti, t in enumerate(times):
                if start <= t < end:
                    site = p.position_at(t)
                    bucket = counts[(ti, L)]
                    bucket[site] = bucket.get(site, 0) + 1
    weight = 1.0 / result.initial_count
    return EmpiricalMeasurePath(result.spec, times, sched.Ls, weight, counts)


def pathwise_integrals(result: SimulationResult, Ls, T: float, site_funcs: dict) -> dict:
    """Exact time integrals int_0^T <mu_r, f> dr for each box and function.

    ``site_funcs`` maps a name to a value array over the ambient box.  The
    empirical measure is piecewise constant between events, so the integral
    is a finite sum of (segment duration) * f(site) terms.
    """
    sched = kill_schedule(result, Ls)
    flats = {name: np.asarray(v).ravel() for name, v in site_funcs.items()}
    out = {(L, name): 0.0 for L in sched.Ls for name in flats}
    w = 1.0 / result.initial_count
    for i, p in enumerate(result.particles):
        pt = p.path_times
        ps = p.path_sites
        for L in sched.Ls:
            start, end = _alive_window(p, sched.tau[L][i], T)
            if end <= start:
                continue
            for k in range(len(pt)):
                seg_a = max(pt[k], start)
                seg_b = min(pt[k + 1] if k + 1 < len(pt) else math.inf, end)
                if seg_b <= seg_a:
                    continue
                dt = seg_b - seg_a
                site = ps[k]
                for name, arr in flats.items():
                    out[(L, name)] += w * dt * float(arr[site])
    return out


def sup_total_mass(result: SimulationResult, Ls, T: float) -> dict:
    """sup over [0, T] of the killed processes' total mass, per box."""
    sched = kill_schedule(result, Ls)
    out = {}
    w = 1.0 / result.initial_count
    for L in sched.Ls:
        deltas = []
        for i, p in enumerate(result.particles):
            start, end = _alive_window(p, sched.tau[L][i], math.inf)
            if end <= start or start > T:
                continue
            deltas.append((start, 1))
            if end <= T:
                deltas.append((end, -1))
        deltas.sort(key=lambda e: (e[0], e[1]))  # removals before births at ties
        cur = best = 0
        for _, step in deltas:
            cur += step
            best = max(best, cur)
        out[L] = w * best
    return out


def write_event_log(events, path) -> None:
    """Append-only binary record stream: (time f8, id u4, kind u1, site u4)."""
    with open(path, "wb") as fh:
        fh.write(b"pamlab-events-v1\n")
        for t, pid, kind, site in events:
            fh.write(struct.pack("<dIBI", t, pid, kind, site))


def read_event_log(path) -> list:
    rec = struct.Struct("<dIBI")
    with open(path, "rb") as fh:
        header = fh.readline()
        if header != b"pamlab-events-v1\n":
            raise ValueError(f"not an event log: {path}")
        blob = fh.read()
    return [rec.unpack_from(blob, i) for i in range(0, len(blob), rec.size)]
