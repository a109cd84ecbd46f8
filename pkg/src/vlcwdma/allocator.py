"""Resource allocation: one (AP, branch, wavelength) triple per user.

The hard constraint is that no (AP, wavelength) pair may serve two users;
the objective is the sum of the users' SINRs. Because every (AP, wavelength)
pair radiates at full power whether modulated or not, a user's noise floor
depends only on its branch, so the interference-free SINR of a candidate is
a true upper bound on its SINR in any assignment. That makes the
branch-and-bound bound below admissible: partial score plus the best
interference-free SINR of the remaining users' feasible candidates.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .channel import GainTable
from .link import ReceiverFrontEnd, DEFAULT_FRONT_END, ELECTRON_CHARGE_C, sinr as link_sinr
from .scene import WAVELENGTHS, Wavelength

EXHAUSTIVE_SPACE_LIMIT = 1e7
_BOUND_SLACK = 1e-6  # absorbs float summation-order noise in the bound


class InfeasibleUserError(ValueError):
    """A user has no candidate with positive signal gain."""


class SearchSpaceLimitError(ValueError):
    """The exhaustive oracle refuses instances beyond its enumeration limit."""


@dataclass(frozen=True)
class Candidate:
    """One admissible (AP, branch, wavelength) triple for a user."""

    user: int
    ap: int
    branch: int
    wavelength: Wavelength
    iso_sinr_db: float  # interference-free SINR upper bound

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.ap, self.branch, self.wavelength.index)

    @property
    def resource(self) -> tuple[int, int]:
        return (self.ap, self.wavelength.index)


@dataclass
class Assignment:
    """Per-user picks plus the achieved objective."""

    entries: dict[int, Candidate]
    objective_value: float
    objective_scale: str = "db"
    proven_optimal: bool = True

    def validate(self) -> None:
        seen: dict[tuple[int, int], int] = {}
        for user, cand in self.entries.items():
            if cand.user != user:
                raise ValueError(f"entry for user {user} carries candidate of user {cand.user}")
            if cand.resource in seen:
                raise ValueError(
                    f"(AP {cand.ap + 1}, {cand.wavelength.value}) reused by users "
                    f"{seen[cand.resource]} and {user}"
                )
            seen[cand.resource] = user

    def key(self) -> tuple:
        return tuple(self.entries[u].key for u in sorted(self.entries))


@dataclass(frozen=True)
class SolverConfig:
    objective: str = "db"          # "db" (sum of dB values) or "linear"
    k: int = 16                    # candidate cap per user
    time_limit_s: float | None = None
    tie_break: str = "lexicographic"

    def __post_init__(self) -> None:
        if self.objective not in ("db", "linear"):
            raise ValueError(f"objective must be 'db' or 'linear', got {self.objective!r}")
        if self.k < 1:
            raise ValueError(f"candidate cap must be >= 1, got {self.k}")
        if self.tie_break != "lexicographic":
            raise ValueError(f"unsupported tie-break rule {self.tie_break!r}")


class _Evaluator:
    """Vectorized SINR arithmetic mirroring link.sinr for search inner loops."""

    def __init__(self, table: GainTable, front_end: ReceiverFrontEnd, scale: str):
        resp = np.array([front_end.responsivity(wl) for wl in WAVELENGTHS])
        # currents[u, b, a, k]: photocurrent of pair (a, k) seen on branch b
        self.currents = table.dc * table.tx_power_w[None, None, :, :] * resp[None, None, None, :]
        total = self.currents.sum(axis=(2, 3))  # every pair radiates regardless of assignment
        b_rx = front_end.bandwidth_hz
        self.sigma2 = 2.0 * ELECTRON_CHARGE_C * total * b_rx + front_end.noise_density_a_rthz**2 * b_rx
        self.crosstalk = front_end.crosstalk
        self.scale = scale

    def user_sinr_linear(self, cand: Candidate, others: Sequence[Candidate]) -> float:
        u, b = cand.user, cand.branch
        i_sig = self.currents[u, b, cand.ap, cand.wavelength.index]
        if i_sig <= 0.0:
            return 0.0
        denom = self.sigma2[u, b]
        for other in others:
            if other.wavelength == cand.wavelength:
                denom += self.currents[u, b, other.ap, other.wavelength.index] ** 2
            elif self.crosstalk > 0.0:
                leak = self.crosstalk * self.currents[u, b, other.ap, other.wavelength.index]
                denom += leak * leak
        return float(i_sig * i_sig / denom)

    def score(self, cands: Sequence[Candidate]) -> float:
        total = 0.0
        for i, cand in enumerate(cands):
            lin = self.user_sinr_linear(cand, [c for j, c in enumerate(cands) if j != i])
            if lin <= 0.0:
                return float("-inf")
            total += 10.0 * math.log10(lin) if self.scale == "db" else lin
        return total


def candidates(
    user: int,
    table: GainTable,
    front_end: ReceiverFrontEnd = DEFAULT_FRONT_END,
    config: SolverConfig = SolverConfig(),
) -> list[Candidate]:
    """All positive-gain triples for a user, best interference-free SINR first."""
    ev = _Evaluator(table, front_end, "db")
    out = []
    for b in range(table.n_branches):
        for a in range(table.n_aps):
            for wl in WAVELENGTHS:
                if table.dc[user, b, a, wl.index] > 0.0:
                    cand = Candidate(user, a, b, wl, 0.0)
                    lin = ev.user_sinr_linear(cand, ())
                    if lin > 0.0:
                        out.append(replace(cand, iso_sinr_db=10.0 * math.log10(lin)))
    if not out:
        raise InfeasibleUserError(f"user {user} has no (AP, branch, wavelength) with positive gain")
    out.sort(key=lambda c: (-c.iso_sinr_db, c.key))
    return out[: config.k]


def objective(
    assignment: Assignment | Mapping[int, Candidate],
    table: GainTable,
    front_end: ReceiverFrontEnd = DEFAULT_FRONT_END,
    config: SolverConfig = SolverConfig(),
) -> float:
    """Exact objective: sum of link.sinr over users, on the configured scale."""
    entries = assignment.entries if isinstance(assignment, Assignment) else dict(assignment)
    total = 0.0
    for user in sorted(entries):  # fixed summation order, independent of dict order
        db = link_sinr(user, entries, table, front_end)
        if db == float("-inf"):
            return float("-inf")
        total += db if config.objective == "db" else 10.0 ** (db / 10.0)
    return total


def _finalize(
    picks: Sequence[Candidate],
    table: GainTable,
    front_end: ReceiverFrontEnd,
    config: SolverConfig,
    proven: bool,
) -> Assignment:
    entries = {c.user: c for c in picks}
    result = Assignment(
        entries=entries,
        objective_value=objective(entries, table, front_end, config) if entries else 0.0,
        objective_scale=config.objective,
        proven_optimal=proven,
    )
    result.validate()
    return result


def solve_exhaustive(
    users: Sequence[int],
    table: GainTable,
    front_end: ReceiverFrontEnd = DEFAULT_FRONT_END,
    config: SolverConfig = SolverConfig(),
) -> Assignment:
    """Globally optimal assignment by full enumeration (small instances only)."""
    users = list(users)
    if not users:
        return Assignment({}, 0.0, config.objective, True)
    cand_lists = [candidates(u, table, front_end, config) for u in users]
    space = 1.0
    for lst in cand_lists:
        space *= len(lst)
    if space > EXHAUSTIVE_SPACE_LIMIT:
        raise SearchSpaceLimitError(
            f"search space {space:.3g} exceeds the {EXHAUSTIVE_SPACE_LIMIT:.0g} limit"
        )
    ev = _Evaluator(table, front_end, config.objective)
    best_score = float("-inf")
    best: tuple[Candidate, ...] | None = None
    best_key: tuple | None = None
    for combo in itertools.product(*cand_lists):
        resources = set()
        ok = True
        for c in combo:
            if c.resource in resources:
                ok = False
                break
            resources.add(c.resource)
        if not ok:
            continue
        score = ev.score(combo)
        key = tuple(c.key for c in sorted(combo, key=lambda c: c.user))
        if score > best_score or (score == best_score and (best_key is None or key < best_key)):
            best_score, best, best_key = score, combo, key
    if best is None:
        raise InfeasibleUserError("no feasible assignment exists for the instance")
    return _finalize(best, table, front_end, config, proven=True)


def _first_feasible(order, idx, picks, used, cand_lists):
    """Depth-first search for any conflict-free completion, candidate order."""
    if idx == len(order):
        return dict(picks)
    u = order[idx]
    for c in cand_lists[u]:
        if c.resource in used:
            continue
        picks[u] = c
        used.add(c.resource)
        out = _first_feasible(order, idx + 1, picks, used, cand_lists)
        if out is not None:
            return out
        del picks[u]
        used.discard(c.resource)
    return None


def _greedy_construct(order, cand_lists, ev) -> dict[int, Candidate] | None:
    """Score-greedy placement; falls back to plain feasibility search on a
    dead end so a feasible instance never fails to produce an assignment."""
    picks: dict[int, Candidate] = {}
    used: set[tuple[int, int]] = set()
    for i, u in enumerate(order):
        best_c, best_s = None, float("-inf")
        placed = list(picks.values())
        for c in cand_lists[u]:
            if c.resource in used:
                continue
            s = ev.score(placed + [c])
            if s > best_s:
                best_c, best_s = c, s
        if best_c is None:
            return _first_feasible(order, i, picks, used, cand_lists)
        picks[u] = best_c
        used.add(best_c.resource)
    return picks


def _local_search(picks, order, cand_lists, ev) -> float:
    """Single-move, pairwise-swap and ejection-chain improvement, in place."""
    score_now = ev.score(list(picks.values()))
    improved = True
    rounds = 0
    while improved and rounds < 50:
        improved = False
        rounds += 1
        # single reassignments onto free resources
        for u in order:
            others = [picks[x] for x in order if x != u]
            taken = {c.resource for c in others}
            for c in cand_lists[u]:
                if c.resource in taken or c == picks[u]:
                    continue
                s = ev.score(others + [c])
                if s > score_now + 1e-12:
                    picks[u] = c
                    score_now = s
                    improved = True
        # pairwise joint reassignment
        for ua, ub in itertools.combinations(order, 2):
            rest = [picks[x] for x in order if x not in (ua, ub)]
            taken = {c.resource for c in rest}
            best_pair, best_s = (picks[ua], picks[ub]), score_now
            for ca in cand_lists[ua]:
                if ca.resource in taken:
                    continue
                for cb in cand_lists[ub]:
                    if cb.resource in taken or cb.resource == ca.resource:
                        continue
                    s = ev.score(rest + [ca, cb])
                    if s > best_s + 1e-12:
                        best_pair, best_s = (ca, cb), s
            if best_pair != (picks[ua], picks[ub]):
                picks[ua], picks[ub] = best_pair
                score_now = best_s
                improved = True
        # ejection chains: u takes a held resource, the displaced user relocates
        for u in order:
            holder_of = {picks[x].resource: x for x in order if x != u}
            others = {x: picks[x] for x in order if x != u}
            for c in cand_lists[u]:
                victim = holder_of.get(c.resource)
                if victim is None or c == picks[u]:
                    continue
                rest = [others[x] for x in order if x != u and x != victim]
                taken = {r.resource for r in rest} | {c.resource}
                for cv in cand_lists[victim]:
                    if cv.resource in taken:
                        continue
                    s = ev.score(rest + [c, cv])
                    if s > score_now + 1e-12:
                        picks[u], picks[victim] = c, cv
                        score_now = s
                        improved = True
                        holder_of = {picks[x].resource: x for x in order if x != u}
                        others = {x: picks[x] for x in order if x != u}
                        break
    return score_now


def solve_greedy(
    users: Sequence[int],
    table: GainTable,
    front_end: ReceiverFrontEnd = DEFAULT_FRONT_END,
    config: SolverConfig = SolverConfig(),
) -> Assignment:
    """Greedy construction plus local search, restarted over rotated orders."""
    users = list(users)
    if not users:
        return Assignment({}, 0.0, config.objective, True)
    cand_lists = {u: candidates(u, table, front_end, config) for u in users}
    ev = _Evaluator(table, front_end, config.objective)
    order = sorted(users, key=lambda u: (-cand_lists[u][0].iso_sinr_db, u))

    best_picks: dict[int, Candidate] | None = None
    best_score = float("-inf")
    best_key: tuple | None = None
    n_starts = min(len(order), 8)
    for shift in range(n_starts):
        start_order = order[shift:] + order[:shift]
        picks = _greedy_construct(start_order, cand_lists, ev)
        if picks is None:
            continue
        score = _local_search(picks, order, cand_lists, ev)
        key = tuple(picks[u].key for u in sorted(picks))
        if score > best_score or (score == best_score and (best_key is None or key < best_key)):
            best_picks, best_score, best_key = dict(picks), score, key
    if best_picks is None:
        best_picks = _first_feasible(order, 0, {}, set(), cand_lists)
        if best_picks is None:
            raise InfeasibleUserError("no conflict-free assignment exists for the instance")
        _local_search(best_picks, order, cand_lists, ev)
    return _finalize([best_picks[u] for u in order], table, front_end, config, proven=False)


def solve_exact(
    users: Sequence[int],
    table: GainTable,
    front_end: ReceiverFrontEnd = DEFAULT_FRONT_END,
    config: SolverConfig = SolverConfig(),
) -> Assignment:
    """Branch-and-bound over the exact objective with an admissible bound."""
    users = list(users)
    if not users:
        return Assignment({}, 0.0, config.objective, True)
    cand_lists = {u: candidates(u, table, front_end, config) for u in users}
    ev = _Evaluator(table, front_end, config.objective)
    order = sorted(users, key=lambda u: (-cand_lists[u][0].iso_sinr_db, u))
    start = time.monotonic()
    deadline = None if config.time_limit_s is None else start + config.time_limit_s

    # cheap single-start incumbent; branch-and-bound does the real work
    warm = _greedy_construct(order, cand_lists, ev)
    if warm is not None:
        _local_search(warm, order, cand_lists, ev)
        incumbent = [warm[u] for u in order]
        best_score = ev.score(incumbent)
        best_key = tuple(warm[u].key for u in sorted(warm))
    else:
        incumbent = None
        best_score = float("-inf")
        best_key = None

    def iso_value(db: float) -> float:
        return db if config.objective == "db" else 10.0 ** (db / 10.0)

    def remaining_bound(depth: int, used: set[tuple[int, int]]) -> float:
        total = 0.0
        for u in order[depth:]:
            best = None
            for c in cand_lists[u]:
                if c.resource not in used:
                    best = c.iso_sinr_db
                    break
            if best is None:
                return float("-inf")
            total += iso_value(best)
        return total

    timed_out = False

    def dfs(depth: int, placed: list[Candidate], used: set[tuple[int, int]]) -> None:
        nonlocal best_score, best_key, incumbent, timed_out
        if timed_out:
            return
        if deadline is not None and time.monotonic() > deadline:
            timed_out = True
            return
        if depth == len(order):
            score = ev.score(placed)
            key = tuple(c.key for c in sorted(placed, key=lambda c: c.user))
            if score > best_score or (score == best_score and (best_key is None or key < best_key)):
                best_score, best_key, incumbent = score, key, list(placed)
            return
        u = order[depth]
        for c in cand_lists[u]:
            if c.resource in used:
                continue
            placed.append(c)
            used.add(c.resource)
            bound = ev.score(placed) + remaining_bound(depth + 1, used)
            if bound >= best_score - _BOUND_SLACK:
                dfs(depth + 1, placed, used)
            placed.pop()
            used.discard(c.resource)

    dfs(0, [], set())
    if incumbent is None:
        raise InfeasibleUserError("no conflict-free assignment exists for the instance")
    return _finalize(incumbent, table, front_end, config, proven=not timed_out)


def assignment_csv_lines(assignment: Assignment) -> list[str]:
    """Rows mirroring the per-user allocation tables (1-based ids)."""
    lines = ["user,ap,branch,wavelength"]
    for user in sorted(assignment.entries):
        c = assignment.entries[user]
        lines.append(f"{user + 1},{c.ap + 1},{c.branch + 1},{c.wavelength.value}")
    return lines
