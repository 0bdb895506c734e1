"""Explicit-state exploration and verification.

Breadth-first enumeration of (model, configuration) pairs.  Models may change
mid-run through rule-carried changesets, so states are interned by model
content, not only by the version stamp; two configurations that differ only
in model version are distinct states.

The seen-set is digest-then-compare: a stable 64-bit fingerprint buckets
states and a full comparison resolves collisions.  Exploration is
deterministic; the optional worker pool only parallelizes successor
computation within one BFS layer and merges results in layer order, so
reports are identical to the single-threaded run byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .changeset import canonical_model
from .engine import (
    StepLabel,
    Trace,
    acts_on,
    config_digest,
    label_sort_key,
    label_text,
    label_to_json,
    successors,
)
from .model import Configuration, StdModel, validate_configuration
from .properties import (
    EventuallyAll,
    Invariant,
    PropertyExpr,
    Reachable,
    eval_predicate,
)


@dataclass(frozen=True)
class Bounds:
    max_states: int = 1_000_000
    max_depth: int = 10_000


@dataclass
class Space:
    """The explored fragment of the state space."""

    models: list[StdModel] = field(default_factory=list)
    model_keys: dict = field(default_factory=dict)  # canonical model -> index
    configs: list[Configuration] = field(default_factory=list)
    model_of: list[int] = field(default_factory=list)
    depth: list[int] = field(default_factory=list)
    parent: list[Optional[tuple[int, StepLabel]]] = field(default_factory=list)
    edges: list[tuple[int, StepLabel, int]] = field(default_factory=list)
    deadlocks: list[int] = field(default_factory=list)
    seen: dict[int, list[tuple[tuple, int]]] = field(default_factory=dict)
    max_states_hit: bool = False
    max_depth_hit: bool = False

    def state_count(self) -> int:
        return len(self.configs)

    def versions_seen(self) -> list[int]:
        return sorted({c.model_version for c in self.configs})

    def adjacency(self) -> list[list[tuple[StepLabel, int]]]:
        out: list[list[tuple[StepLabel, int]]] = [[] for _ in range(len(self.configs))]
        for src, label, dst in self.edges:
            out[src].append((label, dst))
        return out

    def reverse_adjacency(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(len(self.configs))]
        for src, _, dst in self.edges:
            out[dst].append(src)
        return out

    def trace_to(self, state: int) -> Trace:
        """Shortest trace from the exploration root, by BFS construction."""
        labels: list[StepLabel] = []
        digests: list[int] = []
        at = state
        while self.parent[at] is not None:
            prev, label = self.parent[at]
            labels.append(label)
            digests.append(config_digest(self.configs[at]))
            at = prev
        labels.reverse()
        digests.reverse()
        return Trace(
            initial=self.configs[at],
            steps=tuple(zip(labels, digests)),
            final_model_version=self.configs[state].model_version,
        )

    def trace_records(self, state: int) -> list[dict]:
        """JSON-lines-style records of the trace to a state."""
        path = [state]
        while self.parent[path[-1]] is not None:
            path.append(self.parent[path[-1]][0])
        path.reverse()
        records = []
        for i, idx in enumerate(path):
            config = self.configs[idx]
            label = self.parent[idx][1] if i > 0 else None
            records.append(
                {
                    "index": i,
                    "label": label_to_json(label),
                    "componentStates": dict(sorted(config.detailed.items())),
                    "rolePhases": {f"{c}.{p}": ph for (c, p), ph in sorted(config.phases.items())},
                    "modelVersion": config.model_version,
                    "digest": f"{config_digest(config):016x}",
                }
            )
        return records


def _model_index(space: Space, model: StdModel) -> int:
    key = canonical_model(model)
    idx = space.model_keys.get(key)
    if idx is None:
        idx = len(space.models)
        space.models.append(model)
        space.model_keys[key] = idx
    return idx


def _state_fingerprint(model_idx: int, config: Configuration) -> int:
    payload = repr((model_idx, config.key())).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def _intern_state(space: Space, model: StdModel, config: Configuration,
                  depth: int, parent: Optional[tuple[int, StepLabel]]) -> tuple[int, bool]:
    model_idx = _model_index(space, model)
    key = (model_idx, config.key())
    digest = _state_fingerprint(model_idx, config)
    bucket = space.seen.setdefault(digest, [])
    for existing_key, idx in bucket:
        if existing_key == key:
            return idx, False
    idx = len(space.configs)
    bucket.append((key, idx))
    space.configs.append(config)
    space.model_of.append(model_idx)
    space.depth.append(depth)
    space.parent.append(parent)
    return idx, True


def explore_space(
    model: StdModel,
    initial: Configuration,
    bounds: Bounds = Bounds(),
    exclude: Optional[Callable[[StepLabel], bool]] = None,
    workers: int = 1,
) -> Space:
    """Breadth-first reachability; the reusable core of every check."""
    space = Space()
    root, _ = _intern_state(space, model, initial, 0, None)
    frontier = [root]
    depth = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while frontier:
            if depth >= bounds.max_depth:
                space.max_depth_hit = True
                break

            def expand(idx: int):
                succ = successors(space.models[space.model_of[idx]], space.configs[idx])
                if exclude is not None:
                    succ = [s for s in succ if not exclude(s[0])]
                return succ

            if pool is not None:
                chunks = list(pool.map(expand, frontier))
            else:
                chunks = [expand(idx) for idx in frontier]

            next_frontier: list[int] = []
            for idx, succ in zip(frontier, chunks):
                if not succ:
                    space.deadlocks.append(idx)
                    continue
                for label, nxt_model, nxt_config in succ:
                    if space.state_count() >= bounds.max_states:
                        space.max_states_hit = True
                        break
                    dst, fresh = _intern_state(
                        space, nxt_model, nxt_config, depth + 1, (idx, label)
                    )
                    space.edges.append((idx, label, dst))
                    if fresh:
                        next_frontier.append(dst)
                if space.max_states_hit:
                    break
            if space.max_states_hit:
                break
            frontier = next_frontier
            depth += 1
    finally:
        if pool is not None:
            pool.shutdown()
    return space


@dataclass
class PropertyVerdict:
    prop: PropertyExpr
    verdict: str  # holds | violated | satisfied | not-reachable | unknown(bound)
    witness: Optional[int] = None  # state index


@dataclass
class ExplorationReport:
    states_visited: int
    transitions_visited: int
    model_versions_seen: list[int]
    violations: list[tuple[str, list[dict]]]  # (property text, trace records)
    deadlocks: list[list[dict]]
    verdicts: list[tuple[str, str]]  # (property text, verdict)
    bounds: Bounds
    max_states_hit: bool
    max_depth_hit: bool

    def ok(self) -> bool:
        return not self.violations

    def unknown(self) -> bool:
        return any(v.startswith("unknown") for _, v in self.verdicts)

    def to_json(self) -> str:
        doc = {
            "statesVisited": self.states_visited,
            "transitionsVisited": self.transitions_visited,
            "modelVersionsSeen": self.model_versions_seen,
            "violations": [
                {"property": prop, "trace": records} for prop, records in self.violations
            ],
            "deadlocks": self.deadlocks,
            "properties": [
                {"property": prop, "verdict": verdict} for prop, verdict in self.verdicts
            ],
            "bounds": {
                "maxStates": self.bounds.max_states,
                "maxDepth": self.bounds.max_depth,
                "maxStatesHit": self.max_states_hit,
                "maxDepthHit": self.max_depth_hit,
            },
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _within_bound_to_targets(space: Space, targets: Sequence[int]) -> list[int]:
    """Forward distance from every state to the nearest target, computed as a
    backward BFS over the explored edges; -1 when unreachable."""
    dist = [-1] * space.state_count()
    frontier = []
    for t in targets:
        if dist[t] == -1:
            dist[t] = 0
            frontier.append(t)
    rev = space.reverse_adjacency()
    d = 0
    while frontier:
        d += 1
        nxt = []
        for state in frontier:
            for prev in rev[state]:
                if dist[prev] == -1:
                    dist[prev] = d
                    nxt.append(prev)
        frontier = nxt
    return dist


def _sorted_violations(items: list[tuple[str, int, Space]]) -> list[tuple[str, list[dict]]]:
    def sort_key(item):
        prop, state, space = item
        trace = space.trace_to(state)
        return (len(trace.steps), [label_text(l) for l in trace.labels()], prop)

    return [(prop, space.trace_records(state)) for prop, state, space in sorted(items, key=sort_key)]


def explore(
    model: StdModel,
    initial: Configuration,
    properties: Sequence[PropertyExpr] = (),
    bounds: Bounds = Bounds(),
    workers: int = 1,
) -> ExplorationReport:
    """Enumerate reachable states, validating every one, and check properties.

    Invariants are checked at each state (counterexamples are BFS-shortest);
    reachable properties are satisfied on the first witness; eventuallyAll
    properties require that from every reachable state some satisfying state
    remains reachable within the stated step bound.
    """
    space = explore_space(model, initial, bounds, workers=workers)
    exhaustive = not (space.max_states_hit or space.max_depth_hit)
    pending_violations: list[tuple[str, int, Space]] = []
    verdicts: list[tuple[str, str]] = []

    for idx in range(space.state_count()):
        bad = validate_configuration(space.models[space.model_of[idx]], space.configs[idx])
        if bad:
            pending_violations.append(("configuration-valid", idx, space))
            break  # one witness suffices; the engine asserts this never happens

    for prop in properties:
        if isinstance(prop, Invariant):
            witness = next(
                (
                    idx
                    for idx in range(space.state_count())
                    if not eval_predicate(
                        prop.predicate, space.models[space.model_of[idx]], space.configs[idx]
                    )
                ),
                None,
            )
            if witness is not None:
                pending_violations.append((prop.text(), witness, space))
                verdicts.append((prop.text(), "violated"))
            else:
                verdicts.append((prop.text(), "holds" if exhaustive else "unknown(bound)"))
        elif isinstance(prop, Reachable):
            witness = next(
                (
                    idx
                    for idx in range(space.state_count())
                    if eval_predicate(
                        prop.predicate, space.models[space.model_of[idx]], space.configs[idx]
                    )
                ),
                None,
            )
            if witness is not None:
                verdicts.append((prop.text(), "satisfied"))
            elif exhaustive:
                verdicts.append((prop.text(), "not-reachable"))
                pending_violations.append((prop.text(), 0, space))
            else:
                verdicts.append((prop.text(), "unknown(bound)"))
        elif isinstance(prop, EventuallyAll):
            if not exhaustive:
                # missing edges can only over-estimate distances, so nothing
                # is provable on a truncated graph
                verdicts.append((prop.text(), "unknown(bound)"))
                continue
            targets = [
                idx
                for idx in range(space.state_count())
                if eval_predicate(
                    prop.predicate, space.models[space.model_of[idx]], space.configs[idx]
                )
            ]
            dist = _within_bound_to_targets(space, targets)
            worst = None
            for idx in range(space.state_count()):
                if dist[idx] == -1 or dist[idx] > prop.bound:
                    worst = idx
                    break
            if worst is not None:
                verdicts.append((prop.text(), "violated"))
                pending_violations.append((prop.text(), worst, space))
            else:
                verdicts.append((prop.text(), "holds"))

    return ExplorationReport(
        states_visited=space.state_count(),
        transitions_visited=len(space.edges),
        model_versions_seen=space.versions_seen(),
        violations=_sorted_violations(pending_violations),
        deadlocks=[space.trace_records(idx) for idx in sorted(space.deadlocks)],
        verdicts=verdicts,
        bounds=bounds,
        max_states_hit=space.max_states_hit,
        max_depth_hit=space.max_depth_hit,
    )


@dataclass
class InvariantResult:
    verdict: str  # satisfied | violated | unknown(bound)
    counterexample: Optional[Trace] = None


def check_invariant(
    model: StdModel, initial: Configuration, predicate, bounds: Bounds = Bounds()
) -> InvariantResult:
    """BFS-shortest counterexample to `invariant predicate`, if any."""
    space = explore_space(model, initial, bounds)
    for idx in range(space.state_count()):
        if not eval_predicate(predicate, space.models[space.model_of[idx]], space.configs[idx]):
            return InvariantResult("violated", space.trace_to(idx))
    if space.max_states_hit or space.max_depth_hit:
        return InvariantResult("unknown(bound)")
    return InvariantResult("satisfied")


@dataclass
class TerminationResult:
    verdict: str  # terminates | stuck | cycle | unknown(bound)
    max_depth: Optional[int] = None
    witness: Optional[Trace] = None


def check_migration_termination(
    model: StdModel,
    initial: Configuration,
    target_version: int,
    bound: int = 10_000,
    mcpal: str = "McPal",
    hibernation_state: str = "Observing",
    evolution_role: str = "Evol",
    hibernating_phase: str = "Hibernating",
) -> TerminationResult:
    """Verify that the migration always remains completable.

    Completion means: model version equals the target and the coordinator is
    back in hibernation.  Free-running components make "all interleavings
    finish in N steps" unsatisfiable for any N (a scheduler may simply never
    pick the coordinator), so the mechanized reading is: no deadlock occurs
    before completion, and from every reachable state a completion state is
    still reachable.  The reported depth is the largest distance any
    reachable state has to its nearest completion state.

    A deadlocked incomplete state yields a `stuck` witness; a region from
    which completion is unreachable yields a `cycle` witness (a lasso that
    avoids completion forever).
    """
    space = explore_space(model, initial, Bounds(max_depth=bound))

    def complete(idx: int) -> bool:
        config = space.configs[idx]
        return (
            config.model_version == target_version
            and config.detailed.get(mcpal) == hibernation_state
            and config.phases.get((mcpal, evolution_role)) == hibernating_phase
        )

    targets = [idx for idx in range(space.state_count()) if complete(idx)]
    for idx in sorted(space.deadlocks):
        if not complete(idx):
            return TerminationResult("stuck", witness=space.trace_to(idx))
    if space.max_states_hit or space.max_depth_hit:
        return TerminationResult("unknown(bound)")
    dist = _within_bound_to_targets(space, targets)
    doomed = next((idx for idx in range(space.state_count()) if dist[idx] == -1), None)
    if doomed is not None:
        # Every successor of a completion-unreachable state is itself
        # completion-unreachable, and none deadlocks (handled above), so a
        # lasso exists inside the doomed region; extend the stem into it
        # until a state repeats.
        adjacency = space.adjacency()
        stem = space.trace_to(doomed)
        steps = list(stem.steps)
        seen_on_loop = {doomed}
        at = doomed
        while True:
            label, nxt = sorted(adjacency[at], key=lambda e: label_sort_key(e[0]))[0]
            steps.append((label, config_digest(space.configs[nxt])))
            if nxt in seen_on_loop:
                break
            seen_on_loop.add(nxt)
            at = nxt
        witness = Trace(
            initial=stem.initial,
            steps=tuple(steps),
            final_model_version=space.configs[nxt].model_version,
        )
        return TerminationResult("cycle", witness=witness)
    max_depth = max(dist) if dist else 0
    return TerminationResult("terminates", max_depth=max_depth)


@dataclass
class ProgressResult:
    verdict: str  # satisfied | starved | unknown(bound)
    starved: Optional[Configuration] = None
    witness: Optional[Trace] = None


def check_progress(
    model: StdModel,
    initial: Configuration,
    component: str,
    k: int,
    bounds: Bounds = Bounds(),
    within=None,
) -> ProgressResult:
    """Bounded non-starvation: from every reachable state some continuation of
    at most k steps contains the component's own move (a detailed step, or a
    rule firing it manages).  Returns the first reachable state, in BFS
    order, from which no such continuation exists.

    `within`, when given, is a predicate restricting which reachable states
    are held to the obligation (e.g. only states inside a migration window);
    continuations may still run through any state."""
    space = explore_space(model, initial, bounds)
    sources = sorted(
        {src for src, label, _ in space.edges if acts_on(label, component)}
    )
    dist = _within_bound_to_targets(space, sources)
    for idx in range(space.state_count()):
        if within is not None and not eval_predicate(
            within, space.models[space.model_of[idx]], space.configs[idx]
        ):
            continue
        if dist[idx] == -1 or dist[idx] + 1 > k:
            return ProgressResult(
                "starved", starved=space.configs[idx], witness=space.trace_to(idx)
            )
    if space.max_states_hit or space.max_depth_hit:
        return ProgressResult("unknown(bound)")
    return ProgressResult("satisfied")


def minimal_progress_bound(
    model: StdModel, initial: Configuration, component: str, bounds: Bounds = Bounds()
) -> Optional[int]:
    """Smallest k for which check_progress is satisfied; None if starved at
    every bound (some state never leads to a move of the component)."""
    space = explore_space(model, initial, bounds)
    sources = {src for src, label, _ in space.edges if acts_on(label, component)}
    dist = _within_bound_to_targets(space, sorted(sources))
    if any(d == -1 for d in dist):
        return None
    return max(d + 1 for d in dist) if dist else None


def shortest_trace_to(
    model: StdModel, initial: Configuration, predicate, bounds: Bounds = Bounds()
) -> Optional[Trace]:
    """BFS-shortest trace to a state satisfying the predicate; None if none
    is reachable within bounds."""
    space = explore_space(model, initial, bounds)
    for idx in range(space.state_count()):
        if eval_predicate(predicate, space.models[space.model_of[idx]], space.configs[idx]):
            return space.trace_to(idx)
    return None


def reachable_projection(
    model: StdModel,
    initial: Configuration,
    components: Sequence[str],
    exclude: Optional[Callable[[StepLabel], bool]] = None,
    bounds: Bounds = Bounds(),
) -> frozenset:
    """Reachable configurations projected onto the given components: the
    census used to show a woven coordinator leaves host behavior untouched."""
    keep = set(components)
    space = explore_space(model, initial, bounds, exclude=exclude)
    out = set()
    for config in space.configs:
        detailed = tuple(sorted((c, s) for c, s in config.detailed.items() if c in keep))
        phases = tuple(sorted((f"{c}.{p}", ph) for (c, p), ph in config.phases.items() if c in keep))
        out.add((detailed, phases))
    return frozenset(out)
