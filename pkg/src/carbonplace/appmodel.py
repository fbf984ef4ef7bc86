"""Microservice application DAGs: activation stages, critical paths, subtrees.

Applications are declared, not discovered: a JSON file lists services, call
edges and the frontend. Frontends and databases are structurally pinned to
the base region; everything else is a candidate for geo-distribution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

KIND_FRONTEND = "frontend"
KIND_DATABASE = "database"
KIND_COMPUTE = "compute"
VALID_KINDS = (KIND_FRONTEND, KIND_DATABASE, KIND_COMPUTE)


class AppValidationError(ValueError):
    """An application description violates a structural rule."""


@dataclass(frozen=True)
class Microservice:
    id: int
    name: str
    kind: str
    profile_key: str

    @property
    def structurally_pinned(self) -> bool:
        # Frontends stay near users, databases are bound by data sovereignty.
        return self.kind in (KIND_FRONTEND, KIND_DATABASE)


@dataclass(frozen=True)
class AppDag:
    nodes: tuple[Microservice, ...]
    edges: tuple[tuple[int, int], ...]
    frontend_id: int

    def __post_init__(self):
        _validate(self)

    @property
    def node_ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    def node(self, node_id: int) -> Microservice:
        return self._by_id[node_id]

    @property
    def _by_id(self) -> dict[int, Microservice]:
        by_id = self.__dict__.get("_by_id_cache")
        if by_id is None:
            by_id = {n.id: n for n in self.nodes}
            object.__setattr__(self, "_by_id_cache", by_id)
        return by_id

    def successors(self, node_id: int) -> list[int]:
        return self._adj[0].get(node_id, [])

    def predecessors(self, node_id: int) -> list[int]:
        return self._adj[1].get(node_id, [])

    @property
    def _adj(self):
        adj = self.__dict__.get("_adj_cache")
        if adj is None:
            succ: dict[int, list[int]] = {}
            pred: dict[int, list[int]] = {}
            for u, v in self.edges:
                succ.setdefault(u, []).append(v)
                pred.setdefault(v, []).append(u)
            for lst in succ.values():
                lst.sort()
            for lst in pred.values():
                lst.sort()
            adj = (succ, pred)
            object.__setattr__(self, "_adj_cache", adj)
        return adj

    def topological_order(self) -> list[int]:
        """Kahn's algorithm with a sorted frontier for determinism."""
        indeg = {n.id: 0 for n in self.nodes}
        for _, v in self.edges:
            indeg[v] += 1
        frontier = sorted(i for i, d in indeg.items() if d == 0)
        order: list[int] = []
        while frontier:
            u = frontier.pop(0)
            order.append(u)
            added = False
            for v in self.successors(u):
                indeg[v] -= 1
                if indeg[v] == 0:
                    frontier.append(v)
                    added = True
            if added:
                frontier.sort()
        return order

    def sinks(self) -> list[int]:
        succ = self._adj[0]
        return [n.id for n in self.nodes if not succ.get(n.id)]

    def sink_owner(self, sink_id: int) -> int:
        """Service whose region the response returns from.

        Database leaves are folded-in access nodes, so the return hop is
        charged from their owning service; any other sink owns itself.
        """
        node = self.node(sink_id)
        if node.kind == KIND_DATABASE:
            preds = self.predecessors(sink_id)
            if preds:
                return preds[0]
        return sink_id

    def descendants(self, node_id: int) -> set[int]:
        seen: set[int] = set()
        stack = list(self.successors(node_id))
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            stack.extend(self.successors(u))
        return seen

    def movable_ids(self) -> list[int]:
        return [n.id for n in self.nodes if not n.structurally_pinned]


@dataclass(frozen=True)
class ActivationSchedule:
    stages: tuple[frozenset[int], ...]
    stage_of: dict[int, int]


@dataclass(frozen=True)
class SubtreeSpec:
    root_id: int
    member_ids: frozenset[int]


def _validate(dag: AppDag) -> None:
    ids = [n.id for n in dag.nodes]
    if len(set(ids)) != len(ids):
        raise AppValidationError("duplicate microservice ids")
    id_set = set(ids)
    for n in dag.nodes:
        if n.id < 0:
            raise AppValidationError(f"negative id {n.id}")
        if n.kind not in VALID_KINDS:
            raise AppValidationError(f"unknown kind {n.kind!r} for service {n.id}")
    for u, v in dag.edges:
        if u not in id_set or v not in id_set:
            raise AppValidationError(f"edge ({u}, {v}) references unknown service")
        if u == v:
            raise AppValidationError(f"self edge on service {u}")

    frontends = [n for n in dag.nodes if n.kind == KIND_FRONTEND]
    if len(frontends) != 1:
        raise AppValidationError(f"expected exactly one frontend, found {len(frontends)}")
    if frontends[0].id != dag.frontend_id:
        raise AppValidationError("frontend_id does not match the frontend service")
    if any(v == dag.frontend_id for _, v in dag.edges):
        raise AppValidationError("frontend must not have incoming edges")

    by_id = {n.id: n for n in dag.nodes}
    for u, v in dag.edges:
        if by_id[u].kind == KIND_DATABASE and by_id[v].kind != KIND_DATABASE:
            raise AppValidationError(f"database {u} has an outgoing edge to non-database {v}")

    if len(dag.topological_order()) != len(dag.nodes):
        raise AppValidationError("dependency cycle detected")

    reach = {dag.frontend_id} | dag.descendants(dag.frontend_id)
    unreachable = id_set - reach
    if unreachable:
        raise AppValidationError(f"services unreachable from frontend: {sorted(unreachable)}")


def load_app(path) -> AppDag:
    """Load and validate an application description file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise AppValidationError(f"cannot parse {path}: {exc}") from exc
    try:
        nodes = tuple(
            Microservice(
                id=int(s["id"]),
                name=str(s["name"]),
                kind=str(s["kind"]),
                profile_key=str(s.get("profile_key", s["name"])),
            )
            for s in raw["services"]
        )
        edges = tuple((int(u), int(v)) for u, v in raw["edges"])
        frontend = int(raw["frontend"])
    except (KeyError, TypeError, ValueError) as exc:
        raise AppValidationError(f"malformed application file {path}: {exc}") from exc
    return AppDag(nodes=nodes, edges=edges, frontend_id=frontend)


def activation_stages(dag: AppDag) -> ActivationSchedule:
    """Longest-path levelization: stage(v) = 1 + max stage over predecessors.

    The frontend sits at stage 0. Later stages depend on earlier ones, which
    is what makes late-activated services expensive to move.
    """
    stage_of: dict[int, int] = {}
    for u in dag.topological_order():
        preds = dag.predecessors(u)
        stage_of[u] = 1 + max(stage_of[p] for p in preds) if preds else 0
    n_stages = max(stage_of.values()) + 1
    stages = [set() for _ in range(n_stages)]
    for node_id, s in stage_of.items():
        stages[s].add(node_id)
    return ActivationSchedule(
        stages=tuple(frozenset(s) for s in stages),
        stage_of=stage_of,
    )


def structural_critical_path(dag: AppDag, node_weights: dict[int, float]) -> tuple[list[int], float]:
    """Maximum-weight root-to-sink path; ties go to the smallest id sequence."""
    missing = [n.id for n in dag.nodes if n.id not in node_weights]
    if missing:
        raise KeyError(f"missing weight for services {missing}")
    best: dict[int, tuple[float, tuple[int, ...]]] = {}
    for u in dag.topological_order():
        preds = dag.predecessors(u)
        if not preds:
            best[u] = (node_weights[u], (u,))
            continue
        cands = [best[p] for p in preds]
        top = max(c[0] for c in cands)
        path = min(c[1] for c in cands if c[0] == top)
        best[u] = (top + node_weights[u], path + (u,))
    sink_best = [best[s] for s in dag.sinks()]
    top = max(c[0] for c in sink_best)
    path = min(c[1] for c in sink_best if c[0] == top)
    return list(path), top


def subtree(dag: AppDag, root_id: int) -> SubtreeSpec:
    """Descendant closure of root_id minus structurally pinned services."""
    if root_id not in dag._by_id:
        raise KeyError(f"unknown service id {root_id}")
    if dag.node(root_id).structurally_pinned:
        raise AppValidationError(f"service {root_id} is structurally pinned")
    members = {root_id} | {
        d for d in dag.descendants(root_id) if not dag.node(d).structurally_pinned
    }
    return SubtreeSpec(root_id=root_id, member_ids=frozenset(members))
