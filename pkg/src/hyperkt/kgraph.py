"""Heterogeneous question/concept graph and Gromov tree-likeness measures.

Questions link to their concepts; concepts link to strictly higher-level
concepts when they co-occur on a question or a teacher emitted an explicit
dependency. Four undirected views (all / question-concept / question-question /
concept-concept) feed the four-point-condition hyperbolicity estimate.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np

from .errors import GraphBuildError, HyperbolicityError

VIEW_NAMES = ("all", "ek", "e", "k")


@dataclass
class ConceptNode:
    id: str
    name: str
    level: int

    def __post_init__(self):
        if self.level not in (1, 2, 3, 4):
            raise GraphBuildError(f"concept {self.id!r}: level {self.level} outside {{1,2,3,4}}")


@dataclass
class QuestionNode:
    id: str
    text: str
    difficulty: float
    concept_ids: list[str]

    def __post_init__(self):
        if not 0.0 <= self.difficulty <= 1.0:
            raise GraphBuildError(f"question {self.id!r}: difficulty {self.difficulty} outside [0,1]")
        if not self.concept_ids:
            raise GraphBuildError(f"question {self.id!r}: empty concept list")


@dataclass
class HierarchyPolicy:
    """How concept->concept hierarchy edges are generated.

    Lower-level concepts connect to strictly higher-level ones, but only when
    they co-occur on a question or appear as an explicit teacher dependency;
    linking every level-ordered pair would densify the graph and destroy the
    tree-likeness the hyperbolic embedding relies on.
    """

    dependencies: list[tuple[str, str]] = field(default_factory=list)
    link_co_occurring: bool = True


@dataclass
class KnowledgeGraph:
    concepts: dict[str, ConceptNode]
    questions: dict[str, QuestionNode]
    edges_qc: list[tuple[str, str]]
    edges_hie: list[tuple[str, str]]
    students: list[str] = field(default_factory=list)
    edges_sq: list[tuple[str, str]] = field(default_factory=list)

    @property
    def concept_ids(self) -> list[str]:
        return sorted(self.concepts)

    @property
    def question_ids(self) -> list[str]:
        return sorted(self.questions)


def build_graph(
    questions: list[QuestionNode],
    concepts: list[ConceptNode],
    policy: HierarchyPolicy | None = None,
) -> KnowledgeGraph:
    policy = policy or HierarchyPolicy()

    concept_map: dict[str, ConceptNode] = {}
    for c in concepts:
        if c.id in concept_map:
            raise GraphBuildError(f"duplicate concept id {c.id!r}")
        concept_map[c.id] = c
    question_map: dict[str, QuestionNode] = {}
    for q in questions:
        if q.id in question_map:
            raise GraphBuildError(f"duplicate question id {q.id!r}")
        question_map[q.id] = q

    dangling = sorted({cid for q in questions for cid in q.concept_ids if cid not in concept_map})
    if dangling:
        raise GraphBuildError(f"questions reference unknown concepts: {dangling}")

    edges_qc = sorted({(q.id, cid) for q in questions for cid in q.concept_ids})

    candidate_pairs: set[tuple[str, str]] = set()
    if policy.link_co_occurring:
        for q in questions:
            for a, b in itertools.combinations(sorted(set(q.concept_ids)), 2):
                candidate_pairs.add((a, b))
                candidate_pairs.add((b, a))
    for parent, child in policy.dependencies:
        if parent not in concept_map or child not in concept_map:
            raise GraphBuildError(f"dependency ({parent!r}, {child!r}) references unknown concept")
        candidate_pairs.add((parent, child))

    edges_hie = sorted(
        (a, b)
        for a, b in candidate_pairs
        if concept_map[a].level < concept_map[b].level
    )

    return KnowledgeGraph(
        concepts=concept_map,
        questions=question_map,
        edges_qc=edges_qc,
        edges_hie=edges_hie,
    )


def attach_students(graph: KnowledgeGraph, interactions: list[tuple[str, str]]) -> None:
    """Add student nodes with student-question incidence for the 'all' view."""
    pairs = sorted({(s, q) for s, q in interactions if q in graph.questions})
    graph.students = sorted({s for s, _ in pairs})
    graph.edges_sq = pairs


# ---------------------------------------------------------------------------
# Views

def graph_views(g: KnowledgeGraph) -> dict[str, nx.Graph]:
    """The four simple undirected views used for hyperbolicity measurement."""
    qc = [(f"q:{a}", f"c:{b}") for a, b in g.edges_qc]
    hie = [(f"c:{a}", f"c:{b}") for a, b in g.edges_hie]
    sq = [(f"s:{a}", f"q:{b}") for a, b in g.edges_sq]

    ek = nx.Graph()
    ek.add_nodes_from(f"q:{q}" for q in g.question_ids)
    ek.add_nodes_from(f"c:{c}" for c in g.concept_ids)
    ek.add_edges_from(qc)
    ek.add_edges_from(hie)

    full = ek.copy()
    full.add_nodes_from(f"s:{s}" for s in g.students)
    full.add_edges_from(sq)

    qq = nx.Graph()
    qq.add_nodes_from(f"q:{q}" for q in g.question_ids)
    by_concept: dict[str, list[str]] = {}
    for q, c in g.edges_qc:
        by_concept.setdefault(c, []).append(q)
    for members in by_concept.values():
        for a, b in itertools.combinations(sorted(members), 2):
            qq.add_edge(f"q:{a}", f"q:{b}")

    kk = nx.Graph()
    kk.add_nodes_from(f"c:{c}" for c in g.concept_ids)
    kk.add_edges_from(hie)

    return {"all": full, "ek": ek, "e": qq, "k": kk}


# ---------------------------------------------------------------------------
# Gromov four-point hyperbolicity

@dataclass
class GromovResult:
    delta: float
    diameter: float
    normalized: float
    nodes: int
    mode: str  # "exhaustive" | "sampled"


def _four_point(d: dict, a, b, c, e) -> float:
    s = sorted((d[a][b] + d[c][e], d[a][c] + d[b][e], d[a][e] + d[b][c]))
    return (s[2] - s[1]) / 2.0


EXHAUSTIVE_LIMIT = 30  # C(30,4) ~ 27k quadruples stays sub-second


def gromov_delta(
    view: nx.Graph, sample_size: int = 2000, seed: int = 0, mode: str | None = None
) -> GromovResult:
    """Worst-case four-point defect over quadruples, with BFS unit distances.

    ``mode`` overrides the size-based exhaustive/sampled selection.
    """
    if view.number_of_nodes() < 4:
        raise HyperbolicityError(f"need at least 4 nodes, got {view.number_of_nodes()}")
    if nx.is_connected(view):
        component = view
    else:
        largest = max(nx.connected_components(view), key=lambda comp: (len(comp), sorted(comp)))
        component = view.subgraph(largest)
        if component.number_of_nodes() < 4:
            raise HyperbolicityError("largest connected component has fewer than 4 nodes")

    nodes = sorted(component.nodes())
    dist = {u: d for u, d in nx.all_pairs_shortest_path_length(component)}
    diameter = max(max(row.values()) for row in dist.values())

    n = len(nodes)
    delta = 0.0
    if mode is None:
        mode = "exhaustive" if n <= EXHAUSTIVE_LIMIT else "sampled"
    if mode == "exhaustive":
        for quad in itertools.combinations(nodes, 4):
            delta = max(delta, _four_point(dist, *quad))
    elif mode == "sampled":
        rng = np.random.default_rng(seed)
        for _ in range(sample_size):
            idx = rng.choice(n, size=4, replace=False)
            delta = max(delta, _four_point(dist, *(nodes[i] for i in idx)))
    else:
        raise HyperbolicityError(f"unknown mode {mode!r}")

    return GromovResult(
        delta=delta,
        diameter=float(diameter),
        normalized=delta / diameter if diameter > 0 else 0.0,
        nodes=n,
        mode=mode,
    )


def hyperbolicity_report(g: KnowledgeGraph, sample_size: int = 2000, seed: int = 0) -> dict[str, GromovResult]:
    """Per-view hyperbolicity table over the all/ek/e/k views."""
    out = {}
    for name, view in graph_views(g).items():
        try:
            out[name] = gromov_delta(view, sample_size=sample_size, seed=seed)
        except HyperbolicityError:
            out[name] = None
    return out


# ---------------------------------------------------------------------------
# JSON-lines serialization: node records {kind, id, name, level?, difficulty?},
# edge records {kind, src, dst}.

def save_graph(g: KnowledgeGraph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cid in g.concept_ids:
            c = g.concepts[cid]
            fh.write(json.dumps({"kind": "concept", "id": c.id, "name": c.name, "level": c.level}) + "\n")
        for qid in g.question_ids:
            q = g.questions[qid]
            fh.write(json.dumps({"kind": "question", "id": q.id, "name": "", "difficulty": q.difficulty}) + "\n")
        for s in g.students:
            fh.write(json.dumps({"kind": "student", "id": s, "name": ""}) + "\n")
        for a, b in g.edges_qc:
            fh.write(json.dumps({"kind": "qc", "src": a, "dst": b}) + "\n")
        for a, b in g.edges_hie:
            fh.write(json.dumps({"kind": "hie", "src": a, "dst": b}) + "\n")
        for a, b in g.edges_sq:
            fh.write(json.dumps({"kind": "sq", "src": a, "dst": b}) + "\n")


def load_graph(path: str | Path) -> KnowledgeGraph:
    concepts: dict[str, ConceptNode] = {}
    raw_questions: dict[str, float] = {}
    students: list[str] = []
    edges_qc: list[tuple[str, str]] = []
    edges_hie: list[tuple[str, str]] = []
    edges_sq: list[tuple[str, str]] = []

    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GraphBuildError(f"{path}:{line_no}: invalid JSON ({exc})") from exc
            kind = rec.get("kind")
            if kind == "concept":
                concepts[rec["id"]] = ConceptNode(rec["id"], rec.get("name", ""), int(rec["level"]))
            elif kind == "question":
                raw_questions[rec["id"]] = float(rec.get("difficulty", 0.0))
            elif kind == "student":
                students.append(rec["id"])
            elif kind == "qc":
                edges_qc.append((rec["src"], rec["dst"]))
            elif kind == "hie":
                edges_hie.append((rec["src"], rec["dst"]))
            elif kind == "sq":
                edges_sq.append((rec["src"], rec["dst"]))
            else:
                raise GraphBuildError(f"{path}:{line_no}: unknown record kind {kind!r}")

    concept_lists: dict[str, list[str]] = {q: [] for q in raw_questions}
    for qid, cid in edges_qc:
        if qid not in concept_lists:
            raise GraphBuildError(f"qc edge references unknown question {qid!r}")
        concept_lists[qid].append(cid)
    questions = {
        qid: QuestionNode(qid, "", diff, sorted(set(concept_lists[qid])))
        for qid, diff in raw_questions.items()
    }

    graph = KnowledgeGraph(
        concepts=concepts,
        questions=questions,
        edges_qc=sorted(set(edges_qc)),
        edges_hie=sorted(set(edges_hie)),
        students=sorted(set(students)),
        edges_sq=sorted(set(edges_sq)),
    )
    _validate(graph)
    return graph


def _validate(g: KnowledgeGraph) -> None:
    for a, b in g.edges_hie:
        if a not in g.concepts or b not in g.concepts:
            raise GraphBuildError(f"hie edge ({a!r}, {b!r}) references unknown concept")
        if not g.concepts[a].level < g.concepts[b].level:
            raise GraphBuildError(f"hie edge ({a!r}, {b!r}) violates strict level ordering")
    for q, c in g.edges_qc:
        if c not in g.concepts:
            raise GraphBuildError(f"qc edge references unknown concept {c!r}")
