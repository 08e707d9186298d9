"""One-call learning passes that tie the stages together.

Feed a demonstration corpus in, get a runnable tree plus a report of what
the learner saw along the way: clusters, surviving ordering edges, goal
groups, expansion trace. The report is plain JSON so it can be stored as a
workspace artifact and shown in the console unchanged.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional

from .bt import BTNode, count_nodes, tree_digest, tree_from_doc, tree_to_doc
from .clustering import InferenceResult, infer
from .config import Config
from .demo import DemoCorpus, Demonstration
from .errors import BtteachError
from .inference import group_demos
from .planner import PlanResult, plan
from .workspace import ArtifactRef, Workspace


@contextmanager
def _stage(name: str):
    """Tag escaping errors with the pipeline stage they came from."""
    try:
        yield
    except BtteachError as exc:
        exc.stage = name
        raise


@dataclass
class LearnOutcome:
    tree: BTNode
    tree_doc: dict
    report: dict
    inference: InferenceResult
    groups: list
    result: PlanResult


def _group_summary(group, index: int) -> dict:
    return {
        "index": index,
        "demos": list(group.demo_ids),
        "goals": [c.describe() for c in group.goals],
        "edges": [list(e) for e in sorted(group.constraints.edges)],
        "dropped_symmetric": [list(e) for e in group.constraints.dropped_symmetric],
        "dropped_cyclic": [list(e) for e in group.constraints.dropped_cyclic],
        "propagation_skipped": [
            {"edge": list(edge), "post": post, "clash": clash}
            for edge, post, clash in group.propagation_skipped
        ],
    }


def learn_from_corpus(corpus: DemoCorpus, config: Optional[Config] = None) -> LearnOutcome:
    config = config or Config()
    with _stage("clustering"):
        inference = infer(corpus, config)
    with _stage("inference"):
        groups = group_demos(corpus, inference, config)
    with _stage("planning"):
        result = plan(groups, corpus, config)
    doc = tree_to_doc(result.tree)
    report = {
        "demos": [d.id for d in corpus],
        "actions": sorted(inference.registry),
        "nodes": count_nodes(result.tree),
        "expansions": result.expansions,
        "tree_digest": tree_digest(result.tree),
        "groups": [_group_summary(g, i) for i, g in enumerate(groups)],
        "clustering": inference.report,
        "trace": result.trace,
    }
    return LearnOutcome(
        tree=result.tree,
        tree_doc=doc,
        report=report,
        inference=inference,
        groups=groups,
        result=result,
    )


def learn_from_demos(demos: list, config: Optional[Config] = None) -> LearnOutcome:
    return learn_from_corpus(DemoCorpus(list(demos)), config)


@dataclass(frozen=True)
class SavedLearn:
    tree: ArtifactRef
    report: ArtifactRef


def save_learned(ws: Workspace, outcome: LearnOutcome, label: str = "") -> SavedLearn:
    """Store the tree and its report, cross-linked through index metadata.

    The tree artifact id is the digest prefix of the tree document itself,
    so any route that learned the same tree stores it under the same id.
    """
    tree_ref = ws.save(
        "trees",
        outcome.tree_doc,
        label=label,
        meta={"nodes": outcome.report["nodes"], "demos": outcome.report["demos"]},
    )
    report_ref = ws.save(
        "reports",
        {"type": "learn", "tree": tree_ref.id, "report": outcome.report},
        label=label,
        meta={"type": "learn", "tree": tree_ref.id},
    )
    return SavedLearn(tree=tree_ref, report=report_ref)


def load_tree(ws: Workspace, aid: str) -> BTNode:
    return tree_from_doc(ws.load("trees", aid))


def load_demos(ws: Workspace, ids: list) -> DemoCorpus:
    return DemoCorpus([Demonstration.from_json(ws.load("demos", aid)) for aid in ids])
