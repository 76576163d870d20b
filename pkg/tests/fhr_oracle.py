"""Independent brute-force re-implementation of the hit-rate arithmetic.

Pure Python, no shared code with the package's metric path: cosine is
computed with plain loops, and every (generated, reference) pair is
enumerated directly. Used as the equivalence oracle for compute_fhr.
"""

from __future__ import annotations

import math


def oracle_cosine(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    return dot / (na * nb)


def oracle_story_pair_passes(gen, ref, thresholds, table):
    """gen/ref are (actor, action, outcome) text triples; table maps text
    to vector; thresholds is (actor, action, outcome)."""
    for g_text, r_text, cutoff in zip(gen, ref, thresholds):
        if oracle_cosine(table[g_text], table[r_text]) < cutoff:
            return False
    return True


def oracle_goal_hit(gen_stories, ref_stories, thresholds, table):
    return any(
        oracle_story_pair_passes(gen, ref, thresholds, table)
        for gen in gen_stories
        for ref in ref_stories
    )


def oracle_fhr(per_goal, thresholds, table):
    """per_goal: {(project, goal): (gen_story_triples, ref_story_triples)}.

    Returns (per_project {project: (hits, total, rate)}, macro, micro).
    """
    projects = {}
    for (project, _goal), (gens, refs) in per_goal.items():
        hit = oracle_goal_hit(gens, refs, thresholds, table) if gens else False
        hits, total = projects.get(project, (0, 0))
        projects[project] = (hits + int(hit), total + 1)
    per_project = {
        project: (hits, total, hits / total)
        for project, (hits, total) in projects.items()
    }
    macro = sum(rate for _, _, rate in per_project.values()) / len(per_project)
    micro = (sum(h for h, _, _ in per_project.values())
             / sum(t for _, t, _ in per_project.values()))
    return per_project, macro, micro
