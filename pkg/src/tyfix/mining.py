"""Hierarchical template mining.

Raw per-fix templates are partitioned by category and repeatedly merged:

1. **dedup** — templates with identical content collapse into one node that
   unions their instance ids and concatenates their lineages;
2. **external-context stage** — within clusters sharing pattern and internal
   context, the closest pair of external contexts merges (pairs whose
   shallow distance is 0 are preferred);
3. **internal-context stage** — within clusters sharing a pattern, the
   closest pair of internal contexts abstracts into a common spine, each
   template keeping its own external context;
4. **pattern stage** — the closest template pair overall merges patterns,
   contexts, and attachments into a generalized parent.

After any change the loop restarts from dedup.  Pairs whose merge fails
(empty result, category loss, attachment loss) are banned by content so the
next-best pair is tried; every successful merge strictly shrinks a
lexicographic measure (template count, then total tree mass), so the loop
terminates within a precomputable bound.  Everything is ordered by content
hash: mining the same corpus twice yields byte-identical output.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .abstraction import (
    merge_external_stage,
    merge_internal_stage,
    merge_templates,
)
from .basetypes import ABS
from .errors import InvalidPattern, ResultEmptyPattern
from .metrics import DistanceCalculator
from .serialize import dumps_canonical, template_hash, tree_to_json
from .templates import CATEGORIES, FixTemplate, TemplateTree

DEFAULT_MIN_FREQ = 5


# ---------------------------------------------------------------------------
# Measures (termination accounting)
# ---------------------------------------------------------------------------

def concrete_slots(tree: TemplateTree) -> int:
    return sum(
        (1 if n.t is not ABS else 0) + (1 if n.v is not ABS else 0)
        for n in tree.nodes()
    )


def template_measure(t: FixTemplate) -> int:
    total = 0
    for tree in t.trees():
        total += 2 * tree.size + concrete_slots(tree)
    for entry in t.anchors.values():
        for slot in entry.values():
            if slot is not None:
                total += slot[1]
    return total


def termination_bound(pool: list[FixTemplate]) -> int:
    return len(pool) + sum(template_measure(t) for t in pool) + 1


# ---------------------------------------------------------------------------
# Content keys
# ---------------------------------------------------------------------------

def _pattern_key(t: FixTemplate) -> str:
    return dumps_canonical(
        [t.category, tree_to_json(t.before), tree_to_json(t.after)]
    )


def _pattern_ic_key(t: FixTemplate) -> str:
    return dumps_canonical(
        [
            _pattern_key(t),
            tree_to_json(t.ic_tree),
            {str(k): list(v) for k, v in sorted(t.rn.items())},
            {
                str(k): {s: (list(a) if a else None) for s, a in sorted(v.items())}
                for k, v in sorted(t.anchors.items())
            },
        ]
    )


def _ec_key(t: FixTemplate) -> str:
    return dumps_canonical(
        [tree_to_json(t.ec_before), tree_to_json(t.ec_after), t.stmt_anchor]
    )


@dataclass
class MiningStats:
    raw_count: int = 0
    mined_count: int = 0
    iterations: int = 0
    merges: int = 0
    banned_pairs: int = 0
    pruned: int = 0
    seconds: float = 0.0
    per_category: dict = field(default_factory=dict)


class _Miner:
    def __init__(self, pool: list[FixTemplate], stats: MiningStats) -> None:
        self.pool = list(pool)
        self.stats = stats
        self.dist = DistanceCalculator()
        self.banned: set[tuple[str, str]] = set()

    # -- helpers ----------------------------------------------------------
    def _sorted_pool(self) -> list[tuple[str, FixTemplate]]:
        return sorted(((template_hash(t), t) for t in self.pool), key=lambda p: p[0])

    def _is_banned(self, h1: str, h2: str) -> bool:
        return (min(h1, h2), max(h1, h2)) in self.banned

    def _ban(self, h1: str, h2: str) -> None:
        self.banned.add((min(h1, h2), max(h1, h2)))
        self.stats.banned_pairs += 1

    def _replace(self, remove: list[FixTemplate], add: list[FixTemplate]) -> None:
        removed = {id(t) for t in remove}
        self.pool = [t for t in self.pool if id(t) not in removed]
        self.pool.extend(add)
        self.stats.merges += 1

    # -- stage 0: dedup -----------------------------------------------------
    def dedup(self) -> bool:
        groups: dict[str, list[FixTemplate]] = {}
        for h, t in self._sorted_pool():
            groups.setdefault(h, []).append(t)
        changed = False
        for h in sorted(groups):
            members = groups[h]
            if len(members) < 2:
                continue
            first = members[0]
            ids: set[str] = set()
            lineage: list[FixTemplate] = []
            for m in members:
                ids.update(m.instance_ids)
                lineage.extend(m.children)
            merged = FixTemplate(
                category=first.category,
                before=first.before,
                after=first.after,
                ic_tree=first.ic_tree,
                rn=first.rn,
                anchors=first.anchors,
                stmt_anchor=first.stmt_anchor,
                ec_before=first.ec_before,
                ec_after=first.ec_after,
                instance_ids=sorted(ids),
                children=lineage,
            )
            self._replace(members, [merged])
            changed = True
        return changed

    # -- stage 1: external context ------------------------------------------
    def external_stage(self) -> bool:
        clusters: dict[str, list[tuple[str, FixTemplate]]] = {}
        for h, t in self._sorted_pool():
            clusters.setdefault(_pattern_ic_key(t), []).append((h, t))
        changed = False
        for key in sorted(clusters):
            members = clusters[key]
            if len(members) < 2:
                continue
            pairs = []
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    (h1, t1), (h2, t2) = members[i], members[j]
                    if _ec_key(t1) == _ec_key(t2) or self._is_banned(h1, h2):
                        continue
                    d = self.dist.ec_distance(t1, t2)
                    sd = self.dist.ec_distance(t1, t2, shallow=True)
                    pairs.append((d, sd, h1, h2, t1, t2))
            if not pairs:
                continue
            restricted = [p for p in pairs if p[1] == 0.0]
            chosen = min(
                restricted or pairs, key=lambda p: (p[0], p[2], p[3])
            )
            _, _, _, _, t1, t2 = chosen
            self._replace([t1, t2], [merge_external_stage(t1, t2)])
            changed = True
        return changed

    # -- stage 2: internal context --------------------------------------------
    def internal_stage(self) -> bool:
        clusters: dict[str, list[tuple[str, FixTemplate]]] = {}
        for h, t in self._sorted_pool():
            clusters.setdefault(_pattern_key(t), []).append((h, t))
        changed = False
        for key in sorted(clusters):
            members = clusters[key]
            if len(members) < 2:
                continue
            pairs = []
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    (h1, t1), (h2, t2) = members[i], members[j]
                    if _pattern_ic_key(t1) == _pattern_ic_key(t2):
                        continue
                    if self._is_banned(h1, h2):
                        continue
                    d = self.dist.ic_distance(t1, t2)
                    pairs.append((d, h1, h2, t1, t2))
            pairs.sort(key=lambda p: (p[0], p[1], p[2]))
            for d, h1, h2, t1, t2 in pairs:
                try:
                    nt1, nt2 = merge_internal_stage(t1, t2)
                except (ResultEmptyPattern, InvalidPattern):
                    self._ban(h1, h2)
                    continue
                self._replace([t1, t2], [nt1, nt2])
                changed = True
                break
        return changed

    # -- stage 3: pattern ------------------------------------------------------
    def pattern_stage(self) -> bool:
        members = self._sorted_pool()
        pairs = []
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                (h1, t1), (h2, t2) = members[i], members[j]
                if self._is_banned(h1, h2):
                    continue
                d = self.dist.pattern_distance(t1, t2)
                sd = self.dist.pattern_distance(t1, t2, shallow=True)
                if d == 1.0 and sd == 1.0:
                    continue  # nothing in common: a merge would be vacuous
                pairs.append((d, sd, h1, h2, t1, t2))
        pairs.sort(key=lambda p: (p[0], p[1], p[2], p[3]))
        for d, sd, h1, h2, t1, t2 in pairs:
            try:
                merged = merge_templates(t1, t2)
            except (ResultEmptyPattern, InvalidPattern):
                self._ban(h1, h2)
                continue
            self._replace([t1, t2], [merged])
            return True
        return False

    # -- main loop ---------------------------------------------------------
    def run(self) -> list[FixTemplate]:
        bound = termination_bound(self.pool)
        iterations = 0
        while True:
            iterations += 1
            if iterations > bound:
                raise RuntimeError(
                    "mining exceeded its termination bound; "
                    "this indicates a non-decreasing merge"
                )
            if self.dedup():
                continue
            if self.external_stage():
                continue
            if self.internal_stage():
                continue
            if self.pattern_stage():
                continue
            break
        self.stats.iterations += iterations
        return self.pool


def prune_trees(pool: list[FixTemplate], min_freq: int) -> list[FixTemplate]:
    """Drop mined roots generalizing fewer than ``min_freq`` fixes."""
    return [t for t in pool if t.instance_count >= min_freq]


def mine_templates(
    raw: list[FixTemplate],
    min_freq: int = DEFAULT_MIN_FREQ,
    categories: list[str] | None = None,
) -> tuple[list[FixTemplate], MiningStats]:
    """Run the full mining loop over raw fix templates.

    Returns the pruned forest (deterministically ordered: most instances
    first, content hash as tie-break) and run statistics.
    """
    start = time.monotonic()
    stats = MiningStats(raw_count=len(raw))
    wanted = list(categories) if categories else list(CATEGORIES)
    for c in wanted:
        if c not in CATEGORIES:
            raise InvalidPattern(f"unknown fix category {c!r}")
    forest: list[FixTemplate] = []
    for category in CATEGORIES:
        if category not in wanted:
            continue
        part = [t for t in raw if t.category == category]
        stats.per_category[category] = {"raw": len(part)}
        if not part:
            stats.per_category[category]["mined"] = 0
            continue
        miner = _Miner(part, stats)
        mined = miner.run()
        kept = prune_trees(mined, min_freq)
        stats.pruned += len(mined) - len(kept)
        stats.per_category[category]["mined"] = len(kept)
        forest.extend(kept)
    forest.sort(key=lambda t: (-t.instance_count, template_hash(t)))
    stats.mined_count = len(forest)
    stats.seconds = time.monotonic() - start
    return forest, stats
