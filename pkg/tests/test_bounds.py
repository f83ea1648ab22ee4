import math
import random

import pytest
from hypothesis import given, strategies as st

from corpus import random_query, small_documents
from prxq.bounds import (
    BoundPair,
    can_emit,
    can_prune,
    compute_bounds,
    global_bounds,
    part_bounds,
    select_part,
    update_lower,
    update_upper,
)
from prxq.pi_index import NodeTermProfile, Part, build_indexes
from prxq.prxml import PrxmlDocument, ind, mux, ordinary
from prxq.worlds import WorldTable, quasi_oracle

Q = ["k1", "k2"]
probs = st.lists(st.floats(0.0, 1.0), max_size=6)


def profile(parts, path_prob=1.0):
    parts = [Part(p) for p in parts]
    margs = {}
    for p in parts:
        for k, v in p.probs.items():
            margs[k] = margs.get(k, 0.0) + v
    return NodeTermProfile((), path_prob, parts, margs)


class TestComputeBounds:
    def test_a2(self, fig1, fig1_indexes):
        b = global_bounds(fig1_indexes[0].profile(fig1.find("a2").dewey), Q)
        assert b.lb == pytest.approx(0.65 * 0.916, abs=1e-12)
        assert b.ub == pytest.approx(0.65, abs=1e-12)
        # the three-decimal reference value
        assert round(b.lb, 3) == 0.595

    def test_single_part_is_product_and_min(self):
        b = compute_bounds(profile([{"k1": 0.3, "k2": 0.7, "k3": 0.9}]), ["k1", "k2", "k3"])
        assert b.lb == pytest.approx(0.3 * 0.7 * 0.9)
        assert b.ub == pytest.approx(0.3)

    def test_a3_part_one(self, fig1, fig1_indexes):
        prof = fig1_indexes[0].profile(fig1.find("a3").dewey)
        per_part = [p.scaled(prof.path_prob) for p in part_bounds(prof, Q)]
        assert per_part[0].lb == pytest.approx(0.32, abs=1e-9)
        assert per_part[0].ub == pytest.approx(0.40, abs=1e-9)
        assert select_part(prof, Q) == 0
        b = global_bounds(prof, Q, rule="part")
        assert (b.lb, b.ub) == (pytest.approx(0.32, abs=1e-9), pytest.approx(0.40, abs=1e-9))

    def test_part_rule_understates_a3(self, fig1, fig1_indexes):
        # the true full-containment mass of a3 is 0.56, above the single
        # part's 0.40; the default rule stays above it
        prof = fig1_indexes[0].profile(fig1.find("a3").dewey)
        table = WorldTable(fig1)
        true = table.mass(table.contains_all(Q)[:, fig1.find("a3").index])
        assert true == pytest.approx(0.56, abs=1e-9)
        assert global_bounds(prof, Q, rule="part").ub < true
        sound = global_bounds(prof, Q)
        assert sound.lb <= true <= sound.ub

    def test_missing_keyword(self):
        prof = profile([{"k1": 0.5}, {"k1": 0.2}])
        assert compute_bounds(prof, Q) == BoundPair(0.0, 0.0, ())
        assert compute_bounds(prof, Q, rule="part") == BoundPair(0.0, 0.0, ())

    def test_no_part_with_all_keywords(self):
        prof = profile([{"k1": 0.5}, {"k2": 0.2}])
        assert compute_bounds(prof, Q, rule="part") == BoundPair(0.0, 0.0, ())
        # disjoint branches can never hold both keywords together
        assert compute_bounds(prof, Q).ub == 0.0

    def test_part_selection_ties(self):
        prof = profile([{"k1": 0.5, "k2": 0.5}, {"k1": 0.5, "k2": 0.9}])
        assert select_part(prof, Q) == 0

    def test_rejects(self):
        with pytest.raises(ValueError):
            compute_bounds(profile([{"k1": 1.0}]), [])
        with pytest.raises(ValueError):
            compute_bounds(profile([{"k1": 1.0}]), ["k1"], rule="eq9")

    def test_sandwich_on_random_documents(self):
        rng = random.Random(31)
        for doc in small_documents(150, seed=31):
            pi, _ = build_indexes(doc)
            table = WorldTable(doc)
            q = random_query(rng)
            full = table.contains_all(q)
            for node in doc.ordinary_nodes():
                prof = pi.profile(node.dewey)
                true = table.mass(full[:, node.index])
                if prof is None:
                    assert true == 0.0
                    continue
                b = global_bounds(prof, q)
                assert b.lb - 1e-9 <= true <= b.ub + 1e-9
                assert 0.0 <= b.lb <= b.ub <= 1.0


class TestPredicates:
    def test_prune_a5(self, fig1, fig1_indexes):
        b = global_bounds(fig1_indexes[0].profile(fig1.find("a5").dewey), Q)
        assert b.ub == pytest.approx(0.24)
        assert can_prune(b, 0.40)

    def test_prune_inclusive_threshold(self):
        assert not can_prune(BoundPair(0.1, 0.4), 0.4)
        assert can_prune(BoundPair(0.1, 0.39), 0.4)

    def test_emit(self):
        assert can_emit(BoundPair(0.45, 0.6), 0.4, True)
        assert not can_emit(BoundPair(0.45, 0.6), 0.4, False)
        assert not can_emit(BoundPair(0.35, 0.6), 0.4, True)
        assert can_emit(BoundPair(0.4, 0.6), 0.4, True)

    def test_pair_is_clamped(self):
        b = BoundPair(-0.2, 1.3)
        assert (b.lb, b.ub) == (0.0, 1.0)
        b = BoundPair(0.7, 0.5)
        assert b.lb <= b.ub


class TestUpdates:
    def test_upper_golden(self):
        assert update_upper(0.65, [0.44]) == pytest.approx(0.21, abs=1e-9)

    def test_lower_golden(self):
        assert update_lower(0.595, [0.44]) == pytest.approx(0.155, abs=1e-9)

    def test_empty(self):
        assert update_upper(0.65, []) == 0.65
        assert update_lower(0.595, []) == 0.595

    def test_clamped(self):
        assert update_lower(0.2, [0.44]) == 0.0
        assert update_upper(0.3, [0.9, 0.9]) == 0.0

    @given(st.floats(0.0, 1.0), probs)
    def test_product_rule_dominates_sum_rule(self, ub, ps):
        assert ub - math.fsum(ps) <= ub - 1.0 + math.prod(1.0 - p for p in ps) + 1e-12

    def test_sum_rule_sound_on_random_documents(self):
        # lb minus the sum of qualified descendant probabilities never
        # exceeds what is left for the node
        rng = random.Random(32)
        for doc in small_documents(150, seed=32):
            pi, _ = build_indexes(doc)
            table = WorldTable(doc)
            q = random_query(rng)
            for sigma in (0.1, 0.3, 0.5):
                res = quasi_oracle(doc, q, sigma, table=table)
                for v, mass in res.per_node.items():
                    prof = pi.profile(v)
                    if prof is None:
                        continue
                    below = [res.per_node[u] for u in res.qualified if u != v and u[: len(v)] == v]
                    lb = global_bounds(prof, q).lb
                    assert update_lower(lb, below) <= mass + 1e-9

    def test_product_rule_sound_on_mux_gadgets(self):
        rng = random.Random(33)
        for _ in range(200):
            n = rng.randint(2, 4)
            w = [rng.random() for _ in range(n)]
            budget = rng.uniform(0.5, 1.0)
            kids = [ordinary(f"c{i}", rng.choice(["k1 k2", "k1", "k2"]), prob=wi / sum(w) * budget)
                    for i, wi in enumerate(w)]
            doc = PrxmlDocument(ordinary("p", rng.choice(["", "k1", "k2"]), [mux(kids)]))
            pi, _ = build_indexes(doc)
            for sigma in (0.1, 0.2, 0.3):
                res = quasi_oracle(doc, Q, sigma)
                below = [res.per_node[u] for u in res.qualified if u != ()]
                ub = global_bounds(pi.profile(()), Q).ub
                assert update_upper(ub, below) >= res.per_node[()] - 1e-9

    def test_product_rule_can_undershoot_under_uncertain_ancestor(self):
        # v exists with probability 0.5 and always holds both keywords; its
        # two independent children x, y (0.5 each) qualify with 0.25 each.
        # Given v, they overlap far more than the product rule assumes.
        x = ordinary("x", "k1 k2", prob=0.5)
        y = ordinary("y", "k1 k2", prob=0.5)
        v = ordinary("v", "k1 k2", [ind([x, y])], prob=0.5)
        doc = PrxmlDocument(ordinary("r", (), [ind([v])]))
        res = quasi_oracle(doc, Q, 0.2)
        assert {doc.node(u).label for u in res.qualified} == {"x", "y"}
        assert res.per_node[v.dewey] == pytest.approx(0.5 * 0.5 * 0.5)
        pi, _ = build_indexes(doc)
        ub = global_bounds(pi.profile(v.dewey), Q).ub
        assert ub == pytest.approx(0.5)
        updated = update_upper(ub, [0.25, 0.25])
        assert updated == pytest.approx(0.0625)
        assert updated < res.per_node[v.dewey]
