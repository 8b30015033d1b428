#!/usr/bin/env python3
"""
Tests for the embedding engines: corner/region selection, queue order,
static vs dynamic behaviour and the exhaustive oracle.
"""

import os
import sys
import logging
import unittest

import numpy as np

# Add the parent directory to the path so we can import modules from there
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from embedder import (Outcome, QueueEntry, decisions_substrate, embed_dynamic, embed_oracle, embed_static,
                      lexicographic_objective, order_queue, try_embed_one)
from errors import TooLarge
from grid import Rect, Substrate
from models import Mode, ServiceKind, default_policy
from vrr import VRR, shape_candidates

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def make_vrr(vrr_id, r, shapes=None, owner="PS", service=ServiceKind.VOICE, d=1, arrival=0, dims=(20, 20)):
    return VRR(id=vrr_id, owner=owner, service=service, r=r,
               shapes=shapes if shapes is not None else shape_candidates(r, *dims),
               d=d, arrival_round=arrival)


def fragmented_20x20():
    """
    Three running services leaving two 10x2 free strips in opposite corners:
    40 free blocks but no 4x4 region.
    """
    big = make_vrr(0, 320)
    top = make_vrr(1, 20)
    bottom = make_vrr(2, 20)
    substrate = Substrate(20, 20)
    substrate.place(Rect(0, 2, 20, 16), big.id)
    substrate.place(Rect(10, 0, 10, 2), top.id)
    substrate.place(Rect(0, 18, 10, 2), bottom.id)
    return substrate, [big, top, bottom]


class TestTryEmbedOne(unittest.TestCase):
    """Region and corner choice."""

    def test_empty_substrate_uses_top_left(self):
        self.assertEqual(try_embed_one(Substrate(20, 20), make_vrr(1, 4)), Rect(0, 0, 2, 2))

    def test_left_half_occupied(self):
        substrate = Substrate(20, 20).place(Rect(0, 0, 10, 20), "wall")
        # TL and BL hug the wall equally well; TL wins the tie
        self.assertEqual(try_embed_one(substrate, make_vrr(1, 4)), Rect(10, 0, 2, 2))

    def test_prefers_smallest_region(self):
        substrate = Substrate(6, 4)
        substrate.place(Rect(2, 0, 1, 4), "a")
        # free regions: a 2x4 column on the left and a 3x4 block on the right;
        # in the smaller one the top-right corner touches the occupied column
        self.assertEqual(try_embed_one(substrate, make_vrr(1, 2, shapes=[(1, 2)])), Rect(1, 0, 1, 2))

    def test_tries_every_shape(self):
        substrate = Substrate(4, 4).place(Rect(1, 0, 3, 4), "a")
        # only a 1x4 column is free; the square-first 2x2 cannot fit there
        self.assertEqual(try_embed_one(substrate, make_vrr(1, 4, dims=(4, 4))), Rect(0, 0, 1, 4))

    def test_no_room(self):
        substrate = Substrate(2, 2).place(Rect(0, 0, 2, 1), "a")
        self.assertIsNone(try_embed_one(substrate, make_vrr(1, 4, dims=(2, 2))))

    def test_result_is_free_and_shaped(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            substrate = Substrate(8, 8)
            for pid in range(int(rng.integers(0, 10))):
                f, t = int(rng.integers(1, 4)), int(rng.integers(1, 4))
                rect = Rect(int(rng.integers(0, 9 - f)), int(rng.integers(0, 9 - t)), f, t)
                if substrate.is_free(rect):
                    substrate.place(rect, pid)
            vrr = make_vrr(99, int(rng.integers(1, 17)), dims=(8, 8))
            rect = try_embed_one(substrate, vrr)
            if rect is not None:
                self.assertTrue(substrate.in_bounds(rect))
                self.assertTrue(substrate.is_free(rect))
                self.assertIn((rect.f, rect.t), vrr.shapes)


class TestQueueOrder(unittest.TestCase):
    """Priority, area, arrival and id ordering."""

    def test_order(self):
        policy = default_policy()
        vrrs = [
            make_vrr(1, 2, service=ServiceKind.MSG, arrival=0),
            make_vrr(2, 8, service=ServiceKind.MSG, arrival=1),
            make_vrr(3, 1, service=ServiceKind.VOICE, arrival=5),
            make_vrr(4, 2, service=ServiceKind.MSG, arrival=0),
            make_vrr(5, 2, service=ServiceKind.MSG, owner="Commercial", arrival=0),
        ]
        order = [e.vrr.id for e in order_queue(vrrs, Mode.NORMAL, policy)]
        self.assertEqual(order, [3, 2, 1, 4, 5])
        order = [e.vrr.id for e in order_queue(vrrs, Mode.EMERGENCY, policy)]
        self.assertEqual(order, [3, 2, 1, 4, 5])
        self.assertEqual(order_queue(vrrs, Mode.EMERGENCY, policy)[-1].priority, 2)

    def test_dynamic_key_puts_running_first(self):
        running = QueueEntry(make_vrr(1, 1), priority=3, active=True)
        waiting = QueueEntry(make_vrr(2, 9), priority=3)
        urgent = QueueEntry(make_vrr(3, 1), priority=4)
        ordered = sorted([waiting, running, urgent], key=QueueEntry.dynamic_key)
        self.assertEqual([e.vrr.id for e in ordered], [3, 1, 2])


class TestStaticAndDynamic(unittest.TestCase):
    """Engine behaviour."""

    def test_static_keeps_existing_placements(self):
        substrate = Substrate(20, 20).place(Rect(0, 0, 5, 5), "old")
        queue = [QueueEntry(make_vrr(1, 4), 1), QueueEntry(make_vrr(2, 9), 1)]
        decisions, same = embed_static(substrate, queue)
        self.assertIs(same, substrate)
        self.assertEqual(substrate.placements["old"], Rect(0, 0, 5, 5))
        self.assertTrue(all(d.outcome == Outcome.EMBEDDED for d in decisions))
        substrate.audit()

    def test_topology_witness_small(self):
        substrate = Substrate(4, 2)
        left = make_vrr(1, 2, shapes=[(1, 2)])
        right = make_vrr(2, 2, shapes=[(1, 2)])
        substrate.place(Rect(1, 0, 1, 2), left.id).place(Rect(3, 0, 1, 2), right.id)
        request = make_vrr(3, 4, shapes=[(2, 2)], arrival=1)
        self.assertEqual(substrate.free_count, 4)

        decisions, _ = embed_static(substrate.copy(), [QueueEntry(request, 1)])
        self.assertEqual(decisions[0].outcome, Outcome.DEFERRED)

        active = [QueueEntry(left, 1, True), QueueEntry(right, 1, True)]
        decisions, repacked = embed_dynamic(active, [QueueEntry(request, 1)], (4, 2))
        outcomes = {d.vrr_id: d for d in decisions}
        self.assertEqual(outcomes[1].rect, Rect(0, 0, 1, 2))
        self.assertEqual(outcomes[2].rect, Rect(1, 0, 1, 2))
        self.assertEqual(outcomes[3].outcome, Outcome.EMBEDDED)
        self.assertEqual(outcomes[3].rect, Rect(2, 0, 2, 2))
        repacked.audit()

    def test_topology_witness_20x20(self):
        substrate, running = fragmented_20x20()
        request = make_vrr(3, 16, shapes=[(4, 4)], arrival=1)
        self.assertGreaterEqual(substrate.free_count, request.area)

        decisions, _ = embed_static(substrate.copy(), [QueueEntry(request, 1)])
        self.assertEqual(decisions[0].outcome, Outcome.DEFERRED)

        active = [QueueEntry(v, 1, True) for v in running]
        decisions, repacked = embed_dynamic(active, [QueueEntry(request, 1)], (20, 20))
        rects = {d.vrr_id: d.rect for d in decisions}
        self.assertTrue(all(d.outcome == Outcome.EMBEDDED for d in decisions))
        self.assertEqual(rects[0], Rect(0, 0, 16, 20))
        self.assertEqual(rects[1], Rect(16, 0, 4, 5))
        self.assertEqual(rects[2], Rect(16, 5, 4, 5))
        self.assertEqual(rects[3], Rect(16, 10, 4, 4))
        repacked.audit()

    def test_dynamic_preempts_lower_priority(self):
        running = QueueEntry(make_vrr(1, 4, dims=(2, 2)), priority=1, active=True)
        urgent = QueueEntry(make_vrr(2, 4, dims=(2, 2)), priority=5)
        decisions, substrate = embed_dynamic([running], [urgent], (2, 2))
        outcomes = {d.vrr_id: d.outcome for d in decisions}
        self.assertEqual(outcomes, {1: Outcome.PREEMPTED, 2: Outcome.EMBEDDED})
        self.assertEqual(list(substrate.placements), [2])

    def test_dynamic_defers_new_request(self):
        running = QueueEntry(make_vrr(1, 4, dims=(2, 2)), priority=5, active=True)
        waiting = QueueEntry(make_vrr(2, 4, dims=(2, 2)), priority=1)
        decisions, _ = embed_dynamic([running], [waiting], (2, 2))
        self.assertEqual({d.vrr_id: d.outcome for d in decisions}, {1: Outcome.EMBEDDED, 2: Outcome.DEFERRED})


def random_instance(rng: np.random.Generator):
    while True:
        F, T = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        if F * T <= 36:
            break
    entries = []
    for vrr_id in range(int(rng.integers(1, 7))):
        r = int(rng.integers(1, max(2, F * T // 4) + 1))
        entries.append(QueueEntry(make_vrr(vrr_id, r, dims=(F, T)), priority=int(rng.integers(1, 4)),
                                  active=bool(rng.random() < 0.3)))
    return entries, (F, T)


class TestOracle(unittest.TestCase):
    """Exhaustive optimum on small instances."""

    def test_bounds(self):
        with self.assertRaises(TooLarge):
            embed_oracle([QueueEntry(make_vrr(1, 1), 1)], (7, 6))
        with self.assertRaises(TooLarge):
            embed_oracle([QueueEntry(make_vrr(i, 1, dims=(4, 4)), 1) for i in range(7)], (4, 4))

    def test_everything_fits(self):
        entries = [QueueEntry(make_vrr(i, 2, dims=(4, 4)), 1) for i in range(8 // 2)]
        result = embed_oracle(entries, (4, 4))
        self.assertEqual(result.objective, (8,))
        decisions_substrate(result.decisions, (4, 4)).audit()

    def test_prefers_higher_priority(self):
        low = QueueEntry(make_vrr(1, 4, dims=(2, 2)), 1)
        high = QueueEntry(make_vrr(2, 1, dims=(2, 2)), 2)
        result = embed_oracle([low, high], (2, 2))
        self.assertEqual(result.levels, (2, 1))
        self.assertEqual(result.objective, (1, 0))
        self.assertEqual({d.vrr_id: d.outcome for d in result.decisions},
                         {1: Outcome.DEFERRED, 2: Outcome.EMBEDDED})

    def test_solves_topology_witness(self):
        running = [QueueEntry(make_vrr(1, 2, shapes=[(1, 2)]), 1, True),
                   QueueEntry(make_vrr(2, 2, shapes=[(1, 2)]), 1, True)]
        request = QueueEntry(make_vrr(3, 4, shapes=[(2, 2)]), 1)
        result = embed_oracle(running + [request], (4, 2))
        self.assertEqual(result.objective, (8,))
        self.assertTrue(all(d.outcome == Outcome.EMBEDDED for d in result.decisions))

    def test_identical_running_services_are_kept_over_new(self):
        running = QueueEntry(make_vrr(1, 4, dims=(2, 2)), 1, True)
        waiting = QueueEntry(make_vrr(2, 4, dims=(2, 2)), 1)
        result = embed_oracle([waiting, running], (2, 2))
        self.assertEqual({d.vrr_id: d.outcome for d in result.decisions},
                         {1: Outcome.EMBEDDED, 2: Outcome.DEFERRED})

    def test_heuristics_never_beat_oracle(self):
        rng = np.random.default_rng(20)
        for _ in range(200):
            entries, dims = random_instance(rng)
            optimum = embed_oracle(entries, dims)
            decisions_substrate(optimum.decisions, dims).audit()
            self.assertEqual(lexicographic_objective(entries, optimum.decisions, optimum.levels), optimum.objective)

            static, _ = embed_static(Substrate(*dims), sorted(entries, key=QueueEntry.static_key))
            running = [e for e in entries if e.active]
            new = [e for e in entries if not e.active]
            dynamic, _ = embed_dynamic(running, new, dims)
            for decisions in (static, dynamic):
                self.assertLessEqual(lexicographic_objective(entries, decisions, optimum.levels), optimum.objective)


if __name__ == "__main__":
    unittest.main()
