import numpy as np
import pytest

from soundtable.memory import (ColdStartError, EpisodeRecord, EpisodicMemory,
                               ProcedureRecord, decode_record, dump_procedures,
                               encode_record, load_procedures)
from soundtable.outcomes import (BOTH_OBJECTS, BURST, OBJECT1, OBJECT2, TOUCH,
                                 Outcome, Procedure, build_spaces)
from soundtable.table import TableGeometry

GAMMA = 1.2


def spaces():
    return build_spaces(TableGeometry(), include_maintained=False)


def make_memory(**kwargs):
    return EpisodicMemory(spaces(), gamma=GAMMA, **kwargs)


def touch(x, y):
    return Outcome(TOUCH, np.array([x, y]))


def action(n):
    rng = np.random.default_rng(n)
    return rng.uniform(-1, 1, size=(n, 14))


def record_with(outcome_list, n=1, strategy="auton-action", procedure=None, goal=None):
    return EpisodeRecord(goal=goal or outcome_list[0][0], strategy=strategy,
                         action=action(n), procedure=procedure,
                         reached=tuple(outcome_list))


def test_store_and_exact_retrieval():
    mem = make_memory()
    rec = record_with([(touch(0.3, 0.4), 0)])
    mem.store(rec)
    results = mem.nearest_actions(touch(0.3, 0.4), k=1)
    assert len(results) == 1
    assert results[0].dist == 0.0
    assert results[0].score == 0.0
    assert np.array_equal(results[0].action, rec.action)


def test_store_counts_indexed_pairs():
    mem = make_memory()
    rec = record_with([(touch(0.1, 0.1), 0), (touch(0.2, 0.2), 1),
                       (Outcome(OBJECT1, np.array([0.5, 0.5])), 1)], n=2)
    mem.store(rec)
    assert mem.action_pairs == 3


def test_duplicate_records_both_retained():
    mem = make_memory()
    rec = record_with([(touch(0.3, 0.4), 0)])
    mem.store(rec)
    mem.store(rec)
    results = mem.nearest_actions(touch(0.3, 0.4), k=5)
    assert len(results) == 2
    assert results[0].dist == results[1].dist == 0.0


def test_length_penalty_orders_equal_distances():
    mem = make_memory()
    mem.store(record_with([(touch(0.5, 0.6), 2)], n=3))  # distance 0.1, length 3
    mem.store(record_with([(touch(0.5, 0.6), 0)], n=1))  # distance 0.1, length 1
    results = mem.nearest_actions(touch(0.5, 0.5), k=2)
    assert results[0].length == 1 and results[1].length == 3


def test_hand_computed_score_ordering():
    # d=0.10 at length 4 scores 0.10*1.2^4 ~ 0.2074; d=0.15 at length 1
    # scores 0.18, so the farther-but-shorter candidate ranks first.
    mem = make_memory()
    mem.store(record_with([(touch(0.5, 0.60), 3)], n=4))
    mem.store(record_with([(touch(0.5, 0.65), 0)], n=1))
    results = mem.nearest_actions(touch(0.5, 0.5), k=2)
    assert results[0].dist == pytest.approx(0.15)
    assert results[0].score == pytest.approx(0.15 * 1.2)
    assert results[1].score == pytest.approx(0.10 * 1.2 ** 4)


def test_k_larger_than_memory_returns_all():
    mem = make_memory()
    mem.store(record_with([(touch(0.1, 0.1), 0)]))
    assert len(mem.nearest_actions(touch(0.5, 0.5), k=50)) == 1


def test_empty_memory_returns_empty():
    mem = make_memory()
    assert mem.nearest_actions(touch(0.5, 0.5)) == []
    assert mem.nearest_procedures(touch(0.5, 0.5)) == []


def brute_force_actions(entries, goal_values, k):
    scored = []
    for i, (vals, n) in enumerate(entries):
        d = float(np.linalg.norm(np.asarray(vals) - goal_values))
        scored.append((d * GAMMA ** n, i))
    scored.sort()
    return scored[:k]


def test_retrieval_matches_brute_force_on_random_memory():
    rng = np.random.default_rng(99)
    mem = make_memory()
    entries = []
    for _ in range(400):
        n = int(rng.integers(1, 6))
        vals = rng.uniform(0, 1, 2)
        mem.store(record_with([(touch(*vals), n - 1)], n=n))
        entries.append((vals, n))
    for _ in range(30):
        goal_values = rng.uniform(0, 1, 2)
        got = mem.nearest_actions(touch(*goal_values), k=7)
        expected = brute_force_actions(entries, goal_values, 7)
        assert len(got) == 7
        for res, (score, idx) in zip(got, expected):
            assert res.score == pytest.approx(score, abs=1e-12)


def test_tree_index_agrees_with_linear_scan():
    rng = np.random.default_rng(41)
    linear = make_memory(index_threshold=10 ** 9)
    indexed = make_memory(index_threshold=50)
    for _ in range(600):
        n = int(rng.integers(1, 6))
        vals = rng.uniform(0, 1, 2)
        rec = record_with([(touch(*vals), n - 1)], n=n)
        linear.store(rec)
        indexed.store(rec)
    for _ in range(50):
        goal = touch(*rng.uniform(0, 1, 2))
        a = linear.nearest_actions(goal, k=5)
        b = indexed.nearest_actions(goal, k=5)
        assert [(r.score, r.length) for r in a] == [(r.score, r.length) for r in b]
        assert all(np.array_equal(x.action, y.action) for x, y in zip(a, b))


def test_tree_index_agrees_on_duplicates():
    linear = make_memory(index_threshold=10 ** 9)
    indexed = make_memory(index_threshold=10)
    rec = record_with([(touch(0.5, 0.5), 0)])
    for mem in (linear, indexed):
        for _ in range(30):
            mem.store(rec)
    a = linear.nearest_actions(touch(0.5, 0.5), k=5)
    b = indexed.nearest_actions(touch(0.5, 0.5), k=5)
    assert [(r.score, r.length) for r in a] == [(r.score, r.length) for r in b]


def procedure_record(first_space, first_vals, second_space, second_vals,
                     reached, n, goal=None):
    proc = Procedure(Outcome(first_space, np.asarray(first_vals, float)),
                     Outcome(second_space, np.asarray(second_vals, float)))
    outcomes = [(reached, n - 1)]
    return EpisodeRecord(goal=goal or reached, strategy="auton-procedure",
                         action=action(n), procedure=proc, reached=tuple(outcomes))


def test_nearest_procedures_exact_hit_first():
    mem = make_memory()
    target = Outcome(OBJECT1, np.array([0.4, 0.4]))
    rec = procedure_record(TOUCH, [0.35, 0.65], TOUCH, [0.4, 0.4], target, n=2)
    mem.store(rec)
    results = mem.nearest_procedures(target)
    assert len(results) == 1
    assert results[0].score == 0.0
    assert results[0].record.procedure.space_pair == (TOUCH, TOUCH)


def test_procedure_ordering_matches_brute_force():
    rng = np.random.default_rng(5)
    mem = make_memory()
    entries = []
    for _ in range(20):
        n = int(rng.integers(2, 6))
        reached = Outcome(OBJECT1, rng.uniform(0, 1, 2))
        rec = procedure_record(TOUCH, rng.uniform(0, 1, 2), TOUCH, rng.uniform(0, 1, 2),
                               reached, n=n)
        mem.store(rec)
        entries.append((reached.values, n))
    goal_values = rng.uniform(0, 1, 2)
    got = mem.nearest_procedures(Outcome(OBJECT1, goal_values), k=20)
    expected = brute_force_actions(entries, goal_values, 20)
    for res, (score, _) in zip(got, expected):
        assert res.score == pytest.approx(score, abs=1e-12)


def test_resolve_exact_direct_hit():
    mem = make_memory()
    rec = record_with([(touch(0.3, 0.4), 0)])
    mem.store(rec)
    plan = mem.resolve(touch(0.3, 0.4))
    assert plan.procedure is None
    assert np.array_equal(plan.action, rec.action)


def test_resolve_decomposes_through_procedures():
    mem = make_memory()
    # touch skills
    pick = record_with([(touch(0.35, 0.65), 0)], n=1)
    place = record_with([(touch(0.7, 0.2), 0)], n=1)
    mem.store(pick)
    mem.store(place)
    # a procedure that reached an object placement
    target = Outcome(OBJECT1, np.array([0.7, 0.2]))
    mem.store(procedure_record(TOUCH, [0.35, 0.65], TOUCH, [0.7, 0.2], target, n=2))
    plan = mem.resolve(Outcome(OBJECT1, np.array([0.7, 0.2])))
    assert plan.procedure is not None
    assert plan.procedure.space_pair == (TOUCH, TOUCH)
    assert plan.length == 2
    assert np.array_equal(plan.action[0], pick.action[0])
    assert np.array_equal(plan.action[1], place.action[0])


def test_resolve_depth_zero_uses_direct_only():
    mem = make_memory()
    target = Outcome(OBJECT1, np.array([0.7, 0.2]))
    mem.store(record_with([(touch(0.35, 0.65), 0)], n=1))
    mem.store(record_with([(touch(0.7, 0.2), 0)], n=1))
    mem.store(procedure_record(TOUCH, [0.35, 0.65], TOUCH, [0.7, 0.2], target, n=2))
    plan = mem.resolve(target, depth_budget=0)
    # the procedure episode itself stored a direct (action, outcome) pair
    assert plan.procedure is None


def test_resolve_prefers_procedure_on_tie():
    mem = make_memory()
    target = Outcome(OBJECT1, np.array([0.7, 0.2]))
    mem.store(record_with([(touch(0.35, 0.65), 0)], n=1))
    mem.store(record_with([(touch(0.7, 0.2), 0)], n=1))
    # same episode indexes the full action directly and as a procedure,
    # producing an exact score tie; the decomposition wins it
    mem.store(procedure_record(TOUCH, [0.35, 0.65], TOUCH, [0.7, 0.2], target, n=2))
    plan = mem.resolve(target)
    assert plan.procedure is not None


def test_resolve_cold_start_raises():
    mem = make_memory()
    with pytest.raises(ColdStartError):
        mem.resolve(touch(0.5, 0.5))


def test_resolve_skips_self_referential_procedures():
    mem = make_memory()
    goal = Outcome(OBJECT1, np.array([0.5, 0.5]))
    # adversarial: a procedure in the goal's own subspace whose component is
    # exactly as far from the goal as its net effect
    self_ref = procedure_record(OBJECT1, [0.6, 0.6], OBJECT2, [0.2, 0.2],
                                Outcome(OBJECT1, np.array([0.6, 0.6])), n=4)
    mem.store(self_ref)
    plan = mem.resolve(goal)
    # falls back to the direct twin of the stored episode
    assert plan.procedure is None


def test_resolve_never_exceeds_length_bound():
    rng = np.random.default_rng(8)
    mem = make_memory(max_sequence_length=8)
    # adversarial chains of long procedures over nested subspaces
    for _ in range(60):
        n = int(rng.integers(2, 7))
        sid = int(rng.choice([TOUCH, OBJECT1, OBJECT2, BOTH_OBJECTS, BURST]))
        dim = len(spaces()[sid].lower)
        reached = Outcome(sid, rng.uniform(spaces()[sid].lower, spaces()[sid].upper))
        first_sid = int(rng.choice([TOUCH, OBJECT1, OBJECT2, BOTH_OBJECTS, BURST]))
        second_sid = int(rng.choice([TOUCH, OBJECT1, OBJECT2, BOTH_OBJECTS, BURST]))
        proc = Procedure(
            Outcome(first_sid, rng.uniform(spaces()[first_sid].lower, spaces()[first_sid].upper)),
            Outcome(second_sid, rng.uniform(spaces()[second_sid].lower, spaces()[second_sid].upper)))
        rec = EpisodeRecord(goal=reached, strategy="auton-procedure", action=action(n),
                            procedure=proc, reached=((reached, n - 1),))
        mem.store(rec)
    for _ in range(40):
        sid = int(rng.choice([TOUCH, OBJECT1, OBJECT2, BOTH_OBJECTS, BURST]))
        goal = Outcome(sid, rng.uniform(spaces()[sid].lower, spaces()[sid].upper))
        plan = mem.resolve(goal, depth_budget=3)
        assert plan.length <= 8


def test_transfer_records_visible_only_on_request():
    mem = make_memory()
    reached = Outcome(BOTH_OBJECTS, np.array([0.2, 0.2, 0.8, 0.8]))
    proc = Procedure(Outcome(OBJECT1, np.array([0.2, 0.2])),
                     Outcome(OBJECT2, np.array([0.8, 0.8])))
    mem.add_transfer([ProcedureRecord(procedure=proc, reached=reached, length=None)])
    assert mem.nearest_procedures(reached) == []
    results = mem.nearest_procedures(reached, include_transferred=True)
    assert len(results) == 1
    assert results[0].length == 4  # default penalty for unknown length
    with pytest.raises(ColdStartError):
        mem.resolve(reached)  # transferred records never feed the inverse model


def test_record_roundtrip_through_json():
    target = Outcome(OBJECT1, np.array([0.7, 0.2]))
    rec = procedure_record(TOUCH, [0.35, 0.65], TOUCH, [0.7, 0.2], target, n=2)
    again = decode_record(encode_record(rec))
    assert again.strategy == rec.strategy
    assert np.array_equal(again.action, rec.action)
    assert again.procedure.space_pair == rec.procedure.space_pair
    assert again.reached[0][0].key() == rec.reached[0][0].key()


def test_memory_dump_and_load(tmp_path):
    mem = make_memory()
    mem.store(record_with([(touch(0.3, 0.4), 0)]))
    target = Outcome(OBJECT1, np.array([0.7, 0.2]))
    mem.store(procedure_record(TOUCH, [0.35, 0.65], TOUCH, [0.7, 0.2], target, n=2))
    path = tmp_path / "memory.jsonl"
    mem.dump(path)
    fresh = make_memory()
    assert fresh.load(path) == 2
    assert fresh.action_pairs == mem.action_pairs
    assert len(fresh.nearest_procedures(target)) == 1


def test_procedure_file_malformed_line_number(tmp_path):
    path = tmp_path / "lump.jsonl"
    good = ('{"procedure": [[1, [0.1, 0.2]], [2, [0.3, 0.4]]], '
            '"reached": [3, [0.1, 0.2, 0.3, 0.4]], "length": null}\n')
    lines = [good] * 6 + ["{broken\n"] + [good]
    path.write_text("".join(lines))
    with pytest.raises(ValueError, match="line 7"):
        load_procedures(path)


def test_procedure_file_roundtrip(tmp_path):
    reached = Outcome(BOTH_OBJECTS, np.array([0.2, 0.2, 0.8, 0.8]))
    proc = Procedure(Outcome(OBJECT1, np.array([0.2, 0.2])),
                     Outcome(OBJECT2, np.array([0.8, 0.8])))
    recs = [ProcedureRecord(procedure=proc, reached=reached, length=None),
            ProcedureRecord(procedure=proc, reached=reached, length=4)]
    path = tmp_path / "procs.jsonl"
    dump_procedures(recs, path)
    loaded = load_procedures(path)
    assert len(loaded) == 2
    assert loaded[0].length is None and loaded[1].length == 4
    assert loaded[0].procedure.space_pair == (OBJECT1, OBJECT2)


def test_empty_procedure_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert load_procedures(path) == []
