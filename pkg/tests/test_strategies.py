import numpy as np
import pytest
from scipy import stats

from soundtable.memory import EpisodeRecord, EpisodicMemory
from soundtable.outcomes import (BOTH_OBJECTS, BURST, OBJECT1, OBJECT2, TOUCH,
                                 Outcome, Procedure, build_spaces, distance)
from soundtable.strategies import (ActionTeacher, ExplorationParams,
                                   RepertoireProcedureTeacher, RuleProcedureTeacher,
                                   enabled_pairs, explore_action, explore_procedure,
                                   invert_burst, load_transfer_lump, mimic_action,
                                   mimic_procedure, p_local, perturb_procedure,
                                   random_procedure, random_sequence,
                                   verify_inversion)
from soundtable.table import TableGeometry

GEO = TableGeometry()


def spaces():
    return build_spaces(GEO, include_maintained=False)


def params():
    return ExplorationParams(joint_min=np.full(7, -1.0), joint_max=np.full(7, 1.0),
                             weight_bound=50.0)


def memory():
    return EpisodicMemory(spaces())


def touch(x, y):
    return Outcome(TOUCH, np.array([x, y]))


def test_p_local_formula_and_clamping():
    p = params()
    assert p_local(0.0, p) == pytest.approx(0.9)  # exact hit: clamped at the top
    assert p_local(5.0, p) == pytest.approx(0.1)  # cold distance: clamped bottom
    assert p_local(2.5, p) == pytest.approx(0.5)


def test_random_sequence_bounds_and_lengths():
    p = params()
    rng = np.random.default_rng(0)
    lengths = []
    for _ in range(500):
        seq = random_sequence(rng, p)
        lengths.append(len(seq))
        assert 1 <= len(seq) <= p.max_sequence_length
        assert np.all(seq >= p.param_lower) and np.all(seq <= p.param_upper)
    # geometric: short sequences dominate
    assert lengths.count(1) > lengths.count(3) > 0


def test_explore_action_cold_start_is_random():
    p = params()
    rng = np.random.default_rng(1)
    seq = explore_action(touch(0.5, 0.5), memory(), rng, p)
    assert 1 <= len(seq) <= p.max_sequence_length


def test_explore_action_local_perturbation_preserves_length():
    p = params()
    mem = memory()
    action = np.tile(np.linspace(-0.5, 0.5, 14), (3, 1))
    mem.store(EpisodeRecord(goal=touch(0.5, 0.5), strategy="auton-action",
                            action=action, procedure=None,
                            reached=((touch(0.5, 0.5), 2),)))
    rng = np.random.default_rng(2)
    for _ in range(30):
        # slightly offset goal: nonzero neighbour distance sets the noise scale
        seq = explore_action(touch(0.52, 0.5), mem, rng, p)
        if len(seq) == 3:  # local branch fired (p_local ~ 0.9)
            assert not np.array_equal(seq, action)
            assert np.all(seq >= p.param_lower) and np.all(seq <= p.param_upper)
            break
    else:
        pytest.fail("local branch never fired at p_local ~ 0.9")


def test_explore_action_exact_hit_perturbation_degenerates_to_replay():
    p = params()
    mem = memory()
    action = np.tile(np.linspace(-0.5, 0.5, 14), (2, 1))
    mem.store(EpisodeRecord(goal=touch(0.5, 0.5), strategy="auton-action",
                            action=action, procedure=None,
                            reached=((touch(0.5, 0.5), 1),)))
    rng = np.random.default_rng(20)
    for _ in range(30):
        seq = explore_action(touch(0.5, 0.5), mem, rng, p)
        if len(seq) == 2:  # local branch: zero distance means zero noise
            assert np.array_equal(seq, action)
            break
    else:
        pytest.fail("local branch never fired")


def test_explore_procedure_cold_start_uniform_over_pairs():
    p = params()
    sp = spaces()
    rng = np.random.default_rng(3)
    counts = {}
    draws = 5000
    for _ in range(draws):
        proc = explore_procedure(touch(0.5, 0.5), memory(), rng, p, sp)
        counts[proc.space_pair] = counts.get(proc.space_pair, 0) + 1
    pairs = enabled_pairs(sp)
    assert set(counts) == set(pairs)
    observed = [counts[pair] for pair in pairs]
    chi = stats.chisquare(observed)
    assert chi.pvalue > 0.01


def test_explore_procedure_local_preserves_pair():
    p = params()
    sp = spaces()
    mem = memory()
    proc = Procedure(Outcome(OBJECT1, np.array([0.3, 0.3])),
                     Outcome(OBJECT2, np.array([0.7, 0.7])))
    reached = Outcome(BOTH_OBJECTS, np.array([0.3, 0.3, 0.7, 0.7]))
    mem.store(EpisodeRecord(goal=reached, strategy="auton-procedure",
                            action=np.zeros((4, 14)), procedure=proc,
                            reached=((reached, 3),)))
    rng = np.random.default_rng(4)
    goal = Outcome(BOTH_OBJECTS, np.array([0.33, 0.3, 0.7, 0.7]))
    for _ in range(30):
        got = explore_procedure(goal, mem, rng, p, sp)
        if got.space_pair == (OBJECT1, OBJECT2) and not np.array_equal(
                got.first.values, proc.first.values):
            break
    else:
        pytest.fail("local perturbation of the stored procedure never fired")


def test_explore_procedure_uses_transferred_neighbours():
    p = params()
    sp = spaces()
    mem = memory()
    from soundtable.memory import ProcedureRecord
    proc = Procedure(Outcome(OBJECT1, np.array([0.3, 0.3])),
                     Outcome(OBJECT2, np.array([0.7, 0.7])))
    reached = Outcome(BOTH_OBJECTS, np.array([0.3, 0.3, 0.7, 0.7]))
    mem.add_transfer([ProcedureRecord(procedure=proc, reached=reached, length=None)])
    rng = np.random.default_rng(5)
    goal = Outcome(BOTH_OBJECTS, np.array([0.31, 0.31, 0.71, 0.71]))
    hits = sum(explore_procedure(goal, mem, rng, p, sp).space_pair == (OBJECT1, OBJECT2)
               for _ in range(100))
    assert hits > 50  # locality around the transferred record dominates


def test_perturbed_procedure_stays_in_bounds():
    sp = spaces()
    rng = np.random.default_rng(6)
    proc = Procedure(Outcome(OBJECT1, np.array([0.01, 0.99])),
                     Outcome(BURST, np.array([0.99, -0.99, 0.06])))
    for _ in range(100):
        got = perturb_procedure(proc, 0.2, sp, rng)
        for comp in (got.first, got.second):
            space = sp[comp.space_id]
            assert np.all(comp.values >= space.lower)
            assert np.all(comp.values <= space.upper)


def make_action_teacher():
    demos = [(np.zeros((2, 14)), Outcome(OBJECT1, np.array([0.2, 0.2]))),
             (np.ones((2, 14)) * 0.1, Outcome(OBJECT1, np.array([0.8, 0.8])))]
    return ActionTeacher("action-teacher-1", {OBJECT1}, demos, spaces())


def test_action_teacher_selects_nearest_demo():
    teacher = make_action_teacher()
    rng = np.random.default_rng(7)
    _, outcome = teacher.select_demo(Outcome(OBJECT1, np.array([0.25, 0.25])), rng)
    assert np.allclose(outcome.values, [0.2, 0.2])


def test_mimic_action_replay_then_perturb():
    teacher = make_action_teacher()
    p = params()
    rng = np.random.default_rng(8)
    goal = Outcome(OBJECT1, np.array([0.2, 0.2]))
    exact = mimic_action(goal, teacher, rng, p, replay=True)
    assert np.array_equal(exact, teacher.demos[0][0])
    perturbed = mimic_action(goal, teacher, rng, p, replay=False)
    assert perturbed.shape == exact.shape  # never longer than the demo
    assert not np.array_equal(perturbed, exact)
    assert np.all(perturbed >= p.param_lower) and np.all(perturbed <= p.param_upper)


def test_zero_demo_noise_degenerates_to_replay():
    teacher = make_action_teacher()
    from dataclasses import replace
    p = replace(params(), sigma_demo=0.0)
    rng = np.random.default_rng(21)
    goal = Outcome(OBJECT1, np.array([0.2, 0.2]))
    perturbed = mimic_action(goal, teacher, rng, p, replay=False)
    assert np.array_equal(perturbed, teacher.demos[0][0])


def test_empty_repertoire_rejected():
    with pytest.raises(ValueError):
        ActionTeacher("empty", {OBJECT1}, [], spaces())
    with pytest.raises(ValueError):
        RepertoireProcedureTeacher("empty", OBJECT1, [], spaces())


def test_rule_teacher_object_move_decomposition():
    teacher = RuleProcedureTeacher("procedure-teacher-1", OBJECT1, GEO, spaces())
    rng = np.random.default_rng(9)
    goal = Outcome(OBJECT1, np.array([0.8, 0.2]))
    proc = teacher.propose(goal, rng)
    assert proc.space_pair == (TOUCH, TOUCH)
    assert np.allclose(proc.first.values, GEO.object1_start)  # pick on the disk
    assert np.allclose(proc.second.values, [0.8, 0.2])


def test_rule_teacher_joint_goal_projection():
    teacher = RuleProcedureTeacher("procedure-teacher-3", BOTH_OBJECTS, GEO, spaces())
    rng = np.random.default_rng(10)
    goal = Outcome(BOTH_OBJECTS, np.array([0.1, 0.2, 0.3, 0.4]))
    proc = teacher.propose(goal, rng)
    assert proc.space_pair == (OBJECT1, OBJECT2)
    assert np.allclose(proc.first.values, [0.1, 0.2])
    assert np.allclose(proc.second.values, [0.3, 0.4])


def test_rule_teacher_out_of_domain_uses_own_space():
    teacher = RuleProcedureTeacher("procedure-teacher-2", OBJECT2, GEO, spaces())
    rng = np.random.default_rng(11)
    proc = teacher.propose(Outcome(BOTH_OBJECTS, np.array([0.1, 0.2, 0.3, 0.4])), rng)
    assert proc.space_pair == (TOUCH, TOUCH)
    assert np.allclose(proc.first.values, GEO.object2_start)


def test_burst_inversion_reproduces_realizable_sounds():
    from soundtable.table import TableState, burst_sound
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(300):
        blue = rng.uniform(0.0, 1.0, 2)
        green = rng.uniform(0.0, 1.0, 2)
        if np.linalg.norm(green - blue) < 2 * GEO.object_radius:
            continue
        state = TableState(geometry=GEO, object1=blue, object2=green, moved1=True,
                           moved2=True, burst=None, touches=(), carrying=None)
        sound = burst_sound(state)
        err = verify_inversion(sound.frequency, sound.level, sound.rhythm, GEO)
        worst = max(worst, err)
    assert worst < 1e-6


def test_burst_inversion_placements_land_on_table():
    rng = np.random.default_rng(13)
    for _ in range(200):
        f = rng.uniform(-1, 1)
        l = rng.uniform(-1, 1)
        b = rng.uniform(0.05, 1.0)
        blue, green = invert_burst(f, l, b, GEO)
        assert GEO.contains(blue)
        assert GEO.contains(green)


def test_rule_teacher_burst_goal_self_consistent():
    teacher = RuleProcedureTeacher("procedure-teacher-4", BURST, GEO, spaces())
    rng = np.random.default_rng(14)
    from soundtable.table import TableState, burst_sound
    # realizable request: forward-generate from a placement
    state = TableState(geometry=GEO, object1=np.array([0.25, 0.3]),
                       object2=np.array([0.6, 0.7]), moved1=True, moved2=True,
                       burst=None, touches=(), carrying=None)
    sound = burst_sound(state)
    goal = Outcome(BURST, np.array([sound.frequency, sound.level, sound.rhythm]))
    proc = teacher.propose(goal, rng)
    assert proc.space_pair == (OBJECT1, OBJECT2)
    check = TableState(geometry=GEO, object1=proc.first.values,
                       object2=proc.second.values, moved1=True, moved2=True,
                       burst=None, touches=(), carrying=None)
    verify = burst_sound(check)
    assert abs(verify.frequency - sound.frequency) < 1e-6
    assert abs(verify.level - sound.level) < 1e-6
    assert abs(verify.rhythm - sound.rhythm) < 1e-6


def test_rule_teacher_maintained_goal_decomposition():
    from soundtable.outcomes import MAINTAINED
    sp = build_spaces(GEO, include_maintained=True)
    teacher = RuleProcedureTeacher("procedure-teacher-5", MAINTAINED, GEO, sp)
    rng = np.random.default_rng(17)
    goal = Outcome(MAINTAINED, np.array([0.2, 0.1, 0.5, 0.3]))
    proc = teacher.propose(goal, rng)
    assert proc.space_pair == (BURST, TOUCH)
    assert np.allclose(proc.first.values, goal.values[:3])
    # the touch lies at the sustain-implied distance from the green target
    _, green = invert_burst(*goal.values[:3], geometry=GEO)
    dist = np.linalg.norm(proc.second.values - green)
    assert dist == pytest.approx(0.3 * GEO.diagonal, abs=1e-9)
    assert GEO.contains(proc.second.values)


def test_mimic_procedure_replay_then_perturb():
    teacher = RuleProcedureTeacher("procedure-teacher-1", OBJECT1, GEO, spaces())
    p = params()
    sp = spaces()
    rng = np.random.default_rng(15)
    goal = Outcome(OBJECT1, np.array([0.8, 0.2]))
    exact = mimic_procedure(goal, teacher, rng, p, sp, replay=True)
    assert np.allclose(exact.second.values, [0.8, 0.2])
    perturbed = mimic_procedure(goal, teacher, rng, p, sp, replay=False)
    assert perturbed.space_pair == exact.space_pair
    assert not np.allclose(perturbed.second.values, exact.second.values)


def test_repertoire_procedure_teacher_nearest():
    sp = spaces()
    demos = [(Procedure(Outcome(OBJECT1, np.array([0.2, 0.2])),
                        Outcome(OBJECT2, np.array([0.8, 0.8]))),
              Outcome(BOTH_OBJECTS, np.array([0.2, 0.2, 0.8, 0.8]))),
             (Procedure(Outcome(OBJECT1, np.array([0.6, 0.6])),
                        Outcome(OBJECT2, np.array([0.1, 0.9]))),
              Outcome(BOTH_OBJECTS, np.array([0.6, 0.6, 0.1, 0.9])))]
    teacher = RepertoireProcedureTeacher("procedure-teacher-3", BOTH_OBJECTS, demos, sp)
    rng = np.random.default_rng(16)
    proc = teacher.propose(Outcome(BOTH_OBJECTS, np.array([0.58, 0.6, 0.1, 0.9])), rng)
    assert np.allclose(proc.first.values, [0.6, 0.6])


def test_transfer_lump_loader_flags_records(tmp_path):
    from soundtable.memory import ProcedureRecord, dump_procedures
    reached = Outcome(BOTH_OBJECTS, np.array([0.2, 0.2, 0.8, 0.8]))
    proc = Procedure(Outcome(OBJECT1, np.array([0.2, 0.2])),
                     Outcome(OBJECT2, np.array([0.8, 0.8])))
    path = tmp_path / "lump.jsonl"
    dump_procedures([ProcedureRecord(procedure=proc, reached=reached, length=None)], path)
    records = load_transfer_lump(path)
    assert len(records) == 1
    assert records[0].transferred
    assert records[0].length is None


def test_transfer_lump_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert load_transfer_lump(path) == []
