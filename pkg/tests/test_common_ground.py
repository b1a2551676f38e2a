from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from emrecg import logic as L
from emrecg.common_ground import (
    Clock,
    CommunicativeAct,
    ConstructionError,
    DEFAULT_AGENTS,
    Entity,
    Gesture,
    MalformedActError,
    StateError,
    UnknownEntityError,
    announce,
    apply_act,
    dumps,
    holds,
    initialize_common_ground,
    mark_target,
)
from emrecg.logic import AVATAR as A, OBSERVER as H, Knows, Perceives
from emrecg.parser import build_lexicon, gesture_act, parse_re, resolve, speech_act, align
from emrecg.parser import scene_from_coordinates

INVENTORY = ["Table", "Cup", "Knife", "Plate", "PurpleBlock1", "PurpleBlock2",
             "RedBlock1", "RedBlock2", "GreenBlock1", "GreenBlock2"]

COORDS = {
    "Table": (0.0, 0.0, 0.0),
    "Cup": (0.2, 0.8, -0.2),
    "Knife": (-0.4, 0.8, -0.5),
    "Plate": (0.4, 0.8, 0.3),
    "PurpleBlock1": (0.1, 0.8, 0.2),
    "PurpleBlock2": (-0.3, 0.8, 0.4),
    "RedBlock1": (-0.4, 0.8, 0.1),
    "RedBlock2": (0.5, 0.8, -0.3),
    "GreenBlock1": (0.0, 0.8, 0.5),
    "GreenBlock2": (0.3, 0.8, 0.1),
}


def scene(labels=INVENTORY):
    return scene_from_coordinates({b: COORDS[b] for b in labels})


@pytest.fixture
def lex():
    from emrecg.dataset import Dataset, DistinctionScope, EMRERecord, Modality

    rec = EMRERecord("v1", "RedBlock1", Modality.ENSEMBLE, 0.8, True, DistinctionScope.ENTIRE_WORLD,
                     "that red block in front of the knife", ("in front of the knife",), COORDS, (), (3,) * 8)
    rec2 = EMRERecord("v2", "RedBlock1", Modality.LANGUAGE, 0.8, False, DistinctionScope.NOT_APPLICABLE,
                      "the other red block", (), COORDS, (), (3,) * 8)
    rec3 = EMRERecord("v3", "RedBlock1", Modality.ENSEMBLE, 0.8, True, DistinctionScope.ENTIRE_WORLD,
                      "this red block", (), COORDS, (), (3,) * 8)
    return build_lexicon(Dataset.from_records([rec, rec2, rec3]))


def t1_state(target="RedBlock1"):
    return mark_target(initialize_common_ground(scene()), target)


# -- initialize ---------------------------------------------------------------

def test_single_object_closure():
    s = initialize_common_ground(scene(["Cup"]))
    assert holds(s, Knows(H, Perceives(A, L.entity("Cup"))))
    assert holds(s, Knows(A, Perceives(H, L.entity("Cup"))))
    assert s.clock is Clock.T0
    assert [(e.time, e.offset_seconds) for e in s.timeline] == [(Clock.T0, 0.0)]


def test_empty_scene():
    s = initialize_common_ground([])
    assert s.perceived == frozenset()
    assert s.delta == frozenset()


def test_ten_objects_give_twenty_facts():
    s = initialize_common_ground(scene())
    # brute-force enumeration: ordered pairs of distinct agents times objects
    expected = {Knows(x, Perceives(y, L.entity(b)))
                for b in INVENTORY for x in (A, H) for y in (A, H) if x != y}
    assert len(expected) == 20
    assert s.delta == expected


def test_duplicate_labels_rejected():
    e = Entity("Cup", (0.0, 0.0, 0.0))
    with pytest.raises(ConstructionError):
        initialize_common_ground([e, e])


def test_relation_with_unknown_entity_rejected():
    with pytest.raises(ConstructionError):
        initialize_common_ground(scene(["Cup"]), [("left", "Cup", "Spoon")])


# -- mark_target --------------------------------------------------------------

def test_mark_target():
    s0 = initialize_common_ground(scene())
    s1 = mark_target(s0, "RedBlock1")
    assert holds(s1, Knows(H, L.target("RedBlock1")))
    assert not holds(s1, Knows(H, Knows(A, L.target("RedBlock1"))))
    assert not holds(s1, Knows(A, L.target("RedBlock1")))
    assert len(s1.delta) == len(s0.delta) + 2
    assert Knows(H, L.target("RedBlock1")) in s1.view(H)
    assert Knows(H, L.target("RedBlock1")) not in s1.view(A)
    assert s1.clock is Clock.T1
    assert s1.timeline[-1].offset_seconds == 1.5


def test_stored_not_box_holds():
    s1 = t1_state()
    phi = L.Not(L.Box(Knows(H, Knows(A, L.target("RedBlock1")))))
    assert holds(s1, phi)


def test_mark_unknown_and_twice():
    s0 = initialize_common_ground(scene())
    with pytest.raises(UnknownEntityError):
        mark_target(s0, "spoon")
    with pytest.raises(StateError):
        mark_target(mark_target(s0, "Cup"), "Knife")


# -- apply_act ----------------------------------------------------------------

def test_gesture_only_act():
    s1 = t1_state()
    s2, events = apply_act(s1, gesture_act(Gesture("RedBlock1", (0.0, 0.0, 1.0))))
    assert len(events) == 1
    fact = Knows(H, Knows(A, L.And(L.points("RedBlock1"), L.target("RedBlock1"))))
    assert events[0].added == frozenset({fact})
    assert holds(s2, fact)
    assert s2.clock is Clock.T2
    assert [e.offset_seconds for e in s2.timeline] == [0.0, 1.5, 3.5]


def test_speech_act_meaning_terms(lex):
    p = resolve(parse_re("that red block in front of the knife", lex), scene(), "RedBlock1")
    s2, events = apply_act(t1_state(), speech_act(p))
    assert len(events) == 1
    terms = {f.body.body.args[0] for f in events[0].added
             if isinstance(f.body.body, L.Atom) and f.body.body.kind is L.AtomKind.KNOWS_MEANING}
    assert terms == {"that", "red", "block", "in_front", "knife"}
    for t in terms:
        assert holds(s2, Knows(H, Knows(A, L.meaning(t))))


def test_ensemble_is_union(lex):
    p = resolve(parse_re("that red block in front of the knife", lex), scene(), "RedBlock1")
    g = Gesture("RedBlock1", (0.0, 0.0, 1.0))
    s1 = t1_state()
    only_g, _ = apply_act(s1, gesture_act(g))
    only_s, _ = apply_act(s1, speech_act(p))
    both, events = apply_act(s1, align(p, g, [e.label for e in scene()]))
    assert both.delta == only_g.delta | only_s.delta
    assert both.delta > only_g.delta and both.delta > only_s.delta
    # gesture event precedes speech event
    assert isinstance(events[0].formula.announcement, L.Atom)
    assert events[0].formula.announcement.kind is L.AtomKind.POINTS


def test_this_with_pointing_adds_near_far(lex):
    p = resolve(parse_re("this red block", lex), scene(), "RedBlock1")
    g = Gesture("RedBlock1", (0.0, 0.0, 1.0))
    s2, _ = apply_act(t1_state(), align(p, g, INVENTORY))
    assert holds(s2, Knows(A, L.near_far("sfc")))
    s2b, _ = apply_act(t1_state(), speech_act(p))
    assert not holds(s2b, Knows(A, L.near_far("sfc")))


def test_act_errors():
    with pytest.raises(MalformedActError):
        CommunicativeAct(DEFAULT_AGENTS[0])
    with pytest.raises(UnknownEntityError):
        apply_act(t1_state(), gesture_act(Gesture("Spoon", (0.0, 0.0, 1.0))))
    with pytest.raises(StateError):
        apply_act(initialize_common_ground(scene()), gesture_act(Gesture("Cup", (0.0, 0.0, 1.0))))


# -- announce -----------------------------------------------------------------

def test_announce_you_see_it():
    s = initialize_common_ground(scene(["Cup"]))
    s = announce(s, Perceives(A, L.entity("Cup")))
    assert holds(s, Knows(H, Perceives(A, L.entity("Cup"))))


def test_announce_idempotent():
    s = initialize_common_ground(scene())
    phi = L.attr("red", "RedBlock1")
    once = announce(s, phi)
    assert announce(once, phi) == once


def test_announce_over_empty_delta():
    s = initialize_common_ground([])
    s = announce(s, L.meaning("red"))
    assert len(s.delta) == 2


def test_announce_ill_formed():
    with pytest.raises(L.FormulaError):
        announce(initialize_common_ground(scene(["Cup"])), L.entity("Spoon"))
    with pytest.raises(L.FormulaError):
        announce(initialize_common_ground(scene(["Cup"])), Knows("alpha_z", L.entity("Cup")))


# -- holds --------------------------------------------------------------------

def test_holds_membership():
    s = initialize_common_ground(scene(["Cup"]))
    assert holds(s, L.entity("Cup"))
    assert not holds(s, L.entity("Knife"))
    assert holds(s, L.PerceptionClosure((A, H), L.entity("Cup")))


def random_formula(rng: random.Random, objects, depth=3):
    if depth == 0 or rng.random() < 0.3:
        kind = rng.choice(["entity", "target", "meaning", "attr", "distinct"])
        b = rng.choice(objects)
        return {
            "entity": lambda: L.entity(b),
            "target": lambda: L.target(b),
            "meaning": lambda: L.meaning(rng.choice(["red", "block", "that", "in_front"])),
            "attr": lambda: L.attr(rng.choice(["red", "green"]), b),
            "distinct": lambda: L.distinct(b, rng.choice(objects)),
        }[kind]()
    op = rng.choice(["K", "P", "L", "not", "and"])
    if op == "and":
        return L.And(random_formula(rng, objects, depth - 1), random_formula(rng, objects, depth - 1))
    if op == "not":
        return L.Not(random_formula(rng, objects, depth - 1))
    cls = {"K": Knows, "P": Perceives, "L": L.Believes}[op]
    return cls(rng.choice([A, H]), random_formula(rng, objects, depth - 1))


def oracle_and(state, phi):
    # independent structural evaluator: descend through And, defer leaves to holds
    if isinstance(phi, L.And):
        return oracle_and(state, phi.left) and oracle_and(state, phi.right)
    return holds(state, phi)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_holds_and_matches_structural_oracle(seed):
    rng = random.Random(seed)
    s = t1_state()
    for _ in range(3):
        s = announce(s, random_formula(rng, INVENTORY, 2))
    phi, psi = random_formula(rng, INVENTORY), random_formula(rng, INVENTORY)
    assert holds(s, L.And(phi, psi)) == (oracle_and(s, phi) and oracle_and(s, psi))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_announced_formula_is_known(seed):
    rng = random.Random(seed)
    s = initialize_common_ground(scene())
    phi = random_formula(rng, INVENTORY)
    s2 = announce(s, phi)
    assert holds(s2, Knows(A, phi)) and holds(s2, Knows(H, phi))


def test_json_is_stable_and_round_trips():
    s = t1_state()
    text = dumps(s)
    assert text == dumps(s)
    d = json.loads(text)
    assert d["clock"] == "t1"
    back = {L.from_dict(p) for p in d["delta"]}
    assert back == set(s.delta)
