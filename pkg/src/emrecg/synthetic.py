"""Synthetic EMRE-style videos for when the published dump is unavailable.

Scenes use the EMRE object set (table, cup, knife, plate and two blocks in
each of purple/red/green). Each video picks a modality and a templatic
description of a target block; eight simulated annotators rate it from a
latent naturalness that rewards disambiguating, well-matched references.
"""

from __future__ import annotations

import math

import numpy as np

from .dataset import Dataset, DistinctionScope, EMRERecord, Modality, N_ANNOTATORS

TABLE_HEIGHT = 0.8
AGENT_POSITION = (0.0, TABLE_HEIGHT, -1.0)
NEAR_FAR_BOUNDARY = 0.9

OBJECTS = (
    "Cup", "Knife", "Plate",
    "PurpleBlock1", "PurpleBlock2", "RedBlock1", "RedBlock2", "GreenBlock1", "GreenBlock2",
)
BLOCKS = tuple(o for o in OBJECTS if "Block" in o)

_SURFACES = {
    "in_front": ("in front of",),
    "behind": ("behind",),
    "left": ("left of", "to the left of"),
    "right": ("right of", "to the right of"),
    "near": ("near",),
    "touching": ("touching",),
}


def _color(label: str) -> str | None:
    for c in ("purple", "red", "green"):
        if label.lower().startswith(c):
            return c
    return None


def _noun(label: str) -> str:
    return "block" if "Block" in label else label.lower()


def _phrase(label: str) -> list[str]:
    c = _color(label)
    return ([c] if c else []) + [_noun(label)]


def scene_relations(coords: dict[str, tuple[float, float, float]]) -> list[tuple[str, str, str]]:
    """Qualitative relations in the avatar's frame (avatar looks along +z)."""
    rels = []
    labels = [k for k in coords if k != "Table"]
    for a in labels:
        rels.append(("on", a, "Table"))
        for b in labels:
            if a == b:
                continue
            pa, pb = coords[a], coords[b]
            dx, dz = pa[0] - pb[0], pa[2] - pb[2]
            d = math.hypot(dx, dz)
            if dz < -0.1 and abs(dx) < 0.35:
                rels.append(("in_front", a, b))
            if dz > 0.1 and abs(dx) < 0.35:
                rels.append(("behind", a, b))
            if dx < -0.1 and abs(dz) < 0.3:
                rels.append(("left", a, b))
            if dx > 0.1 and abs(dz) < 0.3:
                rels.append(("right", a, b))
            if d < 0.3:
                rels.append(("near", a, b))
            if d < 0.13:
                rels.append(("touching", a, b))
    return rels


def _layout(rng: np.random.Generator) -> dict[str, tuple[float, float, float]]:
    coords = {"Table": (0.0, 0.0, 0.0)}
    placed: list[tuple[float, float]] = []
    for label in OBJECTS:
        for _ in range(200):
            x, z = rng.uniform(-0.7, 0.7), rng.uniform(-0.4, 0.4)
            if all(math.hypot(x - px, z - pz) > 0.11 for px, pz in placed):
                break
        placed.append((x, z))
        coords[label] = (round(float(x), 4), TABLE_HEIGHT, round(float(z), 4))
    return coords


def _candidates(coords, rels, target, color, pps):
    """Objects matching the description (head=block, color, spatial constraints)."""
    relset = set(rels)
    out = []
    for o in BLOCKS:
        if color and _color(o) != color:
            continue
        if all((rel, o, relatum) in relset for rel, relatum in pps):
            out.append(o)
    return out


def _nearest(coords, anchor, options):
    return min(options, key=lambda o: (math.dist(coords[o], coords[anchor]), o))


def _describe(rng, coords, rels, target, modality):
    """Pick demonstrative/other/color/PPs for a description of ``target``."""
    color = _color(target)
    twin = next(o for o in BLOCKS if o != target and _color(o) == color)
    near = math.dist(coords[target], AGENT_POSITION) <= NEAR_FAR_BOUNDARY

    if modality is Modality.ENSEMBLE:
        dem = ("this" if rng.random() < 0.7 else "that") if near else ("that" if rng.random() < 0.7 else "this")
    else:
        dem = "the" if rng.random() < 0.9 else None

    use_color = rng.random() < 0.85
    other = use_color and dem == "the" and rng.random() < 0.25

    # spatial PPs whose relatum resolves (unique or nearest-to-target) to the intended object
    options = []
    for rel, a, b in rels:
        if a != target or b == "Table" or rel not in _SURFACES:
            continue
        same = [o for o in OBJECTS if o != target and _phrase(o) == _phrase(b)]
        if _nearest(coords, target, same) == b:
            options.append((rel, b))
    pps = []
    if options and not other and rng.random() < 0.6:
        first = options[int(rng.integers(len(options)))]
        pps.append(first)
        rest = [o for o in options if o[1] != first[1]]
        if rest and rng.random() < 0.15:
            pps.append(rest[int(rng.integers(len(rest)))])

    tokens = ([dem] if dem else []) + (["other"] if other else []) + ([color] if use_color else []) + ["block"]
    descriptors = []
    for rel, b in pps:
        surface = _SURFACES[rel][int(rng.integers(len(_SURFACES[rel])))]
        phrase = surface.split() + ["the"] + _phrase(b)
        tokens += phrase
        descriptors.append(" ".join(phrase))

    matches = _candidates(coords, rels, target, color if use_color else None, pps)
    if other:
        unique = len(matches) == 2
    else:
        unique = matches == [target]
    return {
        "dem": dem, "other": other, "color": use_color, "pps": pps, "near": near,
        "tokens": tokens, "descriptors": descriptors, "unique": unique, "twin": twin,
    }


def _naturalness(modality, desc, distance) -> float:
    if modality is Modality.GESTURE:
        return 2.3 - 0.9 * (distance - 1.0)
    mu = 2.8 if modality is Modality.LANGUAGE else 3.5
    if modality is Modality.LANGUAGE:
        mu += 0.9 if desc["unique"] else -0.7
        mu += 0.15 * len(desc["pps"])
    else:
        mu += 0.4 if desc["unique"] else 0.0
        mu -= 0.15 * len(desc["pps"])
        if desc["dem"] == "this":
            mu += 0.4 if desc["near"] else -0.8
        elif desc["dem"] == "that" and desc["near"]:
            mu -= 0.3
    if desc["other"]:
        mu += 0.3
    if not desc["color"]:
        mu -= 0.4
    if desc["dem"] is None:
        mu -= 0.3
    return mu


def generate_records(n_videos: int = 200, seed: int = 0, videos_per_scene: int = 8) -> list[EMRERecord]:
    rng = np.random.default_rng(seed)
    records: list[EMRERecord] = []
    scene = None
    for i in range(n_videos):
        if i % videos_per_scene == 0:
            coords = _layout(rng)
            rels = scene_relations(coords)
            target = BLOCKS[int(rng.integers(len(BLOCKS)))]
            scene = (coords, rels, target)
        coords, rels, target = scene
        modality = (Modality.GESTURE, Modality.LANGUAGE, Modality.ENSEMBLE)[
            int(rng.choice(3, p=(0.2, 0.4, 0.4)))
        ]
        distance = math.dist(coords[target], AGENT_POSITION)
        if modality is Modality.GESTURE:
            desc = {"dem": None, "other": False, "color": True, "pps": [], "tokens": [], "descriptors": [],
                    "unique": True, "near": distance <= NEAR_FAR_BOUNDARY, "twin": None}
        else:
            desc = _describe(rng, coords, rels, target, modality)

        uses_dd = desc["dem"] in ("this", "that")
        if not uses_dd:
            scope = DistinctionScope.NOT_APPLICABLE
        else:
            scope = DistinctionScope.SIMILAR_OBJECTS if rng.random() < 0.5 else DistinctionScope.ENTIRE_WORLD

        mu = _naturalness(modality, desc, distance)
        scores = np.clip(np.rint(mu + rng.normal(0.0, 0.75, size=N_ANNOTATORS)), 1, 5).astype(int)
        records.append(EMRERecord(
            video_id=f"v{i:04d}",
            target_object=target,
            modality=modality,
            agent_distance=round(distance, 4),
            uses_distance_distinction=uses_dd,
            distinction_scope=scope,
            utterance=" ".join(desc["tokens"]),
            relational_descriptors=tuple(desc["descriptors"]),
            object_coordinates=dict(coords),
            relation_set=tuple(rels),
            scores=tuple(int(s) for s in scores),
        ))
    return records


def generate_dataset(n_videos: int = 200, seed: int = 0) -> Dataset:
    return Dataset.from_records(generate_records(n_videos, seed))


def sample_utterances(n: int = 500, seed: int = 0) -> list[str]:
    """``n`` distinct non-empty utterances drawn from the synthetic grammar."""
    rng = np.random.default_rng(seed)
    seen: dict[str, None] = {}
    for _ in range(200 * n):
        coords = _layout(rng)
        rels = scene_relations(coords)
        target = BLOCKS[int(rng.integers(len(BLOCKS)))]
        modality = Modality.ENSEMBLE if rng.random() < 0.5 else Modality.LANGUAGE
        u = " ".join(_describe(rng, coords, rels, target, modality)["tokens"])
        seen.setdefault(u)
        if len(seen) >= n:
            break
    if len(seen) < n:
        raise RuntimeError(f"grammar produced only {len(seen)} distinct utterances")
    return list(seen)
