"""Regenerates the bundled toy corpus. Output is committed; rerunning must
reproduce it byte for byte."""
import json
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))
rng = random.Random(20241018)

GENRES = ["Action", "Adventure", "Animation", "Comedy", "Documentary",
          "Drama", "Horror", "Romance", "Sci-Fi", "Thriller"]
TITLE_WORDS = ["Midnight", "Harbor", "Signal", "Garden", "Iron", "Paper", "River",
               "Echo", "Summit", "Lantern", "Static", "Orchard", "Glass", "Winter",
               "Comet", "Atlas", "Velvet", "Canyon", "Meridian", "Ember"]

items = []
for i in range(40):
    primary = GENRES[i % len(GENRES)]
    genres = [primary]
    if i % 3 == 0:
        genres.append(GENRES[(i + 3) % len(GENRES)])
    title = f"{TITLE_WORDS[i % 20]} {TITLE_WORDS[(i * 7 + 3) % 20]} ({1980 + i})"
    items.append({"id": str(i + 1), "title": title, "genres": sorted(set(genres))})

# (gender, age code, occupation code, preferred genres)
USERS = [
    ("F", 25, 20, ["Drama", "Romance"]),
    ("M", 18, 4, ["Action", "Sci-Fi"]),
    ("F", 45, 3, ["Comedy", "Romance"]),
    ("M", 35, 12, ["Sci-Fi", "Thriller"]),
    ("F", 18, 4, ["Animation", "Comedy"]),
    ("M", 50, 13, ["Documentary", "Drama"]),
    ("M", 25, 17, ["Action", "Adventure"]),
    ("F", 35, 1, ["Documentary", "Romance"]),
    ("M", 56, 7, ["Thriller", "Horror"]),
    ("F", 1, 10, ["Animation", "Adventure"]),
    ("M", 45, 2, ["Drama", "Comedy"]),
    ("F", 25, 15, ["Sci-Fi", "Documentary"]),
]

users_lines, ratings_lines = [], []
strong, weak, relevance, scores = [], [], [], []
t0 = 978300000
for u, (gender, age, occ, pref) in enumerate(USERS, start=1):
    uid = str(u)
    users_lines.append(f"{uid}::{gender}::{age}::{occ}::{10000 + u * 37}")
    liked = [it for it in items if set(it["genres"]) & set(pref)]
    other = [it for it in items if not set(it["genres"]) & set(pref)]
    rng.shuffle(liked)
    rng.shuffle(other)
    history_pos, held_out, extra = liked[:6], liked[6:9], liked[9:11]
    history_neg = other[:2]
    ts = t0 + u * 10000
    for it in history_pos:
        ts += rng.randint(60, 3600)
        ratings_lines.append(f"{uid}::{it['id']}::{rng.choice([4, 5])}::{ts}")
    for it in history_neg:
        ts += rng.randint(60, 3600)
        ratings_lines.append(f"{uid}::{it['id']}::{rng.choice([1, 2])}::{ts}")
    for it in held_out:
        relevance.append({"user_id": uid, "item_id": it["id"], "preference": 1})

    good = [it["id"] for it in held_out + extra]
    pad = [it["id"] for it in other[::-1] if it["id"] not in {o["id"] for o in other[:9]}]
    good += pad[:5 - len(good)]
    bad = [it["id"] for it in other[2:7]]
    if u in (10, 11):
        weak_list = list(reversed(good))     # same items: a tie
    elif u == 12:
        good, weak_list = bad, good          # the weaker system wins once
    else:
        weak_list = bad
    strong.append({"system_id": "strong", "user_id": uid, "items": good})
    weak.append({"system_id": "weak", "user_id": uid, "items": weak_list})

    held = {it["id"] for it in held_out}
    for it in held_out + other[2:9]:
        label = 1 if it["id"] in held else 0
        s_strong = round(0.55 + 0.4 * rng.random(), 4) if label else round(0.6 * rng.random(), 4)
        s_weak = round(rng.random(), 4)
        scores.append({"system_id": "strong", "user_id": uid, "item_id": it["id"], "label": label, "score": s_strong})
        scores.append({"system_id": "weak", "user_id": uid, "item_id": it["id"], "label": label, "score": s_weak})

ml = os.path.join(HERE, "movielens")
os.makedirs(ml, exist_ok=True)
with open(os.path.join(ml, "users.dat"), "w") as f:
    f.write("\n".join(users_lines) + "\n")
with open(os.path.join(ml, "movies.dat"), "w") as f:
    f.write("\n".join(f"{it['id']}::{it['title']}::{'|'.join(it['genres'])}" for it in items) + "\n")
with open(os.path.join(ml, "ratings.dat"), "w") as f:
    f.write("\n".join(ratings_lines) + "\n")


def dump(name, rows):
    with open(os.path.join(HERE, name), "w") as f:
        for r in rows:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


dump("strong.jsonl", strong)
dump("weak.jsonl", weak)
dump("relevance.jsonl", relevance)
dump("scores.jsonl", scores)
