"""Regenerates the bundled test corpora and word vectors (seeded)."""
import json
import math
import random
import re
from pathlib import Path

HERE = Path(__file__).parent
rng = random.Random(7)
# typical norm of 100-dim GloVe vectors
SCALE = 5.0

DATASETS = [
    {
        "id": "city-population", "domain": "society",
        "time": "Year", "geo": "Region", "cat": "District",
        "nums": ["Population", "Income"],
        "cats": ["North", "South", "East", "West", "Central"],
        "topics": ["Harbor", "Orchard", "Glacier"],
    },
    {
        "id": "energy-use", "domain": "economy",
        "time": "Month", "geo": "Province", "cat": "Sector",
        "nums": ["Consumption", "Cost"],
        "cats": ["Residential", "Commercial", "Transport", "Farming", "Mining"],
        "topics": ["Solar", "Coal", "Turbine"],
    },
    {
        "id": "match-stats", "domain": "sports",
        "time": "Season", "geo": "Venue", "cat": "Team",
        "nums": ["Points", "Attendance"],
        "cats": ["Lions", "Hawks", "Sharks", "Bears"],
        "topics": ["Rowing", "Fencing"],
    },
    {
        "id": "trade-flows", "domain": "economy",
        "time": "Quarter", "geo": "Port", "cat": "Partner",
        "nums": ["Exports", "Tariff"],
        "cats": ["Chile", "Kenya", "Norway", "Vietnam"],
        "topics": ["Copper", "Cocoa"],
    },
]


def field(name, ftype):
    return {"field": name, "field_type": ftype}


def template(d, k):
    t, c = field(d["time"], "temporal"), field(d["cat"], "categorical")
    n1, n2 = d["nums"]
    cv = rng.choice(d["cats"])
    options = [
        ("line chart", "trend", t, (n1, "sum"), None,
         {"kind": "trend", "direction": rng.choice(["increasing", "decreasing"])}),
        ("vertical bar chart", "difference", c, (n1, "average"), cv,
         {"kind": "difference", "relation": rng.choice(["higher", "lower"])}),
        ("pie chart", "proportion", c, (n2, "sum"), cv, None),
        ("horizontal bar chart", "rank", c, (n1, "sum"), None,
         {"kind": "rank", "top3": rng.sample(d["cats"], 3)}),
        ("scatter plot", "association", c, (n1, "sum"), None,
         {"kind": "association", "sign": rng.choice(["positive", "negative"])}),
        ("map", "distribution", c, (n2, "sum"), None, None),
        ("area chart", "extreme", t, (n2, "maximum"), None,
         {"kind": "extreme", "extreme": rng.choice(["max", "min"])}),
        ("table", "categorization", c, ("", "count"), None,
         {"kind": "categorization", "count": len(d["cats"])}),
        ("donut chart", "value", None, (n1, "sum"), None, None),
        ("grouped bar chart", "outlier", t, (n2, "average"), None, None),
    ]
    return options[k]


def chart(d, topic, k):
    type_c, type_f, breakdown, (mf, agg), focus_value, meta = template(d, k)
    subspace = [{"field": d["geo"], "value": topic, "field_type": "geographical"}]
    if rng.random() < 0.4:
        subspace.append({"field": d["cat"], "value": rng.choice(d["cats"]), "field_type": "categorical"})
    fact = {"type_c": type_c, "type_f": type_f, "subspace": subspace}
    if breakdown:
        fact["breakdown"] = breakdown
    fact["measure"] = {"field": mf, "aggregation": agg}
    if focus_value:
        fact["focus"] = {"field": d["cat"], "field_type": "categorical", "value": focus_value}
    if meta:
        fact["meta"] = meta
    return fact


def stories():
    vis = []
    n = 0
    for d in DATASETS:
        for topic in d["topics"]:
            kinds = rng.sample(range(10), 5)
            charts = []
            for k in kinds:
                n += 1
                charts.append({"chart_id": f"c{n:03d}", "fact": chart(d, topic, k)})
            vis.append({
                "id": f"{d['id']}/{topic.lower()}",
                "dataset_id": d["id"],
                "domain": d["domain"],
                "kind": "data-story" if len(vis) % 4 else "dashboard",
                "charts": charts,
            })
    return {"visualizations": vis}


def words_of(obj, out):
    if isinstance(obj, dict):
        for k, v in obj.items():
            if k not in ("chart_id", "id", "dataset_id", "domain", "kind", "type_c", "type_f",
                         "field_type", "aggregation", "relation", "direction", "sign", "extreme"):
                words_of(v, out)
    elif isinstance(obj, list):
        for v in obj:
            words_of(v, out)
    elif isinstance(obj, str):
        for w in re.split(r"[\s_\-/]+|(?<=[a-z])(?=[A-Z])", obj):
            w = re.sub(r"[^\w]", "", w).lower()
            if w:
                out.add(w)


def vectors(corpus):
    vocab = set()
    words_of(corpus, vocab)
    vocab |= {"increasing", "decreasing", "higher", "lower", "positive", "negative", "max", "min",
              "categories", "trend"}
    lines = []
    for w in sorted(vocab):
        v = [rng.gauss(0.0, 1.0) for _ in range(100)]
        norm = math.sqrt(sum(x * x for x in v))
        lines.append(w + " " + " ".join(f"{SCALE * x / norm:.6f}" for x in v))
    return f"{len(lines)} 100\n" + "\n".join(lines) + "\n"


def main():
    corpus = stories()
    (HERE / "stories10.json").write_text(json.dumps(corpus, indent=1) + "\n")
    (HERE / "vectors.txt").write_text(vectors(corpus))

    short = {"visualizations": [dict(corpus["visualizations"][0], charts=corpus["visualizations"][0]["charts"][:2])]}
    (HERE / "two_chart_story.json").write_text(json.dumps(short, indent=1) + "\n")

    dup = json.loads(json.dumps(corpus))
    dup["visualizations"][1]["charts"][0]["chart_id"] = dup["visualizations"][0]["charts"][0]["chart_id"]
    (HERE / "duplicate_chart_id.json").write_text(json.dumps(dup, indent=1) + "\n")

    bad = json.loads(json.dumps(corpus))
    bad["visualizations"][2]["charts"][1]["fact"]["breakdown"] = {"field": "Income", "field_type": "numerical"}
    (HERE / "invalid_breakdown.json").write_text(json.dumps(bad, indent=1) + "\n")


if __name__ == "__main__":
    main()
