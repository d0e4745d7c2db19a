"""Regenerates the synthetic dataset, script and search fixtures.

Run from the repository root: python3 fixtures/generate.py
Every output is a pure function of the tables below.
"""
import hashlib
import json
import os

ROOT = os.path.dirname(os.path.abspath(__file__))

COUNTRIES = [
    ("France", "Paris", "Europe"), ("Japan", "Tokyo", "Asia"), ("Kenya", "Nairobi", "Africa"),
    ("Peru", "Lima", "South America"), ("Canada", "Ottawa", "North America"), ("Egypt", "Cairo", "Africa"),
    ("India", "New Delhi", "Asia"), ("Chile", "Santiago", "South America"), ("Norway", "Oslo", "Europe"),
    ("Mexico", "Mexico City", "North America"), ("Ghana", "Accra", "Africa"), ("Spain", "Madrid", "Europe"),
    ("Thailand", "Bangkok", "Asia"), ("Colombia", "Bogota", "South America"), ("Poland", "Warsaw", "Europe"),
    ("Vietnam", "Hanoi", "Asia"), ("Morocco", "Rabat", "Africa"), ("Cuba", "Havana", "North America"),
    ("Greece", "Athens", "Europe"), ("Nepal", "Kathmandu", "Asia"), ("Senegal", "Dakar", "Africa"),
    ("Ecuador", "Quito", "South America"), ("Sweden", "Stockholm", "Europe"), ("Mongolia", "Ulaanbaatar", "Asia"),
    ("Ethiopia", "Addis Ababa", "Africa"), ("Jamaica", "Kingston", "North America"), ("Portugal", "Lisbon", "Europe"),
    ("Iran", "Tehran", "Asia"), ("Uganda", "Kampala", "Africa"), ("Uruguay", "Montevideo", "South America"),
    ("Austria", "Vienna", "Europe"), ("Laos", "Vientiane", "Asia"), ("Mali", "Bamako", "Africa"),
    ("Panama", "Panama City", "North America"), ("Ireland", "Dublin", "Europe"), ("Oman", "Muscat", "Asia"),
    ("Zambia", "Lusaka", "Africa"), ("Bolivia", "Sucre", "South America"), ("Finland", "Helsinki", "Europe"),
    ("Jordan", "Amman", "Asia"), ("Tunisia", "Tunis", "Africa"), ("Honduras", "Tegucigalpa", "North America"),
    ("Hungary", "Budapest", "Europe"), ("Qatar", "Doha", "Asia"), ("Namibia", "Windhoek", "Africa"),
    ("Paraguay", "Asuncion", "South America"), ("Denmark", "Copenhagen", "Europe"), ("Bhutan", "Thimphu", "Asia"),
    ("Rwanda", "Kigali", "Africa"), ("Guatemala", "Guatemala City", "North America"),
]
CONTINENTS = ["Europe", "Asia", "Africa", "South America", "North America"]


def jsonl(path, records):
    with open(os.path.join(ROOT, path), "w") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def factool_record(i, country, capital, continent, hallucinated):
    claims = [
        {"claim": f"The capital of {country} is {capital}.", "label": True},
        {"claim": f"{country} is a country in {continent}.", "label": True},
    ]
    if hallucinated:
        if i % 2 == 0:
            wrong = COUNTRIES[(i + 1) % len(COUNTRIES)][1]
            claims[0] = {"claim": f"The capital of {country} is {wrong}.", "label": False}
        else:
            wrong = CONTINENTS[(CONTINENTS.index(continent) + 1) % len(CONTINENTS)]
            claims[1] = {"claim": f"{country} is a country in {wrong}.", "label": False}
    return {
        "id": f"factool-qa-{i:02d}",
        "prompt": f"What is the capital of {country}, and on which continent is it?",
        "response": " ".join(c["claim"] for c in claims),
        "response_label": all(c["label"] for c in claims),
        "claims": claims,
    }


def factool_qa():
    # 23 hallucinated, 27 factual, interleaved by a fixed stride.
    hallucinated = {(i * 7) % 50 for i in range(23)}
    return [factool_record(i, *COUNTRIES[i], i in hallucinated) for i in range(50)]


ADJECTIVES = ["Silent", "Crimson", "Hidden", "Golden", "Broken", "Distant", "Frozen", "Wild", "Quiet", "Bright"]
NOUNS = ["Harbor", "Garden", "Mountain", "River", "Letter", "Forest", "Mirror", "Station", "Island", "Lantern"]
FIRST = ["Ana", "Ben", "Clara", "David", "Elena", "Farid", "Grace", "Hugo", "Iris", "Jonas", "Keiko", "Luis", "Mira", "Nina", "Omar"]
LAST = ["Alvarez", "Brandt", "Costa", "Dubois", "Eriksen", "Fischer", "Garcia", "Haddad", "Ito", "Jensen"]


def halueval_dialogue():
    records = []
    positives = {(i * 13) % 150 for i in range(80)}
    for i in range(150):
        title = f"The {ADJECTIVES[i % 10]} {NOUNS[(i // 10) % 10]}"
        director = f"{FIRST[i % 15]} {LAST[(i * 3) % 10]}"
        year = 1970 + (i * 7) % 50
        wrong = f"{FIRST[(i + 4) % 15]} {LAST[(i * 3 + 5) % 10]}"
        knowledge = f"{title} was directed by {director} and released in {year}."
        history = f"[Human]: Have you seen {title}? [Assistant]: Yes, it is a memorable film. [Human]: Who directed it?"
        hallucinated = i in positives
        response = f"It was directed by {wrong if hallucinated else director}, and it came out in {year}."
        records.append({
            "knowledge": knowledge,
            "dialogue_history": history,
            "response": response,
            "hallucination": "yes" if hallucinated else "no",
        })
    return records


def opinion(factual, severity, text):
    return json.dumps({"opinion": text, "factuality": factual, "Error severity": severity})


def verdict_rules(claims, flip=False):
    rules = []
    for c in claims:
        factual = c["label"] != flip
        reply = opinion(factual, 0 if factual else 4,
                        "The evidence supports the claim." if factual else "The evidence contradicts the claim.")
        # The trailing newline keeps one claim text from matching a longer one.
        rules.append({"contains": f"[text]: {c['claim']}\n", "reply": reply})
    return rules


def bench():
    samples = [factool_record(i, *COUNTRIES[i], i in {1, 4, 6, 9}) for i in range(10)]
    jsonl("bench/factool_10.jsonl", samples)
    claims = [c for s in samples for c in s["claims"]]
    for name, flip in [("oracle", False), ("anti_oracle", True)]:
        with open(os.path.join(ROOT, f"bench/{name}.json"), "w") as f:
            json.dump({"rules": verdict_rules(claims, flip)}, f, indent=2)
            f.write("\n")


LANDSEER = "The Landseer has a limited range of colours, while the English Mastiff has a wider range."
QUERIES = ["Landseer dog coat colours", "English Mastiff coat colours"]


def search():
    shared = [
        "The English Mastiff comes in fawn, apricot or brindle, always with a black mask.",
        "Landseer Newfoundlands are white with black markings.",
    ]
    per_query = {
        QUERIES[0]: [
            "The Landseer is a dog breed that originated in Canada.",
            shared[1],
            "A Landseer is black and white rather than solid coloured.",
            "Landseers are named after the painter Edwin Landseer.",
            shared[0],
            "The Landseer is recognised as a separate breed in continental Europe.",
            "Landseer puppies are born with their adult markings.",
        ],
        QUERIES[1]: [
            shared[0].upper(),
            "The Mastiff is one of the largest dog breeds by mass.",
            "English Mastiff colours are limited to fawn, apricot and brindle.",
            "Mastiffs shed moderately throughout the year.",
            "  landseer newfoundlands are WHITE, with black markings!  ",
            "The Old English Mastiff was used as a guard dog.",
            "Breed standards disqualify Mastiffs without a dark mask.",
        ],
    }
    os.makedirs(os.path.join(ROOT, "search"), exist_ok=True)
    for q, snippets in per_query.items():
        digest = hashlib.sha256(q.encode()).hexdigest()
        results = [
            {"title": f"Result {i + 1} for {q}", "snippet": s, "url": f"https://example.org/{digest[:8]}/{i + 1}"}
            for i, s in enumerate(snippets)
        ]
        with open(os.path.join(ROOT, "search", f"{digest}.json"), "w") as f:
            json.dump({"query": q, "results": results}, f, indent=2)
            f.write("\n")


def samples_and_scripts():
    os.makedirs(os.path.join(ROOT, "samples"), exist_ok=True)
    os.makedirs(os.path.join(ROOT, "scripts"), exist_ok=True)
    sample = {
        "response_id": "curie",
        "task_kind": "qa",
        "question": "Tell me about Marie Curie.",
        "response_text": "Marie Curie was born in Warsaw. She won two Nobel Prizes, in physics and chemistry.",
    }
    with open(os.path.join(ROOT, "samples/curie.json"), "w") as f:
        json.dump(sample, f, indent=2)
        f.write("\n")
    with open(os.path.join(ROOT, "samples/pleasantry.json"), "w") as f:
        json.dump({
            "response_id": "pleasantry",
            "task_kind": "dialogue",
            "dialogue_history": "[Human]: Thanks for the book tips!",
            "response_text": "My pleasure, let me know if you need more recommendations.",
        }, f, indent=2)
        f.write("\n")
    claims = ["Marie Curie was born in Warsaw.", "Marie Curie won two Nobel Prizes."]
    extract = {"contains": "extract every claim", "reply": json.dumps(claims)}
    for name, labels in [("verify_factual", [True, True]), ("verify_one_false", [True, False])]:
        rules = [extract] + verdict_rules([{"claim": c, "label": l} for c, l in zip(claims, labels)])
        with open(os.path.join(ROOT, f"scripts/{name}.json"), "w") as f:
            json.dump({"rules": rules}, f, indent=2)
            f.write("\n")
    with open(os.path.join(ROOT, "scripts/pleasantry.json"), "w") as f:
        json.dump(["None"], f)
        f.write("\n")
    with open(os.path.join(ROOT, "scripts/retrieve.json"), "w") as f:
        json.dump([json.dumps(QUERIES)], f)
        f.write("\n")
    with open(os.path.join(ROOT, "samples/landseer_claim.txt"), "w") as f:
        f.write(LANDSEER + "\n")


if __name__ == "__main__":
    os.makedirs(os.path.join(ROOT, "datasets"), exist_ok=True)
    os.makedirs(os.path.join(ROOT, "bench"), exist_ok=True)
    jsonl("datasets/factool_qa.jsonl", factool_qa())
    jsonl("datasets/halueval_dialogue.jsonl", halueval_dialogue())
    bench()
    search()
    samples_and_scripts()
