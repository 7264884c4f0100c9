#!/usr/bin/env python3
"""Recompute report.json tallies straight from a trace directory and compare."""

import argparse
import json
import math
import sys
from collections import defaultdict
from fractions import Fraction
from pathlib import Path

CATEGORIES = ["ExplicitControl", "ImplicitIntent", "DrivingAlignment", "EnvironmentAlerts"]
AREAS = ["Maps", "HVAC", "Road", "Phenomenon", "Media", "Apps", "System", "Comms"]
BIN_WIDTH = 250
BINS = 13


def rate(successes, instances):
    if instances == 0:
        return None
    return math.floor(Fraction(1000 * successes, instances) + Fraction(1, 2)) / 10


def tally(rewards):
    n = len(rewards)
    s = sum(rewards)
    return {"instances": n, "successes": s, "rate": rate(s, n)}


def nearest_rank(sorted_values, q):
    rank = max(1, min(len(sorted_values), math.ceil(q / 100 * len(sorted_values))))
    return sorted_values[rank - 1]


def load(path):
    header, steps, outcome = None, [], None
    for line in path.read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        kind = rec["kind"]
        if kind == "header":
            header = rec
        elif kind == "step":
            steps.append(rec)
        elif kind == "outcome":
            outcome = rec
    if header is None or outcome is None:
        raise ValueError(f"{path}: incomplete trace")
    return header, steps, outcome


def recompute(trace_dir):
    groups = defaultdict(lambda: {"all": [], "cat": defaultdict(list), "area": defaultdict(list), "geo": [],
                                  "term": defaultdict(int), "steps": 0, "tokens": []})
    for path in sorted(Path(trace_dir).glob("*.jsonl")):
        h, steps, o = load(path)
        g = groups[(h["variant"], h["backend"])]
        r = o["reward"]
        g["all"].append(r)
        g["cat"][h["category"]].append(r)
        g["area"][h["functional_area"]].append(r)
        if h["geo_dependent"]:
            g["geo"].append(r)
        g["term"][o["terminated_by"]] += 1
        g["steps"] += o["steps_used"]
        g["tokens"].extend(s["reasoning_tokens"] for s in steps)
    out = {}
    for key, g in groups.items():
        tokens = sorted(g["tokens"])
        hist = [0] * BINS
        for t in tokens:
            hist[min(t // BIN_WIDTH, BINS - 1)] += 1
        out[key] = {
            "overall": tally(g["all"]),
            "categories": {c: tally(g["cat"][c]) for c in CATEGORIES},
            "areas": {a: tally(g["area"][a]) for a in AREAS},
            "geo_dependent": tally(g["geo"]),
            "terminated_by": dict(g["term"]),
            "steps_used": g["steps"],
            "tokens": {
                "histogram": hist,
                "steps": len(tokens),
                "median": nearest_rank(tokens, 50) if tokens else 0,
                "p95": nearest_rank(tokens, 95) if tokens else 0,
                "max": tokens[-1] if tokens else 0,
            },
        }
    return out


def compare(expected, report):
    problems = []
    seen = set()
    for g in report["groups"]:
        key = (g["variant"], g["backend"])
        seen.add(key)
        want = expected.get(key)
        if want is None:
            problems.append(f"{key}: group not backed by any trace")
            continue
        for field in ("overall", "categories", "areas", "geo_dependent", "terminated_by", "steps_used"):
            if g[field] != want[field]:
                problems.append(f"{key} {field}: report {g[field]} != traces {want[field]}")
        rt = g["reasoning_tokens"]
        got_tokens = {
            "histogram": [b["count"] for b in rt["histogram"]],
            "steps": rt["steps"],
            "median": rt["median"],
            "p95": rt["p95"],
            "max": rt["max"],
        }
        if got_tokens != want["tokens"]:
            problems.append(f"{key} reasoning_tokens: report {got_tokens} != traces {want['tokens']}")
    for key in expected.keys() - seen:
        problems.append(f"{key}: traces present but no report group")
    return problems


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--traces", required=True)
    ap.add_argument("--report", required=True)
    args = ap.parse_args()
    report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    expected = recompute(args.traces)
    if not expected:
        print("no traces found", file=sys.stderr)
        return 1
    problems = compare(expected, report)
    for p in problems:
        print(p)
    episodes = sum(v["overall"]["instances"] for v in expected.values())
    print(f"{len(expected)} groups, {episodes} episodes, {len(problems)} mismatches")
    return 1 if problems else 0


if __name__ == "__main__":
    sys.exit(main())
