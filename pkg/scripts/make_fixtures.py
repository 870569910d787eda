"""Author the bundled feeder fixtures.

Writes src/pmuplace/data/feeder12.json and feeder34.json.  Both are
synthetic radial feeders: a 12-bus feeder with a single PV unit, and a
34-bus feeder with the familiar 800-series bus names carrying three DER
units (PV 240 kW, wind 250 kW at 0.96 PF, diesel 180 kW at 0.98 PF).  All
lines are three-phase so that every shunt fault type applies on every
segment; impedances and loads are mildly unbalanced per phase.
"""
import json
import math
import numpy as np

rng = np.random.default_rng(424242)

EDGES_34 = [
    ("800", "802"), ("802", "806"), ("806", "808"), ("808", "810"),
    ("808", "812"), ("812", "814"), ("814", "850"), ("850", "816"),
    ("816", "818"), ("818", "820"), ("820", "822"), ("816", "824"),
    ("824", "826"), ("824", "828"), ("828", "830"), ("830", "854"),
    ("854", "856"), ("854", "852"), ("852", "832"), ("832", "858"),
    ("832", "888"), ("888", "890"), ("858", "864"), ("858", "834"),
    ("834", "860"), ("860", "836"), ("836", "862"), ("862", "838"),
    ("836", "840"), ("834", "842"), ("842", "844"), ("844", "846"),
    ("846", "848"),
]

EDGES_12 = [
    ("n01", "n02"), ("n02", "n03"), ("n03", "n04"), ("n04", "n05"),
    ("n05", "n06"), ("n06", "n07"), ("n07", "n08"), ("n04", "n09"),
    ("n09", "n10"), ("n06", "n11"), ("n08", "n12"),
]


def c(z, nd=6):
    return [round(z.real, nd), round(z.imag, nd)]


def line_block(length):
    # per-unit series impedance; unbalanced diagonal, symmetric mutuals
    r0, x0 = 0.0065, 0.0130
    rm, xm = 0.0022, 0.0054
    fac = (0.96, 1.00, 1.04)
    z = np.zeros((3, 3), dtype=complex)
    for a in range(3):
        z[a, a] = complex(r0, x0) * length * fac[a]
        for b in range(a + 1, 3):
            z[a, b] = z[b, a] = complex(rm, xm) * length
    return [[c(z[a, b]) for b in range(3)] for a in range(3)]


def build(edges, source_bus, v_pu, base_v, base_va, load_buses, total_p, ders):
    buses = sorted({b for e in edges for b in e})
    lines = []
    for f, t in edges:
        length = float(rng.uniform(0.4, 2.2))
        lines.append({
            "id": f"{f}-{t}", "from": f, "to": t, "phases": "ABC",
            "z": line_block(length),
        })
    loads = []
    share = total_p / len(load_buses)
    for bus in load_buses:
        tilt = rng.uniform(0.7, 1.3, size=3)
        tilt = tilt / tilt.sum() * 3.0
        entry = {"bus": bus, "s": {}}
        for k, ph in enumerate("ABC"):
            p = share / 3.0 * tilt[k]
            q = p * rng.uniform(0.35, 0.55)
            entry["s"][ph] = [round(p, 6), round(q, 6)]
        loads.append(entry)
    return {
        "base": {"voltage_v": base_v, "power_va": base_va},
        "source": {"bus": source_bus, "v_pu": v_pu, "z": [0.0012, 0.0095]},
        "buses": [{"id": b, "phases": "ABC"} for b in buses],
        "lines": lines,
        "loads": loads,
        "ders": ders,
    }


def pv_profile():
    out = []
    for h in range(24):
        v = math.sin(math.pi * (h - 6) / 13.0) if 6 <= h <= 19 else 0.0
        out.append(round(max(0.0, v) ** 1.3, 4))
    return out


def wind_profile():
    out = []
    for h in range(24):
        v = 0.55 + 0.3 * math.sin(2 * math.pi * (h + 3) / 24.0) + 0.08 * math.sin(
            2 * math.pi * h / 7.0
        )
        out.append(round(min(1.0, max(0.05, v)), 4))
    return out


LOADS_34 = [
    "806", "810", "816", "820", "822", "824", "826", "828", "830", "834",
    "836", "838", "840", "844", "846", "848", "856", "860", "864", "890",
]

ders34 = [
    {"bus": "840", "kind": "PV", "rating_kw": 240.0, "pf": 1.0, "profile": pv_profile()},
    {"bus": "844", "kind": "WTG", "rating_kw": 250.0, "pf": 0.96, "profile": wind_profile()},
    {"bus": "890", "kind": "DG", "rating_kw": 180.0, "pf": 0.98, "profile": [1.0] * 24},
]

ders12 = [
    {"bus": "n10", "kind": "PV", "rating_kw": 100.0, "pf": 1.0, "profile": pv_profile()},
]

feeder34 = build(
    EDGES_34, "800", 1.05, 24900.0, 2.5e6,
    LOADS_34, total_p=0.55, ders=ders34,
)
feeder12 = build(
    EDGES_12, "n01", 1.02, 12470.0, 1.0e6,
    ["n03", "n05", "n07", "n08", "n10", "n11", "n12"], total_p=0.45, ders=ders12,
)

for name, doc in (("feeder34", feeder34), ("feeder12", feeder12)):
    path = f"src/pmuplace/data/{name}.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    print(path, len(doc["buses"]), "buses", len(doc["lines"]), "lines")
