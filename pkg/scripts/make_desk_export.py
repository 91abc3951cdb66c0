#!/usr/bin/env python3
"""Generate the bundled desk-scale export in Safecast "Daily export" layout.

bGeigie-style drive logs: each device drives a handful of sessions around a
home region, logging every 5 s; every row of a session shares the upload
timestamp of its log file. Injected faults: two flat-zero sessions, one
near-zero (failing tube) session and two isolated spikes of 44 and 66 µSv/h.
Fixed cpm sensors and a few corrupt rows exercise the ingest filters.

    python scripts/make_desk_export.py src/radsentry/data/safecast_desk_export.csv
"""
import argparse
import csv
import hashlib
import time

import numpy as np

HEADER = [
    "Captured Time", "Latitude", "Longitude", "Value", "Unit", "Location Name",
    "Device ID", "MD5Sum", "Height", "Surface", "Radiation", "Uploaded Time", "Loader ID",
]

# device id -> (lat, lon, background µSv/h)
DEVICES = {
    "1003": (35.681, 139.767, 0.055),
    "1021": (37.422, 141.032, 0.140),
    "2215": (37.398, 140.388, 0.095),
    "2347": (34.052, -118.244, 0.040),
    "3096": (42.360, -71.058, 0.032),
    "3120": (52.520, 13.405, 0.048),
    "4011": (50.450, 30.523, 0.065),
    "4102": (-33.868, 151.209, 0.027),
}
SESSIONS_PER_DEVICE = 10
YEAR_START = 1483228800  # 2017-01-01 00:00:00 UTC
YEAR_SPAN = 365 * 86400


def fmt(ts, ms=True):
    whole = int(ts)
    text = time.strftime("%Y-%m-%d %H:%M:%S", time.gmtime(whole))
    if ms:
        text += f".{int(round((ts - whole) * 1000)) % 1000:03d}"
    return text


def drive(rng, lat0, lon0, n):
    heading = rng.uniform(0, 2 * np.pi)
    steps = rng.normal(0, 0.15, n).cumsum() + heading
    speed = rng.uniform(2e-4, 6e-4)
    lat = lat0 + rng.normal(0, 0.05) + np.cumsum(np.sin(steps)) * speed
    lon = lon0 + rng.normal(0, 0.05) + np.cumsum(np.cos(steps)) * speed
    return lat, lon


def generate(seed=2017):
    rng = np.random.default_rng(seed)
    rows = []
    faults = {("1021", 3): "zero", ("3120", 6): "zero", ("4102", 2): "low"}
    spikes = {("2215", 5): 44.0, ("2347", 8): 66.0}
    for dev, (lat0, lon0, bg) in DEVICES.items():
        starts = np.sort(rng.uniform(0, YEAR_SPAN - 86400, SESSIONS_PER_DEVICE))
        for s, start in enumerate(starts):
            n = int(rng.integers(95, 156))
            t = YEAR_START + start + 5.0 * np.arange(n)
            lat, lon = drive(rng, lat0, lon0, n)
            local = bg * np.exp(rng.normal(0, 0.12))
            values = local * np.exp(rng.normal(0, 0.22, n))
            kind = faults.get((dev, s))
            if kind == "zero":
                values = np.zeros(n)
            elif kind == "low":
                values = rng.uniform(0.004, 0.009, n)
            if (dev, s) in spikes:
                values[n // 2] = spikes[(dev, s)]
            uploaded = t[-1] + rng.uniform(600, 3 * 86400) + rng.integers(0, 1000) / 1000
            loader = int(rng.integers(10000, 99999))
            for i in range(n):
                v = round(float(values[i]), 4)
                md5 = hashlib.md5(f"{dev}{t[i]}{v}".encode()).hexdigest()
                rows.append([
                    fmt(t[i], ms=False), f"{lat[i]:.6f}", f"{lon[i]:.6f}", f"{v}", "usv", "",
                    dev, md5, "", "", "", fmt(uploaded), str(loader),
                ])
    # fixed-sensor counters reported in cpm: filtered out at ingest
    for k in range(1500):
        t = YEAR_START + rng.uniform(0, YEAR_SPAN)
        dev = str(100 + k % 6)
        rows.append([
            fmt(t, ms=False), f"{35 + rng.normal(0, 1):.6f}", f"{139 + rng.normal(0, 1):.6f}",
            f"{int(rng.integers(18, 65))}", "cpm", "", dev, "", "", "", "",
            fmt(t + rng.uniform(60, 600)), "",
        ])
    order = rng.permutation(len(rows))
    rows = [rows[i] for i in order]
    # a few corrupt lines
    rows.insert(17, ["2017-02-11 03:14:15", "abc", "139.7", "0.05", "usv", "", "1003", "", "", "", "", "2017-02-11 05:00:00.000", ""])
    rows.insert(503, ["2017-05-02 10:00:00", "35.6", "139.7", "0.05", "usv"])
    rows.insert(4040, ["2017-07-21 08:00:00", "135.6", "139.7", "0.05", "usv", "", "1003", "", "", "", "", "2017-07-21 09:00:00.000", ""])
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--seed", type=int, default=2017)
    args = ap.parse_args()
    rows = generate(args.seed)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
