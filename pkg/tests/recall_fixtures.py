"""Ten crafted queries over a ten-image database, with first-match ranks
worked out by hand for each ground-truth mode.

Database image d<i> sits at east = 100 * i, north = 0, heading = 30 * i,
frame = 100 * i.
"""

from hashvpr.geo import PlaceRecord

DATABASE = [PlaceRecord(f"d{i}", 100.0 * i, 0.0, 30.0 * i, 100 * i) for i in range(10)]

# (east, north, heading, frame, ranked ids)
QUERIES = [
    (10.0, 0.0, 10.0, 5, ["d0", "d1", "d2"]),
    (100.0, 24.9, 90.0, 110, ["d2", "d1", "d3"]),           # 24.9 m; 60 deg off; frame edge
    (200.0, 25.1, 60.0, 189, ["d2", "d3"]),                 # 25.1 m; 11 frames
    (300.0, 0.0, 100.0, 300, ["d4", "d3"]),
    (400.0, 0.0, 350.0, 0, ["d4"]),                         # 130 deg off
    (505.0, 5.0, 170.0, 495, ["d0", "d1", "d2", "d3", "d4", "d5"]),
    (600.0, -20.0, 200.0, 610, ["d6", "d7"]),
    (690.0, 0.0, 0.0, 690, ["d7", "d6"]),
    (800.0, 0.0, 230.0, 1000, ["d9", "d0", "d8"]),
    (15.0, 15.0, 355.0, 8, ["d5", "d0"]),                   # 21.2 m; heading wraps to 5 deg
]

QUERY_RECORDS = [PlaceRecord(f"q{i}", e, n, h, f) for i, (e, n, h, f, _) in enumerate(QUERIES)]
RANKED = [r for *_, r in QUERIES]

FIRST_MATCH = {
    "geo": [1, 2, None, 2, 1, 6, 1, 1, 3, 2],
    "geo-angle": [1, None, None, 2, None, 6, 1, None, 3, 2],
    "frame": [1, 2, None, 2, None, 6, 1, 1, None, 2],
}

RECALL = {
    "geo": {1: 0.4, 5: 0.8, 10: 0.9},
    "geo-angle": {1: 0.2, 5: 0.5, 10: 0.6},
    "frame": {1: 0.3, 5: 0.6, 10: 0.7},
}
