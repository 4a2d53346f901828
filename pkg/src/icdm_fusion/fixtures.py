"""Bundled scenario builders used by the tests, the acceptance suite and ``icdm simulate --fixture``."""

from __future__ import annotations

import math

from .scenario import CellSite, Hotspot, PathLoss, Scenario


def hex_ring_sites(spacing: float, rings: int, tx_power: float = 43.0) -> list[CellSite]:
    """Serving site ``C0`` at the origin plus ``rings`` hexagonal rings, numbered outward."""
    sites = [CellSite("C0", 0.0, 0.0, tx_power, 0)]
    dirs = [(math.cos(math.radians(60 * i)), math.sin(math.radians(60 * i))) for i in range(6)]
    n = 1
    for ring in range(1, rings + 1):
        for side in range(6):
            x0, y0 = dirs[side][0] * ring * spacing, dirs[side][1] * ring * spacing
            dx = dirs[(side + 2) % 6][0] * spacing
            dy = dirs[(side + 2) % 6][1] * spacing
            for step in range(ring):
                sites.append(CellSite(f"C{n}", round(x0 + dx * step, 3), round(y0 + dy * step, 3),
                                      tx_power, n % 12))
                n += 1
    return sites


def toy_three_cell(shadowing_db: float = 6.0) -> Scenario:
    cells = [
        CellSite("A", 0.0, 0.0, 43.0, 1),
        CellSite("B", 1000.0, 0.0, 43.0, 2),
        CellSite("C", -400.0, 900.0, 40.0, 3),
    ]
    return Scenario(
        cells=cells,
        serving_id="A",
        ba_list=("B", "C"),
        hotspots=(Hotspot(0.6, 350.0, 0.0, 150.0), Hotspot(0.4, -100.0, 300.0, 120.0, 200.0)),
        roads=(((-500.0, 0.0), (500.0, 0.0)),),
        pathloss=PathLoss(30.0, 3.5, shadowing_db),
        detection_threshold=-110.0,
        seed=7,
    )


def eight_regions() -> Scenario:
    """Eight short road stubs near the cell edge, 45 degrees apart, one hotspot on each."""
    cells = hex_ring_sites(1000.0, 2)
    roads, hotspots = [], []
    for r in range(8):
        a = math.radians(22.5 + 45.0 * r)
        cx, cy = 700.0 * math.cos(a), 700.0 * math.sin(a)
        tx, ty = -math.sin(a) * 60.0, math.cos(a) * 60.0
        roads.append(((cx - tx, cy - ty), (cx + tx, cy + ty)))
        hotspots.append(Hotspot(1 / 8, cx, cy, 60.0))
    return Scenario(
        cells=cells,
        serving_id="C0",
        ba_list=tuple(c.id for c in cells[1:]),
        hotspots=tuple(hotspots),
        roads=tuple(roads),
        pathloss=PathLoss(30.0, 3.5, 1.5),
        detection_threshold=-110.0,
        seed=11,
    )


# first-ring neighbors that the fusion fixture leaves out of the BA list
OMITTED_FIRST_RING = ("C1", "C2", "C6")


def fusion_scenario() -> Scenario:
    """Two perpendicular roads, all traffic on two cell-edge hotspots.

    Three strong first-ring neighbors are missing from the BA list, so MMRs
    never report them while the drive test does.
    """
    cells = hex_ring_sites(1000.0, 2)
    ba = tuple(c.id for c in cells[1:] if c.id not in OMITTED_FIRST_RING)
    return Scenario(
        cells=cells,
        serving_id="C0",
        ba_list=ba,
        hotspots=(Hotspot(0.5, 520.0, 0.0, 150.0), Hotspot(0.5, 0.0, -520.0, 150.0)),
        roads=(((-650.0, 0.0), (650.0, 0.0)), ((0.0, -650.0), (0.0, 650.0))),
        pathloss=PathLoss(30.0, 3.5, 3.0),
        detection_threshold=-110.0,
        seed=23,
    )


def dense_urban() -> Scenario:
    """Roughly the size of a dense urban serving cell: 123 neighbors, ~609 DT records at 5 m."""
    cells = hex_ring_sites(450.0, 6)[:124]
    neighbors = sorted(cells[1:], key=lambda c: (math.hypot(c.x, c.y), c.id))
    ba = tuple(sorted(c.id for c in neighbors[:103]))
    return Scenario(
        cells=cells,
        serving_id="C0",
        ba_list=ba,
        hotspots=(
            Hotspot(0.35, 180.0, 40.0, 80.0),
            Hotspot(0.25, -30.0, -200.0, 90.0),
            Hotspot(0.20, -150.0, 20.0, 70.0),
            Hotspot(0.20, 20.0, 170.0, 90.0),
        ),
        roads=(((-760.0, 20.0), (760.0, 20.0)), ((10.0, -757.5), (10.0, 757.5))),
        pathloss=PathLoss(30.0, 3.5, 6.0),
        detection_threshold=-125.0,
        ba_limit=103,
        seed=609,
    )


FIXTURES = {
    "toy-three-cell": toy_three_cell,
    "eight-regions": eight_regions,
    "fusion": fusion_scenario,
    "dense-urban": dense_urban,
}
