import math

import numpy as np
import pytest

from oracles import two_ray_power_dbm
from tdmasync.channel import (
    ColocatedNodesError,
    NodePlacement,
    RadioConfig,
    build_link_table,
    connectivity_fraction,
    propagation_delay,
    received_power_dbm,
)

# frozen from the hand oracle in oracles.two_ray_power_dbm
POWER_AT_10KM = -119.95634963777275
POWER_AT_7KM = -113.76027123834302
POWER_AT_1M = 40.04365036222725
POWER_AT_1KM = -79.95634963777275


def test_two_ray_matches_hand_oracle():
    for d, frozen in ((10_000.0, POWER_AT_10KM), (7_000.0, POWER_AT_7KM), (1.0, POWER_AT_1M)):
        assert two_ray_power_dbm(33.0, 1.5, 1.5, d) == pytest.approx(frozen, abs=1e-9)
        assert received_power_dbm(33.0, 1.5, 1.5, d) == pytest.approx(frozen, rel=1e-12)


def test_two_ray_threshold_side():
    assert received_power_dbm(33.0, 1.5, 1.5, 10_000.0) < -114.0
    assert received_power_dbm(33.0, 1.5, 1.5, 7_000.0) > -114.0


def test_two_ray_rejects_colocated():
    with pytest.raises(ColocatedNodesError):
        received_power_dbm(33.0, 1.5, 1.5, 0.0)


def test_power_monotone_in_distance():
    distances = np.geomspace(1.0, 50_000.0, 200)
    powers = [received_power_dbm(33.0, 1.5, 1.5, d) for d in distances]
    assert all(a > b for a, b in zip(powers, powers[1:]))


def test_propagation_delay():
    assert propagation_delay(0.0) == 0.0
    assert propagation_delay(2997.92458) == pytest.approx(1.0e-5, rel=1e-12)
    assert propagation_delay(10_000.0 * math.sqrt(2)) == pytest.approx(
        10_000.0 * math.sqrt(2) / 299_792_458.0, rel=1e-15
    )
    assert propagation_delay(10_000.0 * math.sqrt(2)) == pytest.approx(4.717e-5, rel=1e-3)


def test_link_table_two_nodes_1km():
    table = build_link_table([NodePlacement(0, 0), NodePlacement(1000, 0)], RadioConfig())
    assert table.power_dbm[0, 1] == pytest.approx(POWER_AT_1KM, rel=1e-12)
    assert table.above_threshold[0, 1] and table.above_threshold[1, 0]


def test_link_table_two_nodes_10km():
    table = build_link_table([NodePlacement(0, 0), NodePlacement(10_000, 0)], RadioConfig())
    assert not table.above_threshold[0, 1] and not table.above_threshold[1, 0]


def test_link_table_single_node_empty():
    table = build_link_table([NodePlacement(5, 5)], RadioConfig())
    assert table.n_nodes == 1
    assert not table.above_threshold.any()
    assert connectivity_fraction(table) == 0.0


def test_link_table_rejects_duplicates():
    with pytest.raises(ColocatedNodesError):
        build_link_table([NodePlacement(3, 4), NodePlacement(3, 4)], RadioConfig())


def test_link_table_symmetry():
    rng = np.random.default_rng(3)
    pts = [NodePlacement(x, y) for x, y in rng.uniform(0, 10_000, size=(12, 2))]
    table = build_link_table(pts, RadioConfig())
    assert np.array_equal(table.power_dbm, table.power_dbm.T)
    assert np.array_equal(table.delay_s, table.delay_s.T)
    assert np.array_equal(table.above_threshold, table.above_threshold.T)


def test_connectivity_fraction_full_and_empty():
    pts = [NodePlacement(0, 0), NodePlacement(10, 0), NodePlacement(0, 10), NodePlacement(10, 10)]
    table = build_link_table(pts, RadioConfig())
    assert connectivity_fraction(table) == 1.0

    far = [NodePlacement(0, 0), NodePlacement(90_000, 0), NodePlacement(0, 90_000), NodePlacement(90_000, 90_000)]
    table = build_link_table(far, RadioConfig(side_length_m=100_000))
    assert connectivity_fraction(table) == 0.0


def test_is_connected():
    # two tight pairs far apart: locally connected, globally split
    pts = [NodePlacement(0, 0), NodePlacement(50, 0), NodePlacement(60_000, 0), NodePlacement(60_050, 0)]
    table = build_link_table(pts, RadioConfig())
    assert table.above_threshold[0, 1] and table.above_threshold[2, 3]
    assert not table.is_connected()
