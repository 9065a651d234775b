import math

import numpy as np
import pytest

from risfed.channel import Placement, make_worker_geometry
from risfed.labeling import RateParams, WorkerProfile, gen_dataset, split

WAVELENGTH = 0.0107
RATE = RateParams(bandwidth=1e7, tx_power=0.5, noise_psd=4e-21)


def small_geometry(spacing_wl=0.25, rx_az_deg=28.0, tx_az_deg=-22.0, rx_el_deg=2.0, seed=7, key=1):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))
    tx = Placement(distance=30.0, azimuth=math.radians(tx_az_deg), elevation=0.0)
    rx = Placement(distance=20.0, azimuth=math.radians(rx_az_deg), elevation=math.radians(rx_el_deg))
    return make_worker_geometry(10, 10, spacing_wl * WAVELENGTH, WAVELENGTH, tx, rx, 4, rng)


def small_worker_data(worker_id=0, J=240, dataset_seed=99, **geom_kw):
    profile = WorkerProfile(worker_id, small_geometry(key=worker_id + 1, **geom_kw), RATE)
    rng = np.random.default_rng(np.random.SeedSequence(dataset_seed, spawn_key=(worker_id,)))
    ds = gen_dataset(profile, J, rng)
    return split(ds, 0.8, rng)


@pytest.fixture(scope="session")
def tiny_fleet():
    """Four small, quick worker datasets for federation-level unit tests."""
    angles = [(35.0, -30.0), (28.0, -22.0), (20.0, -35.0), (14.0, -25.0)]
    train_sets, test_sets = [], []
    for w, (rx, tx) in enumerate(angles):
        tr, te = small_worker_data(worker_id=w, J=240, rx_az_deg=rx, tx_az_deg=tx,
                                   spacing_wl=(0.125, 0.25, 0.5, 1.0)[w])
        train_sets.append(tr)
        test_sets.append(te)
    return train_sets, test_sets
