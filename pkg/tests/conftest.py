import pytest

from frameattn.data import SynthConfig, build_folds, split_by_fold, synth_generate, synth_peak_positions
from frameattn.training import synth_default_config, train


@pytest.fixture(scope="session")
def trained_full_model():
    """One full-mode model trained on the canonical synthetic task (seed 7),
    shared by the tests that assert post-training attention behavior."""
    cfg = SynthConfig()
    ds = synth_generate(cfg)
    peaks = synth_peak_positions(cfg)
    train_idx, test_idx = split_by_fold(ds, build_folds(ds, 10), 0)
    params, history = train(ds, synth_default_config(seed=cfg.seed),
                            train_indices=train_idx)
    return {
        "params": params,
        "dataset": ds,
        "peaks": peaks,
        "train_indices": train_idx,
        "test_indices": test_idx,
        "history": history,
    }
