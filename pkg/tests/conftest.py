"""Shared desk-scale artifacts for the test session.

Training the helper networks dominates test runtime, so trained artifacts
are cached on disk keyed by a fingerprint of the package sources: any code
change invalidates the cache, repeated runs reuse it.
"""

import hashlib
from pathlib import Path

import numpy as np
import pytest

from dieseltwin.constants import AmbientConditions, EngineConstants
from dieseltwin.deeponet import (
    EGR_SPEC,
    VGT_SPEC,
    CausalDeepONet,
    train_deeponet,
    windows_from_dataset,
)
from dieseltwin.sim import make_case
from dieseltwin.surrogates import (
    SURROGATE_NAMES,
    SurrogateSet,
    build_training_table,
    train_surrogate,
)
from dieseltwin.tl import MultiHeadBody, collect_head_windows, multihead_offline_train

DATA_SEED = 11

# Desk-scale training budgets (acceptance criteria pin some of these).
SURROGATE_EPOCHS = 12_000
SURROGATE_PATIENCE = 2_500
DEEPONET_EPOCHS = 30_000
DEEPONET_STRIDE = 27      # ~200 sliding windows over the lab cases
MULTIHEAD_HEADS = 24
MULTIHEAD_EPOCHS = 30_000
MULTIHEAD_PATIENCE = 6_000


def _source_fingerprint() -> str:
    root = Path(__file__).resolve().parents[1] / "src" / "dieseltwin"
    h = hashlib.sha256()
    for pat in ("*.py", "*.pyx"):
        for f in sorted(root.rglob(pat)):
            h.update(f.name.encode())
            h.update(f.read_bytes())
    h.update(str((DATA_SEED, SURROGATE_EPOCHS, DEEPONET_EPOCHS, DEEPONET_STRIDE,
                  MULTIHEAD_HEADS, MULTIHEAD_EPOCHS)).encode())
    return h.hexdigest()[:12]


@pytest.fixture(scope="session")
def cache_dir() -> Path:
    d = Path(__file__).resolve().parents[1] / ".cache" / "desk" / _source_fingerprint()
    d.mkdir(parents=True, exist_ok=True)
    return d


@pytest.fixture(scope="session")
def engine_constants() -> EngineConstants:
    return EngineConstants()


@pytest.fixture(scope="session")
def ambient() -> AmbientConditions:
    return AmbientConditions()


@pytest.fixture(scope="session")
def lab_cases():
    return {c: make_case(c, seed=DATA_SEED) for c in ("case1", "case2", "case3", "case4")}


@pytest.fixture(scope="session")
def native_cases():
    return {
        c: make_case(c, seed=DATA_SEED, native_rate=True)
        for c in ("case1", "case4", "case6", "case7")
    }


@pytest.fixture(scope="session")
def field_case():
    return make_case("case5", seed=DATA_SEED)


@pytest.fixture(scope="session")
def surrogate_set(cache_dir, lab_cases) -> SurrogateSet:
    marker = cache_dir / "empiricals" / "phi_c.json"
    if marker.exists():
        return SurrogateSet.load(cache_dir / "empiricals")
    tables = build_training_table(list(lab_cases.values()))
    nets = {
        name: train_surrogate(
            name, tables, seed=3, epochs=SURROGATE_EPOCHS, patience=SURROGATE_PATIENCE
        )
        for name in SURROGATE_NAMES
    }
    sset = SurrogateSet(nets)
    sset.save(cache_dir / "empiricals")
    return sset


def _deeponet_windows(native_cases, field_case):
    w_egr = windows_from_dataset(
        native_cases["case1"], "u_egr_del", ("u_egr1_t", "u_egr2_t"), DEEPONET_STRIDE
    ) + windows_from_dataset(
        native_cases["case6"], "u_egr_del", ("u_egr1_t", "u_egr2_t"), DEEPONET_STRIDE
    )
    w_vgt = windows_from_dataset(
        native_cases["case1"], "u_vgt_del", ("u_vgt_t",), DEEPONET_STRIDE
    ) + windows_from_dataset(
        native_cases["case7"], "u_vgt_del", ("u_vgt_t",), DEEPONET_STRIDE
    )
    t_egr = windows_from_dataset(field_case, "u_egr_del", ("u_egr1_t", "u_egr2_t"), 300)
    t_vgt = windows_from_dataset(field_case, "u_vgt_del", ("u_vgt_t",), 300)
    return w_egr, w_vgt, t_egr, t_vgt


@pytest.fixture(scope="session")
def deeponets(cache_dir, native_cases, field_case):
    d = cache_dir / "deeponets"
    if (d / "egr.json").exists():
        return CausalDeepONet.load(d / "egr"), CausalDeepONet.load(d / "vgt")
    w_egr, w_vgt, t_egr, t_vgt = _deeponet_windows(native_cases, field_case)
    d1 = train_deeponet(
        CausalDeepONet.initialize(EGR_SPEC, np.random.default_rng(5)),
        w_egr, t_egr, seed=7, epochs=DEEPONET_EPOCHS,
    )
    d2 = train_deeponet(
        CausalDeepONet.initialize(VGT_SPEC, np.random.default_rng(5)),
        w_vgt, t_vgt, seed=7, epochs=DEEPONET_EPOCHS,
    )
    d1.save(d / "egr")
    d2.save(d / "vgt")
    return d1, d2


@pytest.fixture(scope="session")
def multihead_body(cache_dir, native_cases) -> MultiHeadBody:
    d = cache_dir / "multihead"
    if (d / "multihead_n1.json").exists():
        return MultiHeadBody.load(d)
    windows = collect_head_windows(
        [native_cases["case1"], native_cases["case4"]], MULTIHEAD_HEADS
    )
    body = multihead_offline_train(
        windows, seed=21, epochs=MULTIHEAD_EPOCHS, patience=MULTIHEAD_PATIENCE
    )
    body.save(d)
    return body
