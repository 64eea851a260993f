"""End-to-end orchestration shared by the CLI and the test harness.

Stages: simulate the case datasets, pretrain the helper networks
(empirical surrogates, actuator operator networks, multi-head bodies),
run estimation ensembles, and consolidate reports.  All stages are
deterministic in the configured seed; every artifact directory carries a
manifest with the config hash.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from .config import RunConfig
from .constants import PARAM_NAMES
from .deeponet import (
    EGR_SPEC,
    VGT_SPEC,
    CausalDeepONet,
    train_deeponet,
    windows_from_dataset,
)
from .inverse import build_problem, predict_all, train_baseline
from .inverse.training import TrainResult
from .sim import CASE_IDS, CASE_TABLE, PAPER_NOISE, TimeSeriesDataset, add_noise, make_case
from .surrogates import (
    SURROGATE_NAMES,
    SurrogateEmpiricals,
    SurrogateSet,
    build_training_table,
    rel_l2,
    train_surrogate,
)
from .tl import (
    MultiHeadBody,
    StageSchedule,
    collect_head_windows,
    ensemble_run,
    fewshot_train,
    multistage_train_segment,
)
from .tl.fewshot import hidden_derivative_matrices, _head_states
from .nn import OutputSpec
from .inverse.problem import NET_LAYOUT

__all__ = [
    "simulate_cases",
    "load_case",
    "native_case_path",
    "pretrain_empiricals",
    "pretrain_deeponets",
    "pretrain_multihead",
    "estimate",
    "consolidate_report",
    "member_seed",
    "TRUE_FIELD_VALUE",
    "BAND",
]

TRUE_FIELD_VALUE = 1.0
BAND = 0.075
NATIVE_CASES = ("case1", "case4", "case6", "case7")


def member_seed(master: int, index: int) -> int:
    return int(master) * 1009 + 7919 * int(index)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str))


def _set_durations(cfg: RunConfig) -> dict:
    return {
        "set_i": cfg["simulate.set_i_minutes"] * 60.0,
        "set_ii": cfg["simulate.set_ii_minutes"] * 60.0,
        "set_iii": cfg["simulate.set_iii_minutes"] * 60.0,
        "set_vi": cfg["simulate.set_vi_minutes"] * 60.0,
    }


def native_case_path(data_dir, case_id: str) -> Path:
    return Path(data_dir) / f"{case_id}_native.csv"


def simulate_cases(cfg: RunConfig, out_dir) -> list:
    """Generate the seven case datasets (plus 0.2 s twins where needed)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = cfg["run.seed"]
    durs = _set_durations(cfg)
    written = []
    for case_id in CASE_IDS:
        spec = CASE_TABLE[case_id]
        common = dict(
            seed=seed,
            k=cfg.engine_constants(),
            baseline=cfg.ambient(),
            duration=durs[spec.input_set],
            dt_sim=cfg["simulate.dt_sim"],
            backend=cfg.backend(),
        )
        ds = make_case(case_id, **common)
        ds.meta["config_hash"] = cfg.hash
        path = out_dir / f"{case_id}.csv"
        ds.save(path)
        written.append(path)
        if case_id in NATIVE_CASES:
            nat = make_case(case_id, native_rate=True, **common)
            nat.meta["config_hash"] = cfg.hash
            nat.save(native_case_path(out_dir, case_id))
    _write_json(out_dir / "manifest.json", {
        "config_hash": cfg.hash,
        "seed": seed,
        "cases": [p.name for p in written],
    })
    return written


def load_case(data_dir, case_id: str, native: bool = False) -> TimeSeriesDataset:
    path = native_case_path(data_dir, case_id) if native else Path(data_dir) / f"{case_id}.csv"
    if not path.exists():
        raise FileNotFoundError(f"missing dataset {path}; run `simulate` first")
    return TimeSeriesDataset.load(path)


def _test_errors(sset: SurrogateSet, case5: TimeSeriesDataset) -> dict:
    from .surrogates.empirical import _feature

    out = {}
    for name in SURROGATE_NAMES:
        net = sset[name]
        feats = [_feature(case5, ch) for ch in net.schema.inputs]
        truth = case5.channels[net.schema.label_channel]
        pred = np.asarray(net.predict(feats))
        if net.schema.row_filter is not None:
            keep = net.schema.row_filter(np.column_stack(feats), truth)
            pred, truth = pred[keep], truth[keep]
        out[name] = rel_l2(pred, truth)
    return out


def pretrain_empiricals(cfg: RunConfig, data_dir, out_dir, force: bool = False) -> dict:
    out_dir = Path(out_dir) / "empiricals"
    report_path = out_dir / "report.json"
    if report_path.exists() and not force:
        raise FileExistsError(f"{out_dir} exists; rerun with --force to retrain")
    lab = [load_case(data_dir, c) for c in ("case1", "case2", "case3", "case4")]
    tables = build_training_table(lab)
    nets = {}
    for name in SURROGATE_NAMES:
        nets[name] = train_surrogate(
            name,
            tables,
            seed=cfg["run.seed"],
            epochs=cfg["pretrain.surrogate_epochs"],
            patience=cfg["pretrain.surrogate_patience"],
        )
    sset = SurrogateSet(nets)
    sset.save(out_dir)
    report = {
        "config_hash": cfg.hash,
        "train_rel_l2": {n: nets[n].train_rel_l2 for n in SURROGATE_NAMES},
        "epochs_run": {n: nets[n].epochs_run for n in SURROGATE_NAMES},
    }
    try:
        case5 = load_case(data_dir, "case5")
        report["test_rel_l2"] = _test_errors(sset, case5)
    except FileNotFoundError:
        pass
    _write_json(report_path, report)
    return report


def pretrain_deeponets(cfg: RunConfig, data_dir, out_dir, force: bool = False) -> dict:
    out_dir = Path(out_dir) / "deeponets"
    report_path = out_dir / "report.json"
    if report_path.exists() and not force:
        raise FileExistsError(f"{out_dir} exists; rerun with --force to retrain")
    stride = cfg["pretrain.deeponet_stride"]
    case1 = load_case(data_dir, "case1", native=True)
    case6 = load_case(data_dir, "case6", native=True)
    case7 = load_case(data_dir, "case7", native=True)
    w_egr = windows_from_dataset(case1, "u_egr_del", ("u_egr1_t", "u_egr2_t"), stride)
    w_egr += windows_from_dataset(case6, "u_egr_del", ("u_egr1_t", "u_egr2_t"), stride)
    w_vgt = windows_from_dataset(case1, "u_vgt_del", ("u_vgt_t",), stride)
    w_vgt += windows_from_dataset(case7, "u_vgt_del", ("u_vgt_t",), stride)
    try:
        case5 = load_case(data_dir, "case5")
        t_egr = windows_from_dataset(case5, "u_egr_del", ("u_egr1_t", "u_egr2_t"), 300)
        t_vgt = windows_from_dataset(case5, "u_vgt_del", ("u_vgt_t",), 300)
    except FileNotFoundError:
        t_egr, t_vgt = (), ()

    seed = cfg["run.seed"]
    kwargs = dict(
        seed=seed,
        epochs=cfg["pretrain.deeponet_epochs"],
        batch_rows=cfg["pretrain.deeponet_batch_rows"],
        label_noise=cfg["pretrain.deeponet_label_noise"],
    )
    d1 = train_deeponet(
        CausalDeepONet.initialize(EGR_SPEC, np.random.default_rng(seed)), w_egr, t_egr, **kwargs
    )
    d2 = train_deeponet(
        CausalDeepONet.initialize(VGT_SPEC, np.random.default_rng(seed)), w_vgt, t_vgt, **kwargs
    )
    d1.save(out_dir / "egr")
    d2.save(out_dir / "vgt")
    report = {
        "config_hash": cfg.hash,
        "windows": {"egr": len(w_egr), "vgt": len(w_vgt)},
        "errors": [
            {"network": "egr", "output": ch, "train": d1.report.train_rel_l2[ch],
             "test": d1.report.test_rel_l2.get(ch)}
            for ch in EGR_SPEC.outputs
        ] + [
            {"network": "vgt", "output": ch, "train": d2.report.train_rel_l2[ch],
             "test": d2.report.test_rel_l2.get(ch)}
            for ch in VGT_SPEC.outputs
        ],
    }
    _write_json(report_path, report)
    return report


def pretrain_multihead(cfg: RunConfig, data_dir, out_dir, force: bool = False) -> dict:
    out_dir = Path(out_dir) / "multihead"
    report_path = out_dir / "report.json"
    if report_path.exists() and not force:
        raise FileExistsError(f"{out_dir} exists; rerun with --force to retrain")
    case1 = load_case(data_dir, "case1", native=True)
    case4 = load_case(data_dir, "case4", native=True)
    windows = collect_head_windows([case1, case4], cfg["pretrain.multihead_heads"])
    body = multihead_offline_train(
        windows,
        seed=cfg["run.seed"],
        epochs=cfg["pretrain.multihead_epochs"],
        patience=cfg["pretrain.multihead_patience"],
    )
    body.save(out_dir)
    report = {
        "config_hash": cfg.hash,
        "heads": body.head_count,
        "rel_l2": body.rel_l2,
    }
    _write_json(report_path, report)
    return report


# -- estimation ---------------------------------------------------------------


def _load_pretrained(pretrained_dir):
    pretrained_dir = Path(pretrained_dir)
    sset = SurrogateSet.load(pretrained_dir / "empiricals")
    d1 = CausalDeepONet.load(pretrained_dir / "deeponets" / "egr")
    d2 = CausalDeepONet.load(pretrained_dir / "deeponets" / "vgt")
    return sset, d1, d2


def _segment_problem(cfg, field_ds, segment, sset, d1, d2, mask_seed):
    src = SurrogateEmpiricals(sset, mask_seed=mask_seed)
    return build_problem(
        field_ds.segment(segment),
        src,
        cfg.engine_constants(),
        cfg.ambient(),
        n_data=cfg["estimate.points"],
        deeponet_egr=d1,
        deeponet_vgt=d2,
    )


def _fewshot_bundle(body, result, problem):
    feats, _ = hidden_derivative_matrices(body, problem)
    specs_out = {name: OutputSpec(*NET_LAYOUT[name][1]) for name in NET_LAYOUT}
    states = _head_states(result.net_params["heads"], feats, specs_out)
    from .inverse.residuals import physics_residuals

    residuals, inter = physics_residuals(states, result.latents, problem)
    bundle = {"t": problem.t.copy()}
    for ch in ("p_im", "p_em", "omega_t", "x_r", "T_1"):
        bundle[ch] = np.asarray(states[ch])
    for ch, v in inter.items():
        bundle[ch] = np.broadcast_to(np.asarray(v), problem.t.shape).copy()
    return bundle


def estimate(cfg: RunConfig, data_dir, pretrained_dir, out_dir) -> Path:
    """Run the configured method over segments x seeds; write everything."""
    method = cfg["estimate.method"]
    out = Path(out_dir) / f"estimate-{method}-{cfg.hash}"
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    sset, d1, d2 = _load_pretrained(pretrained_dir)
    body = MultiHeadBody.load(Path(pretrained_dir) / "multihead") if method == "fewshot" else None

    field = load_case(data_dir, "case5")
    noise = cfg["estimate.noise"]
    if noise == "paper":
        field = add_noise(field, PAPER_NOISE, seed=member_seed(cfg["run.seed"], 999))

    segments = cfg["estimate.segments"]
    n_seeds = cfg["estimate.seeds"]
    masked = cfg["estimate.mask_dropout"] == "on"
    epochs_baseline = cfg["estimate.epochs_baseline"]
    schedule = StageSchedule().scaled(cfg["estimate.multistage_scale"])
    epochs_fs = cfg["estimate.epochs_fewshot"]
    freeze_fs = int(cfg["estimate.fewshot_freeze_fraction"] * epochs_fs)

    manifest = {
        "config_hash": cfg.hash,
        "method": method,
        "points": cfg["estimate.points"],
        "noise": noise,
        "seeds": n_seeds,
        "segments": list(segments),
        "param_init": "masked values ~ N(lab design value, 0.2), positive-clipped",
        "epochs": {
            "baseline": epochs_baseline,
            "multistage": [schedule.stage1_end, schedule.stage2_end, schedule.total],
            "fewshot": [epochs_fs, freeze_fs],
        },
    }
    _write_json(out / "manifest.json", manifest)

    summary_rows = []
    timing_rows = []
    source_models: dict = {}

    for seg in segments:
        def make_run(seg):
            def run(seed):
                mask_seed = (seed * 31 + 17) if masked else None
                problem = _segment_problem(cfg, field, seg, sset, d1, d2, mask_seed)
                if method == "baseline":
                    return train_baseline(problem, seed, epochs=epochs_baseline)
                if method == "fewshot":
                    return fewshot_train(
                        problem, body, seed, epochs=epochs_fs, lam_freeze=freeze_fs
                    )
                # multistage: first segment trains the full model, later
                # segments transfer from this member's segment-one model.
                if seg == segments[0]:
                    res = train_baseline(problem, seed, epochs=epochs_baseline)
                    source_models[seed] = res
                    return res
                return multistage_train_segment(
                    problem, source_models[seed], seed, schedule=schedule
                )

            return run

        seeds = [member_seed(cfg["run.seed"], i) for i in range(n_seeds)]
        first_result: list = []

        def save_member(seed, result, seg=seg, first_result=first_result):
            if not first_result:
                first_result.append((seed, result))
            tag = f"seg{seg}_seed{seed}"
            np.savetxt(
                runs_dir / f"{tag}_lambda.csv",
                np.column_stack([np.arange(result.epochs), result.lam_trajectory]),
                delimiter=",",
                header="epoch," + ",".join(PARAM_NAMES),
                comments="",
                fmt="%.10g",
            )
            rows = [
                [ep, c["total"]] + [c["physics"][k] for k in ("p_im", "p_em", "omega_t", "x_r", "T_1")]
                + [c["data"][k] for k in ("p_im", "p_em", "omega_t", "W_egr", "T_em")]
                for ep, c in result.loss_history
            ]
            np.savetxt(
                runs_dir / f"{tag}_loss.csv",
                np.asarray(rows),
                delimiter=",",
                header="epoch,total,phys_p_im,phys_p_em,phys_omega_t,phys_x_r,phys_T_1,"
                "data_p_im,data_p_em,data_omega_t,data_W_egr,data_T_em",
                comments="",
                fmt="%.10g",
            )
            _write_json(
                runs_dir / f"{tag}_manifest.json",
                {
                    "config_hash": cfg.hash,
                    "seed": seed,
                    "segment": seg,
                    "method": method,
                    "estimate": result.estimate.tolist(),
                    "seconds": result.seconds,
                    "epochs": result.epochs,
                    "meta": result.meta,
                },
            )

        ens = ensemble_run(make_run(seg), seeds, on_result=save_member)
        for name, stats in ens.summary.items():
            summary_rows.append(
                [seg, name, stats["mean"], stats["std"], stats["min"], stats["max"],
                 stats["q05"], stats["q25"], stats["q50"], stats["q75"], stats["q95"],
                 len(ens.seeds_ok), len(ens.failures)]
            )
        if len(ens.seconds):
            timing_rows.append(
                [method, seg, float(np.mean(ens.seconds)), float(np.std(ens.seconds)),
                 float(np.median(ens.seconds))]
            )
        for seed, reason in ens.failures:
            _write_json(runs_dir / f"seg{seg}_seed{seed}_failed.json",
                        {"seed": seed, "segment": seg, "reason": reason})

        # Trajectory bundle for the first successful member.
        if first_result:
            seed0, result0 = first_result[0]
            mask_seed = (seed0 * 31 + 17) if masked else None
            problem = _segment_problem(cfg, field, seg, sset, d1, d2, mask_seed)
            if method == "fewshot":
                bundle = _fewshot_bundle(body, result0, problem)
            else:
                bundle = predict_all(result0.net_params, result0.latents, problem)
            names = [ch for ch in bundle if ch != "t"]
            bundle_ds = TimeSeriesDataset(
                t=bundle["t"],
                channels={ch: bundle[ch] for ch in names},
                dt=float(bundle["t"][1] - bundle["t"][0]),
                meta={"config_hash": cfg.hash, "segment": seg, "seed": seed0,
                      "method": method},
            )
            (out / "bundles").mkdir(exist_ok=True)
            bundle_ds.save(out / "bundles" / f"seg{seg}_seed{seed0}.csv")

    _write_csv(out / "summary.csv",
               "segment,parameter,mean,std,min,max,q05,q25,q50,q75,q95,n_ok,n_failed",
               summary_rows)
    _write_csv(out / "timing.csv", "method,segment,mean_s,std_s,median_s", timing_rows)
    return out


def _write_csv(path: Path, header: str, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def consolidate_report(run_dir, plots: bool = False) -> dict:
    """In-band fractions and per-segment statistics from an estimate run."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest in {run_dir}; run `estimate` first")
    manifest = json.loads(manifest_path.read_text())
    estimates = {}
    for mpath in sorted((run_dir / "runs").glob("seg*_manifest.json")):
        m = json.loads(mpath.read_text())
        estimates.setdefault(m["segment"], []).append(m["estimate"])

    report = {"config_hash": manifest["config_hash"], "method": manifest["method"],
              "band": BAND, "true_value": TRUE_FIELD_VALUE, "segments": {}}
    rows = []
    for seg, est in sorted(estimates.items()):
        arr = np.asarray(est)
        seg_entry = {}
        for j, name in enumerate(PARAM_NAMES):
            col = arr[:, j]
            in_band = float(np.mean(np.abs(col - TRUE_FIELD_VALUE) <= BAND * TRUE_FIELD_VALUE))
            seg_entry[name] = {
                "mean": float(col.mean()),
                "std": float(col.std(ddof=1)) if col.size > 1 else 0.0,
                "in_band_fraction": in_band,
                "n": int(col.size),
            }
            rows.append([seg, name, col.mean(), seg_entry[name]["std"], in_band, col.size])
        report["segments"][str(seg)] = seg_entry
    _write_json(run_dir / "report.json", report)
    _write_csv(run_dir / "report.csv", "segment,parameter,mean,std,in_band_fraction,n", rows)
    if plots:
        _render_plots(run_dir, estimates)
    return report


def _render_plots(run_dir: Path, estimates: dict) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, len(PARAM_NAMES), figsize=(4 * len(PARAM_NAMES), 4))
    segs = sorted(estimates)
    for j, (ax, name) in enumerate(zip(np.atleast_1d(axes), PARAM_NAMES)):
        data = [np.asarray(estimates[s])[:, j] for s in segs]
        ax.violinplot(data, showmeans=True) if max(len(d) for d in data) > 1 else ax.boxplot(data)
        ax.axhline(TRUE_FIELD_VALUE, color="k", ls=":")
        ax.axhline(TRUE_FIELD_VALUE * (1 + BAND), color="gray", ls=":")
        ax.axhline(TRUE_FIELD_VALUE * (1 - BAND), color="gray", ls=":")
        ax.set_title(name)
        ax.set_xticks(range(1, len(segs) + 1), [f"seg {s}" for s in segs])
    fig.tight_layout()
    fig.savefig(run_dir / "parameters.png", dpi=120)
    plt.close(fig)
