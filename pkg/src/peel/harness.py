"""End-to-end experiment runs, communication-cost accounting, benchmarking and report files.

Randomness is keyed per client: record ``i`` of trial ``t`` draws from
``SeedSequence(seed, spawn_key=(t, purpose, i))``, so a client's reports do not
depend on how many other clients exist or in which order they are processed.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from peel import data as datamod
from peel.attacks import (
    AttackKind,
    OutputSurface,
    compromised_mask,
    inadmissible_encoding_batch,
    output_poison_batch,
    projection_poison,
    rule_poison_budgets,
)
from peel.codec import (
    build_codec,
    encode,
    encode_batch,
    normalized_dense_batch,
    quantization_bits,
    quantize,
    reconstruct_batch,
    restore_batch,
)
from peel.config import ExperimentConfig
from peel.detector import (
    VERDICT_HEADER,
    ThresholdPolicy,
    VerdictTable,
    calibrate_policy,
    classify_batch,
    verdict_rows,
)
from peel.errors import ConfigurationError, DegenerateInputError, StageError
from peel.estimators import baseline_estimate_batch, peel_estimate_batch, true_estimand
from peel.mechanisms import (
    MechanismSpec,
    perturb_batch,
    sparse_source_batch,
    unbiased_transform_batch,
)
from peel.sparsifier import AllocationPolicy, sparsify

DATA, CLIENT, ATTACK, CALIBRATION, BUDGETS = range(5)

CLIENT_STAGES = ("perturb", "sparsify", "normalize", "encode", "attack", "transmit")
SERVER_STAGES = ("reconstruct", "classify", "restore", "estimate")

# Published per-client overheads of the comparison schemes (bits per round).
REFERENCE_COMM_COST = (
    ("Badr et al.", "n float32 parameters after CAT filtering", ">= 466944"),
    ("Shamshad et al.", "ECC public key + ECC ciphertext + AES payload", "2016"),
    ("Parameswarath et al.", "RSA-auth token + signature", ">= 4032"),
    ("emPrivKV", "5 rounds of 1-out-of-d OT, 2048-bit ciphertexts", "5 * ceil(log2 d) * 2048"),
    ("VGRR", "l Pedersen commitments + openings for 1 + d*l_2 slots", "2 * l * 2048 (worst case)"),
    ("Secure OLH", "n commitments + g encoded slots, 2048-bit each", "(2n + g) * 2048"),
    ("OT-HCMS", "4 OT ciphertexts + hashed index + 1-bit response", "8209"),
)


def comm_cost(k: int) -> int:
    """Bits per report when each of the ``k-1`` projected coordinates uses ``ceil(log2(k-1))`` bits.

    The reference figure usually quoted for ``k = 252`` is 2016 bits, which is
    ``252 * 8``; the formula itself gives ``251 * 8 = 2008``. Reports list both.

    Examples:
        >>> comm_cost(252), comm_cost(5), comm_cost(3)
        (2008, 8, 2)
    """
    if k < 3:
        raise ConfigurationError("k must be at least 3")
    return (k - 1) * quantization_bits(k)


def stream(seed: int, trial: int, purpose: int, client_id: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial, purpose, client_id)))


@dataclass
class Population:
    records: np.ndarray
    k: int
    dropped_rows: int = 0
    warnings: list = field(default_factory=list)


def resolve_population(cfg: ExperimentConfig, trial: int = 0) -> Population:
    """Records for the run: the configured CSV columns or a synthetic population."""
    categorical = MechanismSpec(cfg.mechanism, cfg.epsilon, cfg.k or 3).is_categorical
    n = cfg.run.n
    ds = cfg.dataset
    if ds.path is not None:
        loaded = datamod.load_dataset(ds.path, ds.columns, ds.roles)
        if (loaded.role == "categorical") != categorical:
            raise ConfigurationError(f"{cfg.mechanism.value} needs {'categorical' if categorical else 'numeric'} columns")
        k = loaded.k
        if cfg.k is not None:
            if categorical and cfg.k < k:
                raise ConfigurationError(f"dataset has {k} categories but mechanism.k = {cfg.k}")
            if not categorical and cfg.k != k:
                raise ConfigurationError(f"dataset has {k} numeric columns but mechanism.k = {cfg.k}")
            k = cfg.k
        if k < 3:
            raise ConfigurationError("k must be at least 3")
        if loaded.records.shape[0] < n:
            raise ConfigurationError(f"dataset has {loaded.records.shape[0]} complete rows, run.n = {n}")
        return Population(loaded.records[:n], k, loaded.dropped_rows, list(loaded.warnings))
    k = cfg.k
    rng = stream(cfg.run.seed, trial, DATA)
    if categorical:
        f = datamod.default_frequencies(k) if ds.synthetic_frequencies is None else np.array(ds.synthetic_frequencies)
        if len(f) != k:
            raise ConfigurationError(f"synthetic_frequencies has {len(f)} entries, k = {k}")
        return Population(datamod.synthetic_categorical(n, f, rng), k)
    m = datamod.default_means(k) if ds.synthetic_means is None else np.array(ds.synthetic_means)
    if len(m) != k:
        raise ConfigurationError(f"synthetic_means has {len(m)} entries, k = {k}")
    return Population(datamod.synthetic_numeric(n, m, rng), k)


def detector_policy(cfg: ExperimentConfig, spec: MechanismSpec, trial: int) -> ThresholdPolicy:
    """Calibrated thresholds for ``spec``, with explicit config thresholds taking precedence."""
    d = cfg.detector
    policy = calibrate_policy(spec, d.alpha, stream(cfg.run.seed, trial, CALIBRATION),
                              n_records=d.calibration_records,
                              allocation=AllocationPolicy(cfg.run.allocation), quantized=cfg.quantized)
    if d.tau_pattern is None and d.tau_mag is None:
        return policy
    return ThresholdPolicy(alpha=policy.alpha, c_constant=policy.c_constant,
                           tau_pattern=policy.tau_pattern if d.tau_pattern is None else d.tau_pattern,
                           tau_mag=policy.tau_mag if d.tau_mag is None else d.tau_mag)


def detection_metrics(flagged: np.ndarray, compromised: np.ndarray) -> dict:
    """Counts and rates of the detector against the known compromised set.

    Precision is 1.0 when nothing is flagged and recall is 1.0 when nobody is
    compromised, so attack-free runs score perfectly when the detector stays quiet.
    """
    flagged = np.asarray(flagged, dtype=bool)
    compromised = np.asarray(compromised, dtype=bool)
    n = len(flagged)
    tp = int(np.count_nonzero(flagged & compromised))
    fp = int(np.count_nonzero(flagged & ~compromised))
    fn = int(np.count_nonzero(~flagged & compromised))
    honest = n - int(compromised.sum())
    return {
        "n": n,
        "compromised": int(compromised.sum()),
        "flagged": int(flagged.sum()),
        "true_ratio": compromised.sum() / n,
        "estimated_ratio": flagged.sum() / n,
        "precision": tp / (tp + fp) if tp + fp else 1.0,
        "recall": tp / (tp + fn) if tp + fn else 1.0,
        "false_positive_rate": fp / honest if honest else 0.0,
        "true_positives": tp,
        "false_positives": fp,
        "false_negatives": fn,
    }


@dataclass
class TrialResult:
    trial: int
    client_id: np.ndarray
    compromised: np.ndarray
    epsilon: np.ndarray
    ref_epsilon: float
    null_report: np.ndarray
    sent_index: np.ndarray
    sent_sign: np.ndarray
    sidecar: np.ndarray
    Y: np.ndarray
    verdicts: VerdictTable
    restored_index: np.ndarray
    restored_sign: np.ndarray
    flagged: np.ndarray
    policy: ThresholdPolicy
    detection: dict
    estimates: dict
    truth: np.ndarray
    stage_seconds: dict


@dataclass
class RunReport:
    config: ExperimentConfig
    config_hash: str
    k: int
    trials: list
    dropped_rows: int = 0
    warnings: list = field(default_factory=list)
    codec_info: dict = field(default_factory=dict)

    @property
    def detection(self) -> list[dict]:
        return [t.detection for t in self.trials]

    def timing(self) -> list[dict]:
        rows = []
        for stage in CLIENT_STAGES + SERVER_STAGES:
            secs = sum(t.stage_seconds.get(stage, 0.0) for t in self.trials)
            recs = sum(len(t.client_id) for t in self.trials)
            rows.append({"stage": stage, "mean_us": 1e6 * secs / recs, "records": recs})
        return rows

    def comm_cost_rows(self) -> list[dict]:
        q = self.config.quantized
        sent = comm_cost(self.k) if q else 64 * (self.k - 1)
        rows = [{"scheme": "PEEL (this run)",
                 "transmitted_content": f"{self.k - 1} projected coordinates at "
                                        f"{quantization_bits(self.k)} bits (accounting figure)",
                 "bits": str(comm_cost(self.k)), "k": self.k, "quantized_transmission": q,
                 "bits_actually_sent": sent, "source": "computed"},
                {"scheme": "PEEL (reference figure, k = 252)",
                 "transmitted_content": "251 projected coordinates at 8 bits",
                 "bits": "2016", "k": 252, "quantized_transmission": "", "bits_actually_sent": "",
                 "source": "published"}]
        for scheme, content, bits in REFERENCE_COMM_COST:
            rows.append({"scheme": scheme, "transmitted_content": content, "bits": bits, "k": "",
                         "quantized_transmission": "", "bits_actually_sent": "", "source": "published"})
        return rows


def _client_side(cfg, spec_ref, spec_i, codec, x_i, client, trial, compromised, allocation):
    """One client's path; returns ``(z, index, sign, magnitude, y, timings)`` or ``None`` pieces for a null report."""
    timings = {}
    stage = "perturb"
    try:
        t0 = time.perf_counter()
        rng = stream(cfg.run.seed, trial, CLIENT, client)
        z = perturb_batch(spec_i, x_i, rng)
        t1 = time.perf_counter()
        timings["perturb"] = t1 - t0
        stage = "sparsify"
        src = sparse_source_batch(spec_i, z)
        try:
            code = sparsify(src[0], spec_i, allocation, rng)
        except DegenerateInputError:
            timings["sparsify"] = time.perf_counter() - t1
            return z, None, timings
        t2 = time.perf_counter()
        timings["sparsify"] = t2 - t1
        stage = "normalize"
        idx, sign = np.array([code.index]), np.array([code.sign])
        s_tilde = normalized_dense_batch(idx, sign, codec.dim)
        t3 = time.perf_counter()
        timings["normalize"] = t3 - t2
        stage = "encode"
        y = s_tilde @ codec.Phi.T
        side = np.array([code.magnitude])
        t4 = time.perf_counter()
        timings["encode"] = t4 - t3
        stage = "attack"
        a = cfg.attack
        if compromised and a.kind is not AttackKind.NONE and a.kind is not AttackKind.RULE:
            arng = stream(cfg.run.seed, trial, ATTACK, client)
            if a.kind is AttackKind.OUTPUT and a.surface is OutputSurface.PROJECTED:
                y, side = output_poison_batch(y, side, spec_ref, a.strength, arng, a.tamper_sidecar)
            elif a.kind is AttackKind.OUTPUT:
                _, y = inadmissible_encoding_batch(codec, idx, sign, a.strength, arng)
                if a.tamper_sidecar:
                    side = side * (1.0 + a.strength)
            else:
                y = encode_batch(codec, idx, sign, phi=projection_poison(codec, a.strength, arng))
        t5 = time.perf_counter()
        timings["attack"] = t5 - t4
        stage = "transmit"
        if cfg.quantized:
            y = quantize(y, codec.dim)
        timings["transmit"] = time.perf_counter() - t5
        return z, (code.index, code.sign, float(side[0]), y[0]), timings
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, client, exc) from exc


def _run_trial(cfg: ExperimentConfig, pop: Population, trial: int) -> TrialResult:
    n, k = len(pop.records), pop.k
    a = cfg.attack
    codec = build_codec(k, cfg.codec_seed)
    ids = np.arange(n)
    mask = compromised_mask(ids, a.ratio, a.seed, a.target_set) if a.kind is not AttackKind.NONE \
        else np.zeros(n, dtype=bool)
    if a.kind is AttackKind.RULE:
        budgets = rule_poison_budgets(n, cfg.epsilon * n, a.budget_bounds,
                                      stream(cfg.run.seed, trial, BUDGETS), compromised=mask)
        ref_eps = float(budgets[~mask][0])
    else:
        budgets = np.full(n, cfg.epsilon)
        ref_eps = cfg.epsilon
    spec_ref = MechanismSpec(cfg.mechanism, ref_eps, k)
    allocation = AllocationPolicy(cfg.run.allocation)
    policy = detector_policy(cfg, spec_ref, trial)

    seconds = dict.fromkeys(CLIENT_STAGES + SERVER_STAGES, 0.0)
    t_rows = np.zeros((n, k))
    null = np.zeros(n, dtype=bool)
    sent_index = np.full(n, -1, dtype=np.int64)
    sent_sign = np.zeros(n, dtype=np.int64)
    sidecar = np.zeros(n)
    Y = np.zeros((n, k - 1))
    for i in range(n):
        spec_i = spec_ref if budgets[i] == ref_eps else spec_ref.with_epsilon(float(budgets[i]))
        z, sent, tm = _client_side(cfg, spec_ref, spec_i, codec, pop.records[i:i + 1], i, trial,
                                   bool(mask[i]), allocation)
        for key, val in tm.items():
            seconds[key] += val
        t_rows[i] = unbiased_transform_batch(spec_ref, z)[0]
        if sent is None:
            null[i] = True
            continue
        sent_index[i], sent_sign[i], sidecar[i], Y[i] = sent

    live = ~null
    live_ids = ids[live]
    t0 = time.perf_counter()
    s_hat = reconstruct_batch(codec, Y[live])
    bad = ~np.all(np.isfinite(s_hat), axis=1)
    if np.any(bad):
        raise StageError("reconstruct", int(live_ids[np.argmax(bad)]), ValueError("non-finite reconstruction"))
    t1 = time.perf_counter()
    table = classify_batch(codec, Y[live], sidecar[live], spec_ref, policy, client_id=live_ids,
                           quantized=cfg.quantized)
    t2 = time.perf_counter()
    if cfg.quantized:
        # rounding noise amplified by Gamma defeats argmax; the matched quantized pattern is exact
        r_idx, r_sign = table.nearest_index, table.nearest_sign
    else:
        zero = np.max(np.abs(s_hat), axis=1) == 0 if len(s_hat) else np.zeros(0, dtype=bool)
        if np.any(zero):
            raise StageError("restore", int(live_ids[np.argmax(zero)]), ValueError("all-zero reconstruction"))
        r_idx, r_sign = restore_batch(s_hat) if len(s_hat) else (np.zeros(0, np.int64), np.zeros(0, np.int64))
    t3 = time.perf_counter()
    seconds["reconstruct"] += t1 - t0
    seconds["classify"] += t2 - t1
    seconds["restore"] += t3 - t2

    flagged = np.zeros(n, dtype=bool)
    flagged[live] = table.flagged
    restored_index = np.full(n, -1, dtype=np.int64)
    restored_sign = np.zeros(n, dtype=np.int64)
    restored_index[live], restored_sign[live] = r_idx, r_sign

    truth = true_estimand(pop.records, spec_ref, cfg.query)
    n_null = int(null.sum())
    try:
        estimates = {"baseline": baseline_estimate_batch(t_rows, spec_ref, cfg.query, truth)}
        estimates["peel"] = peel_estimate_batch(r_idx, r_sign, sidecar[live], spec_ref, cfg.query,
                                                n_null=n_null, truth=truth)
        keep = ~table.flagged
        if np.any(keep):
            estimates["peel_filtered"] = peel_estimate_batch(
                r_idx[keep], r_sign[keep], sidecar[live][keep], spec_ref, cfg.query,
                n_null=n_null, truth=truth)
    except Exception as exc:
        raise StageError("estimate", -1, exc) from exc
    seconds["estimate"] += time.perf_counter() - t3

    return TrialResult(
        trial=trial, client_id=ids, compromised=mask, epsilon=budgets, ref_epsilon=ref_eps,
        null_report=null, sent_index=sent_index, sent_sign=sent_sign, sidecar=sidecar, Y=Y,
        verdicts=table, restored_index=restored_index, restored_sign=restored_sign, flagged=flagged,
        policy=policy, detection=detection_metrics(flagged, mask), estimates=estimates, truth=truth,
        stage_seconds=seconds,
    )


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Simulate every client through the full pipeline and score the detector.

    Raises:
        StageError: a stage failed; carries the stage name and the client id.
        ConfigurationError: the config is inconsistent with the dataset.
    """
    trials = []
    pop = None
    for trial in range(cfg.run.trials):
        pop = resolve_population(cfg, trial)
        trials.append(_run_trial(cfg, pop, trial))
    codec = build_codec(pop.k, cfg.codec_seed)
    return RunReport(config=cfg, config_hash=cfg.config_hash(), k=pop.k, trials=trials,
                     dropped_rows=pop.dropped_rows, warnings=pop.warnings,
                     codec_info={"k": pop.k, "seed": cfg.codec_seed, "phi_seed": codec.phi_seed,
                                 "cond_theta": codec.cond_theta})


def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])


def write_report(report: RunReport, out_dir=None) -> Path:
    """Emit CSV tables and ``summary.json``; every table row carries the config hash."""
    out = Path(out_dir or report.config.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = report.config_hash

    _write_csv(out / "reports.csv",
               ("trial", "client_id", "compromised", "epsilon", "ref_epsilon", "null_report", "sent_index",
                "sent_sign", "magnitude_sidecar", "restored_index", "restored_sign", "config_hash"),
               ((t.trial, i, t.compromised[i], t.epsilon[i], t.ref_epsilon, t.null_report[i], t.sent_index[i],
                 t.sent_sign[i], t.sidecar[i], t.restored_index[i], t.restored_sign[i], h)
                for t in report.trials for i in range(len(t.client_id))))

    def vrows():
        for t in report.trials:
            for row in verdict_rows(t.verdicts):
                yield (t.trial,) + tuple(row) + (int(t.compromised[row[0]]), h)
    _write_csv(out / "verdicts.csv", ("trial",) + tuple(VERDICT_HEADER) + ("compromised", "config_hash"), vrows())

    def erows():
        for t in report.trials:
            for name, est in t.estimates.items():
                for j in range(len(est.estimate)):
                    yield (t.trial, name, j, t.truth[j], est.raw_estimate[j], est.estimate[j], est.n,
                           est.empirical_mse, h)
    _write_csv(out / "estimates.csv", ("trial", "estimator", "coordinate", "truth", "raw_estimate", "estimate",
                                       "n", "squared_error", "config_hash"), erows())

    det_keys = list(report.trials[0].detection)
    _write_csv(out / "detection.csv", ["trial"] + det_keys + ["config_hash"],
               ([t.trial] + [t.detection[key] for key in det_keys] + [h] for t in report.trials))

    cc = report.comm_cost_rows()
    _write_csv(out / "comm_cost.csv", list(cc[0]) + ["config_hash"], (list(r.values()) + [h] for r in cc))

    _write_csv(out / "timing.csv", ("stage", "mean_us", "records", "config_hash"),
               ((r["stage"], r["mean_us"], r["records"], h) for r in report.timing()))

    if report.config.run.save_transmitted:
        k = report.k
        _write_csv(out / "transmitted.csv",
                   ["trial", "client_id", "ref_epsilon", "magnitude_sidecar"] + [f"y{j}" for j in range(k - 1)]
                   + ["config_hash"],
                   ([t.trial, i, t.ref_epsilon, t.sidecar[i]] + list(t.Y[i]) + [h]
                    for t in report.trials for i in range(len(t.client_id)) if not t.null_report[i]))

    summary = {
        "config_hash": h,
        "config": report.config.to_dict(),
        "codec": report.codec_info,
        "dropped_rows": report.dropped_rows,
        "warnings": report.warnings,
        "quantized_transmission": report.config.quantized,
        "comm_cost_bits": comm_cost(report.k),
        "trials": [{
            "trial": t.trial,
            "ref_epsilon": t.ref_epsilon,
            "null_reports": int(t.null_report.sum()),
            "policy": {"alpha": t.policy.alpha, "c_constant": t.policy.c_constant,
                       "tau_pattern": t.policy.tau_pattern, "tau_mag": t.policy.tau_mag},
            "detection": t.detection,
            "squared_error": {name: e.empirical_mse for name, e in t.estimates.items()},
        } for t in report.trials],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=_num) + "\n")
    return out


def read_transmitted(path) -> dict:
    """Load ``transmitted.csv`` into per-trial arrays: ``{trial: (client_id, ref_eps, sidecar, Y)}``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        ycols = [i for i, c in enumerate(header) if c.startswith("y")]
        rows = list(reader)
    if not rows:
        raise ConfigurationError(f"{path} holds no records")
    out = {}
    trial = np.array([int(r[0]) for r in rows])
    for tr in np.unique(trial):
        sel = [r for r, t in zip(rows, trial) if t == tr]
        out[int(tr)] = (np.array([int(r[1]) for r in sel]), float(sel[0][2]),
                        np.array([float(r[3]) for r in sel]),
                        np.array([[float(r[i]) for i in ycols] for r in sel]))
    return out


def detect_file(cfg: ExperimentConfig, transmitted_path, out_dir) -> list[dict]:
    """Classify a saved ``transmitted.csv`` and write ``detect_verdicts.csv`` plus ``detect_summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash()
    summaries, rows = [], []
    for trial, (ids, ref_eps, side, Y) in read_transmitted(transmitted_path).items():
        k = Y.shape[1] + 1
        spec = MechanismSpec(cfg.mechanism, ref_eps, k)
        codec = build_codec(k, cfg.codec_seed)
        table = classify_batch(codec, Y, side, spec, detector_policy(cfg, spec, trial), client_id=ids,
                               quantized=cfg.quantized)
        rows.extend((trial,) + tuple(r) + (h,) for r in verdict_rows(table))
        summaries.append({"trial": trial, "n": len(ids), "flagged": int(table.flagged.sum()),
                          "estimated_ratio": float(table.flagged.mean())})
    _write_csv(out / "detect_verdicts.csv", ("trial",) + tuple(VERDICT_HEADER) + ("config_hash",), rows)
    (out / "detect_summary.json").write_text(json.dumps({"config_hash": h, "trials": summaries},
                                                        indent=2, sort_keys=True) + "\n")
    return summaries


def bench(cfg: ExperimentConfig, iterations: int = 100_000, warmup: int = 1_000, pool: int = 256) -> list[dict]:
    """Wall time of the client encode path (sparsify, normalize, encode) per report.

    A pool of perturbed reports is prepared up front; the timed loop cycles through it
    so that perturbation cost is excluded.
    """
    k = cfg.k
    if k is None:
        raise ConfigurationError("bench needs mechanism.k")
    spec = MechanismSpec(cfg.mechanism, cfg.epsilon, k)
    codec = build_codec(k, cfg.codec_seed)
    rng = stream(cfg.run.seed, 0, CLIENT)
    if spec.is_categorical:
        x = datamod.synthetic_categorical(pool, datamod.default_frequencies(k), rng)
    else:
        x = datamod.synthetic_numeric(pool, datamod.default_means(k), rng)
    src = sparse_source_batch(spec, perturb_batch(spec, x, rng))
    allocation = AllocationPolicy(cfg.run.allocation)
    clock = time.perf_counter_ns
    times = np.empty(iterations)
    for it in range(-warmup, iterations):
        v = src[it % pool]
        start = clock()
        encode(codec, sparsify(v, spec, allocation, rng))
        elapsed = clock() - start
        if it >= 0:
            times[it] = elapsed
    us = times / 1e3
    return [{"stage": "client_encode", "mechanism": spec.kind.value, "k": k, "iterations": iterations,
             "mean_us": float(us.mean()), "p99_us": float(np.percentile(us, 99))}]


def write_bench(rows: list[dict], cfg: ExperimentConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bench.csv"
    _write_csv(path, list(rows[0]) + ["config_hash"], (list(r.values()) + [cfg.config_hash()] for r in rows))
    return path
