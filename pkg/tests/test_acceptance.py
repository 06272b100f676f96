"""Acceptance checks. Each test prints a single pass/fail line so the
whole gate can be read off a plain pytest -s run."""

import time

import numpy as np
import pytest

from moduleport.assignment import brute_force_lsa, solve_lsa
from moduleport.cli import main
from moduleport.container import read_container, write_container
from moduleport.errors import StudentWiderThanTeacherError
from moduleport.experiment import ExperimentConfig, run_experiment
from moduleport.layermap import SKIP, plan_layers
from moduleport.matrix import pearson_correlation
from moduleport.peft import ADAPTER, LORA, PeftModuleSet
from moduleport.pipeline import SampleBatch, align_layer, transfer
from moduleport.serialize import module_set_to_container
from moduleport.toy import INCOMPATIBLE, PairConfig, ToyModel

from test_peft import random_adapter, random_lora_layer
from test_pipeline import permuted_with_noise


def _verdict(n, ok, desc):
    print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {desc}")
    assert ok, f"criterion {n} failed: {desc}"


def test_criterion_1_lsa_oracle_equivalence():
    rng = np.random.default_rng(100)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(500):
        rows = int(rng.integers(1, 8))
        cols = int(rng.integers(rows, 8))
        cost = rng.uniform(-1.0, 1.0, (rows, cols))
        if solve_lsa(cost).total_score != brute_force_lsa(cost).total_score:
            mismatches += 1
    elapsed = time.perf_counter() - start
    _verdict(
        1, mismatches == 0 and elapsed < 10.0,
        f"solver vs brute force on 500 matrices, {mismatches} mismatches, {elapsed:.2f}s",
    )


def test_criterion_2_permutation_recovery():
    start = time.perf_counter()
    correct = total = 0
    for seed in range(20):
        rng = np.random.default_rng(200 + seed)
        xs, xt, pi = permuted_with_noise(rng, n=1000, d=32, sigma=0.01)
        sol = align_layer(xs, xt)
        correct += sum(int(m == p) for m, p in zip(sol.mapping, pi))
        total += 32
    elapsed = time.perf_counter() - start
    frac = correct / total
    _verdict(
        2, frac >= 0.99 and elapsed < 5.0,
        f"recovered {correct}/{total} permuted indices ({frac:.4f}), {elapsed:.2f}s",
    )


def test_criterion_3_pearson_correctness():
    rng = np.random.default_rng(300)
    xs = rng.normal(size=(64, 16))
    xt = rng.normal(size=(64, 24))
    got = pearson_correlation(xs, xt)
    worst = 0.0
    for i in range(16):
        for j in range(24):
            ref = np.corrcoef(xs[:, i], xt[:, j])[0, 1]
            worst = max(worst, abs(got[i, j] - ref))
    affine = np.abs(pearson_correlation(2.5 * xs - 3.0, xt) - got).max()
    transpose = np.abs(pearson_correlation(xt, xs).T - got).max()
    ok = worst <= 1e-12 and affine <= 1e-12 and transpose <= 1e-12
    _verdict(
        3, ok,
        f"definitional diff {worst:.2e}, affine {affine:.2e}, transpose {transpose:.2e}",
    )


def test_criterion_4_identity_transfer_and_skip_selection():
    rng = np.random.default_rng(400)
    teacher = PeftModuleSet(
        kind=ADAPTER, d_model=6,
        per_layer=tuple(random_adapter(rng, 6, 3) for _ in range(12)),
    )

    same = transfer(teacher, plan_layers(12, 12, SKIP), None, d_student=6)
    identity_ok = all(
        np.array_equal(a.down_weight, b.down_weight)
        and np.array_equal(a.down_bias, b.down_bias)
        and np.array_equal(a.up_weight, b.up_weight)
        and np.array_equal(a.up_bias, b.up_bias)
        for a, b in zip(teacher.per_layer, same.per_layer)
    )

    skipped = transfer(teacher, plan_layers(12, 6, SKIP, skip_offset=0), None, d_student=6)
    skip_ok = all(
        np.array_equal(teacher.per_layer[2 * l].up_weight, m.up_weight)
        and np.array_equal(teacher.per_layer[2 * l].down_weight, m.down_weight)
        for l, m in enumerate(skipped.per_layer)
    )
    _verdict(
        4, identity_ok and skip_ok,
        f"identity bit-equal={identity_ok}, skip offset selection bit-exact={skip_ok}",
    )


def test_criterion_5_table_scale_shapes():
    rng = np.random.default_rng(500)
    xs = rng.normal(size=(64, 768))
    xt = rng.normal(size=(64, 1024))
    samples = SampleBatch(per_layer=((xs, xt),))
    plan = plan_layers(1, 1, SKIP)

    adapter_set = PeftModuleSet(
        kind=ADAPTER, d_model=1024, per_layer=(random_adapter(rng, 1024, 96),),
    )
    a = transfer(adapter_set, plan, samples, d_student=768).per_layer[0]
    adapter_ok = (
        a.down_weight.shape == (96, 768)
        and a.up_weight.shape == (768, 96)
        and a.up_bias.shape == (768,)
        and a.down_bias.shape == (96,)
    )

    lora_set = PeftModuleSet(
        kind=LORA, d_model=1024, per_layer=(random_lora_layer(rng, 1024, 8),),
    )
    l = transfer(lora_set, plan, samples, d_student=768).per_layer[0]
    lora_ok = (
        l.query.a_weight.shape == (8, 768)
        and l.query.b_weight.shape == (768, 8)
        and l.value.a_weight.shape == (8, 768)
        and l.value.b_weight.shape == (768, 8)
    )
    _verdict(
        5, adapter_ok and lora_ok,
        f"1024->768 adapter shapes ok={adapter_ok}, lora shapes ok={lora_ok}",
    )


def test_criterion_6_gradient_check():
    rng = np.random.default_rng(600)
    worst = 0.0
    for kind in ("adapter", "lora"):
        model = ToyModel.build(kind, 2, 12, 6, 3, seed=601, bottleneck=4, rank=2)
        for k, v in model.trainable.items():
            model.trainable[k] = v + rng.normal(0, 0.1, v.shape)
        x = rng.normal(size=(6, 3, 6))
        y = rng.integers(0, 3, 6)
        _, grads = model.loss_and_grads(x, y)
        for name, g in grads.items():
            arr = model.trainable[name]
            n_coords = min(20, arr.size)
            flat = rng.choice(arr.size, size=n_coords, replace=False)
            for f in flat:
                idx = np.unravel_index(int(f), arr.shape)
                eps = 1e-6
                orig = arr[idx]
                arr[idx] = orig + eps
                lp = model.loss(x, y)
                arr[idx] = orig - eps
                lm = model.loss(x, y)
                arr[idx] = orig
                fd = (lp - lm) / (2 * eps)
                rel = abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-8)
                worst = max(worst, rel)
    _verdict(6, worst < 1e-5, f"worst relative gradient error {worst:.2e}")


def test_criterion_7_determinism(tmp_path):
    cfg = {
        "teacher_depth": 4, "student_depth": 2, "d_teacher": 16, "d_student": 16,
        "d_in": 8, "n_classes": 2, "seeds": [0, 1, 2], "epochs": 1,
        "teacher_epochs": 1, "lr": 0.3, "batch_size": 32, "n_train": 128,
        "n_val": 64, "tokens": 2, "sample_count": 64,
    }
    import json

    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    blobs = []
    for name in ("a", "b"):
        rc = main(["toy", "experiment", "--config", str(cfg_path),
                   "--report", str(tmp_path / name)])
        assert rc == 0
        blobs.append((tmp_path / f"{name}.json").read_bytes())
    reports_ok = blobs[0] == blobs[1]

    rng = np.random.default_rng(700)
    ms = PeftModuleSet(
        kind=ADAPTER, d_model=8,
        per_layer=tuple(random_adapter(rng, 8, 3) for _ in range(3)),
    )
    p1, p2 = tmp_path / "c1", tmp_path / "c2"
    write_container(module_set_to_container(ms), p1)
    write_container(read_container(p1), p2)
    container_ok = p1.read_bytes() == p2.read_bytes()
    _verdict(
        7, reports_ok and container_ok,
        f"repeated experiment byte-identical={reports_ok}, "
        f"container write/read/write byte-identical={container_ok}",
    )


def test_criterion_8_direction_of_effect():
    start = time.perf_counter()
    cfg = ExperimentConfig(
        pair=PairConfig(),  # matching block-copy pair, depths 4->2, d=32
        seeds=tuple(range(10)),
        epochs=2,
        teacher_epochs=2,
        lr=0.5,
        n_train=1024,
        n_val=256,
    )
    report = run_experiment(cfg)
    wins = report["summary"]["step0_loss_wins"]
    delta = report["summary"]["mean_accuracy_delta"]

    incompatible = run_experiment(
        ExperimentConfig(
            pair=PairConfig(mode=INCOMPATIBLE, d_teacher=32, d_student=24),
            seeds=(0, 1, 2),
            epochs=2,
            teacher_epochs=2,
            lr=0.5,
            n_train=1024,
            n_val=256,
        )
    )
    inc_delta = incompatible["summary"]["mean_accuracy_delta"]
    elapsed = time.perf_counter() - start
    ok = wins >= 8 and delta >= 0.0 and elapsed < 300.0
    _verdict(
        8, ok,
        f"matching: step0 wins {wins}/10, mean accuracy delta {delta:+.4f}; "
        f"incompatible (reported, no threshold): delta {inc_delta:+.4f}; {elapsed:.1f}s",
    )


def test_criterion_9_degenerate_handling():
    rng = np.random.default_rng(900)
    xs = rng.normal(size=(50, 4))
    xs[:, 1] = 3.0
    xt = rng.normal(size=(50, 6))
    xt[:, 4] = -2.0
    c = pearson_correlation(xs, xt)
    zero_ok = np.all(c[1, :] == 0.0) and np.all(c[:, 4] == 0.0)
    finite_c = bool(np.isfinite(c).all())

    teacher = PeftModuleSet(
        kind=ADAPTER, d_model=6,
        per_layer=tuple(random_adapter(rng, 6, 3) for _ in range(2)),
    )
    out = transfer(
        teacher, plan_layers(2, 2, SKIP),
        SampleBatch(per_layer=((xs, xt), (xs, xt))), d_student=4,
    )
    finite_out = all(
        np.isfinite(m.down_weight).all() and np.isfinite(m.up_weight).all()
        and np.isfinite(m.up_bias).all()
        for m in out.per_layer
    )

    with pytest.raises(StudentWiderThanTeacherError):
        transfer(teacher, plan_layers(2, 2, SKIP), None, d_student=8)
    _verdict(
        9, zero_ok and finite_c and finite_out,
        f"zero-variance rows/cols zeroed={zero_ok}, correlations finite={finite_c}, "
        f"transferred weights finite={finite_out}, wider student raises distinct error",
    )
