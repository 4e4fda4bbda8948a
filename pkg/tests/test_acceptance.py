"""Acceptance gate: criteria 1 to 10, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the terminal
summary) or directly with ``python tests/test_acceptance.py``.
"""

import contextlib
import io
import math
import os
import re
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from dyan import io as dio
from dyan.atoms import PoleSet, expand_quadrants, init_ring
from dyan.cli import main as cli_main
from dyan.dictionary import build_encoder
from dyan.metrics import mse, psnr_from_mse, ssim
from dyan.pipeline import SequenceTensor, predict_next
from dyan.solver import fista_batch, soft_threshold
from dyan.synth import SynthSpec, generate, make_dataset
from dyan.training import TrainConfig, prediction_mse, train
import dyan.solver as solver_mod
from oracles import cd_lasso, lasso_objective, scalar_ssim

RESULTS = {}


def record(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def test_criterion_01_solver_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    t0 = time.perf_counter()
    for i in range(200):
        T = int(rng.integers(2, 13))
        N = int(rng.integers(1, 33))
        lam = (0.01, 0.1, 1.0)[i % 3]
        D = rng.standard_normal((T, N))
        D /= np.linalg.norm(D, axis=0)
        y = rng.standard_normal(T)
        c = fista_batch(D, y, lam, max_iter=1_000_000, tol=1e-13, num_threads=1).codes[:, 0]
        ref = cd_lasso(D, y, lam)
        worst = max(worst, abs(lasso_objective(D, y, c, lam) - lasso_objective(D, y, ref, lam)))
    elapsed = time.perf_counter() - t0
    record(1, worst <= 1e-8 and elapsed < 10.0,
           f"max |F_fista - F_cd| = {worst:.2e} (<= 1e-8), {elapsed:.2f} s (< 10 s), 200 instances")


def test_criterion_02_orthonormal_closed_form():
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(50):
        T = int(rng.integers(2, 17))
        N = int(rng.integers(1, T + 1))
        q, _ = np.linalg.qr(rng.standard_normal((T, T)))
        D = q[:, :N]
        Y = 2.0 * rng.standard_normal((T, 8))
        lam = (0.01, 0.1, 0.5, 1.0)[i % 4]
        C = fista_batch(D, Y, lam, max_iter=1000, tol=1e-10).codes
        worst = max(worst, float(np.max(np.abs(C - soft_threshold(D.T @ Y, lam)))))
    record(2, worst <= 1e-6, f"max |c - shrink(D^T y, lam)| = {worst:.2e} (<= 1e-6), 50 instances")


PREDICTION_CASES = [
    # (PoleSet, modes) with every mode pole in the set
    (PoleSet([0.95], [0.3]), ((0.95, 0.3, 1.0, 0.0),)),
    (PoleSet([0.9], [0.0]), ((0.9, 0.0, 1.0, 0.0),)),
    (PoleSet([0.95, 1.05], [0.3, 1.1]), ((0.95, 0.3, 1.0, 0.7), (1.05, 1.1, 0.5, -0.4), (1.0, 0.0, 0.2, 0.0))),
    (PoleSet([0.9, 1.0, 1.1], [0.2, 0.7, 1.3]), ((0.9, 0.2, 0.8, 0.0), (1.1, 1.3, 0.3, 1.0))),
]


def test_criterion_03_exact_prediction():
    worst, slowest = 0.0, 0.0
    for ps, modes in PREDICTION_CASES:
        seq, target = generate(SynthSpec(modes=modes, T=9, H=16, W=16, amp_spread=0.5, seed=3))
        t0 = time.perf_counter()
        pred = predict_next(ps, seq, 1e-6, max_iter=100_000, tol=1e-12)
        slowest = max(slowest, time.perf_counter() - t0)
        worst = max(worst, float(np.max(np.abs(pred - target) / np.abs(target))))
    record(3, worst <= 1e-3 and slowest < 1.0,
           f"max rel err at frame 10 = {worst:.2e} (<= 1e-3), slowest call {slowest:.3f} s (< 1 s), "
           f"{len(PREDICTION_CASES)} PoleSets containing the modes (one overcomplete), 16x16")


def test_criterion_04_gradient_fidelity():
    buf = io.StringIO()
    t0 = time.perf_counter()
    with contextlib.redirect_stdout(buf):
        code = cli_main(["gradcheck", "--verbose"])
    elapsed = time.perf_counter() - t0
    out = buf.getvalue()
    m = re.search(r"^(PASS|FAIL) max_rel_err=(\S+)", out, re.M)
    err = float(m.group(2))
    covered = all(f"d/d{k}[" in out for k in ("rho", "psi", "lambda"))
    record(4, code == 0 and err <= 1e-4 and covered and elapsed < 30.0,
           f"max rel err = {err:.2e} (<= 1e-4) over d/drho, d/dpsi, d/dlambda, {elapsed:.1f} s (< 30 s)")


def _descent_data():
    ps = init_ring(2, 0.85, 1.15, grid=(1, 2))
    amps = np.random.default_rng(1).uniform(0.5, 1.0, size=ps.P)
    modes = tuple((r + 0.03, p + 0.03, a, 0.0) for r, p, a in zip(ps.rho, ps.psi, amps))
    spec = SynthSpec(modes=modes, T=9, H=16, W=16, amp_spread=0.5)
    return ps, make_dataset(8, spec, 0.0, seed=2), make_dataset(4, spec, 0.0, seed=3)


def test_criterion_05_training_descent():
    ps, train_set, held = _descent_data()
    cfg = TrainConfig(T=9, lam=0.01, lr=1e-3, epochs=50)
    t0 = time.perf_counter()
    before = prediction_mse(ps, cfg.lam, held, cfg)
    res = train(ps, train_set, cfg)
    after = prediction_mse(res.poles, res.lam, held, cfg)
    elapsed = time.perf_counter() - t0
    ratio = after / before
    record(5, ratio <= 0.5 and elapsed < 120.0,
           f"held-out MSE {before:.3e} -> {after:.3e}, ratio {ratio:.4f} (<= 0.5), {elapsed:.1f} s (< 120 s)")


def test_criterion_06_homogeneity():
    enc = build_encoder(init_ring(), 9)
    Y = np.random.default_rng(0).random((9, 256))
    lam = 0.01
    base = fista_batch(enc, Y, lam).codes
    worst = 0.0
    for alpha in (0.5, 2.0, 10.0):
        scaled = fista_batch(enc, alpha * Y, alpha * lam).codes
        worst = max(worst, float(np.max(np.abs(scaled - alpha * base))))
    record(6, worst <= 1e-6, f"max |c(aY, a lam) - a c(Y, lam)| = {worst:.2e} (<= 1e-6), a in {{0.5, 2, 10}}")


def test_criterion_07_configuration():
    ps = init_ring()
    enc = build_encoder(ps, 9)
    n_cols = len(expand_quadrants(ps))
    in_ring = bool(np.all((ps.rho >= 0.85) & (ps.rho <= 1.15)))
    quadrant = bool(np.all((ps.psi > 0) & (ps.psi < math.pi / 2)))
    dev = float(np.max(np.abs(np.linalg.norm(enc.matrix, axis=0) - 1.0)))
    import inspect

    cap = inspect.signature(fista_batch).parameters["max_iter"].default
    ok = (n_cols == 161 and enc.cols == 161 and ps.P == 40 and in_ring and quadrant and dev <= 1e-12
          and cap == 100 and TrainConfig().fista_max_iter == 100)
    record(7, ok, f"N = {enc.cols}, P = {ps.P} in ring {in_ring}, first quadrant {quadrant}, "
                  f"column norm dev {dev:.1e}, FISTA cap {cap}")


def test_criterion_08_model_footprint(tmp_path):
    m = dio.ModelFile(T=9, lam=0.01, poles=init_ring(), epochs=50, final_loss=0.000123456789)
    path = tmp_path / "default.json"
    size = dio.save_model(path, m)
    back = dio.load_model(path)
    bitwise = (back == m and back.poles.rho.tobytes() == m.poles.rho.tobytes()
               and back.poles.psi.tobytes() == m.poles.psi.tobytes())
    dio.save_model(tmp_path / "again.json", back)
    stable = (tmp_path / "again.json").read_bytes() == path.read_bytes()
    record(8, size <= 10240 and bitwise and stable,
           f"default model {size} bytes (<= 10240), round trip bitwise {bitwise and stable}")


def test_criterion_09_throughput():
    modes = ((0.98, 0.3, 0.2, 0.1), (1.02, 0.9, 0.1, -0.4), (1.0, 0.0, 0.4, 0.0))
    seq, _ = generate(SynthSpec(modes=modes, T=9, H=128, W=160, amp_spread=0.5, noise_sigma=0.02, seed=0))
    ps = init_ring()

    def best(threads):
        times = []
        for _ in range(2):
            t0 = time.perf_counter()
            predict_next(ps, seq, 0.01, num_threads=threads)
            times.append(time.perf_counter() - t0)
        return min(times)

    t1, t8 = best(1), best(8)
    cores = os.cpu_count()
    record(9, t1 <= 5.0 and t8 <= 1.5,
           f"128x160 T=9: {t1:.2f} s single thread (<= 5 s), {t8:.2f} s with 8 workers (<= 1.5 s) "
           f"on {cores} core(s), backend {solver_mod.BACKEND}")


def test_criterion_10_metric_identities():
    rng = np.random.default_rng(10)
    a = rng.random((16, 16))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    s_aa = ssim(a, a)
    gap = abs(ssim(a, b) - scalar_ssim(a.tolist(), b.tolist()))
    ok = s_aa == 1.0 and mse(a, a) == 0.0 and psnr_from_mse(0.01) == 20.0 and gap <= 1e-9
    record(10, ok, f"ssim(a,a) = {s_aa!r}, mse(a,a) = {mse(a, a)!r}, psnr(0.01) = {psnr_from_mse(0.01)!r} dB, "
                   f"|ssim - scalar ssim| = {gap:.1e} (<= 1e-9)")


if __name__ == "__main__":
    import tempfile
    import pathlib

    failed = 0
    for name, fn in sorted(globals().items()):
        if not name.startswith("test_criterion_"):
            continue
        try:
            if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(pathlib.Path(d))
            else:
                fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
