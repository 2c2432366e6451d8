"""Acceptance suite: one printed PASS/FAIL line per criterion.

Every tolerance and runtime limit is pinned here. A failing criterion
fails its test as well as printing FAIL.
"""
import contextlib
import json
import time

import numpy as np
import pytest

from fastrpca.bench import scaling_rate
from fastrpca.cli import EXIT_OK, main
from fastrpca.factors import FactorPair, log_linear_fit, regularizer, regularizer_gradient
from fastrpca.full import FullSolverConfig, gradient_full, initialize_full, loss_full, solve_full
from fastrpca.io import read_factors, read_frames, write_factors, write_frames, write_matrix
from fastrpca.linalg import SupportedMatrix
from fastrpca.metrics import (balanced_from_product, factor_distance, procrustes_rotation,
                              reconstruction_error)
from fastrpca.partial import (PARTIAL_REG_COEF, PartialSolverConfig, bernoulli_sample, gradient_partial,
                              loss_partial, solve_partial)
from fastrpca.sparse_estimator import hard_threshold, is_in_sparsity_class
from fastrpca.synth import SynthSpec, generate_instance, ground_truth, moving_box_sequence, observe
from oracles import brute_threshold, central_difference, random_sparse_class


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def run(number, title, limit_s):
        info = {}
        t0 = time.perf_counter()
        ok = False
        try:
            yield info
            elapsed = time.perf_counter() - t0
            assert elapsed < limit_s, f"runtime {elapsed:.1f}s exceeds {limit_s}s"
            ok = True
        finally:
            elapsed = time.perf_counter() - t0
            detail = " ".join(f"{k}={v}" for k, v in info.items())
            with capsys.disabled():
                print(f"\nACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'} {title} "
                      f"[{elapsed:.1f}s < {limit_s}s] {detail}")
    return run


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def test_criterion_01_estimator_oracle(criterion):
    with criterion(1, "sparse estimator equals brute-force oracle", 5) as info:
        rng = np.random.default_rng(1)
        fractions = [k / 8 for k in range(9)]
        mismatches = 0
        for _ in range(200):
            d1, d2 = rng.integers(1, 9, size=2)
            A = rng.integers(-4, 5, size=(d1, d2)).astype(float)
            for f in fractions:
                mismatches += not np.array_equal(hard_threshold(A, f).to_dense(), brute_threshold(A, f))
        info["mismatches"] = mismatches
        assert mismatches == 0


def test_criterion_02_closure_and_norm_bound(criterion):
    with criterion(2, "estimator output in class; operator-norm bound", 30) as info:
        rng = np.random.default_rng(2)
        outside = 0
        for _ in range(200):
            d1, d2 = rng.integers(1, 30, size=2)
            A = rng.standard_normal((d1, d2))
            f = float(rng.choice([0.0, 0.1, 0.25, 0.5, 1.0]))
            outside += not is_in_sparsity_class(hard_threshold(A, f), f)
        worst = -np.inf
        d = 100
        for _ in range(500):
            k = int(rng.integers(1, 21))
            A = random_sparse_class(rng, d, k)
            alpha = k / d
            assert is_in_sparsity_class(SupportedMatrix.from_dense(A), alpha)
            bound = alpha * d * np.abs(A).max()
            worst = max(worst, np.linalg.norm(A, 2) - bound)
        info.update(outside=outside, worst_excess=f"{worst:.3g}")
        assert outside == 0 and worst <= 1e-9


def test_criterion_03_gradients(criterion):
    with criterion(3, "analytic gradients match central differences", 10) as info:
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(50):
            d1, d2, r = int(rng.integers(2, 11)), int(rng.integers(2, 11)), int(rng.integers(1, 4))
            U, V = rng.standard_normal((d1, r)), rng.standard_normal((d2, r))
            Y = rng.standard_normal((d1, d2))
            S = SupportedMatrix.from_dense(np.where(rng.random((d1, d2)) < 0.3, rng.standard_normal((d1, d2)), 0))
            p = float(rng.uniform(0.3, 1.0))
            inst = bernoulli_sample(Y, p, int(rng.integers(1 << 30)))
            Sp = SupportedMatrix.from_dense(S.to_dense() * inst.observed.mask())
            gu, gv = gradient_full(U, V, S, Y)
            hu, hv = gradient_partial(U, V, Sp, inst, p)
            checks = [
                (lambda X: loss_full(X, V, S, Y), U, gu),
                (lambda X: loss_full(U, X, S, Y), V, gv),
                (lambda X: loss_partial(X, V, Sp, inst, p), U, hu),
                (lambda X: loss_partial(U, X, Sp, inst, p), V, hv),
            ]
            for coef in (1 / 8, PARTIAL_REG_COEF):
                ru, rv = regularizer_gradient(U, V, coef)
                checks.append((lambda X, c=coef: regularizer(X, V, c), U, ru))
                checks.append((lambda X, c=coef: regularizer(U, X, c), V, rv))
            for f, X, g in checks:
                if np.linalg.norm(g) > 1e-8:
                    worst = max(worst, _rel(central_difference(f, X), g))
        info["worst_rel"] = f"{worst:.2e}"
        assert worst <= 1e-5


def test_criterion_04_full_recovery(criterion):
    with criterion(4, "full observation recovery d=400 r=5", 60) as info:
        spec = SynthSpec(400, 5, 0.1, seed=0)
        Y, M, _ = generate_instance(spec)
        gt = ground_truth(spec)
        cfg = FullSolverConfig(5, 0.1, gamma=2.0, stop_tol=1e-30, max_iters=500)
        f, _, trace = solve_full(Y, cfg, gt)
        errs = trace.column("rel_recon_error")
        final = reconstruction_error(f.U, f.V, M)[1]
        slope, r2 = log_linear_fit(errs, 10, 101)
        info.update(iterations=len(trace) - 1, rel_error=f"{final:.2e}", slope=f"{slope:.3f}", r2=f"{r2:.4f}")
        assert len(trace) - 1 <= 500
        assert final <= 1e-4
        assert slope < 0 and r2 >= 0.9


def _partial_recovery(alpha):
    d, r = 300, 3
    spec = SynthSpec(d, r, alpha, seed=0)
    p = scaling_rate(d, r)
    gt = ground_truth(spec)
    cfg = PartialSolverConfig(r, alpha, p=p, stop_tol=1e-14, max_iters=3000)
    f, _, _ = solve_partial(observe(spec, p), cfg)
    return p, gt.reconstruction_error(f.U, f.V)[1]


def test_criterion_05a_partial_recovery(criterion):
    with criterion("5a", "partial observation recovery d=300 r=3 at the scaling rate", 60) as info:
        p, err = _partial_recovery(0.1)
        info.update(p=f"{p:.4f}", rel_error=f"{err:.3e}")
        assert err <= 1e-3


def test_criterion_05b_completion(criterion):
    with criterion("5b", "matrix completion d=300 r=3 at the scaling rate", 60) as info:
        p, err = _partial_recovery(0.0)
        info.update(p=f"{p:.4f}", rel_error=f"{err:.3e}")
        assert err <= 1e-3


def test_criterion_06_scaling(criterion, scaling_report):
    # the shared fixture runs the experiment; its cost counts against the limit
    with criterion(6, "near-linear scaling over d in 1000, 2000, 4000", 600) as info:
        times = scaling_report.summary["wall_times"]
        info.update(slope=f"{scaling_report.summary['slope']:.3f}",
                    wall_times="/".join(f"{t:.1f}" for t in times))
        assert sum(times) < 600
        assert 0.7 <= scaling_report.summary["slope"] <= 1.5


def test_criterion_07_metric_properties(criterion):
    with criterion(7, "distance invariances and aligned cross-term symmetry", 10) as info:
        rng = np.random.default_rng(7)
        worst_zero, worst_brute, worst_sym, tested = 0.0, 0.0, 0.0, 0
        for _ in range(100):
            r = int(rng.integers(1, 5))
            U, V = rng.standard_normal((12, r)), rng.standard_normal((9, r))
            Q, R = np.linalg.qr(rng.standard_normal((r, r)))
            worst_zero = max(worst_zero, factor_distance(U, V, U, V), factor_distance(U @ Q, V @ Q, U, V))
            u, v = rng.standard_normal((12, 1)), rng.standard_normal((9, 1))
            us, vs = rng.standard_normal((12, 1)), rng.standard_normal((9, 1))
            brute = min(np.sqrt(np.sum((u - q * us) ** 2) + np.sum((v - q * vs) ** 2)) for q in (1.0, -1.0))
            worst_brute = max(worst_brute, abs(factor_distance(u, v, us, vs) - brute) / brute)
            Us, Vs, s = balanced_from_product(rng.standard_normal((12, r)), rng.standard_normal((9, r)))
            F_star = np.vstack([Us, Vs])
            E = rng.standard_normal(F_star.shape)
            E *= rng.uniform(0.01, 0.99) * np.sqrt(2 * s[-1]) / np.linalg.norm(E, 2)
            F = F_star + E
            Qa, _ = procrustes_rotation(F[:12], F[12:], Us, Vs)
            D = F - F_star @ Qa
            assert np.linalg.norm(D, 2) < np.sqrt(2 * s[-1])
            C = D.T @ (F_star @ Qa)
            worst_sym = max(worst_sym, float(np.abs(C - C.T).max()))
            tested += 1
        info.update(zero=f"{worst_zero:.1e}", brute=f"{worst_brute:.1e}", symmetry=f"{worst_sym:.1e}",
                    instances=tested)
        assert worst_zero <= 1e-10 and worst_brute <= 1e-12 and worst_sym <= 1e-8


def test_criterion_08_full_rate_consistency(criterion):
    with criterion(8, "partial loss and gradient at p=1 equal the full ones", 5) as info:
        rng = np.random.default_rng(8)
        worst = 0.0
        for seed in range(50):
            d1, d2, r = int(rng.integers(2, 20)), int(rng.integers(2, 20)), int(rng.integers(1, 4))
            Y = rng.standard_normal((d1, d2))
            U, V = rng.standard_normal((d1, r)), rng.standard_normal((d2, r))
            S = SupportedMatrix.from_dense(np.where(rng.random((d1, d2)) < 0.2, rng.standard_normal((d1, d2)), 0))
            inst = bernoulli_sample(Y, 1.0, seed)
            lf, lp = loss_full(U, V, S, Y), loss_partial(U, V, S, inst, 1.0)
            worst = max(worst, abs(lf - lp) / max(1.0, lf))
            for a, b in zip(gradient_full(U, V, S, Y), gradient_partial(U, V, S, inst, 1.0)):
                worst = max(worst, float(np.abs(a - b).max()) / max(1.0, float(np.abs(a).max())))
        info["worst"] = f"{worst:.1e}"
        assert worst <= 1e-12


def _cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, json.loads(out) if code == EXIT_OK else json.loads(err)


def test_criterion_09a_factor_round_trip(criterion, tmp_path, capsys):
    with criterion("9a", "decompose, write and re-read factors bit-exactly", 60) as info:
        Y, _, _ = generate_instance(SynthSpec(150, 3, 0.1, seed=9))
        write_matrix(Y, tmp_path / "Y.csv")
        exact = 0
        for fmt in ("csv", "raw-binary", "matrix-market"):
            code, _ = _cli(capsys, "decompose", tmp_path / "Y.csv", "--rank", 3, "--alpha", 0.1,
                           "--format", fmt, "--out", tmp_path / fmt)
            assert code == EXIT_OK
            f, _, _ = solve_full(Y, FullSolverConfig(3, 0.1))
            U, V = read_factors(tmp_path / fmt, fmt)
            write_factors(FactorPair(U, V), tmp_path / (fmt + "2"), fmt)
            U2, V2 = read_factors(tmp_path / (fmt + "2"), fmt)
            exact += all(np.array_equal(a, b) for a, b in ((U, f.U), (V, f.V), (U2, U), (V2, V)))
        info["exact_formats"] = f"{exact}/3"
        assert exact == 3


def _separate(tmp_path, capsys, *flags):
    F, bg = moving_box_sequence()
    write_frames(F, 40, 40, tmp_path / "frames")
    code, res = _cli(capsys, "separate", tmp_path / "frames", *flags, "--out", tmp_path / "sep")
    assert code == EXIT_OK, res
    back = read_frames(tmp_path / "sep" / "background")
    return res, float(np.abs(back.matrix - bg[:, None]).max())


def test_criterion_09b_fb_preset(criterion, tmp_path, capsys):
    with criterion("9b", "moving-box separation under the fb-separation preset", 60) as info:
        res, err = _separate(tmp_path, capsys, "--preset", "fb-separation")
        info.update(iterations=res["iterations"], stopped_by=res["stopped_by"], max_pixel_error=f"{err:.3f}")
        assert err <= 0.02


def test_supplementary_fb_rank_one(criterion, tmp_path, capsys):
    # not a criterion: the same sequence with rank 1 and a tight stopping rule
    with criterion("9+", "moving-box separation, preset with rank 1 and stop 1e-10", 60) as info:
        res, err = _separate(tmp_path, capsys, "--preset", "fb-separation", "--rank", 1, "--stop-tol", 1e-10)
        info.update(iterations=res["iterations"], max_pixel_error=f"{err:.3f}")
        assert err <= 0.02


def test_criterion_10_initialization(criterion):
    with criterion(10, "initial distance grows with alpha; operator error below sigma1/2", 30) as info:
        alphas = (0.02, 0.05, 0.1)
        monotone, bounded, rows = True, True, []
        for seed in range(5):
            dists = []
            for a in alphas:
                spec = SynthSpec(200, 3, a, seed=seed)
                Y, M, _ = generate_instance(spec)
                gt = ground_truth(spec)
                st = initialize_full(Y, FullSolverConfig(3, a))
                U0, V0 = st.factors.U, st.factors.V
                dists.append(gt.distance(U0, V0))
                if a < 0.1:
                    op = np.linalg.norm(U0 @ V0.T - M, 2)
                    bounded &= op <= gt.sigma1 / 2
            monotone &= all(x <= y for x, y in zip(dists, dists[1:]))
            rows.append("/".join(f"{x:.2f}" for x in dists))
        info.update(distances=";".join(rows), monotone=monotone, bounded=bounded)
        assert monotone and bounded
