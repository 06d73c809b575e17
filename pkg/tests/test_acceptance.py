"""Acceptance gate.

Every criterion prints one ``PASS`` or ``FAIL`` line (visible under
``pytest -v`` and when the file is run as a script) and then asserts. The
directional reproductions reuse ``scripts/directional.py`` on the synthetic
mismatch scenario in ``configs/synth/mismatch.json``.
"""

import json
import subprocess
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg
from scipy.stats import multivariate_normal

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "scripts"))
sys.path.insert(0, str(Path(__file__).resolve().parent))

import directional  # noqa: E402
from test_calfuse import brute_isotonic  # noqa: E402
from test_metrics import brute_eer, brute_min_c  # noqa: E402

from spkback.calfuse import pav  # noqa: E402
from spkback.corpus import read_scores  # noqa: E402
from spkback.lda import compute_scatter, solve_discriminant  # noqa: E402
from spkback.metrics import compute_eer, cprimary  # noqa: E402
from spkback.plda import PldaModel, score_pairs  # noqa: E402
from spkback.svda import svda_scatter, train_linear_svm  # noqa: E402

SEEDS = [1, 2, 3, 4, 5]
MODULE_START = time.perf_counter()


def verdict(capsys, name: str, ok: bool, detail: str = ""):
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def info(capsys, line: str):
    with capsys.disabled():
        print("\nINFO  " + line)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


# ------------------------------------------------------------- 1. oracles


def test_plda_joint_gaussian_oracle(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for k in (1, 2, 5):
        r = np.random.default_rng(k)
        A, C = r.standard_normal((k, k)), r.standard_normal((k, k))
        m = PldaModel(r.standard_normal(k), A @ A.T + 0.1 * np.eye(k), C @ C.T + 0.5 * np.eye(k))
        T, Z = m.B + m.W, np.zeros((k, k))
        same = multivariate_normal(np.r_[m.mu, m.mu], np.block([[T, m.B], [m.B, T]]))
        diff = multivariate_normal(np.r_[m.mu, m.mu], np.block([[T, Z], [Z, T]]))
        E, Tt = 2 * r.standard_normal((100, k)), 2 * r.standard_normal((100, k))
        ours = score_pairs(m, E, Tt)
        ref = same.logpdf(np.c_[E, Tt]) - diff.logpdf(np.c_[E, Tt])
        worst = max(worst, float(np.abs(ours - ref).max()))
    dt = time.perf_counter() - t0
    verdict(capsys, "PLDA LLR vs joint-Gaussian oracle, k in {1,2,5}", worst < 1e-8 and dt < 5,
            f"max diff {worst:.2e}, {dt:.2f}s")


def test_metrics_threshold_sweep_oracle(capsys):
    t0 = time.perf_counter()
    c_diff = e_diff = 0.0
    for seed in range(100):
        r = np.random.default_rng(seed)
        k = np.zeros(50, bool)
        k[: r.integers(5, 45)] = True
        s = np.round(r.standard_normal(50) + 1.5 * k, 1)
        ref = np.mean([brute_min_c(s, k, 0.01), brute_min_c(s, k, 0.005)])
        c_diff = max(c_diff, abs(cprimary(s, k) - ref))
        e_diff = max(e_diff, abs(compute_eer(s, k) - brute_eer(s, k)))
    dt = time.perf_counter() - t0
    # the two sides sum the same terms in a different order, so "exact" is at rounding level
    verdict(capsys, "min-Cprimary and EER vs brute-force threshold sweep (100 x 50 trials)",
            c_diff <= 1e-12 and e_diff < 1e-12 and dt < 10,
            f"min-C diff {c_diff:.1e}, EER diff {e_diff:.1e}, {dt:.2f}s")


def test_pav_exhaustive_oracle(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        y = np.random.default_rng(seed).random(8)
        fit, ref = pav(y), brute_isotonic(y)
        worst = max(worst, float(((fit - y) ** 2).sum() - ((ref - y) ** 2).sum()))
    dt = time.perf_counter() - t0
    verdict(capsys, "PAV vs exhaustive monotone-partition search (50 x 8 points)", worst <= 1e-12 and dt < 10,
            f"excess squared error {worst:.1e}, {dt:.2f}s")


def test_svm_kkt_and_gap(capsys):
    t0 = time.perf_counter()
    kkt = gap = 0.0
    for seed in range(20):
        r = np.random.default_rng(seed)
        sep = 2.5 if seed % 2 else 0.3  # alternate separable / overlapping
        P = r.standard_normal((40, 5)) + sep
        N = r.standard_normal((40, 5)) - sep
        svm = train_linear_svm(P, N, C_reg=1.0, tol=1e-6)
        kkt, gap = max(kkt, svm.kkt_residual), max(gap, svm.duality_gap)
    dt = time.perf_counter() - t0
    verdict(capsys, "SVM KKT residual and duality gap <= 1e-6 on 20 instances", kkt <= 1e-6 and gap <= 1e-6 and dt < 30,
            f"kkt {kkt:.1e}, gap {gap:.1e}, {dt:.2f}s")


def _whiten_oracle(Sb, Sw):
    w, V = np.linalg.eigh(Sw)
    inv_sqrt = V @ np.diag(w ** -0.5) @ V.T
    lam, U = np.linalg.eigh(inv_sqrt @ Sb @ inv_sqrt)
    order = np.argsort(lam)[::-1]
    return lam[order], (inv_sqrt @ U[:, order]).T


def test_discriminant_eigen_oracle(capsys):
    from conftest import labeled_corpus

    val_diff = angle = 0.0
    for seed in range(5):
        r = np.random.default_rng(seed)
        X = np.vstack([3 * r.standard_normal(6) + r.standard_normal((20, 6)) for _ in range(4)])
        lab = labeled_corpus(X, np.repeat(np.arange(4), 20))
        sc_l = compute_scatter(lab)
        sc_s = svda_scatter(lab)
        for Sb, Sw in ((sc_l.between, sc_l.within), (sc_s.between, sc_s.within)):
            rows, vals = solve_discriminant(Sb, Sw, 3, ridge=0.0)
            lam, V = _whiten_oracle(Sb, Sw)
            val_diff = max(val_diff, float(np.abs(vals - lam[:3]).max()))
            angle = max(angle, float(scipy.linalg.subspace_angles(rows.T, V[:3].T).max()))
    verdict(capsys, "LDA/SVDA eigenpairs vs whiten-then-eigensolve oracle", val_diff < 1e-8 and angle < 1e-6,
            f"eigenvalue diff {val_diff:.1e}, max angle {angle:.1e} rad")


# --------------------------------------------------------- 2. directional


def _check(capsys, cmp, need: int, label: str):
    with capsys.disabled():
        print("\n" + cmp.table())
    verdict(capsys, label, cmp.wins >= need, f"{cmp.wins}/{len(cmp.candidate)} seeds, need {need}")


def test_centering_direction(capsys, workdir):
    _check(capsys, directional.centering(SEEDS, workdir), 4, "in-domain centering improves EER (>= 4/5 seeds)")


def test_centering_norm_reading(capsys, workdir, tmp_path):
    # the other reading of the shift size: |delta| = 2 sigma_b as a vector norm
    spec = json.loads(directional.SCENARIO.read_text())
    norm = 2 * spec["between_std"]
    spec["domain_shift_norms"] = {k: norm for k in spec["domain_shift_norms"]}
    alt = tmp_path / "mismatch_norm.json"
    alt.write_text(json.dumps(spec))
    saved, directional.SCENARIO = directional.SCENARIO, alt
    try:
        cmp = directional.centering(SEEDS, workdir / "norm_reading")
    finally:
        directional.SCENARIO = saved
    info(capsys, f"centering with shift norm {norm:g} (not a criterion): {cmp.wins}/{len(SEEDS)} seeds; "
                 + ", ".join(f"{c:.4f} vs {b:.4f}" for c, b in zip(cmp.candidate, cmp.baseline)))


def test_svda_direction(capsys, workdir):
    _check(capsys, directional.svda_vs_lda(SEEDS, workdir), 4,
           "SVDA(+unlabeled) min-Cprimary <= LDA-only (>= 4/5 seeds)")


def test_matched_plda_direction(capsys, workdir):
    _check(capsys, directional.matched_plda(SEEDS, workdir), 4,
           "matched cluster-labeled PLDA beats pooled PLDA on eval (>= 4/5 seeds)")


def test_fusion_direction(capsys, workdir):
    _check(capsys, directional.fusion(SEEDS, workdir), len(SEEDS),
           "fused EER <= best member EER + 0.5 pp (every seed)")


def test_calibration_strategies(capsys, workdir):
    res = directional.calibration_strategies(1, workdir)
    rank_keys = ("eer", "min_cprimary")
    same = all(
        res[s][blk][m] == res["dev_only"][blk][m]
        for s in res for blk in ("equalized", "unequalized") for m in rank_keys
    )
    acts = {s: res[s]["unequalized"]["act_cprimary"] for s in res}
    changed = len(set(acts.values())) > 1
    # the calibrated scores must be an order-preserving map of the raw ones
    monotone = True
    for s in res:
        out = workdir / f"cal_{s}_1"
        raw = read_scores(out / "scores_dev.tsv").scores
        cal = read_scores(out / "scores_dev_calibrated.tsv").scores
        order = np.argsort(raw, kind="stable")
        monotone &= bool(np.all(np.diff(cal[order]) >= 0))
    verdict(capsys, "calibration strategies keep EER/min-Cprimary, change act-Cprimary", same and changed and monotone,
            "act-C " + ", ".join(f"{s}={v:.4f}" for s, v in acts.items()))


# ------------------------------------------------------ 3. reproducibility


def test_cli_rerun_byte_identical(capsys, tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        cmd = [sys.executable, "-m", "spkback", "run", "--config", str(ROOT / "configs" / "subsystem5.json"),
               "--seed", "1", "--out", str(out)]
        subprocess.run(cmd, check=True, capture_output=True, cwd=ROOT)
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir() if p.name.startswith(("scores_", "report")))
    same = bool(files) and all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    verdict(capsys, "run --config configs/subsystem5.json --seed 1 twice: byte-identical scores and reports", same,
            f"{len(files)} files compared")


def test_runtime_budget(capsys):
    # the acceptance module carries almost all of the suite's cost; the whole
    # session time is also printed by conftest at the end of the run
    dt = time.perf_counter() - MODULE_START
    verdict(capsys, "acceptance runs within the 10 minute budget", dt < 600, f"{dt:.0f}s")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
