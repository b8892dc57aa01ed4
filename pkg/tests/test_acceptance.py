"""Exit-gate checks, one test per criterion.

Each test prints ``PASS criterion k: ...`` or ``FAIL criterion k: ...`` with
its runtime; the lines are repeated in the pytest terminal summary.  Run
``python3 tests/test_acceptance.py`` to get just the lines.
"""
import itertools
import time

import numpy as np
import pytest

from latentid.estimators import WvEstimate, gmm_fit, gmwm_fit
from latentid.harness import McConfig, latent_model_1, latent_model_2, parse_config_text, run_monte_carlo
from latentid.identifiability import (
    FOUR_SCALE_CONVENTION,
    Verdict,
    arma21_det_check,
    c10_deviation,
    calibrate_four_scale_convention,
    conjecture32_check,
    four_scale_det,
    identifiability_report,
    model5,
    model5_formula,
    model6,
    model6_formula,
)
from latentid.models import (
    ar1,
    build_model,
    drift,
    from_unconstrained,
    ma1,
    qn,
    rw,
    spatial_exp,
    spatial_gauss,
    to_unconstrained,
    wn,
)
from latentid.moments import acvf, acvf_via_sdf, wv_spectral, wv_theoretical

ACCEPTANCE_LINES: list[str] = []


def _record(k, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed < budget
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail} [{elapsed:.2f} s, budget {budget:g} s]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def _run(k, fn, budget):
    t0 = time.perf_counter()
    ok, detail = fn()
    return _record(k, ok, detail, time.perf_counter() - t0, budget)


# --- random admissible draws ------------------------------------------------------

def _separated_rhos(rng, K, lo=0.05, hi=0.95, gap=0.05):
    while True:
        r = rng.uniform(lo, hi, K) * rng.choice([-1.0, 1.0], K)
        if K == 1 or np.min(np.diff(np.sort(r))) >= gap:
            return np.sort(r)


def _model1(rng, K):
    rhos = _separated_rhos(rng, K)
    blocks = [wn(rng.uniform(0.2, 3)), qn(rng.uniform(0.2, 3))]
    return build_model(blocks + [ar1(r, rng.uniform(0.2, 3)) for r in rhos])


def _model2(rng, K):
    rhos = _separated_rhos(rng, K)
    blocks = [ma1(rng.uniform(-0.95, 0.95), rng.uniform(0.2, 3))]
    return build_model(blocks + [ar1(r, rng.uniform(0.2, 3)) for r in rhos])


def _rho_slots(model):
    return [i for i, lab in enumerate(model.param_labels) if lab.startswith("rho_") and lab != "rho_ma"]


# --- criteria ---------------------------------------------------------------------

def criterion_1():
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        r1, r2 = _separated_rhos(rng, 2, gap=1e-3)
        v1, v2 = rng.uniform(0.2, 3.0, 2)
        worst = max(worst, arma21_det_check(r1, v1, r2, v2)[2])
    return worst < 1e-6, f"ARMA(2,1) map determinant, 100 draws, max rel err {worst:.2e} (< 1e-6)"


def criterion_2():
    cal = calibrate_four_scale_convention()
    rng = np.random.default_rng(102)
    e5 = e6 = 0.0
    m5, m6 = model5(), model6()
    for _ in range(50):
        t5 = rng.uniform(0.1, 3.0, 4)
        e5 = max(e5, abs(four_scale_det(m5, t5, FOUR_SCALE_CONVENTION) / model5_formula(t5[2]) - 1))
        t6 = np.r_[rng.uniform(0.1, 3.0, 2), rng.uniform(-0.9, 0.9), rng.uniform(0.1, 3.0)]
        e6 = max(e6, abs(four_scale_det(m6, t6, FOUR_SCALE_CONVENTION) / model6_formula(t6[0], t6[2]) - 1))
    consts = {k.value: v for k, v in cal.constants.items()}
    ok = cal.power_of_two and e5 < 1e-6 and e6 < 1e-6
    return ok, (f"four-scale determinants, calibration {consts} (power of two: {cal.power_of_two}); "
                f"WN+QN+Drift+RW max rel err {e5:.2e}, Drift+RW+MA1 max rel err {e6:.2e} (< 1e-6)")


def criterion_3():
    rng = np.random.default_rng(103)
    parts, ok = [], True
    for K in (2, 3, 4):
        worst, positive = 0.0, True
        for _ in range(50):
            chk = conjecture32_check(_separated_rhos(rng, K), rng.uniform(0.2, 3.0, K))
            worst = max(worst, chk.rel_err)
            positive &= chk.numeric_det > 0
        ok &= worst < 1e-5 and positive
        parts.append(f"K={K} max rel err {worst:.2e} positive {positive}")
    return ok, "AR(1)-sum wavelet-variance determinant vs closed form: " + "; ".join(parts)


def criterion_4():
    rng = np.random.default_rng(104)
    full = {"model1": 0, "model2": 0}
    for name, make in (("model1", _model1), ("model2", _model2)):
        for _ in range(1000):
            m = make(rng, int(rng.integers(1, 4)))
            full[name] += identifiability_report(m, m.theta, "acvf").verdict is Verdict.FULL_COLUMN_RANK
    deficient = 0
    for i in range(100):
        m = (_model1 if i % 2 else _model2)(rng, int(rng.integers(2, 4)))
        theta = m.theta.copy()
        a, b = rng.choice(_rho_slots(m), 2, replace=False)
        theta[b] = theta[a]
        deficient += identifiability_report(m, theta, "acvf").verdict is Verdict.RANK_DEFICIENT
    ok = full["model1"] == 1000 and full["model2"] == 1000 and deficient == 100
    return ok, (f"ACVF rank: WN+QN+K AR1 {full['model1']}/1000 full, MA1+K AR1 {full['model2']}/1000 full, "
                f"ties {deficient}/100 deficient")


def _spatial(rng, N, c):
    # the unit-distance correlation exp(-phi**-c) plays the role of rho and gets the same constraints
    make = spatial_exp if c == 1 else spatial_gauss
    while True:
        r = rng.uniform(0.05, 0.95, N)
        if N == 1 or np.min(np.diff(np.sort(r))) >= 0.05:
            phis = (-1.0 / np.log(r)) ** (1.0 / c)
            return build_model([make(p, rng.uniform(0.2, 3)) for p in phis])


def criterion_5():
    rng = np.random.default_rng(105)
    full = total = deficient = 0
    for N, c in itertools.product((1, 2, 3), (1, 2)):
        for _ in range(100):
            m = _spatial(rng, N, c)
            total += 1
            full += identifiability_report(m, m.theta, "spatial", np.arange(2 * N + 1.0)).verdict \
                is Verdict.FULL_COLUMN_RANK
    for i in range(100):
        N, c = 2 + i % 2, 1 + (i // 2) % 2
        m = _spatial(rng, N, c)
        theta = m.theta.copy()
        a, b = rng.choice(N, 2, replace=False)
        theta[2 * b] = theta[2 * a]
        deficient += identifiability_report(m, theta, "spatial", np.arange(2 * N + 1.0)).verdict \
            is Verdict.RANK_DEFICIENT
    return full == total and deficient == 100, \
        f"spatial covariance rank, N<=3, c in {{1,2}}: {full}/{total} full, ties {deficient}/100 deficient"


def criterion_6():
    rng = np.random.default_rng(106)
    worst = np.inf
    done = 0
    while done < 100:
        m = _model1(rng, int(rng.integers(1, 4)))
        u1 = to_unconstrained(m, m.theta) + rng.choice([-1, 1], m.n_params) * rng.uniform(0.05, 1.0, m.n_params)
        th1 = from_unconstrained(m, u1)
        r1 = np.sort(th1[_rho_slots(m)])
        if len(r1) > 1 and np.min(np.diff(r1)) < 0.05:
            continue
        worst = min(worst, c10_deviation(m.theta, th1, m))
        done += 1
    m = _model1(rng, 2)
    zero = c10_deviation(m.theta, m.theta, m)
    return worst > 0 and zero == 0.0, f"signed SDF relation: min deviation over 100 pairs {worst:.3e} (> 0), equal pair {zero!r}"


def criterion_7():
    blocks = [wn(1.3), qn(0.7), ma1(0.4, 1.0), ma1(-0.8, 2.0), ar1(0.5, 1.0), ar1(-0.9, 0.5), ar1(0.95, 1.0)]
    wv_err = rt_err = 0.0
    for b in blocks:
        m = build_model([b])
        closed = wv_theoretical(m, m.theta, 8).values
        for j in range(1, 9):
            wv_err = max(wv_err, abs(wv_spectral(m, m.theta, j) / closed[j - 1] - 1))
        direct = acvf(m, m.theta, 6).values
        back = acvf_via_sdf(m, m.theta, 6)
        rt_err = max(rt_err, np.max(np.abs(back - direct)) / abs(direct[0]))
    return wv_err < 1e-6 and rt_err < 1e-5, \
        f"moment oracles: WV closed vs spectral max rel {wv_err:.2e} (< 1e-6), ACVF-SDF round trip {rt_err:.2e} (< 1e-5)"


GMWM_CLASSES = {
    "WN+QN+AR1": [wn(1), qn(0.5), ar1(0.5, 1)],
    "WN+QN+2AR1": [wn(1), qn(0.5), ar1(0.3, 1), ar1(0.9, 1)],
    "MA1+AR1": [ma1(0.3, 1), ar1(0.7, 1)],
    "MA1+2AR1": [ma1(0.3, 1), ar1(-0.5, 1), ar1(0.8, 0.5)],
    "2AR1": [ar1(0.3, 1), ar1(0.9, 1)],
    "WN+QN+Drift+RW": [wn(1), qn(0.5), drift(0.01), rw(0.1)],
    "Drift+RW+MA1": [drift(0.01), rw(0.1), ma1(0.3, 1)],
}
GMM_CLASSES = ("WN+QN+AR1", "WN+QN+2AR1", "MA1+AR1", "MA1+2AR1", "2AR1")


def criterion_8():
    bad = []
    for name, blocks in GMWM_CLASSES.items():
        m = build_model(blocks)
        wv = WvEstimate.from_values(wv_theoretical(m, m.theta, max(m.n_params, 8)).values, 2 ** 14)
        r = gmwm_fit(m, wv)
        if not (np.max(np.abs(r.theta_hat - m.theta)) < 1e-4 and r.objective_value < 1e-12):
            bad.append(f"gmwm {name}")
    for name in GMM_CLASSES:
        m = build_model(GMWM_CLASSES[name])
        r = gmm_fit(m, acvf(m, m.theta, m.n_params))
        if not (np.max(np.abs(r.theta_hat - m.theta)) < 1e-4 and r.objective_value < 1e-12):
            bad.append(f"gmm {name}")
    n = len(GMWM_CLASSES) + len(GMM_CLASSES)
    return not bad, f"exact-moment fixed points: {n - len(bad)}/{n} recovered" + (f", failed {bad}" if bad else "")


def criterion_9():
    lm1 = run_monte_carlo(McConfig(latent_model_1()))
    lm2 = run_monte_carlo(McConfig(latent_model_2()))
    lm1_bad = sorted(f"{e}:{p}" for (e, p), flag in lm1.monotone.items() if not flag)
    lm2_flat = sorted(f"{e}:{p}" for (e, p), flag in lm2.monotone.items()
                      if p in ("sigma2", "q2", "rho_ma") and not flag)
    ok = not lm1_bad and bool(lm2_flat)
    return ok, (f"desk MC, n = 2^9, 2^12, 2^15, R = 100: preset 1 non-monotone {lm1_bad or 'none'}; "
                f"preset 2 non-monotone among sigma2/q2/rho_ma {lm2_flat or 'none'}")


def criterion_10():
    text = "preset = lm2\nsample_sizes = 512, 1024\nreplications = 6\n"
    runs = [run_monte_carlo(parse_config_text(text), threads=t).to_csv() for t in (1, 2, 1, 4)]
    same = all(r == runs[0] for r in runs)
    return same, f"repeated MC runs with threads 1, 2, 1, 4 byte-identical CSV: {same}"


CRITERIA = {
    1: (criterion_1, 1.0), 2: (criterion_2, 1.0), 3: (criterion_3, 10.0), 4: (criterion_4, 30.0),
    5: (criterion_5, 10.0), 6: (criterion_6, 5.0), 7: (criterion_7, 10.0), 8: (criterion_8, 30.0),
    9: (criterion_9, 900.0), 10: (criterion_10, 300.0),
}


@pytest.fixture(scope="module", autouse=True)
def _warm_kernels():
    # compile the optimiser kernels once so criterion timings measure the work, not the JIT
    m = build_model([wn(1), ar1(0.5, 1)])
    gmwm_fit(m, WvEstimate.from_values(wv_theoretical(m, m.theta, 4).values, 256))


@pytest.mark.filterwarnings("ignore::latentid.errors.UnprovenCompositionWarning")
@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k):
    fn, budget = CRITERIA[k]
    assert _run(k, fn, budget)


if __name__ == "__main__":
    import warnings

    warnings.simplefilter("ignore")
    for k in sorted(CRITERIA):
        _run(k, *CRITERIA[k])
