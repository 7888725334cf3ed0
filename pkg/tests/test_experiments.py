import json

import numpy as np
import pytest
from scipy import ndimage

from fraceig import experiments as ex
from fraceig import stablemc as mc
from fraceig.geometry import Domain

H = 1 / 16


def similar_family(domain, scales=(1.0, 2.0, 4.0)):
    return ex.DomainFamily("similar", domain.h, {}, [domain.scaled(s) for s in scales])


def test_comb_is_simply_connected():
    D = ex.comb(3, 1 / 16)
    assert D.is_connected()
    _, holes = ndimage.label(~np.pad(D.mask, 1))
    assert holes == 1
    fine = ex.refine(D)
    assert fine.h == D.h / 2 and fine.is_connected()


def test_family_builders():
    fam = ex.DomainFamily.build("convex", H)
    assert all(m.is_convex for m in fam)
    assert len(fam.refined()) == len(fam) and fam.refined().h == H / 2
    with pytest.raises(ValueError):
        ex.DomainFamily.build("nope", H)


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_thm11_scale_invariant_product(alpha):
    rep = ex.run_thm11(similar_family(Domain.ball(1.0, H)), alpha, refine_check=False)
    vals = [r["product"] for r in rep.rows]
    assert np.ptp(vals) <= 1e-10 * vals[0]
    assert rep.verdict == ex.HOLDS


def test_thm11_refined_verdict():
    rep = ex.run_thm11(ex.DomainFamily.build("squares", H, sides=[2.0]), 1.0)
    assert "product_h2" in rep.rows[0] and rep.derived["c_empirical"] > 0
    assert rep.verdict in (ex.HOLDS, ex.INCONCLUSIVE)


def test_thm12_disk_against_bessel_zero():
    rep = ex.run_thm12(ex.DomainFamily.build("disk", 1 / 32), refine_check=False)
    assert rep.rows[0]["product"] == pytest.approx(2.404826, rel=0.05)
    combs = ex.run_thm12(ex.DomainFamily.build("combs", H, teeth=[2, 3]), refine_check=False)
    assert all(r["product"] > 0 for r in combs.rows)


def test_cor11_examples():
    D = Domain.ball(1.0, H)
    lam = ex.principal(D, 1.0).lam
    r0 = ex.run_cor11_nonexistence(D, 1.0, 0.0)
    assert r0.verdict == ex.HOLDS and r0.rows[0]["min_eigenvalue"] == pytest.approx(lam)
    half = ex.run_cor11_nonexistence(D, 1.0, lam / 2)
    assert half.rows[0]["min_eigenvalue"] == pytest.approx(lam / 2, rel=1e-8)
    at = ex.run_cor11_nonexistence(D, 1.0, lam)
    assert abs(at.rows[0]["min_eigenvalue"]) < 1e-7 and at.verdict == ex.INCONCLUSIVE
    with pytest.raises(ValueError):
        ex.run_cor11_nonexistence(Domain.l_shape(2.0, 1.0, H), 1.0, 0.0)


def test_barta_examples():
    D = Domain.ball(1.0, H)
    eq = ex.run_barta(D, 1.0, "eigen")
    assert eq.rows[0]["ratio"] == pytest.approx(1.0, abs=1e-7)
    sq = ex.run_barta(Domain.square(2.0, H), 2.0, "distance")
    assert sq.rows[0]["ratio"] <= 1 + 1e-9 and sq.verdict == ex.HOLDS
    g = ex.run_barta(D, 1.0, "getoor")
    row = g.rows[0]
    assert row["sup_quotient_inner"] == pytest.approx(row["sup_quotient_inner_analytic"], rel=0.05)
    assert row["ratio"] <= 1
    bad = np.ones(D.n_interior)
    bad[3] = 0.0
    with pytest.raises(ValueError, match="division by zero"):
        ex.run_barta(D, 1.0, bad)


def test_thm13_rescaling_and_refinement():
    rep = ex.run_thm13_fatness(Domain.l_shape(2.0, 1.0, 1 / 16), 1.0, 0.5)
    assert rep.verdict == ex.HOLDS and rep.derived["rescaling_spread"] < 1e-9
    fine = ex.run_thm13_fatness(Domain.l_shape(2.0, 1.0, 1 / 32), 1.0, 0.5, scales=(1.0,))
    assert fine.derived["r_emp_min"] == pytest.approx(rep.derived["r_emp_min"], rel=0.1)
    ball = ex.run_thm13_fatness(Domain.ball(1.0, H), 1.0, 0.3, scales=(1.0,))
    assert ball.rows[0]["rho"] >= 1.0 - H


def test_fat_radius_empty_cap():
    D = Domain.ball(1.0, 1 / 16)
    assert ex.fat_radius(D, [0.0, 0.0], 1e-9) == pytest.approx(1.0, abs=2 * D.h)


def test_faber_krahn_scaling_and_ordering():
    rep = ex.run_faber_krahn(similar_family(Domain.ball(1.0, H), (1.0, 2.0)), 1.0, refine_check=False)
    vals = [r["invariant"] for r in rep.rows]
    assert vals[0] == pytest.approx(vals[1], rel=1e-10)
    em = ex.run_faber_krahn(ex.DomainFamily.build("equal-measure", H), 1.0, refine_check=False)
    assert em.verdict == ex.HOLDS


def test_chiti_radius_independence():
    rep = ex.run_thm14_chiti(similar_family(Domain.ball(1.0, H), (1.0, 2.0)), 1.0, refine_check=False)
    a, b = rep.rows
    assert a["ratio_spectral"] == pytest.approx(b["ratio_spectral"], rel=1e-10)
    assert a["ratio_inradius"] == pytest.approx(b["ratio_inradius"], rel=1e-10)
    thin = ex.run_thm14_chiti(ex.DomainFamily.build("rectangles", H, aspects=[2, 8], short=0.5), 1.0,
                              refine_check=False)
    assert np.isfinite(thin.derived["c_spectral"])


def test_obstacle_small_grid():
    D = Domain.ball(1.0, H)
    rep = ex.run_obstacle(D, 1.0, 0.25, placements=5)
    assert rep.derived["monotone"]
    assert rep.verdict == ex.HOLDS
    best = max((r for r in rep.rows if "lambda" in r), key=lambda r: r["lambda"])
    assert np.allclose(best["x"], 0.0, atol=D.h)
    assert any("skipped" in r for r in rep.rows)


def test_mc_crosscheck_small_never_violated(tmp_path):
    D = Domain.ball(1.0, H)
    cfg = mc.PathConfig(1.0, 2, 2e-3, 1.0, 2000, seed=3)
    rep = ex.run_mc_crosscheck(D, 1.0, cfg, n_fk_nodes=2, include=("survival", "feynman_kac", "sandwich"))
    assert rep.verdict in (ex.HOLDS, ex.INCONCLUSIVE)
    files = rep.write(tmp_path)
    assert (tmp_path / "report.json").exists() and (tmp_path / "rows.csv").exists()
    assert (tmp_path / "survival.dat").read_text().startswith("# survival")
    assert len(files) == 3


def test_report_serialization_is_deterministic():
    D = Domain.square(2.0, H)
    a = ex.run_thm11(ex.DomainFamily.single(D), 1.0, refine_check=False).dumps()
    b = ex.run_thm11(ex.DomainFamily.single(D), 1.0, refine_check=False).dumps()
    assert a == b
    obj = json.loads(a)
    assert obj["theorem"] == "thm11" and obj["environment"]["h"] == H


def test_clean_handles_special_floats():
    out = ex._clean({"a": float("inf"), "b": float("nan"), "c": np.float64(1.5), "d": np.arange(2)})
    assert out == {"a": "inf", "b": "nan", "c": 1.5, "d": [0, 1]}
