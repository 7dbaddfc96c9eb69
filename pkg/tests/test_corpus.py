import math
from pathlib import Path

import numpy as np
import pytest

from weylscope import corpus
from weylscope.corpus import GeneratorSpec, generate, warped_identities_check
from weylscope.curvature import curvature_at
from weylscope.dsl import render_metric
from weylscope.errors import BadKind, BadParams
from weylscope.frame import sample_points

ROOT = Path(__file__).resolve().parents[1]
R3 = 1 / math.sqrt(3)
S2 = GeneratorSpec("sphere", {"dim": 2, "r": R3})
BASE = GeneratorSpec("product", {"a": S2, "b": S2})


def warped_spec(f):
    return GeneratorSpec("warped", {"base": BASE, "f": f})


def test_round_two_sphere_scalar_curvature():
    # curvature needs n >= 3; a flat factor leaves τ unchanged
    d = corpus.product(corpus.sphere(2, 1.0), corpus.flat(2))
    b = curvature_at(d, sample_points(d, 1)[0])
    assert float(b.tau) == pytest.approx(2.0, abs=1e-12)


def test_two_sphere_product_einstein():
    d = generate(BASE)
    for p in sample_points(d, 5):
        b = curvature_at(d, p)
        assert np.abs(b.ricci - 3 * b.g).max() <= 1e-9
        assert float(b.tau) == pytest.approx(12.0) and float(b.rho) == pytest.approx(1.0)


@pytest.mark.parametrize("name,lam", [("s2xs2", 3.0), ("t11", 4.0), ("warped_sinh", -4.0),
                                      ("r2_schwarzschild", 0.0), ("s4", 3.0), ("flat4", 0.0)])
def test_einstein_admission_gate(golden, name, lam):
    d = golden(name)
    for p in sample_points(d, 50):
        b = curvature_at(d, p, full=False)
        assert np.abs(b.ricci - lam * b.g).max() <= 1e-7


def test_warped_sinh_identities():
    r = warped_identities_check(warped_spec("sinh"))
    assert max(r.tangential, r.radial_zero, r.radial) <= 1e-7
    assert r.lemma_residual <= 1e-12
    assert np.allclose(r.rho, -1.0) and np.allclose(r.rho_base, 1.0)


def test_trivial_warp_identities():
    r = warped_identities_check(warped_spec("one"))
    assert max(r.tangential, r.radial_zero, r.radial) <= 1e-7


def test_cosh_warp_is_not_einstein():
    r = warped_identities_check(warped_spec("cosh"))
    assert max(r.tangential, r.radial_zero, r.radial) <= 1e-7
    assert r.lemma_residual > 1e-2


def test_rescale_round_trip_is_structural(golden):
    base = golden("t11")
    phi = "0.1*sin(th1)*cos(ph2)"
    back = corpus.conformal_rescale(corpus.conformal_rescale(base, phi), f"-({phi})")
    assert back.entries == base.entries and back.scalars == base.scalars


def test_golden_files_are_current():
    for fname, make in corpus.GOLDEN.items():
        assert (ROOT / "corpus" / fname).read_text(encoding="utf-8") == render_metric(make())


def test_spec_filename_is_stable():
    a = warped_spec("sinh")
    b = GeneratorSpec("warped", {"f": "sinh", "base": BASE})
    assert a.filename() == b.filename() and a.filename().startswith("warped_")


@pytest.mark.parametrize("spec,err", [
    (GeneratorSpec("sphere", {"dim": 2, "r": 0.0}), BadParams),
    (GeneratorSpec("warped", {"base": BASE, "f": "sinh", "interval": [-1.0, 1.0]}), BadParams),
    (GeneratorSpec("schwarzschild_product", {"m": 1.0, "r_range": [1.0, 4.0]}), BadParams),
    (GeneratorSpec("conformal_rescale", {"base": S2}), BadParams),
    (GeneratorSpec("torus", {}), BadKind),
])
def test_generator_errors(spec, err):
    with pytest.raises(err):
        generate(spec)


def test_identities_need_warped_kind():
    with pytest.raises(BadKind):
        warped_identities_check(BASE)
