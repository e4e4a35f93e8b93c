import io

import pytest

from gogmetric.cli import main
from _support import DATA


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


def kv(text):
    out = {}
    for tok in text.split():
        if "=" in tok:
            k, v = tok.split("=", 1)
            out[k] = v
    return out


def d(name):
    return DATA / name


def test_validate_round_trip():
    code, text = run("validate", d("fig1_gamma.gog"))
    assert code == 0 and "[vertices]" in text


def test_tl_and_oracle():
    _, a = run("tl", d("bs16.gog"), "t x t^-1 x")
    _, b = run("oracle-tl", d("bs16.gog"), "t x t^-1 x")
    assert kv(a)["tl"] == kv(b)["tl"]


def test_distance_output():
    code, text = run("distance", d("rose_half.gog"), d("rose_third.gog"), d("identity_rose.marking"))
    r = kv(text)
    assert code == 0
    assert r["sigma"] == "4/3" and r["witness"] == "b" and r["label"] == "confirmed"


def test_distance_sym_fig1():
    code, text = run("distance", "--sym", d("fig1_gamma.gog"), d("fig1_gamma_prime.gog"), d("fig1.marking"))
    r = kv(text)
    assert r["sigma"] == "1" and r["sigma_back"] == "3"


def test_geodesic_verify(tmp_path):
    code, text = run("geodesic", "--verify", "--dot", tmp_path,
                     d("rose_half.gog"), d("rose_third.gog"), d("identity_rose.marking"))
    r = kv(text.splitlines()[-1])
    assert code == 0 and r["additive"] == "1" and r["witness_persistent"] == "1" and r["endpoint"] == "1"
    assert list(tmp_path.glob("*.dot"))


def test_traintrack_golden():
    code, text = run("traintrack", d("rose_half.gog"), d("golden.aut"))
    assert code == 0 and text.startswith("traintrack lambda")


def test_traintrack_reduction():
    code, text = run("traintrack", d("rose_half.gog"), d("parabolic.aut"))
    assert code == 0 and "reduction" in text and "S={a}" in text


def test_budget_exhaustion_exit_code():
    code, text = run("traintrack", "--budget", "0", d("rose_half.gog"), d("golden.aut"))
    assert code == 3 and "unknown" in text


def test_classify_swap():
    code, text = run("classify", d("rose_half.gog"), d("swap.aut"))
    assert code == 0 and "Elliptic" in text


def test_validation_exit_code(tmp_path):
    bad = tmp_path / "bad.gog"
    bad.write_text("[vertices]\nv trivial\n[edges]\na v v len=-1 inc_src=trivial inc_dst=trivial\n[base] v\n")
    code, _ = run("validate", bad)
    assert code == 2


def test_fold_iia_and_index(tmp_path):
    code, text = run("index-invariant", d("fig1_gamma_prime.gog"))
    assert code == 0 and "index=" in text
    code, text = run("modulus", d("bs16.gog"), "t")
    assert code == 0 and "nontrivial_integral=1" in text


def test_collapse_and_export():
    code, text = run("collapse", d("fig1_gamma_prime.gog"), "c")
    assert code == 0 and "[marking]" in text
    code, text = run("export-dot", d("fig1_gamma.gog"))
    assert code == 0 and text.lstrip().startswith(("graph", "digraph"))


def test_jobs_env(monkeypatch):
    monkeypatch.setenv("GOGMETRIC_JOBS", "2")
    code, text = run("distance", d("rose_half.gog"), d("rose_third.gog"), d("identity_rose.marking"))
    assert code == 0 and kv(text)["sigma"] == "4/3"


def test_unknown_command():
    with pytest.raises(SystemExit):
        run("nonsense")
