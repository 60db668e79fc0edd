import json
import os
import subprocess

import pytest

import mhcohort

FIXTURE_A = (
    "subject_id,time,event,value\n"
    "s1,0,enter,\ns1,0,cov,1\ns1,1,fail,\n"
    "s2,0,enter,\ns2,0,cov,1\ns2,3,exit,\n"
    "s3,0,enter,\ns3,0,cov,0\ns3,1.5,exit,\n"
    "s4,0,enter,\ns4,0,cov,0\ns4,2,fail,\n"
)


def test_fixture_estimate():
    r = mhcohort.estimate_csv(FIXTURE_A)
    assert r.phi_hat == pytest.approx(1.0)
    assert r.sigma2 == pytest.approx(8.0)
    assert json.loads(r.to_json())["failures"] == 2


def test_null_variances():
    full = mhcohort.sigma2("full")
    assert full == pytest.approx(6.25)
    for m in range(2, 6):
        assert mhcohort.sigma2("srs", m=m) / full == pytest.approx(m / (m - 1))


def test_efficiency_curve():
    rows = mhcohort.are_curve("srs", m=2, log_phi=[-2.0, 0.0, 2.0])
    assert [a for _, a in rows] == pytest.approx([1.0, 1.0, 1.0])
    (x, a), = mhcohort.are_curve("cm", m_strata=[1, 1], delta=0.9, gamma=0.9, log_phi=[2.8])
    assert a == pytest.approx(0.99, abs=0.02)


def test_hypergeometric():
    assert mhcohort.hypergeom_moment([3, 3], 2, [0, 1]) == pytest.approx(0.6)


def test_errors_map_to_python():
    with pytest.raises(ValueError):
        mhcohort.estimate_csv("subject_id,time,event,value\na,x,enter,\n")
    with pytest.raises(ValueError):
        mhcohort.sigma2("cluster")


def test_in_process_cli():
    code, out, err = mhcohort.run(["are", "--design", "srs", "--m", "3", "--grid", "0"])
    assert code == 0
    assert out.startswith("log_phi,")
    code, _, err = mhcohort.run(["mc"])
    assert code == 3
    assert err.startswith("mhcohort: ")


def test_executable_matches_module(tmp_path):
    exe = os.environ.get("MHC_CLI")
    if not exe:
        pytest.skip("MHC_CLI not set")
    path = tmp_path / "a.csv"
    path.write_text(FIXTURE_A)
    out = subprocess.run([exe, "estimate", "--input", str(path)], capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["phi_hat"] == pytest.approx(mhcohort.estimate_csv(FIXTURE_A).phi_hat)
