import numpy as np
import pytest

from lyapcert.cli import (EXIT_NOT_FOUND, EXIT_OK, EXIT_USAGE,
                          SpecFileError, default_cone_schedule, main,
                          parse_spec, read_certificate_candidate)
from lyapcert.cop_lp import ConicSystem
from lyapcert.sos_cert import SemialgebraicSystem

CONE_SPEC = """\
dim: 2
f1: -1*x1 - 2*x2
f2: -1*x1 - 1*x2
cone1: -0.25*x1 + 1*x2
cone2: 1*x1 - 0.25*x2
schedule: 2 0 6
x0: 2.0 0.5
T: 20
dt: 1e-3
"""

CUSP_SPEC = """\
dim: 2
f1: -1*x1^2
f2: 0
g1: x1 - x2^2
g2: 1 - x1
box1: -0.5 1.5
box2: -1.5 1.5
deg: 2
"""


@pytest.fixture
def cone_spec(tmp_path):
    path = tmp_path / "cone.spec"
    path.write_text(CONE_SPEC)
    return path


@pytest.fixture
def cusp_spec(tmp_path):
    path = tmp_path / "cusp.spec"
    path.write_text(CUSP_SPEC)
    return path


# -- spec parsing ------------------------------------------------------------------

def test_parse_cone_spec(cone_spec):
    spec = parse_spec(cone_spec)
    assert isinstance(spec.system, ConicSystem)
    assert spec.system.cone.C.shape == (2, 2)
    assert np.allclose(spec.system.cone.C, [[-0.25, 1.0], [1.0, -0.25]])
    assert spec.options["schedule"] == "2 0 6"


def test_parse_semialgebraic_spec(cusp_spec):
    spec = parse_spec(cusp_spec)
    assert isinstance(spec.system, SemialgebraicSystem)
    assert len(spec.system.S.generators) == 2
    assert spec.system.S.box == [(-0.5, 1.5), (-1.5, 1.5)]


def test_reject_nonzero_at_origin(tmp_path):
    path = tmp_path / "bad.spec"
    path.write_text("dim: 2\nf1: x1 + 1\nf2: 0\ncone1: 1*x1\ncone2: 1*x2\n")
    with pytest.raises(SpecFileError) as err:
        parse_spec(path)
    assert err.value.rule == "f-at-origin"


def test_reject_inhomogeneous_cone_field(tmp_path):
    path = tmp_path / "bad.spec"
    path.write_text("dim: 2\nf1: x1^2 + x1\nf2: 0\ncone1: 1*x1\ncone2: 1*x2\n")
    with pytest.raises(SpecFileError) as err:
        parse_spec(path)
    assert err.value.rule == "cone-homogeneity"


def test_reject_out_of_dimension_variable(tmp_path):
    path = tmp_path / "bad.spec"
    path.write_text("dim: 2\nf1: x3\nf2: 0\ncone1: 1*x1\ncone2: 1*x2\n")
    with pytest.raises(SpecFileError) as err:
        parse_spec(path)
    assert err.value.rule == "polynomial"
    assert err.value.line == 2


def test_reject_mixed_constraint_blocks(tmp_path):
    path = tmp_path / "bad.spec"
    path.write_text("dim: 2\nf1: -1*x1\nf2: -1*x2\ncone1: 1*x1\ng1: 1 - x1\n"
                    "box1: -1 1\nbox2: -1 1\n")
    with pytest.raises(SpecFileError) as err:
        parse_spec(path)
    assert err.value.rule == "constraint-block"


def test_default_schedule_shape():
    schedule = default_cone_schedule()
    assert (2, 0, 8) in schedule and (6, 2, 8) in schedule
    degrees = {d for d, _, _ in schedule}
    assert degrees == {2, 4, 6}


# -- command exit codes ---------------------------------------------------------------

def test_find_lyap_cone_end_to_end(cone_spec, tmp_path):
    out = tmp_path / "out"
    code = main(["find-lyap-cone", str(cone_spec), "--out", str(out)])
    assert code == EXIT_OK
    cert_text = (out / "certificate.txt").read_text()
    assert cert_text.startswith("kind: conic-lyapunov-certificate")
    assert "oracle-pass: true" in cert_text
    # round-trip: the emitted certificate re-verifies
    code2 = main(["verify", str(cone_spec),
                  "--certificate", str(out / "certificate.txt"),
                  "--out", str(tmp_path / "v")])
    assert code2 == EXIT_OK


def test_find_lyap_sos_end_to_end(cusp_spec, tmp_path):
    out = tmp_path / "out"
    code = main(["find-lyap-sos", str(cusp_spec), "--deg", "2",
                 "--out", str(out)])
    assert code == EXIT_OK
    cert_text = (out / "certificate.txt").read_text()
    assert cert_text.startswith("kind: sos-lyapunov-certificate")
    assert "tier: sdp" in cert_text
    code2 = main(["verify", str(cusp_spec),
                  "--certificate", str(out / "certificate.txt"),
                  "--out", str(tmp_path / "v")])
    assert code2 == EXIT_OK


def test_verify_printed_candidate(cone_spec, tmp_path):
    code = main(["verify", str(cone_spec),
                 "--candidate", "2.9*x1^2 + 1*x1*x2 + 1*x2^2", "--r", "0",
                 "--out", str(tmp_path / "v")])
    assert code == EXIT_OK


def test_verify_failing_candidate(cone_spec, tmp_path):
    # leading-minus candidates need the --candidate=... form under argparse
    code = main(["verify", str(cone_spec), "--candidate=-1*x1^2", "--r", "0",
                 "--out", str(tmp_path / "v")])
    assert code == EXIT_NOT_FOUND


def test_verify_requires_candidate(cone_spec):
    assert main(["verify", str(cone_spec)]) == EXIT_USAGE


def test_simulate_writes_csv(cone_spec, tmp_path):
    out = tmp_path / "sim"
    code = main(["simulate", str(cone_spec), "--T", "1.0", "--dt", "1e-3",
                 "--out", str(out)])
    assert code == EXIT_OK
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,x1,x2,eta1,eta2"
    assert len(lines) == 1002


def test_partition_dump(cone_spec, capsys):
    code = main(["partition-dump", str(cone_spec), "--sweeps", "1"])
    assert code == EXIT_OK
    lines = [l for l in capsys.readouterr().out.splitlines() if l]
    assert len(lines) == 4  # refined section gives two cells, faces stay singletons
    for line in lines:
        for vertex in line.split(";"):
            assert len(vertex.split(",")) == 2


def test_missing_spec_is_usage_error(tmp_path):
    assert main(["find-lyap-cone", str(tmp_path / "none.spec")]) == EXIT_USAGE


def test_cone_command_on_sos_spec_is_usage_error(cusp_spec):
    assert main(["find-lyap-cone", str(cusp_spec)]) == EXIT_USAGE


def test_unstable_system_exhausts(tmp_path):
    path = tmp_path / "grow.spec"
    path.write_text("dim: 2\nf1: x1\nf2: x2\ncone1: 1*x1\ncone2: 1*x2\n")
    code = main(["find-lyap-cone", str(path), "--deg", "2", "--r", "0",
                 "--sweeps", "4", "--out", str(tmp_path / "o")])
    assert code == EXIT_NOT_FOUND


def test_outputs_deterministic(cone_spec, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["find-lyap-cone", str(cone_spec), "--out", str(out1)]) == EXIT_OK
    assert main(["find-lyap-cone", str(cone_spec), "--out", str(out2)]) == EXIT_OK
    assert (out1 / "certificate.txt").read_text() == \
        (out2 / "certificate.txt").read_text()


def test_read_certificate_candidate_roundtrip(cone_spec, tmp_path):
    out = tmp_path / "out"
    main(["find-lyap-cone", str(cone_spec), "--out", str(out)])
    kind, poly, r = read_certificate_candidate(out / "certificate.txt", 2)
    assert kind == "conic-lyapunov-certificate"
    assert r == 0
    assert not poly.is_zero()
