import json

import numpy as np
import pytest

from partsim import cli, io
from partsim.coalescent import drop_mutations, simulate
from partsim.errors import IntegrityError, SchemaError
from partsim.freq import AtomGroup, FrequencySequence, make_example_bosz, make_power_law
from partsim.occupancy import BlockSpectrum


def test_freq_round_trip(tmp_path):
    for seq in (make_power_law(0.5, 10**6)[0], make_example_bosz(3),
                FrequencySequence.from_groups([AtomGroup(0.25, 2, 1)], dust=0.5)):
        back = io.read_freq(io.write_freq(seq, tmp_path / "s.tsv"))
        np.testing.assert_array_equal(back.values, seq.values)
        assert [int(c) for c in back.counts] == [int(c) for c in seq.counts]
        assert [int(m) for m in back.marked] == [int(m) for m in seq.marked]
        assert back.dust == seq.dust and back.marked_dust == seq.marked_dust


def test_freq_log_multiplicity():
    seq = io.parse_freq("# dust: 0.0\n0.25\tlog:1.3862943611198906\n")
    assert int(seq.counts[0]) == 4
    with pytest.raises(SchemaError):
        io.parse_freq("0.5\n")


def test_spectrum_round_trip():
    spec = BlockSpectrum.from_sizes([3, 1, 2, 1], singleton_dust=2)
    back, seed = io.parse_spectrum(io.format_spectrum(spec, 12345678901234567890))
    assert back == spec and seed == 12345678901234567890
    with pytest.raises(IntegrityError):
        io.parse_spectrum("# n=5\nr,count\n1,2\n")
    with pytest.raises(SchemaError):
        io.parse_spectrum("# n=5\nsize,count\n")
    with pytest.raises(SchemaError):
        io.parse_spectrum("r,count\n1,1\n")


@pytest.mark.parametrize("model", ["kingman", "beta:0.5", "growpop:1"])
def test_events_and_mutations_round_trip(model, rng):
    h = simulate(model, 30, rng)
    m = drop_mutations(h, 1.0, rng)
    h2 = io.parse_events(io.format_events(h))
    np.testing.assert_array_equal(h2.event_times, h.event_times)
    assert h2.event_children == h.event_children and h2.gamma == h.gamma
    assert h2.time_scale == h.time_scale
    m2 = io.parse_mutations(io.format_mutations(m))
    np.testing.assert_array_equal(m2.time, m.time)
    np.testing.assert_array_equal(m2.lineage, m.lineage)
    with pytest.raises(SchemaError):
        io.parse_mutations("1\t0.5\n")


def test_events_reject_bad_ids():
    with pytest.raises(IntegrityError):
        io.parse_events("# n=2\n0.5\t0,1\t7\n")


# -- command line --------------------------------------------------------------


def test_cli_freq_and_occupancy(tmp_path, capsys):
    f = tmp_path / "pl.tsv"
    assert cli.main(["freq", "--model", "powerlaw", "--alpha", "0.5", "--trunc", "1e5",
                     "--out", str(f)]) == 0
    assert cli.main(["occupancy", "--freq", str(f), "--n", "500", "--reps", "3", "--seed", "4",
                     "--out", str(tmp_path / "occ")]) == 0
    spec, seed = io.read_spectrum(tmp_path / "occ" / "spectrum_00001.csv")
    assert spec.sample_size == 500 and seed is not None
    summary = (tmp_path / "occ" / "summary.csv").read_text().splitlines()
    assert summary[0] == "replicate,seed,sample_size,K_n" and len(summary) == 4
    assert cli.main(["occupancy", "--freq", str(f), "--n", "500", "--poisson", "500",
                     "--out", str(tmp_path / "poi")]) == 0


def test_cli_freq_models(tmp_path):
    for model, extra in (("loglaw", ["--trunc", "1e4"]), ("bosz", ["--n-max", "2"]),
                         ("newex", ["--schedule", "1000,100000", "--trunc", "1e6"])):
        out = tmp_path / f"{model}.tsv"
        assert cli.main(["freq", "--model", model, *extra, "--out", str(out)]) == 0
        assert len(io.read_freq(out)) > 0


def test_cli_coalescent(tmp_path):
    out = tmp_path / "co"
    assert cli.main(["coalescent", "--model", "growpop:1", "--n", "40", "--theta", "1",
                     "--reps", "2", "--out", str(out)]) == 0
    h = io.read_events(out / "events_00000.tsv")
    m = io.read_mutations(out / "mutations_00000.tsv")
    m.check(h)
    assert h.time_scale == "psi" and h.n == 40


def test_cli_constants(capsys):
    assert cli.main(["constants", "--model", "beta", "--alpha", "0.5", "--theta", "1",
                     "--r", "2", "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    kn = next(r for r in rows if r["target"] == "beta:K_n")
    assert kn["constant"] == pytest.approx(1.329340388, rel=1e-9)
    ratio = next(r for r in rows if r["target"] == "beta:ratio[r=2]")
    assert ratio["constant"] == pytest.approx(0.125)
    assert cli.main(["constants", "--model", "growpop", "--gamma", "1"]) == 0
    text = capsys.readouterr().out
    assert "growpop:L_n" in text and "3.14159265" in text
    for model in ("powerlaw", "loglaw", "uniform"):
        assert cli.main(["constants", "--model", model]) == 0


def test_cli_verify(tmp_path, capsys):
    cfg = tmp_path / "k.cfg"
    cfg.write_text("n_grid = 20, 40\nreplicates = 10\nr = 1\n")
    code = cli.main(["verify", "--suite", "growpop", "--config", str(cfg), "--out", str(tmp_path)])
    assert code in (0, 1)
    records = json.loads((tmp_path / "report.json").read_text())
    assert {r["target"] for r in records} >= {"growpop:L_n", "growpop:S_n"}
    assert "suite growpop:" in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    assert cli.main(["coalescent", "--model", "bogus", "--n", "5", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        cli.main(["verify", "--suite", "nosuch", "--out", str(tmp_path)])
