import os
import signal
import subprocess
import sys

import numpy as np
import pytest

from fedoselm.cli import main
from fedoselm.federation import modelfile

SYNTH = ["--features", "8", "--classes", "3", "--rows-per-class", "80"]


def train(tmp_path, name, pattern, seed=0, extra=()):
    out = tmp_path / f"{name}.osm"
    rc = main(["train", *SYNTH, "--pattern", pattern, "--hidden", "4", "--seed", str(seed),
               "--out", str(out), *extra])
    assert rc == 0
    return out


def test_train_and_eval(tmp_path, capsys):
    model = train(tmp_path, "a", "0")
    assert main(["eval", *SYNTH, "--model", str(model)]) == 0
    out = capsys.readouterr().out
    lines = [line.split() for line in out.splitlines()[-3:]]
    loss = {row[0]: float(row[2]) for row in lines}
    assert loss["0"] < loss["1"] and loss["0"] < loss["2"]


def test_merge_from_files(tmp_path, capsys):
    a = train(tmp_path, "a", "0")
    b = train(tmp_path, "b", "1", extra=["--export", str(tmp_path / "b.osuv")])
    assert main(["merge", "--model", str(a), "--peer-file", str(tmp_path / "b.osuv")]) == 0
    assert "merged ['b']" in capsys.readouterr().out
    assert set(modelfile.load(a).merged) == {"b"}
    # second merge of the same file changes nothing
    assert main(["merge", "--model", str(a), "--peer-file", str(b)]) == 0
    assert "unchanged ['b']" in capsys.readouterr().out


def test_merge_probe_improves(tmp_path, capsys):
    from fedoselm.data import synth_clusters

    a = train(tmp_path, "a", "0")
    b = train(tmp_path, "b", "1")
    probe = tmp_path / "probe.txt"
    rows = synth_clusters(8, 3, 80, seed=0).rows("1")[:20]
    np.savetxt(probe, rows)
    assert main(["merge", "--model", str(a), "--peer-file", str(b), "--probe", str(probe)]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1].split()
    assert float(line[-1]) < float(line[-3])


def test_self_merge_warns(tmp_path, capsys):
    a = train(tmp_path, "a", "0")
    copy = tmp_path / "copy.osuv"
    assert main(["export", "--model", str(a), "--out", str(copy)]) == 0
    assert main(["merge", "--model", str(a), "--peer-file", str(copy)]) == 0
    assert "own contribution" in capsys.readouterr().err


def test_seed_mismatch_exit_3(tmp_path, capsys):
    a = train(tmp_path, "a", "0", seed=0)
    b = train(tmp_path, "b", "1", seed=1)
    before = a.read_bytes()
    assert main(["merge", "--model", str(a), "--peer-file", str(b)]) == 3
    assert "seed" in capsys.readouterr().err
    assert a.read_bytes() == before


def test_unknown_pattern_exit_2(tmp_path, capsys):
    rc = main(["train", *SYNTH, "--pattern", "7", "--out", str(tmp_path / "x.osm")])
    assert rc == 2
    assert "available: 0, 1, 2" in capsys.readouterr().err


def test_missing_file_exit_4(tmp_path):
    assert main(["eval", "--model", str(tmp_path / "nope.osm")]) == 4


def test_bad_server_address_exit_2(tmp_path):
    a = train(tmp_path, "a", "0")
    assert main(["merge", "--model", str(a), "--server", "nohost", "--peers", "b"]) == 2


def test_unreachable_server_exit_4(tmp_path):
    a = train(tmp_path, "a", "0")
    assert main(["merge", "--model", str(a), "--server", "127.0.0.1:1", "--peers", "b"]) == 4


def test_experiment_reports_identical(tmp_path, capsys):
    args = ["experiment", "merge-loss", *SYNTH, "--hidden", "4", "--trials", "2"]
    assert main([*args, "--out-dir", str(tmp_path / "r1")]) == 0
    assert main([*args, "--out-dir", str(tmp_path / "r2")]) == 0
    for name in ("merge-loss.json", "merge-loss.txt"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_serve_and_online_merge(tmp_path):
    env = {**os.environ, "PYTHONUNBUFFERED": "1"}
    proc = subprocess.Popen(
        [sys.executable, "-m", "fedoselm", "serve", "--server", "127.0.0.1:0"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, env=env,
    )
    try:
        line = proc.stdout.readline()
        assert line.startswith("listening on ")
        address = line.split()[-1]
        a = train(tmp_path, "a", "0")
        b = train(tmp_path, "b", "1")
        assert main(["merge", "--model", str(b), "--server", address]) == 0
        assert main(["merge", "--model", str(a), "--server", address, "--peers", "nobody"]) == 4
        assert main(["merge", "--model", str(a), "--server", address, "--peers", "b"]) == 0
        assert set(modelfile.load(a).merged) == {"b"}
    finally:
        proc.send_signal(signal.SIGINT)
        assert proc.wait(timeout=10) == 0


def test_serve_port_in_use_exit_1():
    import socket

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        s.listen()
        port = s.getsockname()[1]
        assert main(["serve", "--server", f"127.0.0.1:{port}"]) == 1
