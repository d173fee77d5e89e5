import json

import numpy as np
import pytest

from fedgeo import (
    AggregatorConfig,
    ConfigError,
    InputError,
    build_clients,
    flatten,
    gradient,
    initial_reference,
    local_train,
    partition_report,
    proxy_map,
    regulate_and_aggregate,
    run,
    unflatten,
)
from fedgeo.cli import main
from fedgeo.config import parse_config
from fedgeo.harness import CSV_HEADER, _client_graphs
from fedgeo.model import LOCAL, SHARED, FlatVector


SMALL = """
run.rounds = 3
run.seeds = 1, 2
data.kind = planted
data.blocks = 2
data.block_size = 8
data.p_in = 0.6
data.p_out = 0.1
data.classes = 2
data.features = 4
data.clients = 2
model.hidden = 4
client.lr = 0.1
server.regulation = ggrs
"""


def _write(tmp_path, text, name="run.conf"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_csv_header_is_the_contract():
    assert CSV_HEADER == (
        "round,seed,test_acc,gamma_mean,alignment,sensitivity,clip_rate,atten_rate"
    )


def test_single_client_matches_centralized_descent():
    # K = 1 under plain averaging is gradient descent on the one client's
    # data; the independent oracle runs descent directly on the model
    cfg = parse_config("""
data.kind = planted
data.blocks = 2
data.block_size = 10
data.classes = 2
data.features = 4
data.clients = 1
model.hidden = 4
client.lr = 0.1
""", path="inline.conf")
    clients, params0 = build_clients(cfg, run_seed=1)
    assert len(clients) == 1
    c = clients[0]

    oracle = params0
    shared = flatten(params0, group=SHARED)
    ref = initial_reference(proxy_map(shared, AggregatorConfig()).values.shape[0])
    agg = AggregatorConfig(mode="plain")

    for t in range(1, 21):
        u = local_train(c, shared, round_index=t)
        delta, ref, _ = regulate_and_aggregate([u], ref, agg)
        shared = FlatVector(values=shared.values + delta.values,
                            layout=shared.layout)

        _, g = gradient(oracle, c.adj, c.graph.features, c.graph.labels,
                        c.graph.train_mask, activation="relu")
        flat = flatten(oracle)
        step = flatten(g)
        oracle = unflatten(
            FlatVector(values=flat.values - 0.1 * step.values, layout=flat.layout),
            oracle,
        )
        gap = np.max(np.abs(shared.values - flatten(oracle).values))
        assert gap < 1e-10, f"round {t}: trajectory gap {gap}"


def test_run_emits_contracted_files(tmp_path):
    cfg = parse_config(SMALL, path="inline.conf")
    out = tmp_path / "out"
    result = run(cfg, out=str(out))

    csv_lines = result.csv_path.read_text().splitlines()
    assert csv_lines[0] == CSV_HEADER
    assert len(csv_lines) == 1 + 3 * 2  # rounds x seeds
    for line in csv_lines[1:]:
        cells = line.split(",")
        assert len(cells) == 8
        float_cells = [float(x) for x in cells]
        assert float_cells[0] in (1.0, 2.0, 3.0)
        assert float_cells[1] in (1.0, 2.0)
        assert 0.0 <= float_cells[2] <= 1.0

    assert sorted(p.name for p in result.jsonl_paths) == [
        "regulation_seed1.jsonl", "regulation_seed2.jsonl",
    ]
    rows = [json.loads(l) for l in
            result.jsonl_paths[0].read_text().splitlines()]
    assert len(rows) == 3 * 2  # rounds x clients
    assert set(rows[0]) == {"round", "client", "cos_ref", "atten", "retention", "clip"}

    summary = json.loads(result.summary_path.read_text())
    assert summary["rounds"] == 3
    assert summary["seeds"] == [1, 2]
    assert summary["clients"] == 2
    assert len(summary["trajectory"]["test_acc"]) == 3
    assert (out / "config.txt").read_text() == cfg.raw_text


def test_summary_tail_matches_csv(tmp_path):
    cfg = parse_config(SMALL, path="inline.conf")
    result = run(cfg, out=str(tmp_path / "o"))
    lines = result.csv_path.read_text().splitlines()[1:]
    per_seed = {}
    for line in lines:
        cells = line.split(",")
        per_seed.setdefault(int(cells[1]), []).append(float(cells[2]))
    tails = [np.mean(v) for _, v in sorted(per_seed.items())]  # 3 rounds < 10
    want_mean = float(np.mean(tails))
    want_std = float(np.std(tails))
    got = result.summary["last10"]["test_acc"]
    assert got["mean"] == pytest.approx(want_mean, abs=1e-12)
    assert got["std"] == pytest.approx(want_std, abs=1e-12)


def test_rerun_is_byte_identical(tmp_path):
    cfg = parse_config(SMALL, path="inline.conf")
    r1 = run(cfg, out=str(tmp_path / "a"))
    r2 = run(cfg, out=str(tmp_path / "b"))
    assert r1.csv_path.read_bytes() == r2.csv_path.read_bytes()
    for p1, p2 in zip(r1.jsonl_paths, r2.jsonl_paths):
        assert p1.read_bytes() == p2.read_bytes()
    assert r1.summary_path.read_bytes() == r2.summary_path.read_bytes()


def test_seed_override_runs_single_seed(tmp_path):
    cfg = parse_config(SMALL, path="inline.conf")
    result = run(cfg, seed=7, out=str(tmp_path / "o"))
    lines = result.csv_path.read_text().splitlines()
    assert len(lines) == 1 + 3
    assert all(l.split(",")[1] == "7" for l in lines[1:])
    assert [p.name for p in result.jsonl_paths] == ["regulation_seed7.jsonl"]


def test_different_run_seeds_resample_everything():
    cfg = parse_config(SMALL, path="inline.conf")
    a, pa = build_clients(cfg, run_seed=1)
    b, pb = build_clients(cfg, run_seed=2)
    assert not np.array_equal(a[0].graph.features, b[0].graph.features)
    assert not np.array_equal(flatten(pa).values, flatten(pb).values)


def test_cross_domain_heads_stay_local():
    cfg = parse_config("""
run.regime = cross_domain
data1.kind = planted
data1.blocks = 2
data1.block_size = 8
data1.classes = 2
data1.features = 4
data2.kind = planted
data2.blocks = 2
data2.block_size = 8
data2.classes = 2
data2.features = 4
model.hidden = 4
client.lr = 0.1
""", path="inline.conf")
    clients, params0 = build_clients(cfg, run_seed=1)
    assert len(clients) == 2
    shared = flatten(params0, group=SHARED)
    full = flatten(params0, group="all")
    assert 0 < shared.values.shape[0] < full.values.shape[0]

    ref = initial_reference(proxy_map(shared, AggregatorConfig()).values.shape[0])
    agg = AggregatorConfig(mode="plain")
    for t in range(1, 4):
        updates = [local_train(c, shared, round_index=t) for c in clients]
        for u in updates:  # only the shared group ever leaves a client
            assert u.delta.values.shape[0] == shared.values.shape[0]
        delta, ref, _ = regulate_and_aggregate(updates, ref, agg)
        shared = FlatVector(values=shared.values + delta.values,
                            layout=shared.layout)

    heads = [flatten(c.params, group=LOCAL).values for c in clients]
    init_head = flatten(params0, group=LOCAL).values
    assert not np.array_equal(heads[0], heads[1])  # trained on different data
    for h in heads:
        assert not np.array_equal(h, init_head)  # heads did train


def _skewed_csv_source(tmp_path):
    # class 0 nodes are all train, class 1 nodes are all test, so a
    # sufficiently skewed partition starves one client of train nodes
    d = tmp_path / "csvsrc"
    d.mkdir()
    n = 8
    (d / "edges.csv").write_text(
        "\n".join(f"{i},{(i + 1) % n}" for i in range(n)) + "\n")
    (d / "features.csv").write_text(
        "\n".join(f"{i / 8},{1 - i / 8}" for i in range(n)) + "\n")
    (d / "labels.csv").write_text(
        "\n".join(f"{0 if i < 4 else 1}" for i in range(n)) + "\n")
    (d / "splits.csv").write_text(
        "\n".join("train" if i < 4 else "test" for i in range(n)) + "\n")
    return d


def test_clients_without_train_nodes_are_dropped(tmp_path):
    d = _skewed_csv_source(tmp_path)
    base = f"""
data.kind = csv
data.edges = {d}/edges.csv
data.features = {d}/features.csv
data.labels = {d}/labels.csv
data.splits = {d}/splits.csv
data.clients = 2
partition.alpha = 0.05
model.hidden = 4
"""
    found = None
    for pseed in range(200):
        cfg = parse_config(base + f"partition.seed = {pseed}\n", path="inline.conf")
        pairs_train = [int(g.train_mask.sum())
                       for _, g in _client_graphs(cfg, run_seed=1)]
        if pairs_train.count(0) == 1:
            found = cfg
            break
    assert found is not None, "no partition seed starves exactly one client"
    clients, _ = build_clients(found, run_seed=1)
    assert len(clients) == 1  # the starved client is dropped, not trained
    assert clients[0].graph.train_mask.sum() >= 1


def test_all_clients_without_train_nodes_rejected(tmp_path):
    d = tmp_path / "notrain"
    d.mkdir()
    (d / "edges.csv").write_text("0,1\n")
    (d / "features.csv").write_text("1.0\n2.0\n")
    (d / "labels.csv").write_text("0\n1\n")
    (d / "splits.csv").write_text("test\ntest\n")
    cfg = parse_config(f"""
data.kind = csv
data.edges = {d}/edges.csv
data.features = {d}/features.csv
data.labels = {d}/labels.csv
data.splits = {d}/splits.csv
""", path="inline.conf")
    with pytest.raises(InputError):
        build_clients(cfg, run_seed=1)


def test_sources_must_agree_on_feature_width(tmp_path):
    cfg = parse_config("""
data1.kind = planted
data1.features = 4
data2.kind = planted
data2.features = 6
""", path="inline.conf")
    with pytest.raises(InputError):
        build_clients(cfg, run_seed=1)


def test_partition_report_lists_every_client():
    cfg = parse_config(SMALL, path="inline.conf")
    text = partition_report(cfg)
    lines = text.splitlines()
    assert "client" in lines[1] and "train" in lines[1]
    data_rows = [l for l in lines[2:] if l.lstrip()[:1].isdigit()]
    assert len(data_rows) >= cfg.n_clients


def test_cli_run_roundtrip(tmp_path, capsys):
    p = _write(tmp_path, SMALL.replace("run.seeds = 1, 2", "run.seeds = 1"))
    out = tmp_path / "results"
    assert main(["run", "--config", str(p), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "metrics.csv" in printed
    assert (out / "metrics.csv").exists()
    assert (out / "summary.json").exists()


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "absent.conf")]) == 1
    assert "error" in capsys.readouterr().err

    bad = _write(tmp_path, "run.rounds = zero\ndata.kind = complete\n", "bad.conf")
    assert main(["run", "--config", str(bad)]) == 1
    assert "bad.conf:1" in capsys.readouterr().err

    assert main(["toy-appendix"]) == 0
    assert "[ok ]" in capsys.readouterr().out

    rep = _write(tmp_path, SMALL, "rep.conf")
    assert main(["partition-report", "--config", str(rep)]) == 0
    assert "client" in capsys.readouterr().out


def test_cli_divergence_exit_code(tmp_path, capsys):
    p = _write(tmp_path, """
run.rounds = 30
run.seeds = 1
data.kind = planted
data.blocks = 2
data.block_size = 8
data.classes = 2
data.features = 4
model.hidden = 4
model.activation = identity
client.lr = 1e6
""", "boom.conf")
    with np.errstate(over="ignore", invalid="ignore"):
        code = main(["run", "--config", str(p), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "divergence" in capsys.readouterr().err


def test_gamma_mean_single_client_convention(tmp_path):
    cfg = parse_config("""
run.rounds = 2
run.seeds = 1
data.kind = planted
data.blocks = 2
data.block_size = 8
data.classes = 2
data.features = 4
model.hidden = 4
client.lr = 0.1
""", path="inline.conf")
    result = run(cfg, out=str(tmp_path / "o"))
    lines = result.csv_path.read_text().splitlines()[1:]
    for line in lines:
        assert line.split(",")[3] == "1.0"  # one live client: coherent by fiat
