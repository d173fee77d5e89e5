import pytest

from fedgeo import ConfigError, load_config
from fedgeo.config import parse_config


def _load(tmp_path, text, name="run.conf"):
    p = tmp_path / name
    p.write_text(text)
    return load_config(str(p))


MINIMAL = "data.kind = complete\ndata.n = 6\n"


def test_defaults(tmp_path):
    cfg = _load(tmp_path, MINIMAL)
    assert cfg.rounds == 100
    assert cfg.seeds == (1, 2, 3)
    assert cfg.regime == "intra_domain"
    assert cfg.alpha == 0.3
    assert cfg.layers == 2
    assert cfg.hidden == 16
    assert cfg.trainer == "fedavg"
    assert cfg.lr == 0.05
    assert cfg.epochs == 1
    assert cfg.regulation == "plain"
    assert cfg.server_alpha == 0.9
    assert cfg.server_beta == 0.5
    assert cfg.epsilon == "adaptive"
    assert cfg.subspace_dim == 8
    assert cfg.window == 32
    assert cfg.proxy_dim is None
    assert cfg.weights == "uniform"
    assert cfg.fallback == "largest"
    assert cfg.reference == "raw"
    assert cfg.n_clients == 1
    assert cfg.sources[0].kind == "complete"
    assert cfg.sources[0].n == 6


def test_full_parse(tmp_path):
    cfg = _load(tmp_path, """
# exercise every section
run.name = demo
run.rounds = 7
run.seeds = 4, 5
run.out = results
run.regime = intra_domain

data.kind = planted
data.blocks = 3
data.block_size = 12
data.p_in = 0.6
data.p_out = 0.02
data.classes = 3
data.features = 5
data.class_sep = 2.0
data.clients = 4

partition.alpha = 0.1
partition.seed = 9

model.layers = 1
model.hidden = 8
model.activation = identity
model.bias = false

client.trainer = fedprox
client.lr = 0.2
client.epochs = 3
client.mu = 0.5

server.regulation = ggrs
server.alpha = 0.8
server.beta = 0.25
server.epsilon = 1.5
server.subspace_dim = 4
server.window = 16
server.proxy_dim = 64
server.weights = by_train_count
server.fallback = none
server.reference = regulated
""")
    assert cfg.name == "demo"
    assert cfg.rounds == 7
    assert cfg.seeds == (4, 5)
    assert cfg.out == "results"
    src = cfg.sources[0]
    assert (src.kind, src.blocks, src.block_size) == ("planted", 3, 12)
    assert (src.p_in, src.p_out, src.classes) == (0.6, 0.02, 3)
    assert (src.feature_dim, src.class_sep, src.clients) == (5, 2.0, 4)
    assert (cfg.alpha, cfg.partition_seed) == (0.1, 9)
    assert (cfg.layers, cfg.hidden, cfg.activation, cfg.bias) == (1, 8, "identity", False)
    assert (cfg.trainer, cfg.lr, cfg.epochs, cfg.mu) == ("fedprox", 0.2, 3, 0.5)
    assert cfg.regulation == "ggrs"
    assert (cfg.server_alpha, cfg.server_beta, cfg.epsilon) == (0.8, 0.25, 1.5)
    assert (cfg.subspace_dim, cfg.window, cfg.proxy_dim) == (4, 16, 64)
    assert (cfg.weights, cfg.fallback, cfg.reference) == ("by_train_count", "none", "regulated")
    assert cfg.n_clients == 4


def test_comments_and_blank_lines(tmp_path):
    cfg = _load(tmp_path, "# header\n\ndata.kind = complete  \ndata.n = 4\n# tail\n")
    assert cfg.sources[0].n == 4


def test_error_names_file_and_line(tmp_path):
    with pytest.raises(ConfigError) as err:
        _load(tmp_path, "data.kind = complete\nrun.rounds = soon\n", name="bad.conf")
    assert "bad.conf:2" in str(err.value)
    assert "integer" in str(err.value)


def test_malformed_line_rejected(tmp_path):
    with pytest.raises(ConfigError) as err:
        _load(tmp_path, "data.kind = complete\nthis is not an assignment\n")
    assert ":2" in str(err.value)


def test_duplicate_key_rejected(tmp_path):
    with pytest.raises(ConfigError) as err:
        _load(tmp_path, "data.kind = complete\ndata.kind = planted\n")
    assert "duplicate" in str(err.value)


def test_unknown_section_and_key(tmp_path):
    with pytest.raises(ConfigError) as err:
        _load(tmp_path, "data.kind = complete\noptimizer.lr = 1\n")
    assert "unknown section" in str(err.value)
    with pytest.raises(ConfigError) as err:
        _load(tmp_path, "data.kind = complete\nrun.speed = fast\n")
    assert "unknown key" in str(err.value)


def test_data_section_required(tmp_path):
    with pytest.raises(ConfigError) as err:
        _load(tmp_path, "run.rounds = 3\n")
    assert "data" in str(err.value)


def test_kind_required(tmp_path):
    with pytest.raises(ConfigError) as err:
        _load(tmp_path, "data.n = 5\n")
    assert "kind" in str(err.value)


def test_numbered_sources(tmp_path):
    cfg = _load(tmp_path, """
data1.kind = complete
data1.n = 5
data1.clients = 2
data2.kind = planted
data2.clients = 3
""")
    assert len(cfg.sources) == 2
    assert cfg.sources[0].kind == "complete"
    assert cfg.sources[1].kind == "planted"
    assert cfg.n_clients == 5


def test_numbered_sources_must_be_consecutive(tmp_path):
    with pytest.raises(ConfigError) as err:
        _load(tmp_path, "data1.kind = complete\ndata3.kind = complete\n")
    assert "consecutive" in str(err.value)


def test_plain_and_numbered_sources_conflict(tmp_path):
    with pytest.raises(ConfigError) as err:
        _load(tmp_path, "data.kind = complete\ndata1.kind = complete\n")
    assert "single" in str(err.value)


def test_cross_domain_needs_two_sources(tmp_path):
    with pytest.raises(ConfigError):
        _load(tmp_path, "run.regime = cross_domain\ndata.kind = complete\n")
    cfg = _load(tmp_path, """
run.regime = cross_domain
data1.kind = planted
data2.kind = planted
""")
    assert cfg.regime == "cross_domain"


def test_cross_domain_needs_two_layers(tmp_path):
    with pytest.raises(ConfigError):
        _load(tmp_path, """
run.regime = cross_domain
model.layers = 1
data1.kind = planted
data2.kind = planted
""")


def test_seed_list_validation(tmp_path):
    cfg = _load(tmp_path, MINIMAL + "run.seeds = 3\n")
    assert cfg.seeds == (3,)
    with pytest.raises(ConfigError):
        _load(tmp_path, MINIMAL + "run.seeds = 1, one\n")
    with pytest.raises(ConfigError):
        _load(tmp_path, MINIMAL + "run.seeds = 1, 1\n")
    with pytest.raises(ConfigError):
        _load(tmp_path, MINIMAL + "run.seeds =\n")


def test_enum_validation(tmp_path):
    for bad in (
        "run.regime = federated",
        "model.activation = tanh",
        "model.layers = 3",
        "client.trainer = adam",
        "server.regulation = median",
        "server.weights = by_loss",
        "server.fallback = mean",
        "server.reference = mixed",
    ):
        with pytest.raises(ConfigError):
            _load(tmp_path, MINIMAL + bad + "\n")


def test_range_validation(tmp_path):
    for bad in (
        "run.rounds = 0",
        "partition.alpha = 0",
        "client.lr = -1",
        "client.epochs = 0",
        "client.mu = -0.5",
        "server.alpha = 1.0",
        "server.beta = -0.1",
        "server.epsilon = 0",
        "server.epsilon = soon",
        "server.subspace_dim = -1",
        "server.window = 0",
        "data.clients = 0",
    ):
        with pytest.raises(ConfigError):
            _load(tmp_path, MINIMAL + bad + "\n")


def test_subspace_dim_cannot_exceed_window(tmp_path):
    with pytest.raises(ConfigError):
        _load(tmp_path, MINIMAL + "server.subspace_dim = 40\nserver.window = 8\n")


def test_epsilon_adaptive_and_proxy_dim_auto(tmp_path):
    cfg = _load(tmp_path, MINIMAL + "server.epsilon = adaptive\nserver.proxy_dim = auto\n")
    assert cfg.epsilon == "adaptive"
    assert cfg.proxy_dim is None
    cfg2 = _load(tmp_path, MINIMAL + "server.proxy_dim = 0\n")
    assert cfg2.proxy_dim == 0


def test_csv_source_requires_paths(tmp_path):
    with pytest.raises(ConfigError) as err:
        _load(tmp_path, "data.kind = csv\n")
    assert "required" in str(err.value)


def test_csv_paths_resolved_relative_to_config(tmp_path):
    sub = tmp_path / "nested"
    sub.mkdir()
    (sub / "edges.csv").write_text("src,dst\n0,1\n")
    (sub / "features.csv").write_text("node_id,f0\n0,1.0\n1,2.0\n")
    (sub / "labels.csv").write_text("node_id,label\n0,0\n1,1\n")
    (sub / "splits.csv").write_text("node_id,split\n0,train\n1,test\n")
    cfg = _load(
        sub,
        """
data.kind = csv
data.edges = edges.csv
data.features = features.csv
data.labels = labels.csv
data.splits = splits.csv
""",
    )
    src = cfg.sources[0]
    assert src.edges == str(sub / "edges.csv")
    assert src.features_path == str(sub / "features.csv")


def test_partition_spec_seed_mixing(tmp_path):
    cfg = _load(tmp_path, MINIMAL + "data.clients = 3\npartition.seed = 7\n")
    spec = cfg.partition_spec(0, run_seed=2)
    assert spec.n_clients == 3
    assert spec.dirichlet_alpha == cfg.alpha
    assert spec.seed == 7 + 1000 * 2 + 500 + 0
    # different run seeds give different partition seeds
    assert cfg.partition_spec(0, run_seed=3).seed != spec.seed


def test_parse_config_keeps_raw_text():
    text = "data.kind = complete\ndata.n = 4\n"
    cfg = parse_config(text, path="inline.conf")
    assert cfg.raw_text == text


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_config(str(tmp_path / "absent.conf"))
    assert "absent.conf" in str(err.value)
