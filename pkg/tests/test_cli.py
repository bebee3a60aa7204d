import json

import numpy as np
import pytest

from dime.cli import ConfigError, main, read_config
from dime.metaprox import load_bundle, proximity_bundle
from dime.netcore import load_network
from dime.synthgen import SynthConfig

SMALL_MODEL = ["--encoder-widths", "8", "--fusion-width", "4", "--embed-dim", "4",
               "--epochs", "2", "--lr", "1e-4"]


def synth_config_text(**over):
    values = {f: getattr(SynthConfig(), f) for f in SynthConfig.field_names() if f != "seed"}
    values.update(n_users=30, posts_per_user=3.0)
    values.update(over)
    return "".join(f"{k} = {v}\n" for k, v in values.items())


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    root = tmp_path_factory.mktemp("gen")
    cfg = root / "synth.cfg"
    cfg.write_text("# small pair\n" + synth_config_text())
    assert main(["generate", "--config", str(cfg), "--seed", "4", "--out-dir", str(root / "g")]) == 0
    return root / "g"


def pair_flags(g):
    return ["--emerging", str(g / "emerging.edges"), "--mature", str(g / "mature.edges"),
            "--anchors", str(g / "anchors.txt")]


def manifest(path):
    return json.loads(path.read_text())


def test_generate_outputs(generated, tmp_path):
    names = sorted(p.name for p in generated.iterdir())
    assert names == ["anchors.txt", "emerging.edges", "generate.manifest.json",
                     "labels.csv", "mature.edges"]
    cfg = tmp_path / "synth.cfg"
    cfg.write_text(synth_config_text())
    assert main(["generate", "--config", str(cfg), "--seed", "4", "--out-dir", str(tmp_path / "g")]) == 0
    for name in ("anchors.txt", "emerging.edges", "labels.csv", "mature.edges"):
        assert (tmp_path / "g" / name).read_bytes() == (generated / name).read_bytes()
    m = manifest(generated / "generate.manifest.json")
    assert m["command"] == "generate" and m["config"]["n_users"] == 30
    assert set(m["outputs"]) == {"anchors.txt", "emerging.edges", "labels.csv", "mature.edges"}


def test_generate_default_config(tmp_path):
    assert main(["generate", "--out-dir", str(tmp_path)]) == 0
    assert load_network(tmp_path / "emerging.edges").n_users == 200


def test_generate_missing_key(tmp_path, capsys):
    cfg = tmp_path / "synth.cfg"
    cfg.write_text("".join(l + "\n" for l in synth_config_text().splitlines()
                           if not l.startswith("p_inter")))
    assert main(["generate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2
    assert "p_inter" in capsys.readouterr().err


def test_global_flags_before_subcommand(tmp_path):
    assert main(["--seed", "7", "--out-dir", str(tmp_path), "generate"]) == 0
    m = manifest(tmp_path / "generate.manifest.json")
    assert m["args"]["seed"] == 7


def test_read_config(tmp_path):
    cfg = tmp_path / "c"
    cfg.write_text("a = 1  # note\n\nb-c=x\n")
    assert read_config(cfg) == {"a": "1", "b_c": "x"}
    cfg.write_text("a = 1\na = 2\n")
    with pytest.raises(ConfigError, match="duplicate"):
        read_config(cfg)
    cfg.write_text("just words\n")
    with pytest.raises(ConfigError, match="key = value"):
        read_config(cfg)


def test_proximity_command(generated, tmp_path):
    out = tmp_path / "b.prox"
    assert main(["proximity", str(generated / "emerging.edges"), "-o", str(out),
                 "--out-dir", str(tmp_path)]) == 0
    back = load_bundle(out)
    ref = proximity_bundle(load_network(generated / "emerging.edges"))
    for a, b in zip(ref, back):
        assert a.path_id == b.path_id and np.array_equal(a.toarray(), b.toarray())
    assert main(["proximity", str(generated / "emerging.edges"), "-o", str(out),
                 "--paths", "0", "--out-dir", str(tmp_path)]) == 0
    assert [pm.path_id for pm in load_bundle(out)] == [0]


def test_proximity_empty_network(tmp_path):
    net = tmp_path / "empty.edges"
    net.write_text("U a\nU b\n")
    assert main(["proximity", str(net), "--out-dir", str(tmp_path)]) == 0
    bundle = load_bundle(tmp_path / "empty.prox")
    assert len(bundle) == 8 and all(pm.matrix.nnz == 0 for pm in bundle)


def test_embed_defaults_echoed(generated, tmp_path):
    assert main(["embed", *pair_flags(generated), *SMALL_MODEL, "--out-dir", str(tmp_path)]) == 0
    m = manifest(tmp_path / "embed.manifest.json")
    train = m["config"]["train"]
    assert (train["alpha"], train["beta"], train["gamma"]) == (1.0, 0.02, 100.0)
    assert train["batch_size"] == 64
    assert {"embeddings.csv", "embeddings_mature.csv", "model.dime", "loss_trace.csv"} <= set(m["outputs"])
    lines = (tmp_path / "loss_trace.csv").read_text().splitlines()
    assert lines[0] == "epoch,mean_batch_loss,full_loss" and len(lines) == 3


def test_config_file_and_flag_precedence(generated, tmp_path):
    cfg = tmp_path / "model.cfg"
    cfg.write_text("alpha = 0.5\nbeta = 0.1\n")
    assert main(["embed", *pair_flags(generated), *SMALL_MODEL, "--config", str(cfg),
                 "--beta", "0.3", "--out-dir", str(tmp_path)]) == 0
    train = manifest(tmp_path / "embed.manifest.json")["config"]["train"]
    assert train["alpha"] == 0.5 and train["beta"] == 0.3
    cfg.write_text("alpah = 0.5\n")
    assert main(["embed", *pair_flags(generated), "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2


def test_auto_is_single_network_phi0(generated, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    g1 = ["--emerging", str(generated / "emerging.edges")]
    assert main(["embed", *g1, "--mode", "auto", *SMALL_MODEL, "--out-dir", str(a)]) == 0
    assert main(["embed", *g1, "--mode", "dime-sh", "--paths", "0", *SMALL_MODEL,
                 "--out-dir", str(b)]) == 0
    assert (a / "embeddings.csv").read_bytes() == (b / "embeddings.csv").read_bytes()


def test_alpha_zero_ignores_mature_network(generated, tmp_path):
    other = tmp_path / "other"
    cfg = tmp_path / "synth.cfg"
    cfg.write_text(synth_config_text())
    assert main(["generate", "--config", str(cfg), "--seed", "99", "--out-dir", str(other)]) == 0
    # anchors name emerging users by id, so the foreign mature network gets none
    no_anchors = tmp_path / "none.txt"
    no_anchors.write_text("")
    emerging = str(generated / "emerging.edges")
    runs = []
    for mature, anchors, out in ((generated / "mature.edges", generated / "anchors.txt", "x"),
                                 (other / "mature.edges", no_anchors, "y")):
        assert main(["embed", "--emerging", emerging, "--mature", str(mature),
                     "--anchors", str(anchors), "--alpha", "0", *SMALL_MODEL,
                     "--out-dir", str(tmp_path / out)]) == 0
        runs.append((tmp_path / out / "embeddings.csv").read_bytes())
    assert runs[0] == runs[1]


def test_eval_row_counts(generated, tmp_path):
    assert main(["eval", "link", *pair_flags(generated), *SMALL_MODEL, "--epochs", "1",
                 "--methods", "dime,autoencoder", "--lambdas", "0.5,1.0", "--thetas", "1,2",
                 "--folds", "2", "--out-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "link.csv").read_text().splitlines()
    # 2 methods x 2 lambdas x 2 thetas, five metrics each
    assert len(rows) == 1 + 8 * 5
    assert rows[0] == "method,metric,lambda,theta_or_k,mean,std,n_runs"


def test_eval_community_and_replay(generated, tmp_path):
    out = tmp_path / "c"
    assert main(["eval", "community", *pair_flags(generated), *SMALL_MODEL, "--epochs", "1",
                 "--methods", "dime-sh", "--ks", "2,4", "--runs", "2", "--seed", "3",
                 "--out-dir", str(out)]) == 0
    first = (out / "community.csv").read_bytes()
    assert len(first.splitlines()) == 1 + 2 * 4
    replay_dir = tmp_path / "r"
    assert main(["replay", str(out / "eval-community.manifest.json"),
                 "--out-dir", str(replay_dir)]) == 0
    assert (replay_dir / "community.csv").read_bytes() == first


def test_replay_detects_tampering(generated, tmp_path):
    assert main(["embed", "--emerging", str(generated / "emerging.edges"), "--mode", "dime-sh",
                 *SMALL_MODEL, "--out-dir", str(tmp_path)]) == 0
    path = tmp_path / "embed.manifest.json"
    m = manifest(path)
    m["outputs"]["embeddings.csv"] = "0" * 64
    path.write_text(json.dumps(m))
    assert main(["replay", str(path), "--out-dir", str(tmp_path / "again")]) == 3


@pytest.mark.parametrize("argv", [
    ["embed", "--emerging", "/nonexistent/net.edges", "--mode", "dime-sh"],
    ["eval", "link", "--emerging", "/nonexistent/net.edges", "--methods", "autoencoder"],
    ["proximity", "/nonexistent/net.edges"],
])
def test_errors_exit_nonzero(argv, tmp_path, capsys):
    assert main([*argv, "--out-dir", str(tmp_path)]) == 2
    assert "dime: error" in capsys.readouterr().err


def test_bad_method_and_usage(generated, tmp_path):
    assert main(["eval", "link", *pair_flags(generated), "--methods", "line",
                 "--out-dir", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["embed"])
    assert exc.value.code != 0
