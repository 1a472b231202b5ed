use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_netrecon"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `key value` lines of metrics.txt.
fn metric(dir: &Path, key: &str) -> f64 {
    let text = fs::read_to_string(dir.join("metrics.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no {key} in metrics"))
        .trim()
        .parse()
        .unwrap()
}

const SMALL_ESTIMATED: &str = r#"
[network]
family = "laplacian"
graph = "directed"
n = 4
edge_probability = 0.5
seed = 3

[simulation]
n_samples = 65536

[spectral]
segment_length = 1024

[reconstruction]
mode = "exact-directed"
"#;

#[test]
fn oracle_six_node_laplacian_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "[network]\nfamily = \"laplacian\"\ngraph = \"reference-six\"\n[reconstruction]\nmode = \"oracle-exact-directed\"\n",
    );
    let out = tmp.path().join("out");
    assert!(run(&["--config", path_str(&cfg), "--out", path_str(&out), "run"]).status.success());
    assert_eq!(metric(&out, "f1"), 1.0);
    assert!(metric(&out, "max_abs_error") <= 1e-8);
    for f in ["network.txt", "node.txt", "cpsd/full.txt", "cpsd/grounded_6.txt", "weights.txt", "boolean.txt", "edges.csv", "manifest.toml"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn oracle_undirected_and_nonreciprocal_modes() {
    let tmp = tempfile::tempdir().unwrap();
    for (mode, net) in [
        ("oracle-undirected", "family = \"laplacian\"\ngraph = \"undirected\"\nn = 5\nedge_probability = 0.5"),
        ("oracle-nonreciprocal", "family = \"nonreciprocal-ring\"\nn = 5"),
    ] {
        let cfg = write_config(
            tmp.path(),
            &format!("{mode}.toml"),
            &format!("[network]\n{net}\n[spectral]\nomega0 = 1.0\n[reconstruction]\nmode = \"{mode}\"\n"),
        );
        let out = tmp.path().join(mode);
        assert!(run(&["--config", path_str(&cfg), "--out", path_str(&out), "run"]).status.success());
        assert_eq!(metric(&out, "f1"), 1.0, "{mode}");
        assert!(metric(&out, "max_abs_error") <= 1e-8, "{mode}");
    }
}

#[test]
fn empty_graph_boolean_is_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "[network]\nfamily = \"empty\"\nn = 5\n[reconstruction]\nmode = \"oracle-boolean\"\n",
    );
    let out = tmp.path().join("out");
    assert!(run(&["--config", path_str(&cfg), "--out", path_str(&out), "run"]).status.success());
    let b = fs::read_to_string(out.join("boolean.txt")).unwrap();
    let mut lines = b.lines();
    assert_eq!(lines.next(), Some("5"));
    assert!(lines.flat_map(|l| l.split_whitespace()).all(|x| x == "0"), "{b}");
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL_ESTIMATED);
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    assert!(run(&["--config", path_str(&cfg), "--out", path_str(&first), "run"]).status.success());
    let manifest = first.join("manifest.toml");
    // Different worker count on purpose: results must not depend on it.
    assert!(run(&["--config", path_str(&manifest), "--out", path_str(&second), "--workers", "1", "run"]).status.success());
    for f in ["network.txt", "cpsd/full.txt", "cpsd/grounded_1.txt", "cpsd/grounded_4.txt", "weights.txt", "boolean.txt", "metrics.txt"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f} differs");
    }
    let text = fs::read_to_string(&manifest).unwrap();
    for key in ["netrecon_version", "full_run_seed = 7", "grounded_run_seeds = [6, 5, 4, 3]", "omega0_snapped"] {
        assert!(text.contains(key), "manifest lacks {key}");
    }
}

#[test]
fn staged_subcommands_match_the_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL_ESTIMATED);
    let c = path_str(&cfg);
    let whole = tmp.path().join("whole");
    assert!(run(&["--config", c, "--out", path_str(&whole), "run"]).status.success());

    let sim = tmp.path().join("sim");
    let est = tmp.path().join("est");
    let rec = tmp.path().join("rec");
    assert!(run(&["--config", c, "--out", path_str(&sim), "simulate"]).status.success());
    assert!(sim.join("series/grounded_4.bin").exists());
    assert!(run(&["--config", c, "--out", path_str(&est), "estimate", "--input", path_str(&sim)]).status.success());
    assert!(run(&["--config", c, "--out", path_str(&rec), "reconstruct", "--input", path_str(&est)]).status.success());
    assert!(run(&["--config", c, "--out", path_str(&rec), "evaluate", "--input", path_str(&rec)]).status.success());

    assert_eq!(fs::read(whole.join("cpsd/full.txt")).unwrap(), fs::read(est.join("cpsd/full.txt")).unwrap());
    assert_eq!(fs::read(whole.join("cpsd/grounded_2.txt")).unwrap(), fs::read(est.join("cpsd/grounded_2.txt")).unwrap());
    assert_eq!(fs::read(whole.join("weights.txt")).unwrap(), fs::read(rec.join("weights.txt")).unwrap());
    assert_eq!(metric(&whole, "f1"), metric(&rec, "f1"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[spectral]\nsegment_lenght = 1024\n");
    let out = run(&["--config", path_str(&cfg), "--out", path_str(tmp.path()), "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("segment_lenght"));
}

#[test]
fn missing_network_file_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[network]\nfile = \"nowhere.txt\"\n");
    assert_eq!(run(&["--config", path_str(&cfg), "run"]).status.code(), Some(2));
}

#[test]
fn unstable_network_is_a_stability_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[node]\npreset = \"scalar-pole(-1)\"\n");
    let out = run(&["--config", path_str(&cfg), "--out", path_str(tmp.path()), "run"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("generate stage"));
}

#[test]
fn network_file_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("gen");
    assert!(run(&["--out", path_str(&gen), "generate"]).status.success());
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "[network]\nfile = \"gen/network.txt\"\n[node]\nfile = \"gen/node.txt\"\n",
    );
    let out = tmp.path().join("out");
    assert!(run(&["--config", path_str(&cfg), "--out", path_str(&out), "run"]).status.success());
    assert_eq!(metric(&out, "f1"), 1.0);
    assert_eq!(fs::read(gen.join("network.txt")).unwrap(), fs::read(out.join("network.txt")).unwrap());
}

#[test]
fn bench_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[spectral]\nsegment_length = 1024\n");
    let out = tmp.path().join("out");
    let start = Instant::now();
    let res = run(&["--config", path_str(&cfg), "--out", path_str(&out), "bench", "--sweep", "2:16384"]);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(res.status.success());
    assert!(elapsed < 10.0, "took {elapsed:.1} s");
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("mode,cost_model,n,len"));
    assert!(lines[1].starts_with("estimated,fft,2,16384,"));
}

#[test]
fn bench_lag_domain_cost_model_and_oracle_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let res = run(&["--out", path_str(&out), "--cost-model", "paper", "bench", "--sweep", "3:0,2:1024"]);
    assert!(res.status.success());
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    assert!(csv.contains("\noracle,fft,3,0,"));
    assert!(csv.contains("\nestimated,paper,2,1024,"));
}
