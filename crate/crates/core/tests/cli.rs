use std::path::{Path, PathBuf};
use std::process::Command;

use lgg::graph::export::read_edge_list;
use lgg::graph::{build_lgg, GraphParams};
use lgg::harness::config::ExperimentConfig;
use lgg::model::{load_weights, Split};

fn lgg(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lgg")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn run_ok(args: &[&str]) {
    let (code, err) = lgg(args);
    assert_eq!(code, 0, "{args:?}: {err}");
}

#[test]
fn every_command_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let teacher_cfg = write_config(d, "teacher.txt", "model.hidden = 32,32\noptim.epochs = 5\n");
    let teacher_out = d.join("teacher");
    run_ok(&["train", "--config", &s(&teacher_cfg), "--seed", "3", "--out", &s(&teacher_out)]);

    let train_cfg = write_config(
        d,
        "train.txt",
        "# regularized run\nobjective.kind = cross-entropy+regularizer\nobjective.gamma = 0.1\noptim.epochs = 4\n",
    );
    let distill_cfg = write_config(
        d,
        "distill.txt",
        &format!(
            "objective.kind = distill\nteacher.weights = {}\nteacher.hidden = 32,32\nmodel.hidden = 8,8\noptim.epochs = 4\ndistill.baseline = true\n",
            teacher_out.join("weights.txt").display()
        ),
    );
    let lv_cfg = write_config(d, "lv.txt", "objective.kind = label-variation\nmodel.output = 8\noptim.epochs = 3\n");
    let gc_cfg = write_config(d, "gc.txt", "gradcheck.scope = quick\n");

    for rep in ["a", "b"] {
        let out = |name: &str| s(&d.join(format!("{name}_{rep}")));
        run_ok(&["train", "--config", &s(&train_cfg), "--seed", "1", "--out", &out("train")]);
        run_ok(&["evaluate", "--config", &s(&train_cfg), "--seed", "1", "--out", &out("train")]);
        run_ok(&["graph-inspect", "--config", &s(&train_cfg), "--seed", "1", "--out", &out("train")]);
        run_ok(&["distill", "--config", &s(&distill_cfg), "--seed", "2", "--out", &out("distill")]);
        run_ok(&["train", "--config", &s(&lv_cfg), "--seed", "5", "--out", &out("lv")]);
        run_ok(&["evaluate", "--config", &s(&lv_cfg), "--seed", "5", "--out", &out("lv")]);
        run_ok(&["gradcheck", "--config", &s(&gc_cfg), "--seed", "0", "--out", &out("gc")]);
    }
    for name in ["train", "distill", "lv", "gc"] {
        let a = files(&d.join(format!("{name}_a")));
        let b = files(&d.join(format!("{name}_b")));
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name}");
    }
    let snapshot = std::fs::read(d.join("train_a/config.txt")).unwrap();
    assert_eq!(snapshot, std::fs::read(&train_cfg).unwrap());
    let metrics = std::fs::read_to_string(d.join("train_a/metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,train_loss,train_acc,test_acc,sigma_"));
    assert_eq!(metrics.lines().count(), 5);
}

#[test]
fn graph_inspect_edges_match_in_memory_graphs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let text = "optim.epochs = 5\ninspect.inter_class_only = false\n";
    let cfg_path = write_config(d, "c.txt", text);
    let out = d.join("run");
    run_ok(&["train", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    run_ok(&["graph-inspect", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap()]);

    let cfg = ExperimentConfig::parse(text).unwrap();
    let ds = cfg.load_dataset().unwrap();
    let sample = ds.class_sample(Split::Test, 4, 5).unwrap();
    let net = load_weights(out.join("weights.txt")).unwrap();
    let trace = net.forward_traced(&sample.features).unwrap();
    let params = GraphParams::default();
    for (name, x) in ["input", "block1", "block2", "output"].iter().zip(&trace.reps) {
        let g = build_lgg(x, &params).unwrap();
        let edges = read_edge_list(&std::fs::read_to_string(out.join(format!("edges_{name}.tsv"))).unwrap()).unwrap();
        let mut want = Vec::new();
        for i in 0..20 {
            for j in i + 1..20 {
                if g.adjacency().at(i, j) != 0.0 {
                    want.push((i, j, g.adjacency().at(i, j)));
                }
            }
        }
        assert_eq!(edges.len(), want.len(), "{name}");
        for (e, (i, j, w)) in edges.iter().zip(want) {
            assert_eq!((e.src, e.dst), (i, j));
            assert!((e.weight - w).abs() <= 1e-8 * w);
        }
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let missing = d.join("missing.txt");
    assert_eq!(lgg(&["train", "--config", missing.to_str().unwrap()]).0, 2);

    let bad = write_config(d, "bad.txt", "optim.learning_rate = 0.1\n");
    assert_eq!(lgg(&["train", "--config", bad.to_str().unwrap()]).0, 2);

    let malformed = write_config(d, "malformed.txt", "optim.epochs = many\n");
    assert_eq!(lgg(&["train", "--config", malformed.to_str().unwrap()]).0, 2);

    let blowup = write_config(d, "blowup.txt", "optim.lr = 1e200\noptim.epochs = 2\n");
    let (code, err) = lgg(&["train", "--config", blowup.to_str().unwrap(), "--out", d.join("o").to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("epoch"), "{err}");

    let ok = write_config(d, "ok.txt", "optim.epochs = 1\n");
    std::fs::write(d.join("afile"), "").unwrap();
    let under_file = d.join("afile").join("out");
    assert_eq!(lgg(&["train", "--config", ok.to_str().unwrap(), "--out", under_file.to_str().unwrap()]).0, 4);

    let no_weights = d.join("empty");
    assert_eq!(lgg(&["evaluate", "--config", ok.to_str().unwrap(), "--out", no_weights.to_str().unwrap()]).0, 4);
}
