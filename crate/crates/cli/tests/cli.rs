use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::{arr1, arr2};
use ritz_cli::commands::{cmd_analyze, cmd_eval, AnalyzeInput, MetricSelection};
use ritz_cli::presets::{self, ADAPTIVE_COUNTS};
use ritz_cli::ExperimentConfig;
use ritz_core::analysis::{evaluate_grid, FieldGrid};
use ritz_core::autodiff::ActivationKind;
use ritz_core::energy::EnergyModel;
use ritz_core::network::{Checkpoint, Layer, Mlp};
use ritz_core::sampling::{Domain, Strategy};

fn ritz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ritz"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const MINIMAL_1D: &str = r#"
[model]
kind = "one_d"
gamma = 0.5

[net]
layer_widths = [8, 8]
activation = { tag = "tanh" }

[train]
iterations = 40
lr = 0.01
tau = 500.0
seed = 1
log_every = 10

[train.plan.strategy]
kind = "uniform"
interior = 32
boundary = 2

[outputs]
directory = "unused"
grid = { nx = 64, ny = 1 }
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Loss columns of a training log, without timings.
fn losses(path: &Path) -> Vec<(u64, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["iteration"].as_u64().unwrap(), v["loss_total"].as_f64().unwrap())
        })
        .collect()
}

fn gradcheck_config(dir: &Path, activation: &str) -> PathBuf {
    let text = MINIMAL_1D
        .replace("[8, 8]", "[8, 8, 8]")
        .replace("tag = \"tanh\"", &format!("tag = \"{activation}\""));
    write_config(dir, &format!("{activation}.toml"), &text)
}

#[test]
fn config_round_trip_is_identity() {
    let c = ExperimentConfig::from_toml(MINIMAL_1D, Path::new("m.toml")).unwrap();
    let again = ExperimentConfig::from_toml(&c.to_toml(), Path::new("m2.toml")).unwrap();
    assert_eq!(again, c);
    assert_eq!(again.to_toml(), c.to_toml());
}

#[test]
fn every_preset_validates_and_round_trips() {
    for preset in presets::PRESETS {
        for full in [false, true] {
            let runs = preset.configs(full, None);
            assert!(!runs.is_empty(), "{}", preset.name);
            for (name, c) in runs {
                c.check().unwrap_or_else(|e| panic!("{}/{name}: {e}", preset.name));
                let back = ExperimentConfig::from_toml(&c.to_toml(), Path::new(&name)).unwrap();
                assert_eq!(back, c, "{}/{name}", preset.name);
            }
        }
    }
}

#[test]
fn desk_scale_shrinks_published_budgets() {
    let desk = presets::find("fig7-depth").unwrap().configs(false, None);
    let full = presets::find("fig7-depth").unwrap().configs(true, None);
    assert_eq!(full[2].1.train.iterations, 300_000);
    assert_eq!(full[2].1.net.layer_widths, vec![128; 5]);
    assert_eq!(desk[2].1.train.iterations, 60_000);
    assert_eq!(desk[2].1.net.layer_widths, vec![64; 5]);
}

#[test]
fn fig3_preset_compares_activations() {
    let runs = presets::find("fig3").unwrap().configs(false, None);
    let acts: Vec<&str> = runs.iter().map(|(_, c)| c.net.activation.name()).collect();
    for a in ["relu", "sigmoid", "tanh", "leaky_relu", "sm_relu"] {
        assert!(acts.contains(&a), "{acts:?}");
    }
}

#[test]
fn adaptive_preset_uses_stratified_counts() {
    let runs = presets::find("fig13-adaptive").unwrap().configs(false, None);
    assert_eq!(runs.len(), ADAPTIVE_COUNTS.len());
    match &runs[0].1.train.plan.strategy {
        Strategy::Stratified { n1, n2, n3, .. } => assert_eq!((*n1, *n2, *n3), (1500, 7000, 1500)),
        other => panic!("{other:?}"),
    }
    for (_, c) in &runs {
        assert_eq!(c.train.plan.interior_count(), 10_000);
    }
}

#[test]
fn gamma_override_replaces_sweep() {
    let runs = presets::find("fig6-mixed").unwrap().configs(false, Some(0.5));
    assert_eq!(runs.len(), 2);
    assert!(runs.iter().all(|(_, c)| c.model.gamma() == 0.5));
}

#[test]
fn unknown_key_is_rejected_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL_1D.replace("lr = 0.01", "lr = 0.01\nlearning_rate = 0.1");
    let p = write_config(dir.path(), "bad.toml", &text);
    let o = ritz(&["train", "--config", s(&p)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
}

#[test]
fn invalid_values_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "w.toml", &MINIMAL_1D.replace("[8, 8]", "[8, 0]"));
    let o = ritz(&["train", "--config", s(&p)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("net.layer_widths[1]"), "{}", stderr(&o));

    let text = MINIMAL_1D.replace("kind = \"uniform\"", "kind = \"stratified\"\nn1 = 4\nn2 = 4\nn3 = 4");
    let p = write_config(dir.path(), "s.toml", &text.replace("interior = 32\n", ""));
    let o = ritz(&["train", "--config", s(&p)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("train.plan"), "{}", stderr(&o));
}

#[test]
fn train_writes_artifacts_and_seed_changes_log() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "min.toml", MINIMAL_1D);
    let mut logs = Vec::new();
    for seed in ["7", "8"] {
        let out = dir.path().join(format!("run{seed}"));
        let o = ritz(&["train", "--config", s(&p), "--seed", seed, "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        for f in ["train_log.jsonl", "checkpoint_final.json", "checkpoint_best.json", "field.csv"] {
            assert!(out.join(f).is_file(), "missing {f}");
        }
        let ckpt = Checkpoint::load(out.join("checkpoint_final.json")).unwrap();
        assert_eq!(ckpt.rng_seed, seed.parse::<u64>().unwrap());
        assert_eq!(ckpt.iteration, 40);
        logs.push(losses(&out.join("train_log.jsonl")));
    }
    assert_eq!(logs[0].iter().map(|r| r.0).collect::<Vec<_>>(), vec![10, 20, 30, 40]);
    assert_ne!(logs[0], logs[1]);
}

#[test]
fn same_seed_reproduces_log() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "min.toml", MINIMAL_1D);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(ritz(&["train", "--config", s(&p), "--out", s(&a)]).status.success());
    assert!(ritz(&["train", "--config", s(&p), "--out", s(&b)]).status.success());
    assert_eq!(losses(&a.join("train_log.jsonl")), losses(&b.join("train_log.jsonl")));
    assert_eq!(
        fs::read(a.join("checkpoint_final.json")).unwrap(),
        fs::read(b.join("checkpoint_final.json")).unwrap()
    );
}

#[test]
fn non_finite_run_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "nan.toml", &MINIMAL_1D.replace("lr = 0.01", "lr = 1e300"));
    let out = dir.path().join("nan");
    let o = ritz(&["train", "--config", s(&p), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"), "{}", stderr(&o));
}

#[test]
fn eval_matches_in_memory_grid() {
    let dir = tempfile::tempdir().unwrap();
    let net = Mlp::init(2, &[6, 6], ActivationKind::sm_relu(0.1), 5).unwrap();
    let model = EnergyModel::TwoDReg {
        gamma: 0.5,
        eps: 0.01,
        length: 2.0,
    };
    let mut ckpt = Checkpoint::from_net(&net, 5, 0);
    ckpt.model = Some(model);
    let cp = dir.path().join("c.json");
    ckpt.save(&cp).unwrap();
    let out = dir.path().join("f.csv");
    cmd_eval(&cp, 33, 17, None, &out).unwrap();
    let expect = evaluate_grid(&net, &model, 33, 17).unwrap();
    let got = FieldGrid::load_csv(&out).unwrap();
    let worst = expect
        .nodes
        .iter()
        .zip(&got.nodes)
        .map(|(a, b)| {
            [a.x - b.x, a.y - b.y, a.u - b.u, a.ux - b.ux, a.uy - b.uy, a.uxx - b.uxx]
                .iter()
                .fold(0f64, |m, d| m.max(d.abs()))
        })
        .fold(0f64, f64::max);
    assert!(worst <= 1e-15, "{worst}");
    assert_eq!(got.domain, Domain::rectangle(2.0));

    let o = ritz(&["eval", "--checkpoint", s(&cp), "--nx", "2", "--ny", "2", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(FieldGrid::load_csv(&out).unwrap().nodes.len(), 4);
}

#[test]
fn eval_rejects_bad_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let net = Mlp::init(1, &[4], ActivationKind::Tanh, 1).unwrap();
    let mut ckpt = Checkpoint::from_net(&net, 1, 0);
    ckpt.format_version = 7;
    let cp = dir.path().join("v.json");
    ckpt.save(&cp).unwrap();
    let o = ritz(&["eval", "--checkpoint", s(&cp), "--out", s(&dir.path().join("f.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("version 7"), "{}", stderr(&o));

    let garbled = dir.path().join("g.json");
    fs::write(&garbled, "{\"format_version\": 1, \"input_dim\": ").unwrap();
    let o = ritz(&["eval", "--checkpoint", s(&garbled)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}

#[test]
fn gradcheck_passes_for_each_activation_family() {
    let dir = tempfile::tempdir().unwrap();
    for act in ["sm_relu", "tanh", "relu"] {
        let p = gradcheck_config(dir.path(), act);
        let o = ritz(&["gradcheck", "--config", s(&p), "--probes", "200"]);
        assert_eq!(o.status.code(), Some(0), "{act}: {}{}", stdout(&o), stderr(&o));
        assert!(stdout(&o).contains("passed"));
    }
}

#[test]
fn corrupted_gradient_fails_gradcheck() {
    let dir = tempfile::tempdir().unwrap();
    let p = gradcheck_config(dir.path(), "sm_relu");
    let o = ritz(&["gradcheck", "--config", s(&p), "--probes", "50", "--corrupt-gradient"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("layers["), "{}", stderr(&o));
}

/// `u = max(0, x + γ − 1)`: flat, then slope one.
fn exact_1d(gamma: f64) -> Mlp {
    let hidden = Layer::new(arr2(&[[1.0]]), arr1(&[gamma - 1.0]));
    let out = Layer::new(arr2(&[[1.0]]), arr1(&[0.0]));
    Mlp::from_layers(1, ActivationKind::Relu, vec![hidden, out]).unwrap()
}

fn grid_csv(nx: usize, ny: usize, length: f64, f: impl Fn(f64, f64) -> (f64, f64, f64)) -> String {
    let mut s = String::from("x,y,u,ux,uy,uxx\n");
    for j in 0..ny {
        for i in 0..nx {
            let x = (i as f64 + 0.5) * length / nx as f64;
            let y = (j as f64 + 0.5) / ny as f64;
            let (u, ux, uy) = f(x, y);
            s.push_str(&format!("{x:?},{y:?},{u:?},{ux:?},{uy:?},0.0\n"));
        }
    }
    s
}

#[test]
fn analyze_kinks_of_exact_minimizer() {
    let dir = tempfile::tempdir().unwrap();
    let mut ckpt = Checkpoint::from_net(&exact_1d(0.5), 0, 0);
    ckpt.model = Some(EnergyModel::OneD { gamma: 0.5 });
    let cp = dir.path().join("exact.json");
    ckpt.save(&cp).unwrap();
    let sel = MetricSelection {
        kinks: true,
        ..Default::default()
    };
    let report = cmd_analyze(AnalyzeInput::Checkpoint { path: &cp, nx: 1000, ny: 1 }, sel, 0.5, None).unwrap();
    assert_eq!(report["kink_count"], 1);
    assert!(report["quad_energy"].as_f64().unwrap() < 1e-12);

    let out = dir.path().join("r.json");
    let o = ritz(&["analyze", "--checkpoint", s(&cp), "--kinks", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["kink_count"], 1);
}

#[test]
fn analyze_synthetic_laminate_and_affine_fields() {
    let dir = tempfile::tempdir().unwrap();
    let laminate = dir.path().join("lam.csv");
    fs::write(
        &laminate,
        grid_csv(200, 20, 1.0, |x, _| {
            let s = if (0.1..0.35).contains(&x) || (0.6..0.85).contains(&x) { 1.0 } else { 0.0 };
            (0.0, s, 0.0)
        }),
    )
    .unwrap();
    let o = ritz(&["analyze", "--field", s(&laminate), "--bands"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["band_count"], 2);

    let affine = dir.path().join("aff.csv");
    fs::write(&affine, grid_csv(64, 32, 1.0, |x, _| (0.5 * x, 0.5, 0.0))).unwrap();
    let o = ritz(&["analyze", "--field", s(&affine), "--y-independence"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["y_independence"], 0.0);

    let o = ritz(&["analyze", "--field", s(&affine), "--kinks"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("1D"), "{}", stderr(&o));
}

#[test]
fn analyze_without_selectors_reports_everything_applicable() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("aff.csv");
    fs::write(&f, grid_csv(64, 32, 2.0, |x, _| (0.5 * x, 0.5, 0.0))).unwrap();
    let report = cmd_analyze(AnalyzeInput::Field(&f), MetricSelection::default(), 0.5, None).unwrap();
    assert_eq!(report["band_count"], 0);
    assert!(report.get("kink_count").is_none());
    assert_eq!(report["y_independence"], 0.0);
}

#[test]
fn unknown_preset_lists_presets() {
    let o = ritz(&["reproduce", "fig99"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("fig99") && e.contains("fig3-relu") && e.contains("fig14-rotated"), "{e}");
}

#[test]
fn reproduce_writes_summary_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let mut summaries = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = ritz(&["--threads", threads, "reproduce", "fig3", "--iterations", "20", "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        let runs: Vec<(String, f64)> = v["runs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| (r["name"].as_str().unwrap().to_string(), r["final_quad_energy"].as_f64().unwrap()))
            .collect();
        assert_eq!(runs.len(), 5);
        assert!(out.join(&runs[0].0).join("field.csv").is_file());
        summaries.push(runs);
    }
    assert_eq!(summaries[0], summaries[1]);
}

#[test]
fn fig3_relu_preset_reaches_exact_minimizer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig3-relu");
    let o = ritz(&["reproduce", "fig3-relu", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let q = v["runs"][0]["final_quad_energy"].as_f64().unwrap();
    assert!(q < 1e-3, "{q}");
}
