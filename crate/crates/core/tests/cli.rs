use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cibm::datagen::load_concept_csv;
use cibm::metrics::auc_tti;

const TINY: &str = "n = 300\nepochs = 4\nseeds = 0,1\nrepeats = 2\ncorrupt_k = 0,4\nnis_grid = 3\ndropout_seeds = 2\n";

fn cibm(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cibm"))
        .args(args)
        .env("CIBM_OUT", out)
        .output()
        .unwrap()
}

fn setup() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let cfg = cfg.display().to_string();
    (dir, cfg)
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn config_errors_exit_nonzero_and_name_the_key() {
    let (dir, cfg) = setup();
    for (args, key) in [
        (vec!["train", "--config", &cfg, "--beta", "1.5"], "beta"),
        (vec!["train", "--config", &cfg, "--bogus", "1"], "bogus"),
        (vec!["train", "--config", &cfg, "--epochs", "ten"], "epochs"),
    ] {
        let o = cibm(dir.path(), &args);
        assert!(!o.status.success());
        assert!(String::from_utf8_lossy(&o.stderr).contains(&format!("`{key}`")));
    }
    let o = cibm(dir.path(), &["eval", "--config", &cfg]);
    assert!(!o.status.success(), "eval without checkpoints must fail");
}

#[test]
fn gen_data_round_trips() {
    let (dir, cfg) = setup();
    let out = dir.path().join("g");
    let path = stdout(&cibm(&out, &["gen-data", "--config", &cfg]));
    let path = Path::new(path.trim());
    let text = fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 301);
    let ds = load_concept_csv(path).unwrap();
    assert_eq!(ds.len(), 300);
    assert_eq!(ds.n_groups(), 4);
}

#[test]
fn train_then_intervene_and_sweep_agree() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    let summary = stdout(&cibm(&out, &["train", "--config", &cfg, "--loss", "ib_b"]));
    assert!(summary.starts_with("name,value,std,n_seeds\n"));
    assert!(summary.lines().any(|l| l.starts_with("class_acc,") && l.ends_with(",2")));
    let log = fs::read_to_string(out.join("seed_0/train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);
    assert!(fs::read_to_string(out.join("config.txt")).unwrap().contains("loss = ib_b"));

    let printed = stdout(&cibm(&out, &["intervene", "--config", &cfg, "--loss", "ib_b"]));
    let csv = fs::read_to_string(out.join("interventions.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x,x_std"));
    let xs: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(xs.len(), 5);
    let auc = auc_tti(&xs).unwrap();
    assert!(printed.contains(&format!("AUC_TTI={auc:.4}")), "{printed}");
    assert!(fs::read_to_string(out.join("interventions.svg")).unwrap().starts_with("<svg"));

    stdout(&cibm(&out, &["corrupt-sweep", "--config", &cfg, "--loss", "ib_b"]));
    let sweep = fs::read_to_string(out.join("corrupt_sweep.csv")).unwrap();
    let k0: Vec<&str> = sweep.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(k0[0], "0");
    let k0_auc: f64 = k0[1].parse().unwrap();
    assert!((k0_auc - auc).abs() < 1e-12, "{k0_auc} vs {auc}");
}

#[test]
fn leakage_and_eval_tables() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    stdout(&cibm(&out, &["train", "--config", &cfg]));
    let table = stdout(&cibm(&out, &["leakage", "--config", &cfg]));
    assert!(table.contains("Complete CS") && table.contains("Selective Drop-out") && table.contains("Random Drop-out"));
    let csv = fs::read_to_string(out.join("leakage.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("ois_selective,") && l.ends_with(",,1")));
    assert!(csv.lines().any(|l| l.starts_with("nis_random,") && l.ends_with(",2")));
    let metrics = stdout(&cibm(&out, &["eval", "--config", &cfg]));
    for name in ["class_acc", "concept_acc", "ois", "nis"] {
        assert!(metrics.lines().any(|l| l.starts_with(&format!("{name},"))));
    }
}

#[test]
fn infoplane_writes_scatter_data() {
    let (dir, cfg) = setup();
    let out = dir.path().join("ip");
    stdout(&cibm(&out, &["infoplane", "--config", &cfg, "--seeds", "3", "--infoplane-stride", "3"]));
    let xy = fs::read_to_string(out.join("seed_3/infoplane_xc_cy.csv")).unwrap();
    let mut lines = xy.lines();
    assert_eq!(lines.next(), Some("t,x,y"));
    assert_eq!(lines.count(), 2);
    assert!(out.join("seed_3/infoplane_xz_zc.svg").exists());
    let all = fs::read_to_string(out.join("infoplane.csv")).unwrap();
    assert!(all.starts_with("seed,epoch,i_xc,i_cy,i_xz,i_zc,suspicious\n"));
}
