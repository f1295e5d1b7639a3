use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use driftlab_cli::config::{ChainSpec, Command as Cmd};
use driftlab_cli::{load_config, parse_config, Overrides};
use driftlab_core::{DriftFamily, JumpLaw};
use tempfile::TempDir;

const C3: &str = "command = \"classify\"\n[field]\nfamily = \"critical_lamperti\"\nc = 3\n";

fn driftlab(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_driftlab"))
        .current_dir(dir)
        .arg(&path)
        .args(args)
        .env_remove("DRIFTLAB_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim_end().to_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse_config("command = \"classify\"\nfield = { family = \"critical_lamperti\", c = 0.5 }\n").unwrap();
    assert_eq!(cfg.command, Cmd::Classify);
    assert_eq!(cfg.field, DriftFamily::CriticalLamperti { c: 0.5 });
    assert_eq!((cfg.x0, cfg.x_max, cfg.grid), (2.0, 1e4, 512));
    assert_eq!(cfg.up_jump, JumpLaw::Constant1);

    let dir = TempDir::new().unwrap();
    let out = driftlab(
        dir.path(),
        "command = \"classify\"\nfield = { family = \"critical_lamperti\", c = 0.5 }\n",
        &["--print-config"],
    );
    assert!(out.status.success());
    let echoed = stdout(&out);
    for line in ["x0 = 2.0", "x_max = 10000.0", "grid = 512", "seed = 0"] {
        assert!(echoed.lines().any(|l| l == line), "missing `{line}` in\n{echoed}");
    }
}

#[test]
fn unknown_command_exits_2() {
    let dir = TempDir::new().unwrap();
    let out = driftlab(
        dir.path(),
        "command = \"unknown_cmd\"\n[field]\nfamily = \"critical_lamperti\"\nc = 0.5\n",
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));
    assert!(stderr(&out).contains("unknown_cmd"));
}

#[test]
fn diagnostics_name_key_and_line() {
    let dir = TempDir::new().unwrap();
    let out = driftlab(dir.path(), "command = \"classify\"\nx0 = 2\nbogus = 1\n", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("line 3") && stderr(&out).contains("bogus"),
        "{}",
        stderr(&out)
    );

    let out = driftlab(dir.path(), "command = \"classify\"\nx0 = \"two\"\n", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    let out = driftlab(dir.path(), "command = \"classify\"\n\ngrid = 10\n", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3, key `grid`"), "{}", stderr(&out));

    let cfg = "command = \"classify\"\n[field]\nfamily = \"critical_lamperti\"\nc = -1\n";
    let out = driftlab(dir.path(), cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 4, key `field.c`"), "{}", stderr(&out));

    let out = driftlab(dir.path(), "command = \"experiment\"\nlevel = 0.5\n", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("key `level`"), "{}", stderr(&out));
}

#[test]
fn config_round_trips() {
    let texts = [
        C3,
        "command = \"simulate\"\nseed = 11\nhorizon = 50\nup_jump = { family = \"gamma_mean1\", shape = 2.5 }\n\
         down_jump = { family = \"uniform_mean1\", halfwidth = 0.5 }\n",
        "command = \"bd-oracle\"\nwindow = [3, 500]\nchain = { family = \"ratio\", c = 2 }\noutput = \"o.json\"\n",
        "command = \"experiment\"\nexperiment = \"occupancy\"\nfield = { family = \"mean_reverting\", kappa = 0.2 }\n",
        "command = \"classify\"\n[field]\nfamily = \"tabulated\"\nxs = [0.0, 10.0]\nts = [0.0, 100.0]\n\
         values = [[0.1, 0.05], [0.2, 0.1]]\n",
        "command = \"classify\"\nmethod = \"mv_critical\"\n[field]\nfamily = \"power_law\"\nrho = 0.1\nalpha = -0.5\nbeta = 0.25\n",
    ];
    for text in texts {
        let a = parse_config(text).unwrap();
        let b = parse_config(&a.to_toml().unwrap()).unwrap();
        assert_eq!(a, b, "{text}");
        let resolved = load_config(text, &Overrides::default(), None).unwrap();
        assert_eq!(parse_config(&resolved.to_toml().unwrap()).unwrap(), resolved);
    }
    let oracle = parse_config(texts[2]).unwrap();
    assert_eq!(oracle.chain, Some(ChainSpec::Ratio { c: 2.0 }));
}

#[test]
fn classify_transient_summary() {
    let dir = TempDir::new().unwrap();
    let out = driftlab(dir.path(), C3, &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "verdict=Transient c_estimate=3.000 method=theorem1");
}

#[test]
fn strict_exit_on_inconclusive() {
    let dir = TempDir::new().unwrap();
    let c1 = "command = \"classify\"\n[field]\nfamily = \"critical_lamperti\"\nc = 1.0\n";
    let out = driftlab(dir.path(), c1, &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("verdict=Inconclusive"));
    assert_eq!(driftlab(dir.path(), c1, &["--strict"]).status.code(), Some(1));
    assert_eq!(driftlab(dir.path(), C3, &["--strict"]).status.code(), Some(0));
}

#[test]
fn json_record_embeds_config_and_version() {
    let dir = TempDir::new().unwrap();
    let out = driftlab(dir.path(), C3, &["-o", "out.json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out.json")).unwrap()).unwrap();
    assert_eq!(v["version"], driftlab_core::VERSION);
    assert_eq!(v["command"], "classify");
    assert_eq!(v["config"]["grid"], 512);
    assert_eq!(v["config"]["seed"], 0);
    assert_eq!(v["result"]["verdict"], "Transient");
    assert_eq!(v["result"]["method"], "theorem1");
}

#[test]
fn experiment_csv_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = "command = \"experiment\"\nn_paths = 60\nhorizon = 3000\nlevel = 15\nseed = 77\nformat = \"csv\"\n\
               [field]\nfamily = \"critical_lamperti\"\nc = 0.5\n";
    assert!(driftlab(dir.path(), cfg, &["-o", "a.csv", "--workers", "1"])
        .status
        .success());
    assert!(driftlab(dir.path(), cfg, &["-o", "b.csv", "--workers", "3"])
        .status
        .success());
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("path,seed,reached_L,first_hit_time,returned,final_z\n"));
    assert_eq!(text.lines().count(), 61);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["result"]["n_paths"], 60);
    assert!(meta["result"]["reached_L_fraction"].is_number());

    // A different seed gives a different file.
    assert!(driftlab(dir.path(), cfg, &["-o", "c.csv", "--seed", "78"])
        .status
        .success());
    assert_ne!(
        fs::read(dir.path().join("a.csv")).unwrap(),
        fs::read(dir.path().join("c.csv")).unwrap()
    );
}

#[test]
fn bd_oracle_ratio_family() {
    let dir = TempDir::new().unwrap();
    let cfg = "command = \"bd-oracle\"\n[chain]\nfamily = \"ratio\"\nc = 2\n";
    let out = driftlab(dir.path(), cfg, &["-o", "bd.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("verdict=Transient ratio_test=Transient series_criterion=Transient"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("bd.json")).unwrap()).unwrap();
    assert_eq!(v["result"]["verdict"], "Transient");

    // Same chain through the library.
    let chain = driftlab_core::BDChain::from_fn(2, 10_000, |n| {
        let r = 1.0 + 2.0 / n as f64;
        (r / (1.0 + r), 1.0 / (1.0 + r))
    })
    .unwrap();
    let direct = driftlab_core::ratio_test(&chain, 2).unwrap();
    assert_eq!(
        v["result"]["ratio_test"]["right"]["verdict"],
        direct.verdict.to_string()
    );

    let cfg = "command = \"bd-oracle\"\n[chain]\nfamily = \"ratio\"\nc = 0.5\n";
    assert!(stdout(&driftlab(dir.path(), cfg, &[])).starts_with("verdict=Recurrent"));
}

#[test]
fn bd_oracle_from_field() {
    let dir = TempDir::new().unwrap();
    let cfg = "command = \"bd-oracle\"\nformat = \"csv\"\nquadrature_points = 4\n\
               [field]\nfamily = \"critical_lamperti\"\nc = 3\n";
    let out = driftlab(dir.path(), cfg, &["-o", "bd.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("verdict=Transient"));
    let text = fs::read_to_string(dir.path().join("bd.csv")).unwrap();
    assert!(text.starts_with("criterion,tail,verdict,c_estimate,window_lo,window_hi,argext\n"));
}

#[test]
fn seed_precedence() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("s.toml");
    let seed_of = |config: &str, args: &[&str], env: Option<&str>| -> String {
        fs::write(&path, config).unwrap();
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_driftlab"));
        cmd.arg(&path)
            .arg("--print-config")
            .args(args)
            .env_remove("DRIFTLAB_SEED");
        if let Some(e) = env {
            cmd.env("DRIFTLAB_SEED", e);
        }
        let out = cmd.output().unwrap();
        stdout(&out)
            .lines()
            .find(|l| l.starts_with("seed = "))
            .unwrap()
            .to_owned()
    };
    let plain = "command = \"simulate\"\n";
    let seeded = "command = \"simulate\"\nseed = 5\n";
    assert_eq!(seed_of(plain, &[], None), "seed = 0");
    assert_eq!(seed_of(plain, &[], Some("9")), "seed = 9");
    assert_eq!(seed_of(seeded, &[], Some("9")), "seed = 5");
    assert_eq!(seed_of(seeded, &["--seed", "7"], Some("9")), "seed = 7");

    let out = driftlab(dir.path(), plain, &["--seed", "18446744073709551615"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_win_over_set() {
    let dir = TempDir::new().unwrap();
    let out = driftlab(
        dir.path(),
        C3,
        &["--set", "field.c=0.25", "--set", "grid=200", "--print-config"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("c = 0.25") && text.contains("grid = 200"));

    let out = driftlab(dir.path(), C3, &["--set", "seed=3", "--seed", "4", "--print-config"]);
    assert!(stdout(&out).lines().any(|l| l == "seed = 4"));

    let out = driftlab(dir.path(), C3, &["--set", "field.c=0.25"]);
    assert_eq!(stdout(&out), "verdict=Recurrent c_estimate=0.250 method=theorem1");

    let out = driftlab(dir.path(), C3, &["--set", "field.c=abc"]);
    assert_eq!(out.status.code(), Some(2));
    let out = driftlab(dir.path(), C3, &["--set", "nokey"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn io_errors_exit_3_with_path() {
    let dir = TempDir::new().unwrap();
    let out = driftlab(dir.path(), C3, &["-o", "missing/dir/out.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("missing/dir/out.json"), "{}", stderr(&out));

    let out = Command::new(env!("CARGO_BIN_EXE_driftlab"))
        .arg(dir.path().join("absent.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("absent.toml"));
}

#[test]
fn writes_leave_no_temporaries() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("out.json"), "old").unwrap();
    assert!(driftlab(dir.path(), C3, &["-o", "out.json"]).status.success());
    let names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(sorted, ["out.json", "run.toml"]);
    assert!(fs::read_to_string(dir.path().join("out.json"))
        .unwrap()
        .starts_with('{'));
}

#[test]
fn simulate_and_check_run() {
    let dir = TempDir::new().unwrap();
    let out = driftlab(
        dir.path(),
        "command = \"simulate\"\nhorizon = 100\nseed = 3\n",
        &["-o", "t.csv", "--format", "csv"],
    );
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("events="));
    let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(csv.starts_with("tau,signed_jump,z_after\n"));
    assert!(dir.path().join("t.csv.meta.json").exists());

    let out = driftlab(dir.path(), "command = \"check\"\nn_paths = 2000\nseed = 1\n", &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("wald=pass"), "{}", stdout(&out));

    let occ = "command = \"experiment\"\nexperiment = \"occupancy\"\nn_paths = 1\ntotal_time = 2e4\n\
               field = { family = \"mean_reverting\", kappa = 0.2 }\n";
    let out = driftlab(dir.path(), occ, &["-o", "occ.csv", "--format", "csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("occ.csv")).unwrap();
    assert!(text.starts_with("cell,p_star,p_reflecting,residual\n"));
    assert_eq!(text.lines().count(), 22);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            parse_config(&fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}
