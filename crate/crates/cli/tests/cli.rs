//! End-to-end runs of the `fockcm` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("fockcm-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn fockcm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fockcm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let h = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (h, rows)
}

fn col(h: &[String], name: &str) -> usize {
    h.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    v.sort();
    v
}

#[test]
fn verify_ops_on_defaults_passes_and_is_manifested() {
    let d = scratch("ops");
    let o = fockcm(&["verify-ops"], &d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = d.join("verify-ops");
    let (h, rows) = csv_rows(&run.join("checks.csv"));
    assert!(!rows.is_empty());
    let (ratio, pass) = (col(&h, "ratio"), col(&h, "pass"));
    for r in &rows {
        assert!(r[ratio].parse::<f64>().unwrap() <= 1.0, "{r:?}");
        assert_eq!(r[pass], "true");
    }
    let man: toml::Table = fs::read_to_string(run.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(man["seed"].as_integer(), Some(20240));
    assert_eq!(man["status"].as_str(), Some("ok"));
    let cfg = fs::read(run.join("config.toml")).unwrap();
    let hex = |b: &[u8]| Sha256::digest(b).iter().map(|x| format!("{x:02x}")).collect::<String>();
    assert_eq!(man["config_sha256"].as_str().unwrap(), hex(&cfg));
    for a in man["artifacts"].as_array().unwrap() {
        let name = a["name"].as_str().unwrap();
        assert_eq!(a["sha256"].as_str().unwrap(), hex(&fs::read(run.join(name)).unwrap()), "{name}");
    }
}

#[test]
fn malformed_config_reports_every_field() {
    let d = scratch("bad");
    let cfg = d.join("bad.toml");
    fs::write(
        &cfg,
        "seed = \"x\"\n[grid]\nm = 12\ndelta = -1.0\n[solver]\nchi = \"soft\"\nunknown = 1\n[semiclassics]\nx0 = [1.0, 2.0]\n",
    )
    .unwrap();
    let o = fockcm(&["verify-ops", "--config", cfg.to_str().unwrap()], &d);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for field in ["seed", "solver.chi", "solver.unknown"] {
        assert!(err.contains(&format!("config-error\t{field}\t")), "{field} missing in:\n{err}");
    }
    // value errors surface once the types are right
    fs::write(&cfg, "[grid]\nm = 12\ndelta = -1.0\n[semiclassics]\nx0 = [1.0, 2.0]\n").unwrap();
    let err = stderr(&fockcm(&["verify-ops", "--config", cfg.to_str().unwrap()], &d));
    for field in ["grid.m", "grid.delta", "semiclassics.x0"] {
        assert!(err.contains(&format!("config-error\t{field}\t")), "{field} missing in:\n{err}");
    }

    fs::write(&cfg, "[grid\nm = 16\n").unwrap();
    let o = fockcm(&["verify-ops", "--config", cfg.to_str().unwrap()], &d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config-error\t<syntax>\t"));

    let o = fockcm(&["verify-ops", "--sweep", "h"], &d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config-error\t--sweep\t"));
    assert!(!d.join("verify-ops").exists(), "no run starts on a config error");
}

#[test]
fn same_config_and_seed_give_identical_csvs() {
    let d = scratch("det");
    for sub in ["verify-ops", "mc-crosscheck", "verify-ineq"] {
        let a = fockcm(&[sub], &d.join("a"));
        let b = fockcm(&[sub], &d.join("b"));
        assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
        assert_eq!(b.status.code(), Some(0));
        let fa = csv_files(&d.join("a").join(sub));
        assert!(!fa.is_empty());
        for f in fa {
            let g = d.join("b").join(sub).join(f.file_name().unwrap());
            assert_eq!(fs::read(&f).unwrap(), fs::read(&g).unwrap(), "{}", f.display());
        }
    }
    let c = fockcm(&["mc-crosscheck", "--seed", "7"], &d.join("c"));
    assert_eq!(c.status.code(), Some(0));
    assert_ne!(
        fs::read(d.join("a/mc-crosscheck/crosscheck.csv")).unwrap(),
        fs::read(d.join("c/mc-crosscheck/crosscheck.csv")).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_outputs() {
    let d = scratch("threads");
    let one = fockcm(&["solve", "--sweep", "gamma"], &d.join("one"));
    let two = fockcm(&["solve", "--sweep", "gamma", "--threads", "2"], &d.join("two"));
    assert_eq!(one.status.code(), Some(0), "{}", stderr(&one));
    assert_eq!(two.status.code(), Some(0));
    for name in ["solve.csv", "trajectory.csv", "u_final_run1_slot0.fock"] {
        assert_eq!(
            fs::read(d.join("one/solve").join(name)).unwrap(),
            fs::read(d.join("two/solve").join(name)).unwrap(),
            "{name}"
        );
    }
    let (h, rows) = csv_rows(&d.join("one/solve/solve.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[col(&h, "pass")] == "true"));
}

#[test]
fn solve_dumps_read_back() {
    let d = scratch("dump");
    assert_eq!(fockcm(&["solve"], &d).status.code(), Some(0));
    let bytes = fs::read(d.join("solve/u_final_run0_slot0.fock")).unwrap();
    let u = fockcm::fock::read_dump(&mut bytes.as_slice()).unwrap();
    assert_eq!((u.grid.d, u.grid.m, u.n_max), (1, 16, 2));
    assert!(u.norm() > 0.0 && u.norm().is_finite());
}

#[test]
fn suite_failure_lists_seed_and_inputs() {
    let d = scratch("fail");
    let cfg = d.join("strict.toml");
    fs::write(&cfg, "[solver]\noracle_tol = 1e-30\n").unwrap();
    let o = fockcm(&["solve", "--config", cfg.to_str().unwrap(), "--seed", "11"], &d);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("violation\tseed=11 h=0.1 gamma=0.05"), "{err}");
    let man: toml::Table = fs::read_to_string(d.join("solve/manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(man["status"].as_str(), Some("failure"));
}

#[test]
fn husimi_dumps_and_report() {
    let d = scratch("husimi");
    let o = fockcm(&["husimi"], &d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = d.join("husimi");
    let (h, rows) = csv_rows(&run.join("husimi_t0.csv"));
    assert_eq!(h, ["x1", "xi1", "value"]);
    assert_eq!(rows.len(), 64 * 128);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() >= 0.0));
    let raster = fs::read(run.join("husimi_t0.bin")).unwrap();
    assert_eq!(&raster[..4], b"HUSI");
    assert_eq!(raster.len(), 44 + 8 * rows.len());
    assert!(fs::read_to_string(run.join("husimi_t0.svg")).unwrap().starts_with("<svg"));

    assert_eq!(fockcm(&["perturb"], &d).status.code(), Some(0));
    let o = fockcm(&["report"], &d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (h, rows) = csv_rows(&d.join("report/summary.csv"));
    let run_col = col(&h, "run");
    assert!(rows.iter().any(|r| r[run_col] == "husimi"));
    assert!(rows.iter().any(|r| r[run_col] == "perturb"));
    assert!(d.join("report/perturb_perturb.svg").exists());
    assert!(d.join("report/husimi_band_mass.svg").exists());
}
