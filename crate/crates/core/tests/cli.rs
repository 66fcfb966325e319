use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dtmask::boxsim::interior_set;
use dtmask::grid::{BBox, BinaryMask, BoxProposal, LabelMap, MaskAnchor};
use dtmask::{io, synth};
use tempfile::TempDir;

fn dtmask(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtmask"))
        .args(args)
        .env_remove("DTMASK_THREADS")
        .output()
        .expect("spawn dtmask")
}

fn ok(args: &[&str]) {
    let out = dtmask(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

struct Dir(TempDir);

impl Dir {
    fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn disk_input(dir: &Dir) -> BinaryMask {
    let m = synth::disk(32, 32, 15.5, 15.5, 12.0);
    io::write_mask(dir.path("disk.pbm"), &m).unwrap();
    m
}

fn labels_input(dir: &Dir) -> (BinaryMask, BinaryMask) {
    let a = synth::disk(48, 48, 14.0, 14.0, 10.0);
    let b = synth::rect(48, 48, 26, 24, 44, 44);
    let labels = a
        .bits()
        .iter()
        .zip(b.bits())
        .map(|(&x, &y)| if x { 1 } else if y { 2 } else { 0 })
        .collect();
    io::write_label_map(dir.path("gt.pgm"), &LabelMap::from_labels(48, 48, labels).unwrap()).unwrap();
    (a, b)
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn report_value(path: &Path, section: &str, key: &str) -> f64 {
    csv_rows(path)
        .into_iter()
        .find(|r| r[0] == section && r[1] == key)
        .unwrap_or_else(|| panic!("no {section},{key}"))[2]
        .parse()
        .unwrap()
}

#[test]
fn dt_fast_and_oracle_outputs_are_identical() {
    let d = Dir::new();
    disk_input(&d);
    ok(&["dt", "--in", &d.s("disk.pbm"), "--radius", "5", "--out", &d.s("fast.dtm")]);
    ok(&["dt", "--in", &d.s("disk.pbm"), "--radius", "5", "--oracle", "--out", &d.s("oracle.dtm")]);
    assert_eq!(fs::read(d.path("fast.dtm")).unwrap(), fs::read(d.path("oracle.dtm")).unwrap());
}

#[test]
fn dt_with_unit_cap_is_binary() {
    let d = Dir::new();
    disk_input(&d);
    ok(&["dt", "--in", &d.s("disk.pbm"), "--radius", "1", "--out", &d.s("d.dtm")]);
    let dmap = io::read_dtm(d.path("d.dtm")).unwrap();
    assert!(dmap.values().iter().all(|&v| v <= 1));
    let text = fs::read_to_string(d.path("d.dtm")).unwrap();
    assert!(text.starts_with("DTM 32 32 1\n# dtmask"));
}

#[test]
fn input_errors_exit_with_2() {
    let d = Dir::new();
    let out = dtmask(&["dt", "--in", &d.s("missing.pbm"), "--out", &d.s("x.dtm")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    fs::write(d.path("bad.pbm"), "P1\n2 2\n1 0 1\n").unwrap();
    let out = dtmask(&["encode", "--in", &d.s("bad.pbm"), "--out", &d.s("x.bps")]);
    assert_eq!(out.status.code(), Some(2));

    let out = dtmask(&["bench", "--sizes", "16", "--reps", "0", "--out", &d.s("b.csv")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn encode_decode_gives_interior() {
    let d = Dir::new();
    let m = disk_input(&d);
    for (k, r) in [("5", "13"), ("2", "1")] {
        ok(&["encode", "--in", &d.s("disk.pbm"), "--bins", k, "--radius", r, "--out", &d.s("p.bps")]);
        ok(&["decode", "--in", &d.s("p.bps"), "--out", &d.s("c.pbm")]);
        assert_eq!(io::read_mask(d.path("c.pbm")).unwrap(), interior_set(&m), "K={k} R={r}");
    }
    ok(&["decode", "--in", &d.s("p.bps"), "--mode", "literal", "--out", &d.s("l.pbm")]);
    let literal = io::read_mask(d.path("l.pbm")).unwrap();
    assert!(interior_set(&m).is_subset_of(&literal));
}

#[test]
fn softdecode_cases() {
    let d = Dir::new();
    disk_input(&d);
    ok(&["encode", "--in", &d.s("disk.pbm"), "--out", &d.s("p.bps")]);
    ok(&["decode", "--in", &d.s("p.bps"), "--out", &d.s("hard.pbm")]);
    ok(&["softdecode", "--in", &d.s("p.bps"), "--out", &d.s("soft.pbm")]);
    assert_eq!(io::read_mask(d.path("soft.pbm")).unwrap(), io::read_mask(d.path("hard.pbm")).unwrap());

    ok(&["softdecode", "--in", &d.s("p.bps"), "--flip-prob", "1", "--lax", "--out", &d.s("inv.pbm")]);
    assert!(io::read_mask(d.path("inv.pbm")).is_ok());

    for name in ["a.pbm", "b.pbm"] {
        ok(&["--seed", "3", "softdecode", "--in", &d.s("p.bps"), "--flip-prob", "0.1", "--out", &d.s(name)]);
    }
    assert_eq!(fs::read(d.path("a.pbm")).unwrap(), fs::read(d.path("b.pbm")).unwrap());
    let text = fs::read_to_string(d.path("a.pbm")).unwrap();
    assert!(text.contains("# seed=3\n") && text.contains("# flip_prob=0.1\n"));
}

#[test]
fn boxsim_cases() {
    let d = Dir::new();
    labels_input(&d);
    let base = ["boxsim", "--labels", &d.s("gt.pgm"), "--id", "1", "--norm", "unit"];

    let mut args = base.to_vec();
    let out = d.s("id.csv");
    args.extend(["--out", &out]);
    ok(&args);
    let rows = csv_rows(&d.path("id.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][4], "1.000000");

    let mut args = base.to_vec();
    let out = d.s("shrink.csv");
    args.extend(["--shrink-range", "1:6:1", "--out", &out]);
    ok(&args);
    let rows = csv_rows(&d.path("shrink.csv"));
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let (beyond, inside): (f64, f64) = (r[4].parse().unwrap(), r[5].parse().unwrap());
        assert!(beyond >= inside, "{r:?}");
    }

    let mut args = base.to_vec();
    let out = d.s("far.csv");
    args.extend(["--box", "100,100,120,120", "--out", &out]);
    ok(&args);
    let rows = csv_rows(&d.path("far.csv"));
    assert_eq!((rows[0][4].as_str(), rows[0][5].as_str()), ("0.000000", "0.000000"));

    let out = dtmask(&["boxsim", "--labels", &d.s("gt.pgm"), "--id", "9", "--out", &d.s("x.csv")]);
    assert_eq!(out.status.code(), Some(2));
}

fn canvas_proposal(id: u32, score: f64, mask: BinaryMask) -> BoxProposal {
    BoxProposal::new(id, BBox::full(mask.width(), mask.height()), score)
        .unwrap()
        .with_mask(mask, MaskAnchor::Canvas)
        .unwrap()
}

#[test]
fn eval_with_perfect_proposals() {
    let d = Dir::new();
    let (a, b) = labels_input(&d);
    let props = vec![canvas_proposal(1, 0.9, a.clone()), canvas_proposal(2, 0.8, b)];
    io::write_proposals(d.path("p.txt"), &props).unwrap();
    ok(&["eval", "--proposals", &d.s("p.txt"), "--gt", &d.s("gt.pgm"), "--out", &d.s("r.csv")]);
    let r = d.path("r.csv");
    for n in ["10", "100", "1000"] {
        assert_eq!(report_value(&r, "ar", n), 1.0);
    }
    assert_eq!(report_value(&r, "ap", "0.50"), 1.0);
    assert_eq!(report_value(&r, "ap", "0.70"), 1.0);

    // duplicates collapse under mask NMS
    let dupes = vec![
        canvas_proposal(1, 0.9, a.clone()),
        canvas_proposal(2, 0.85, a.clone()),
        canvas_proposal(3, 0.8, a),
    ];
    io::write_proposals(d.path("d.txt"), &dupes).unwrap();
    ok(&["eval", "--proposals", &d.s("d.txt"), "--gt", &d.s("gt.pgm"), "--nms", "0.5", "--out", &d.s("d.csv")]);
    assert_eq!(report_value(&d.path("d.csv"), "count", "proposals"), 1.0);
    ok(&["eval", "--proposals", &d.s("d.txt"), "--gt", &d.s("gt.pgm"), "--no-nms", "--out", &d.s("n.csv")]);
    assert_eq!(report_value(&d.path("n.csv"), "count", "proposals"), 3.0);
}

#[test]
fn eval_partial_overlap_fixture() {
    let d = Dir::new();
    let gt = LabelMap::from_labels(12, 1, (0..12).map(|x| u32::from(x < 10)).collect()).unwrap();
    io::write_label_map(d.path("gt.pgm"), &gt).unwrap();
    io::write_proposals(d.path("p.txt"), &[canvas_proposal(1, 0.9, synth::rect(12, 1, 0, 0, 6, 1))]).unwrap();
    ok(&["eval", "--proposals", &d.s("p.txt"), "--gt", &d.s("gt.pgm"), "--ar-n", "10", "--out", &d.s("r.csv")]);
    assert_eq!(report_value(&d.path("r.csv"), "ar", "10"), 0.3);
}

#[test]
fn eval_box_only_proposals_and_empty_gt() {
    let d = Dir::new();
    labels_input(&d);
    fs::write(d.path("p.txt"), "# boxes only\n1 26 24 44 44 0.8\n").unwrap();
    ok(&["eval", "--proposals", &d.s("p.txt"), "--gt", &d.s("gt.pgm"), "--out", &d.s("r.csv")]);
    assert_eq!(report_value(&d.path("r.csv"), "ar", "10"), 0.5);

    io::write_label_map(d.path("empty.pgm"), &LabelMap::from_labels(4, 4, vec![0; 16]).unwrap()).unwrap();
    let out = dtmask(&["eval", "--proposals", &d.s("p.txt"), "--gt", &d.s("empty.pgm"), "--out", &d.s("e.csv")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_writes_rows() {
    let d = Dir::new();
    ok(&["bench", "--sizes", "32,16", "--reps", "1", "--out", &d.s("b.csv")]);
    let rows = csv_rows(&d.path("b.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[5] == "true"));
}

#[test]
fn threads_env_overrides_flag() {
    let d = Dir::new();
    disk_input(&d);
    let out = Command::new(env!("CARGO_BIN_EXE_dtmask"))
        .args(["--threads", "4", "dt", "--in", &d.s("disk.pbm"), "--out", &d.s("d.dtm")])
        .env("DTMASK_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(fs::read_to_string(d.path("d.dtm")).unwrap().contains("# threads=2\n"));
}
