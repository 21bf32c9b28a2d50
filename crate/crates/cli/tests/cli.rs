use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const QUAD_MSH: &str = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 1 1 0\n\
$EndNodes\n$Elements\n1\n1 3 2 0 1 1 2 4 3\n$EndElements\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadorient")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn gen(dir: &Path, name: &str, args: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut all = vec!["gen"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", name]);
    let out = run(dir, &all);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    path
}

#[test]
fn gen_writes_expected_counts() {
    let dir = TempDir::new().unwrap();
    let sq = gen(dir.path(), "sq.mesh", &["square", "--nx", "3", "--ny", "3"]);
    assert!(fs::read_to_string(sq).unwrap().starts_with("quadmesh 16 9\n"));
    let cs = gen(dir.path(), "cs.mesh", &["cubed-sphere", "--n", "2", "--shuffle", "7"]);
    assert!(fs::read_to_string(cs).unwrap().starts_with("quadmesh 26 24\n"));
    let mob = gen(dir.path(), "mob.mesh", &["moebius", "--nx", "5"]);
    assert!(fs::read_to_string(mob).unwrap().starts_with("quadmesh 10 5\n"));
}

#[test]
fn gen_is_deterministic_and_defaults_to_stdout() {
    let dir = TempDir::new().unwrap();
    let a = run(dir.path(), &["gen", "torus", "--nx", "5", "--shuffle", "3"]);
    let b = run(dir.path(), &["gen", "torus", "--nx", "5", "--shuffle", "3"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("quadmesh 25 25\n"));
}

#[test]
fn gen_rejects_bad_specs() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["gen", "torus", "--nx", "2"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nx >= 3"), "{}", stderr(&out));
    assert_eq!(code(&run(dir.path(), &["gen", "cubed-sphere"])), 1);
    assert_eq!(code(&run(dir.path(), &["gen", "sphere", "--n", "2"])), 1);
}

#[test]
fn orient_then_verify_for_every_algorithm() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "t.mesh", &["torus", "--nx", "5", "--ny", "3", "--shuffle", "1"]);
    for algo in ["serial", "unionfind", "parallel"] {
        let ori = format!("{algo}.ori");
        let out = run(dir.path(), &["orient", "t.mesh", "--algo", algo, "--np", "3", "--out", &ori]);
        assert_eq!(code(&out), 0, "{algo}: {}", stderr(&out));
        let check = run(dir.path(), &["verify", "t.mesh", &ori]);
        assert_eq!(code(&check), 0, "{algo}: {}", stderr(&check));
        assert!(stdout(&check).starts_with("consistent"));
    }
}

#[test]
fn moebius_exits_with_dedicated_code() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "mob.mesh", &["moebius", "--nx", "5"]);
    for args in [
        vec!["orient", "mob.mesh", "--algo", "serial"],
        vec!["orient", "mob.mesh", "--algo", "unionfind"],
        vec!["orient", "mob.mesh", "--algo", "parallel", "--np", "4"],
        vec!["simulate", "mob.mesh", "--np", "2"],
    ] {
        let out = run(dir.path(), &args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).contains("Moebius strip found at edge"));
        assert!(out.stdout.is_empty() || args[0] == "simulate");
    }
    let sweep = run(dir.path(), &["scale", "--kind", "moebius", "--nx", "7", "--np", "2,4"]);
    assert_eq!(code(&sweep), 2, "{}", stderr(&sweep));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "sq.mesh", &["square", "--nx", "3"]);
    let out = run(dir.path(), &["orient", "sq.mesh", "--algo", "parallel", "--np", "0"]);
    assert_eq!(code(&out), 1);
    assert_eq!(code(&run(dir.path(), &["orient", "sq.mesh", "--algo", "magic"])), 1);
    assert_eq!(code(&run(dir.path(), &[])), 1);
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
    assert_eq!(code(&run(dir.path(), &["simulate", "--help"])), 0);
}

#[test]
fn help_documents_flags() {
    let dir = TempDir::new().unwrap();
    let help = stdout(&run(dir.path(), &["simulate", "--help"]));
    for flag in
        ["--np", "--partitioner", "--seed", "--emit-rounds", "--emit-orientation", "--dump-partition", "--format"]
    {
        assert!(help.contains(flag), "missing {flag}");
    }
}

#[test]
fn verify_lists_violations() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "strip.mesh", &["square", "--nx", "2", "--ny", "1"]);
    assert_eq!(code(&run(dir.path(), &["orient", "strip.mesh", "--out", "o.ori"])), 0);
    let text = fs::read_to_string(dir.path().join("o.ori")).unwrap();
    // Flip the first line; {0,1} sits in a two-edge ribbon with {3,4}.
    let (first, rest) = text.split_once('\n').unwrap();
    let flipped = if first.ends_with('+') { first.replace('+', "-") } else { first.replace('-', "+") };
    fs::write(dir.path().join("bad.ori"), format!("{flipped}\n{rest}")).unwrap();
    let out = run(dir.path(), &["verify", "strip.mesh", "bad.ori"]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("cell 0: edges {0,1} and {3,4}"), "{err}");
    assert!(err.contains("1 violated cell constraints"), "{err}");
}

#[test]
fn verify_rejects_incomplete_file() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "sq.mesh", &["square", "--nx", "2"]);
    fs::write(dir.path().join("short.ori"), "0 1 +\n").unwrap();
    let out = run(dir.path(), &["verify", "sq.mesh", "short.ori"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no line for edge"), "{}", stderr(&out));
}

#[test]
fn ribbons_listing() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("one.mesh"), "quadmesh 4 1\n0 1 3 2\n").unwrap();
    let one = stdout(&run(dir.path(), &["ribbons", "one.mesh"]));
    assert_eq!(one, "2 ribbons\nribbon 0 (2 edges): {0,1} {2,3}\nribbon 1 (2 edges): {0,2} {1,3}\n");
    gen(dir.path(), "sq.mesh", &["square", "--nx", "3", "--ny", "3"]);
    assert!(stdout(&run(dir.path(), &["ribbons", "sq.mesh"])).starts_with("6 ribbons\n"));
    gen(dir.path(), "cube.mesh", &["cubed-sphere", "--n", "1"]);
    let cube = stdout(&run(dir.path(), &["ribbons", "cube.mesh"]));
    assert!(cube.starts_with("3 ribbons\n"));
    assert_eq!(cube.matches("(4 edges)").count(), 3);
}

#[test]
fn msh_input_by_extension_or_flag() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("quad.msh"), QUAD_MSH).unwrap();
    fs::write(dir.path().join("quad.txt"), QUAD_MSH).unwrap();
    assert!(stdout(&run(dir.path(), &["ribbons", "quad.msh"])).starts_with("2 ribbons\n"));
    assert_eq!(code(&run(dir.path(), &["ribbons", "quad.txt"])), 1);
    let forced = run(dir.path(), &["ribbons", "quad.txt", "--format", "msh"]);
    assert_eq!(code(&forced), 0, "{}", stderr(&forced));
    let wrong = run(dir.path(), &["ribbons", "quad.msh", "--format", "native"]);
    assert_eq!(code(&wrong), 1);
}

#[test]
fn scale_writes_csv_and_slope() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &["scale", "--kind", "square", "--nx", "64", "--ny", "64", "--np", "4,16,64", "--out", "r.csv", "--slope"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "P,rounds");
    assert!(lines[1].starts_with("4,") && lines[3].starts_with("64,"));
    assert!(stdout(&out).starts_with("slope "));
}

#[test]
fn scale_reports_invalid_block_count() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["scale", "--kind", "square", "--nx", "16", "--np", "7", "--partitioner", "block"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("invalid process count 7"), "{}", stderr(&out));
    let unordered = run(dir.path(), &["scale", "--kind", "square", "--nx", "16", "--np", "16,4"]);
    assert_eq!(code(&unordered), 1);
}

#[test]
fn simulate_emits_files() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "sq.mesh", &["square", "--nx", "8", "--ny", "8"]);
    let out = run(
        dir.path(),
        &[
            "simulate",
            "sq.mesh",
            "--np",
            "4",
            "--emit-rounds",
            "rounds.csv",
            "--emit-orientation",
            "o.ori",
            "--dump-partition",
            "part.txt",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = stdout(&out);
    let rounds: usize = report.lines().find_map(|l| l.strip_prefix("rounds ")).expect("rounds line").parse().unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("rounds.csv")).unwrap(), format!("P,rounds\n4,{rounds}\n"));
    let part = fs::read_to_string(dir.path().join("part.txt")).unwrap();
    assert_eq!(part.lines().count(), 64);
    assert!(part.starts_with("0 "));
    assert_eq!(code(&run(dir.path(), &["verify", "sq.mesh", "o.ori"])), 0);
}

#[test]
fn simulate_is_schedule_independent() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "g.mesh", &["square", "--nx", "32", "--ny", "32"]);
    let mut reports = Vec::new();
    let mut orientations = Vec::new();
    for (i, extra) in [vec![], vec!["--seed", "9"], vec!["--threads"], vec!["--seed", "9"]].into_iter().enumerate() {
        let ori = format!("o{i}.ori");
        let mut args = vec!["simulate", "g.mesh", "--np", "16", "--partitioner", "block", "--grid", "32x32"];
        args.extend(extra);
        args.extend(["--emit-orientation", &ori]);
        let out = run(dir.path(), &args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        reports.push(out.stdout);
        orientations.push(fs::read(dir.path().join(&ori)).unwrap());
    }
    assert!(reports.windows(2).all(|w| w[0] == w[1]));
    assert!(orientations.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn block_partitioner_needs_grid_layout() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "g.mesh", &["square", "--nx", "4", "--ny", "4"]);
    let without = run(dir.path(), &["simulate", "g.mesh", "--np", "4", "--partitioner", "block"]);
    assert_eq!(code(&without), 1);
    assert!(stderr(&without).contains("structured-grid"), "{}", stderr(&without));
    let mismatch = run(dir.path(), &["simulate", "g.mesh", "--np", "4", "--partitioner", "block", "--grid", "8x2"]);
    assert_eq!(code(&mismatch), 1);
    let with = run(dir.path(), &["orient", "g.mesh", "--algo", "parallel", "--partitioner", "block", "--grid", "4x4"]);
    assert_eq!(code(&with), 0, "{}", stderr(&with));
}
