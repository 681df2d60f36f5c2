mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fieldstore(args: &[&str]) -> Output {
    Command::new(common::worker_exe())
        .args(args)
        .env_remove("FIELDSTORE_ROOT")
        .output()
        .expect("run fieldstore")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn fieldio_run_writes_all_outputs() {
    let root = common::scratch();
    let out = tempfile::tempdir().unwrap();
    let res = fieldstore(&[
        "fieldio", "--pattern", "a", "--mode", "full", "--backend", "posix", "--root", p(root.path()),
        "--nodes", "2", "--workers-per-node", "4", "--iterations", "10", "--object-size", "64KiB",
        "--reps", "5", "--out", p(out.path()),
    ]);
    assert_eq!(code(&res), 0, "{}", text(&res.stderr));
    let csv = fs::read_to_string(out.path().join("results.csv")).unwrap();
    // header + 5 repetitions × 2 phases × 2 metrics
    assert_eq!(csv.lines().count(), 1 + 5 * 2 * 2);
    let rows = fieldstore::report::parse_csv(&csv).unwrap();
    assert!(rows.iter().all(|r| r.bytes_total == 8 * 10 * 65536));
    let plot = fs::read_to_string(out.path().join("results.plotdata")).unwrap();
    assert_eq!(fieldstore::report::parse_plotdata(&plot).unwrap().len(), 4);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["workers-per-node"], "4");
    assert_eq!(json["reports"].as_array().unwrap().len(), 5);
}

#[test]
fn config_file_and_flags_merge_into_the_echo() {
    let root = common::scratch();
    let out = tempfile::tempdir().unwrap();
    let conf = out.path().join("run.conf");
    fs::write(
        &conf,
        format!(
            "# small run\nbackend = memory\nnodes = 4\nworkers-per-node = 1\niterations = 3\nobject-size = 4KiB\nreps = 1\nroot = {}\n",
            root.path().display()
        ),
    )
    .unwrap();
    let dest = out.path().join("res");
    let res = fieldstore(&["fieldio", "--config", p(&conf), "--nodes", "2", "--out", p(&dest), "--format", "csv"]);
    assert_eq!(code(&res), 0, "{}", text(&res.stderr));
    let echo = fs::read_to_string(dest.join("config.txt")).unwrap();
    let expected = format!(
        "backend = memory\nbarrier-timeout = 60\nformat = csv\niterations = 3\nkeep = false\nlauncher = auto\n\
         mode = full\nnodes = 2\nobject-size = 4KiB\nout = {}\npattern = a\nreps = 1\nroot = {}\nseed = 0\n\
         workers-per-node = 1\n",
        dest.display(),
        root.path().display()
    );
    assert_eq!(echo, expected);
    assert!(!dest.join("results.json").exists());

    fs::write(&conf, "colour = blue\n").unwrap();
    assert_eq!(code(&fieldstore(&["fieldio", "--config", p(&conf)])), 2);
}

#[test]
fn usage_errors_exit_2() {
    let res = fieldstore(&["fieldio", "--root", "/definitely/not/a/dir", "--reps", "1"]);
    assert_eq!(code(&res), 2);
    assert!(text(&res.stderr).contains("not a directory"));
    assert_eq!(code(&fieldstore(&["fieldio", "--backend", "posix", "--reps", "1"])), 2);
    assert_eq!(code(&fieldstore(&["fieldio", "--backend", "memory", "--pattern", "b", "--nodes", "3"])), 2);
    assert_eq!(code(&fieldstore(&["fieldio", "--backend", "memory", "--object-size", "1MB"])), 2);
    assert_eq!(code(&fieldstore(&["fieldio", "--bogus"])), 2);
    assert_eq!(code(&fieldstore(&["sweep", "--backend", "memory", "--axis", "nodes", "--values", ""])), 2);
    assert_eq!(code(&fieldstore(&["sweep", "--backend", "memory", "--axis", "colour", "--values", "1"])), 2);
    assert_eq!(code(&fieldstore(&["--help"])), 0);
}

#[test]
fn root_comes_from_the_environment() {
    let root = common::scratch();
    let out = tempfile::tempdir().unwrap();
    let res = Command::new(common::worker_exe())
        .args(["fieldio", "--nodes", "1", "--workers-per-node", "1", "--iterations", "2", "--object-size", "1KiB"])
        .args(["--reps", "1", "--launcher", "threads", "--out", p(out.path())])
        .env("FIELDSTORE_ROOT", root.path())
        .output()
        .unwrap();
    assert_eq!(code(&res), 0, "{}", text(&res.stderr));
    assert!(root.path().join(".fieldstore").is_file());
}

#[test]
fn sweep_emits_one_point_per_value() {
    let out = tempfile::tempdir().unwrap();
    let res = fieldstore(&[
        "sweep", "--backend", "memory", "--axis", "object-size", "--values", "4KiB,8KiB,16KiB",
        "--nodes", "1", "--workers-per-node", "2", "--iterations", "3", "--reps", "2", "--out", p(out.path()),
    ]);
    assert_eq!(code(&res), 0, "{}", text(&res.stderr));
    let series = fieldstore::report::parse_plotdata(&fs::read_to_string(out.path().join("results.plotdata")).unwrap())
        .unwrap();
    assert_eq!(series.len(), 4);
    assert!(series.iter().all(|s| s.points.len() == 3));

    let out = tempfile::tempdir().unwrap();
    let res = fieldstore(&[
        "sweep", "--backend", "memory", "--axis", "workers", "--values", "1,2", "--best-of",
        "--nodes", "1", "--iterations", "2", "--object-size", "1KiB", "--reps", "1", "--out", p(out.path()),
    ]);
    assert_eq!(code(&res), 0, "{}", text(&res.stderr));
    let series = fieldstore::report::parse_plotdata(&fs::read_to_string(out.path().join("results.plotdata")).unwrap())
        .unwrap();
    assert!(series.iter().all(|s| s.points.len() == 1));
}

#[test]
fn segments_command_reports_object_size() {
    let root = common::scratch();
    let out = tempfile::tempdir().unwrap();
    let res = fieldstore(&[
        "segments", "--root", p(root.path()), "--segment-count", "10", "--segment-size", "64KiB",
        "--workers", "2", "--reps", "1", "--out", p(out.path()),
    ]);
    assert_eq!(code(&res), 0, "{}", text(&res.stderr));
    assert!(text(&res.stdout).contains("object size 655360 bytes"));
}

#[test]
fn verify_fresh_dir_passes_and_is_seeded() {
    let root = common::scratch();
    let run = || fieldstore(&["verify", "--root", p(root.path()), "--ops", "3000", "--seed", "42"]);
    let first = run();
    assert_eq!(code(&first), 0, "{}{}", text(&first.stdout), text(&first.stderr));
    assert_eq!(text(&first.stdout), text(&run().stdout));
    // Scratch data is cleaned up.
    assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);
}

#[test]
fn verify_flags_truncated_key_file() {
    let root = common::scratch();
    let out = tempfile::tempdir().unwrap();
    let res = fieldstore(&[
        "fieldio", "--root", p(root.path()), "--nodes", "2", "--workers-per-node", "1", "--iterations", "5",
        "--object-size", "8KiB", "--reps", "1", "--keep", "--out", p(out.path()),
    ]);
    assert_eq!(code(&res), 0, "{}", text(&res.stderr));
    let verify = || fieldstore(&["verify", "--root", p(root.path()), "--ops", "200"]);
    assert_eq!(code(&verify()), 0);

    let kv = root.path().join("fieldio-a-rep0/idx.n1/00000000000000000000000000000003.kv");
    let victim = fs::read_dir(&kv).unwrap().next().unwrap().unwrap().path();
    let content = fs::read(&victim).unwrap();
    fs::write(&victim, &content[..content.len() / 2]).unwrap();
    let res = verify();
    assert_eq!(code(&res), 1);
    let stdout = text(&res.stdout);
    assert!(stdout.contains("FAILED integrity") && stdout.contains("Corrupt"), "{stdout}");
}

#[test]
fn replay_reproduces_results() {
    let out = tempfile::tempdir().unwrap();
    let first = out.path().join("run");
    let res = fieldstore(&[
        "fieldio", "--backend", "memory", "--nodes", "2", "--workers-per-node", "2", "--iterations", "3",
        "--object-size", "2KiB", "--reps", "3", "--out", p(&first),
    ]);
    assert_eq!(code(&res), 0, "{}", text(&res.stderr));
    let again = out.path().join("replay");
    let res = fieldstore(&["replay", "--records", p(&first.join("records.txt")), "--out", p(&again)]);
    assert_eq!(code(&res), 0, "{}", text(&res.stderr));
    for f in ["results.csv", "results.plotdata"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}
