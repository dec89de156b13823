//! Acceptance criterion 10: reruns of the same query produce byte-identical
//! JSON reports, regardless of worker-thread count. Criteria 1-9 live in the
//! library crate's acceptance target; this one needs the built binary.

mod common;

use std::panic::AssertUnwindSafe;

use common::{exit_code, run, write_instance, DEEP_NET, DEMO_NET};
use tempfile::tempdir;

fn criterion(number: usize, summary: &str, body: impl FnOnce()) {
    match std::panic::catch_unwind(AssertUnwindSafe(body)) {
        Ok(()) => println!("ACCEPTANCE {number} PASS — {summary}"),
        Err(cause) => {
            println!("ACCEPTANCE {number} FAIL — {summary}");
            std::panic::resume_unwind(cause);
        }
    }
}

/// Runs one argument list three times with `--jobs 1` and three times with
/// `--jobs 8`, asserting every stdout is byte-identical and exit codes agree.
fn assert_byte_identical(args: &[&str]) {
    let mut reference: Option<(Vec<u8>, i32)> = None;
    for jobs in ["1", "8"] {
        for _ in 0..3 {
            let mut full: Vec<&str> = args.to_vec();
            full.extend_from_slice(&["--jobs", jobs, "--seed", "7"]);
            let out = run(&full);
            let code = exit_code(&out);
            assert!(!out.stdout.is_empty(), "no report on stdout for {args:?}");
            match &reference {
                None => reference = Some((out.stdout.clone(), code)),
                Some((bytes, ref_code)) => {
                    assert_eq!(code, *ref_code, "exit code drifted for {args:?}");
                    assert!(
                        bytes == &out.stdout,
                        "stdout drifted across runs for {args:?} (jobs {jobs})"
                    );
                }
            }
        }
    }
}

#[test]
fn acceptance_10_reports_are_byte_identical_across_runs_and_thread_counts() {
    criterion(
        10,
        "identical query and seed give byte-identical reports over 3 runs at --jobs 1 and 8",
        || {
            let dir = tempdir().unwrap();
            let (demo, demo_x) = write_instance(dir.path(), DEMO_NET, "0.0 0.0\n");
            let deep = dir.path().join("deep.json");
            std::fs::write(&deep, DEEP_NET).unwrap();
            let deep_x = dir.path().join("deep_x.txt");
            std::fs::write(&deep_x, "0.2 -0.1 0.4\n").unwrap();

            let demo = demo.to_str().unwrap();
            let demo_x = demo_x.to_str().unwrap();
            let deep = deep.to_str().unwrap();
            let deep_x = deep_x.to_str().unwrap();

            assert_byte_identical(&[
                "verify", "--network", demo, "--input", demo_x, "--radius", "1.0",
            ]);
            assert_byte_identical(&[
                "verify", "--network", deep, "--input", deep_x, "--radius", "0.5",
            ]);
            // Quantification fans sub-boxes out across worker threads, so it
            // is the strongest determinism check.
            assert_byte_identical(&[
                "quantify", "--network", deep, "--input", deep_x, "--radius", "0.8",
                "--splits", "8", "--iterations", "2",
            ]);
            assert_byte_identical(&[
                "max-radius", "--network", deep, "--input", deep_x, "--radius", "1.0",
            ]);
        },
    );
}
