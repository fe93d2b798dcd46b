use std::path::Path;
use std::process::Command;

// The cdylib is built alongside this test; run the Python smoke script on it.
#[test]
fn python_smoke_test() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let script = root.join("python/smoke_test.py");
    let out = match Command::new("python3").arg(&script).output() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("python3 unavailable, skipping: {e}");
            return;
        }
    };
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}
