use std::path::Path;
use std::process::Command;

/// Compiles a small C client against the generated header. Skipped when no
/// C compiler is on the path.
#[test]
fn header_compiles_as_c() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include").join("jigsaw.h");
    let text = std::fs::read_to_string(&header).expect("build.rs writes the header");
    for symbol in ["jigsaw_solve_matcher", "jigsaw_last_error", "JIGSAW_STATUS_OK", "typedef struct JigsawPuzzle"] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let client = dir.path().join("client.c");
    std::fs::write(
        &client,
        r#"#include "jigsaw.h"
int main(void) {
    JigsawPuzzle *p = NULL;
    size_t out[4];
    enum JigsawStatus s = jigsaw_solve_matcher(p, NULL, 0.0, 0.1, out, 4);
    jigsaw_puzzle_free(p);
    return s == JIGSAW_STATUS_OK ? 0 : (int)s;
}
"#,
    )
    .unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    match Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(root.join("include"))
        .arg(&client)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(e) => eprintln!("skipping C compile check: {cc}: {e}"),
    }
}
