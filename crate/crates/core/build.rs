use std::path::Path;

use sha2::{Digest, Sha256};

// Hash of the sources that define the semantics, exposed as SPECIBT_SEMANTICS_HASH.
const SEMANTICS: &[&str] = &["src/ir.rs", "src/interp", "src/minimc.rs", "src/pass.rs"];

fn collect(p: &Path, out: &mut Vec<std::path::PathBuf>) {
    if p.is_dir() {
        let mut es: Vec<_> = std::fs::read_dir(p).unwrap().map(|e| e.unwrap().path()).collect();
        es.sort();
        for e in es {
            collect(&e, out);
        }
    } else {
        out.push(p.to_path_buf());
    }
}

fn main() {
    let mut files = Vec::new();
    for s in SEMANTICS {
        println!("cargo:rerun-if-changed={s}");
        collect(Path::new(s), &mut files);
    }
    let mut h = Sha256::new();
    for f in files {
        h.update(f.to_string_lossy().as_bytes());
        h.update(std::fs::read(&f).unwrap());
    }
    let d = h.finalize();
    let hex: String = d.iter().take(8).map(|b| format!("{b:02x}")).collect();
    println!("cargo:rustc-env=SPECIBT_SEMANTICS_HASH={hex}");
}
