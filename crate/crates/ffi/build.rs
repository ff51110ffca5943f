use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("coilalign.h");

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(&header);
        }
        // Keep stale headers usable when cbindgen itself fails (e.g. a
        // toolchain parse quirk); the committed header is the fallback.
        Err(e) => println!("cargo:warning=cbindgen failed, keeping existing header: {e}"),
    }
}
