use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").expect("CARGO_MANIFEST_DIR"));
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let bindings = cbindgen::generate(&crate_dir).expect("generate C header");
    // write_to_file leaves an up-to-date header untouched, so this does not
    // dirty rebuilds; the committed header stays in lockstep with the source.
    bindings.write_to_file(crate_dir.join("include/its.h"));
}
