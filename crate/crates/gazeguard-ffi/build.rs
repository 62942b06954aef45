use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("gazeguard.h");
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("GAZEGUARD_H".into()),
        documentation: true,
        cpp_compat: true,
        enumeration: cbindgen::EnumConfig {
            prefix_with_name: true,
            ..Default::default()
        },
        ..Default::default()
    };
    match cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
    {
        Ok(bindings) => {
            bindings.write_to_file(&header);
        }
        Err(e) => {
            // keep the committed header usable when generation is impossible
            println!("cargo:warning=cbindgen failed, keeping committed header: {e}");
        }
    }
    println!("cargo:rerun-if-changed=src/lib.rs");
}
