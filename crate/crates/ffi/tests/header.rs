use std::path::Path;
use std::process::Command;

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/sgl.h"))
        .expect("header is generated by the build script")
}

#[test]
fn header_declares_every_exported_function() {
    let src =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let h = header();
    let exported: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exported.len() >= 20);
    for name in exported {
        assert!(h.contains(&format!("{name}(")), "{name} missing from sgl.h");
    }
    for handle in ["SglSde", "SglMixture", "SglModel"] {
        assert!(h.contains(&format!("typedef struct {handle} {handle};")));
    }
    assert!(h.contains("SGL_STATUS_OK = 0"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::env::var("CC").or_else(|_| Ok::<_, ()>("cc".into())) else {
        unreachable!()
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"sgl.h\"\nint main(void) { SglSde *s = 0; return sgl_sde_ou(1.0, &s) == SGL_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = match Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler `{cc}`; skipping");
            return;
        }
    };
    assert!(status.success());
}
