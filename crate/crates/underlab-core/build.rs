fn main() {
    // ndarray-linalg is built without a bundled LAPACK backend; link the
    // system OpenBLAS (which carries LAPACK symbols) instead.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
