// Link the system OpenBLAS (which bundles LAPACK) for ndarray-linalg's
// LAPACK bindings; the crates.io source-build backends are not used.
fn main() {
    println!("cargo:rustc-link-lib=dylib=openblas");
    println!("cargo:rustc-link-search=native=/usr/lib/x86_64-linux-gnu");
}
