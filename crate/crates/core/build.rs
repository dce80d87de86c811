fn main() {
    // LAPACK backend: system OpenBLAS (bundles BLAS + LAPACK + CBLAS).
    println!("cargo:rustc-link-lib=dylib=openblas");
}
