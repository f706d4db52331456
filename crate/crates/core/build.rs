fn main() {
    // System LAPACKE + OpenBLAS back the dense eigensolver in `spectral`.
    println!("cargo:rustc-link-lib=lapacke");
    println!("cargo:rustc-link-lib=openblas");
}
