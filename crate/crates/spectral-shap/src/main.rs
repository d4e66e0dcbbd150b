fn main() {
    std::process::exit(spectral_shap::cli::main());
}
